#!/usr/bin/env python3
"""Smoke test for the reslink_py extension module.

Build the module first, then run this script from anywhere:

    cargo build -p reslink-py
    python3 python/smoke_test.py
"""

import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def import_extension():
    candidates = [
        REPO / "target" / "debug" / "libreslink_py.so",
        REPO / "target" / "release" / "libreslink_py.so",
    ]
    built = next((p for p in candidates if p.exists()), None)
    if built is None:
        sys.exit("libreslink_py.so not found; run `cargo build -p reslink-py` first")
    stage = Path(tempfile.mkdtemp(prefix="reslink-py-"))
    shutil.copy2(built, stage / "reslink_py.so")
    sys.path.insert(0, str(stage))
    import reslink_py

    return reslink_py


def main():
    rl = import_extension()

    with tempfile.TemporaryDirectory() as tmp:
        csv = Path(tmp) / "orders.csv"
        rl.seed_csv(csv)
        lines = csv.read_text().splitlines()
        assert len(lines) == 251, f"seed wrote {len(lines)} lines"
        assert lines[10].startswith("10,t1,70,"), lines[10]

        db = rl.Database()
        db.load_csv(csv, "orders")
        assert db.table_names() == ["orders"]

        policy = rl.Policy({"orders": "tenant_id"}, 25)
        assert policy.preview_cap == 25
        assert policy.tables() == ["orders"]

        query = rl.Query.parse("SELECT * FROM orders ORDER BY id LIMIT 5")
        assert query.limit == 5
        assert query.tables() == ["orders"]

        rewritten = query.rewrite("t1", policy)
        assert "orders.tenant_id = 't1'" in rewritten.render(), rewritten.render()

        # the canonical text round-trips
        again = rl.Query.parse(rewritten.render())
        assert again == rewritten

        # dataset ignores the presentation window; the count matches it
        dataset = rewritten.dataset()
        assert dataset.limit is None
        rows = db.execute(dataset)
        assert len(rows) == 150, f"t1 dataset has {len(rows)} rows"
        assert all(r["tenant_id"] == "t1" for r in rows)

        count = db.execute(rewritten.derive_count())
        assert count == [{"count": 150}], count

        preview = db.execute(rewritten.cap_preview(25))
        assert len(preview) == 5, "user LIMIT below the cap wins"
        assert preview[0]["id"] == 1
        assert preview[0]["created_at"] == "2025-01-01T00:01:00Z"

        grouped = rl.Query.parse(
            "SELECT tenant_id, COUNT(*) AS n FROM orders GROUP BY tenant_id"
        )
        assert grouped.has_aggregates
        totals = {r["tenant_id"]: r["n"] for r in db.execute(grouped)}
        assert totals == {"t1": 150, "t2": 100}, totals

    try:
        rl.Query.parse("DROP TABLE orders")
    except ValueError as e:
        assert "write" in str(e), e
    else:
        sys.exit("write statements must be rejected")

    try:
        rl.Query.parse("SELET 1")
    except ValueError as e:
        assert "byte" in str(e), e
    else:
        sys.exit("syntax errors must raise")

    rid = rl.new_resource_id()
    assert len(rid) == 22 and rl.new_resource_id() != rid
    uri = rl.make_resource_uri("http://localhost:8080/resources", rid)
    assert uri == f"http://localhost:8080/resources/{rid}"

    doc = rl.well_known_document()
    assert sorted(doc["methods"]) == ["data", "delete", "metadata", "save"]
    assert doc["methods"]["data"]["accepts"] == ["offset", "limit", "sort"]

    assert "SELECT" in rl.GRAMMAR
    assert rl.DEFAULT_PREVIEW_CAP == 25
    assert rl.MAX_PAGE_LIMIT == 1000

    print("smoke test passed")


if __name__ == "__main__":
    main()
