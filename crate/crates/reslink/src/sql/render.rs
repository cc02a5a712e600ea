//! Canonical text rendering of `QueryAst`.
//!
//! The output is deterministic: keywords upper-case, single spaces, explicit
//! INNER JOIN, explicit ASC, aliases with AS, parens only where precedence
//! needs them. For trees with left-folded AND chains (which is what the
//! parser and the rewriter both produce) `parse(render(q)) == q` holds
//! structurally.

use crate::model::SortOrder;

use super::ast::*;

pub fn render(ast: &QueryAst) -> String {
    let mut out = String::from("SELECT ");
    for (i, item) in ast.select.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        render_select_item(item, &mut out);
    }
    out.push_str(" FROM ");
    match &ast.from {
        FromSource::Table(table) => render_table_ref(table, &mut out),
        FromSource::Subquery(inner) => {
            out.push('(');
            out.push_str(&render(inner));
            out.push(')');
        }
    }
    for join in &ast.joins {
        out.push_str(" INNER JOIN ");
        render_table_ref(&join.table, &mut out);
        out.push_str(" ON ");
        out.push_str(&join.on_left.to_string());
        out.push_str(" = ");
        out.push_str(&join.on_right.to_string());
    }
    if let Some(expr) = &ast.where_clause {
        out.push_str(" WHERE ");
        render_expr(expr, &mut out);
    }
    if !ast.group_by.is_empty() {
        out.push_str(" GROUP BY ");
        for (i, column) in ast.group_by.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            out.push_str(&column.to_string());
        }
    }
    if !ast.order_by.is_empty() {
        out.push_str(" ORDER BY ");
        for (i, key) in ast.order_by.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            out.push_str(&key.column.to_string());
            out.push_str(match key.order {
                SortOrder::Asc => " ASC",
                SortOrder::Desc => " DESC",
            });
        }
    }
    if let Some(limit) = ast.limit {
        out.push_str(&format!(" LIMIT {limit}"));
    }
    if let Some(offset) = ast.offset {
        out.push_str(&format!(" OFFSET {offset}"));
    }
    out
}

fn render_select_item(item: &SelectItem, out: &mut String) {
    match item {
        SelectItem::Star => out.push('*'),
        SelectItem::Column { column, alias } => {
            out.push_str(&column.to_string());
            if let Some(alias) = alias {
                out.push_str(" AS ");
                out.push_str(alias);
            }
        }
        SelectItem::Aggregate { func, arg, alias } => {
            out.push_str(func.keyword());
            out.push('(');
            match arg {
                AggregateArg::Star => out.push('*'),
                AggregateArg::Column(column) => out.push_str(&column.to_string()),
            }
            out.push(')');
            if let Some(alias) = alias {
                out.push_str(" AS ");
                out.push_str(alias);
            }
        }
    }
}

fn render_table_ref(table: &TableRef, out: &mut String) {
    out.push_str(&table.name);
    if let Some(alias) = &table.alias {
        out.push_str(" AS ");
        out.push_str(alias);
    }
}

fn render_expr(expr: &Expr, out: &mut String) {
    match expr {
        Expr::Or(left, right) => {
            render_expr(left, out);
            out.push_str(" OR ");
            render_expr(right, out);
        }
        Expr::And(left, right) => {
            render_and_operand(left, out);
            out.push_str(" AND ");
            render_and_operand(right, out);
        }
        Expr::Comparison { left, op, right } => {
            render_operand(left, out);
            out.push(' ');
            out.push_str(op.symbol());
            out.push(' ');
            render_operand(right, out);
        }
    }
}

/// OR under AND is the one place precedence demands parens.
fn render_and_operand(expr: &Expr, out: &mut String) {
    if matches!(expr, Expr::Or(_, _)) {
        out.push('(');
        render_expr(expr, out);
        out.push(')');
    } else {
        render_expr(expr, out);
    }
}

fn render_operand(operand: &Operand, out: &mut String) {
    match operand {
        Operand::Column(column) => out.push_str(&column.to_string()),
        Operand::Literal(literal) => render_literal(literal, out),
    }
}

fn render_literal(literal: &Literal, out: &mut String) {
    match literal {
        Literal::Integer(v) => out.push_str(&v.to_string()),
        Literal::Float(v) => {
            // keep a decimal point so the value re-lexes as a float
            let text = v.to_string();
            out.push_str(&text);
            if !text.contains(['.', 'e', 'E']) {
                out.push_str(".0");
            }
        }
        Literal::Str(s) => {
            out.push('\'');
            out.push_str(&s.replace('\'', "''"));
            out.push('\'');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;

    #[test]
    fn renders_canonical_text() {
        let ast = parse(
            "select id,amount from orders where amount>50 and status='paid' order by id",
        )
        .unwrap();
        assert_eq!(
            render(&ast),
            "SELECT id, amount FROM orders WHERE amount > 50 AND status = 'paid' \
             ORDER BY id ASC",
        );
    }

    #[test]
    fn renders_joins_and_grouping() {
        let ast = parse(
            "SELECT o.region, COUNT(*) AS n FROM orders AS o JOIN shipments AS s \
             ON o.id = s.order_id GROUP BY o.region ORDER BY n DESC LIMIT 5 OFFSET 10",
        )
        .unwrap();
        assert_eq!(
            render(&ast),
            "SELECT o.region, COUNT(*) AS n FROM orders AS o INNER JOIN shipments AS s \
             ON o.id = s.order_id GROUP BY o.region ORDER BY n DESC LIMIT 5 OFFSET 10",
        );
    }

    #[test]
    fn parens_appear_only_where_needed() {
        let ast = parse("SELECT id FROM t WHERE (a = 1 OR b = 2) AND c = 3").unwrap();
        let text = render(&ast);
        assert_eq!(text, "SELECT id FROM t WHERE (a = 1 OR b = 2) AND c = 3");
        let ast = parse("SELECT id FROM t WHERE a = 1 OR b = 2 AND c = 3").unwrap();
        assert_eq!(render(&ast), "SELECT id FROM t WHERE a = 1 OR b = 2 AND c = 3");
    }

    #[test]
    fn render_parse_is_a_structural_round_trip() {
        let queries = [
            "SELECT * FROM orders",
            "SELECT * FROM orders LIMIT 0",
            "SELECT id FROM t WHERE note = 'it''s'",
            "SELECT id FROM t WHERE score > -0.25 AND score <= 1e6",
            "SELECT a, b FROM t GROUP BY a, b ORDER BY a ASC, b DESC",
            "SELECT MIN(amount) AS lo, MAX(amount) AS hi FROM orders",
            "SELECT id FROM t WHERE ((a = 1 OR b = 2) AND c = 3) OR d != 4",
        ];
        for query in queries {
            let ast = parse(query).unwrap();
            let text = render(&ast);
            let reparsed = parse(&text).unwrap();
            assert_eq!(reparsed, ast, "{query} -> {text}");
            assert_eq!(render(&reparsed), text, "{query}");
        }
    }

    #[test]
    fn floats_keep_a_decimal_marker() {
        let ast = parse("SELECT id FROM t WHERE score = 1e6").unwrap();
        assert_eq!(render(&ast), "SELECT id FROM t WHERE score = 1000000.0");
    }
}
