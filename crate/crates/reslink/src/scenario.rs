//! Scripted client scenarios: a YAML file describes the tool calls, REST
//! requests, sleeps and assertions of one simulated host session. Files are
//! validated completely before the first network call, so a broken scenario
//! never half-runs.
//!
//! Step outputs live in a map keyed by step id. A tool_call step stores the
//! whole JSON-RPC response, plus a synthetic `_resource_id` when the result
//! carries a resource link; a rest step stores {status, body}. Later steps
//! reference them as dotted paths, `{id.path}` inside rest paths.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Deserialize;
use serde_json::{json, Value};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("cannot reach server: {0}")]
    Connect(String),
}

const OPS: [&str; 8] = ["==", "!=", "<", "<=", ">", ">=", "exists", "absent"];
const METHODS: [&str; 4] = ["GET", "POST", "PUT", "DELETE"];

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolCallStep {
    pub token: String,
    pub tool: String,
    #[serde(default)]
    pub arguments: Option<Value>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RestStep {
    /// Absent means the request is sent unauthenticated.
    #[serde(default)]
    pub token: Option<String>,
    pub method: String,
    pub path: String,
    #[serde(default)]
    pub body: Option<Value>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Assertion {
    pub path: String,
    #[serde(default = "default_op")]
    pub op: String,
    #[serde(default)]
    pub value: Option<Value>,
}

fn default_op() -> String {
    "==".to_string()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStep {
    #[serde(default)]
    id: Option<String>,
    #[serde(default)]
    tool_call: Option<ToolCallStep>,
    #[serde(default)]
    rest: Option<RestStep>,
    #[serde(default)]
    assert: Option<Vec<Assertion>>,
    #[serde(default)]
    sleep: Option<f64>,
}

#[derive(Debug, Clone)]
pub enum Action {
    ToolCall(ToolCallStep),
    Rest(RestStep),
    Assert(Vec<Assertion>),
    Sleep(f64),
}

#[derive(Debug, Clone)]
pub struct Step {
    pub id: String,
    pub action: Action,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    #[serde(default)]
    tokens: BTreeMap<String, String>,
    #[serde(default = "default_mcp_path")]
    mcp_path: String,
    steps: Vec<RawStep>,
}

fn default_mcp_path() -> String {
    crate::config::DEFAULT_MCP_PATH.to_string()
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub tokens: BTreeMap<String, String>,
    pub mcp_path: String,
    pub steps: Vec<Step>,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScenarioError::Invalid(format!("{}: {e}", path.display())))?;
        Self::from_yaml(&text)
    }

    pub fn from_yaml(text: &str) -> Result<Self, ScenarioError> {
        let raw: RawScenario =
            serde_yaml::from_str(text).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        let mut steps = Vec::with_capacity(raw.steps.len());
        for (index, step) in raw.steps.into_iter().enumerate() {
            let number = index + 1;
            let id = step.id.clone().unwrap_or_else(|| format!("step{number}"));
            let mut actions: Vec<Action> = Vec::new();
            if let Some(call) = step.tool_call {
                actions.push(Action::ToolCall(call));
            }
            if let Some(rest) = step.rest {
                actions.push(Action::Rest(rest));
            }
            if let Some(assertions) = step.assert {
                actions.push(Action::Assert(assertions));
            }
            if let Some(seconds) = step.sleep {
                actions.push(Action::Sleep(seconds));
            }
            if actions.len() != 1 {
                return Err(ScenarioError::Invalid(format!(
                    "step {number} ('{id}') must have exactly one of tool_call, rest, assert, sleep"
                )));
            }
            steps.push(Step { id, action: actions.pop().unwrap() });
        }
        let scenario =
            Scenario { name: raw.name, tokens: raw.tokens, mcp_path: raw.mcp_path, steps };
        scenario.validate()?;
        Ok(scenario)
    }

    /// Full static validation; nothing here touches the network.
    fn validate(&self) -> Result<(), ScenarioError> {
        if self.steps.is_empty() {
            return Err(ScenarioError::Invalid("scenario has no steps".to_string()));
        }
        match &self.steps.last().unwrap().action {
            Action::Assert(assertions) if !assertions.is_empty() => {}
            _ => {
                return Err(ScenarioError::Invalid(
                    "the final step must be a non-empty assert".to_string(),
                ))
            }
        }
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        for step in &self.steps {
            if !seen.insert(&step.id) {
                return Err(ScenarioError::Invalid(format!("duplicate step id '{}'", step.id)));
            }
        }
        let mut earlier: BTreeSet<&str> = BTreeSet::new();
        for step in &self.steps {
            match &step.action {
                Action::ToolCall(call) => {
                    self.check_token(&step.id, &call.token)?;
                    if let Some(arguments) = &call.arguments {
                        for reference in value_references(arguments) {
                            self.check_reference(&step.id, &reference, &earlier)?;
                        }
                    }
                }
                Action::Rest(rest) => {
                    if let Some(token) = &rest.token {
                        self.check_token(&step.id, token)?;
                    }
                    if !METHODS.contains(&rest.method.as_str()) {
                        return Err(ScenarioError::Invalid(format!(
                            "step '{}': method '{}' is not one of {METHODS:?}",
                            step.id, rest.method
                        )));
                    }
                    for reference in references(&rest.path) {
                        self.check_reference(&step.id, &reference, &earlier)?;
                    }
                    if let Some(body) = &rest.body {
                        for reference in value_references(body) {
                            self.check_reference(&step.id, &reference, &earlier)?;
                        }
                    }
                }
                Action::Assert(assertions) => {
                    if assertions.is_empty() {
                        return Err(ScenarioError::Invalid(format!(
                            "step '{}': assert must list at least one assertion",
                            step.id
                        )));
                    }
                    for assertion in assertions {
                        if !OPS.contains(&assertion.op.as_str()) {
                            return Err(ScenarioError::Invalid(format!(
                                "step '{}': op '{}' is not one of {OPS:?}",
                                step.id, assertion.op
                            )));
                        }
                        let takes_value = !matches!(assertion.op.as_str(), "exists" | "absent");
                        if takes_value != assertion.value.is_some() {
                            return Err(ScenarioError::Invalid(format!(
                                "step '{}': op '{}' {} a value",
                                step.id,
                                assertion.op,
                                if takes_value { "requires" } else { "does not take" }
                            )));
                        }
                        self.check_reference(&step.id, &assertion.path, &earlier)?;
                    }
                }
                Action::Sleep(seconds) => {
                    if !seconds.is_finite() || *seconds < 0.0 {
                        return Err(ScenarioError::Invalid(format!(
                            "step '{}': sleep must be a non-negative number of seconds",
                            step.id
                        )));
                    }
                }
            }
            earlier.insert(&step.id);
        }
        Ok(())
    }

    fn check_token(&self, step: &str, alias: &str) -> Result<(), ScenarioError> {
        if self.tokens.contains_key(alias) {
            Ok(())
        } else {
            Err(ScenarioError::Invalid(format!(
                "step '{step}': token alias '{alias}' is not defined in tokens"
            )))
        }
    }

    fn check_reference(
        &self,
        step: &str,
        path: &str,
        earlier: &BTreeSet<&str>,
    ) -> Result<(), ScenarioError> {
        let root = path.split('.').next().unwrap_or_default();
        if earlier.contains(root) {
            Ok(())
        } else {
            Err(ScenarioError::Invalid(format!(
                "step '{step}': '{path}' does not reference an earlier step"
            )))
        }
    }
}

/// `{ref.path}` occurrences inside a string.
fn references(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find('{') {
        let Some(end) = rest[start..].find('}') else { break };
        out.push(rest[start + 1..start + end].to_string());
        rest = &rest[start + end + 1..];
    }
    out
}

/// References inside every string of a JSON value.
fn value_references(value: &Value) -> Vec<String> {
    match value {
        Value::String(s) => references(s),
        Value::Array(items) => items.iter().flat_map(value_references).collect(),
        Value::Object(map) => map.values().flat_map(value_references).collect(),
        _ => Vec::new(),
    }
}

/// Interpolates every string in a JSON value.
fn interpolate_value(
    value: &Value,
    outputs: &BTreeMap<String, Value>,
) -> Result<Value, String> {
    Ok(match value {
        Value::String(s) => Value::String(interpolate(s, outputs)?),
        Value::Array(items) => Value::Array(
            items.iter().map(|item| interpolate_value(item, outputs)).collect::<Result<_, _>>()?,
        ),
        Value::Object(map) => {
            let mut out = serde_json::Map::new();
            for (key, item) in map {
                out.insert(key.clone(), interpolate_value(item, outputs)?);
            }
            Value::Object(out)
        }
        other => other.clone(),
    })
}

/// Walks a dotted path through objects and array indices.
fn resolve<'a>(outputs: &'a BTreeMap<String, Value>, path: &str) -> Option<&'a Value> {
    let mut segments = path.split('.');
    let root = segments.next()?;
    let mut current = outputs.get(root)?;
    for segment in segments {
        current = match current {
            Value::Object(map) => map.get(segment)?,
            Value::Array(items) => items.get(segment.parse::<usize>().ok()?)?,
            _ => return None,
        };
    }
    Some(current)
}

fn interpolate(text: &str, outputs: &BTreeMap<String, Value>) -> Result<String, String> {
    let mut result = String::new();
    let mut rest = text;
    while let Some(start) = rest.find('{') {
        let Some(end) = rest[start..].find('}') else {
            result.push_str(rest);
            return Ok(result);
        };
        result.push_str(&rest[..start]);
        let path = &rest[start + 1..start + end];
        let value = resolve(outputs, path)
            .ok_or_else(|| format!("'{path}' resolved to nothing"))?;
        match value {
            Value::String(s) => result.push_str(s),
            Value::Number(n) => result.push_str(&n.to_string()),
            Value::Bool(b) => result.push_str(&b.to_string()),
            other => return Err(format!("'{path}' is not a scalar: {other}")),
        }
        rest = &rest[start + end + 1..];
    }
    result.push_str(rest);
    Ok(result)
}

/// Numeric comparisons coerce; everything else compares structurally, with
/// lexicographic ordering for strings (timestamps sort correctly that way).
fn check(op: &str, actual: Option<&Value>, expected: Option<&Value>) -> Result<(), String> {
    let describe = |value: Option<&Value>| match value {
        Some(v) => v.to_string(),
        None => "<absent>".to_string(),
    };
    match op {
        "exists" => {
            if actual.is_some() {
                Ok(())
            } else {
                Err("expected a value, found nothing".to_string())
            }
        }
        "absent" => {
            if actual.is_none() {
                Ok(())
            } else {
                Err(format!("expected nothing, found {}", describe(actual)))
            }
        }
        "==" | "!=" => {
            let expected = expected.expect("validated: value present");
            let equal = match (actual, expected) {
                (Some(a), e) if a.is_number() && e.is_number() => {
                    a.as_f64() == e.as_f64()
                }
                (Some(a), e) => a == e,
                (None, _) => false,
            };
            if equal == (op == "==") {
                Ok(())
            } else {
                Err(format!("expected {op} {expected}, got {}", describe(actual)))
            }
        }
        _ => {
            let expected = expected.expect("validated: value present");
            let Some(actual) = actual else {
                return Err(format!("expected {op} {expected}, got <absent>"));
            };
            let ordering = match (actual, expected) {
                (a, e) if a.is_number() && e.is_number() => {
                    a.as_f64().partial_cmp(&e.as_f64())
                }
                (Value::String(a), Value::String(e)) => Some(a.as_str().cmp(e.as_str())),
                _ => None,
            };
            let Some(ordering) = ordering else {
                return Err(format!("cannot order {actual} against {expected}"));
            };
            let holds = match op {
                "<" => ordering == std::cmp::Ordering::Less,
                "<=" => ordering != std::cmp::Ordering::Greater,
                ">" => ordering == std::cmp::Ordering::Greater,
                ">=" => ordering != std::cmp::Ordering::Less,
                _ => unreachable!("validated op"),
            };
            if holds {
                Ok(())
            } else {
                Err(format!("expected {op} {expected}, got {actual}"))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepReport {
    pub id: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub reports: Vec<StepReport>,
}

impl ScenarioOutcome {
    pub fn passed(&self) -> bool {
        self.reports.iter().all(|r| r.passed)
    }
}

impl Scenario {
    /// Executes against a server root like `http://127.0.0.1:8080`.
    pub fn run(&self, base_url: &str) -> Result<ScenarioOutcome, ScenarioError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(30))
            .build()
            .map_err(|e| ScenarioError::Connect(e.to_string()))?;
        let root = base_url.trim_end_matches('/');
        let mut outputs: BTreeMap<String, Value> = BTreeMap::new();
        let mut reports = Vec::new();
        for (index, step) in self.steps.iter().enumerate() {
            match &step.action {
                Action::ToolCall(call) => {
                    let token = &self.tokens[&call.token];
                    let arguments = match &call.arguments {
                        None => json!({}),
                        Some(raw) => match interpolate_value(raw, &outputs) {
                            Ok(arguments) => arguments,
                            Err(message) => {
                                outputs.insert(step.id.clone(), Value::Null);
                                reports.push(StepReport {
                                    id: step.id.clone(),
                                    passed: false,
                                    detail: message,
                                });
                                continue;
                            }
                        },
                    };
                    let request = json!({
                        "jsonrpc": "2.0",
                        "id": index + 1,
                        "method": "tools/call",
                        "params": {
                            "name": call.tool,
                            "arguments": arguments,
                        }
                    });
                    let response = client
                        .post(format!("{root}{}", self.mcp_path))
                        .bearer_auth(token)
                        .json(&request)
                        .send()
                        .map_err(classify)?;
                    let mut output: Value = response.json().unwrap_or(Value::Null);
                    if let Some(name) =
                        output.pointer("/result/structuredContent/resource/name").cloned()
                    {
                        output["_resource_id"] = name;
                    }
                    outputs.insert(step.id.clone(), output);
                    reports.push(StepReport {
                        id: step.id.clone(),
                        passed: true,
                        detail: format!("tool {}", call.tool),
                    });
                }
                Action::Rest(rest) => {
                    let path = match interpolate(&rest.path, &outputs) {
                        Ok(path) => path,
                        Err(message) => {
                            outputs.insert(step.id.clone(), Value::Null);
                            reports.push(StepReport {
                                id: step.id.clone(),
                                passed: false,
                                detail: message,
                            });
                            continue;
                        }
                    };
                    let body = match &rest.body {
                        None => None,
                        Some(raw) => match interpolate_value(raw, &outputs) {
                            Ok(body) => Some(body),
                            Err(message) => {
                                outputs.insert(step.id.clone(), Value::Null);
                                reports.push(StepReport {
                                    id: step.id.clone(),
                                    passed: false,
                                    detail: message,
                                });
                                continue;
                            }
                        },
                    };
                    let method: reqwest::Method =
                        rest.method.parse().expect("validated method");
                    let mut request = client.request(method, format!("{root}{path}"));
                    if let Some(alias) = &rest.token {
                        request = request.bearer_auth(&self.tokens[alias]);
                    }
                    if let Some(body) = body {
                        request = request.json(&body);
                    }
                    let response = request.send().map_err(classify)?;
                    let status = response.status().as_u16();
                    let body: Value = response.json().unwrap_or(Value::Null);
                    outputs
                        .insert(step.id.clone(), json!({"status": status, "body": body}));
                    reports.push(StepReport {
                        id: step.id.clone(),
                        passed: true,
                        detail: format!("{} {path} -> {status}", rest.method),
                    });
                }
                Action::Assert(assertions) => {
                    let mut failures = Vec::new();
                    for assertion in assertions {
                        let actual = resolve(&outputs, &assertion.path);
                        if let Err(message) =
                            check(&assertion.op, actual, assertion.value.as_ref())
                        {
                            failures.push(format!("{}: {message}", assertion.path));
                        }
                    }
                    reports.push(StepReport {
                        id: step.id.clone(),
                        passed: failures.is_empty(),
                        detail: if failures.is_empty() {
                            format!("{} assertions hold", assertions.len())
                        } else {
                            failures.join("; ")
                        },
                    });
                }
                Action::Sleep(seconds) => {
                    std::thread::sleep(std::time::Duration::from_secs_f64(*seconds));
                    reports.push(StepReport {
                        id: step.id.clone(),
                        passed: true,
                        detail: format!("slept {seconds}s"),
                    });
                }
            }
        }
        Ok(ScenarioOutcome { reports })
    }
}

fn classify(e: reqwest::Error) -> ScenarioError {
    ScenarioError::Connect(e.to_string())
}
