use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OutputSchemaKind {
    /// `{"summary": str, "action_items": [str]}`; other keys may hold strings or string lists.
    #[serde(rename = "summary_action_items")]
    SummaryActionItems,
    /// Object mapping each question to a list of string answers.
    #[serde(rename = "qa_map")]
    QAMap,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaViolation {
    pub path: String,
    pub expected: String,
}

impl std::fmt::Display for SchemaViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: expected {}", self.path, self.expected)
    }
}

fn key_path(key: &str) -> String {
    if !key.is_empty() && key.chars().all(|c| c.is_alphanumeric() || c == '_') {
        format!("$.{key}")
    } else {
        format!("$[{}]", Value::String(key.to_string()))
    }
}

fn string_list_violations(value: &Value, path: &str, out: &mut Vec<SchemaViolation>) {
    match value {
        Value::Array(items) => {
            for (i, item) in items.iter().enumerate() {
                if !item.is_string() {
                    out.push(SchemaViolation {
                        path: format!("{path}[{i}]"),
                        expected: "string".into(),
                    });
                }
            }
        }
        _ => out.push(SchemaViolation {
            path: path.to_string(),
            expected: "list of strings".into(),
        }),
    }
}

/// Checks a raw model output against a structured-output schema.
/// Violations are returned as data; an empty list means the output conforms.
pub fn validate_schema(raw: &str, kind: OutputSchemaKind) -> Result<(), Vec<SchemaViolation>> {
    let value: Value = match serde_json::from_str(raw.trim()) {
        Ok(v) => v,
        Err(_) => {
            return Err(vec![SchemaViolation {
                path: "$".into(),
                expected: "valid JSON".into(),
            }])
        }
    };
    let Value::Object(map) = &value else {
        return Err(vec![SchemaViolation {
            path: "$".into(),
            expected: "object".into(),
        }]);
    };
    let mut out = Vec::new();
    match kind {
        OutputSchemaKind::SummaryActionItems => {
            for (key, v) in map {
                let path = key_path(key);
                match key.as_str() {
                    "summary" if !v.is_string() => out.push(SchemaViolation {
                        path,
                        expected: "string".into(),
                    }),
                    "summary" => {}
                    "action_items" => string_list_violations(v, &path, &mut out),
                    _ if v.is_string() => {}
                    _ if v.is_array() => string_list_violations(v, &path, &mut out),
                    _ => out.push(SchemaViolation {
                        path,
                        expected: "string or list of strings".into(),
                    }),
                }
            }
            for required in ["summary", "action_items"] {
                if !map.contains_key(required) {
                    out.push(SchemaViolation {
                        path: key_path(required),
                        expected: "present".into(),
                    });
                }
            }
        }
        OutputSchemaKind::QAMap => {
            for (key, v) in map {
                string_list_violations(v, &key_path(key), &mut out);
            }
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paths(raw: &str, kind: OutputSchemaKind) -> Vec<String> {
        validate_schema(raw, kind)
            .err()
            .unwrap_or_default()
            .into_iter()
            .map(|v| v.path)
            .collect()
    }

    #[test]
    fn summary_action_items() {
        assert!(validate_schema(
            r#"{"summary":"s","action_items":["a","b"]}"#,
            OutputSchemaKind::SummaryActionItems
        )
        .is_ok());
        assert_eq!(
            paths(r#"{"summary":"s"}"#, OutputSchemaKind::SummaryActionItems),
            vec!["$.action_items"]
        );
        assert_eq!(
            paths(
                r#"{"summary":1,"action_items":"x"}"#,
                OutputSchemaKind::SummaryActionItems
            ),
            vec!["$.action_items", "$.summary"]
        );
        assert!(validate_schema(
            r#"{"summary":"s","action_items":[],"notes":["n"]}"#,
            OutputSchemaKind::SummaryActionItems
        )
        .is_ok());
        assert_eq!(
            paths(
                r#"{"summary":"s","action_items":[1]}"#,
                OutputSchemaKind::SummaryActionItems
            ),
            vec!["$.action_items[0]"]
        );
    }

    #[test]
    fn qa_map() {
        assert!(validate_schema(r#"{"q1":["a"],"q2":[]}"#, OutputSchemaKind::QAMap).is_ok());
        let v = validate_schema(r#"{"q1": "ans"}"#, OutputSchemaKind::QAMap).unwrap_err();
        assert_eq!(
            v,
            vec![SchemaViolation {
                path: "$.q1".into(),
                expected: "list of strings".into()
            }]
        );
        assert_eq!(
            paths(r#"{"who is it?": [2]}"#, OutputSchemaKind::QAMap),
            vec![r#"$["who is it?"][0]"#]
        );
    }

    #[test]
    fn non_objects() {
        assert_eq!(paths("[1]", OutputSchemaKind::QAMap), vec!["$"]);
        assert_eq!(
            paths("not json", OutputSchemaKind::SummaryActionItems),
            vec!["$"]
        );
    }
}
