use serde_json::{Map, Value};
use thiserror::Error;

/// A reply reduced to its JSON object and optional reasoning line.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedProposal {
    pub analysis: Option<String>,
    pub config_raw: Map<String, Value>,
    pub raw_response: String,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ParseError {
    #[error("NoJson: no JSON object in response {raw:?}")]
    NoJson { raw: String },
    #[error("BadJson: {message} in response {raw:?}")]
    BadJson { raw: String, message: String },
}

impl ParseError {
    pub fn kind(&self) -> &'static str {
        match self {
            ParseError::NoJson { .. } => "NoJson",
            ParseError::BadJson { .. } => "BadJson",
        }
    }
}

/// End (exclusive byte index) of the brace block opening at `start`.
/// Braces inside JSON strings are ignored.
fn balanced_end(text: &str, start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in text[start..].char_indices() {
        if in_str {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_str = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(start + i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

/// Byte offset of the `{` following the last line that starts with `Config:`.
fn config_line_brace(text: &str) -> Option<usize> {
    let mut offset = 0;
    let mut found = None;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim_start();
        if let Some(rest) = trimmed.strip_prefix("Config:") {
            if let Some(b) = rest.find('{') {
                found = Some(offset + (line.len() - trimmed.len()) + "Config:".len() + b);
            }
        }
        offset += line.len();
    }
    found
}

enum Block {
    Found(usize, usize),
    Unbalanced,
    Missing,
}

fn last_top_level_block(text: &str) -> Block {
    let mut pos = 0;
    let mut last = Block::Missing;
    while let Some(rel) = text[pos..].find('{') {
        let start = pos + rel;
        match balanced_end(text, start) {
            Some(end) => {
                last = Block::Found(start, end);
                pos = end;
            }
            None => {
                if matches!(last, Block::Missing) {
                    last = Block::Unbalanced;
                }
                break;
            }
        }
    }
    last
}

fn analysis_line(text: &str) -> Option<String> {
    text.lines()
        .rev()
        .find_map(|l| l.trim_start().strip_prefix("Analysis:"))
        .map(|a| a.trim().to_string())
}

/// Extracts the proposed config from a model reply. A line starting with
/// `Config:` wins; otherwise the last top-level `{...}` block is used.
pub fn parse_response(text: &str) -> Result<ParsedProposal, ParseError> {
    let bad = |message: String| ParseError::BadJson { raw: text.to_string(), message };
    let (start, end) = match config_line_brace(text) {
        Some(start) => match balanced_end(text, start) {
            Some(end) => (start, end),
            None => return Err(bad("unbalanced braces".into())),
        },
        None => match last_top_level_block(text) {
            Block::Found(s, e) => (s, e),
            Block::Unbalanced => return Err(bad("unbalanced braces".into())),
            Block::Missing => return Err(ParseError::NoJson { raw: text.to_string() }),
        },
    };
    let config_raw = match serde_json::from_str::<Value>(&text[start..end]) {
        Ok(Value::Object(map)) => map,
        Ok(_) => return Err(bad("not an object".into())),
        Err(e) => return Err(bad(e.to_string())),
    };
    Ok(ParsedProposal { analysis: analysis_line(text), config_raw, raw_response: text.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn cfg(text: &str) -> Value {
        Value::Object(parse_response(text).unwrap().config_raw)
    }

    #[test]
    fn bare_json() {
        assert_eq!(cfg(r#"{"C": 1.0, "gamma": 0.1}"#), json!({"C": 1.0, "gamma": 0.1}));
        assert_eq!(cfg("  {\"C\": 2}\n"), json!({"C": 2}));
    }

    #[test]
    fn analysis_and_config_lines() {
        let p = parse_response("Analysis: loss decreased, keep going.\nConfig: {\"alpha\": 0.01}").unwrap();
        assert_eq!(p.analysis.as_deref(), Some("loss decreased, keep going."));
        assert_eq!(Value::Object(p.config_raw), json!({"alpha": 0.01}));
    }

    #[test]
    fn prefixed_output() {
        assert_eq!(cfg(r#"Output: {"x": [2.5, 2.5]}"#), json!({"x": [2.5, 2.5]}));
    }

    #[test]
    fn config_line_beats_later_blocks() {
        let text = "Config: {\"a\": 1}\nNote: {\"a\": 2}";
        assert_eq!(cfg(text), json!({"a": 1}));
    }

    #[test]
    fn last_block_wins_without_config_line() {
        assert_eq!(cfg("first {\"a\": 1} then {\"a\": 2} done"), json!({"a": 2}));
    }

    #[test]
    fn braces_inside_strings() {
        assert_eq!(cfg(r#"{"note": "a } b {", "c": 1}"#), json!({"note": "a } b {", "c": 1}));
    }

    #[test]
    fn config_placeholder_line_falls_back() {
        let text = "Config: (JSON config)\n{\"a\": 3}";
        assert_eq!(cfg(text), json!({"a": 3}));
    }

    #[test]
    fn errors() {
        assert_eq!(parse_response("I cannot help").unwrap_err().kind(), "NoJson");
        assert_eq!(parse_response("{\"a\": 1").unwrap_err().kind(), "BadJson");
        assert_eq!(parse_response("{a: 1}").unwrap_err().kind(), "BadJson");
        assert_eq!(parse_response("Config: {\"a\": }").unwrap_err().kind(), "BadJson");
    }
}
