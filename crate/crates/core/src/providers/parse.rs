use regex::Regex;
use serde_json::Value;

/// Extracts a binary verdict for `label_name` from free-form response text.
///
/// The first JSON object containing `label_name` wins. Failing that, the
/// first `label_name = 0|1` (or `:`) occurrence is used.
pub fn parse_verdict(text: &str, label_name: &str) -> Option<u8> {
    json_verdict(text, label_name).or_else(|| pattern_verdict(text, label_name))
}

fn json_verdict(text: &str, label_name: &str) -> Option<u8> {
    for (start, _) in text.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&text[start..]).into_iter::<Value>();
        if let Some(Ok(Value::Object(map))) = stream.next() {
            if let Some(v) = map.get(label_name).and_then(binary_value) {
                return Some(v);
            }
        }
    }
    None
}

fn binary_value(value: &Value) -> Option<u8> {
    match value {
        Value::Number(n) => {
            let x = n.as_f64()?;
            if x == 0.0 {
                Some(0)
            } else if x == 1.0 {
                Some(1)
            } else {
                None
            }
        }
        Value::String(s) => match s.trim() {
            "0" => Some(0),
            "1" => Some(1),
            _ => None,
        },
        Value::Bool(b) => Some(u8::from(*b)),
        _ => None,
    }
}

fn pattern_verdict(text: &str, label_name: &str) -> Option<u8> {
    let pattern = format!(
        r#"(?:^|[^A-Za-z0-9_]){}"?\s*[=:]\s*([01])(?:[^0-9.]|\.(?:[^0-9]|$)|$)"#,
        regex::escape(label_name)
    );
    let re = Regex::new(&pattern).ok()?;
    let caps = re.captures(text)?;
    Some(if &caps[1] == "1" { 1 } else { 0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_object() {
        assert_eq!(parse_verdict(r#"{"deformed_hand": 1}"#, "deformed_hand"), Some(1));
        assert_eq!(
            parse_verdict(r#"Sure! {"reasoning": "fine"} then {"deformed_hand": "0"}"#, "deformed_hand"),
            Some(0)
        );
    }

    #[test]
    fn fallback() {
        assert_eq!(parse_verdict("Answer: deformed_hand=0", "deformed_hand"), Some(0));
        assert_eq!(parse_verdict("deformed_hand : 1.", "deformed_hand"), Some(1));
    }

    #[test]
    fn rejects_partial_matches() {
        assert_eq!(parse_verdict("not_deformed_hand=1", "deformed_hand"), None);
        assert_eq!(parse_verdict("deformed_hand=10", "deformed_hand"), None);
        assert_eq!(parse_verdict("deformed_hand=0.5", "deformed_hand"), None);
        assert_eq!(parse_verdict(r#"{"deformed_hand": 2}"#, "deformed_hand"), None);
        assert_eq!(parse_verdict("maybe", "deformed_hand"), None);
    }
}
