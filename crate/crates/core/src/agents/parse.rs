//! Strict parsers for agent replies.

use serde_json::{Map, Value};

use crate::types::{MathModel, RevisionTip, TipKind};

pub const SPLIT_MARKER: &str = "<split>";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FencedBlock {
    pub lang: String,
    pub content: String,
}

/// Every ``` fenced block in `text`, in order. An unterminated final fence is ignored.
///
/// The info string is taken only when it looks like a language tag, so
/// a block opened as "```{" keeps its leading brace.
pub fn fenced_blocks(text: &str) -> Vec<FencedBlock> {
    let mut blocks = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        let line_end = after.find('\n').unwrap_or(after.len());
        let info = after[..line_end].trim();
        let is_tag = info.chars().all(|c| c.is_ascii_alphanumeric() || "+-_.".contains(c));
        let (lang, body) = if is_tag {
            (info.to_owned(), &after[(line_end + 1).min(after.len())..])
        } else {
            (String::new(), after)
        };
        let Some(close) = body.find("```") else { break };
        let content = body[..close].strip_suffix('\n').unwrap_or(&body[..close]);
        blocks.push(FencedBlock {
            lang,
            content: content.to_owned(),
        });
        rest = &body[close + 3..];
    }
    blocks
}

/// Parses a JSON reply, unwrapping a surrounding fenced block if needed.
pub fn parse_json(text: &str) -> Result<Value, String> {
    let trimmed = text.trim();
    match serde_json::from_str::<Value>(trimmed) {
        Ok(v) => Ok(v),
        Err(first) => {
            for block in fenced_blocks(trimmed) {
                if let Ok(v) = serde_json::from_str::<Value>(block.content.trim()) {
                    return Ok(v);
                }
            }
            Err(format!("reply is not valid JSON: {first}"))
        }
    }
}

/// Strings stay verbatim; any other JSON value is kept as compact JSON text.
pub fn value_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn get_ci<'a>(obj: &'a Map<String, Value>, key: &str) -> Option<&'a Value> {
    obj.get(key)
        .or_else(|| obj.iter().find(|(k, _)| k.eq_ignore_ascii_case(key)).map(|(_, v)| v))
}

pub fn model_from_value(v: &Value) -> Result<MathModel, String> {
    let obj = v.as_object().ok_or("model reply is not a JSON object")?;
    let field = |k: &str| get_ci(obj, k).ok_or_else(|| format!("model reply is missing {k}"));
    let variables = match field("VARIABLES")? {
        Value::Array(items) => items.iter().map(value_text).collect::<Vec<_>>().join("\n"),
        other => value_text(other),
    };
    let constraints = match field("CONSTRAINTS")? {
        Value::Array(items) => items.iter().map(value_text).collect(),
        Value::Null => Vec::new(),
        Value::String(s) if s.trim().is_empty() => Vec::new(),
        other => vec![value_text(other)],
    };
    let objective = value_text(field("OBJECTIVE")?);
    let model = MathModel {
        variables,
        constraints,
        objective,
    };
    model.check()?;
    Ok(model)
}

pub fn parse_model(text: &str) -> Result<MathModel, String> {
    model_from_value(&parse_json(text)?)
}

/// Splits a revision reply on the single `<split>` marker.
pub fn split_reply(text: &str) -> Result<(&str, &str), String> {
    let count = text.matches(SPLIT_MARKER).count();
    if count != 1 {
        return Err(format!("expected exactly one {SPLIT_MARKER} marker, found {count}"));
    }
    let (tip, payload) = text.split_once(SPLIT_MARKER).expect("marker counted");
    Ok((tip.trim(), payload.trim()))
}

pub fn parse_tip(text: &str, kind: TipKind) -> Result<RevisionTip, String> {
    let v = parse_json(text)?;
    let obj = v.as_object().ok_or("tip is not a JSON object")?;
    let (correct_key, incorrect_key) = match kind {
        TipKind::Modeling => ("correct_component", "incorrect_model"),
        TipKind::Code => ("correct_code_snippet", "incorrect_code_snippet"),
    };
    let field = |k: &str| -> Result<String, String> {
        let text = get_ci(obj, k).map(value_text).ok_or_else(|| format!("tip is missing {k}"))?;
        if text.trim().is_empty() {
            return Err(format!("tip field {k} is empty"));
        }
        Ok(text)
    };
    Ok(RevisionTip {
        kind,
        scenario: field("scenario")?,
        error_statement: field("error_statement")?,
        correct_fragment: field(correct_key)?,
        incorrect_fragment: field(incorrect_key)?,
    })
}

/// Longest fenced block, or `None` when the reply has no fences.
pub fn longest_code_block(text: &str) -> Option<String> {
    fenced_blocks(text)
        .into_iter()
        .filter(|b| !b.content.trim().is_empty())
        .enumerate()
        // max_by_key keeps the last maximum; reverse the index so the first wins ties
        .max_by_key(|(i, b)| (b.content.len(), std::cmp::Reverse(*i)))
        .map(|(_, b)| b.content)
}

/// The code half of a code-revision reply: a JSON string, a fenced block, or bare source.
pub fn parse_corrected_code(text: &str) -> Option<String> {
    let trimmed = text.trim();
    if let Ok(Value::String(s)) = serde_json::from_str::<Value>(trimmed) {
        let inner = longest_code_block(&s).unwrap_or(s);
        return (!inner.trim().is_empty()).then_some(inner);
    }
    if let Some(block) = longest_code_block(trimmed) {
        return Some(block);
    }
    (!trimmed.is_empty()).then(|| trimmed.to_owned())
}
