//! JSONL benchmark loading through field-mapping adapters.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::EvalError;
use crate::types::Task;

/// Which record fields hold the problem text, the reference answer and an id.
/// Each list is tried in order; the first present field wins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetAdapter {
    pub name: String,
    pub text_fields: Vec<String>,
    pub answer_fields: Vec<String>,
    pub id_fields: Vec<String>,
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| (*s).to_owned()).collect()
}

impl DatasetAdapter {
    pub const PRESETS: [&'static str; 6] = ["generic", "nl4opt", "mamo", "complexlp", "industryor", "complexor"];

    pub fn generic() -> Self {
        Self {
            name: "generic".into(),
            text_fields: strings(&["question", "en_question", "prompt", "description"]),
            answer_fields: strings(&["answer", "en_answer", "ground_truth"]),
            id_fields: strings(&["id"]),
        }
    }

    /// A preset by name, or a custom `text=FIELD,answer=FIELD[,id=FIELD]` mapping.
    pub fn parse(spec: &str) -> Result<Self, String> {
        if spec.contains('=') {
            return Self::custom(spec);
        }
        let mut adapter = Self::generic();
        let name = spec.to_ascii_lowercase();
        match name.as_str() {
            "generic" => {}
            "nl4opt" | "industryor" | "complexor" => {
                adapter.text_fields = strings(&["en_question", "question", "description"]);
                adapter.answer_fields = strings(&["en_answer", "answer"]);
            }
            "mamo" | "complexlp" => {
                adapter.text_fields = strings(&["Question", "question", "en_question"]);
                adapter.answer_fields = strings(&["Answer", "answer", "en_answer"]);
            }
            _ => {
                return Err(format!(
                    "unknown adapter {spec:?}; expected one of {} or text=FIELD,answer=FIELD[,id=FIELD]",
                    Self::PRESETS.join(", ")
                ))
            }
        }
        adapter.name = name;
        Ok(adapter)
    }

    fn custom(spec: &str) -> Result<Self, String> {
        let mut adapter = Self {
            name: "custom".into(),
            text_fields: Vec::new(),
            answer_fields: Vec::new(),
            id_fields: Vec::new(),
        };
        for part in spec.split(',') {
            let (key, field) = part
                .split_once('=')
                .ok_or_else(|| format!("adapter mapping {part:?} is not KEY=FIELD"))?;
            let slot = match key.trim() {
                "text" => &mut adapter.text_fields,
                "answer" => &mut adapter.answer_fields,
                "id" => &mut adapter.id_fields,
                other => return Err(format!("unknown adapter key {other:?}")),
            };
            slot.push(field.trim().to_owned());
        }
        if adapter.text_fields.is_empty() || adapter.answer_fields.is_empty() {
            return Err("custom adapter needs both text= and answer=".into());
        }
        Ok(adapter)
    }
}

fn first<'a>(obj: &'a serde_json::Map<String, Value>, fields: &[String]) -> Option<&'a Value> {
    fields.iter().find_map(|f| obj.get(f)).filter(|v| !v.is_null())
}

fn number(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
    .filter(|x: &f64| x.is_finite())
}

/// One task per non-blank line; `holdout` drops that many records from the end.
pub fn parse_dataset(text: &str, source: &str, adapter: &DatasetAdapter, holdout: usize) -> Result<Vec<Task>, EvalError> {
    let stem = Path::new(source)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    let schema = |line: usize, message: String| EvalError::Schema {
        path: source.to_owned(),
        line,
        message,
    };
    let mut tasks = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(raw).map_err(|e| schema(line, format!("invalid JSON: {e}")))?;
        let obj = v.as_object().ok_or_else(|| schema(line, "record is not an object".into()))?;
        let text = first(obj, &adapter.text_fields)
            .and_then(Value::as_str)
            .filter(|s| !s.trim().is_empty())
            .ok_or_else(|| schema(line, format!("no problem text in any of {:?}", adapter.text_fields)))?;
        let answer_value = first(obj, &adapter.answer_fields)
            .ok_or_else(|| schema(line, format!("no answer in any of {:?}", adapter.answer_fields)))?;
        let answer = number(answer_value).ok_or_else(|| schema(line, format!("answer {answer_value} is not a finite number")))?;
        let id = match first(obj, &adapter.id_fields) {
            Some(Value::String(s)) => s.clone(),
            Some(other) => other.to_string(),
            None => format!("{stem}-{}", tasks.len()),
        };
        tasks.push(Task::new(id, text).with_ground_truth(answer).with_dataset(&stem));
    }
    tasks.truncate(tasks.len().saturating_sub(holdout));
    Ok(tasks)
}

pub fn load_dataset(path: &Path, adapter: &DatasetAdapter, holdout: usize) -> Result<Vec<Task>, EvalError> {
    let text = fs::read_to_string(path).map_err(|e| EvalError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_dataset(&text, &path.display().to_string(), adapter, holdout)
}
