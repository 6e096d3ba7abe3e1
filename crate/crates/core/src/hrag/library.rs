//! Exemplar library files.
//!
//! A library is JSON Lines embedded in a Markdown-ish file: blank lines and
//! lines starting with `#`, `<!--` or a code fence are skipped, and lines
//! that do not parse are skipped silently.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::embed::Embedder;
use super::RetrievalError;
use crate::types::{Exemplar, DEFAULT_PROBLEM_TYPE};

/// On-disk record shape, shared with the library builder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryRecord {
    pub en_answer: f64,
    pub prompt: String,
    pub response: String,
    pub problem_type: String,
    pub problem_subtype: String,
}

impl From<&Exemplar> for LibraryRecord {
    fn from(e: &Exemplar) -> Self {
        Self {
            en_answer: e.answer,
            prompt: e.prompt.clone(),
            response: e.response.clone(),
            problem_type: e.problem_type.clone(),
            problem_subtype: e.problem_subtype.clone(),
        }
    }
}

fn is_skipped(line: &str) -> bool {
    line.is_empty() || line.starts_with('#') || line.starts_with("<!--") || line.starts_with("```")
}

fn answer_of(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
    .filter(|a: &f64| a.is_finite())
}

fn exemplar_from_line(line: &str, line_no: usize, source: &str) -> Option<Exemplar> {
    let v: Value = serde_json::from_str(line).ok()?;
    let obj = v.as_object()?;
    let text = |k: &str| obj.get(k).and_then(Value::as_str).map(str::to_owned);
    let meta = |k: &str| {
        text(k)
            .filter(|s| !s.trim().is_empty())
            .unwrap_or_else(|| DEFAULT_PROBLEM_TYPE.to_owned())
    };
    Some(Exemplar {
        prompt: text("prompt")?,
        response: text("response")?,
        answer: answer_of(obj.get("en_answer")?)?,
        problem_type: meta("problem_type"),
        problem_subtype: meta("problem_subtype"),
        source_line: line_no,
        source_path: source.to_owned(),
    })
}

/// Parses library text; `source` is recorded on every exemplar.
pub fn parse_library(text: &str, source: &str) -> Vec<Exemplar> {
    text.lines()
        .enumerate()
        .filter_map(|(idx, raw)| {
            let line = raw.trim();
            if is_skipped(line) {
                return None;
            }
            exemplar_from_line(line, idx + 1, source)
        })
        .collect()
}

pub fn read_exemplars(path: &Path) -> Result<Vec<Exemplar>, RetrievalError> {
    let text = fs::read_to_string(path).map_err(|e| RetrievalError::io(path, e))?;
    let exemplars = parse_library(&text, &path.display().to_string());
    if exemplars.is_empty() {
        return Err(RetrievalError::EmptyLibrary);
    }
    Ok(exemplars)
}

pub fn write_library(path: &Path, exemplars: &[Exemplar]) -> Result<(), RetrievalError> {
    let mut out = Vec::new();
    for e in exemplars {
        serde_json::to_writer(&mut out, &LibraryRecord::from(e)).expect("records serialize");
        out.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| RetrievalError::io(path, e))?;
    file.write_all(&out).map_err(|e| RetrievalError::io(path, e))
}

/// The text embedded for an exemplar: its problem statement followed by its worked response.
pub fn exemplar_text(e: &Exemplar) -> String {
    format!("{}\n{}", e.prompt, e.response)
}

/// Exemplars with one embedding vector each. Immutable once built.
#[derive(Debug, Clone)]
pub struct Library {
    pub exemplars: Vec<Exemplar>,
    pub vectors: Vec<Vec<f64>>,
    pub dimension: usize,
    pub embedder_id: String,
}

#[derive(Serialize, Deserialize)]
struct VectorCache {
    content_hash: String,
    embedder_id: String,
    vectors: Vec<Vec<f64>>,
}

impl Library {
    pub fn build(exemplars: Vec<Exemplar>, embedder: &dyn Embedder) -> Result<Self, RetrievalError> {
        if exemplars.is_empty() {
            return Err(RetrievalError::EmptyLibrary);
        }
        let texts: Vec<String> = exemplars.iter().map(exemplar_text).collect();
        let vectors = embedder.embed(&texts)?;
        Self::from_parts(exemplars, vectors, embedder.id())
    }

    fn from_parts(exemplars: Vec<Exemplar>, vectors: Vec<Vec<f64>>, embedder_id: String) -> Result<Self, RetrievalError> {
        if vectors.len() != exemplars.len() {
            return Err(RetrievalError::Corrupt(format!(
                "{} vectors for {} exemplars",
                vectors.len(),
                exemplars.len()
            )));
        }
        let dimension = vectors.first().map_or(0, Vec::len);
        if let Some(v) = vectors.iter().find(|v| v.len() != dimension) {
            return Err(RetrievalError::DimensionMismatch {
                expected: dimension,
                found: v.len(),
            });
        }
        Ok(Self {
            exemplars,
            vectors,
            dimension,
            embedder_id,
        })
    }

    /// Loads and embeds a library file, reusing cached vectors keyed by
    /// (file content hash, embedder id) when `cache_dir` is given.
    pub fn load(path: &Path, embedder: &dyn Embedder, cache_dir: Option<&Path>) -> Result<Self, RetrievalError> {
        let bytes = fs::read(path).map_err(|e| RetrievalError::io(path, e))?;
        let text = String::from_utf8(bytes.clone())
            .map_err(|_| RetrievalError::Corrupt(format!("{} is not UTF-8", path.display())))?;
        let exemplars = parse_library(&text, &path.display().to_string());
        if exemplars.is_empty() {
            return Err(RetrievalError::EmptyLibrary);
        }
        let Some(cache_dir) = cache_dir else {
            return Self::build(exemplars, embedder);
        };
        let content_hash = hex::encode(Sha256::digest(&bytes));
        let cache_path = cache_file(cache_dir, &content_hash, &embedder.id());
        if let Ok(cached) = fs::read_to_string(&cache_path) {
            if let Ok(cache) = serde_json::from_str::<VectorCache>(&cached) {
                if cache.content_hash == content_hash && cache.embedder_id == embedder.id() {
                    if let Ok(lib) = Self::from_parts(exemplars.clone(), cache.vectors, cache.embedder_id) {
                        return Ok(lib);
                    }
                }
            }
            tracing::warn!(path = %cache_path.display(), "ignoring stale vector cache");
        }
        let lib = Self::build(exemplars, embedder)?;
        fs::create_dir_all(cache_dir).map_err(|e| RetrievalError::io(cache_dir, e))?;
        let cache = VectorCache {
            content_hash,
            embedder_id: lib.embedder_id.clone(),
            vectors: lib.vectors.clone(),
        };
        fs::write(&cache_path, serde_json::to_vec(&cache).expect("cache serializes"))
            .map_err(|e| RetrievalError::io(&cache_path, e))?;
        Ok(lib)
    }

    pub fn len(&self) -> usize {
        self.exemplars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exemplars.is_empty()
    }
}

fn cache_file(dir: &Path, content_hash: &str, embedder_id: &str) -> PathBuf {
    let safe: String = embedder_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect();
    dir.join(format!("{}-{safe}.json", &content_hash[..16]))
}
