//! Prompt templates with `{name}` placeholders.
//!
//! Literal braces are written doubled (`{{`, `}}`). Lines starting with `#!`
//! are comments. A template file has a `[system]` section holding the role
//! description and a `[user]` section holding the body.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TemplateError {
    #[error("template {name}: {message}")]
    Malformed { name: String, message: String },
    #[error("template {name}: placeholder {{{placeholder}}} is not bound")]
    Unbound { name: String, placeholder: String },
    #[error("reading template {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
enum Piece {
    Text(String),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub name: String,
    pub role_description: String,
    pub body: String,
    pieces: Vec<Piece>,
}

fn parse_pieces(name: &str, body: &str) -> Result<Vec<Piece>, TemplateError> {
    let malformed = |message: String| TemplateError::Malformed {
        name: name.to_owned(),
        message,
    };
    let mut pieces = Vec::new();
    let mut text = String::new();
    let mut chars = body.char_indices().peekable();
    while let Some((pos, c)) = chars.next() {
        match c {
            '{' if chars.peek().map(|&(_, n)| n) == Some('{') => {
                chars.next();
                text.push('{');
            }
            '}' if chars.peek().map(|&(_, n)| n) == Some('}') => {
                chars.next();
                text.push('}');
            }
            '{' => {
                let mut ident = String::new();
                loop {
                    match chars.next() {
                        Some((_, '}')) => break,
                        Some((_, ch)) if ch.is_ascii_alphanumeric() || ch == '_' => ident.push(ch),
                        _ => return Err(malformed(format!("unterminated or invalid placeholder at byte {pos}"))),
                    }
                }
                if ident.is_empty() {
                    return Err(malformed(format!("empty placeholder at byte {pos}")));
                }
                if !text.is_empty() {
                    pieces.push(Piece::Text(std::mem::take(&mut text)));
                }
                pieces.push(Piece::Slot(ident));
            }
            '}' => return Err(malformed(format!("stray '}}' at byte {pos}"))),
            _ => text.push(c),
        }
    }
    if !text.is_empty() {
        pieces.push(Piece::Text(text));
    }
    Ok(pieces)
}

impl PromptTemplate {
    pub fn new(name: &str, role_description: &str, body: &str) -> Result<Self, TemplateError> {
        let pieces = parse_pieces(name, body)?;
        Ok(Self {
            name: name.to_owned(),
            role_description: role_description.to_owned(),
            body: body.to_owned(),
            pieces,
        })
    }

    /// Parses the `[system]` / `[user]` file layout.
    pub fn parse_file(name: &str, source: &str) -> Result<Self, TemplateError> {
        let mut system = Vec::new();
        let mut user = Vec::new();
        let mut section: Option<&str> = None;
        for line in source.lines() {
            if line.starts_with("#!") {
                continue;
            }
            match line.trim_end() {
                "[system]" => section = Some("system"),
                "[user]" => section = Some("user"),
                _ => match section {
                    Some("system") => system.push(line),
                    Some(_) => user.push(line),
                    None if line.trim().is_empty() => {}
                    None => {
                        return Err(TemplateError::Malformed {
                            name: name.to_owned(),
                            message: "text before the [system] section".into(),
                        })
                    }
                },
            }
        }
        if user.is_empty() {
            return Err(TemplateError::Malformed {
                name: name.to_owned(),
                message: "missing [user] section".into(),
            });
        }
        Self::new(name, system.join("\n").trim(), user.join("\n").trim_end())
    }

    pub fn placeholders(&self) -> BTreeSet<&str> {
        self.pieces
            .iter()
            .filter_map(|p| match p {
                Piece::Slot(s) => Some(s.as_str()),
                Piece::Text(_) => None,
            })
            .collect()
    }

    /// Substitutes every placeholder in one pass; bound values are never re-scanned.
    pub fn render(&self, bindings: &BTreeMap<&str, String>) -> Result<String, TemplateError> {
        let mut out = String::with_capacity(self.body.len());
        for piece in &self.pieces {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(s) => match bindings.get(s.as_str()) {
                    Some(v) => out.push_str(v),
                    None => {
                        return Err(TemplateError::Unbound {
                            name: self.name.clone(),
                            placeholder: s.clone(),
                        })
                    }
                },
            }
        }
        Ok(out)
    }
}

macro_rules! builtin {
    ($($field:ident => $file:literal),* $(,)?) => {
        /// The full template set, one per agent role.
        #[derive(Debug, Clone)]
        pub struct Templates {
            $(pub $field: PromptTemplate,)*
        }

        impl Templates {
            pub fn builtin() -> Self {
                Self {
                    $($field: PromptTemplate::parse_file(
                        $file,
                        include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/templates/", $file)),
                    )
                    .expect(concat!("builtin template ", $file)),)*
                }
            }

            /// Loads overrides from `dir`; files that are absent fall back to the builtin text.
            pub fn from_dir(dir: &Path) -> Result<Self, TemplateError> {
                let mut templates = Self::builtin();
                $(
                    let path = dir.join($file);
                    if path.exists() {
                        let source = fs::read_to_string(&path).map_err(|e| TemplateError::Io {
                            path: path.display().to_string(),
                            message: e.to_string(),
                        })?;
                        templates.$field = PromptTemplate::parse_file($file, &source)?;
                    }
                )*
                Ok(templates)
            }

            pub fn all(&self) -> Vec<&PromptTemplate> {
                vec![$(&self.$field,)*]
            }
        }
    };
}

builtin! {
    param_extractor => "param_extractor.txt",
    modeling_advisor => "modeling_advisor.txt",
    modeling_expert => "modeling_expert.txt",
    code_expert => "code_expert.txt",
    model_revision => "model_revision.txt",
    code_revision => "code_revision.txt",
    rerank => "rerank.txt",
    library_labeler => "library_labeler.txt",
}

impl Default for Templates {
    fn default() -> Self {
        Self::builtin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bind(pairs: &[(&'static str, &str)]) -> BTreeMap<&'static str, String> {
        pairs.iter().map(|(k, v)| (*k, v.to_string())).collect()
    }

    #[test]
    fn doubled_braces_are_literal() {
        let t = PromptTemplate::new("t", "", "{{\"a\": {x}}}").unwrap();
        assert_eq!(t.render(&bind(&[("x", "1")])).unwrap(), "{\"a\": 1}");
    }

    #[test]
    fn unbound_placeholder_is_an_error() {
        let t = PromptTemplate::new("t", "", "{problem_description} {last_tip}").unwrap();
        let err = t.render(&bind(&[("problem_description", "p")])).unwrap_err();
        assert_eq!(
            err,
            TemplateError::Unbound {
                name: "t".into(),
                placeholder: "last_tip".into()
            }
        );
    }

    #[test]
    fn values_are_not_rescanned() {
        let t = PromptTemplate::new("t", "", "{a}").unwrap();
        assert_eq!(t.render(&bind(&[("a", "{b}")])).unwrap(), "{b}");
    }

    #[test]
    fn malformed_bodies_are_rejected() {
        assert!(PromptTemplate::new("t", "", "{ spaced }").is_err());
        assert!(PromptTemplate::new("t", "", "{}").is_err());
        assert!(PromptTemplate::new("t", "", "a } b").is_err());
        assert!(PromptTemplate::new("t", "", "{open").is_err());
    }

    #[test]
    fn builtin_templates_parse_and_render_totally() {
        let templates = Templates::builtin();
        for t in templates.all() {
            assert!(!t.role_description.is_empty(), "{} has no role description", t.name);
            let names: Vec<&str> = t.placeholders().into_iter().collect();
            assert!(!names.is_empty(), "{} has no placeholders", t.name);
            let bindings: BTreeMap<&str, String> = names.iter().map(|n| (*n, "VALUE".to_string())).collect();
            let rendered = t.render(&bindings).unwrap();
            for n in &names {
                assert!(!rendered.contains(&format!("{{{n}}}")), "{} left {{{n}}}", t.name);
            }
            assert!(!rendered.contains("#!"));
        }
    }

    #[test]
    fn builtin_placeholder_sets() {
        let t = Templates::builtin();
        let set = |p: &PromptTemplate| p.placeholders().into_iter().map(String::from).collect::<Vec<_>>();
        assert_eq!(set(&t.param_extractor), ["comment_text", "problem_description"]);
        assert_eq!(
            set(&t.model_revision),
            ["error_message", "last_tip", "original_model", "problem_description"]
        );
        assert!(t.code_revision.placeholders().contains("initial_code"));
    }

    #[test]
    fn dir_overrides_single_file() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("rerank.txt"),
            "[system]\nsys\n[user]\npick from {candidates}",
        )
        .unwrap();
        let t = Templates::from_dir(dir.path()).unwrap();
        assert_eq!(t.rerank.role_description, "sys");
        assert_eq!(t.param_extractor, Templates::builtin().param_extractor);
    }
}
