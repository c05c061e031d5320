//! Locked prompt templates and deterministic rendering of QBP (whole
//! question group to narrative) and QBC (single pair to visual rationale)
//! prompts.
//!
//! Templates are stored verbatim under `templates/` with a `templates.lock`
//! file in `sha256sum` format. Loading refuses any template whose digest
//! differs from the lock entry, so prompt text cannot drift silently.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{QaPair, QuestionGroup};
use crate::hashing::{sha256_fields, sha256_hex};

pub const QBP_TEMPLATE_NAME: &str = "qbp.v1.txt";
pub const QBC_TEMPLATE_NAME: &str = "qbc.v1.txt";
pub const LOCKFILE_NAME: &str = "templates.lock";
/// Placeholder in the QBP template replaced by the serialized question group.
pub const QA_GROUP_PLACEHOLDER: &str = "{QA Group}";

const BUILTIN_QBP: &str = include_str!("../../templates/qbp.v1.txt");
const BUILTIN_QBC: &str = include_str!("../../templates/qbc.v1.txt");
const BUILTIN_LOCK: &str = include_str!("../../templates/templates.lock");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PromptKind {
    #[serde(rename = "QBP")]
    Qbp,
    #[serde(rename = "QBC")]
    Qbc,
}

impl PromptKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptKind::Qbp => "QBP",
            PromptKind::Qbc => "QBC",
        }
    }
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TemplateError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("template {name} hash {actual} does not match lockfile entry {expected}")]
    HashMismatch {
        name: String,
        expected: String,
        actual: String,
    },
    #[error("template {0} has no lockfile entry")]
    NotLocked(String),
    #[error("lockfile line {line} is malformed")]
    BadLockfile { line: usize },
    #[error("template {0} must use LF line endings")]
    CrLf(String),
    #[error("QBP template lacks the {QA_GROUP_PLACEHOLDER} placeholder")]
    MissingPlaceholder,
}

/// The rendered input to one generation call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub kind: PromptKind,
    /// Always `None`: both prompts are a single user block.
    pub system_text: Option<String>,
    pub user_text: String,
    pub prompt_hash: String,
    pub source_ids: Vec<String>,
}

/// Content hash of a prompt: SHA-256 over `kind 0x1F user_text 0x1F`.
pub fn prompt_hash(kind: PromptKind, user_text: &str) -> String {
    sha256_fields([kind.as_str().as_bytes(), user_text.as_bytes()])
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    qbp: String,
    qbc: String,
}

fn parse_lock(lock: &str) -> Result<Vec<(String, String)>, TemplateError> {
    lock.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let (hash, name) = l
                .split_once(char::is_whitespace)
                .ok_or(TemplateError::BadLockfile { line: i + 1 })?;
            let name = name.trim_start().trim_start_matches('*');
            if hash.len() != 64 || name.is_empty() {
                return Err(TemplateError::BadLockfile { line: i + 1 });
            }
            Ok((name.to_string(), hash.to_ascii_lowercase()))
        })
        .collect()
}

fn verify(name: &str, body: &str, lock: &[(String, String)]) -> Result<(), TemplateError> {
    if body.contains('\r') {
        return Err(TemplateError::CrLf(name.to_string()));
    }
    let expected = lock
        .iter()
        .find(|(n, _)| n == name)
        .map(|(_, h)| h.clone())
        .ok_or_else(|| TemplateError::NotLocked(name.to_string()))?;
    let actual = sha256_hex(body.as_bytes());
    if actual != expected {
        return Err(TemplateError::HashMismatch {
            name: name.to_string(),
            expected,
            actual,
        });
    }
    Ok(())
}

impl TemplateSet {
    /// Verifies raw template bodies against lockfile contents.
    pub fn from_parts(qbp: &str, qbc: &str, lock: &str) -> Result<Self, TemplateError> {
        let lock = parse_lock(lock)?;
        verify(QBP_TEMPLATE_NAME, qbp, &lock)?;
        verify(QBC_TEMPLATE_NAME, qbc, &lock)?;
        if !qbp.contains(QA_GROUP_PLACEHOLDER) {
            return Err(TemplateError::MissingPlaceholder);
        }
        Ok(Self {
            qbp: qbp.to_string(),
            qbc: qbc.to_string(),
        })
    }

    /// The templates compiled into the library.
    pub fn builtin() -> Result<Self, TemplateError> {
        Self::from_parts(BUILTIN_QBP, BUILTIN_QBC, BUILTIN_LOCK)
    }

    /// Loads and verifies templates from a directory holding the two
    /// template files and `templates.lock`.
    pub fn load(dir: &Path) -> Result<Self, TemplateError> {
        let read = |name: &str| {
            let path = dir.join(name);
            std::fs::read_to_string(&path).map_err(|source| TemplateError::Io { path, source })
        };
        Self::from_parts(
            &read(QBP_TEMPLATE_NAME)?,
            &read(QBC_TEMPLATE_NAME)?,
            &read(LOCKFILE_NAME)?,
        )
    }

    pub fn qbp_template(&self) -> &str {
        &self.qbp
    }

    pub fn qbc_template(&self) -> &str {
        &self.qbc
    }

    pub fn render_qbp(&self, group: &QuestionGroup) -> RenderedPrompt {
        let block = serialize_group(&group.pairs);
        // Single replacement: group text is never re-scanned for placeholders.
        let user_text = self.qbp.replacen(QA_GROUP_PLACEHOLDER, &block, 1);
        RenderedPrompt {
            kind: PromptKind::Qbp,
            system_text: None,
            prompt_hash: prompt_hash(PromptKind::Qbp, &user_text),
            user_text,
            source_ids: group.qids(),
        }
    }

    pub fn render_qbc(&self, pair: &QaPair) -> RenderedPrompt {
        let mut user_text = self.qbc.trim_end_matches('\n').to_string();
        user_text.push_str("\n\nQuestion: ");
        user_text.push_str(&pair.question);
        user_text.push_str("\nAnswer: ");
        user_text.push_str(&pair.answer);
        RenderedPrompt {
            kind: PromptKind::Qbc,
            system_text: None,
            prompt_hash: prompt_hash(PromptKind::Qbc, &user_text),
            user_text,
            source_ids: vec![pair.qid.clone()],
        }
    }
}

/// One line per pair: `Q{k}: {question} ({answer})`, `k` 1-based.
pub fn serialize_group(pairs: &[QaPair]) -> String {
    pairs
        .iter()
        .enumerate()
        .map(|(i, p)| format!("Q{}: {} ({})", i + 1, p.question, p.answer))
        .collect::<Vec<_>>()
        .join("\n")
}
