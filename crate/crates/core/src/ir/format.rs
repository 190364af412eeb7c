//! TOML architecture files.
//!
//! ```toml
//! name = "tiny"
//!
//! [input]
//! width = 32
//! height = 32
//! channels = 16
//!
//! [[stages]]
//! kind = "Dark"
//! repeats = 1
//! base_channels = 16
//! downsample = false
//! role = "backbone"
//! ```
//!
//! Stage keys: `kind`, `repeats`, `base_channels`, `downsample`, `role`, and
//! the optional `growth`, `partition_width`, `name`, `from`, `kernel`,
//! `shortcut`. Unknown keys are rejected.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{BlockKind, BlockSpec, NetworkSpec, Role, SpecError, Stage, TensorShape};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("syntax error: {message}")]
    SyntaxNoSpan { message: String },
    #[error(transparent)]
    Semantic(#[from] SpecError),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileDoc {
    name: String,
    input: TensorShape,
    stages: Vec<FileStage>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileStage {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    kind: BlockKind,
    repeats: u32,
    base_channels: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    growth: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    partition_width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kernel: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    shortcut: Option<bool>,
    downsample: bool,
    role: Role,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    from: Vec<String>,
}

impl From<FileStage> for Stage {
    fn from(f: FileStage) -> Self {
        Stage {
            name: f.name,
            block: BlockSpec {
                kind: f.kind,
                repeats: f.repeats,
                base_channels: f.base_channels,
                growth: f.growth,
                partition_width: f.partition_width,
                kernel: f.kernel,
                shortcut: f.shortcut,
            },
            downsample: f.downsample,
            role: f.role,
            from: f.from,
        }
    }
}

impl From<&Stage> for FileStage {
    fn from(s: &Stage) -> Self {
        FileStage {
            name: s.name.clone(),
            kind: s.block.kind,
            repeats: s.block.repeats,
            base_channels: s.block.base_channels,
            growth: s.block.growth,
            partition_width: s.block.partition_width,
            kernel: s.block.kernel,
            shortcut: s.block.shortcut,
            downsample: s.downsample,
            role: s.role,
            from: s.from.clone(),
        }
    }
}

/// Parses and validates an architecture file.
pub fn parse_spec(text: &str) -> Result<NetworkSpec, ParseError> {
    let doc: FileDoc = toml::from_str(text).map_err(|e| syntax_error(text, &e))?;
    let spec = NetworkSpec {
        name: doc.name,
        input: doc.input,
        stages: doc.stages.into_iter().map(Stage::from).collect(),
    };
    spec.validate()?;
    Ok(spec)
}

/// Renders a spec in the architecture file format.
pub fn serialize_spec(spec: &NetworkSpec) -> String {
    let doc = FileDoc {
        name: spec.name.clone(),
        input: spec.input,
        stages: spec.stages.iter().map(FileStage::from).collect(),
    };
    toml::to_string(&doc).expect("architecture documents always serialize")
}

fn syntax_error(text: &str, err: &toml::de::Error) -> ParseError {
    let message = err.message().to_string();
    match err.span() {
        Some(span) => {
            let (line, column) = line_col(text, span.start);
            ParseError::Syntax {
                line,
                column,
                message,
            }
        }
        None => ParseError::SyntaxNoSpan { message },
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |nl| before.len() - nl - 1) + 1;
    (line, column)
}
