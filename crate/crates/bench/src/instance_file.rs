//! Instance file format.
//!
//! A single JSON document:
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "n_states": 2,
//!   "n_actions": 2,
//!   "transitions": [["0.9", "0.1"], ["0", "1"], ["0", "1"], ["0", "1"]],
//!   "rewards": ["1", "0.5", "0.5", "0.5"]
//! }
//! ```
//!
//! `transitions` holds one row per `(s, a)` pair in state-major order and
//! `rewards` the matching `S * A` rewards. Numbers are decimal strings so
//! values like `"0.25"` stay exact; writing uses the shortest representation
//! that parses back to the same `f64`, which makes save/load bit-exact.

use std::fs;
use std::path::Path;

use amdp_core::{MdpError, MdpInstance};
use serde::Deserialize;
use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum InstanceFileError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed instance file at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("field {field}: {message}")]
    Field { field: String, message: String },
    #[error("unsupported format_version {0} (expected {FORMAT_VERSION})")]
    Version(u32),
    #[error("invalid instance: {0}")]
    Invalid(#[from] MdpError),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceDocument {
    format_version: u32,
    n_states: usize,
    n_actions: usize,
    transitions: Vec<Vec<String>>,
    rewards: Vec<String>,
}

fn decimal(x: f64) -> String {
    format!("{x}")
}

fn parse_decimal(field: impl Fn() -> String, text: &str) -> Result<f64, InstanceFileError> {
    let value: f64 = text.trim().parse().map_err(|_| InstanceFileError::Field {
        field: field(),
        message: format!("{text:?} is not a decimal number"),
    })?;
    if !value.is_finite() {
        return Err(InstanceFileError::Field {
            field: field(),
            message: format!("{text:?} is not finite"),
        });
    }
    Ok(value)
}

/// Serializes an instance to the JSON document format.
pub fn to_string(mdp: &MdpInstance) -> String {
    let (s, a) = (mdp.n_states(), mdp.n_actions());
    let line = |xs: &[f64]| {
        let v: Vec<String> = xs.iter().map(|&x| decimal(x)).collect();
        serde_json::to_string(&v).expect("strings serialize")
    };
    let rows: Vec<String> = (0..s * a)
        .map(|pair| format!("    {}", line(mdp.row(pair / a, pair % a))))
        .collect();
    format!(
        "{{\n  \"format_version\": {FORMAT_VERSION},\n  \"n_states\": {s},\n  \"n_actions\": {a},\n  \
         \"transitions\": [\n{}\n  ],\n  \"rewards\": {}\n}}",
        rows.join(",\n"),
        line(mdp.rewards())
    )
}

/// Parses and validates an instance document.
pub fn from_str(text: &str) -> Result<MdpInstance, InstanceFileError> {
    let doc: InstanceDocument = serde_json::from_str(text).map_err(|e| InstanceFileError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if doc.format_version != FORMAT_VERSION {
        return Err(InstanceFileError::Version(doc.format_version));
    }
    let (s, a) = (doc.n_states, doc.n_actions);
    if doc.transitions.len() != s * a {
        return Err(InstanceFileError::Field {
            field: "transitions".into(),
            message: format!("expected {} rows (S*A), found {}", s * a, doc.transitions.len()),
        });
    }
    if doc.rewards.len() != s * a {
        return Err(InstanceFileError::Field {
            field: "rewards".into(),
            message: format!("expected {} entries (S*A), found {}", s * a, doc.rewards.len()),
        });
    }
    let mut flat = Vec::with_capacity(s * a * s);
    for (pair, row) in doc.transitions.iter().enumerate() {
        if row.len() != s {
            return Err(InstanceFileError::Field {
                field: format!("transitions[{pair}] (s={}, a={})", pair / a, pair % a),
                message: format!("expected {s} entries, found {}", row.len()),
            });
        }
        for (j, text) in row.iter().enumerate() {
            flat.push(parse_decimal(
                || format!("transitions[{pair}][{j}] (s={}, a={})", pair / a, pair % a),
                text,
            )?);
        }
    }
    let rewards = doc
        .rewards
        .iter()
        .enumerate()
        .map(|(pair, text)| parse_decimal(|| format!("rewards[{pair}] (s={}, a={})", pair / a, pair % a), text))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MdpInstance::new(s, a, flat, rewards)?)
}

pub fn save_instance(mdp: &MdpInstance, path: &Path) -> Result<(), InstanceFileError> {
    fs::write(path, to_string(mdp) + "\n").map_err(|source| InstanceFileError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_instance(path: &Path) -> Result<MdpInstance, InstanceFileError> {
    let text = fs::read_to_string(path).map_err(|source| InstanceFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    from_str(&text)
}
