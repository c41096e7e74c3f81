//! Textual instance descriptors.
//!
//! ```text
//! figure3:T=10
//! figure4:T=100,eps=0.1
//! random:S=5,A=3,seed=7,sparsity=0.3,rewards=uniform
//! file:golden/fig3.json      (a bare path also works)
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use amdp_core::instances::{figure3, figure4, random_instance, RandomSpec, RewardStyle};
use amdp_core::MdpInstance;
use thiserror::Error;

use crate::instance_file::{load_instance, InstanceFileError};

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("instance spec {spec:?}: {message}")]
    Syntax { spec: String, message: String },
    #[error(transparent)]
    File(#[from] InstanceFileError),
    #[error("cannot build instance: {0}")]
    Build(#[from] amdp_core::MdpError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Builder {
    Figure3 { t: u32 },
    Figure4 { t: u32, eps: f64 },
    Random(RandomSpec),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSpec {
    pub name: String,
    pub builder: Builder,
}

impl InstanceSpec {
    pub fn build(&self) -> Result<MdpInstance, SpecError> {
        Ok(match &self.builder {
            Builder::Figure3 { t } => figure3(*t)?,
            Builder::Figure4 { t, eps } => figure4(*t, *eps)?,
            Builder::Random(spec) => random_instance(spec)?,
            Builder::File(path) => load_instance(path)?,
        })
    }
}

impl fmt::Display for InstanceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

struct Params<'a> {
    spec: &'a str,
    values: BTreeMap<String, String>,
}

impl<'a> Params<'a> {
    fn parse(spec: &'a str, body: &str) -> Result<Self, SpecError> {
        let mut values = BTreeMap::new();
        for part in body.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| syntax(spec, format!("expected key=value, got {part:?}")))?;
            if values.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                return Err(syntax(spec, format!("parameter {k} given twice")));
            }
        }
        Ok(Self { spec, values })
    }

    fn take<T: FromStr>(&mut self, key: &str, default: Option<T>) -> Result<T, SpecError> {
        match self.values.remove(key) {
            Some(text) => text
                .parse()
                .map_err(|_| syntax(self.spec, format!("cannot parse {key}={text}"))),
            None => default.ok_or_else(|| syntax(self.spec, format!("missing parameter {key}"))),
        }
    }

    fn finish(self) -> Result<(), SpecError> {
        match self.values.keys().next() {
            Some(k) => Err(syntax(self.spec, format!("unknown parameter {k}"))),
            None => Ok(()),
        }
    }
}

fn syntax(spec: &str, message: String) -> SpecError {
    SpecError::Syntax {
        spec: spec.to_string(),
        message,
    }
}

impl FromStr for InstanceSpec {
    type Err = SpecError;

    fn from_str(text: &str) -> Result<Self, SpecError> {
        let text = text.trim();
        let (kind, body) = text.split_once(':').unwrap_or((text, ""));
        let builder = match kind {
            "figure3" => {
                let mut p = Params::parse(text, body)?;
                let t: u32 = p.take("T", None)?;
                p.finish()?;
                if t < 1 {
                    return Err(syntax(text, "T must be >= 1".into()));
                }
                Builder::Figure3 { t }
            }
            "figure4" => {
                let mut p = Params::parse(text, body)?;
                let t: u32 = p.take("T", None)?;
                let eps: f64 = p.take("eps", None)?;
                p.finish()?;
                if t < 1 || !(eps > 0.0) {
                    return Err(syntax(text, "need T >= 1 and eps > 0".into()));
                }
                Builder::Figure4 { t, eps }
            }
            "random" => {
                let mut p = Params::parse(text, body)?;
                let spec = RandomSpec {
                    n_states: p.take("S", None)?,
                    n_actions: p.take("A", None)?,
                    seed: p.take("seed", Some(0))?,
                    sparsity: p.take("sparsity", Some(0.0))?,
                    rewards: p.take("rewards", Some(RewardStyle::Uniform))?,
                };
                p.finish()?;
                Builder::Random(spec)
            }
            "file" => Builder::File(PathBuf::from(body)),
            _ if !text.is_empty() && (body.is_empty() || kind.len() == 1) => {
                // bare path, allowing a drive letter before ':'
                Builder::File(PathBuf::from(text))
            }
            _ => return Err(syntax(text, format!("unknown instance kind {kind:?}"))),
        };
        Ok(Self {
            name: canonical_name(&builder),
            builder,
        })
    }
}

fn canonical_name(builder: &Builder) -> String {
    match builder {
        Builder::Figure3 { t } => format!("figure3:T={t}"),
        Builder::Figure4 { t, eps } => format!("figure4:T={t},eps={eps}"),
        Builder::Random(s) => format!(
            "random:S={},A={},seed={},sparsity={},rewards={}",
            s.n_states,
            s.n_actions,
            s.seed,
            s.sparsity,
            s.rewards.name()
        ),
        Builder::File(p) => format!("file:{}", p.display()),
    }
}
