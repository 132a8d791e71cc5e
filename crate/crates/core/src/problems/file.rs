//! Instance files. 3-SAT is written as DIMACS CNF; every kind also has a
//! versioned JSON envelope:
//!
//! ```json
//! {"format": "gna-instance", "version": 1, "kind": "xorsat", "n": 20,
//!  "seed": 7, "payload": { ... }}
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::ising::IsingSpec;
use super::subset_sum::SubsetSumSpec;
use super::{Barthel3Sat, ContaminationControl, Objective, ProblemError, ProblemInstance, ProblemKind, SubsetSum, Xorsat3Reg};

pub const INSTANCE_FORMAT: &str = "gna-instance";
pub const INSTANCE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope {
    format: String,
    version: u32,
    kind: ProblemKind,
    n: usize,
    seed: Option<u64>,
    payload: Value,
}

/// An instance together with the seed that generated it, if known.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceFile {
    pub instance: ProblemInstance,
    pub seed: Option<u64>,
}

fn json_err(e: serde_json::Error) -> ProblemError {
    ProblemError::Parse(format!("instance json: {e}"))
}

/// Three distinct in-range variables.
fn clause_ok([a, b, c]: [usize; 3], n: usize) -> bool {
    a < n && b < n && c < n && a != b && a != c && b != c
}

impl InstanceFile {
    pub fn new(instance: ProblemInstance, seed: Option<u64>) -> Self {
        Self { instance, seed }
    }

    pub fn to_json(&self) -> String {
        let payload = match &self.instance {
            ProblemInstance::Ising(p) => serde_json::to_value(IsingSpec::from(p)),
            ProblemInstance::Contamination(p) => serde_json::to_value(p),
            ProblemInstance::Sat3(p) => serde_json::to_value(p),
            ProblemInstance::Xorsat(p) => serde_json::to_value(p),
            ProblemInstance::SubsetSum(p) => serde_json::to_value(SubsetSumSpec::from(p)),
        }
        .expect("instances serialize");
        let env = Envelope {
            format: INSTANCE_FORMAT.into(),
            version: INSTANCE_VERSION,
            kind: self.instance.kind(),
            n: self.instance.n_vars(),
            seed: self.seed,
            payload,
        };
        let mut text = serde_json::to_string_pretty(&env).expect("envelope serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, ProblemError> {
        let env: Envelope = serde_json::from_str(text).map_err(json_err)?;
        if env.format != INSTANCE_FORMAT {
            return Err(ProblemError::Parse(format!("unknown format {:?}", env.format)));
        }
        if env.version != INSTANCE_VERSION {
            return Err(ProblemError::Parse(format!("unsupported version {}", env.version)));
        }
        let p = env.payload;
        let instance = match env.kind {
            ProblemKind::Ising => {
                let spec: IsingSpec = serde_json::from_value(p).map_err(json_err)?;
                if spec.couplings.len() != super::ising::N_EDGES {
                    return Err(ProblemError::Parse("ising needs 24 couplings".into()));
                }
                ProblemInstance::Ising(spec.into())
            }
            ProblemKind::Contamination => {
                let c: ContaminationControl = serde_json::from_value(p).map_err(json_err)?;
                let ok = c.lambda.len() == c.z0.len()
                    && c.gamma.len() == c.z0.len()
                    && c.lambda.iter().chain(&c.gamma).all(|r| r.len() == c.n);
                if !ok {
                    return Err(ProblemError::Parse("contamination arrays have inconsistent sizes".into()));
                }
                ProblemInstance::Contamination(c)
            }
            ProblemKind::Sat3 => {
                let s: Barthel3Sat = serde_json::from_value(p).map_err(json_err)?;
                let ok = s.planted.as_ref().is_none_or(|b| b.len() == s.n)
                    && s.clauses.iter().all(|c| clause_ok(c.vars(), s.n));
                if !ok {
                    return Err(ProblemError::Parse("3-sat clauses or plant do not fit n".into()));
                }
                ProblemInstance::Sat3(s)
            }
            ProblemKind::Xorsat => {
                let x: Xorsat3Reg = serde_json::from_value(p).map_err(json_err)?;
                let ok = x.planted.len() == x.n && x.clauses.iter().all(|c| clause_ok(c.vars, x.n) && c.parity <= 1);
                if !ok {
                    return Err(ProblemError::Parse("xorsat clauses or plant do not fit n".into()));
                }
                ProblemInstance::Xorsat(x)
            }
            ProblemKind::SubsetSum => {
                let spec: SubsetSumSpec = serde_json::from_value(p).map_err(json_err)?;
                ProblemInstance::SubsetSum(SubsetSum::try_from(spec)?)
            }
        };
        if instance.n_vars() != env.n {
            return Err(ProblemError::Parse(format!(
                "header says n = {}, payload has {}",
                env.n,
                instance.n_vars()
            )));
        }
        Ok(Self {
            instance,
            seed: env.seed,
        })
    }

    /// DIMACS for 3-SAT, JSON otherwise.
    pub fn to_text(&self) -> String {
        match &self.instance {
            ProblemInstance::Sat3(p) => p.to_dimacs(self.seed),
            _ => self.to_json(),
        }
    }

    /// Accepts either form written by [`InstanceFile::to_text`] or [`InstanceFile::to_json`].
    pub fn parse(text: &str) -> Result<Self, ProblemError> {
        if text.trim_start().starts_with('{') {
            Self::from_json(text)
        } else {
            let (sat, seed) = Barthel3Sat::from_dimacs(text)?;
            Ok(Self {
                instance: ProblemInstance::Sat3(sat),
                seed,
            })
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ProblemError> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ProblemError> {
        Self::parse(&fs::read_to_string(path)?)
    }
}
