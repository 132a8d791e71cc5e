//! Benchmark objectives, their generators, and exact small-instance
//! Boltzmann oracles.
//!
//! Every instance is immutable after generation and `evaluate` is a pure
//! function of the instance and the configuration.

mod contamination;
mod file;
mod ising;
mod sat;
mod subset_sum;
mod xorsat;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::BitString;
use crate::nn::log_sum_exp;

pub use contamination::ContaminationControl;
pub use file::{InstanceFile, INSTANCE_FORMAT, INSTANCE_VERSION};
pub use ising::IsingSparsification;
pub use sat::{Barthel3Sat, Literal, SatClause, BARTHEL_P0};
pub use subset_sum::SubsetSum;
pub use xorsat::{XorClause, Xorsat3Reg};

/// Largest `n` for which the enumeration oracles run.
pub const MAX_EXACT_VARS: usize = 20;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("{kind} does not support n = {n}: {reason}")]
    UnsupportedSize {
        kind: ProblemKind,
        n: usize,
        reason: &'static str,
    },
    #[error("instance generation failed after {0} attempts")]
    GenerationFailed(usize),
    #[error("exact enumeration limited to n <= {MAX_EXACT_VARS}, got {0}")]
    TooLarge(usize),
    #[error("configuration has {got} variables, instance has {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("unknown problem kind {0:?}")]
    UnknownKind(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("instance i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// A black-box objective over `n` binary variables.
pub trait Objective: Send + Sync {
    fn n_vars(&self) -> usize;

    /// `f(x)`. Panics if `x.len() != self.n_vars()`.
    fn evaluate(&self, x: &BitString) -> f64;

    /// Length-checked [`Objective::evaluate`].
    fn try_evaluate(&self, x: &BitString) -> Result<f64, ProblemError> {
        if x.len() != self.n_vars() {
            return Err(ProblemError::LengthMismatch {
                expected: self.n_vars(),
                got: x.len(),
            });
        }
        Ok(self.evaluate(x))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProblemKind {
    #[serde(rename = "ising")]
    Ising,
    #[serde(rename = "contamination")]
    Contamination,
    #[serde(rename = "3sat")]
    Sat3,
    #[serde(rename = "xorsat")]
    Xorsat,
    #[serde(rename = "subset-sum")]
    SubsetSum,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 5] = [
        ProblemKind::Ising,
        ProblemKind::Contamination,
        ProblemKind::Sat3,
        ProblemKind::Xorsat,
        ProblemKind::SubsetSum,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Ising => "ising",
            ProblemKind::Contamination => "contamination",
            ProblemKind::Sat3 => "3sat",
            ProblemKind::Xorsat => "xorsat",
            ProblemKind::SubsetSum => "subset-sum",
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemKind {
    type Err = ProblemError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "ising" => Ok(ProblemKind::Ising),
            "contamination" => Ok(ProblemKind::Contamination),
            "3sat" | "3-sat" | "sat" => Ok(ProblemKind::Sat3),
            "xorsat" | "3xorsat" | "3-xorsat" => Ok(ProblemKind::Xorsat),
            "subset-sum" | "subsetsum" => Ok(ProblemKind::SubsetSum),
            _ => Err(ProblemError::UnknownKind(s.to_string())),
        }
    }
}

/// One of the five benchmark objectives.
#[derive(Clone, Debug, PartialEq)]
pub enum ProblemInstance {
    Ising(IsingSparsification),
    Contamination(ContaminationControl),
    Sat3(Barthel3Sat),
    Xorsat(Xorsat3Reg),
    SubsetSum(SubsetSum),
}

impl ProblemInstance {
    /// Deterministic instance for `(kind, n, seed)`.
    pub fn generate(kind: ProblemKind, n: usize, seed: u64) -> Result<Self, ProblemError> {
        if kind != ProblemKind::Ising && n < 3 {
            return Err(ProblemError::UnsupportedSize {
                kind,
                n,
                reason: "need at least 3 variables",
            });
        }
        Ok(match kind {
            ProblemKind::Ising => {
                if n != ising::N_EDGES {
                    return Err(ProblemError::UnsupportedSize {
                        kind,
                        n,
                        reason: "the 4x4 open lattice has exactly 24 couplings",
                    });
                }
                ProblemInstance::Ising(IsingSparsification::generate(seed))
            }
            ProblemKind::Contamination => ProblemInstance::Contamination(ContaminationControl::generate(n, seed)),
            ProblemKind::Sat3 => ProblemInstance::Sat3(Barthel3Sat::generate(n, seed)),
            ProblemKind::Xorsat => ProblemInstance::Xorsat(Xorsat3Reg::generate(n, seed)?),
            ProblemKind::SubsetSum => ProblemInstance::SubsetSum(SubsetSum::generate(n, seed)),
        })
    }

    pub fn kind(&self) -> ProblemKind {
        match self {
            ProblemInstance::Ising(_) => ProblemKind::Ising,
            ProblemInstance::Contamination(_) => ProblemKind::Contamination,
            ProblemInstance::Sat3(_) => ProblemKind::Sat3,
            ProblemInstance::Xorsat(_) => ProblemKind::Xorsat,
            ProblemInstance::SubsetSum(_) => ProblemKind::SubsetSum,
        }
    }

    /// Known optimal configuration, when the construction plants one.
    pub fn planted(&self) -> Option<&BitString> {
        match self {
            ProblemInstance::Sat3(p) => p.planted.as_ref(),
            ProblemInstance::Xorsat(p) => Some(&p.planted),
            ProblemInstance::SubsetSum(p) => Some(&p.planted),
            _ => None,
        }
    }

    /// Variable triples of each clause, for constraint-satisfaction kinds.
    pub fn clause_variables(&self) -> Option<Vec<[usize; 3]>> {
        match self {
            ProblemInstance::Sat3(p) => Some(p.clauses.iter().map(|c| c.vars()).collect()),
            ProblemInstance::Xorsat(p) => Some(p.clauses.iter().map(|c| c.vars).collect()),
            _ => None,
        }
    }

    fn as_objective(&self) -> &dyn Objective {
        match self {
            ProblemInstance::Ising(p) => p,
            ProblemInstance::Contamination(p) => p,
            ProblemInstance::Sat3(p) => p,
            ProblemInstance::Xorsat(p) => p,
            ProblemInstance::SubsetSum(p) => p,
        }
    }
}

impl Objective for ProblemInstance {
    fn n_vars(&self) -> usize {
        self.as_objective().n_vars()
    }

    fn evaluate(&self, x: &BitString) -> f64 {
        self.as_objective().evaluate(x)
    }
}

/// An objective given by an explicit value table indexed by
/// [`BitString::to_index`].
#[derive(Clone, Debug, PartialEq)]
pub struct TableObjective {
    n: usize,
    values: Vec<f64>,
}

impl TableObjective {
    pub fn new(n: usize, values: Vec<f64>) -> Self {
        assert!(n < 64 && values.len() == 1usize << n, "table needs 2^n entries");
        Self { n, values }
    }

    pub fn from_fn(n: usize, f: impl Fn(&BitString) -> f64) -> Self {
        Self::new(n, BitString::enumerate(n).map(|x| f(&x)).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl Objective for TableObjective {
    fn n_vars(&self) -> usize {
        self.n
    }

    fn evaluate(&self, x: &BitString) -> f64 {
        assert_eq!(x.len(), self.n);
        self.values[x.to_index().expect("n < 64") as usize]
    }
}

/// `f(x)` for every configuration, in index order.
pub fn all_energies(obj: &dyn Objective) -> Result<Vec<f64>, ProblemError> {
    let n = obj.n_vars();
    if n > MAX_EXACT_VARS {
        return Err(ProblemError::TooLarge(n));
    }
    Ok(BitString::enumerate(n).map(|x| obj.evaluate(&x)).collect())
}

/// `log Z(β) = log Σ_x e^{−βf(x)}` by enumeration.
pub fn log_partition(obj: &dyn Objective, beta: f64) -> Result<f64, ProblemError> {
    let neg: Vec<f64> = all_energies(obj)?.iter().map(|f| -beta * f).collect();
    Ok(log_sum_exp(&neg))
}

/// `log p(x, β)` for every configuration, in index order.
pub fn exact_log_boltzmann(obj: &dyn Objective, beta: f64) -> Result<Vec<f64>, ProblemError> {
    let neg: Vec<f64> = all_energies(obj)?.iter().map(|f| -beta * f).collect();
    let lz = log_sum_exp(&neg);
    Ok(neg.into_iter().map(|v| v - lz).collect())
}

/// `p(x, β) = e^{−βf(x)} / Z(β)` for every configuration, in index order.
pub fn exact_boltzmann_table(obj: &dyn Objective, beta: f64) -> Result<Vec<f64>, ProblemError> {
    Ok(exact_log_boltzmann(obj, beta)?.into_iter().map(f64::exp).collect())
}
