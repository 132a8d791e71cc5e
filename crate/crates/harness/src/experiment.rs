//! Experiment specification, its expansion into a run plan, and the run
//! manifest.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use gna_core::baselines::SaConfig;
use gna_core::problems::{ProblemInstance, ProblemKind};
use gna_core::training::{Regime, TrainRunConfig, Variant};
use serde::{Deserialize, Serialize};

use crate::HarnessError;

pub const MANIFEST_FORMAT: &str = "gna-run-manifest";
pub const MANIFEST_VERSION: u32 = 1;

/// Generator behind every run; each solver reads its own stream.
pub const RNG_NAME: &str = "ChaCha20Rng (rand_chacha 0.9), seed_from_u64(seed), stream = solver code";

/// Version string embedded at build time.
pub const TOOL_VERSION: &str = env!("GNA_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    GnaSa,
    GnaPt,
    Sa,
}

impl Solver {
    pub const ALL: [Solver; 3] = [Solver::GnaSa, Solver::GnaPt, Solver::Sa];

    pub fn name(self) -> &'static str {
        match self {
            Solver::GnaSa => "gna-sa",
            Solver::GnaPt => "gna-pt",
            Solver::Sa => "sa",
        }
    }

    /// ChaCha stream for this solver's run RNG.
    pub fn stream(self) -> u64 {
        match self {
            Solver::GnaSa => 1,
            Solver::GnaPt => 2,
            Solver::Sa => 3,
        }
    }

    pub fn variant(self) -> Option<Variant> {
        match self {
            Solver::GnaSa => Some(Variant::Sa),
            Solver::GnaPt => Some(Variant::Pt),
            Solver::Sa => None,
        }
    }
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Solver {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Solver::ALL
            .into_iter()
            .find(|v| v.name() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown solver '{s}' (expected gna-sa, gna-pt or sa)"))
    }
}

pub fn parse_regime(s: &str) -> Result<Regime, String> {
    match s.to_ascii_lowercase().as_str() {
        "limited" => Ok(Regime::Limited),
        "unlimited" => Ok(Regime::Unlimited),
        _ => Err(format!("unknown regime '{s}' (expected limited or unlimited)")),
    }
}

/// Comma-separated integers and half-open ranges `a..b`.
pub fn parse_list(s: &str) -> Result<Vec<u64>, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: u64 = a.trim().parse().map_err(|_| format!("bad range start in '{part}'"))?;
            let b: u64 = b.trim().parse().map_err(|_| format!("bad range end in '{part}'"))?;
            if a >= b {
                return Err(format!("empty range '{part}'"));
            }
            out.extend(a..b);
        } else {
            out.push(part.parse().map_err(|_| format!("bad number '{part}'"))?);
        }
    }
    if out.is_empty() {
        return Err("empty list".into());
    }
    Ok(out)
}

pub fn parse_sizes(s: &str) -> Result<Vec<usize>, String> {
    parse_list(s)?
        .into_iter()
        .map(|v| usize::try_from(v).map_err(|_| format!("size {v} too large")))
        .collect()
}

/// What to run: one problem family at one or more sizes, every solver on
/// every seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub problem: ProblemKind,
    pub sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub solvers: Vec<Solver>,
    pub regime: Regime,
    /// Limited regime: objective evaluations per run.
    pub budget: usize,
    /// Unlimited regime step cap; `n³/8` for 3-SAT and 10⁴ otherwise when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_upper: Option<f64>,
    /// Unlimited regime: keep training after the first solve.
    #[serde(default)]
    pub train_to_cap: bool,
    pub out: PathBuf,
}

pub fn default_max_steps(kind: ProblemKind, n: usize) -> u64 {
    match kind {
        ProblemKind::Sat3 => (n as u64).pow(3) / 8,
        _ => 10_000,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SolverSettings {
    Gna(TrainRunConfig),
    Sa(SaConfig),
}

/// One (solver, size, seed) run with its fully resolved configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub solver: Solver,
    pub problem: ProblemKind,
    pub n: usize,
    /// Instance seed and run-RNG seed.
    pub seed: u64,
    pub rng_stream: u64,
    pub settings: SolverSettings,
}

impl Job {
    pub fn id(&self) -> String {
        format!("{}-{}-n{}-s{}", self.solver, self.problem, self.n, self.seed)
    }
}

pub fn instance_stem(problem: ProblemKind, n: usize, seed: u64) -> String {
    format!("{problem}-n{n}-s{seed}")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub spec: ExperimentSpec,
    pub jobs: Vec<Job>,
}

fn usage(msg: impl Into<String>) -> HarnessError {
    HarnessError::Usage(msg.into())
}

impl ExperimentSpec {
    /// Expands into one job per (size, seed, solver), rejecting anything that cannot run.
    pub fn plan(&self) -> Result<Plan, HarnessError> {
        if self.sizes.is_empty() {
            return Err(usage("at least one size is required"));
        }
        if self.seeds.is_empty() {
            return Err(usage("at least one seed is required"));
        }
        if self.solvers.is_empty() {
            return Err(usage("at least one solver is required"));
        }
        if self.train_to_cap && self.regime != Regime::Unlimited {
            return Err(usage("training to the step cap applies only to the unlimited regime"));
        }
        if self.seeds.iter().any(|&s| s > i64::MAX as u64) {
            return Err(usage("seeds must fit in a signed 64-bit integer"));
        }
        for &n in &self.sizes {
            ProblemInstance::generate(self.problem, n, self.seeds[0]).map_err(|e| usage(e.to_string()))?;
        }
        let mut jobs = Vec::new();
        for &n in &self.sizes {
            for &seed in &self.seeds {
                for &solver in &self.solvers {
                    let settings = self.settings(solver, n)?;
                    jobs.push(Job {
                        solver,
                        problem: self.problem,
                        n,
                        seed,
                        rng_stream: solver.stream(),
                        settings,
                    });
                }
            }
        }
        Ok(Plan {
            spec: self.clone(),
            jobs,
        })
    }

    fn settings(&self, solver: Solver, n: usize) -> Result<SolverSettings, HarnessError> {
        match (solver.variant(), self.regime) {
            (Some(v), regime) => {
                let mut cfg = match regime {
                    Regime::Limited => {
                        let mut c = TrainRunConfig::limited(v);
                        c.budget = self.budget;
                        c
                    }
                    Regime::Unlimited => {
                        let mut c = TrainRunConfig::unlimited(
                            v,
                            self.max_steps.unwrap_or_else(|| default_max_steps(self.problem, n)),
                        );
                        c.stop_at_target = !self.train_to_cap;
                        c
                    }
                };
                if let Some(b) = self.beta_min {
                    cfg.schedule.beta_min = b;
                    if regime == Regime::Limited {
                        cfg.schedule.beta_start = b;
                    }
                }
                if let Some(b) = self.beta_upper {
                    cfg.schedule.beta_upper = b;
                }
                cfg.validate().map_err(|e| usage(format!("{solver}: {e}")))?;
                Ok(SolverSettings::Gna(cfg))
            }
            (None, Regime::Unlimited) => Err(usage("the sa solver only runs in the limited regime")),
            (None, Regime::Limited) => {
                let mut cfg = SaConfig::limited(self.budget);
                if let Some(b) = self.beta_min {
                    cfg.beta_start = b;
                }
                if let Some(b) = self.beta_upper {
                    cfg.beta_end = b;
                }
                cfg.validate().map_err(|e| usage(format!("sa: {e}")))?;
                Ok(SolverSettings::Sa(cfg))
            }
        }
    }
}

/// Everything needed to reproduce a run directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub tool_version: String,
    pub rng: String,
    pub plan: Plan,
}

impl Manifest {
    pub fn new(plan: Plan) -> Self {
        Self {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            tool_version: TOOL_VERSION.into(),
            rng: RNG_NAME.into(),
            plan,
        }
    }

    pub fn to_toml(&self) -> Result<String, HarnessError> {
        toml::to_string_pretty(self).map_err(|e| HarnessError::Format(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let m: Manifest = toml::from_str(text).map_err(|e| HarnessError::Format(e.to_string()))?;
        if m.format != MANIFEST_FORMAT || m.version != MANIFEST_VERSION {
            return Err(HarnessError::Format(format!(
                "unsupported manifest {} v{}",
                m.format, m.version
            )));
        }
        Ok(m)
    }
}
