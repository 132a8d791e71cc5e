//! Executes a plan: instances, one history per job, model checkpoints and
//! the run index.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use gna_core::baselines::sa_run;
use gna_core::model::Checkpoint;
use gna_core::problems::{InstanceFile, ProblemInstance, ProblemKind};
use gna_core::training::{run_limited, run_unlimited, Regime, RunHistory};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::experiment::{instance_stem, Job, Manifest, Plan, SolverSettings};
use crate::{io_err, HarnessError};

pub const WORKERS_ENV: &str = "GNA_WORKERS";
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const RUNS_FILE: &str = "runs.csv";
pub const HISTORY_DIR: &str = "histories";
pub const INSTANCE_DIR: &str = "instances";
pub const MODEL_DIR: &str = "models";

/// Worker count from the environment, else the available parallelism.
pub fn worker_count() -> Result<usize, HarnessError> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(w) if w > 0 => Ok(w),
            _ => Err(HarnessError::Usage(format!("{WORKERS_ENV} must be a positive integer, got '{v}'"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// One line of the run index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub solver: String,
    pub problem: String,
    pub n: usize,
    pub seed: u64,
    pub status: String,
    pub final_best_f: Option<f64>,
    pub queries: u64,
    pub steps_to_solve: Option<u64>,
    pub history: String,
    pub error: String,
}

impl RunRow {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

pub fn instance_file_name(problem: ProblemKind, n: usize, seed: u64) -> String {
    let ext = if problem == ProblemKind::Sat3 { "cnf" } else { "json" };
    format!("{}.{ext}", instance_stem(problem, n, seed))
}

/// Writes the instance file for `(problem, n, seed)` into `dir`.
pub fn write_instance(dir: &Path, problem: ProblemKind, n: usize, seed: u64) -> Result<PathBuf, HarnessError> {
    let inst = ProblemInstance::generate(problem, n, seed)?;
    let path = dir.join(instance_file_name(problem, n, seed));
    InstanceFile::new(inst, Some(seed)).save(&path)?;
    Ok(path)
}

pub fn run_rng(job: &Job) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(job.seed);
    rng.set_stream(job.rng_stream);
    rng
}

/// Runs one job, returning its history (partial on failure) and, for the
/// learned solvers, the final model.
pub fn run_job(
    job: &Job,
    instance: &ProblemInstance,
) -> (RunHistory, Option<Checkpoint>, Result<(), String>) {
    let mut rng = run_rng(job);
    match &job.settings {
        SolverSettings::Sa(cfg) => (sa_run(instance, cfg, &mut rng), None, Ok(())),
        SolverSettings::Gna(cfg) => {
            let result = match cfg.regime {
                Regime::Limited => run_limited::<f64, _>(instance, cfg, &mut rng),
                Regime::Unlimited => run_unlimited::<f64, _>(instance, cfg, &mut rng),
            };
            match result {
                Ok((h, model)) => (h, Some(Checkpoint::from_model(&model, Some(&rng))), Ok(())),
                Err(fail) => (fail.history, None, Err(fail.error.to_string())),
            }
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn execute_job(job: &Job, instance: &ProblemInstance, out: &Path) -> Result<RunRow, HarnessError> {
    let (history, model, status) = run_job(job, instance);
    let history_name = format!("{HISTORY_DIR}/{}.csv", job.id());
    write_text(&out.join(&history_name), &history.to_csv())?;
    if let Some(ck) = model {
        let path = out.join(MODEL_DIR).join(format!("{}.json", job.id()));
        ck.save(&path)?;
    }
    let (status, error) = match status {
        Ok(()) => ("ok".to_string(), String::new()),
        Err(e) => ("failed".to_string(), e),
    };
    log::info!(
        "{}: {status}, best f {:?}, {} queries",
        job.id(),
        history.best_f(),
        history.queries
    );
    Ok(RunRow {
        solver: job.solver.to_string(),
        problem: job.problem.to_string(),
        n: job.n,
        seed: job.seed,
        status,
        final_best_f: history.best_f(),
        queries: history.queries,
        steps_to_solve: history.steps_to_solve,
        history: history_name,
        error,
    })
}

/// Runs every job of `plan` on `workers` threads and writes the run
/// directory. Failed runs are recorded and do not stop the others.
pub fn execute(plan: &Plan, workers: usize) -> Result<Vec<RunRow>, HarnessError> {
    let out = &plan.spec.out;
    for dir in [HISTORY_DIR, INSTANCE_DIR, MODEL_DIR] {
        let d = out.join(dir);
        fs::create_dir_all(&d).map_err(|e| io_err(&d, e))?;
    }
    write_text(&out.join(MANIFEST_FILE), &Manifest::new(plan.clone()).to_toml()?)?;

    let mut instances: BTreeMap<(usize, u64), ProblemInstance> = BTreeMap::new();
    for job in &plan.jobs {
        if let std::collections::btree_map::Entry::Vacant(slot) = instances.entry((job.n, job.seed)) {
            write_instance(&out.join(INSTANCE_DIR), job.problem, job.n, job.seed)?;
            slot.insert(ProblemInstance::generate(job.problem, job.n, job.seed)?);
        }
    }

    let next = AtomicUsize::new(0);
    let rows: Mutex<Vec<Option<Result<RunRow, HarnessError>>>> =
        Mutex::new((0..plan.jobs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers.clamp(1, plan.jobs.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = plan.jobs.get(i) else { break };
                let row = execute_job(job, &instances[&(job.n, job.seed)], out);
                rows.lock().expect("no worker panicked")[i] = Some(row);
            });
        }
    });
    let rows = rows
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect::<Result<Vec<_>, _>>()?;

    let path = out.join(RUNS_FILE);
    let mut w = csv::Writer::from_path(&path)?;
    for row in &rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| io_err(&path, e))?;
    Ok(rows)
}

pub fn read_runs(dir: &Path) -> Result<Vec<RunRow>, HarnessError> {
    let path = dir.join(RUNS_FILE);
    if !path.exists() {
        return Err(HarnessError::Usage(format!("{} has no {RUNS_FILE}", dir.display())));
    }
    let mut r = csv::Reader::from_path(&path)?;
    Ok(r.deserialize().collect::<Result<Vec<RunRow>, _>>()?)
}

pub fn read_history(dir: &Path, row: &RunRow) -> Result<RunHistory, HarnessError> {
    let path = dir.join(&row.history);
    let file = fs::File::open(&path).map_err(|e| io_err(&path, e))?;
    Ok(RunHistory::read_csv(file)?)
}
