use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gna_core::problems::ProblemKind;
use gna_core::training::Regime;
use gna_harness::analyze::{analyze, AnalyzeOptions};
use gna_harness::experiment::{parse_list, parse_regime, parse_sizes, ExperimentSpec, Solver};
use gna_harness::report::{build_report, write_report};
use gna_harness::runner::{execute, worker_count, write_instance};
use gna_harness::HarnessError;
use serde::Deserialize;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

/// Parsed comma lists; aliases keep clap from treating them as repeated flags.
type Sizes = Vec<usize>;
type Seeds = Vec<u64>;

#[derive(Parser)]
#[command(name = "gna", version = env!("GNA_VERSION"), about = "Generative neural annealer experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write benchmark instances.
    Generate(GenerateArgs),
    /// Run solvers over sizes and seeds into a run directory.
    Run(RunArgs),
    /// Aggregate a run directory into tables and plots.
    Report {
        dir: PathBuf,
    },
    /// Correlate a checkpoint's attention with its instance's clause graph.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    problem: ProblemKind,
    /// Sizes, e.g. `25` or `10,15,20`.
    #[arg(long, value_parser = parse_sizes)]
    n: Sizes,
    /// Seeds, e.g. `0..10` or `1,2,3`.
    #[arg(long, alias = "seed", value_parser = parse_list, default_value = "0")]
    seeds: Seeds,
    #[arg(long, default_value = "instances")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// TOML file with defaults for any of the flags below; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<ProblemKind>,
    #[arg(long, value_parser = parse_sizes)]
    n: Option<Sizes>,
    #[arg(long, alias = "seed", value_parser = parse_list)]
    seeds: Option<Seeds>,
    /// Comma-separated subset of gna-sa, gna-pt, sa.
    #[arg(long, value_delimiter = ',')]
    solver: Option<Vec<Solver>>,
    #[arg(long, value_parser = parse_regime)]
    regime: Option<Regime>,
    /// Objective evaluations per limited-regime run.
    #[arg(long)]
    budget: Option<usize>,
    /// Unlimited-regime step cap.
    #[arg(long)]
    max_steps: Option<u64>,
    #[arg(long)]
    beta_min: Option<f64>,
    #[arg(long)]
    beta_upper: Option<f64>,
    /// Unlimited regime: keep training after the first solve, up to the step cap.
    #[arg(long)]
    train_to_cap: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// The `--config` file: every field optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfigFile {
    problem: Option<ProblemKind>,
    n: Option<Vec<usize>>,
    seeds: Option<Vec<u64>>,
    solver: Option<Vec<Solver>>,
    regime: Option<Regime>,
    budget: Option<usize>,
    max_steps: Option<u64>,
    beta_min: Option<f64>,
    beta_upper: Option<f64>,
    train_to_cap: Option<bool>,
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 0.15)]
    alpha: f64,
    #[arg(long, default_value_t = 10)]
    path_length: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "analysis")]
    out: PathBuf,
}

fn usage(msg: impl Into<String>) -> HarnessError {
    HarnessError::Usage(msg.into())
}

fn generate(args: GenerateArgs) -> Result<(), HarnessError> {
    if args.n.is_empty() {
        return Err(usage("--n is required"));
    }
    fs::create_dir_all(&args.out).map_err(|e| usage(format!("{}: {e}", args.out.display())))?;
    for &n in &args.n {
        for &seed in &args.seeds {
            let path = write_instance(&args.out, args.problem, n, seed).map_err(|e| match e {
                HarnessError::Problem(p) => usage(p.to_string()),
                other => other,
            })?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn load_config(path: &Path) -> Result<RunConfigFile, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn run(args: RunArgs) -> Result<(), HarnessError> {
    let file = match &args.config {
        Some(p) => load_config(p)?,
        None => RunConfigFile::default(),
    };
    let spec = ExperimentSpec {
        problem: args
            .problem
            .or(file.problem)
            .ok_or_else(|| usage("--problem is required"))?,
        sizes: args.n.or(file.n).ok_or_else(|| usage("--n is required"))?,
        seeds: args.seeds.or(file.seeds).unwrap_or_else(|| (0..10).collect()),
        solvers: args.solver.or(file.solver).unwrap_or_else(|| vec![Solver::GnaPt]),
        regime: args.regime.or(file.regime).unwrap_or(Regime::Limited),
        budget: args.budget.or(file.budget).unwrap_or(200),
        max_steps: args.max_steps.or(file.max_steps),
        beta_min: args.beta_min.or(file.beta_min),
        beta_upper: args.beta_upper.or(file.beta_upper),
        train_to_cap: args.train_to_cap || file.train_to_cap.unwrap_or(false),
        out: args.out.or(file.out).unwrap_or_else(|| PathBuf::from("runs")),
    };
    let plan = spec.plan()?;
    let workers = worker_count()?;
    log::info!("{} jobs on {workers} worker(s) into {}", plan.jobs.len(), spec.out.display());
    let rows = execute(&plan, workers)?;
    let failed = rows.iter().filter(|r| !r.ok()).count();
    for r in &rows {
        println!(
            "{}-{}-n{}-s{}\t{}\tbest {}",
            r.solver,
            r.problem,
            r.n,
            r.seed,
            r.status,
            r.final_best_f.map_or("-".to_string(), |f| f.to_string())
        );
    }
    if failed > 0 {
        return Err(HarnessError::RunsFailed(failed));
    }
    Ok(())
}

fn report(dir: &Path) -> Result<(), HarnessError> {
    let report = build_report(dir)?;
    write_report(dir, &report)?;
    for s in &report.summary {
        println!(
            "{}\t{}\tn={}\truns={}\tmean={:.4}\tstd={:.4}\tmin={:.4}",
            s.solver, s.problem, s.n, s.runs, s.mean, s.std, s.min
        );
    }
    for f in &report.fits {
        println!("{}\tscaling slope {:.3}", f.solver, f.slope);
    }
    Ok(())
}

fn analyze_cmd(args: AnalyzeArgs) -> Result<(), HarnessError> {
    let summary = analyze(&AnalyzeOptions {
        checkpoint: args.checkpoint,
        instance: args.instance,
        beta: args.beta,
        samples: args.samples,
        alpha: args.alpha,
        path_length: args.path_length,
        seed: args.seed,
        out: args.out,
    })?;
    match summary.r {
        Some(r) => println!("r = {r:.6} over {} pairs", summary.pairs),
        None => println!("r undefined over {} pairs", summary.pairs),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Run(a) => run(a),
        Command::Report { dir } => report(&dir),
        Command::Analyze(a) => analyze_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
