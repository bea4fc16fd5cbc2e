//! Command-line interface: training runs, single solves, and the experiment
//! suites, all writing CSV / JSON-lines artifacts.

use clap::{Args, Parser, Subcommand};
use metacolloc::bench::{
    self, BenchError, ExperimentConfig, ResultRow, Variant, BENCH3D_PROBLEMS, GEOMETRY_PROBLEMS,
    SUITE_PROBLEMS,
};
use metacolloc::linalg::Precision;
use metacolloc::meta_train::{self, LossMode, TrainConfig};
use metacolloc::network::load_checkpoint;
use metacolloc::pde::{default_point_counts, make_problem, sample_points};
use metacolloc::solver::{solve_weighted, PrecisionMode, SolveReport};
use std::path::PathBuf;
use std::process::ExitCode;

/// Master seed used when neither --seed nor METACOLLOC_SEED is given.
const FALLBACK_SEED: u64 = 42;

#[derive(Parser)]
#[command(name = "metacolloc", about = "Meta-trained neural basis dictionaries for PDE collocation", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every experiment subcommand.
#[derive(Args, Clone)]
struct SharedArgs {
    /// Trained checkpoint to load the basis from.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Problem name, repeatable (e.g. poisson, kdv, poisson@lshape).
    #[arg(long = "pde")]
    pdes: Vec<String>,
    /// Basis width (defaults to the checkpoint's width).
    #[arg(long)]
    hidden: Option<usize>,
    /// Seed, repeatable; defaults to METACOLLOC_SEED or 42.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    /// Arithmetic mode: fp32, mixed, or fp64.
    #[arg(long, default_value = "fp64")]
    precision: PrecisionMode,
    /// Newton iteration budget (default: 1 linear, 64 nonlinear).
    #[arg(long)]
    newton_iters: Option<usize>,
    /// Interior collocation points (default: per-problem benchmark count).
    #[arg(long)]
    n_interior: Option<usize>,
    /// Boundary collocation points (default: per-problem benchmark count).
    #[arg(long)]
    n_boundary: Option<usize>,
    /// Output path (CSV for suites, JSON for solve).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write full solve reports as JSON lines to this path.
    #[arg(long)]
    reports: Option<PathBuf>,
    /// BLAS thread count (1 makes runs bit-reproducible).
    #[arg(long)]
    threads: Option<usize>,
    /// Exit with code 2 if any solve diverged.
    #[arg(long)]
    strict: bool,
    /// Boundary row weight in the stacked system.
    #[arg(long, default_value_t = 1.0)]
    boundary_weight: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Meta-train a basis dictionary and write a checkpoint.
    Train {
        #[arg(long, default_value_t = 128)]
        hidden: usize,
        #[arg(long, default_value_t = 1000)]
        epochs: usize,
        /// Tasks per epoch.
        #[arg(long, default_value_t = 128)]
        tasks: usize,
        #[arg(long, default_value_t = 2)]
        input_dim: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 1e-4)]
        weight_decay: f64,
        /// same_set or split.
        #[arg(long, default_value = "same_set")]
        loss_mode: String,
        /// Training arithmetic: fp32 or fp64.
        #[arg(long, default_value = "fp64")]
        precision: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Checkpoint output path.
        #[arg(long)]
        out: PathBuf,
        /// Training-curve CSV path (defaults to OUT with a .csv extension).
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Solve one PDE with a trained basis and print the result row.
    Solve(SharedArgs),
    /// Six-PDE benchmark suite with the full basis.
    Suite(SharedArgs),
    /// Branch and baseline ablations over the suite.
    Ablate(SharedArgs),
    /// fp32 / mixed / fp64 comparison over the suite.
    Precision(SharedArgs),
    /// Newton-budget sweep on the nonlinear problems.
    SweepIterations(SharedArgs),
    /// Function-fit vs Laplacian error across target frequencies.
    SweepFrequency {
        #[command(flatten)]
        shared: SharedArgs,
        /// Comma-separated frequency list.
        #[arg(long, default_value = "1,2,4,8,16,32,64")]
        freqs: String,
    },
    /// L-shape and annulus geometry suite.
    Geometry(SharedArgs),
    /// Three-dimensional problem suite.
    Bench3d(SharedArgs),
    /// Per-phase wall-time medians over repeated solves.
    BenchTiming {
        #[command(flatten)]
        shared: SharedArgs,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn default_seeds(seeds: &[u64]) -> Vec<u64> {
    if !seeds.is_empty() {
        return seeds.to_vec();
    }
    let master = std::env::var("METACOLLOC_SEED")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(FALLBACK_SEED);
    vec![master]
}

fn apply_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        bench::set_blas_threads(n);
    }
}

fn experiment_config(tag: &str, problems: &[String], shared: &SharedArgs) -> ExperimentConfig {
    let mut config = ExperimentConfig::new(tag, &[], &default_seeds(&shared.seeds));
    config.problems = problems.to_vec();
    config.hidden = shared.hidden.into_iter().collect();
    config.precisions = vec![shared.precision];
    config.newton_iters = vec![shared.newton_iters];
    config.n_interior = shared.n_interior;
    config.n_boundary = shared.n_boundary;
    config.checkpoint = shared.checkpoint.clone();
    config.boundary_weight = shared.boundary_weight;
    config
}

fn problems_or(shared: &SharedArgs, default: &[&str]) -> Vec<String> {
    if shared.pdes.is_empty() {
        default.iter().map(|s| s.to_string()).collect()
    } else {
        shared.pdes.clone()
    }
}

/// Writes rows (and optional reports), prints a short summary, and applies
/// strict-mode divergence checking.
fn finish(
    rows: Vec<ResultRow>,
    reports: Vec<SolveReport>,
    shared: &SharedArgs,
) -> Result<ExitCode, BenchError> {
    if let Some(out) = &shared.out {
        bench::write_result_csv(&rows, out)?;
        eprintln!("wrote {} rows to {}", rows.len(), out.display());
    } else {
        let mut writer = csv::Writer::from_writer(std::io::stdout());
        for row in &rows {
            writer.serialize(row)?;
        }
        writer.flush()?;
    }
    if let Some(path) = &shared.reports {
        bench::write_reports_jsonl(&reports, path)?;
    }
    let diverged = rows.iter().filter(|r| r.status == "diverged").count();
    if diverged > 0 {
        eprintln!("{diverged} solve(s) diverged");
        if shared.strict {
            return Ok(ExitCode::from(2));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode, BenchError> {
    match cli.command {
        Command::Train {
            hidden,
            epochs,
            tasks,
            input_dim,
            lr,
            weight_decay,
            loss_mode,
            precision,
            seed,
            out,
            log,
            threads,
        } => {
            apply_threads(threads);
            let master = default_seeds(&seed.into_iter().collect::<Vec<_>>())[0];
            let mut config = TrainConfig::defaults(hidden, input_dim, master);
            config.epochs = epochs;
            config.tasks_per_epoch = tasks;
            config.learning_rate = lr;
            config.weight_decay = weight_decay;
            config.loss_mode = match loss_mode.as_str() {
                "same_set" => LossMode::SameSet,
                "split" => LossMode::Split,
                other => {
                    return Err(BenchError::Config(format!(
                        "unknown loss mode '{other}' (expected same_set or split)"
                    )))
                }
            };
            config.precision = match precision.as_str() {
                "fp32" => Precision::Fp32,
                "fp64" => Precision::Fp64,
                other => {
                    return Err(BenchError::Config(format!(
                        "unknown training precision '{other}' (expected fp32 or fp64)"
                    )))
                }
            };
            let log_path = log.unwrap_or_else(|| out.with_extension("csv"));
            let (_, train_log) = meta_train::train(&config, Some(&out), Some(&log_path))?;
            let last = train_log.epochs.last().expect("at least one epoch");
            eprintln!(
                "trained H={hidden} for {epochs} epochs: final mean loss {:.6e} \
                 ({:.1}s); checkpoint {}",
                last.mean_loss,
                last.wall_seconds,
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Solve(shared) => {
            apply_threads(shared.threads);
            let ckpt = shared
                .checkpoint
                .as_ref()
                .ok_or_else(|| BenchError::Config("solve requires --checkpoint".into()))?;
            let pdes = problems_or(&shared, &["poisson"]);
            if pdes.len() != 1 {
                return Err(BenchError::Config("solve takes exactly one --pde".into()));
            }
            let problem = make_problem(&pdes[0])?;
            let params = load_checkpoint(ckpt)?;
            if params.input_dim() != problem.input_dim {
                return Err(BenchError::Config(format!(
                    "checkpoint input_dim {} does not match {}",
                    params.input_dim(),
                    problem.name
                )));
            }
            let seed = default_seeds(&shared.seeds)[0];
            let (default_int, default_bd) = default_point_counts(&problem);
            let mut stream = metacolloc::grf::task_stream(seed, 0, 0);
            let points = sample_points(
                &problem,
                shared.n_interior.unwrap_or(default_int),
                shared.n_boundary.unwrap_or(default_bd),
                &mut stream,
            );
            let report = solve_weighted(
                &problem,
                &params,
                &points,
                shared.newton_iters,
                shared.precision,
                shared.boundary_weight,
            );
            match report {
                Ok(report) => {
                    println!("{}", serde_json::to_string(&report)?);
                    if let Some(out) = &shared.out {
                        bench::write_reports_jsonl(std::slice::from_ref(&report), out)?;
                    }
                    Ok(ExitCode::SUCCESS)
                }
                Err(metacolloc::solver::SolverError::DivergedSolve { iteration }) => {
                    eprintln!("solve diverged at iteration {iteration}");
                    Ok(ExitCode::from(if shared.strict { 2 } else { 0 }))
                }
                Err(e) => Err(e.into()),
            }
        }
        Command::Suite(shared) => {
            apply_threads(shared.threads);
            let problems = problems_or(&shared, &SUITE_PROBLEMS);
            let config = experiment_config("suite", &problems, &shared);
            let mut reports = Vec::new();
            let rows = bench::run_suite(&config, Some(&mut reports))?;
            finish(rows, reports, &shared)
        }
        Command::Ablate(shared) => {
            apply_threads(shared.threads);
            let problems = problems_or(&shared, &SUITE_PROBLEMS);
            let mut config = experiment_config("ablate", &problems, &shared);
            config.variants = vec![
                Variant::Full,
                Variant::LowOnly,
                Variant::HighOnly,
                Variant::NonLearning,
                Variant::RandomFeatures,
            ];
            if config.hidden.is_empty() {
                // Untrained controls need an explicit width: take it from the
                // checkpoint so every variant runs at equal H.
                let ckpt = config.checkpoint.as_ref().ok_or_else(|| {
                    BenchError::Config("ablate requires --checkpoint".into())
                })?;
                config.hidden = vec![load_checkpoint(ckpt)?.hidden()];
            }
            let mut reports = Vec::new();
            let rows = bench::run_suite(&config, Some(&mut reports))?;
            finish(rows, reports, &shared)
        }
        Command::Precision(shared) => {
            apply_threads(shared.threads);
            let problems = problems_or(&shared, &SUITE_PROBLEMS);
            let config = experiment_config("precision", &problems, &shared);
            let mut reports = Vec::new();
            let rows = bench::precision_study(&config, Some(&mut reports))?;
            finish(rows, reports, &shared)
        }
        Command::SweepIterations(shared) => {
            apply_threads(shared.threads);
            let problems = if shared.pdes.is_empty() { Vec::new() } else { shared.pdes.clone() };
            let mut config = experiment_config("itersweep", &problems, &shared);
            if shared.seeds.is_empty() {
                // Convention for this study: five seeds per cell.
                config.seeds = vec![1, 2, 3, 4, 5];
            }
            let mut reports = Vec::new();
            let rows = bench::iteration_sweep(&config, Some(&mut reports))?;
            finish(rows, reports, &shared)
        }
        Command::SweepFrequency { shared, freqs } => {
            apply_threads(shared.threads);
            let ckpt = shared.checkpoint.as_ref().ok_or_else(|| {
                BenchError::Config("sweep-frequency requires --checkpoint".into())
            })?;
            let params = load_checkpoint(ckpt)?;
            let frequencies: Vec<f64> = freqs
                .split(',')
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|_| {
                        BenchError::Config(format!("bad frequency '{s}' in --freqs"))
                    })
                })
                .collect::<Result<_, _>>()?;
            let rows = bench::frequency_sweep(&params, &frequencies)?;
            match &shared.out {
                Some(out) => {
                    bench::write_frequency_csv(&rows, out)?;
                    eprintln!("wrote {} rows to {}", rows.len(), out.display());
                }
                None => {
                    for row in &rows {
                        println!("{}", serde_json::to_string(row)?);
                    }
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Geometry(shared) => {
            apply_threads(shared.threads);
            let problems = problems_or(&shared, &GEOMETRY_PROBLEMS);
            let config = experiment_config("geometry", &problems, &shared);
            let mut reports = Vec::new();
            let rows = bench::run_suite(&config, Some(&mut reports))?;
            finish(rows, reports, &shared)
        }
        Command::Bench3d(shared) => {
            apply_threads(shared.threads);
            let problems = problems_or(&shared, &BENCH3D_PROBLEMS);
            let config = experiment_config("bench3d", &problems, &shared);
            let mut reports = Vec::new();
            let rows = bench::run_suite(&config, Some(&mut reports))?;
            finish(rows, reports, &shared)
        }
        Command::BenchTiming { shared, repeats } => {
            apply_threads(shared.threads);
            let problems = problems_or(&shared, &SUITE_PROBLEMS);
            let config = experiment_config("timing", &problems, &shared);
            let rows = bench::timing_bench(&config, repeats)?;
            finish(rows, Vec::new(), &shared)
        }
    }
}
