//! Experiment harness: ablations, precision study, iteration sweep, 3D and
//! geometry suites, timing, and the frequency-sweep diagnostic.
//!
//! Every experiment reduces to the same loop: derive a basis for the cell
//! (load the trained checkpoint, zero one branch of it, or build an untrained
//! control), draw seed-keyed collocation points, run the solver, and emit one
//! [`ResultRow`] per (problem, width, variant, precision, K, seed) cell plus
//! a mean/confidence-interval summary per cell group. Rows stream to
//! RFC-4180 CSV; full solve reports can additionally stream to JSON lines.
//!
//! Divergent solves are recorded as rows with `status = "diverged"` and empty
//! numeric columns rather than aborting the experiment; the CLI's strict mode
//! turns their presence into a non-zero exit afterwards.

use crate::grf::{task_batch, GRFConfig, GrfError};
use crate::linalg::{lstsq, DenseMatrix, LinalgError};
use crate::meta_train::MetaTrainError;
use crate::network::{
    forward, forward_jets, init_params, load_checkpoint, BasisParams, NetworkError,
};
use crate::pde::{default_point_counts, make_problem, sample_points, PDEProblem, PdeError};
use crate::solver::{solve_weighted, PrecisionMode, SolveReport, SolverError};
use ndarray::{Array1, Array2};
use rand_chacha::{rand_core::SeedableRng, ChaCha12Rng};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

/// Shape-parameter grid searched by the non-learning control variant.
pub const SIGMA_GRID: [f64; 8] = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0];
/// Validation tasks scored per grid point when tuning the shape parameter.
pub const SIGMA_VALIDATION_TASKS: usize = 32;
/// Fit points used by the frequency sweep.
pub const FREQ_FIT_POINTS: usize = 3000;
/// Held-out points scored by the frequency sweep.
pub const FREQ_HOLDOUT_POINTS: usize = 2000;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Pde(#[from] PdeError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Grf(#[from] GrfError),
    #[error(transparent)]
    Train(#[from] MetaTrainError),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Basis variants compared by the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// The trained checkpoint as-is.
    Full,
    /// Checkpoint with the high-frequency branch zeroed.
    LowOnly,
    /// Checkpoint with the low-frequency branch zeroed.
    HighOnly,
    /// Fresh untrained network, first-layer weights scaled by a shape
    /// parameter tuned on held-out GRF tasks.
    NonLearning,
    /// Fresh untrained network, used verbatim.
    RandomFeatures,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Full => "full",
            Variant::LowOnly => "low_only",
            Variant::HighOnly => "high_only",
            Variant::NonLearning => "non_learning",
            Variant::RandomFeatures => "random_features",
        })
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Variant, String> {
        match s {
            "full" => Ok(Variant::Full),
            "low_only" => Ok(Variant::LowOnly),
            "high_only" => Ok(Variant::HighOnly),
            "non_learning" => Ok(Variant::NonLearning),
            "random_features" => Ok(Variant::RandomFeatures),
            _ => Err(format!(
                "unknown variant '{s}' (expected full, low_only, high_only, non_learning, \
                 or random_features)"
            )),
        }
    }
}

/// One experiment specification, expanded into a cell grid by [`run_suite`].
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// Experiment tag recorded in every row.
    pub experiment: String,
    /// Problem names (CLI syntax, geometry suffixes allowed).
    pub problems: Vec<String>,
    pub variants: Vec<Variant>,
    /// Basis widths; empty means "use the checkpoint's width".
    pub hidden: Vec<usize>,
    pub seeds: Vec<u64>,
    pub precisions: Vec<PrecisionMode>,
    /// Newton budgets; `None` entries select the per-problem default.
    pub newton_iters: Vec<Option<usize>>,
    /// Overrides for the per-problem default point counts.
    pub n_interior: Option<usize>,
    pub n_boundary: Option<usize>,
    pub checkpoint: Option<PathBuf>,
    pub boundary_weight: f64,
}

impl ExperimentConfig {
    /// A single-variant, fp64, default-K configuration over `problems`.
    pub fn new(experiment: &str, problems: &[&str], seeds: &[u64]) -> ExperimentConfig {
        ExperimentConfig {
            experiment: experiment.to_string(),
            problems: problems.iter().map(|s| s.to_string()).collect(),
            variants: vec![Variant::Full],
            hidden: Vec::new(),
            seeds: seeds.to_vec(),
            precisions: vec![PrecisionMode::Fp64],
            newton_iters: vec![None],
            n_interior: None,
            n_boundary: None,
            checkpoint: None,
            boundary_weight: 1.0,
        }
    }

    fn validate(&self) -> Result<(), BenchError> {
        if self.problems.is_empty() {
            return Err(BenchError::Config("no problems requested".into()));
        }
        if self.seeds.is_empty() {
            return Err(BenchError::Config("no seeds requested".into()));
        }
        if self.variants.is_empty() || self.precisions.is_empty() || self.newton_iters.is_empty()
        {
            return Err(BenchError::Config(
                "variants, precisions, and newton_iters must be non-empty".into(),
            ));
        }
        let needs_checkpoint = self
            .variants
            .iter()
            .any(|v| matches!(v, Variant::Full | Variant::LowOnly | Variant::HighOnly));
        if needs_checkpoint && self.checkpoint.is_none() {
            return Err(BenchError::Config(
                "variant requires a trained checkpoint (--checkpoint)".into(),
            ));
        }
        Ok(())
    }
}

/// One result record; `status` is "ok", "diverged", or "summary".
///
/// Numeric columns are empty (not NaN) for diverged rows. Summary rows carry
/// the across-seed mean in `rmse` and the 95% confidence half-width in
/// `extra`, with `seed` fixed at 0.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub variant: String,
    pub pde: String,
    pub hidden: usize,
    pub seed: u64,
    pub precision: String,
    pub newton_iters: usize,
    pub status: String,
    pub rmse: Option<f64>,
    pub cond: Option<f64>,
    pub solve_seconds: Option<f64>,
    pub train_seconds: f64,
    /// JSON object with experiment-specific fields (σ*, ω, CI width, …).
    pub extra: String,
}

/// Limits BLAS to `n` threads; `1` makes solves bit-reproducible.
pub fn set_blas_threads(n: usize) {
    extern "C" {
        fn openblas_set_num_threads(num: std::os::raw::c_int);
    }
    unsafe { openblas_set_num_threads(n.max(1) as std::os::raw::c_int) };
}

/// Half-width of the two-sided 95% t-interval for the mean of `samples`:
/// t₀.₉₇₅,n−1 · s / √n. `None` below two samples.
pub fn ci_half_width(samples: &[f64]) -> Option<f64> {
    let n = samples.len();
    if n < 2 {
        return None;
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("valid dof")
        .inverse_cdf(0.975);
    Some(t * var.sqrt() / (n as f64).sqrt())
}

/// Smallest grid σ attaining the minimum loss (ties go to the smaller σ).
fn select_sigma(grid_losses: &[(f64, f64)]) -> f64 {
    let mut best = grid_losses[0];
    for &(sigma, loss) in &grid_losses[1..] {
        if loss < best.1 {
            best = (sigma, loss);
        }
    }
    best.0
}

/// Mean same-set least-squares MSE of `params` over held-out GRF tasks.
///
/// Validation tasks live at epoch index `usize::MAX` of the seed's task
/// stream, which no training run ever reaches.
fn validation_mse(params: &BasisParams, grf: &GRFConfig, seed: u64) -> Result<f64, BenchError> {
    let mut total = 0.0;
    for t in 0..SIGMA_VALIDATION_TASKS {
        let task = task_batch(grf, seed, usize::MAX, t);
        let phi = forward(params, task.x_train.view())?;
        let fit = lstsq(&phi, task.y_train.as_slice().expect("contiguous"))?;
        let n = task.y_train.len() as f64;
        total += fit.residual_norm * fit.residual_norm / n;
    }
    Ok(total / SIGMA_VALIDATION_TASKS as f64)
}

/// Derived basis for one cell plus its derivation wall time and metadata.
#[derive(Debug)]
pub struct VariantBasis {
    pub params: BasisParams,
    pub derive_seconds: f64,
    pub extra: serde_json::Value,
}

/// Builds the basis a variant uses: the checkpoint (possibly with one branch
/// zeroed) or a fresh untrained network. Never touches the checkpoint file
/// beyond reading it.
pub fn make_variant_basis(
    variant: Variant,
    hidden: Option<usize>,
    input_dim: usize,
    seed: u64,
    checkpoint: Option<&Path>,
    grf: &GRFConfig,
) -> Result<VariantBasis, BenchError> {
    let t0 = Instant::now();
    let from_checkpoint = || -> Result<BasisParams, BenchError> {
        let path = checkpoint.ok_or_else(|| {
            BenchError::Config(format!("variant {variant} requires a checkpoint"))
        })?;
        let params = load_checkpoint(path)?;
        if params.input_dim() != input_dim {
            return Err(BenchError::Config(format!(
                "checkpoint input_dim {} does not match problem dimension {input_dim}",
                params.input_dim()
            )));
        }
        if let Some(h) = hidden {
            if params.hidden() != h {
                return Err(BenchError::Config(format!(
                    "checkpoint width {} does not match requested width {h}",
                    params.hidden()
                )));
            }
        }
        Ok(params)
    };

    let (params, extra) = match variant {
        Variant::Full => (from_checkpoint()?, serde_json::json!({})),
        Variant::LowOnly => {
            let mut p = from_checkpoint()?;
            p.zero_high_branch();
            (p, serde_json::json!({}))
        }
        Variant::HighOnly => {
            let mut p = from_checkpoint()?;
            p.zero_low_branch();
            (p, serde_json::json!({}))
        }
        Variant::RandomFeatures => {
            let h = hidden
                .ok_or_else(|| BenchError::Config("random_features needs a width".into()))?;
            (init_params(input_dim, h, seed)?, serde_json::json!({}))
        }
        Variant::NonLearning => {
            let h = hidden
                .ok_or_else(|| BenchError::Config("non_learning needs a width".into()))?;
            let base = init_params(input_dim, h, seed)?;
            let mut grid_losses = Vec::with_capacity(SIGMA_GRID.len());
            for &sigma in &SIGMA_GRID {
                let mut scaled = base.clone();
                scaled.scale_first_layer(sigma);
                grid_losses.push((sigma, validation_mse(&scaled, grf, seed)?));
            }
            let sigma_star = select_sigma(&grid_losses);
            let mut tuned = base;
            tuned.scale_first_layer(sigma_star);
            (tuned, serde_json::json!({ "sigma_star": sigma_star }))
        }
    };
    Ok(VariantBasis { params, derive_seconds: t0.elapsed().as_secs_f64(), extra })
}

/// Collocation point stream for one (seed, problem) cell.
fn solve_stream(seed: u64, problem_name: &str) -> ChaCha12Rng {
    // FNV-1a folds the problem name so every problem gets its own stream.
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in problem_name.bytes() {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&hash.to_le_bytes());
    key[16..].copy_from_slice(b"collocationpts!!");
    ChaCha12Rng::from_seed(key)
}

fn widths_for(config: &ExperimentConfig) -> Result<Vec<Option<usize>>, BenchError> {
    if config.hidden.is_empty() {
        Ok(vec![None])
    } else {
        Ok(config.hidden.iter().map(|h| Some(*h)).collect())
    }
}

/// Runs the cell grid and returns per-seed rows followed by per-cell
/// summaries. `reports` collects full solve reports when provided.
pub fn run_suite(
    config: &ExperimentConfig,
    reports: Option<&mut Vec<SolveReport>>,
) -> Result<Vec<ResultRow>, BenchError> {
    config.validate()?;
    let mut rows = Vec::new();
    let mut report_sink = reports;
    let mut basis_cache: HashMap<(Variant, Option<usize>, usize, u64), (BasisParams, f64, String)> =
        HashMap::new();

    for problem_name in &config.problems {
        let problem = make_problem(problem_name)?;
        let (default_int, default_bd) = default_point_counts(&problem);
        let n_int = config.n_interior.unwrap_or(default_int);
        let n_bd = config.n_boundary.unwrap_or(default_bd);
        for hidden in widths_for(config)? {
            for &variant in &config.variants {
                for &precision in &config.precisions {
                    for &k in &config.newton_iters {
                        for &seed in &config.seeds {
                            let key = (variant, hidden, problem.input_dim, seed);
                            if !basis_cache.contains_key(&key) {
                                let grf = GRFConfig::defaults(problem.input_dim);
                                let vb = make_variant_basis(
                                    variant,
                                    hidden,
                                    problem.input_dim,
                                    seed,
                                    config.checkpoint.as_deref(),
                                    &grf,
                                )?;
                                basis_cache.insert(
                                    key,
                                    (vb.params, vb.derive_seconds, vb.extra.to_string()),
                                );
                            }
                            let (params, derive_seconds, extra) = &basis_cache[&key];

                            let mut stream = solve_stream(seed, problem_name);
                            let points = sample_points(&problem, n_int, n_bd, &mut stream);
                            let row = solve_cell(
                                config,
                                &problem,
                                params,
                                &points,
                                variant,
                                precision,
                                k,
                                seed,
                                *derive_seconds,
                                extra,
                                &mut report_sink,
                            )?;
                            rows.push(row);
                        }
                    }
                }
            }
        }
    }

    let summaries = cell_summaries(&rows);
    rows.extend(summaries);
    Ok(rows)
}

#[allow(clippy::too_many_arguments)]
fn solve_cell(
    config: &ExperimentConfig,
    problem: &PDEProblem,
    params: &BasisParams,
    points: &crate::pde::CollocationPoints,
    variant: Variant,
    precision: PrecisionMode,
    k: Option<usize>,
    seed: u64,
    derive_seconds: f64,
    extra: &str,
    reports: &mut Option<&mut Vec<SolveReport>>,
) -> Result<ResultRow, BenchError> {
    let hidden = params.hidden();
    let base = ResultRow {
        experiment: config.experiment.clone(),
        variant: variant.to_string(),
        pde: problem.name.clone(),
        hidden,
        seed,
        precision: precision.to_string(),
        newton_iters: crate::solver::effective_iterations(problem, k),
        status: "ok".into(),
        rmse: None,
        cond: None,
        solve_seconds: None,
        train_seconds: derive_seconds,
        extra: extra.to_string(),
    };
    match solve_weighted(problem, params, points, k, precision, config.boundary_weight) {
        Ok(report) => {
            let total = report.timings.basis_eval_seconds
                + report.timings.assembly_seconds
                + report.timings.solve_seconds;
            let row = ResultRow {
                rmse: Some(report.rmse),
                cond: Some(report.cond),
                solve_seconds: Some(total),
                newton_iters: report.newton_iters,
                ..base
            };
            if let Some(sink) = reports.as_deref_mut() {
                sink.push(report);
            }
            Ok(row)
        }
        Err(SolverError::DivergedSolve { iteration }) => Ok(ResultRow {
            status: "diverged".into(),
            extra: serde_json::json!({ "diverged_at": iteration }).to_string(),
            ..base
        }),
        Err(e) => Err(e.into()),
    }
}

/// Aggregates `rows` into one mean/CI summary row per
/// (experiment, variant, pde, hidden, precision, K) cell group.
pub fn cell_summaries(rows: &[ResultRow]) -> Vec<ResultRow> {
    let mut groups: Vec<(String, Vec<&ResultRow>)> = Vec::new();
    for row in rows.iter().filter(|r| r.status == "ok") {
        let key = format!(
            "{}|{}|{}|{}|{}|{}",
            row.experiment, row.variant, row.pde, row.hidden, row.precision, row.newton_iters
        );
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, members)) => members.push(row),
            None => groups.push((key, vec![row])),
        }
    }
    groups
        .into_iter()
        .map(|(_, members)| {
            let samples: Vec<f64> = members.iter().filter_map(|r| r.rmse).collect();
            let mean = samples.iter().sum::<f64>() / samples.len() as f64;
            let half = ci_half_width(&samples);
            let first = members[0];
            ResultRow {
                experiment: first.experiment.clone(),
                variant: first.variant.clone(),
                pde: first.pde.clone(),
                hidden: first.hidden,
                seed: 0,
                precision: first.precision.clone(),
                newton_iters: first.newton_iters,
                status: "summary".into(),
                rmse: Some(mean),
                cond: None,
                solve_seconds: None,
                train_seconds: 0.0,
                extra: serde_json::json!({
                    "ci_half_width": half,
                    "n_seeds": samples.len(),
                })
                .to_string(),
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Frequency sweep.
// ---------------------------------------------------------------------------

/// One frequency-sweep record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrequencyRow {
    pub omega: f64,
    /// Function-fit error on held-out points.
    pub rmse_u: f64,
    /// Laplacian error of the same fit on the same held-out points.
    pub rmse_lap: f64,
}

/// Least-squares fit of the target against Φ and the two errors. Split out
/// so manufactured dictionaries can be scored without a network.
pub fn frequency_fit_score(
    phi_fit: &Array2<f64>,
    u_fit: &[f64],
    phi_hold: &Array2<f64>,
    lap_hold: &Array2<f64>,
    u_hold: &[f64],
    lap_exact: &[f64],
) -> Result<(f64, f64), BenchError> {
    let fit = lstsq(&DenseMatrix::from_array_f64(phi_fit.clone()), u_fit)?;
    let w = Array1::from_iter(fit.solution.iter().copied());
    let pred_u = phi_hold.dot(&w);
    let pred_lap = lap_hold.dot(&w);
    let n = u_hold.len() as f64;
    let rmse_u =
        pred_u.iter().zip(u_hold).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n;
    let rmse_lap =
        pred_lap.iter().zip(lap_exact).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n;
    Ok((rmse_u.sqrt(), rmse_lap.sqrt()))
}

/// For each ω: fit u_ω(x, y) = sin(ωπx)sin(ωπy) on Φ at uniform points
/// (pure function fit, no PDE), then score the fit and its Laplacian
/// (Φ_xx + Φ_yy)·w against the analytic Δu_ω = −2ω²π²·u_ω on held-out
/// points.
pub fn frequency_sweep(
    params: &BasisParams,
    frequencies: &[f64],
) -> Result<Vec<FrequencyRow>, BenchError> {
    if params.input_dim() != 2 {
        return Err(BenchError::Config("frequency sweep needs a 2-D basis".into()));
    }
    let mut fit_rng = ChaCha12Rng::from_seed(*b"frequency-sweep--fit-points-----");
    let mut hold_rng = ChaCha12Rng::from_seed(*b"frequency-sweep--holdout-points-");
    let sample = |rng: &mut ChaCha12Rng, n: usize| -> Array2<f64> {
        use rand::Rng;
        Array2::from_shape_fn((n, 2), |_| rng.random::<f64>())
    };
    let fit_pts = sample(&mut fit_rng, FREQ_FIT_POINTS);
    let hold_pts = sample(&mut hold_rng, FREQ_HOLDOUT_POINTS);

    let phi_fit = forward(params, fit_pts.view())?.to_f64_array();
    let phi_hold = forward(params, hold_pts.view())?.to_f64_array();
    let dxx = forward_jets(params, hold_pts.view(), 0, 2)?.derivs[1].to_f64_array();
    let dyy = forward_jets(params, hold_pts.view(), 1, 2)?.derivs[1].to_f64_array();
    let lap_hold = &dxx + &dyy;

    let pi = std::f64::consts::PI;
    let target = |pts: &Array2<f64>, omega: f64| -> Vec<f64> {
        pts.rows()
            .into_iter()
            .map(|r| (omega * pi * r[0]).sin() * (omega * pi * r[1]).sin())
            .collect()
    };

    let mut rows = Vec::with_capacity(frequencies.len());
    for &omega in frequencies {
        let u_fit = target(&fit_pts, omega);
        let u_hold = target(&hold_pts, omega);
        let lap_exact: Vec<f64> =
            u_hold.iter().map(|u| -2.0 * omega * omega * pi * pi * u).collect();
        let (rmse_u, rmse_lap) =
            frequency_fit_score(&phi_fit, &u_fit, &phi_hold, &lap_hold, &u_hold, &lap_exact)?;
        rows.push(FrequencyRow { omega, rmse_u, rmse_lap });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Derived studies.
// ---------------------------------------------------------------------------

/// The six benchmark problems of the 2-D suite.
pub const SUITE_PROBLEMS: [&str; 6] =
    ["poisson", "helmholtz", "varcoeff", "highfreq", "sinegordon", "kdv"];
/// The 3-D problems.
pub const BENCH3D_PROBLEMS: [&str; 3] = ["poisson3d", "burgers3d", "allencahn3d"];
/// The non-rectangular geometry problems.
pub const GEOMETRY_PROBLEMS: [&str; 2] = ["poisson@lshape", "poisson@annulus"];
/// Newton budgets swept by the iteration study.
pub const ITERATION_GRID: [usize; 10] = [1, 2, 4, 8, 16, 32, 64, 128, 256, 512];

/// Runs the suite once per precision mode (fp32, mixed, fp64).
pub fn precision_study(
    base: &ExperimentConfig,
    reports: Option<&mut Vec<SolveReport>>,
) -> Result<Vec<ResultRow>, BenchError> {
    let mut config = base.clone();
    config.experiment = "precision".into();
    config.precisions =
        vec![PrecisionMode::Fp32, PrecisionMode::Mixed, PrecisionMode::Fp64];
    run_suite(&config, reports)
}

/// Sweeps sinegordon and kdv over the Newton budget grid.
pub fn iteration_sweep(
    base: &ExperimentConfig,
    reports: Option<&mut Vec<SolveReport>>,
) -> Result<Vec<ResultRow>, BenchError> {
    let mut config = base.clone();
    config.experiment = "itersweep".into();
    if config.problems.is_empty() {
        config.problems = vec!["sinegordon".into(), "kdv".into()];
    }
    config.newton_iters = ITERATION_GRID.iter().map(|k| Some(*k)).collect();
    run_suite(&config, reports)
}

/// Median of already-collected samples; NaN on empty input.
fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite timings"));
    let mid = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[mid]
    } else {
        0.5 * (xs[mid - 1] + xs[mid])
    }
}

/// Runs `repeats` solves per problem and reports per-phase median wall times
/// in the `extra` column.
pub fn timing_bench(
    base: &ExperimentConfig,
    repeats: usize,
) -> Result<Vec<ResultRow>, BenchError> {
    if repeats == 0 {
        return Err(BenchError::Config("timing needs at least one repeat".into()));
    }
    let mut config = base.clone();
    config.experiment = "timing".into();
    config.validate()?;
    let mut rows = Vec::new();
    for problem_name in &config.problems {
        let problem = make_problem(problem_name)?;
        let grf = GRFConfig::defaults(problem.input_dim);
        let vb = make_variant_basis(
            config.variants[0],
            config.hidden.first().copied(),
            problem.input_dim,
            config.seeds[0],
            config.checkpoint.as_deref(),
            &grf,
        )?;
        let (default_int, default_bd) = default_point_counts(&problem);
        let n_int = config.n_interior.unwrap_or(default_int);
        let n_bd = config.n_boundary.unwrap_or(default_bd);

        let mut basis_eval = Vec::with_capacity(repeats);
        let mut assembly = Vec::with_capacity(repeats);
        let mut solve_phase = Vec::with_capacity(repeats);
        let mut last_report = None;
        for rep in 0..repeats {
            let mut stream = solve_stream(config.seeds[0].wrapping_add(rep as u64), problem_name);
            let points = sample_points(&problem, n_int, n_bd, &mut stream);
            let report = solve_weighted(
                &problem,
                &vb.params,
                &points,
                config.newton_iters[0],
                config.precisions[0],
                config.boundary_weight,
            )?;
            basis_eval.push(report.timings.basis_eval_seconds);
            assembly.push(report.timings.assembly_seconds);
            solve_phase.push(report.timings.solve_seconds);
            last_report = Some(report);
        }
        let report = last_report.expect("repeats ≥ 1");
        let med_eval = median(basis_eval);
        let med_assembly = median(assembly);
        let med_solve = median(solve_phase);
        rows.push(ResultRow {
            experiment: config.experiment.clone(),
            variant: config.variants[0].to_string(),
            pde: problem.name.clone(),
            hidden: vb.params.hidden(),
            seed: config.seeds[0],
            precision: config.precisions[0].to_string(),
            newton_iters: report.newton_iters,
            status: "ok".into(),
            rmse: Some(report.rmse),
            cond: Some(report.cond),
            solve_seconds: Some(med_eval + med_assembly + med_solve),
            train_seconds: vb.derive_seconds,
            extra: serde_json::json!({
                "median_basis_eval_seconds": med_eval,
                "median_assembly_seconds": med_assembly,
                "median_solve_seconds": med_solve,
                "repeats": repeats,
            })
            .to_string(),
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Output sinks.
// ---------------------------------------------------------------------------

/// Writes rows as RFC-4180 CSV with a header row.
pub fn write_result_csv(rows: &[ResultRow], path: &Path) -> Result<(), BenchError> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Writes frequency-sweep rows as CSV. A leading `#` comment documents that
/// the target family and point protocol are this implementation's
/// reconstruction of the sweep, since no canonical protocol exists.
pub fn write_frequency_csv(rows: &[FrequencyRow], path: &Path) -> Result<(), BenchError> {
    let mut file = std::fs::File::create(path)?;
    writeln!(
        file,
        "# protocol: fit u_omega(x,y)=sin(omega*pi*x)*sin(omega*pi*y) on {FREQ_FIT_POINTS} \
         uniform points; errors scored on {FREQ_HOLDOUT_POINTS} held-out points"
    )?;
    let mut writer = csv::Writer::from_writer(file);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Appends solve reports as JSON lines.
pub fn write_reports_jsonl(reports: &[SolveReport], path: &Path) -> Result<(), BenchError> {
    let mut file = std::fs::File::create(path)?;
    for report in reports {
        writeln!(file, "{}", serde_json::to_string(report)?)?;
    }
    Ok(())
}
