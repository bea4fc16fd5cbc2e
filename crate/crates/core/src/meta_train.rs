//! Offline meta-training of the basis dictionary.
//!
//! The loop samples one random-field task at a time, fits the task's targets
//! with the dictionary by least squares, differentiates the fit loss through
//! the solve back into the network weights, and takes one AdamW step per
//! task under a cosine learning-rate schedule. After E epochs of T tasks the
//! parameters are frozen and written as a checkpoint.
//!
//! Two loss modes:
//! - `same_set`: loss = mean squared residual of the least-squares fit on the
//!   training points themselves. Because w is the minimizer, the envelope
//!   theorem gives the exact gradient ∂loss/∂Φ = (2/n)·r·wᵀ without
//!   differentiating through the factorization.
//! - `split`: w is fit on the training block, the loss is the MSE on the
//!   held-out test block, and the gradient flows through the solve via the
//!   least-squares vector–Jacobian product. Requires Φ_train to have full
//!   column rank; a rank-deficient task falls back to the `same_set`
//!   gradient and bumps a counter.
//!
//! Determinism: tasks are keyed by (master seed, epoch, task index), the
//! optimizer is sequential, and every BLAS call has a fixed shape, so a rerun
//! with the same config and seed produces byte-identical checkpoints when
//! BLAS runs single-threaded.

use crate::grf::{self, GRFConfig, GRFTask};
use crate::linalg::{self, LinalgError, Precision, Real};
use crate::network::{self, BasisGrads, BasisParams, NetworkError};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;
use thiserror::Error;

/// Where the fit loss is evaluated; see module docs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    SameSet,
    Split,
}

impl std::fmt::Display for LossMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossMode::SameSet => "same_set",
            LossMode::Split => "split",
        })
    }
}

/// Full training configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Dictionary width H.
    pub hidden: usize,
    pub epochs: usize,
    pub tasks_per_epoch: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub loss_mode: LossMode,
    pub master_seed: u64,
    pub precision: Precision,
    pub grf: GRFConfig,
}

impl TrainConfig {
    /// Reference defaults: E = 1000 epochs of T = 128 tasks, lr 1e-3 with
    /// cosine annealing to zero, decoupled weight decay 1e-4, AdamW
    /// (0.9, 0.999, 1e-8), same-set loss, fp64.
    pub fn defaults(hidden: usize, input_dim: usize, master_seed: u64) -> TrainConfig {
        TrainConfig {
            hidden,
            epochs: 1000,
            tasks_per_epoch: 128,
            learning_rate: 1e-3,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            loss_mode: LossMode::SameSet,
            master_seed,
            precision: Precision::Fp64,
            grf: GRFConfig::defaults(input_dim),
        }
    }

    pub fn validate(&self) -> Result<(), MetaTrainError> {
        if self.epochs == 0 || self.tasks_per_epoch == 0 {
            return Err(MetaTrainError::InvalidConfig("epochs and tasks must be positive".into()));
        }
        if !(self.learning_rate >= 0.0
            && self.weight_decay >= 0.0
            && self.eps > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2))
        {
            return Err(MetaTrainError::InvalidConfig(
                "rates must be nonnegative, betas in [0,1), eps positive".into(),
            ));
        }
        self.grf.validate()?;
        Ok(())
    }
}

/// AdamW moment accumulators over the flattened parameter vector.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    m: Vec<f64>,
    v: Vec<f64>,
    /// Number of applied updates.
    pub step: u64,
}

impl OptimizerState {
    pub fn new(param_count: usize) -> OptimizerState {
        OptimizerState { m: vec![0.0; param_count], v: vec![0.0; param_count], step: 0 }
    }
}

/// Loss and parameter gradients for one task.
#[derive(Debug)]
pub struct TaskStep {
    pub loss: f64,
    pub grads: BasisGrads,
    /// True when split mode hit a rank-deficient train block and used the
    /// same-set gradient instead.
    pub used_fallback: bool,
}

/// One row of the training log.
#[derive(Debug, Clone, Serialize)]
pub struct EpochStats {
    /// 1-based epoch number.
    pub epoch: usize,
    pub mean_loss: f64,
    /// Learning rate at the first task of the epoch.
    pub lr: f64,
    /// Cumulative wall-clock seconds since training started.
    pub wall_seconds: f64,
}

/// Per-epoch statistics plus fallback accounting.
#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    pub epochs: Vec<EpochStats>,
    pub split_fallbacks: u64,
}

impl TrainLog {
    /// CSV with columns epoch, mean_loss, lr, wall_seconds.
    pub fn write_csv(&self, path: &Path) -> Result<(), MetaTrainError> {
        let mut w = csv::Writer::from_path(path).map_err(io_from_csv)?;
        w.write_record(["epoch", "mean_loss", "lr", "wall_seconds"]).map_err(io_from_csv)?;
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                format!("{:.17e}", e.mean_loss),
                format!("{:.17e}", e.lr),
                format!("{:.6}", e.wall_seconds),
            ])
            .map_err(io_from_csv)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn io_from_csv(e: csv::Error) -> MetaTrainError {
    MetaTrainError::Log(e.to_string())
}

#[derive(Debug, Error)]
pub enum MetaTrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(
        "non-finite loss {loss} at epoch {epoch}, task {task_index} \
         (task stream key: master_seed={master_seed}, epoch={epoch}, task={task_index})"
    )]
    NonFiniteLoss { epoch: usize, task_index: usize, master_seed: u64, loss: f64 },
    #[error("network: {0}")]
    Network(#[from] NetworkError),
    #[error("linear algebra: {0}")]
    Linalg(#[from] LinalgError),
    #[error("task generator: {0}")]
    Grf(#[from] crate::grf::GrfError),
    #[error("training log: {0}")]
    Log(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Cosine annealing: lr_t = 0.5·lr0·(1 + cos(π·step/total_steps)).
pub fn cosine_lr(step: usize, total_steps: usize, lr0: f64) -> f64 {
    debug_assert!(step <= total_steps);
    0.5 * lr0 * (1.0 + (std::f64::consts::PI * step as f64 / total_steps as f64).cos())
}

/// Loss and gradients for one task in the params' evaluation precision.
pub fn task_loss_and_grads(
    params: &BasisParams,
    task: &GRFTask,
    mode: LossMode,
) -> Result<TaskStep, MetaTrainError> {
    match params.precision() {
        Precision::Fp64 => task_step_nd::<f64>(params, task, mode),
        Precision::Fp32 => task_step_nd::<f32>(params, task, mode),
    }
}

fn cast_matrix<T: Real>(a: &Array2<f64>) -> Array2<T> {
    a.mapv(|x| T::from(x).expect("finite"))
}

fn cast_vector<T: Real>(a: &Array1<f64>) -> Array1<T> {
    a.mapv(|x| T::from(x).expect("finite"))
}

fn task_step_nd<T: Real>(
    params: &BasisParams,
    task: &GRFTask,
    mode: LossMode,
) -> Result<TaskStep, MetaTrainError> {
    let (low, high) = network::cast_branches::<T>(params);
    let scales = params.fourier_scales();
    let x_train = cast_matrix::<T>(&task.x_train);
    let y_train = cast_vector::<T>(&task.y_train);
    let cache_train = network::forward_cached_nd(&low, &high, scales, &x_train.view());

    match mode {
        LossMode::SameSet => {
            let (loss, gphi) =
                linalg::value_gradient_train_nd(&cache_train.output, &y_train.view())?;
            let (glow, ghigh) = network::backward_nd(&low, &high, &cache_train, &gphi.view());
            Ok(TaskStep {
                loss: loss.widen(),
                grads: network::widen_grads(glow, ghigh),
                used_fallback: false,
            })
        }
        LossMode::Split => {
            let x_test = cast_matrix::<T>(&task.x_test);
            let y_test = cast_vector::<T>(&task.y_test);
            let cache_test = network::forward_cached_nd(&low, &high, scales, &x_test.view());
            let (w, full_rank) = linalg::lstsq_train_nd(&cache_train.output, &y_train.view())?;
            let n_test = T::from(task.y_test.len()).expect("dimension fits");
            let r_test = cache_test.output.dot(&w) - &y_test;
            let loss = (r_test.iter().map(|x| *x * *x).sum::<T>() / n_test).widen();

            let two_over_n = T::from(2.0).expect("literal") / n_test;
            let vjp = if full_rank {
                let gbar = cache_test.output.t().dot(&r_test).mapv(|x| x * two_over_n);
                linalg::vjp_nd(
                    &cache_train.output.view(),
                    &y_train.view(),
                    &w.view(),
                    &gbar.view(),
                )
            } else {
                Err(LinalgError::RankDeficient { rank: 0, cols: cache_train.output.ncols() })
            };
            match vjp {
                Ok(gphi_train) => {
                    let gphi_test = linalg::outer_scaled(&r_test.view(), &w.view(), two_over_n);
                    let (mut glow, mut ghigh) =
                        network::backward_nd(&low, &high, &cache_train, &gphi_train.view());
                    let (glow_te, ghigh_te) =
                        network::backward_nd(&low, &high, &cache_test, &gphi_test.view());
                    add_branch(&mut glow, &glow_te);
                    add_branch(&mut ghigh, &ghigh_te);
                    Ok(TaskStep {
                        loss,
                        grads: network::widen_grads(glow, ghigh),
                        used_fallback: false,
                    })
                }
                Err(LinalgError::RankDeficient { .. }) => {
                    // Degenerate train block: the solve gradient is undefined,
                    // so keep the split loss value but take the envelope
                    // gradient on the train block instead.
                    let (_ss_loss, gphi) =
                        linalg::value_gradient_train_nd(&cache_train.output, &y_train.view())?;
                    let (glow, ghigh) =
                        network::backward_nd(&low, &high, &cache_train, &gphi.view());
                    Ok(TaskStep {
                        loss,
                        grads: network::widen_grads(glow, ghigh),
                        used_fallback: true,
                    })
                }
                Err(e) => Err(e.into()),
            }
        }
    }
}

fn add_branch<T: Real>(
    a: &mut network::BranchParams<T>,
    b: &network::BranchParams<T>,
) {
    for (la, lb) in [(&mut a.l1, &b.l1), (&mut a.l2, &b.l2)] {
        la.w1 += &lb.w1;
        la.b1 += &lb.b1;
        la.w2 += &lb.w2;
        la.b2 += &lb.b2;
    }
}

/// One AdamW update on the flattened vectors: decoupled weight decay
/// θ ← θ·(1 − lr_t·λ) first, then the bias-corrected moment step.
pub(crate) fn adamw_update_flat(
    theta: &mut [f64],
    g: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    step: u64,
    lr_t: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
) {
    let bc1 = 1.0 - beta1.powi(step as i32);
    let bc2 = 1.0 - beta2.powi(step as i32);
    for i in 0..theta.len() {
        theta[i] *= 1.0 - lr_t * weight_decay;
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        let mhat = m[i] / bc1;
        let vhat = v[i] / bc2;
        theta[i] -= lr_t * mhat / (vhat.sqrt() + eps);
    }
}

/// Applies one AdamW step to the dictionary parameters. The fixed Fourier
/// scales are not part of the flattened vector and cannot be touched.
pub fn adamw_step(
    params: &mut BasisParams,
    grads: &BasisGrads,
    state: &mut OptimizerState,
    lr_t: f64,
    config: &TrainConfig,
) -> Result<(), MetaTrainError> {
    let mut theta = params.to_flat();
    let g = grads.to_flat();
    if theta.len() != g.len() || theta.len() != state.m.len() {
        return Err(MetaTrainError::InvalidConfig(format!(
            "parameter/gradient/state length mismatch: {} / {} / {}",
            theta.len(),
            g.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    adamw_update_flat(
        &mut theta,
        &g,
        &mut state.m,
        &mut state.v,
        state.step,
        lr_t,
        config.beta1,
        config.beta2,
        config.eps,
        config.weight_decay,
    );
    params.set_from_flat(&theta)?;
    Ok(())
}

fn check_finite_loss(
    loss: f64,
    epoch: usize,
    task_index: usize,
    master_seed: u64,
) -> Result<(), MetaTrainError> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(MetaTrainError::NonFiniteLoss { epoch, task_index, master_seed, loss })
    }
}

/// Runs the full loop: E epochs × T tasks, one optimizer step per task.
/// Writes a checkpoint and a CSV log when paths are given; returns the frozen
/// parameters and the log either way.
pub fn train(
    config: &TrainConfig,
    checkpoint_path: Option<&Path>,
    log_path: Option<&Path>,
) -> Result<(BasisParams, TrainLog), MetaTrainError> {
    config.validate()?;
    let mut params = network::init_params(config.grf.input_dim, config.hidden, config.master_seed)?
        .with_precision(config.precision);
    let mut state = OptimizerState::new(params.flat_len());
    let total_steps = config.epochs * config.tasks_per_epoch;
    let mut log = TrainLog::default();
    let start = Instant::now();

    let mut step = 0usize;
    for epoch in 0..config.epochs {
        let mut loss_sum = 0.0;
        let mut epoch_lr = 0.0;
        for task_index in 0..config.tasks_per_epoch {
            let task = grf::task_batch(&config.grf, config.master_seed, epoch, task_index);
            let task_step = task_loss_and_grads(&params, &task, config.loss_mode)?;
            check_finite_loss(task_step.loss, epoch, task_index, config.master_seed)?;
            if task_step.used_fallback {
                log.split_fallbacks += 1;
            }
            let lr_t = cosine_lr(step, total_steps, config.learning_rate);
            if task_index == 0 {
                epoch_lr = lr_t;
            }
            adamw_step(&mut params, &task_step.grads, &mut state, lr_t, config)?;
            loss_sum += task_step.loss;
            step += 1;
        }
        log.epochs.push(EpochStats {
            epoch: epoch + 1,
            mean_loss: loss_sum / config.tasks_per_epoch as f64,
            lr: epoch_lr,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
    }

    if let Some(path) = checkpoint_path {
        // No wall-clock data here: checkpoint bytes must be a pure function
        // of config and seed. Timing lives in the CSV log.
        let metadata = serde_json::json!({
            "train_config": config,
            "final_mean_loss": log.epochs.last().map(|e| e.mean_loss),
            "split_fallbacks": log.split_fallbacks,
        });
        network::save_checkpoint(&params, path, metadata)?;
    }
    if let Some(path) = log_path {
        log.write_csv(path)?;
    }
    Ok((params, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn tiny_config(seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: 2,
            tasks_per_epoch: 3,
            grf: GRFConfig {
                features: 16,
                n_train: 32,
                n_test: 12,
                ..GRFConfig::defaults(2)
            },
            ..TrainConfig::defaults(8, 2, seed)
        }
    }

    fn manual_task(n_train: usize, n_test: usize, seed: u64) -> GRFTask {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let x_train = Array2::from_shape_fn((n_train, 2), |_| rng.random::<f64>());
        let x_test = Array2::from_shape_fn((n_test, 2), |_| rng.random::<f64>());
        GRFTask {
            x_train,
            y_train: Array1::zeros(n_train),
            x_test,
            y_test: Array1::zeros(n_test),
            mode: crate::grf::GrfMode::Rbf,
            hyper: crate::grf::GrfHyper::Rbf { length_scale: 0.01 },
        }
    }

    #[test]
    fn cosine_schedule_hits_endpoints_and_midpoint() {
        assert_eq!(cosine_lr(0, 100, 1e-3), 1e-3);
        assert!(cosine_lr(100, 100, 1e-3).abs() < 1e-18);
        let half = cosine_lr(50, 100, 1e-3);
        assert!((half - 5e-4).abs() < 1e-15);
    }

    #[test]
    fn cosine_schedule_is_nonincreasing() {
        let mut prev = f64::INFINITY;
        for step in 0..=1000 {
            let lr = cosine_lr(step, 1000, 1e-3);
            assert!(lr <= prev + 1e-18, "lr rose at step {step}");
            prev = lr;
        }
    }

    #[test]
    fn adamw_first_step_matches_hand_value() {
        // θ = 1, g = 1, lr = 0.1, λ = 0: bias correction makes m̂ = 1,
        // v̂ = 1, so θ ← 1 − 0.1·1/(1 + ε) ≈ 0.9.
        let mut theta = [1.0];
        let mut m = [0.0];
        let mut v = [0.0];
        adamw_update_flat(&mut theta, &[1.0], &mut m, &mut v, 1, 0.1, 0.9, 0.999, 1e-8, 0.0);
        assert!((theta[0] - 0.9).abs() < 1e-8, "got {}", theta[0]);
    }

    #[test]
    fn adamw_decay_only_shrinks_parameters() {
        // λ = 0.1, g = 0, lr = 0.1, fresh state: moments stay zero, only the
        // decoupled decay acts: θ ← θ·(1 − 0.01).
        let mut theta = [2.0];
        let mut m = [0.0];
        let mut v = [0.0];
        adamw_update_flat(&mut theta, &[0.0], &mut m, &mut v, 1, 0.1, 0.9, 0.999, 1e-8, 0.1);
        assert!((theta[0] - 2.0 * 0.99).abs() < 1e-15, "got {}", theta[0]);
    }

    #[test]
    fn zero_gradient_zero_decay_is_identity() {
        let mut params = network::init_params(2, 8, 3).unwrap();
        let before = params.to_flat();
        let zero_grads = {
            let pts = Array2::zeros((4, 2));
            let upstream = Array2::zeros((4, 8));
            network::backward(&params, pts.view(), upstream.view()).unwrap()
        };
        let mut state = OptimizerState::new(params.flat_len());
        let mut cfg = tiny_config(3);
        cfg.weight_decay = 0.0;
        adamw_step(&mut params, &zero_grads, &mut state, 1e-3, &cfg).unwrap();
        assert_eq!(params.to_flat(), before);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn optimizer_never_touches_fourier_scales() {
        let cfg = tiny_config(5);
        let (params, _log) = train(&cfg, None, None).unwrap();
        assert_eq!(params.fourier_scales(), &network::FOURIER_SCALES);
    }

    #[test]
    fn zero_learning_rate_returns_init() {
        let mut cfg = tiny_config(7);
        cfg.learning_rate = 0.0;
        cfg.epochs = 1;
        cfg.tasks_per_epoch = 1;
        let (params, _log) = train(&cfg, None, None).unwrap();
        let init = network::init_params(2, cfg.hidden, cfg.master_seed).unwrap();
        assert_eq!(params.to_flat(), init.to_flat());
    }

    #[test]
    fn zero_targets_give_zero_loss_and_grads() {
        let params = network::init_params(2, 8, 11).unwrap();
        for mode in [LossMode::SameSet, LossMode::Split] {
            let task = manual_task(20, 10, 1);
            let step = task_loss_and_grads(&params, &task, mode).unwrap();
            assert_eq!(step.loss, 0.0, "{mode}");
            assert!(step.grads.to_flat().iter().all(|g| *g == 0.0), "{mode}");
            assert!(!step.used_fallback);
        }
    }

    #[test]
    fn representable_targets_fit_to_machine_precision() {
        // Targets built from the dictionary's own columns: the least-squares
        // fit recovers them, so the same-set loss collapses to rounding.
        let params = network::init_params(2, 16, 13).unwrap();
        let mut task = manual_task(40, 10, 2);
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let coeff = Array1::from_shape_fn(16, |_| rng.random::<f64>() * 2.0 - 1.0);
        let phi_train = network::forward(&params, task.x_train.view()).unwrap().to_f64_array();
        let phi_test = network::forward(&params, task.x_test.view()).unwrap().to_f64_array();
        task.y_train = phi_train.dot(&coeff);
        task.y_test = phi_test.dot(&coeff);
        for mode in [LossMode::SameSet, LossMode::Split] {
            let step = task_loss_and_grads(&params, &task, mode).unwrap();
            assert!(step.loss < 1e-18, "{mode}: loss {}", step.loss);
        }
    }

    #[test]
    fn split_mode_falls_back_on_rank_deficient_train_block() {
        let params = network::init_params(2, 8, 17).unwrap();
        let mut task = manual_task(12, 6, 4);
        // Collapse the train block to 3 distinct points: Φ_train has rank
        // ≤ 3 < 8, so the solve gradient is undefined.
        for i in 3..12 {
            let src = task.x_train.row(i % 3).to_owned();
            task.x_train.row_mut(i).assign(&src);
        }
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        task.y_train = Array1::from_shape_fn(12, |_| rng.random::<f64>());
        task.y_test = Array1::from_shape_fn(6, |_| rng.random::<f64>());
        let step = task_loss_and_grads(&params, &task, LossMode::Split).unwrap();
        assert!(step.used_fallback);
        assert!(step.loss.is_finite());
        assert!(step.grads.to_flat().iter().all(|g| g.is_finite()));
    }

    #[test]
    fn identical_config_reproduces_checkpoint_bytes() {
        let dir = std::env::temp_dir().join(format!("mt-determinism-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let cfg = tiny_config(23);
        let a_path = dir.join("a.mcbd");
        let b_path = dir.join("b.mcbd");
        train(&cfg, Some(&a_path), None).unwrap();
        train(&cfg, Some(&b_path), None).unwrap();
        let a = std::fs::read(&a_path).unwrap();
        let b = std::fs::read(&b_path).unwrap();
        assert_eq!(a, b, "same config + seed must reproduce checkpoint bytes");
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn training_reduces_loss_on_tiny_run() {
        let mut cfg = tiny_config(29);
        cfg.epochs = 10;
        cfg.tasks_per_epoch = 8;
        let (_params, log) = train(&cfg, None, None).unwrap();
        assert_eq!(log.epochs.len(), 10);
        assert!(log.epochs.iter().all(|e| e.mean_loss.is_finite()));
        let first = log.epochs.first().unwrap().mean_loss;
        let last = log.epochs.last().unwrap().mean_loss;
        assert!(last < first, "loss should drop: {first} → {last}");
    }

    #[test]
    fn train_log_csv_has_documented_columns() {
        let dir = std::env::temp_dir().join(format!("mt-log-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("log.csv");
        let cfg = tiny_config(31);
        let (_params, log) = train(&cfg, None, Some(&path)).unwrap();
        let mut r = csv::Reader::from_path(&path).unwrap();
        assert_eq!(
            r.headers().unwrap().iter().collect::<Vec<_>>(),
            vec!["epoch", "mean_loss", "lr", "wall_seconds"]
        );
        let rows: Vec<csv::StringRecord> = r.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), log.epochs.len());
        assert_eq!(rows[0][0].parse::<usize>().unwrap(), 1);
        let logged: f64 = rows[0][1].parse().unwrap();
        assert_eq!(logged, log.epochs[0].mean_loss);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn non_finite_loss_aborts_with_task_key() {
        let err = check_finite_loss(f64::NAN, 7, 3, 99).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("epoch 7") && msg.contains("task 3") && msg.contains("99"), "{msg}");
        check_finite_loss(1.0, 0, 0, 0).unwrap();
    }

    #[test]
    fn fp32_precision_trains_and_differs_from_fp64() {
        let mut cfg = tiny_config(37);
        cfg.precision = Precision::Fp32;
        let (p32, log32) = train(&cfg, None, None).unwrap();
        cfg.precision = Precision::Fp64;
        let (p64, _log64) = train(&cfg, None, None).unwrap();
        assert!(log32.epochs.iter().all(|e| e.mean_loss.is_finite()));
        assert_ne!(p32.to_flat(), p64.to_flat());
        assert_eq!(p32.precision(), Precision::Fp32);
    }
}
