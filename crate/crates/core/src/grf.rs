//! Multi-scale Gaussian random field task generator.
//!
//! Each task is a random function built from a cosine feature map
//! φ(x) = √(2/D)·cos(Ωx + b) with targets y = φ(X)·w, w ~ N(0, I_D),
//! sampled at uniform points in [0,1]^d. Three spectrum recipes cover the
//! frequency range the dictionary must learn:
//!
//! - `rbf` (p = 0.4): rows of Ω ~ N(0, ℓ⁻²I) with a log-uniform length
//!   scale ℓ ∈ [0.005, 0.05] — smooth-to-moderately-rough isotropic fields.
//! - `highfreq` (p = 0.4): half the rows ~ N(μ·𝟙, σ²I) with μ ~ U[10, 300],
//!   σ ~ U[1, 15]; the other half are the exact negations of the first half,
//!   keeping the spectrum symmetric (a real field needs ±ω pairs).
//! - `mixed` (p = 0.2): half the features from each recipe (RBF half rounds
//!   up on odd D).
//!
//! Sampling is a pure function of an explicit RNG stream, and
//! [`task_batch`] derives that stream from (master seed, epoch, task index)
//! alone, so a task's content never depends on execution schedule.

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Errors from configuration validation and the optional task dump.
#[derive(Debug, Error)]
pub enum GrfError {
    #[error("invalid GRF config: {0}")]
    InvalidConfig(String),
    #[error("task dump i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("task dump csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Spectrum recipe of one task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrfMode {
    Rbf,
    HighFreq,
    Mixed,
}

/// The hyperparameters actually drawn for a task, by mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrfHyper {
    Rbf { length_scale: f64 },
    HighFreq { center: f64, bandwidth: f64 },
    Mixed { length_scale: f64, center: f64, bandwidth: f64 },
}

/// Distribution parameters for the task family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GRFConfig {
    /// Mode probabilities (rbf, highfreq, mixed); must sum to 1.
    pub p_rbf: f64,
    pub p_highfreq: f64,
    pub p_mixed: f64,
    /// Log-uniform length-scale range for the RBF recipe.
    pub length_scale: (f64, f64),
    /// Uniform center-frequency range for the high-frequency recipe.
    pub center_freq: (f64, f64),
    /// Uniform bandwidth range for the high-frequency recipe.
    pub bandwidth: (f64, f64),
    /// Random feature count D per task.
    pub features: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub input_dim: usize,
}

impl GRFConfig {
    /// The benchmark defaults: probabilities (0.4, 0.4, 0.2),
    /// ℓ ∈ [0.005, 0.05], μ ∈ [10, 300], σ ∈ [1, 15], D = 256,
    /// 4000 train / 1500 test points.
    pub fn defaults(input_dim: usize) -> GRFConfig {
        GRFConfig {
            p_rbf: 0.4,
            p_highfreq: 0.4,
            p_mixed: 0.2,
            length_scale: (0.005, 0.05),
            center_freq: (10.0, 300.0),
            bandwidth: (1.0, 15.0),
            features: 256,
            n_train: 4000,
            n_test: 1500,
            input_dim,
        }
    }

    pub fn validate(&self) -> Result<(), GrfError> {
        let psum = self.p_rbf + self.p_highfreq + self.p_mixed;
        if (psum - 1.0).abs() > 1e-12 || self.p_rbf < 0.0 || self.p_highfreq < 0.0 || self.p_mixed < 0.0
        {
            return Err(GrfError::InvalidConfig(format!(
                "mode probabilities ({}, {}, {}) must be nonnegative and sum to 1",
                self.p_rbf, self.p_highfreq, self.p_mixed
            )));
        }
        for (name, (lo, hi)) in [
            ("length_scale", self.length_scale),
            ("center_freq", self.center_freq),
            ("bandwidth", self.bandwidth),
        ] {
            if !(lo > 0.0 && hi >= lo) {
                return Err(GrfError::InvalidConfig(format!(
                    "{name} range ({lo}, {hi}) must be positive and ordered"
                )));
            }
        }
        if self.features == 0 || self.n_train == 0 || self.n_test == 0 {
            return Err(GrfError::InvalidConfig("counts must be positive".into()));
        }
        if !(self.input_dim == 2 || self.input_dim == 3) {
            return Err(GrfError::InvalidConfig(format!(
                "input_dim must be 2 or 3, got {}",
                self.input_dim
            )));
        }
        Ok(())
    }
}

/// Frequency matrix Ω (D×d) and phase vector b (D) of one drawn task.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub omega: Array2<f64>,
    pub phase: Array1<f64>,
}

/// One sampled task: split point sets, targets, and provenance.
#[derive(Debug, Clone)]
pub struct GRFTask {
    pub x_train: Array2<f64>,
    pub y_train: Array1<f64>,
    pub x_test: Array2<f64>,
    pub y_test: Array1<f64>,
    pub mode: GrfMode,
    pub hyper: GrfHyper,
}

/// Draws the spectrum for one task: mode, hyperparameters, Ω, and phases.
/// Fixed draw order (mode, hyperparameters, Ω row-major, phases) so results
/// are a pure function of the stream.
pub fn sample_spectrum(
    config: &GRFConfig,
    rng: &mut ChaCha12Rng,
) -> (Spectrum, GrfMode, GrfHyper) {
    let d = config.input_dim;
    let dd = config.features;
    let pick = rng.random::<f64>();
    let mode = if pick < config.p_rbf {
        GrfMode::Rbf
    } else if pick < config.p_rbf + config.p_highfreq {
        GrfMode::HighFreq
    } else {
        GrfMode::Mixed
    };

    let draw_length_scale = |rng: &mut ChaCha12Rng| {
        let (lo, hi) = config.length_scale;
        (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
    };
    let draw_center = |rng: &mut ChaCha12Rng| {
        let (lo, hi) = config.center_freq;
        lo + rng.random::<f64>() * (hi - lo)
    };
    let draw_bandwidth = |rng: &mut ChaCha12Rng| {
        let (lo, hi) = config.bandwidth;
        lo + rng.random::<f64>() * (hi - lo)
    };

    let mut omega = Array2::<f64>::zeros((dd, d));
    // Fills rows [start, start+count) with N(0, ℓ⁻²I).
    let fill_rbf = |omega: &mut Array2<f64>, rng: &mut ChaCha12Rng, start: usize, count: usize, ell: f64| {
        for i in start..start + count {
            for j in 0..d {
                let z: f64 = StandardNormal.sample(rng);
                omega[[i, j]] = z / ell;
            }
        }
    };
    // Fills rows [start, start+count): the first ⌈count/2⌉ drawn from
    // N(μ·𝟙, σ²I), the remainder their exact negations.
    let fill_highfreq =
        |omega: &mut Array2<f64>, rng: &mut ChaCha12Rng, start: usize, count: usize, mu: f64, sigma: f64| {
            let base = count.div_ceil(2);
            for i in start..start + base {
                for j in 0..d {
                    let z: f64 = StandardNormal.sample(rng);
                    omega[[i, j]] = mu + sigma * z;
                }
            }
            for i in start + base..start + count {
                for j in 0..d {
                    omega[[i, j]] = -omega[[i - base, j]];
                }
            }
        };

    let hyper = match mode {
        GrfMode::Rbf => {
            let ell = draw_length_scale(rng);
            fill_rbf(&mut omega, rng, 0, dd, ell);
            GrfHyper::Rbf { length_scale: ell }
        }
        GrfMode::HighFreq => {
            let mu = draw_center(rng);
            let sigma = draw_bandwidth(rng);
            fill_highfreq(&mut omega, rng, 0, dd, mu, sigma);
            GrfHyper::HighFreq { center: mu, bandwidth: sigma }
        }
        GrfMode::Mixed => {
            let ell = draw_length_scale(rng);
            let mu = draw_center(rng);
            let sigma = draw_bandwidth(rng);
            let n_rbf = dd.div_ceil(2); // RBF half rounds up on odd D
            fill_rbf(&mut omega, rng, 0, n_rbf, ell);
            fill_highfreq(&mut omega, rng, n_rbf, dd - n_rbf, mu, sigma);
            GrfHyper::Mixed { length_scale: ell, center: mu, bandwidth: sigma }
        }
    };

    let phase = Array1::from_shape_fn(dd, |_| rng.random::<f64>() * 2.0 * std::f64::consts::PI);
    (Spectrum { omega, phase }, mode, hyper)
}

/// The cosine feature map φ(X) = √(2/D)·cos(XΩᵀ + b), N×D.
pub fn feature_map(spectrum: &Spectrum, points: &ArrayView2<'_, f64>) -> Array2<f64> {
    let dd = spectrum.omega.nrows();
    let scale = (2.0 / dd as f64).sqrt();
    let mut z = points.dot(&spectrum.omega.t());
    for mut row in z.rows_mut() {
        row += &spectrum.phase;
    }
    z.mapv_inplace(|t| scale * t.cos());
    z
}

/// Samples one complete task from the given stream.
pub fn sample_task(config: &GRFConfig, rng: &mut ChaCha12Rng) -> GRFTask {
    let (spectrum, mode, hyper) = sample_spectrum(config, rng);
    let m = config.n_train + config.n_test;
    let points = Array2::from_shape_fn((m, config.input_dim), |_| rng.random::<f64>());
    let weights: Array1<f64> =
        Array1::from_shape_fn(config.features, |_| StandardNormal.sample(rng));
    let y = feature_map(&spectrum, &points.view()).dot(&weights);

    let x_train = points.slice(ndarray::s![..config.n_train, ..]).to_owned();
    let x_test = points.slice(ndarray::s![config.n_train.., ..]).to_owned();
    let y_train = y.slice(ndarray::s![..config.n_train]).to_owned();
    let y_test = y.slice(ndarray::s![config.n_train..]).to_owned();
    GRFTask { x_train, y_train, x_test, y_test, mode, hyper }
}

/// Deterministic child stream for (master seed, epoch, task index).
pub fn task_stream(master_seed: u64, epoch: usize, task_index: usize) -> ChaCha12Rng {
    let mut seed = [0u8; 32];
    seed[0..8].copy_from_slice(&master_seed.to_le_bytes());
    seed[8..16].copy_from_slice(&(epoch as u64).to_le_bytes());
    seed[16..24].copy_from_slice(&(task_index as u64).to_le_bytes());
    seed[24..32].copy_from_slice(b"grftask\0");
    ChaCha12Rng::from_seed(seed)
}

/// Samples the task at (epoch, task_index) of the run keyed by
/// `master_seed`. Pure in its arguments — execution order, thread count, and
/// how many other tasks were sampled first are all irrelevant.
pub fn task_batch(
    config: &GRFConfig,
    master_seed: u64,
    epoch: usize,
    task_index: usize,
) -> GRFTask {
    sample_task(config, &mut task_stream(master_seed, epoch, task_index))
}

/// Debug dump: columns x1..xd, y, split ∈ {train, test}.
pub fn dump_task_csv(task: &GRFTask, path: &Path) -> Result<(), GrfError> {
    let d = task.x_train.ncols();
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    header.push("y".into());
    header.push("split".into());
    w.write_record(&header)?;
    for (x, y, split) in [
        (&task.x_train, &task.y_train, "train"),
        (&task.x_test, &task.y_test, "test"),
    ] {
        for (row, yi) in x.rows().into_iter().zip(y.iter()) {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            rec.push(yi.to_string());
            rec.push(split.to_string());
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> GRFConfig {
        GRFConfig { features: 16, n_train: 8, n_test: 4, ..GRFConfig::defaults(2) }
    }

    #[test]
    fn defaults_validate_and_bad_configs_do_not() {
        GRFConfig::defaults(2).validate().unwrap();
        GRFConfig::defaults(3).validate().unwrap();
        let mut c = GRFConfig::defaults(2);
        c.p_mixed = 0.5;
        assert!(c.validate().is_err());
        let mut c = GRFConfig::defaults(2);
        c.length_scale = (0.05, 0.005);
        assert!(c.validate().is_err());
        let mut c = GRFConfig::defaults(2);
        c.input_dim = 5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn fixed_stream_reproduces_task_exactly() {
        let c = small_config();
        let a = sample_task(&c, &mut task_stream(7, 0, 0));
        let b = sample_task(&c, &mut task_stream(7, 0, 0));
        assert_eq!(a.x_train, b.x_train);
        assert_eq!(a.y_train, b.y_train);
        assert_eq!(a.x_test, b.x_test);
        assert_eq!(a.y_test, b.y_test);
        assert_eq!(a.mode, b.mode);
    }

    #[test]
    fn default_counts_give_documented_shapes() {
        let c = GRFConfig::defaults(2);
        let t = task_batch(&c, 3, 0, 0);
        assert_eq!(t.x_train.dim(), (4000, 2));
        assert_eq!(t.x_test.dim(), (1500, 2));
        assert_eq!(t.y_train.len(), 4000);
        assert_eq!(t.y_test.len(), 1500);
    }

    #[test]
    fn coordinates_lie_in_unit_cube_and_targets_are_finite() {
        let c = GRFConfig { input_dim: 3, ..small_config() };
        for k in 0..50 {
            let t = task_batch(&c, 11, 0, k);
            for x in t.x_train.iter().chain(t.x_test.iter()) {
                assert!((0.0..=1.0).contains(x));
            }
            for y in t.y_train.iter().chain(t.y_test.iter()) {
                assert!(y.is_finite());
            }
        }
    }

    #[test]
    fn task_batch_is_schedule_independent() {
        let c = small_config();
        // Sample (3, 7) twice with unrelated interleaved work between.
        let first = task_batch(&c, 42, 3, 7);
        let _noise = task_batch(&c, 42, 1, 2);
        let _more = task_batch(&c, 99, 3, 7);
        let second = task_batch(&c, 42, 3, 7);
        assert_eq!(first.x_train, second.x_train);
        assert_eq!(first.y_train, second.y_train);
    }

    #[test]
    fn distinct_epoch_task_pairs_do_not_collide() {
        let c = small_config();
        let mut first_rows: Vec<[u64; 2]> = Vec::new();
        for epoch in 0..20 {
            for task in 0..50 {
                let t = task_batch(&c, 5, epoch, task);
                first_rows.push([t.x_train[[0, 0]].to_bits(), t.x_train[[0, 1]].to_bits()]);
            }
        }
        first_rows.sort_unstable();
        first_rows.dedup();
        assert_eq!(first_rows.len(), 1000, "duplicate first rows across 1000 tasks");
    }

    #[test]
    fn mode_frequencies_match_configured_probabilities() {
        let c = GRFConfig { features: 4, n_train: 2, n_test: 2, ..GRFConfig::defaults(2) };
        let mut counts = [0usize; 3];
        let n = 10_000;
        for k in 0..n {
            let (_s, mode, _h) = sample_spectrum(&c, &mut task_stream(1234, 0, k));
            counts[match mode {
                GrfMode::Rbf => 0,
                GrfMode::HighFreq => 1,
                GrfMode::Mixed => 2,
            }] += 1;
        }
        let freq: Vec<f64> = counts.iter().map(|c| *c as f64 / n as f64).collect();
        assert!((freq[0] - 0.4).abs() < 0.02, "rbf frequency {}", freq[0]);
        assert!((freq[1] - 0.4).abs() < 0.02, "highfreq frequency {}", freq[1]);
        assert!((freq[2] - 0.2).abs() < 0.02, "mixed frequency {}", freq[2]);
    }

    #[test]
    fn highfreq_spectrum_mean_is_exactly_zero_for_even_feature_count() {
        let c = GRFConfig { p_rbf: 0.0, p_highfreq: 1.0, p_mixed: 0.0, ..small_config() };
        assert_eq!(c.features % 2, 0);
        let base = c.features / 2;
        for k in 0..20 {
            let (s, mode, _h) = sample_spectrum(&c, &mut task_stream(77, 1, k));
            assert_eq!(mode, GrfMode::HighFreq);
            // Each drawn row has an exact negation, so the mean over pairs is
            // exactly zero (a + (−a) = 0 in IEEE for finite a).
            for i in 0..base {
                for j in 0..2 {
                    assert_eq!(s.omega[[i, j]] + s.omega[[base + i, j]], 0.0);
                }
            }
        }
    }

    #[test]
    fn larger_length_scales_give_smoother_fields() {
        // Discrete smoothness: mean squared difference quotient between
        // consecutive sample points. RBF tasks with ℓ in the top quartile of
        // the log range must beat tasks with ℓ in the bottom quartile.
        let c = GRFConfig {
            p_rbf: 1.0,
            p_highfreq: 0.0,
            p_mixed: 0.0,
            features: 64,
            n_train: 200,
            n_test: 10,
            ..GRFConfig::defaults(2)
        };
        let mut rough = Vec::new();
        let mut smooth = Vec::new();
        let (lo, hi) = c.length_scale;
        let (log_lo, log_hi) = (lo.ln(), hi.ln());
        for k in 0..100 {
            let t = task_batch(&c, 2024, 0, k);
            let ell = match t.hyper {
                GrfHyper::Rbf { length_scale } => length_scale,
                _ => unreachable!(),
            };
            let mut acc = 0.0;
            let mut cnt = 0usize;
            for i in 1..t.x_train.nrows() {
                let dx0 = t.x_train[[i, 0]] - t.x_train[[i - 1, 0]];
                let dx1 = t.x_train[[i, 1]] - t.x_train[[i - 1, 1]];
                let dist2 = dx0 * dx0 + dx1 * dx1;
                if dist2 > 1e-12 {
                    let dy = t.y_train[i] - t.y_train[i - 1];
                    acc += dy * dy / dist2;
                    cnt += 1;
                }
            }
            let msdq = acc / cnt as f64;
            let pos = (ell.ln() - log_lo) / (log_hi - log_lo);
            if pos < 0.25 {
                rough.push(msdq);
            } else if pos > 0.75 {
                smooth.push(msdq);
            }
        }
        assert!(rough.len() >= 10 && smooth.len() >= 10, "quartiles too thin");
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(
            mean(&smooth) < mean(&rough),
            "smooth-ℓ fields should vary less: {} vs {}",
            mean(&smooth),
            mean(&rough)
        );
    }

    #[test]
    fn mixed_mode_splits_features_with_rbf_rounding_up() {
        let c = GRFConfig {
            p_rbf: 0.0,
            p_highfreq: 0.0,
            p_mixed: 1.0,
            features: 7,
            ..small_config()
        };
        let (s, mode, hyper) = sample_spectrum(&c, &mut task_stream(5, 0, 0));
        assert_eq!(mode, GrfMode::Mixed);
        let GrfHyper::Mixed { center, bandwidth, .. } = hyper else {
            panic!("expected mixed hyper");
        };
        // Rows 0..4 are RBF (zero-mean, typically huge magnitude at small ℓ);
        // rows 4..7 are the high-frequency block: 4 and 5 drawn near μ·𝟙,
        // row 6 the negation of row 4.
        for j in 0..2 {
            assert_eq!(s.omega[[6, j]], -s.omega[[4, j]]);
        }
        // Drawn high-frequency rows stay within a few bandwidths of ±μ.
        for i in [4usize, 5] {
            for j in 0..2 {
                assert!(
                    (s.omega[[i, j]] - center).abs() <= 6.0 * bandwidth,
                    "hf row {i} strayed from its center"
                );
            }
        }
    }

    #[test]
    fn task_dump_round_trips_through_csv() {
        let c = small_config();
        let t = task_batch(&c, 8, 0, 0);
        let dir = std::env::temp_dir().join(format!("grf-dump-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("task.csv");
        dump_task_csv(&t, &path).unwrap();
        let mut r = csv::Reader::from_path(&path).unwrap();
        assert_eq!(
            r.headers().unwrap().iter().collect::<Vec<_>>(),
            vec!["x1", "x2", "y", "split"]
        );
        let rows: Vec<csv::StringRecord> = r.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 12);
        assert_eq!(&rows[0][3], "train");
        assert_eq!(&rows[8][3], "test");
        let y0: f64 = rows[0][2].parse().unwrap();
        assert_eq!(y0, t.y_train[0]);
        std::fs::remove_dir_all(&dir).ok();
    }
}
