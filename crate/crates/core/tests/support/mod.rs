//! Independent reference implementations ("oracles") used by the test suites.
//!
//! Nothing here shares code with the library's fast paths: singular values
//! come from a one-sided Jacobi iteration instead of LAPACK, and gradients
//! come from central finite differences instead of hand-derived formulas.
//! Agreement between the two routes is what the correctness tests assert.

// Each test binary compiles its own copy of this module and uses a subset of
// the helpers, so per-binary dead-code analysis is not meaningful here.
#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Singular values of `a` by one-sided Jacobi: rotate column pairs until all
/// are mutually orthogonal, then read off the column norms. Slow but
/// componentwise accurate, and entirely independent of the LAPACK backend.
pub fn jacobi_singular_values(a: &Array2<f64>) -> Vec<f64> {
    // Work on the tall orientation so the column count is min(m, n)… actually
    // the column count must be n regardless; transposing is only a flop saver
    // and keeps the sweep count small for wide inputs.
    let mut work = if a.nrows() >= a.ncols() { a.clone() } else { a.t().to_owned() };
    let n = work.ncols();
    let tol = 1e-15;
    for _sweep in 0..200 {
        let mut converged = true;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0f64, 0.0f64, 0.0f64);
                for i in 0..work.nrows() {
                    let (x, y) = (work[[i, p]], work[[i, q]]);
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma.abs() <= tol * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                converged = false;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..work.nrows() {
                    let (x, y) = (work[[i, p]], work[[i, q]]);
                    work[[i, p]] = c * x - s * y;
                    work[[i, q]] = s * x + c * y;
                }
            }
        }
        if converged {
            break;
        }
    }
    let mut sigma: Vec<f64> = (0..n)
        .map(|j| work.column(j).iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    sigma.sort_by(|x, y| y.partial_cmp(x).expect("finite"));
    sigma
}

/// Central finite differences of a scalar function of the matrix entries.
pub fn fd_grad_matrix<F: FnMut(&Array2<f64>) -> f64>(
    mut f: F,
    a: &Array2<f64>,
    h: f64,
) -> Array2<f64> {
    let mut grad = Array2::zeros(a.dim());
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            let mut hi = a.clone();
            let mut lo = a.clone();
            hi[[i, j]] += h;
            lo[[i, j]] -= h;
            grad[[i, j]] = (f(&hi) - f(&lo)) / (2.0 * h);
        }
    }
    grad
}

/// Value and first three derivatives of a univariate function by central
/// finite differences on a 5-point stencil.
pub fn fd_derivs3<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> [f64; 4] {
    let (fm2, fm1, f0, fp1, fp2) =
        (f(x - 2.0 * h), f(x - h), f(x), f(x + h), f(x + 2.0 * h));
    [
        f0,
        (fp1 - fm1) / (2.0 * h),
        (fp1 - 2.0 * f0 + fm1) / (h * h),
        (fp2 - 2.0 * fp1 + 2.0 * fm1 - fm2) / (2.0 * h * h * h),
    ]
}

/// Frobenius norm of the difference, relative to the Frobenius norm of `want`
/// (with an absolute floor so exact zeros compare cleanly).
pub fn rel_err_matrix(got: &Array2<f64>, want: &Array2<f64>) -> f64 {
    let num: f64 = got
        .iter()
        .zip(want.iter())
        .map(|(g, w)| (g - w) * (g - w))
        .sum::<f64>()
        .sqrt();
    let den: f64 = want.iter().map(|w| w * w).sum::<f64>().sqrt();
    num / den.max(1e-12)
}

/// Deterministic RNG for generating random test instances.
pub fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Matrix with i.i.d. entries uniform on [−1, 1).
pub fn random_matrix(r: &mut ChaCha12Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| r.random::<f64>() * 2.0 - 1.0)
}

/// Vector with i.i.d. entries uniform on [−1, 1).
pub fn random_vector(r: &mut ChaCha12Rng, len: usize) -> Array1<f64> {
    Array1::from_shape_fn(len, |_| r.random::<f64>() * 2.0 - 1.0)
}

/// Matrix with prescribed singular values (random orthogonal factors from QR
/// of Gaussian-ish matrices — orthogonality is all that matters here).
pub fn matrix_with_spectrum(r: &mut ChaCha12Rng, rows: usize, cols: usize, sigma: &[f64]) -> Array2<f64> {
    use ndarray_linalg::qr::QR;
    assert!(sigma.len() == rows.min(cols));
    let (qu, _) = random_matrix(r, rows, rows.min(cols)).qr().expect("qr");
    let (qv, _) = random_matrix(r, cols, rows.min(cols)).qr().expect("qr");
    let mut scaled = qu;
    for (j, s) in sigma.iter().enumerate() {
        scaled.column_mut(j).mapv_inplace(|x| x * s);
    }
    scaled.dot(&qv.t())
}
