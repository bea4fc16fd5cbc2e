//! Dense fp32/fp64 matrices and the least-squares core.
//!
//! Everything downstream reduces to one primitive: the minimum-norm
//! least-squares solve `w = argmin ‖Aw − b‖₂` (ties broken by smallest ‖w‖),
//! computed from an SVD with singular values below `rcond·σ_max` treated as
//! zero, `rcond = max(rows, cols) · ε` of the active precision. Two gradient
//! forms ride on top of it:
//!
//! - [`lstsq_value_gradient`] — ∂/∂A of the mean-squared residual at the
//!   minimizer. Because w is a stationary point of the inner problem, the
//!   envelope theorem collapses the total derivative to the partial one:
//!   `gradA = (2/rows) · r wᵀ` with `r = Aw − b`.
//! - [`lstsq_vjp`] — the pullback of the map `A ↦ w` under an upstream
//!   cotangent `gbar`, for losses evaluated on points other than the ones
//!   solved on. Differentiating the normal equations `AᵀA w = Aᵀb` gives
//!   `Ā = r sᵀ − (A s) wᵀ` with `r = b − Aw` and `s = (AᵀA)⁻¹ gbar`.
//!
//! A [`DenseMatrix`] carries an explicit precision tag; every operation runs
//! entirely in the tagged precision (fp32 matrices are solved by the fp32
//! LAPACK path, not by promoting). Scalars that leave this module are widened
//! to f64, which is exact.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, NdFloat};
use ndarray_linalg::svddc::{JobSvd, SVDDC};
use ndarray_linalg::{Lapack, Scalar};
use thiserror::Error;

/// Floating-point storage/arithmetic mode of a matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Precision {
    Fp32,
    Fp64,
}

impl Precision {
    /// Machine epsilon of this precision, as f64.
    pub fn epsilon(self) -> f64 {
        match self {
            Precision::Fp32 => f32::EPSILON as f64,
            Precision::Fp64 => f64::EPSILON,
        }
    }
}

impl std::fmt::Display for Precision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Precision::Fp32 => write!(f, "fp32"),
            Precision::Fp64 => write!(f, "fp64"),
        }
    }
}

/// Errors from the dense linear-algebra layer.
#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("non-finite entries in {0}")]
    InvalidInput(&'static str),
    #[error("dimension mismatch: {0}")]
    ShapeMismatch(String),
    #[error("matrix is rank-deficient at the rcond cutoff (rank {rank} < cols {cols})")]
    RankDeficient { rank: usize, cols: usize },
    #[error("LAPACK backend failure: {0}")]
    Backend(String),
}

/// Row-major dense matrix with an explicit precision tag.
///
/// The tag governs arithmetic: an `Fp32` matrix is stored as `f32` and solved
/// with the single-precision LAPACK drivers. Conversions between tags are
/// explicit via [`DenseMatrix::with_precision`].
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: MatData,
}

#[derive(Debug, Clone, PartialEq)]
enum MatData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl DenseMatrix {
    /// Builds an fp64 matrix from a row-major buffer.
    pub fn from_vec_f64(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::ShapeMismatch(format!(
                "buffer length {} != {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data: MatData::F64(data) })
    }

    /// Builds an fp32 matrix from a row-major buffer.
    pub fn from_vec_f32(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::ShapeMismatch(format!(
                "buffer length {} != {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data: MatData::F32(data) })
    }

    /// Wraps an owned fp64 ndarray without copying (when contiguous).
    pub fn from_array_f64(a: Array2<f64>) -> Self {
        let (rows, cols) = a.dim();
        let data = array_to_vec(a);
        Self { rows, cols, data: MatData::F64(data) }
    }

    /// Wraps an owned fp32 ndarray without copying (when contiguous).
    pub fn from_array_f32(a: Array2<f32>) -> Self {
        let (rows, cols) = a.dim();
        let data = array_to_vec(a);
        Self { rows, cols, data: MatData::F32(data) }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn precision(&self) -> Precision {
        match self.data {
            MatData::F32(_) => Precision::Fp32,
            MatData::F64(_) => Precision::Fp64,
        }
    }

    /// Entry at (row, col), widened to f64.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        assert!(row < self.rows && col < self.cols, "index out of bounds");
        let i = row * self.cols + col;
        match &self.data {
            MatData::F32(v) => v[i] as f64,
            MatData::F64(v) => v[i],
        }
    }

    /// True when every entry is finite.
    pub fn is_finite(&self) -> bool {
        match &self.data {
            MatData::F32(v) => v.iter().all(|x| x.is_finite()),
            MatData::F64(v) => v.iter().all(|x| x.is_finite()),
        }
    }

    /// Copy of the contents as an fp64 ndarray (widening is exact).
    pub fn to_f64_array(&self) -> Array2<f64> {
        match &self.data {
            MatData::F32(v) => {
                Array2::from_shape_vec((self.rows, self.cols), v.iter().map(|x| *x as f64).collect())
                    .expect("length invariant")
            }
            MatData::F64(v) => {
                Array2::from_shape_vec((self.rows, self.cols), v.clone()).expect("length invariant")
            }
        }
    }

    /// Copy of the contents as an fp32 ndarray (narrowing rounds to nearest).
    pub fn to_f32_array(&self) -> Array2<f32> {
        match &self.data {
            MatData::F32(v) => {
                Array2::from_shape_vec((self.rows, self.cols), v.clone()).expect("length invariant")
            }
            MatData::F64(v) => {
                Array2::from_shape_vec((self.rows, self.cols), v.iter().map(|x| *x as f32).collect())
                    .expect("length invariant")
            }
        }
    }

    /// Returns a copy tagged with `precision`, converting storage if needed.
    pub fn with_precision(&self, precision: Precision) -> DenseMatrix {
        match precision {
            Precision::Fp32 => DenseMatrix::from_array_f32(self.to_f32_array()),
            Precision::Fp64 => DenseMatrix::from_array_f64(self.to_f64_array()),
        }
    }

    /// Borrowed fp64 view; `None` when the matrix is stored as fp32.
    pub fn view_f64(&self) -> Option<ArrayView2<'_, f64>> {
        match &self.data {
            MatData::F64(v) => Some(
                ArrayView2::from_shape((self.rows, self.cols), v.as_slice())
                    .expect("length invariant"),
            ),
            MatData::F32(_) => None,
        }
    }

    /// Borrowed fp32 view; `None` when the matrix is stored as fp64.
    pub fn view_f32(&self) -> Option<ArrayView2<'_, f32>> {
        match &self.data {
            MatData::F32(v) => Some(
                ArrayView2::from_shape((self.rows, self.cols), v.as_slice())
                    .expect("length invariant"),
            ),
            MatData::F64(_) => None,
        }
    }
}

fn array_to_vec<T: Clone>(a: Array2<T>) -> Vec<T> {
    if a.is_standard_layout() {
        let (v, _) = a.into_raw_vec_and_offset();
        v
    } else {
        a.iter().cloned().collect()
    }
}

/// Outcome of a minimum-norm least-squares solve.
///
/// Scalars are widened to f64 for reporting regardless of the precision the
/// solve ran in; widening is exact, so no information is lost.
#[derive(Debug, Clone)]
pub struct LstsqResult {
    /// The minimum-norm minimizer of ‖Aw − b‖₂, length = cols.
    pub solution: Vec<f64>,
    /// ‖A·solution − b‖₂, computed directly (not from the SVD identity).
    pub residual_norm: f64,
    /// Number of singular values above the rcond cutoff.
    pub effective_rank: usize,
    /// All min(rows, cols) singular values, nonincreasing.
    pub singular_values: Vec<f64>,
}

impl LstsqResult {
    /// σ_max/σ_min over the stored singular values; +∞ when σ_min = 0.
    pub fn condition_number(&self) -> f64 {
        match (self.singular_values.first(), self.singular_values.last()) {
            (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
            _ => f64::INFINITY,
        }
    }
}

/// Scalar types the generic kernels run in (f32 or f64).
pub(crate) trait Real: Lapack + Scalar<Real = Self> + NdFloat + std::iter::Sum {
    /// Exact widening to f64.
    fn widen(self) -> f64;
    /// Precision tag of this scalar type.
    fn precision() -> Precision;
}
impl Real for f32 {
    fn widen(self) -> f64 {
        self as f64
    }
    fn precision() -> Precision {
        Precision::Fp32
    }
}
impl Real for f64 {
    fn widen(self) -> f64 {
        self
    }
    fn precision() -> Precision {
        Precision::Fp64
    }
}

/// Minimum-norm least squares: `argmin ‖Aw − b‖₂`, smallest ‖w‖ among ties.
///
/// Computed by SVD; singular values below `max(rows, cols)·ε·σ_max` are
/// treated as zero. The solve runs in the matrix's tagged precision.
pub fn lstsq(a: &DenseMatrix, b: &[f64]) -> Result<LstsqResult, LinalgError> {
    check_system(a, b)?;
    match &a.data {
        MatData::F64(_) => {
            let av = a.view_f64().expect("tagged fp64");
            let bv = Array1::from_iter(b.iter().copied());
            lstsq_nd(&av, &bv.view()).map(widen_result)
        }
        MatData::F32(_) => {
            let av = a.view_f32().expect("tagged fp32");
            let bv: Array1<f32> = b.iter().map(|x| *x as f32).collect();
            lstsq_nd(&av, &bv.view()).map(widen_result)
        }
    }
}

/// Mean-squared residual of the min-norm solve and its gradient w.r.t. A.
///
/// `loss = (1/rows)‖Aw − b‖²` at the minimizer; `gradA = (2/rows)·r wᵀ` with
/// `r = Aw − b`. The cross term through ∂w/∂A vanishes because w is stationary
/// for the inner problem (envelope theorem), so this is the exact total
/// derivative whenever the loss is evaluated on the same system that was
/// solved.
pub fn lstsq_value_gradient(
    a: &DenseMatrix,
    b: &[f64],
) -> Result<(f64, DenseMatrix), LinalgError> {
    check_system(a, b)?;
    match &a.data {
        MatData::F64(_) => {
            let av = a.view_f64().expect("tagged fp64");
            let bv = Array1::from_iter(b.iter().copied());
            let (loss, grad) = value_gradient_nd(&av, &bv.view())?;
            Ok((loss.widen(), DenseMatrix::from_array_f64(grad)))
        }
        MatData::F32(_) => {
            let av = a.view_f32().expect("tagged fp32");
            let bv: Array1<f32> = b.iter().map(|x| *x as f32).collect();
            let (loss, grad) = value_gradient_nd(&av, &bv.view())?;
            Ok((loss.widen(), DenseMatrix::from_array_f32(grad)))
        }
    }
}

/// Pullback of the map `A ↦ lstsq(A, b).solution` under the cotangent `gbar`.
///
/// Requires full column rank at the rcond cutoff; `w` must be the solution the
/// caller obtained from [`lstsq`] on the same system. Returns
/// `Ā = r sᵀ − (A s) wᵀ` with `r = b − Aw` and `s = (AᵀA)⁻¹ gbar`.
pub fn lstsq_vjp(
    a: &DenseMatrix,
    b: &[f64],
    w: &[f64],
    gbar: &[f64],
) -> Result<DenseMatrix, LinalgError> {
    check_system(a, b)?;
    if w.len() != a.cols || gbar.len() != a.cols {
        return Err(LinalgError::ShapeMismatch(format!(
            "w length {} and gbar length {} must equal cols {}",
            w.len(),
            gbar.len(),
            a.cols
        )));
    }
    if !w.iter().all(|x| x.is_finite()) || !gbar.iter().all(|x| x.is_finite()) {
        return Err(LinalgError::InvalidInput("w/gbar"));
    }
    match &a.data {
        MatData::F64(_) => {
            let av = a.view_f64().expect("tagged fp64");
            let bv = Array1::from_iter(b.iter().copied());
            let wv = Array1::from_iter(w.iter().copied());
            let gv = Array1::from_iter(gbar.iter().copied());
            vjp_nd(&av, &bv.view(), &wv.view(), &gv.view()).map(DenseMatrix::from_array_f64)
        }
        MatData::F32(_) => {
            let av = a.view_f32().expect("tagged fp32");
            let bv: Array1<f32> = b.iter().map(|x| *x as f32).collect();
            let wv: Array1<f32> = w.iter().map(|x| *x as f32).collect();
            let gv: Array1<f32> = gbar.iter().map(|x| *x as f32).collect();
            vjp_nd(&av, &bv.view(), &wv.view(), &gv.view()).map(DenseMatrix::from_array_f32)
        }
    }
}

/// 2-norm condition number σ_max/σ_min; +∞ when the smallest singular value
/// is exactly zero.
pub fn condition_number(a: &DenseMatrix) -> Result<f64, LinalgError> {
    if a.rows == 0 || a.cols == 0 {
        return Err(LinalgError::ShapeMismatch("empty matrix".into()));
    }
    if !a.is_finite() {
        return Err(LinalgError::InvalidInput("matrix"));
    }
    let sigma: Vec<f64> = match &a.data {
        MatData::F64(_) => singular_values(&a.view_f64().expect("tagged fp64"))?
            .iter()
            .map(|x| *x as f64)
            .collect(),
        MatData::F32(_) => singular_values(&a.view_f32().expect("tagged fp32"))?
            .iter()
            .map(|x| *x as f64)
            .collect(),
    };
    match (sigma.first(), sigma.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => Ok(hi / lo),
        _ => Ok(f64::INFINITY),
    }
}

fn check_system(a: &DenseMatrix, b: &[f64]) -> Result<(), LinalgError> {
    if a.rows == 0 || a.cols == 0 {
        return Err(LinalgError::ShapeMismatch("empty matrix".into()));
    }
    if b.len() != a.rows {
        return Err(LinalgError::ShapeMismatch(format!(
            "b length {} != rows {}",
            b.len(),
            a.rows
        )));
    }
    if !a.is_finite() {
        return Err(LinalgError::InvalidInput("matrix"));
    }
    if !b.iter().all(|x| x.is_finite()) {
        return Err(LinalgError::InvalidInput("rhs"));
    }
    Ok(())
}

fn widen_result<T: Real>(r: NdLstsq<T>) -> LstsqResult {
    LstsqResult {
        solution: r.w.iter().map(|x| x.widen()).collect(),
        residual_norm: r.residual_norm.widen(),
        effective_rank: r.rank,
        singular_values: r.sigma.iter().map(|x| x.widen()).collect(),
    }
}

/// Native-precision lstsq outcome used by the hot paths.
pub(crate) struct NdLstsq<T> {
    pub w: Array1<T>,
    pub residual_norm: T,
    pub rank: usize,
    pub sigma: Array1<T>,
}

/// rcond cutoff factor for an m×n system in precision T.
fn rcond<T: Real>(m: usize, n: usize) -> T {
    T::from(m.max(n)).expect("dimension fits") * T::epsilon()
}

/// SVD route shared by [`lstsq`] and the gradient ops.
pub(crate) fn lstsq_nd<T: Real>(
    a: &ArrayView2<'_, T>,
    b: &ArrayView1<'_, T>,
) -> Result<NdLstsq<T>, LinalgError> {
    let (m, n) = a.dim();
    let (u, sigma, vt) = a
        .svddc(JobSvd::Some)
        .map_err(|e| LinalgError::Backend(e.to_string()))?;
    let u = u.expect("JobSvd::Some returns U");
    let vt = vt.expect("JobSvd::Some returns VT");
    let cutoff = rcond::<T>(m, n) * sigma[0];
    let rank = sigma.iter().take_while(|s| **s > cutoff).count();
    let w = if rank == 0 {
        Array1::zeros(n)
    } else {
        // w = V · diag(1/σ) · Uᵀ b over the retained components.
        let mut c = u.slice(ndarray::s![.., ..rank]).t().dot(b);
        for (ci, si) in c.iter_mut().zip(sigma.iter()) {
            *ci = *ci / *si;
        }
        vt.slice(ndarray::s![..rank, ..]).t().dot(&c)
    };
    let residual_norm = norm2(&(a.dot(&w) - b).view());
    Ok(NdLstsq { w, residual_norm, rank, sigma })
}

/// Loss and gradA in native precision; see [`lstsq_value_gradient`].
pub(crate) fn value_gradient_nd<T: Real>(
    a: &ArrayView2<'_, T>,
    b: &ArrayView1<'_, T>,
) -> Result<(T, Array2<T>), LinalgError> {
    let sol = lstsq_nd(a, b)?;
    let m = T::from(a.nrows()).expect("dimension fits");
    let r = a.dot(&sol.w) - b;
    let loss = r.iter().map(|x| *x * *x).sum::<T>() / m;
    let scale = T::from(2.0).expect("literal") / m;
    let grad = outer_scaled(&r.view(), &sol.w.view(), scale);
    Ok((loss, grad))
}

/// VJP in native precision; see [`lstsq_vjp`].
pub(crate) fn vjp_nd<T: Real>(
    a: &ArrayView2<'_, T>,
    b: &ArrayView1<'_, T>,
    w: &ArrayView1<'_, T>,
    gbar: &ArrayView1<'_, T>,
) -> Result<Array2<T>, LinalgError> {
    let (m, n) = a.dim();
    let (u, sigma, vt) = a
        .svddc(JobSvd::Some)
        .map_err(|e| LinalgError::Backend(e.to_string()))?;
    let _ = u;
    let vt = vt.expect("JobSvd::Some returns VT");
    let cutoff = rcond::<T>(m, n) * sigma[0];
    let rank = sigma.iter().take_while(|s| **s > cutoff).count();
    if rank < n {
        return Err(LinalgError::RankDeficient { rank, cols: n });
    }
    // s = (AᵀA)⁻¹ gbar = V Σ⁻² Vᵀ gbar, using the full-rank SVD factors.
    let mut c = vt.dot(gbar);
    for (ci, si) in c.iter_mut().zip(sigma.iter()) {
        *ci = *ci / (*si * *si);
    }
    let s = vt.t().dot(&c);
    let r = b - &a.dot(w);
    let a_s = a.dot(&s);
    let mut grad = outer_scaled(&r.view(), &s.view(), T::one());
    let neg = outer_scaled(&a_s.view(), &w.view(), T::one());
    grad -= &neg;
    Ok(grad)
}

/// Singular values only (cheapest SVD job), nonincreasing.
fn singular_values<T: Real>(a: &ArrayView2<'_, T>) -> Result<Array1<T>, LinalgError> {
    let (_, sigma, _) = a
        .svddc(JobSvd::None)
        .map_err(|e| LinalgError::Backend(e.to_string()))?;
    Ok(sigma)
}

/// Relative Tikhonov weight of the training inner solve (see
/// [`lstsq_train_nd`]).
pub(crate) const TRAIN_RIDGE: f64 = 1e-10;

/// Refinement passes applied after the initial ridge solve (see
/// [`lstsq_train_nd`]).
pub(crate) const TRAIN_REFINE: usize = 5;

/// Inner solve for the training loop.
///
/// In single precision this is the plain min-norm solve ([`lstsq_nd`]):
/// forming AᵀA would square the condition number straight into the f32
/// noise floor, and the ε-scaled singular-value cutoff (max(m,n)·ε₃₂ ≈
/// 5e-4 relative) already bounds the coefficients of weak directions, which
/// is all the regularization the training loop needs.
///
/// In double precision the cutoff sits at ~1e-12 relative and behaves very
/// differently: a freshly initialized network's column space decays
/// geometrically through it, truncated directions get exactly zero loss
/// gradient and never differentiate, while barely-kept directions receive
/// coefficients up to ~1e12 and slam the parameters. The f64 path therefore
/// solves the ridge-stabilized normal equations (AᵀA + λI)w = Aᵀb with
/// λ = [`TRAIN_RIDGE`]·mean(diag(AᵀA)), factored by Cholesky and polished
/// by [`TRAIN_REFINE`] iterated-Tikhonov refinement passes
/// `w ← w + (AᵀA + λI)⁻¹·(Aᵀb − AᵀA·w)` reusing the factor. Each pass
/// multiplies the per-direction bias by λ/(σ² + λ), so directions above the
/// ridge knee converge to the exact least-squares solution (targets inside
/// the column space fit to machine precision) while sub-knee directions
/// stay damped and finite. The H×H normal-equation factor is also several
/// times cheaper than an N×H SVD, which dominates the training budget.
/// Test-time solves always keep the exact min-norm path.
///
/// Returns the solution and a full-rank/fast-path flag.
pub(crate) fn lstsq_train_nd<T: Real>(
    a: &Array2<T>,
    b: &ArrayView1<'_, T>,
) -> Result<(Array1<T>, bool), LinalgError> {
    use ndarray_linalg::cholesky::{FactorizeC, SolveC, UPLO};
    if T::precision() == Precision::Fp32 {
        let sol = lstsq_nd(&a.view(), b)?;
        let full = sol.rank == a.ncols();
        return Ok((sol.w, full));
    }
    let n = a.ncols();
    let gram = a.t().dot(a);
    let trace_mean = (0..n).map(|i| gram[[i, i]]).sum::<T>() / T::from(n).expect("dimension fits");
    let lambda = T::from(TRAIN_RIDGE).expect("literal") * trace_mean;
    let mut regularized = gram.clone();
    for i in 0..n {
        regularized[[i, i]] = regularized[[i, i]] + lambda;
    }
    let rhs = a.t().dot(b);
    if let Ok(factor) = regularized.factorizec(UPLO::Lower) {
        if let Ok(mut w) = factor.solvec(&rhs) {
            let mut healthy = w.iter().all(|x| x.is_finite());
            for _ in 0..TRAIN_REFINE {
                if !healthy {
                    break;
                }
                let defect = &rhs - &gram.dot(&w);
                match factor.solvec(&defect) {
                    Ok(dw) => {
                        w += &dw;
                        healthy = w.iter().all(|x| x.is_finite());
                    }
                    Err(_) => healthy = false,
                }
            }
            if healthy {
                return Ok((w, true));
            }
        }
    }
    // Gram matrix not numerically positive definite even with the ridge
    // (pathological scaling); fall back to the exact min-norm route.
    let sol = lstsq_nd(&a.view(), b)?;
    let full = sol.rank == a.ncols();
    Ok((sol.w, full))
}

/// Same-point loss and matrix gradient using the training inner solve:
/// loss = ‖Aw − b‖²/m, gradA = (2/m)·r·wᵀ with r = Aw − b. The gradient is
/// the envelope derivative of the ridge-regularized objective evaluated at
/// its minimizer (the penalty term has no direct dependence on A), so it is
/// exact for the surrogate and within O(λ) of [`value_gradient_nd`] on
/// well-conditioned systems.
pub(crate) fn value_gradient_train_nd<T: Real>(
    a: &Array2<T>,
    b: &ArrayView1<'_, T>,
) -> Result<(T, Array2<T>), LinalgError> {
    let (w, _full) = lstsq_train_nd(a, b)?;
    let m = T::from(a.nrows()).expect("dimension fits");
    let r = a.dot(&w) - b;
    let loss = r.iter().map(|x| *x * *x).sum::<T>() / m;
    let scale = T::from(2.0).expect("literal") / m;
    let grad = outer_scaled(&r.view(), &w.view(), scale);
    Ok((loss, grad))
}

/// ‖v‖₂ with sequential accumulation (deterministic).
pub(crate) fn norm2<T: Real>(v: &ArrayView1<'_, T>) -> T {
    num_traits::Float::sqrt(v.iter().map(|x| *x * *x).sum::<T>())
}

/// scale · column · rowᵀ as a dense matrix.
pub(crate) fn outer_scaled<T: Real>(
    col: &ArrayView1<'_, T>,
    row: &ArrayView1<'_, T>,
    scale: T,
) -> Array2<T> {
    let mut out = Array2::zeros((col.len(), row.len()));
    for (i, ci) in col.iter().enumerate() {
        let f = *ci * scale;
        for (j, rj) in row.iter().enumerate() {
            out[[i, j]] = f * *rj;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mat(rows: usize, cols: usize, data: &[f64]) -> DenseMatrix {
        DenseMatrix::from_vec_f64(rows, cols, data.to_vec()).unwrap()
    }

    #[test]
    fn identity_solve_is_exact() {
        let a = mat(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let r = lstsq(&a, &[3.0, 4.0]).unwrap();
        assert_relative_eq!(r.solution[0], 3.0, max_relative = 1e-14);
        assert_relative_eq!(r.solution[1], 4.0, max_relative = 1e-14);
        assert!(r.residual_norm < 1e-14);
        assert_eq!(r.effective_rank, 2);
    }

    #[test]
    fn overdetermined_column_averages() {
        // Normal equations by hand: w = (AᵀA)⁻¹Aᵀb = (1+3)/2 = 2,
        // residual vector (−1, 1), norm √2.
        let a = mat(2, 1, &[1.0, 1.0]);
        let r = lstsq(&a, &[1.0, 3.0]).unwrap();
        assert_relative_eq!(r.solution[0], 2.0, max_relative = 1e-12);
        assert_relative_eq!(r.residual_norm, 2f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn underdetermined_takes_min_norm_solution() {
        // Solutions of w₁+w₂ = 2 form a line; a grid scan of ‖w‖ over the
        // parametrization (t, 2−t) bottoms out at t = 1.
        let mut best = (f64::INFINITY, 0.0);
        let mut t = -3.0;
        while t <= 5.0 {
            let n = (t * t + (2.0 - t) * (2.0 - t)).sqrt();
            if n < best.0 {
                best = (n, t);
            }
            t += 1e-4;
        }
        assert!((best.1 - 1.0).abs() < 1e-3);

        let a = mat(1, 2, &[1.0, 1.0]);
        let r = lstsq(&a, &[2.0]).unwrap();
        assert_relative_eq!(r.solution[0], 1.0, max_relative = 1e-12);
        assert_relative_eq!(r.solution[1], 1.0, max_relative = 1e-12);
        assert!(r.residual_norm < 1e-12);
        assert_eq!(r.effective_rank, 1);
    }

    #[test]
    fn zero_matrix_reports_rank_zero_not_error() {
        let a = mat(3, 2, &[0.0; 6]);
        let r = lstsq(&a, &[1.0, 2.0, 2.0]).unwrap();
        assert_eq!(r.effective_rank, 0);
        assert!(r.solution.iter().all(|x| *x == 0.0));
        assert_relative_eq!(r.residual_norm, 3.0, max_relative = 1e-14);
    }

    #[test]
    fn non_finite_entries_are_rejected() {
        let a = mat(2, 2, &[1.0, f64::NAN, 0.0, 1.0]);
        assert!(matches!(lstsq(&a, &[1.0, 1.0]), Err(LinalgError::InvalidInput(_))));
        let a = mat(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert!(matches!(
            lstsq(&a, &[1.0, f64::INFINITY]),
            Err(LinalgError::InvalidInput(_))
        ));
        assert!(matches!(
            condition_number(&mat(1, 1, &[f64::NEG_INFINITY])),
            Err(LinalgError::InvalidInput(_))
        ));
    }

    #[test]
    fn value_gradient_exact_fit_is_zero() {
        let a = mat(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let (loss, grad) = lstsq_value_gradient(&a, &[5.0, -3.0]).unwrap();
        assert!(loss < 1e-28);
        for i in 0..2 {
            for j in 0..2 {
                assert!(grad.get(i, j).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn value_gradient_hand_case() {
        // w = 2, r = Aw − b = (1, −1): loss = ‖r‖²/2 = 1,
        // gradA = (2/2)·r·wᵀ = [[2], [−2]].
        let a = mat(2, 1, &[1.0, 1.0]);
        let (loss, grad) = lstsq_value_gradient(&a, &[1.0, 3.0]).unwrap();
        assert_relative_eq!(loss, 1.0, max_relative = 1e-12);
        assert_relative_eq!(grad.get(0, 0), 2.0, max_relative = 1e-12);
        assert_relative_eq!(grad.get(1, 0), -2.0, max_relative = 1e-12);
    }

    #[test]
    fn vjp_zero_cotangent_gives_zero() {
        let a = mat(3, 2, &[1.0, 2.0, 0.5, -1.0, 3.0, 0.25]);
        let r = lstsq(&a, &[1.0, 2.0, 3.0]).unwrap();
        let grad = lstsq_vjp(&a, &[1.0, 2.0, 3.0], &r.solution, &[0.0, 0.0]).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                assert_eq!(grad.get(i, j), 0.0);
            }
        }
    }

    #[test]
    fn vjp_exact_fit_drops_residual_term() {
        // Square invertible with b in range: r = 0, so Ā = −(A s) wᵀ.
        let a = mat(2, 2, &[2.0, 1.0, 0.0, 3.0]);
        let b = [4.0, 6.0];
        let sol = lstsq(&a, &b).unwrap();
        let gbar = [1.0, -2.0];
        let grad = lstsq_vjp(&a, &b, &sol.solution, &gbar).unwrap();

        let av = a.to_f64_array();
        let ata = av.t().dot(&av);
        // 2×2 inverse by hand for s = (AᵀA)⁻¹ gbar.
        let det = ata[[0, 0]] * ata[[1, 1]] - ata[[0, 1]] * ata[[1, 0]];
        let s = [
            (ata[[1, 1]] * gbar[0] - ata[[0, 1]] * gbar[1]) / det,
            (-ata[[1, 0]] * gbar[0] + ata[[0, 0]] * gbar[1]) / det,
        ];
        let a_s = [
            av[[0, 0]] * s[0] + av[[0, 1]] * s[1],
            av[[1, 0]] * s[0] + av[[1, 1]] * s[1],
        ];
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(
                    grad.get(i, j),
                    -a_s[i] * sol.solution[j],
                    max_relative = 1e-10,
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn vjp_rejects_rank_deficiency() {
        let a = mat(3, 2, &[1.0, 1.0, 2.0, 2.0, -1.0, -1.0]);
        let sol = lstsq(&a, &[1.0, 2.0, 3.0]).unwrap();
        let err = lstsq_vjp(&a, &[1.0, 2.0, 3.0], &sol.solution, &[1.0, 1.0]);
        assert!(matches!(err, Err(LinalgError::RankDeficient { rank: 1, cols: 2 })));
    }

    #[test]
    fn condition_number_of_diagonals() {
        assert_relative_eq!(
            condition_number(&mat(2, 2, &[1.0, 0.0, 0.0, 1.0])).unwrap(),
            1.0,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            condition_number(&mat(2, 2, &[1.0, 0.0, 0.0, 10.0])).unwrap(),
            10.0,
            max_relative = 1e-12
        );
        assert_eq!(
            condition_number(&mat(2, 2, &[1.0, 0.0, 0.0, 0.0])).unwrap(),
            f64::INFINITY
        );
    }

    #[test]
    fn fp32_tag_runs_single_precision_arithmetic() {
        // π is not representable in f32; an fp32-tagged solve must round it.
        let a = DenseMatrix::from_vec_f32(1, 1, vec![1.0]).unwrap();
        let r = lstsq(&a, &[std::f64::consts::PI]).unwrap();
        assert_eq!(r.solution[0], std::f64::consts::PI as f32 as f64);
        assert_ne!(r.solution[0], std::f64::consts::PI);
    }

    #[test]
    fn train_solve_matches_svd_route_when_full_rank() {
        let mut state = 7u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for _ in 0..10 {
            let a = Array2::from_shape_fn((12, 5), |_| next());
            let b = Array1::from_shape_fn(12, |_| next());
            let (w_train, on_fast_path) = lstsq_train_nd(&a, &b.view()).unwrap();
            assert!(on_fast_path);
            let w_svd = lstsq_nd(&a.view(), &b.view()).unwrap().w;
            for (x, y) in w_train.iter().zip(w_svd.iter()) {
                assert_relative_eq!(x, y, max_relative = 1e-8, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn train_solve_in_single_precision_is_truncated_min_norm() {
        // The f32 route must skip the normal equations entirely: at condition
        // number ~3e4 the Gram matrix would be pure noise in f32 (cond² ≈ 1e9
        // exceeds 1/ε₃₂), while the direct SVD solve is still accurate.
        let theta = 3e-5f32;
        let a = Array2::from_shape_vec(
            (4, 2),
            vec![1.0, 1.0, 1.0, 1.0 + theta, 1.0, 1.0 - theta, 1.0, 1.0],
        )
        .unwrap();
        let b = Array1::from_vec(vec![1.0f32, 1.0 + theta, 1.0 - theta, 1.0]);
        let (w, full) = lstsq_train_nd(&a, &b.view()).unwrap();
        assert!(full, "both directions sit above the f32 cutoff");
        let r = a.dot(&w) - &b;
        let rnorm = r.iter().map(|x| x * x).sum::<f32>().sqrt();
        assert!(rnorm < 1e-5, "residual {rnorm} too large for an SVD solve");
        // Exact delegation: same coefficients as the test-time min-norm path.
        let direct = lstsq_nd(&a.view(), &b.view()).unwrap();
        assert_eq!(w, direct.w);

        // Below the cutoff the weak direction is truncated, not slammed:
        // coefficients stay O(1) and the near-parallel columns share weight.
        let tiny = 1e-8f32;
        let a2 = Array2::from_shape_vec(
            (3, 2),
            vec![1.0, 1.0, 1.0, 1.0 + tiny, 1.0, 1.0 - tiny],
        )
        .unwrap();
        let b2 = Array1::from_vec(vec![1.0f32, 2.0, 0.0]);
        let (w2, full2) = lstsq_train_nd(&a2, &b2.view()).unwrap();
        assert!(!full2, "perturbation below ε₃₂ must be truncated");
        assert!(w2.iter().all(|x| x.abs() < 2.0), "truncated solve stays bounded: {w2:?}");
        assert_relative_eq!(w2[0], w2[1], max_relative = 1e-3);
    }

    #[test]
    fn train_solve_keeps_weak_directions_active() {
        // Two nearly-parallel columns: the exact min-norm route truncates the
        // weak direction (effective rank 1, equal coefficients), while the
        // training solve keeps it active so gradient signal can reach it.
        let eps = 1e-16;
        let a = Array2::from_shape_vec(
            (3, 2),
            vec![1.0, 1.0, 1.0, 1.0 + eps, 1.0, 1.0 - eps],
        )
        .unwrap();
        let b = Array1::from_vec(vec![1.0, 2.0, 0.0]);
        let svd = lstsq_nd(&a.view(), &b.view()).unwrap();
        assert_eq!(svd.rank, 1);
        let (w, _) = lstsq_train_nd(&a, &b.view()).unwrap();
        assert!(w.iter().all(|x| f64::is_finite(*x)));
        assert!(
            (w[0] - w[1]).abs() > (svd.w[0] - svd.w[1]).abs(),
            "training solve should separate the nearly-parallel columns: {w:?} vs {:?}",
            svd.w
        );
    }

    #[test]
    fn shape_mismatches_are_reported() {
        assert!(DenseMatrix::from_vec_f64(2, 2, vec![0.0; 3]).is_err());
        let a = mat(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert!(matches!(lstsq(&a, &[1.0]), Err(LinalgError::ShapeMismatch(_))));
    }
}
