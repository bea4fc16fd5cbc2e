//! Collocation assembly and Newton solves on a frozen basis dictionary.
//!
//! The basis network is evaluated exactly once per solve — values and the
//! axis derivatives the operator needs at the interior points, values and
//! gradients at the boundary points. Those frozen blocks feed a damping-free
//! Newton–Raphson loop: at the current coefficients w, the interior rows of
//! the stacked matrix A hold the analytic linearization of the operator
//! around u = Φ·w, the boundary rows hold the (already linear) boundary
//! functionals, and the update solves the minimum-norm least-squares system
//! A·Δw = −R. Linear problems converge in a single step, so K is forced to 1
//! for them; nonlinear problems run a fixed iteration budget (default 64)
//! with no early exit, which keeps residual histories comparable across runs.
//!
//! Precision modes: `fp64` runs everything in double precision; `fp32` casts
//! the weights and runs the network and the least-squares solve in single
//! precision; `mixed` evaluates the network in single precision and promotes
//! the assembled blocks to double before the least-squares solve — the
//! configuration that isolates whether accuracy is limited by evaluation
//! arithmetic or by solve arithmetic.

use crate::linalg::{lstsq, DenseMatrix, LinalgError, Precision};
use crate::network::{forward, forward_jets, BasisParams, NetworkError};
use crate::pde::{
    apply_operator, axis_order, boundary_target, forcing, sample_points, BcTag,
    CollocationPoints, OperatorTag, PDEProblem, SolutionJets, ALLEN_CAHN_NU, BURGERS_NU,
    HELMHOLTZ_K,
};
use ndarray::{Array1, Array2, Axis};
use rand_chacha::{rand_core::SeedableRng, ChaCha12Rng};
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

/// Newton iteration budget for nonlinear problems when none is requested.
pub const DEFAULT_NEWTON_ITERS: usize = 64;
/// Evaluation points for the solution-error estimate.
pub const DEFAULT_N_EVAL: usize = 10_000;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("assembly failed: {0}")]
    Assembly(String),
    #[error("newton iteration {iteration} produced a non-finite state")]
    DivergedSolve { iteration: usize },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Arithmetic configuration of one solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecisionMode {
    /// Single-precision weights, network evaluation, and least-squares solve.
    Fp32,
    /// Single-precision network evaluation; the assembled blocks are promoted
    /// to double for the least-squares solve.
    Mixed,
    /// Double precision end to end.
    Fp64,
}

impl std::fmt::Display for PrecisionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PrecisionMode::Fp32 => "fp32",
            PrecisionMode::Mixed => "mixed",
            PrecisionMode::Fp64 => "fp64",
        })
    }
}

impl std::str::FromStr for PrecisionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<PrecisionMode, String> {
        match s {
            "fp32" => Ok(PrecisionMode::Fp32),
            "mixed" => Ok(PrecisionMode::Mixed),
            "fp64" => Ok(PrecisionMode::Fp64),
            _ => Err(format!("unknown precision '{s}' (expected fp32, mixed, or fp64)")),
        }
    }
}

/// Origin of a row in the stacked system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    Interior,
    Boundary,
}

/// One assembled Newton system: interior rows first, then boundary rows.
#[derive(Debug, Clone)]
pub struct CollocationSystem {
    /// Stacked linearization, (N + N_b)×H.
    pub a: Array2<f64>,
    /// Stacked residual: operator(u) − f on interior rows, bc(u) − g on
    /// boundary rows. The Newton step solves A·Δw = −R.
    pub residual: Array1<f64>,
    /// Provenance tag per row.
    pub provenance: Vec<RowKind>,
}

/// Frozen basis evaluations and right-hand-side data for one point set.
///
/// `interior_derivs[axis]` holds the derivative matrices `[Φ_d1, Φ_d2, …]`
/// along that axis, up to the order the operator needs. Built from a network
/// by [`eval_blocks`], or by hand when the dictionary is an explicit list of
/// closed-form functions (as the exact-span tests do).
#[derive(Debug, Clone)]
pub struct BasisBlocks {
    /// Φ at interior points, N×H.
    pub phi_interior: Array2<f64>,
    /// Axis-wise interior derivative stacks.
    pub interior_derivs: Vec<Vec<Array2<f64>>>,
    /// Φ at boundary points, N_b×H.
    pub phi_boundary: Array2<f64>,
    /// First derivative along each axis at boundary points.
    pub boundary_grads: Vec<Array2<f64>>,
    /// Manufactured forcing at interior points.
    pub forcing: Vec<f64>,
    /// Boundary-condition targets.
    pub targets: Vec<f64>,
}

/// Wall-clock seconds per solve phase.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub basis_eval_seconds: f64,
    pub assembly_seconds: f64,
    pub solve_seconds: f64,
}

/// Outcome of one collocation solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    /// Problem name, including any geometry suffix.
    pub problem: String,
    /// Basis coefficients, length H.
    pub coefficients: Vec<f64>,
    /// Solution error against the exact solution over uniform interior points.
    pub rmse: f64,
    /// Condition number of the first-iteration stacked matrix.
    pub cond: f64,
    /// ‖R‖₂ at the start of each Newton iteration; length = iterations run.
    pub residual_history: Vec<f64>,
    pub timings: PhaseTimings,
    pub precision: PrecisionMode,
    /// Newton iterations actually performed.
    pub newton_iters: usize,
}

impl PrecisionMode {
    /// Precision the least-squares systems are solved in.
    fn solve_precision(self) -> Precision {
        match self {
            PrecisionMode::Fp32 => Precision::Fp32,
            PrecisionMode::Mixed | PrecisionMode::Fp64 => Precision::Fp64,
        }
    }

    /// Parameters as seen by this mode: fp64 masters untouched for `fp64`,
    /// cast to single precision for `fp32` and `mixed` (both evaluate the
    /// network in single-precision arithmetic; they differ in the solve).
    fn effective_params(self, params: &BasisParams) -> BasisParams {
        match self {
            PrecisionMode::Fp64 => params.clone(),
            PrecisionMode::Fp32 | PrecisionMode::Mixed => {
                params.with_precision(Precision::Fp32)
            }
        }
    }
}

/// Evaluates the frozen basis at the collocation points and precomputes the
/// manufactured right-hand sides. One call per solve; the Newton loop only
/// recombines these blocks.
pub fn eval_blocks(
    params: &BasisParams,
    problem: &PDEProblem,
    points: &CollocationPoints,
) -> Result<BasisBlocks, SolverError> {
    let d = problem.input_dim;
    if points.interior.ncols() != d {
        return Err(SolverError::Assembly(format!(
            "interior points have {} columns, problem needs {d}",
            points.interior.ncols()
        )));
    }

    let mut phi_interior = None;
    let mut interior_derivs = Vec::with_capacity(d);
    for axis in 0..d {
        let order = axis_order(problem.operator, axis);
        let block = forward_jets(params, points.interior.view(), axis, order)?;
        if phi_interior.is_none() {
            phi_interior = Some(block.phi.to_f64_array());
        }
        interior_derivs.push(block.derivs.iter().map(|m| m.to_f64_array()).collect());
    }
    let phi_interior = phi_interior.expect("input_dim ≥ 2");

    let n_b = points.boundary.nrows();
    let hidden = phi_interior.ncols();
    let (phi_boundary, boundary_grads) = if n_b == 0 {
        (Array2::zeros((0, hidden)), vec![Array2::zeros((0, hidden)); d])
    } else {
        let mut phi_b = None;
        let mut grads = Vec::with_capacity(d);
        for axis in 0..d {
            let block = forward_jets(params, points.boundary.view(), axis, 1)?;
            if phi_b.is_none() {
                phi_b = Some(block.phi.to_f64_array());
            }
            grads.push(block.derivs[0].to_f64_array());
        }
        (phi_b.expect("input_dim ≥ 2"), grads)
    };

    let forcing_vals: Vec<f64> = points
        .interior
        .rows()
        .into_iter()
        .map(|row| forcing(problem, row.as_slice().expect("contiguous")))
        .collect();
    let targets: Vec<f64> = (0..n_b)
        .map(|i| {
            let p: Vec<f64> = points.boundary.row(i).to_vec();
            let n: Vec<f64> = points.normals.row(i).to_vec();
            boundary_target(problem, &p, &n, points.bc[i])
        })
        .collect();

    let blocks = BasisBlocks {
        phi_interior,
        interior_derivs,
        phi_boundary,
        boundary_grads,
        forcing: forcing_vals,
        targets,
    };
    let finite = blocks.phi_interior.iter().all(|x| x.is_finite())
        && blocks.interior_derivs.iter().flatten().flatten().all(|x| x.is_finite())
        && blocks.phi_boundary.iter().all(|x| x.is_finite())
        && blocks.boundary_grads.iter().flatten().all(|x| x.is_finite())
        && blocks.forcing.iter().chain(&blocks.targets).all(|x| x.is_finite());
    if !finite {
        return Err(SolverError::Assembly("non-finite basis evaluation".into()));
    }
    Ok(blocks)
}

/// Derivative matrix of `blocks` along `axis` at `order` (1-based), checked.
fn deriv<'a>(
    blocks: &'a BasisBlocks,
    op: OperatorTag,
    axis: usize,
    order: usize,
) -> Result<&'a Array2<f64>, SolverError> {
    blocks.interior_derivs.get(axis).and_then(|stack| stack.get(order - 1)).ok_or_else(|| {
        SolverError::Assembly(format!(
            "operator {op:?} needs derivative order {order} along axis {axis}, \
             but the basis blocks do not provide it"
        ))
    })
}

/// Column-broadcast product: each row i of `m` scaled by `c[i]`.
fn scale_rows(m: &Array2<f64>, c: &Array1<f64>) -> Array2<f64> {
    m * &c.view().insert_axis(Axis(1))
}

/// Builds the Newton system at coefficients `w`: interior rows hold the
/// analytic linearization of the operator at u = Φ·w, boundary rows the
/// boundary functionals, and the residual holds operator(u) − f and
/// bc(u) − g. Boundary rows (matrix and residual) are scaled by
/// `boundary_weight`.
pub fn assemble(
    problem: &PDEProblem,
    blocks: &BasisBlocks,
    points: &CollocationPoints,
    w: &[f64],
    boundary_weight: f64,
) -> Result<CollocationSystem, SolverError> {
    let n = blocks.phi_interior.nrows();
    let n_b = blocks.phi_boundary.nrows();
    let hidden = blocks.phi_interior.ncols();
    let d = problem.input_dim;
    if w.len() != hidden {
        return Err(SolverError::Assembly(format!(
            "coefficient length {} does not match basis width {hidden}",
            w.len()
        )));
    }
    if !w.iter().all(|x| x.is_finite()) {
        return Err(SolverError::Assembly("non-finite coefficients".into()));
    }
    if points.interior.nrows() != n || points.boundary.nrows() != n_b {
        return Err(SolverError::Assembly(
            "point counts do not match the evaluated blocks".into(),
        ));
    }
    for axis in 0..d {
        deriv(blocks, problem.operator, axis, axis_order(problem.operator, axis))?;
    }

    let wv = Array1::from_iter(w.iter().copied());
    let op = problem.operator;

    // Current solution values and the derivative fields the operator reads.
    let u = blocks.phi_interior.dot(&wv);
    let du: Vec<Vec<Array1<f64>>> = (0..d)
        .map(|axis| blocks.interior_derivs[axis].iter().map(|m| m.dot(&wv)).collect())
        .collect();

    let d2sum = |a: usize, b: usize| -> Result<Array2<f64>, SolverError> {
        Ok(deriv(blocks, op, a, 2)? + deriv(blocks, op, b, 2)?)
    };

    let a_interior: Array2<f64> = match op {
        OperatorTag::Poisson | OperatorTag::HighFreqPoisson => -d2sum(0, 1)?,
        OperatorTag::Helmholtz => {
            -d2sum(0, 1)? - &(HELMHOLTZ_K * HELMHOLTZ_K * &blocks.phi_interior)
        }
        OperatorTag::VarCoeff => {
            let mut coeff_a = Array1::zeros(n);
            let mut coeff_ax = Array1::zeros(n);
            let mut coeff_ay = Array1::zeros(n);
            for (i, row) in points.interior.rows().into_iter().enumerate() {
                let (a, ax, ay) =
                    crate::pde::varcoeff_coefficient(row.as_slice().expect("contiguous"));
                coeff_a[i] = a;
                coeff_ax[i] = ax;
                coeff_ay[i] = ay;
            }
            -(scale_rows(&d2sum(0, 1)?, &coeff_a)
                + scale_rows(deriv(blocks, op, 0, 1)?, &coeff_ax)
                + scale_rows(deriv(blocks, op, 1, 1)?, &coeff_ay))
        }
        OperatorTag::SineGordon => {
            deriv(blocks, op, 1, 2)? - deriv(blocks, op, 0, 2)?
                + scale_rows(&blocks.phi_interior, &u.mapv(f64::cos))
        }
        OperatorTag::Kdv => {
            deriv(blocks, op, 1, 1)?
                + 6.0
                    * (scale_rows(&blocks.phi_interior, &du[0][0])
                        + scale_rows(deriv(blocks, op, 0, 1)?, &u))
                + deriv(blocks, op, 0, 3)?
        }
        OperatorTag::Poisson3d => d2sum(0, 1)? + deriv(blocks, op, 2, 2)?,
        OperatorTag::Burgers3d => {
            let advect = &du[0][0] + &du[1][0];
            deriv(blocks, op, 2, 1)?
                + scale_rows(&blocks.phi_interior, &advect)
                + scale_rows(&(deriv(blocks, op, 0, 1)? + deriv(blocks, op, 1, 1)?), &u)
                - BURGERS_NU * &d2sum(0, 1)?
        }
        OperatorTag::AllenCahn3d => {
            let reaction = u.mapv(|v| 3.0 * v * v - 1.0);
            deriv(blocks, op, 2, 1)?
                - ALLEN_CAHN_NU * &d2sum(0, 1)?
                + scale_rows(&blocks.phi_interior, &reaction)
        }
    };

    // Interior residual through the same operator code the forcing used.
    let mut residual = Array1::zeros(n + n_b);
    for i in 0..n {
        let point: Vec<f64> = points.interior.row(i).to_vec();
        let axes = (0..d)
            .map(|axis| {
                let stack = &du[axis];
                crate::jet::Jet3 {
                    d0: u[i],
                    d1: stack.first().map_or(0.0, |v| v[i]),
                    d2: stack.get(1).map_or(0.0, |v| v[i]),
                    d3: stack.get(2).map_or(0.0, |v| v[i]),
                }
            })
            .collect();
        residual[i] =
            apply_operator(problem, &point, &SolutionJets { axes }) - blocks.forcing[i];
    }

    // Boundary rows: dirichlet Φ, neumann ∇Φ·n, robin Φ + α·∇Φ·n.
    let mut a = Array2::zeros((n + n_b, hidden));
    a.slice_mut(ndarray::s![..n, ..]).assign(&a_interior);
    if n_b > 0 {
        let u_b = blocks.phi_boundary.dot(&wv);
        let grad_b: Vec<Array1<f64>> =
            (0..d).map(|axis| blocks.boundary_grads[axis].dot(&wv)).collect();
        for i in 0..n_b {
            let normal = points.normals.row(i);
            let flux_row = |a_row: &mut ndarray::ArrayViewMut1<f64>| {
                for axis in 0..d {
                    a_row.scaled_add(normal[axis], &blocks.boundary_grads[axis].row(i));
                }
            };
            let flux_val: f64 = (0..d).map(|axis| grad_b[axis][i] * normal[axis]).sum();
            let mut row = a.row_mut(n + i);
            let bc_val = match points.bc[i] {
                BcTag::Dirichlet => {
                    row.assign(&blocks.phi_boundary.row(i));
                    u_b[i]
                }
                BcTag::Neumann => {
                    flux_row(&mut row);
                    flux_val
                }
                BcTag::Robin => {
                    row.assign(&blocks.phi_boundary.row(i));
                    let mut scaled = row.to_owned();
                    scaled.fill(0.0);
                    let mut sv = scaled.view_mut();
                    flux_row(&mut sv);
                    row.scaled_add(problem.robin_alpha, &scaled);
                    u_b[i] + problem.robin_alpha * flux_val
                }
            };
            residual[n + i] = bc_val - blocks.targets[i];
            if boundary_weight != 1.0 {
                row.mapv_inplace(|x| x * boundary_weight);
            }
        }
        if boundary_weight != 1.0 {
            residual.slice_mut(ndarray::s![n..]).mapv_inplace(|x| x * boundary_weight);
        }
    }

    let provenance = std::iter::repeat_n(RowKind::Interior, n)
        .chain(std::iter::repeat_n(RowKind::Boundary, n_b))
        .collect();
    Ok(CollocationSystem { a, residual, provenance })
}

/// Effective Newton budget: linear problems always take exactly one step.
pub fn effective_iterations(problem: &PDEProblem, requested: Option<usize>) -> usize {
    if problem.linear {
        1
    } else {
        requested.unwrap_or(DEFAULT_NEWTON_ITERS)
    }
}

/// Outcome of the Newton loop on pre-evaluated blocks.
pub struct NewtonOutcome {
    pub coefficients: Vec<f64>,
    pub residual_history: Vec<f64>,
    pub cond: f64,
    pub assembly_seconds: f64,
    pub solve_seconds: f64,
}

/// Guard evaluated after every Newton step.
fn check_newton_state(w: &[f64], residual_norm: f64, iteration: usize) -> Result<(), SolverError> {
    if !residual_norm.is_finite() || !w.iter().all(|x| x.is_finite()) {
        return Err(SolverError::DivergedSolve { iteration });
    }
    Ok(())
}

/// Runs K undamped Newton iterations on frozen blocks, starting from w = 0.
///
/// Records ‖R‖ at the start of every iteration and the condition number of
/// the first stacked matrix. No early exit: exactly `k` iterations run so
/// residual histories are comparable across configurations.
pub fn newton_solve(
    problem: &PDEProblem,
    blocks: &BasisBlocks,
    points: &CollocationPoints,
    k: usize,
    solve_precision: Precision,
    boundary_weight: f64,
) -> Result<NewtonOutcome, SolverError> {
    if k == 0 {
        return Err(SolverError::InvalidConfig("newton iteration count must be ≥ 1".into()));
    }
    let hidden = blocks.phi_interior.ncols();
    let mut w = vec![0.0_f64; hidden];
    let mut history = Vec::with_capacity(k);
    let mut cond = f64::NAN;
    let mut assembly_seconds = 0.0;
    let mut solve_seconds = 0.0;

    for iter in 1..=k {
        let t0 = Instant::now();
        let system = assemble(problem, blocks, points, &w, boundary_weight)?;
        assembly_seconds += t0.elapsed().as_secs_f64();

        let rnorm = system.residual.iter().map(|x| x * x).sum::<f64>().sqrt();
        check_newton_state(&w, rnorm, iter)?;
        history.push(rnorm);

        let neg_r: Vec<f64> = system.residual.iter().map(|x| -x).collect();
        let a = match solve_precision {
            Precision::Fp64 => DenseMatrix::from_array_f64(system.a),
            Precision::Fp32 => DenseMatrix::from_array_f32(system.a.mapv(|x| x as f32)),
        };
        let t1 = Instant::now();
        let step = lstsq(&a, &neg_r)?;
        solve_seconds += t1.elapsed().as_secs_f64();
        if iter == 1 {
            cond = step.condition_number();
        }
        for (wi, dwi) in w.iter_mut().zip(&step.solution) {
            *wi += dwi;
        }
        check_newton_state(&w, 0.0, iter)?;
    }

    Ok(NewtonOutcome {
        coefficients: w,
        residual_history: history,
        cond,
        assembly_seconds,
        solve_seconds,
    })
}

/// Fixed stream for the solution-error estimate, so identical solves report
/// identical RMSE values.
fn eval_stream() -> ChaCha12Rng {
    ChaCha12Rng::from_seed(*b"metacolloc-rmse-evaluation-pts!!")
}

/// RMSE of Φ(x)·w against the exact solution over `n_eval` uniform interior
/// points drawn from `rng`.
pub fn evaluate_rmse(
    params: &BasisParams,
    w: &[f64],
    problem: &PDEProblem,
    n_eval: usize,
    rng: &mut ChaCha12Rng,
) -> Result<f64, SolverError> {
    if n_eval == 0 {
        return Err(SolverError::InvalidConfig("n_eval must be ≥ 1".into()));
    }
    let pts = sample_points(problem, n_eval, 0, rng);
    let phi = forward(params, pts.interior.view())?.to_f64_array();
    if w.len() != phi.ncols() {
        return Err(SolverError::InvalidConfig(format!(
            "coefficient length {} does not match basis width {}",
            w.len(),
            phi.ncols()
        )));
    }
    let pred = phi.dot(&Array1::from_iter(w.iter().copied()));
    let mut sq = 0.0;
    for (i, row) in pts.interior.rows().into_iter().enumerate() {
        let exact = crate::pde::exact_value(problem, row.as_slice().expect("contiguous"));
        sq += (pred[i] - exact) * (pred[i] - exact);
    }
    Ok((sq / n_eval as f64).sqrt())
}

/// Full solve: evaluates the frozen basis, runs the Newton loop, and scores
/// the result against the exact solution. `k = None` selects the default
/// budget (1 linear, 64 nonlinear); linear problems force K = 1 regardless.
pub fn solve(
    problem: &PDEProblem,
    params: &BasisParams,
    points: &CollocationPoints,
    k: Option<usize>,
    precision: PrecisionMode,
) -> Result<SolveReport, SolverError> {
    solve_weighted(problem, params, points, k, precision, 1.0)
}

/// [`solve`] with a configurable boundary row weight (default 1).
pub fn solve_weighted(
    problem: &PDEProblem,
    params: &BasisParams,
    points: &CollocationPoints,
    k: Option<usize>,
    precision: PrecisionMode,
    boundary_weight: f64,
) -> Result<SolveReport, SolverError> {
    if k == Some(0) {
        return Err(SolverError::InvalidConfig("newton iteration count must be ≥ 1".into()));
    }
    if !(boundary_weight.is_finite() && boundary_weight > 0.0) {
        return Err(SolverError::InvalidConfig(format!(
            "boundary weight must be positive and finite, got {boundary_weight}"
        )));
    }
    let eff = precision.effective_params(params);

    let t0 = Instant::now();
    let blocks = eval_blocks(&eff, problem, points)?;
    let basis_eval_seconds = t0.elapsed().as_secs_f64();

    let k_eff = effective_iterations(problem, k);
    let outcome =
        newton_solve(problem, &blocks, points, k_eff, precision.solve_precision(), boundary_weight)?;

    let rmse = evaluate_rmse(
        &eff,
        &outcome.coefficients,
        problem,
        DEFAULT_N_EVAL,
        &mut eval_stream(),
    )?;

    Ok(SolveReport {
        problem: problem.name.clone(),
        coefficients: outcome.coefficients,
        rmse,
        cond: outcome.cond,
        residual_history: outcome.residual_history,
        timings: PhaseTimings {
            basis_eval_seconds,
            assembly_seconds: outcome.assembly_seconds,
            solve_seconds: outcome.solve_seconds,
        },
        precision,
        newton_iters: k_eff,
    })
}
