//! Benchmark problem catalog: operators, constants, geometries, boundary
//! conditions, exact solutions, and forcing terms.
//!
//! Every problem is manufactured: an exact solution is fixed in closed form
//! and the right-hand side f is obtained by pushing truncated-Taylor jets of
//! that solution through the problem's full (possibly nonlinear) operator.
//! No hand-derived forcing formulas exist in the production path — the hand
//! expansions for Poisson and the variable-coefficient problem survive only
//! as independent oracles in the test suite.
//!
//! Geometries: the unit square/cube, an L-shaped domain
//! [−1,1]² \ [0,1]×[−1,0] with mixed Dirichlet/Neumann segments, and an
//! annulus 0.5 ≤ r ≤ 1 with a Dirichlet inner circle and a Robin outer
//! circle (u + α·∇u·n = g, α = 1). Interior points are drawn by rejection
//! against the geometry predicate; boundary points per segment with
//! probability proportional to segment length.

use crate::jet::Jet3;
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Helmholtz wavenumber k = 64π.
pub const HELMHOLTZ_K: f64 = 64.0 * std::f64::consts::PI;
/// Viscosity of the 3D advection–diffusion problem.
pub const BURGERS_NU: f64 = 0.01;
/// Diffusion coefficient of the 3D reaction–diffusion problem.
pub const ALLEN_CAHN_NU: f64 = 0.001;
/// Default Robin coefficient on the annulus outer circle.
pub const ROBIN_ALPHA: f64 = 1.0;

#[derive(Debug, Error)]
pub enum PdeError {
    #[error("unknown problem '{0}'")]
    UnknownProblem(String),
}

/// The differential operator of a problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorTag {
    Poisson,
    Helmholtz,
    VarCoeff,
    HighFreqPoisson,
    SineGordon,
    Kdv,
    Poisson3d,
    Burgers3d,
    AllenCahn3d,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryTag {
    UnitSquare,
    UnitCube,
    LShape,
    Annulus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BcTag {
    Dirichlet,
    Neumann,
    Robin,
}

/// A fully specified benchmark problem.
#[derive(Debug, Clone)]
pub struct PDEProblem {
    /// CLI name, including any geometry suffix (e.g. "poisson@lshape").
    pub name: String,
    pub input_dim: usize,
    pub operator: OperatorTag,
    pub linear: bool,
    pub geometry: GeometryTag,
    /// Robin coefficient (used only by geometries with Robin segments).
    pub robin_alpha: f64,
}

/// Collocation point sets for one solve.
#[derive(Debug, Clone)]
pub struct CollocationPoints {
    pub interior: Array2<f64>,
    pub boundary: Array2<f64>,
    /// Outward unit normals, one row per boundary point.
    pub normals: Array2<f64>,
    /// Boundary condition per boundary row.
    pub bc: Vec<BcTag>,
}

/// Jets of a scalar field at one point: one order-3 jet per axis. Mixed
/// partials never appear in the catalog's operators.
#[derive(Debug, Clone)]
pub struct SolutionJets {
    pub axes: Vec<Jet3>,
}

impl SolutionJets {
    /// Field value (plane 0 is axis-independent).
    pub fn value(&self) -> f64 {
        self.axes[0].d0
    }

    /// Multiplies the represented field by a constant.
    pub fn scaled(&self, c: f64) -> SolutionJets {
        SolutionJets { axes: self.axes.iter().map(|j| j.scale(c)).collect() }
    }
}

/// Builds a problem from its CLI name: one of poisson, helmholtz, varcoeff,
/// highfreq, sinegordon, kdv, poisson3d, burgers3d, allencahn3d, with
/// geometry suffixes @lshape / @annulus available for the poisson operator.
pub fn make_problem(name: &str) -> Result<PDEProblem, PdeError> {
    let (base, geom) = match name.split_once('@') {
        Some((b, g)) => (b, Some(g)),
        None => (name, None),
    };
    let (operator, linear, input_dim) = match base {
        "poisson" => (OperatorTag::Poisson, true, 2),
        "helmholtz" => (OperatorTag::Helmholtz, true, 2),
        "varcoeff" => (OperatorTag::VarCoeff, true, 2),
        "highfreq" => (OperatorTag::HighFreqPoisson, true, 2),
        "sinegordon" => (OperatorTag::SineGordon, false, 2),
        "kdv" => (OperatorTag::Kdv, false, 2),
        "poisson3d" => (OperatorTag::Poisson3d, true, 3),
        "burgers3d" => (OperatorTag::Burgers3d, false, 3),
        "allencahn3d" => (OperatorTag::AllenCahn3d, false, 3),
        _ => return Err(PdeError::UnknownProblem(name.to_string())),
    };
    let geometry = match (geom, operator) {
        (None, _) if input_dim == 2 => GeometryTag::UnitSquare,
        (None, _) => GeometryTag::UnitCube,
        (Some("lshape"), OperatorTag::Poisson) => GeometryTag::LShape,
        (Some("annulus"), OperatorTag::Poisson) => GeometryTag::Annulus,
        _ => return Err(PdeError::UnknownProblem(name.to_string())),
    };
    Ok(PDEProblem {
        name: name.to_string(),
        input_dim,
        operator,
        linear,
        geometry,
        robin_alpha: ROBIN_ALPHA,
    })
}

/// All valid CLI problem names.
pub fn problem_names() -> Vec<&'static str> {
    vec![
        "poisson",
        "helmholtz",
        "varcoeff",
        "highfreq",
        "sinegordon",
        "kdv",
        "poisson3d",
        "burgers3d",
        "allencahn3d",
        "poisson@lshape",
        "poisson@annulus",
    ]
}

/// Benchmark point counts (interior, boundary): 2000/300 on the unit square,
/// 8000/3600 on the cube, 3000/600 on the non-rectangular geometries.
pub fn default_point_counts(problem: &PDEProblem) -> (usize, usize) {
    match problem.geometry {
        GeometryTag::UnitSquare => (2000, 300),
        GeometryTag::UnitCube => (8000, 3600),
        GeometryTag::LShape | GeometryTag::Annulus => (3000, 600),
    }
}

/// Highest derivative order the operator needs along `axis`.
pub fn axis_order(operator: OperatorTag, axis: usize) -> usize {
    match operator {
        OperatorTag::Kdv => {
            if axis == 0 {
                3
            } else {
                1
            }
        }
        OperatorTag::Burgers3d | OperatorTag::AllenCahn3d => {
            if axis == 2 {
                1
            } else {
                2
            }
        }
        _ => 2,
    }
}

// ---------------------------------------------------------------------------
// Exact solutions and the operator as jet arithmetic.
// ---------------------------------------------------------------------------

const PI: f64 = std::f64::consts::PI;

/// Exact solution jets along every axis at `point`.
pub fn exact_jets(problem: &PDEProblem, point: &[f64]) -> SolutionJets {
    let axes = (0..problem.input_dim)
        .map(|axis| exact_jet(problem.operator, point, axis))
        .collect();
    SolutionJets { axes }
}

/// Exact solution value at `point`.
pub fn exact_value(problem: &PDEProblem, point: &[f64]) -> f64 {
    exact_jet(problem.operator, point, 0).d0
}

fn exact_jet(operator: OperatorTag, point: &[f64], axis: usize) -> Jet3 {
    let x = Jet3::seed(point[0], axis == 0);
    let y = Jet3::seed(point[1], axis == 1);
    match operator {
        OperatorTag::Poisson => {
            // sin(2πx)·sin(2πy) + e^{−x−y}
            crate::jet::jet_mul(x.scale(2.0 * PI).sin(), y.scale(2.0 * PI).sin())
                + (-x - y).exp()
        }
        OperatorTag::Helmholtz => {
            // sin(k_xy·x)·cos(k_xy·y) + e^{−x−y}, k_xy = k/√2
            let kxy = HELMHOLTZ_K / std::f64::consts::SQRT_2;
            crate::jet::jet_mul(x.scale(kxy).sin(), y.scale(kxy).cos()) + (-x - y).exp()
        }
        OperatorTag::VarCoeff => {
            // sin(πx)·sin(πy) + e^{−x−y}
            crate::jet::jet_mul(x.scale(PI).sin(), y.scale(PI).sin()) + (-x - y).exp()
        }
        OperatorTag::HighFreqPoisson => {
            // sin(8πx)·sin(8πy) + e^{−x·y}
            crate::jet::jet_mul(x.scale(8.0 * PI).sin(), y.scale(8.0 * PI).sin())
                + crate::jet::jet_mul(x, y).scale(-1.0).exp()
        }
        OperatorTag::SineGordon | OperatorTag::Kdv => {
            // sin(πx)·cos(πy)
            crate::jet::jet_mul(x.scale(PI).sin(), y.scale(PI).cos())
        }
        OperatorTag::Poisson3d => {
            // sin(πx)·sin(πy)·sin(πz)
            let z = Jet3::seed(point[2], axis == 2);
            crate::jet::jet_mul(
                crate::jet::jet_mul(x.scale(PI).sin(), y.scale(PI).sin()),
                z.scale(PI).sin(),
            )
        }
        OperatorTag::Burgers3d => {
            // sin(πx)·sin(πy)·e^{−z}
            let z = Jet3::seed(point[2], axis == 2);
            crate::jet::jet_mul(
                crate::jet::jet_mul(x.scale(PI).sin(), y.scale(PI).sin()),
                z.scale(-1.0).exp(),
            )
        }
        OperatorTag::AllenCahn3d => {
            // sin(πx)·sin(πy)·cos(πz)
            let z = Jet3::seed(point[2], axis == 2);
            crate::jet::jet_mul(
                crate::jet::jet_mul(x.scale(PI).sin(), y.scale(PI).sin()),
                z.scale(PI).cos(),
            )
        }
    }
}

/// Variable diffusion coefficient a = 2 + sin(πx)cos(πy) and its first
/// partials (a, a_x, a_y), computed by jets. Shared by forcing and the
/// collocation row assembly so the two can never drift apart.
pub fn varcoeff_coefficient(point: &[f64]) -> (f64, f64, f64) {
    let along = |axis: usize| -> Jet3 {
        let x = Jet3::seed(point[0], axis == 0);
        let y = Jet3::seed(point[1], axis == 1);
        crate::jet::jet_mul(x.scale(PI).sin(), y.scale(PI).cos()) + Jet3::constant(2.0)
    };
    let jx = along(0);
    let jy = along(1);
    (jx.d0, jx.d1, jy.d1)
}

/// Applies the problem's full (possibly nonlinear) differential operator to
/// a field given by its per-axis jets at `point`.
pub fn apply_operator(problem: &PDEProblem, point: &[f64], u: &SolutionJets) -> f64 {
    let val = u.value();
    let j = &u.axes;
    match problem.operator {
        OperatorTag::Poisson | OperatorTag::HighFreqPoisson => -(j[0].d2 + j[1].d2),
        OperatorTag::Helmholtz => -(j[0].d2 + j[1].d2) - HELMHOLTZ_K * HELMHOLTZ_K * val,
        OperatorTag::VarCoeff => {
            let (a, ax, ay) = varcoeff_coefficient(point);
            -(a * (j[0].d2 + j[1].d2) + ax * j[0].d1 + ay * j[1].d1)
        }
        OperatorTag::SineGordon => j[1].d2 - j[0].d2 + val.sin(),
        OperatorTag::Kdv => j[1].d1 + 6.0 * val * j[0].d1 + j[0].d3,
        OperatorTag::Poisson3d => j[0].d2 + j[1].d2 + j[2].d2,
        OperatorTag::Burgers3d => {
            j[2].d1 + val * j[0].d1 + val * j[1].d1 - BURGERS_NU * (j[0].d2 + j[1].d2)
        }
        OperatorTag::AllenCahn3d => {
            j[2].d1 - ALLEN_CAHN_NU * (j[0].d2 + j[1].d2) - val * (1.0 - val * val)
        }
    }
}

/// Manufactured right-hand side: the operator applied to the exact solution.
pub fn forcing(problem: &PDEProblem, point: &[f64]) -> f64 {
    apply_operator(problem, point, &exact_jets(problem, point))
}

/// Boundary data from the exact solution: Dirichlet → u, Neumann → ∇u·n,
/// Robin → u + α·∇u·n.
pub fn boundary_target(problem: &PDEProblem, point: &[f64], normal: &[f64], bc: BcTag) -> f64 {
    let jets = exact_jets(problem, point);
    let u = jets.value();
    match bc {
        BcTag::Dirichlet => u,
        BcTag::Neumann => grad_dot(&jets, normal),
        BcTag::Robin => u + problem.robin_alpha * grad_dot(&jets, normal),
    }
}

fn grad_dot(jets: &SolutionJets, normal: &[f64]) -> f64 {
    jets.axes.iter().zip(normal).map(|(j, n)| j.d1 * n).sum()
}

// ---------------------------------------------------------------------------
// Geometry: interior predicates, bounding boxes, boundary segments.
// ---------------------------------------------------------------------------

/// Inner/outer annulus radii.
pub const ANNULUS_INNER: f64 = 0.5;
pub const ANNULUS_OUTER: f64 = 1.0;

fn bounding_box(geometry: GeometryTag) -> (Vec<f64>, Vec<f64>) {
    match geometry {
        GeometryTag::UnitSquare => (vec![0.0, 0.0], vec![1.0, 1.0]),
        GeometryTag::UnitCube => (vec![0.0; 3], vec![1.0; 3]),
        GeometryTag::LShape | GeometryTag::Annulus => (vec![-1.0, -1.0], vec![1.0, 1.0]),
    }
}

/// Strict interior predicate used by rejection sampling.
pub fn contains_interior(geometry: GeometryTag, p: &[f64]) -> bool {
    match geometry {
        GeometryTag::UnitSquare => p.iter().take(2).all(|x| (0.0..1.0).contains(x)),
        GeometryTag::UnitCube => p.iter().take(3).all(|x| (0.0..1.0).contains(x)),
        GeometryTag::LShape => {
            let inside_square = p[0] > -1.0 && p[0] < 1.0 && p[1] > -1.0 && p[1] < 1.0;
            let in_removed_quadrant = p[0] >= 0.0 && p[1] <= 0.0;
            inside_square && !in_removed_quadrant
        }
        GeometryTag::Annulus => {
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
            r > ANNULUS_INNER && r < ANNULUS_OUTER
        }
    }
}

enum SegmentKind {
    /// Straight edge from→to with a constant outward normal.
    Line { from: [f64; 2], to: [f64; 2], normal: [f64; 2] },
    /// Full circle of given radius; `inward` flips the normal to −(x,y)/r.
    Circle { radius: f64, inward: bool },
    /// Cube face with coordinate `axis` pinned to `value`.
    Face { axis: usize, value: f64 },
}

struct Segment {
    kind: SegmentKind,
    length: f64,
    bc: BcTag,
}

fn segments(geometry: GeometryTag) -> Vec<Segment> {
    use BcTag::*;
    use SegmentKind::*;
    match geometry {
        GeometryTag::UnitSquare => vec![
            Segment { kind: Line { from: [0.0, 0.0], to: [1.0, 0.0], normal: [0.0, -1.0] }, length: 1.0, bc: Dirichlet },
            Segment { kind: Line { from: [1.0, 0.0], to: [1.0, 1.0], normal: [1.0, 0.0] }, length: 1.0, bc: Dirichlet },
            Segment { kind: Line { from: [1.0, 1.0], to: [0.0, 1.0], normal: [0.0, 1.0] }, length: 1.0, bc: Dirichlet },
            Segment { kind: Line { from: [0.0, 1.0], to: [0.0, 0.0], normal: [-1.0, 0.0] }, length: 1.0, bc: Dirichlet },
        ],
        GeometryTag::UnitCube => (0..3)
            .flat_map(|axis| {
                [0.0, 1.0].into_iter().map(move |value| Segment {
                    kind: Face { axis, value },
                    length: 1.0, // equal-area faces
                    bc: Dirichlet,
                })
            })
            .collect(),
        GeometryTag::LShape => vec![
            // Outer Dirichlet edges: left, top, bottom-left.
            Segment { kind: Line { from: [-1.0, -1.0], to: [-1.0, 1.0], normal: [-1.0, 0.0] }, length: 2.0, bc: Dirichlet },
            Segment { kind: Line { from: [-1.0, 1.0], to: [1.0, 1.0], normal: [0.0, 1.0] }, length: 2.0, bc: Dirichlet },
            Segment { kind: Line { from: [-1.0, -1.0], to: [0.0, -1.0], normal: [0.0, -1.0] }, length: 1.0, bc: Dirichlet },
            // Neumann: the outer right-top edge and the two concave inner
            // edges, whose outward normals point into the removed quadrant.
            Segment { kind: Line { from: [1.0, 0.0], to: [1.0, 1.0], normal: [1.0, 0.0] }, length: 1.0, bc: Neumann },
            Segment { kind: Line { from: [0.0, -1.0], to: [0.0, 0.0], normal: [1.0, 0.0] }, length: 1.0, bc: Neumann },
            Segment { kind: Line { from: [0.0, 0.0], to: [1.0, 0.0], normal: [0.0, -1.0] }, length: 1.0, bc: Neumann },
        ],
        GeometryTag::Annulus => vec![
            Segment {
                kind: Circle { radius: ANNULUS_INNER, inward: true },
                length: 2.0 * PI * ANNULUS_INNER,
                bc: Dirichlet,
            },
            Segment {
                kind: Circle { radius: ANNULUS_OUTER, inward: false },
                length: 2.0 * PI * ANNULUS_OUTER,
                bc: Robin,
            },
        ],
    }
}

/// Samples collocation points: interior by rejection against the geometry
/// predicate, boundary per segment with probability proportional to length.
pub fn sample_points(
    problem: &PDEProblem,
    n_interior: usize,
    n_boundary: usize,
    rng: &mut ChaCha12Rng,
) -> CollocationPoints {
    let d = problem.input_dim;
    let (lo, hi) = bounding_box(problem.geometry);

    let mut interior = Array2::<f64>::zeros((n_interior, d));
    let mut accepted = 0;
    while accepted < n_interior {
        let p: Vec<f64> = (0..d).map(|a| lo[a] + rng.random::<f64>() * (hi[a] - lo[a])).collect();
        if contains_interior(problem.geometry, &p) {
            for (a, v) in p.iter().enumerate() {
                interior[[accepted, a]] = *v;
            }
            accepted += 1;
        }
    }

    let segs = segments(problem.geometry);
    let total_length: f64 = segs.iter().map(|s| s.length).sum();
    let mut boundary = Array2::<f64>::zeros((n_boundary, d));
    let mut normals = Array2::<f64>::zeros((n_boundary, d));
    let mut bc = Vec::with_capacity(n_boundary);
    for i in 0..n_boundary {
        let mut pick = rng.random::<f64>() * total_length;
        let mut chosen = segs.len() - 1;
        for (k, s) in segs.iter().enumerate() {
            if pick < s.length {
                chosen = k;
                break;
            }
            pick -= s.length;
        }
        let seg = &segs[chosen];
        match &seg.kind {
            SegmentKind::Line { from, to, normal } => {
                let t = rng.random::<f64>();
                for a in 0..2 {
                    boundary[[i, a]] = from[a] + t * (to[a] - from[a]);
                    normals[[i, a]] = normal[a];
                }
            }
            SegmentKind::Circle { radius, inward } => {
                let theta = rng.random::<f64>() * 2.0 * PI;
                let (c, s) = (theta.cos(), theta.sin());
                boundary[[i, 0]] = radius * c;
                boundary[[i, 1]] = radius * s;
                let sign = if *inward { -1.0 } else { 1.0 };
                normals[[i, 0]] = sign * c;
                normals[[i, 1]] = sign * s;
            }
            SegmentKind::Face { axis, value } => {
                for a in 0..3 {
                    if a == *axis {
                        boundary[[i, a]] = *value;
                        normals[[i, a]] = if *value == 0.0 { -1.0 } else { 1.0 };
                    } else {
                        boundary[[i, a]] = rng.random::<f64>();
                        normals[[i, a]] = 0.0;
                    }
                }
            }
        }
        bc.push(seg.bc);
    }

    CollocationPoints { interior, boundary, normals, bc }
}
