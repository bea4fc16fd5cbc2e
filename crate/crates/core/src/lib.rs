//! Meta-trained neural basis dictionaries for mesh-free PDE collocation.
//!
//! The pipeline has an offline and an online phase. Offline, a small
//! dual-branch network is meta-trained on randomly sampled Gaussian-random-field
//! regression tasks so that its `H` outputs form a good linear basis for smooth
//! and oscillatory functions alike. Online, the network is frozen; a PDE is
//! solved by evaluating the basis and its exact forward-mode derivatives at
//! collocation points, assembling one linear system from the (linearized)
//! operator rows and the boundary rows, and taking the minimum-norm
//! least-squares solution. Nonlinear problems wrap the same assembly in
//! Newton–Raphson.
//!
//! Module map:
//! - [`linalg`] — dense fp32/fp64 matrices, SVD min-norm least squares and its
//!   gradients, condition numbers.
//! - [`jet`] — order-3 truncated-Taylor scalars along one axis (the derivative
//!   engine for exact solutions and forcing terms).
//! - [`network`] — the dual-branch SwiGLU basis network: init, batched forward,
//!   batched jet propagation, hand-written backward, checkpoint I/O.
//! - [`grf`] — Gaussian-random-field task sampler (random cosine features).
//! - [`meta_train`] — AdamW + cosine-schedule meta-training loop.
//! - [`pde`] — problem catalog: operators, geometries, exact solutions,
//!   manufactured forcing, collocation sampling.
//! - [`solver`] — collocation assembly, Newton loop, error evaluation.
//! - [`bench`] — experiment drivers (suites, ablations, sweeps) and the CLI.

pub mod bench;
pub mod grf;
pub mod jet;
pub mod linalg;
pub mod meta_train;
pub mod network;
pub mod pde;
pub mod solver;
