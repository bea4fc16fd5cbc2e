//! The dual-branch basis dictionary network.
//!
//! Architecture: a coordinate x ∈ [0,1]^d feeds two branches. The low branch
//! applies two SwiGLU layers (output widths H then H/2) to the raw
//! coordinates and captures smooth content. The high branch first expands x
//! with a fixed sinusoidal encoding — sin(π·s·x_a) and cos(π·s·x_a) for every
//! axis a and scale s ∈ {1, 2, 4, 8, 16, 32, 64, 128} — then applies its own
//! two SwiGLU layers (H, H/2), capturing oscillatory content. The H basis
//! functions are the concatenation [low | high]. A SwiGLU layer computes
//! `SiLU(hW₁ + b₁) ⊙ (hW₂ + b₂)` with independent weights and biases for the
//! gate and value paths and no output bias.
//!
//! Three evaluation modes share one set of kernels:
//! - [`forward`] — plain values, an N×H matrix.
//! - [`forward_jets`] — order-3 truncated-Taylor propagation along one axis,
//!   yielding exact Φ_x, Φ_xx, Φ_xxx columns for collocation assembly. The
//!   d0 plane runs the identical arithmetic as [`forward`], so the two agree
//!   bitwise.
//! - [`backward`] — hand-derived reverse-mode gradients through the four
//!   layers (the encoding has no parameters), used by meta-training.
//!
//! All point-batched matrix products run through a fixed-size panel wrapper
//! ([`PANEL`] rows, zero-padded): every BLAS call then has an identical shape,
//! which makes each output row's bits independent of how callers batch their
//! points. Plain `.dot()` would not guarantee that — small batches take
//! different edge kernels with different accumulation orders.
//!
//! Parameters are kept as fp64 master weights; a precision tag selects the
//! arithmetic used at evaluation time (fp32 mode truncates weights and all
//! activations to 32-bit). Checkpoints always store the fp64 masters.

use crate::linalg::{DenseMatrix, Precision, Real};
use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

/// Fixed high-branch frequency scales; never trained.
pub const FOURIER_SCALES: [f64; 8] = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0];

/// Row count of the fixed-shape matmul panels (see module docs).
pub(crate) const PANEL: usize = 256;

/// Checkpoint magic and version.
const MAGIC: &[u8; 4] = b"MCBD";
const VERSION: u8 = 1;

/// Errors from network construction, evaluation, and persistence.
#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("incompatible checkpoint: {0}")]
    IncompatibleCheckpoint(String),
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// One SwiGLU layer: gate path (W₁, b₁) and value path (W₂, b₂).
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SwigluLayer<T> {
    pub w1: Array2<T>,
    pub b1: Array1<T>,
    pub w2: Array2<T>,
    pub b2: Array1<T>,
}

/// Two stacked SwiGLU layers forming one branch.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct BranchParams<T> {
    pub l1: SwigluLayer<T>,
    pub l2: SwigluLayer<T>,
}

/// All trainable parameters of the dictionary plus its fixed configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisParams {
    input_dim: usize,
    hidden: usize,
    fourier_scales: [f64; 8],
    init_seed: u64,
    precision: Precision,
    pub(crate) low: BranchParams<f64>,
    pub(crate) high: BranchParams<f64>,
}

/// Parameter gradients, mirroring the trainable tensors of [`BasisParams`].
/// The fixed Fourier scales have no slot here by construction.
#[derive(Debug, Clone)]
pub struct BasisGrads {
    pub(crate) low: BranchParams<f64>,
    pub(crate) high: BranchParams<f64>,
}

/// Basis values and the requested axis-derivative stacks at a point batch.
#[derive(Debug, Clone)]
pub struct BasisBlock {
    /// Φ, N×H. Identical (bitwise) to what [`forward`] returns.
    pub phi: DenseMatrix,
    /// Φ_d1 … Φ_d(max_order) along the requested axis, each N×H.
    pub derivs: Vec<DenseMatrix>,
}

impl BasisParams {
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn fourier_scales(&self) -> &[f64; 8] {
        &self.fourier_scales
    }

    /// Returns a copy whose evaluations run in `precision`. Master weights
    /// stay fp64; fp32 mode truncates at evaluation time.
    pub fn with_precision(&self, precision: Precision) -> BasisParams {
        BasisParams { precision, ..self.clone() }
    }

    /// Width of the high-branch input encoding: 2 · d · (#scales).
    pub fn encoded_dim(&self) -> usize {
        2 * self.input_dim * self.fourier_scales.len()
    }

    /// Zeroes every low-branch weight and bias. The low half of the output
    /// then vanishes identically (SiLU(0)·0 = 0).
    pub fn zero_low_branch(&mut self) {
        zero_branch(&mut self.low);
    }

    /// Zeroes every high-branch weight and bias.
    pub fn zero_high_branch(&mut self) {
        zero_branch(&mut self.high);
    }

    /// Multiplies both branches' first-layer weight matrices by `factor`
    /// (biases untouched). Used by the scale-tuned random-feature variant.
    pub fn scale_first_layer(&mut self, factor: f64) {
        for branch in [&mut self.low, &mut self.high] {
            branch.l1.w1.mapv_inplace(|x| x * factor);
            branch.l1.w2.mapv_inplace(|x| x * factor);
        }
    }

    /// All trainable tensors flattened in canonical serialization order:
    /// per branch (low, high), per layer (1, 2): W₁, b₁, W₂, b₂, row-major.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.flat_len());
        for branch in [&self.low, &self.high] {
            for layer in [&branch.l1, &branch.l2] {
                out.extend(layer.w1.iter());
                out.extend(layer.b1.iter());
                out.extend(layer.w2.iter());
                out.extend(layer.b2.iter());
            }
        }
        out
    }

    /// Writes back a flat parameter vector in canonical order.
    pub fn set_from_flat(&mut self, flat: &[f64]) -> Result<(), NetworkError> {
        if flat.len() != self.flat_len() {
            return Err(NetworkError::InvalidInput(format!(
                "flat parameter length {} != expected {}",
                flat.len(),
                self.flat_len()
            )));
        }
        let mut offset = 0;
        for branch in [&mut self.low, &mut self.high] {
            for layer in [&mut branch.l1, &mut branch.l2] {
                offset = copy_into2(&mut layer.w1, flat, offset);
                offset = copy_into1(&mut layer.b1, flat, offset);
                offset = copy_into2(&mut layer.w2, flat, offset);
                offset = copy_into1(&mut layer.b2, flat, offset);
            }
        }
        Ok(())
    }

    /// Total number of trainable scalars.
    pub fn flat_len(&self) -> usize {
        [&self.low, &self.high]
            .iter()
            .flat_map(|b| [&b.l1, &b.l2])
            .map(|l| l.w1.len() + l.b1.len() + l.w2.len() + l.b2.len())
            .sum()
    }

    /// Named tensor shapes in canonical serialization order.
    fn layer_manifest(&self) -> Vec<LayerEntry> {
        let mut entries = Vec::new();
        for (bname, branch) in [("low", &self.low), ("high", &self.high)] {
            for (lname, layer) in [("l1", &branch.l1), ("l2", &branch.l2)] {
                entries.push(LayerEntry {
                    name: format!("{bname}.{lname}.w1"),
                    shape: vec![layer.w1.nrows(), layer.w1.ncols()],
                });
                entries.push(LayerEntry {
                    name: format!("{bname}.{lname}.b1"),
                    shape: vec![layer.b1.len()],
                });
                entries.push(LayerEntry {
                    name: format!("{bname}.{lname}.w2"),
                    shape: vec![layer.w2.nrows(), layer.w2.ncols()],
                });
                entries.push(LayerEntry {
                    name: format!("{bname}.{lname}.b2"),
                    shape: vec![layer.b2.len()],
                });
            }
        }
        entries
    }
}

impl BasisGrads {
    /// Gradients flattened in the same canonical order as
    /// [`BasisParams::to_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for branch in [&self.low, &self.high] {
            for layer in [&branch.l1, &branch.l2] {
                out.extend(layer.w1.iter());
                out.extend(layer.b1.iter());
                out.extend(layer.w2.iter());
                out.extend(layer.b2.iter());
            }
        }
        out
    }

    /// Elementwise sum of two gradient sets.
    pub fn add(&mut self, other: &BasisGrads) {
        for (a, b) in [(&mut self.low, &other.low), (&mut self.high, &other.high)] {
            for (la, lb) in [(&mut a.l1, &b.l1), (&mut a.l2, &b.l2)] {
                la.w1 += &lb.w1;
                la.b1 += &lb.b1;
                la.w2 += &lb.w2;
                la.b2 += &lb.b2;
            }
        }
    }
}

fn copy_into2(dst: &mut Array2<f64>, src: &[f64], offset: usize) -> usize {
    let n = dst.len();
    for (d, s) in dst.iter_mut().zip(&src[offset..offset + n]) {
        *d = *s;
    }
    offset + n
}

fn copy_into1(dst: &mut Array1<f64>, src: &[f64], offset: usize) -> usize {
    let n = dst.len();
    for (d, s) in dst.iter_mut().zip(&src[offset..offset + n]) {
        *d = *s;
    }
    offset + n
}

fn zero_branch(branch: &mut BranchParams<f64>) {
    for layer in [&mut branch.l1, &mut branch.l2] {
        layer.w1.fill(0.0);
        layer.b1.fill(0.0);
        layer.w2.fill(0.0);
        layer.b2.fill(0.0);
    }
}

#[derive(Serialize, Deserialize, PartialEq, Debug)]
struct LayerEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    input_dim: usize,
    hidden: usize,
    fourier_scales: Vec<f64>,
    init_seed: u64,
    layers: Vec<LayerEntry>,
    #[serde(default)]
    metadata: serde_json::Value,
}

/// Initializes a dictionary: weights uniform on ±√(6/(fan_in + fan_out)),
/// biases zero, drawn in a fixed canonical order so the result is a pure
/// function of `(d, h, seed)`.
pub fn init_params(d: usize, h: usize, seed: u64) -> Result<BasisParams, NetworkError> {
    if !(d == 2 || d == 3) {
        return Err(NetworkError::InvalidConfig(format!("input_dim must be 2 or 3, got {d}")));
    }
    if h < 4 || h % 2 != 0 {
        return Err(NetworkError::InvalidConfig(format!("width must be even and ≥ 4, got {h}")));
    }
    let encoded = 2 * d * FOURIER_SCALES.len();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    // Draw order (weights only; biases are zero): low.l1.w1, low.l1.w2,
    // low.l2.w1, low.l2.w2, then the same for the high branch.
    let mut branch = |input: usize| -> BranchParams<f64> {
        let mut layer = |fan_in: usize, fan_out: usize| -> SwigluLayer<f64> {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let draw = |r: &mut ChaCha12Rng| {
                Array2::from_shape_fn((fan_in, fan_out), |_| (r.random::<f64>() * 2.0 - 1.0) * bound)
            };
            let w1 = draw(&mut rng);
            let w2 = draw(&mut rng);
            SwigluLayer { w1, b1: Array1::zeros(fan_out), w2, b2: Array1::zeros(fan_out) }
        };
        BranchParams { l1: layer(input, h), l2: layer(h, h / 2) }
    };
    let low = branch(d);
    let high = branch(encoded);
    Ok(BasisParams {
        input_dim: d,
        hidden: h,
        fourier_scales: FOURIER_SCALES,
        init_seed: seed,
        precision: Precision::Fp64,
        low,
        high,
    })
}

/// Sinusoidal encoding of one point: for each axis a and scale s, the pair
/// (sin(π·s·x_a), cos(π·s·x_a)); length 2·d·(#scales).
pub fn fourier_encode(x: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * x.len() * FOURIER_SCALES.len());
    for xa in x {
        for s in FOURIER_SCALES {
            let t = std::f64::consts::PI * s * xa;
            out.push(t.sin());
            out.push(t.cos());
        }
    }
    out
}

/// Evaluates the basis at a point batch: N×H, tagged with the parameters'
/// precision. Row results are independent of how the points are batched.
pub fn forward(params: &BasisParams, points: ArrayView2<'_, f64>) -> Result<DenseMatrix, NetworkError> {
    check_points(params, &points)?;
    match params.precision {
        Precision::Fp64 => {
            let (low, high) = cast_branches::<f64>(params);
            let pts = points.to_owned();
            Ok(DenseMatrix::from_array_f64(forward_nd(&low, &high, &params.fourier_scales, &pts.view())))
        }
        Precision::Fp32 => {
            let (low, high) = cast_branches::<f32>(params);
            let pts = points.mapv(|x| x as f32);
            Ok(DenseMatrix::from_array_f32(forward_nd(&low, &high, &params.fourier_scales, &pts.view())))
        }
    }
}

/// Evaluates Φ and its first `max_order` derivatives along `axis`.
pub fn forward_jets(
    params: &BasisParams,
    points: ArrayView2<'_, f64>,
    axis: usize,
    max_order: usize,
) -> Result<BasisBlock, NetworkError> {
    check_points(params, &points)?;
    if axis >= params.input_dim {
        return Err(NetworkError::InvalidInput(format!(
            "axis {axis} out of range for input_dim {}",
            params.input_dim
        )));
    }
    if max_order > 3 {
        return Err(NetworkError::InvalidInput(format!("max_order {max_order} exceeds 3")));
    }
    match params.precision {
        Precision::Fp64 => {
            let (low, high) = cast_branches::<f64>(params);
            let pts = points.to_owned();
            let planes = jets_nd(&low, &high, &params.fourier_scales, &pts.view(), axis, max_order);
            let mut it = planes.into_iter().map(DenseMatrix::from_array_f64);
            Ok(BasisBlock { phi: it.next().expect("plane 0"), derivs: it.collect() })
        }
        Precision::Fp32 => {
            let (low, high) = cast_branches::<f32>(params);
            let pts = points.mapv(|x| x as f32);
            let planes = jets_nd(&low, &high, &params.fourier_scales, &pts.view(), axis, max_order);
            let mut it = planes.into_iter().map(DenseMatrix::from_array_f32);
            Ok(BasisBlock { phi: it.next().expect("plane 0"), derivs: it.collect() })
        }
    }
}

/// Reverse-mode gradients of `sum(upstream ⊙ forward(params, points))` with
/// respect to every trainable tensor. The fixed Fourier scales receive no
/// gradient — [`BasisGrads`] has no slot for them.
pub fn backward(
    params: &BasisParams,
    points: ArrayView2<'_, f64>,
    upstream: ArrayView2<'_, f64>,
) -> Result<BasisGrads, NetworkError> {
    check_points(params, &points)?;
    if upstream.dim() != (points.nrows(), params.hidden) {
        return Err(NetworkError::InvalidInput(format!(
            "upstream shape {:?} != ({}, {})",
            upstream.dim(),
            points.nrows(),
            params.hidden
        )));
    }
    if !upstream.iter().all(|x| x.is_finite()) {
        return Err(NetworkError::InvalidInput("non-finite upstream".into()));
    }
    let (low, high) = cast_branches::<f64>(params);
    let pts = points.to_owned();
    let cache = forward_cached_nd(&low, &high, &params.fourier_scales, &pts.view());
    let (glow, ghigh) = backward_nd(&low, &high, &cache, &upstream);
    Ok(BasisGrads { low: glow, high: ghigh })
}

/// Writes a checkpoint: magic + version byte, one JSON header line, then the
/// fp64 master weights little-endian in canonical order. `metadata` is stored
/// verbatim in the header for provenance (training settings etc.).
pub fn save_checkpoint(
    params: &BasisParams,
    path: &Path,
    metadata: serde_json::Value,
) -> Result<(), NetworkError> {
    let header = CheckpointHeader {
        input_dim: params.input_dim,
        hidden: params.hidden,
        fourier_scales: params.fourier_scales.to_vec(),
        init_seed: params.init_seed,
        layers: params.layer_manifest(),
        metadata,
    };
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION])?;
    serde_json::to_writer(&mut w, &header)
        .map_err(|e| NetworkError::CorruptCheckpoint(format!("header encode: {e}")))?;
    w.write_all(b"\n")?;
    for value in params.to_flat() {
        w.write_all(&value.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a checkpoint written by [`save_checkpoint`]. Round-trips are
/// bit-exact. Returns fp64-tagged parameters.
pub fn load_checkpoint(path: &Path) -> Result<BasisParams, NetworkError> {
    let (params, _meta) = load_checkpoint_with_metadata(path)?;
    Ok(params)
}

/// [`load_checkpoint`] plus the stored metadata header field.
pub fn load_checkpoint_with_metadata(
    path: &Path,
) -> Result<(BasisParams, serde_json::Value), NetworkError> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| NetworkError::CorruptCheckpoint("file shorter than magic".into()))?;
    if &magic != MAGIC {
        return Err(NetworkError::IncompatibleCheckpoint(format!(
            "magic {:?} != {:?}",
            magic, MAGIC
        )));
    }
    let mut version = [0u8; 1];
    r.read_exact(&mut version)
        .map_err(|_| NetworkError::CorruptCheckpoint("file shorter than version".into()))?;
    if version[0] != VERSION {
        return Err(NetworkError::IncompatibleCheckpoint(format!(
            "version {} != {VERSION}",
            version[0]
        )));
    }
    let mut header_line = Vec::new();
    r.read_until(b'\n', &mut header_line)?;
    if header_line.last() != Some(&b'\n') {
        return Err(NetworkError::CorruptCheckpoint("unterminated header line".into()));
    }
    header_line.pop();
    let header: CheckpointHeader = serde_json::from_slice(&header_line)
        .map_err(|e| NetworkError::CorruptCheckpoint(format!("header parse: {e}")))?;
    if header.fourier_scales != FOURIER_SCALES.to_vec() {
        return Err(NetworkError::IncompatibleCheckpoint(format!(
            "fourier scales {:?} unsupported",
            header.fourier_scales
        )));
    }
    // Rebuild the parameter skeleton and check the declared shapes against it.
    let mut params = init_params(header.input_dim, header.hidden, header.init_seed)
        .map_err(|e| NetworkError::IncompatibleCheckpoint(format!("header config: {e}")))?;
    let expected = params.layer_manifest();
    if header.layers != expected {
        return Err(NetworkError::CorruptCheckpoint(format!(
            "layer manifest mismatch: file {:?}",
            header.layers
        )));
    }
    let count = params.flat_len();
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != count * 8 {
        return Err(NetworkError::CorruptCheckpoint(format!(
            "parameter payload {} bytes != expected {}",
            bytes.len(),
            count * 8
        )));
    }
    let flat: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    params.set_from_flat(&flat)?;
    Ok((params, header.metadata))
}

fn check_points(params: &BasisParams, points: &ArrayView2<'_, f64>) -> Result<(), NetworkError> {
    if points.ncols() != params.input_dim {
        return Err(NetworkError::InvalidInput(format!(
            "points have {} columns, network expects {}",
            points.ncols(),
            params.input_dim
        )));
    }
    if !points.iter().all(|x| x.is_finite()) {
        return Err(NetworkError::InvalidInput("non-finite points".into()));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Typed kernels shared by the public entry points and the training hot path.
// ---------------------------------------------------------------------------

/// Casts the fp64 master weights into the evaluation precision.
pub(crate) fn cast_branches<T: Real>(params: &BasisParams) -> (BranchParams<T>, BranchParams<T>) {
    (cast_branch(&params.low), cast_branch(&params.high))
}

/// Widens typed branch gradients back into the fp64 gradient container.
pub(crate) fn widen_grads<T: Real>(low: BranchParams<T>, high: BranchParams<T>) -> BasisGrads {
    let widen_layer = |l: SwigluLayer<T>| SwigluLayer {
        w1: l.w1.mapv(|x| x.widen()),
        b1: l.b1.mapv(|x| x.widen()),
        w2: l.w2.mapv(|x| x.widen()),
        b2: l.b2.mapv(|x| x.widen()),
    };
    let widen_branch =
        |b: BranchParams<T>| BranchParams { l1: widen_layer(b.l1), l2: widen_layer(b.l2) };
    BasisGrads { low: widen_branch(low), high: widen_branch(high) }
}

fn cast_branch<T: Real>(b: &BranchParams<f64>) -> BranchParams<T> {
    let cast_layer = |l: &SwigluLayer<f64>| SwigluLayer {
        w1: l.w1.mapv(|x| T::from(x).expect("finite")),
        b1: l.b1.mapv(|x| T::from(x).expect("finite")),
        w2: l.w2.mapv(|x| T::from(x).expect("finite")),
        b2: l.b2.mapv(|x| T::from(x).expect("finite")),
    };
    BranchParams { l1: cast_layer(&b.l1), l2: cast_layer(&b.l2) }
}

/// `x · w` in fixed [`PANEL`]-row blocks, zero-padding the tail block, so per-
/// row results are bitwise independent of the caller's batching.
pub(crate) fn panel_matmul<T: Real>(x: &ArrayView2<'_, T>, w: &ArrayView2<'_, T>) -> Array2<T> {
    let (n, k) = x.dim();
    let h = w.ncols();
    let mut out = Array2::<T>::zeros((n, h));
    let mut start = 0;
    while start < n {
        let end = (start + PANEL).min(n);
        let rows = end - start;
        if rows == PANEL {
            let prod = x.slice(s![start..end, ..]).dot(w);
            out.slice_mut(s![start..end, ..]).assign(&prod);
        } else {
            let mut pad = Array2::<T>::zeros((PANEL, k));
            pad.slice_mut(s![..rows, ..]).assign(&x.slice(s![start..end, ..]));
            let prod = pad.dot(w);
            out.slice_mut(s![start..end, ..]).assign(&prod.slice(s![..rows, ..]));
        }
        start = end;
    }
    out
}

/// SiLU value and derivatives up to `order` at `x`, via a sign-stable sigmoid.
fn silu_chain<T: Real>(x: T, order: usize) -> [T; 4] {
    let one = T::one();
    let s = if x >= T::zero() {
        one / (one + num_traits::Float::exp(-x))
    } else {
        let e = num_traits::Float::exp(x);
        e / (one + e)
    };
    let mut out = [T::zero(); 4];
    out[0] = x * s;
    if order >= 1 {
        let s1 = s * (one - s);
        out[1] = s + x * s1;
        if order >= 2 {
            let two = T::from(2.0).expect("literal");
            let s2 = s1 * (one - two * s);
            out[2] = two * s1 + x * s2;
            if order >= 3 {
                let three = T::from(3.0).expect("literal");
                let s3 = s2 * (one - two * s) - two * s1 * s1;
                out[3] = three * s2 + x * s3;
            }
        }
    }
    out
}

/// Plain forward through one branch.
fn branch_forward<T: Real>(branch: &BranchParams<T>, input: &ArrayView2<'_, T>) -> Array2<T> {
    let o1 = swiglu_forward(&branch.l1, input);
    swiglu_forward(&branch.l2, &o1.view())
}

fn swiglu_forward<T: Real>(layer: &SwigluLayer<T>, h: &ArrayView2<'_, T>) -> Array2<T> {
    let mut u = panel_matmul(h, &layer.w1.view());
    u += &layer.b1;
    let mut v = panel_matmul(h, &layer.w2.view());
    v += &layer.b2;
    ndarray::Zip::from(&mut u).and(&v).for_each(|ui, vi| {
        *ui = silu_chain(*ui, 0)[0] * *vi;
    });
    u
}

/// Sinusoidal feature matrix for a point batch.
fn encode_matrix<T: Real>(points: &ArrayView2<'_, T>, scales: &[f64; 8]) -> Array2<T> {
    let (n, d) = points.dim();
    let pi = T::from(std::f64::consts::PI).expect("pi");
    let mut out = Array2::<T>::zeros((n, 2 * d * scales.len()));
    for i in 0..n {
        let mut j = 0;
        for a in 0..d {
            let xa = points[[i, a]];
            for s in scales {
                let t = pi * T::from(*s).expect("scale") * xa;
                out[[i, j]] = num_traits::Float::sin(t);
                out[[i, j + 1]] = num_traits::Float::cos(t);
                j += 2;
            }
        }
    }
    out
}

/// Full forward: [low | high] concatenation.
pub(crate) fn forward_nd<T: Real>(
    low: &BranchParams<T>,
    high: &BranchParams<T>,
    scales: &[f64; 8],
    points: &ArrayView2<'_, T>,
) -> Array2<T> {
    let low_out = branch_forward(low, points);
    let encoded = encode_matrix(points, scales);
    let high_out = branch_forward(high, &encoded.view());
    concatenate![Axis(1), low_out, high_out]
}

/// Activations cached for the reverse pass.
pub(crate) struct LayerCache<T> {
    input: Array2<T>,
    u: Array2<T>,
    v: Array2<T>,
}

pub(crate) struct ForwardCache<T> {
    low_l1: LayerCache<T>,
    low_l2: LayerCache<T>,
    high_l1: LayerCache<T>,
    high_l2: LayerCache<T>,
    /// Concatenated [low | high] output.
    pub output: Array2<T>,
}

fn swiglu_forward_cached<T: Real>(layer: &SwigluLayer<T>, h: &ArrayView2<'_, T>) -> (Array2<T>, LayerCache<T>) {
    let mut u = panel_matmul(h, &layer.w1.view());
    u += &layer.b1;
    let mut v = panel_matmul(h, &layer.w2.view());
    v += &layer.b2;
    let mut out = u.clone();
    ndarray::Zip::from(&mut out).and(&v).for_each(|ui, vi| {
        *ui = silu_chain(*ui, 0)[0] * *vi;
    });
    (out, LayerCache { input: h.to_owned(), u, v })
}

/// Forward pass that keeps the intermediates needed by [`backward_nd`].
pub(crate) fn forward_cached_nd<T: Real>(
    low: &BranchParams<T>,
    high: &BranchParams<T>,
    scales: &[f64; 8],
    points: &ArrayView2<'_, T>,
) -> ForwardCache<T> {
    let (lo1, low_l1) = swiglu_forward_cached(&low.l1, points);
    let (lo2, low_l2) = swiglu_forward_cached(&low.l2, &lo1.view());
    let encoded = encode_matrix(points, scales);
    let (hi1, high_l1) = swiglu_forward_cached(&high.l1, &encoded.view());
    let (hi2, high_l2) = swiglu_forward_cached(&high.l2, &hi1.view());
    let output = concatenate![Axis(1), lo2, hi2];
    ForwardCache { low_l1, low_l2, high_l1, high_l2, output }
}

/// Gradients of one SwiGLU layer and of its input.
fn swiglu_backward<T: Real>(
    layer: &SwigluLayer<T>,
    cache: &LayerCache<T>,
    g: &ArrayView2<'_, T>,
) -> (SwigluLayer<T>, Array2<T>) {
    // out = SiLU(u) ⊙ v  ⇒  ∂out/∂u = SiLU'(u) ⊙ v, ∂out/∂v = SiLU(u).
    let mut gu = Array2::<T>::zeros(cache.u.dim());
    let mut gv = Array2::<T>::zeros(cache.u.dim());
    ndarray::Zip::from(&mut gu)
        .and(&mut gv)
        .and(&cache.u)
        .and(&cache.v)
        .and(g)
        .for_each(|gui, gvi, ui, vi, gi| {
            let chain = silu_chain(*ui, 1);
            *gui = *gi * chain[1] * *vi;
            *gvi = *gi * chain[0];
        });
    let grads = SwigluLayer {
        w1: cache.input.t().dot(&gu),
        b1: gu.sum_axis(Axis(0)),
        w2: cache.input.t().dot(&gv),
        b2: gv.sum_axis(Axis(0)),
    };
    let ginput = gu.dot(&layer.w1.t()) + gv.dot(&layer.w2.t());
    (grads, ginput)
}

/// Reverse pass through both branches; upstream is N×H ordered [low | high].
pub(crate) fn backward_nd<T: Real>(
    low: &BranchParams<T>,
    high: &BranchParams<T>,
    cache: &ForwardCache<T>,
    upstream: &ArrayView2<'_, T>,
) -> (BranchParams<T>, BranchParams<T>) {
    let half = cache.low_l2.u.ncols();
    let g_low = upstream.slice(s![.., ..half]);
    let g_high = upstream.slice(s![.., half..]);
    let (glow_l2, g_into_l1) = swiglu_backward(&low.l2, &cache.low_l2, &g_low);
    let (glow_l1, _) = swiglu_backward(&low.l1, &cache.low_l1, &g_into_l1.view());
    let (ghigh_l2, g_into_h1) = swiglu_backward(&high.l2, &cache.high_l2, &g_high);
    let (ghigh_l1, _) = swiglu_backward(&high.l1, &cache.high_l1, &g_into_h1.view());
    (
        BranchParams { l1: glow_l1, l2: glow_l2 },
        BranchParams { l1: ghigh_l1, l2: ghigh_l2 },
    )
}

// ---------------------------------------------------------------------------
// Jet propagation: each derivative order is a full N×width plane; linear maps
// act per plane, elementwise nonlinearities compose via Faà di Bruno and the
// Leibniz rule exactly as the scalar Jet3 does.
// ---------------------------------------------------------------------------

type Planes<T> = Vec<Array2<T>>;

fn linear_jets<T: Real>(layer_w: &Array2<T>, bias: Option<&Array1<T>>, planes: &Planes<T>) -> Planes<T> {
    let mut out: Planes<T> = planes.iter().map(|p| panel_matmul(&p.view(), &layer_w.view())).collect();
    if let Some(b) = bias {
        out[0] += b;
    }
    out
}

/// Elementwise SwiGLU on jet planes: g = SiLU(u) with Faà di Bruno, then the
/// Leibniz product with v.
fn swiglu_jets<T: Real>(u: &Planes<T>, v: &Planes<T>) -> Planes<T> {
    let order = u.len() - 1;
    let dim = u[0].dim();
    let mut out: Planes<T> = (0..=order).map(|_| Array2::<T>::zeros(dim)).collect();
    let three = T::from(3.0).expect("literal");
    let two = T::from(2.0).expect("literal");
    for i in 0..dim.0 {
        for j in 0..dim.1 {
            let u0 = u[0][[i, j]];
            let f = silu_chain(u0, order);
            // SiLU(u) as a jet via Faà di Bruno.
            let mut su = [T::zero(); 4];
            su[0] = f[0];
            if order >= 1 {
                let u1 = u[1][[i, j]];
                su[1] = f[1] * u1;
                if order >= 2 {
                    let u2 = u[2][[i, j]];
                    su[2] = f[1] * u2 + f[2] * u1 * u1;
                    if order >= 3 {
                        let u3 = u[3][[i, j]];
                        su[3] = f[1] * u3 + three * f[2] * u1 * u2 + f[3] * u1 * u1 * u1;
                    }
                }
            }
            // Leibniz product su ⊙ v through the available order.
            let v0 = v[0][[i, j]];
            out[0][[i, j]] = su[0] * v0;
            if order >= 1 {
                let v1 = v[1][[i, j]];
                out[1][[i, j]] = su[1] * v0 + su[0] * v1;
                if order >= 2 {
                    let v2 = v[2][[i, j]];
                    out[2][[i, j]] = su[2] * v0 + two * su[1] * v1 + su[0] * v2;
                    if order >= 3 {
                        let v3 = v[3][[i, j]];
                        out[3][[i, j]] = su[3] * v0
                            + three * su[2] * v1
                            + three * su[1] * v2
                            + su[0] * v3;
                    }
                }
            }
        }
    }
    out
}

fn swiglu_layer_jets<T: Real>(layer: &SwigluLayer<T>, planes: &Planes<T>) -> Planes<T> {
    let u = linear_jets(&layer.w1, Some(&layer.b1), planes);
    let v = linear_jets(&layer.w2, Some(&layer.b2), planes);
    swiglu_jets(&u, &v)
}

/// Raw-coordinate jet planes: plane 1 of the active axis column is 1.
fn seed_planes<T: Real>(points: &ArrayView2<'_, T>, axis: usize, order: usize) -> Planes<T> {
    let mut planes: Planes<T> = (0..=order).map(|_| Array2::<T>::zeros(points.dim())).collect();
    planes[0].assign(points);
    if order >= 1 {
        for i in 0..points.nrows() {
            planes[1][[i, axis]] = T::one();
        }
    }
    planes
}

/// Encoding jet planes: each feature is sin/cos of t = π·s·x_a, an affine
/// function of the coordinates, so the chain factor is the constant π·s for
/// the active axis and zero otherwise.
fn encode_jets<T: Real>(
    points: &ArrayView2<'_, T>,
    scales: &[f64; 8],
    axis: usize,
    order: usize,
) -> Planes<T> {
    let (n, d) = points.dim();
    let pi = T::from(std::f64::consts::PI).expect("pi");
    let width = 2 * d * scales.len();
    let mut planes: Planes<T> = (0..=order).map(|_| Array2::<T>::zeros((n, width))).collect();
    for i in 0..n {
        let mut j = 0;
        for a in 0..d {
            let xa = points[[i, a]];
            for s in scales {
                let k = pi * T::from(*s).expect("scale");
                let t = k * xa;
                let (st, ct) = (num_traits::Float::sin(t), num_traits::Float::cos(t));
                let rate = if a == axis { k } else { T::zero() };
                // Derivatives of sin(t): cos·k, −sin·k², −cos·k³; of cos(t):
                // −sin·k, −cos·k², sin·k³.
                let sin_chain = [st, ct * rate, -st * rate * rate, -ct * rate * rate * rate];
                let cos_chain = [ct, -st * rate, -ct * rate * rate, st * rate * rate * rate];
                for (o, plane) in planes.iter_mut().enumerate() {
                    plane[[i, j]] = sin_chain[o];
                    plane[[i, j + 1]] = cos_chain[o];
                }
                j += 2;
            }
        }
    }
    planes
}

/// Jet evaluation through both branches; returns order+1 planes of N×H.
pub(crate) fn jets_nd<T: Real>(
    low: &BranchParams<T>,
    high: &BranchParams<T>,
    scales: &[f64; 8],
    points: &ArrayView2<'_, T>,
    axis: usize,
    order: usize,
) -> Planes<T> {
    let low_planes = {
        let seeded = seed_planes(points, axis, order);
        let o1 = swiglu_layer_jets(&low.l1, &seeded);
        swiglu_layer_jets(&low.l2, &o1)
    };
    let high_planes = {
        let encoded = encode_jets(points, scales, axis, order);
        let o1 = swiglu_layer_jets(&high.l1, &encoded);
        swiglu_layer_jets(&high.l2, &o1)
    };
    low_planes
        .into_iter()
        .zip(high_planes)
        .map(|(lo, hi)| concatenate![Axis(1), lo, hi])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn points(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, d), |_| rng.random::<f64>())
    }

    #[test]
    fn init_is_deterministic_and_shaped() {
        let a = init_params(2, 8, 7).unwrap();
        let b = init_params(2, 8, 7).unwrap();
        assert_eq!(a.to_flat(), b.to_flat());
        assert_eq!(a.low.l1.w1.dim(), (2, 8));
        assert_eq!(a.low.l2.w1.dim(), (8, 4));
        assert_eq!(a.high.l1.w1.dim(), (32, 8));
        assert_eq!(a.high.l2.w2.dim(), (8, 4));
        assert!(a.low.l1.b1.iter().all(|x| *x == 0.0));

        let c = init_params(2, 8, 8).unwrap();
        assert_ne!(a.to_flat(), c.to_flat());
    }

    #[test]
    fn init_rejects_bad_widths_and_dims() {
        assert!(matches!(init_params(2, 7, 0), Err(NetworkError::InvalidConfig(_))));
        assert!(matches!(init_params(2, 2, 0), Err(NetworkError::InvalidConfig(_))));
        assert!(matches!(init_params(4, 8, 0), Err(NetworkError::InvalidConfig(_))));
    }

    #[test]
    fn init_weight_mean_is_near_zero() {
        // Mean of all weights: each tensor is uniform ±a with variance a²/3;
        // the mean of the pooled draw has standard error √(Σ aᵢ²/3)/N.
        let p = init_params(2, 256, 123).unwrap();
        let mut sum = 0.0;
        let mut count = 0usize;
        let mut var_sum = 0.0;
        for branch in [&p.low, &p.high] {
            for layer in [&branch.l1, &branch.l2] {
                for w in [&layer.w1, &layer.w2] {
                    let bound = (6.0 / (w.nrows() + w.ncols()) as f64).sqrt();
                    sum += w.iter().sum::<f64>();
                    count += w.len();
                    var_sum += w.len() as f64 * bound * bound / 3.0;
                }
            }
        }
        let mean = sum / count as f64;
        let se = var_sum.sqrt() / count as f64;
        assert!(mean.abs() <= 3.0 * se, "weight mean {mean} exceeds 3·SE {se}");
    }

    #[test]
    fn fourier_encode_known_values() {
        let e = fourier_encode(&[0.0, 0.0]);
        assert_eq!(e.len(), 32);
        for pair in e.chunks(2) {
            assert_eq!(pair[0], 0.0);
            assert_eq!(pair[1], 1.0);
        }
        let e = fourier_encode(&[0.5, 0.0]);
        assert_relative_eq!(e[0], 1.0, max_relative = 1e-15); // sin(π/2)
        assert!(e[1].abs() < 1e-15); // cos(π/2)
        assert_eq!(fourier_encode(&[0.1, 0.2, 0.3]).len(), 48);
    }

    #[test]
    fn zeroed_network_outputs_zero() {
        let mut p = init_params(2, 8, 1).unwrap();
        p.zero_low_branch();
        p.zero_high_branch();
        let out = forward(&p, points(5, 2, 0).view()).unwrap();
        for i in 0..5 {
            for j in 0..8 {
                assert_eq!(out.get(i, j), 0.0);
            }
        }
    }

    #[test]
    fn swiglu_layer_hand_value() {
        // h = (1), W₁ = (1), b₁ = 0, W₂ = (2), b₂ = 0:
        // SiLU(1)·2 = 2/(1+e⁻¹) ≈ 1.46212.
        let layer = SwigluLayer {
            w1: Array2::from_elem((1, 1), 1.0),
            b1: Array1::zeros(1),
            w2: Array2::from_elem((1, 1), 2.0),
            b2: Array1::zeros(1),
        };
        let h = Array2::from_elem((1, 1), 1.0);
        let out = swiglu_forward(&layer, &h.view());
        assert_relative_eq!(out[[0, 0]], 2.0 / (1.0 + (-1.0f64).exp()), max_relative = 1e-15);
        assert_relative_eq!(out[[0, 0]], 1.46212, max_relative = 1e-5);
    }

    #[test]
    fn branches_are_isolated_by_output_halves() {
        let p = init_params(2, 16, 3).unwrap();
        let pts = points(7, 2, 1);
        let base = forward(&p, pts.view()).unwrap();

        let mut no_high = p.clone();
        no_high.zero_high_branch();
        let low_only = forward(&no_high, pts.view()).unwrap();
        let mut no_low = p.clone();
        no_low.zero_low_branch();
        let high_only = forward(&no_low, pts.view()).unwrap();

        for i in 0..7 {
            for j in 0..8 {
                // First H/2 columns: low branch, untouched by zeroing high.
                assert_eq!(base.get(i, j), low_only.get(i, j));
                assert_eq!(high_only.get(i, j), 0.0);
                // Last H/2 columns: high branch.
                assert_eq!(base.get(i, 8 + j), high_only.get(i, 8 + j));
                assert_eq!(low_only.get(i, 8 + j), 0.0);
            }
        }
    }

    #[test]
    fn forward_equals_jet_value_plane_bitwise() {
        let p = init_params(2, 16, 11).unwrap();
        let pts = points(33, 2, 2);
        let plain = forward(&p, pts.view()).unwrap();
        for axis in 0..2 {
            let block = forward_jets(&p, pts.view(), axis, 3).unwrap();
            for i in 0..33 {
                for j in 0..16 {
                    assert_eq!(plain.get(i, j).to_bits(), block.phi.get(i, j).to_bits());
                }
            }
        }
    }

    #[test]
    fn forward_rows_do_not_depend_on_batching() {
        let p = init_params(2, 16, 5).unwrap();
        let pts = points(173, 2, 3);
        let full = forward(&p, pts.view()).unwrap();
        // Split into odd chunks, including single rows, and compare bitwise.
        let mut row = 0;
        for size in [1usize, 2, 37, 64, 69] {
            let chunk = pts.slice(s![row..row + size, ..]);
            let out = forward(&p, chunk).unwrap();
            for i in 0..size {
                for j in 0..16 {
                    assert_eq!(
                        out.get(i, j).to_bits(),
                        full.get(row + i, j).to_bits(),
                        "row {} differs when evaluated in a chunk of {size}",
                        row + i
                    );
                }
            }
            row += size;
        }
        assert_eq!(row, 173);
    }

    #[test]
    fn high_branch_output_has_period_two() {
        // Integer scales make every encoding component 2-periodic, so with
        // the low branch zeroed the whole output is 2-periodic (up to the
        // rounding in evaluating sin at shifted arguments).
        let mut p = init_params(2, 16, 9).unwrap();
        p.zero_low_branch();
        let pts = points(20, 2, 4);
        let shifted = &pts + 2.0;
        let a = forward(&p, pts.view()).unwrap();
        let b = forward(&p, shifted.view()).unwrap();
        for i in 0..20 {
            for j in 0..16 {
                assert_relative_eq!(a.get(i, j), b.get(i, j), epsilon = 1e-9, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn masked_axis_has_identically_zero_jets() {
        // Zero every first-layer weight row fed by axis 1 — the low branch's
        // coordinate row and the high branch's axis-1 encoding rows (the
        // encoding is axis-major, so with d = 2 those are rows 16..32). The
        // network then cannot depend on axis 1 and its axis-1 derivative
        // planes must vanish exactly, while a generic network's do not.
        let p = init_params(2, 8, 21).unwrap();
        let pts = points(9, 2, 5);
        let generic = forward_jets(&p, pts.view(), 1, 3).unwrap();
        assert!(generic.derivs[0].to_f64_array().iter().any(|x| x.abs() > 1e-6));

        let mut masked = p.clone();
        masked.low.l1.w1.row_mut(1).fill(0.0);
        masked.low.l1.w2.row_mut(1).fill(0.0);
        for r in 16..32 {
            masked.high.l1.w1.row_mut(r).fill(0.0);
            masked.high.l1.w2.row_mut(r).fill(0.0);
        }
        let block = forward_jets(&masked, pts.view(), 1, 3).unwrap();
        for d in &block.derivs {
            for i in 0..9 {
                for j in 0..8 {
                    assert_eq!(d.get(i, j), 0.0, "axis-1 derivative leaked past masked weights");
                }
            }
        }
    }

    #[test]
    fn backward_zero_upstream_gives_zero_grads() {
        let p = init_params(2, 8, 2).unwrap();
        let pts = points(5, 2, 6);
        let upstream = Array2::<f64>::zeros((5, 8));
        let g = backward(&p, pts.view(), upstream.view()).unwrap();
        assert!(g.to_flat().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn backward_is_linear_in_upstream() {
        let p = init_params(2, 8, 4).unwrap();
        let pts = points(6, 2, 7);
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let u1 = Array2::from_shape_fn((6, 8), |_| rng.random::<f64>() - 0.5);
        let u2 = Array2::from_shape_fn((6, 8), |_| rng.random::<f64>() - 0.5);
        let sum = &u1 + &u2;
        let g1 = backward(&p, pts.view(), u1.view()).unwrap().to_flat();
        let g2 = backward(&p, pts.view(), u2.view()).unwrap().to_flat();
        let gsum = backward(&p, pts.view(), sum.view()).unwrap().to_flat();
        for ((a, b), s) in g1.iter().zip(&g2).zip(&gsum) {
            assert_relative_eq!(a + b, *s, max_relative = 1e-12, epsilon = 1e-14);
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let dir = std::env::temp_dir().join(format!("mcbd-test-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.mcbd");
        let p = init_params(2, 16, 99).unwrap();
        save_checkpoint(&p, &path, serde_json::json!({"note": "test"})).unwrap();
        let (q, meta) = load_checkpoint_with_metadata(&path).unwrap();
        assert_eq!(p.to_flat(), q.to_flat());
        assert_eq!(p.input_dim(), q.input_dim());
        assert_eq!(p.hidden(), q.hidden());
        assert_eq!(meta["note"], "test");

        let pts = points(100, 2, 9);
        let a = forward(&p, pts.view()).unwrap();
        let b = forward(&q, pts.view()).unwrap();
        for i in 0..100 {
            for j in 0..16 {
                assert_eq!(a.get(i, j).to_bits(), b.get(i, j).to_bits());
            }
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn checkpoint_rejects_wrong_magic_and_truncation() {
        let dir = std::env::temp_dir().join(format!("mcbd-test-bad-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let good = dir.join("good.mcbd");
        let p = init_params(2, 8, 1).unwrap();
        save_checkpoint(&p, &good, serde_json::Value::Null).unwrap();

        let bytes = std::fs::read(&good).unwrap();
        let bad_magic = dir.join("bad_magic.mcbd");
        let mut corrupted = bytes.clone();
        corrupted[0] = b'X';
        std::fs::write(&bad_magic, &corrupted).unwrap();
        assert!(matches!(
            load_checkpoint(&bad_magic),
            Err(NetworkError::IncompatibleCheckpoint(_))
        ));

        let truncated = dir.join("truncated.mcbd");
        std::fs::write(&truncated, &bytes[..bytes.len() - 9]).unwrap();
        assert!(matches!(
            load_checkpoint(&truncated),
            Err(NetworkError::CorruptCheckpoint(_))
        ));

        let bad_version = dir.join("bad_version.mcbd");
        let mut corrupted = bytes.clone();
        corrupted[4] = 9;
        std::fs::write(&bad_version, &corrupted).unwrap();
        assert!(matches!(
            load_checkpoint(&bad_version),
            Err(NetworkError::IncompatibleCheckpoint(_))
        ));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn flat_round_trip_preserves_parameters() {
        let p = init_params(3, 8, 17).unwrap();
        let flat = p.to_flat();
        let mut q = init_params(3, 8, 0).unwrap();
        q.set_from_flat(&flat).unwrap();
        assert_eq!(q.to_flat(), flat);
        assert!(q.set_from_flat(&flat[1..]).is_err());
    }

    #[test]
    fn fp32_tag_changes_arithmetic() {
        let p = init_params(2, 16, 31).unwrap();
        let pts = points(10, 2, 10);
        let out64 = forward(&p, pts.view()).unwrap();
        let out32 = forward(&p.with_precision(Precision::Fp32), pts.view()).unwrap();
        assert_eq!(out32.precision(), Precision::Fp32);
        // Values agree to roughly f32 resolution (the scale-128 sinusoids
        // lose a few digits to f32 argument reduction) but not exactly.
        let mut any_diff = false;
        for i in 0..10 {
            for j in 0..16 {
                let (a, b) = (out64.get(i, j), out32.get(i, j));
                assert_relative_eq!(a, b, max_relative = 1e-3, epsilon = 1e-4);
                if a != b {
                    any_diff = true;
                }
            }
        }
        assert!(any_diff, "fp32 evaluation should not be bit-identical to fp64");
    }
}
