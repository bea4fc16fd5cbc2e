//! Order-3 truncated-Taylor scalars ("jets") along a single axis.
//!
//! A [`Jet3`] carries a value and its first three derivatives with respect to
//! one designated coordinate, all other coordinates held constant. Arithmetic
//! propagates the derivatives exactly: products via the Leibniz rule, smooth
//! univariate functions via Faà di Bruno with hand-derived chains for the
//! first three derivatives. Seeding the active coordinate with `(x, 1, 0, 0)`
//! and evaluating an expression therefore yields the expression's exact
//! derivatives up to third order — no truncation error beyond rounding.
//!
//! Every PDE operator in the catalog is a sum of axis-aligned derivatives
//! (`u_x`, `u_xx`, `u_xxx`, `u_y`, …; never mixed partials like `u_xy`), so
//! single-axis jets evaluated once per axis cover everything. Order is fixed
//! at 3, the maximum any operator needs (the third-order dispersion term).

use std::ops::{Add, Mul, Neg, Sub};

/// Value and first three derivatives along one axis, in fp64.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet3 {
    pub d0: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

/// Univariate functions liftable through a jet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryFn {
    Sin,
    Cos,
    Exp,
    Sigmoid,
    Silu,
    Tanh,
}

impl Jet3 {
    /// Seeds a coordinate: the active axis gets derivative 1, anything else
    /// is a constant with respect to the axis.
    pub fn seed(value: f64, is_active_axis: bool) -> Jet3 {
        Jet3 {
            d0: value,
            d1: if is_active_axis { 1.0 } else { 0.0 },
            d2: 0.0,
            d3: 0.0,
        }
    }

    /// A constant (all derivatives zero).
    pub fn constant(value: f64) -> Jet3 {
        Jet3 { d0: value, d1: 0.0, d2: 0.0, d3: 0.0 }
    }

    /// Multiplies by a plain scalar.
    pub fn scale(self, c: f64) -> Jet3 {
        Jet3 { d0: c * self.d0, d1: c * self.d1, d2: c * self.d2, d3: c * self.d3 }
    }

    pub fn sin(self) -> Jet3 {
        jet_unary(UnaryFn::Sin, self)
    }

    pub fn cos(self) -> Jet3 {
        jet_unary(UnaryFn::Cos, self)
    }

    pub fn exp(self) -> Jet3 {
        jet_unary(UnaryFn::Exp, self)
    }

    pub fn tanh(self) -> Jet3 {
        jet_unary(UnaryFn::Tanh, self)
    }

    pub fn is_finite(self) -> bool {
        self.d0.is_finite() && self.d1.is_finite() && self.d2.is_finite() && self.d3.is_finite()
    }
}

/// Leibniz product through order 3.
pub fn jet_mul(a: Jet3, b: Jet3) -> Jet3 {
    Jet3 {
        d0: a.d0 * b.d0,
        d1: a.d1 * b.d0 + a.d0 * b.d1,
        d2: a.d2 * b.d0 + 2.0 * a.d1 * b.d1 + a.d0 * b.d2,
        d3: a.d3 * b.d0 + 3.0 * a.d2 * b.d1 + 3.0 * a.d1 * b.d2 + a.d0 * b.d3,
    }
}

/// Composes a smooth univariate function with a jet (Faà di Bruno, order 3).
pub fn jet_unary(f: UnaryFn, a: Jet3) -> Jet3 {
    let [f0, f1, f2, f3] = derivatives(f, a.d0);
    compose(f0, f1, f2, f3, a)
}

/// Faà di Bruno through order 3 given f and its derivatives at `a.d0`.
fn compose(f0: f64, f1: f64, f2: f64, f3: f64, a: Jet3) -> Jet3 {
    Jet3 {
        d0: f0,
        d1: f1 * a.d1,
        d2: f1 * a.d2 + f2 * a.d1 * a.d1,
        d3: f1 * a.d3 + 3.0 * f2 * a.d1 * a.d2 + f3 * a.d1 * a.d1 * a.d1,
    }
}

/// f(x), f'(x), f''(x), f'''(x) for each supported function.
fn derivatives(f: UnaryFn, x: f64) -> [f64; 4] {
    match f {
        UnaryFn::Sin => {
            let (s, c) = x.sin_cos();
            [s, c, -s, -c]
        }
        UnaryFn::Cos => {
            let (s, c) = x.sin_cos();
            [c, -s, -c, s]
        }
        UnaryFn::Exp => {
            let e = x.exp();
            [e, e, e, e]
        }
        UnaryFn::Sigmoid => {
            let s = stable_sigmoid(x);
            let s1 = s * (1.0 - s);
            let s2 = s1 * (1.0 - 2.0 * s);
            let s3 = s2 * (1.0 - 2.0 * s) - 2.0 * s1 * s1;
            [s, s1, s2, s3]
        }
        UnaryFn::Silu => {
            // silu(x) = x·σ(x); differentiating the product:
            //   silu'   = σ + xσ'
            //   silu''  = 2σ' + xσ''
            //   silu''' = 3σ'' + xσ'''
            let s = stable_sigmoid(x);
            let s1 = s * (1.0 - s);
            let s2 = s1 * (1.0 - 2.0 * s);
            let s3 = s2 * (1.0 - 2.0 * s) - 2.0 * s1 * s1;
            [x * s, s + x * s1, 2.0 * s1 + x * s2, 3.0 * s2 + x * s3]
        }
        UnaryFn::Tanh => {
            let t = x.tanh();
            let t1 = 1.0 - t * t;
            let t2 = -2.0 * t * t1;
            let t3 = -2.0 * t1 * t1 - 2.0 * t * t2;
            [t, t1, t2, t3]
        }
    }
}

/// σ(x) without overflow: branch on the sign so exp only sees non-positive
/// arguments.
pub fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Add for Jet3 {
    type Output = Jet3;
    fn add(self, rhs: Jet3) -> Jet3 {
        Jet3 {
            d0: self.d0 + rhs.d0,
            d1: self.d1 + rhs.d1,
            d2: self.d2 + rhs.d2,
            d3: self.d3 + rhs.d3,
        }
    }
}

impl Sub for Jet3 {
    type Output = Jet3;
    fn sub(self, rhs: Jet3) -> Jet3 {
        Jet3 {
            d0: self.d0 - rhs.d0,
            d1: self.d1 - rhs.d1,
            d2: self.d2 - rhs.d2,
            d3: self.d3 - rhs.d3,
        }
    }
}

impl Neg for Jet3 {
    type Output = Jet3;
    fn neg(self) -> Jet3 {
        Jet3 { d0: -self.d0, d1: -self.d1, d2: -self.d2, d3: -self.d3 }
    }
}

impl Mul for Jet3 {
    type Output = Jet3;
    fn mul(self, rhs: Jet3) -> Jet3 {
        jet_mul(self, rhs)
    }
}
