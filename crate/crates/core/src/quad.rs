//! Gaussian quadrature rules and an adaptive Gauss–Kronrod integrator.

use crate::error::{Error, Result};
use crate::linalg::{tridiagonal_eigen_first_components, Tridiagonal};
use crate::scalar::Real;
use statrs::function::gamma::ln_gamma;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Nodes (ascending) and weights of a Gaussian quadrature rule on [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule<T> {
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Real> GaussRule<T> {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Sum of `w_k f(x_k)`.
    pub fn apply<F: Fn(T) -> T>(&self, f: F) -> T {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    /// Rule mapped affinely from [-1, 1] onto [lo, hi].
    pub fn mapped(&self, lo: T, hi: T) -> (Vec<T>, Vec<T>) {
        let half = T::of(0.5) * (hi - lo);
        let mid = T::of(0.5) * (hi + lo);
        let nodes = self.nodes.iter().map(|&x| mid + half * x).collect();
        let weights = self.weights.iter().map(|&w| w * half).collect();
        (nodes, weights)
    }
}

/// Gauss–Jacobi rule for the weight `(1 + x)^a (1 - x)^b` on [-1, 1],
/// computed by the Golub–Welsch eigenvalue method on the Jacobi matrix of
/// the three-term recurrence.
pub fn gauss_jacobi<T: Real>(n: usize, a: f64, b: f64) -> Result<GaussRule<T>> {
    if n == 0 {
        return Err(Error::InvalidParameter("quadrature order must be positive".into()));
    }
    if !(a > -1.0 && b > -1.0) {
        return Err(Error::InvalidParameter(format!("Jacobi exponents must exceed -1 (a={a}, b={b})")));
    }
    // Classical notation: weight (1 - x)^alpha (1 + x)^beta.
    let (alpha, beta) = (b, a);
    let ab = alpha + beta;
    let mut diag = vec![0.0f64; n];
    let mut off = vec![0.0f64; n.saturating_sub(1)];
    diag[0] = (beta - alpha) / (ab + 2.0);
    for (k, d) in diag.iter_mut().enumerate().skip(1) {
        let kf = k as f64;
        let s = 2.0 * kf + ab;
        *d = (beta * beta - alpha * alpha) / (s * (s + 2.0));
    }
    for (idx, o) in off.iter_mut().enumerate() {
        let k = (idx + 1) as f64;
        let s = 2.0 * k + ab;
        let b2 = if idx == 0 {
            // Cancels the (1 + alpha + beta) factor, valid at alpha + beta = -1.
            4.0 * (1.0 + alpha) * (1.0 + beta) / ((2.0 + ab) * (2.0 + ab) * (3.0 + ab))
        } else {
            4.0 * k * (k + alpha) * (k + beta) * (k + ab) / (s * s * (s + 1.0) * (s - 1.0))
        };
        *o = b2.sqrt();
    }
    let ln_mu0 = (ab + 1.0) * std::f64::consts::LN_2 + ln_gamma(alpha + 1.0) + ln_gamma(beta + 1.0)
        - ln_gamma(ab + 2.0);
    let mu0 = ln_mu0.exp();
    let tri = Tridiagonal { diag, offdiag: off };
    let (vals, first) = tridiagonal_eigen_first_components(&tri)?;
    // Ascending order.
    let nodes: Vec<T> = vals.iter().rev().map(|&x| T::of(x)).collect();
    let weights: Vec<T> = first.iter().rev().map(|&z| T::of(mu0 * z * z)).collect();
    Ok(GaussRule { nodes, weights })
}

/// Gauss–Legendre rule (unit weight).
pub fn gauss_legendre<T: Real>(n: usize) -> GaussRule<T> {
    gauss_jacobi(n, 0.0, 0.0).expect("Legendre rule is always valid for n > 0")
}

/// Composite Gauss–Legendre nodes and weights over consecutive breakpoints.
pub fn composite_rule(rule: &GaussRule<f64>, breaks: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = Vec::with_capacity(rule.len() * breaks.len());
    let mut weights = Vec::with_capacity(rule.len() * breaks.len());
    for w in breaks.windows(2) {
        let (x, ww) = rule.mapped(w[0], w[1]);
        nodes.extend(x);
        weights.extend(ww);
    }
    (nodes, weights)
}

// Kronrod 15-point extension of the 7-point Gauss rule (QUADPACK qk15).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, lo: f64, hi: f64) -> (f64, f64) {
    let c = 0.5 * (lo + hi);
    let h = 0.5 * (hi - lo);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

struct Segment {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Outcome of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

/// Globally adaptive Gauss–Kronrod (7/15) integration of `f` over the
/// partition given by `breaks`, bisecting the worst segment until the summed
/// error estimate falls below `max(abs_tol, rel_tol * |value|)`.
pub fn adaptive_gk15<F: FnMut(f64) -> f64>(
    mut f: F,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
    max_segments: usize,
) -> Result<Integral> {
    if breaks.len() < 2 {
        return Err(Error::QuadratureFailure("need at least two breakpoints".into()));
    }
    let mut heap = BinaryHeap::new();
    let mut evaluations = 0;
    for w in breaks.windows(2) {
        let (value, error) = gk15(&mut f, w[0], w[1]);
        evaluations += 15;
        heap.push(Segment { lo: w[0], hi: w[1], value, error });
    }
    loop {
        let (value, error) = heap.iter().fold((0.0, 0.0), |acc, s| (acc.0 + s.value, acc.1 + s.error));
        if !value.is_finite() {
            return Err(Error::QuadratureFailure("integrand produced a non-finite value".into()));
        }
        if error <= abs_tol.max(rel_tol * value.abs()) {
            return Ok(Integral { value, error, evaluations });
        }
        if heap.len() >= max_segments {
            return Err(Error::QuadratureFailure(format!(
                "segment budget exhausted (value {value:e}, error {error:e})"
            )));
        }
        let worst = heap.pop().expect("heap is non-empty");
        let mid = 0.5 * (worst.lo + worst.hi);
        let (v1, e1) = gk15(&mut f, worst.lo, mid);
        let (v2, e2) = gk15(&mut f, mid, worst.hi);
        evaluations += 30;
        heap.push(Segment { lo: worst.lo, hi: mid, value: v1, error: e1 });
        heap.push(Segment { lo: mid, hi: worst.hi, value: v2, error: e2 });
    }
}
