//! Variance of linear spectral statistics as a double contour integral.

use super::FreeConvolution;
use crate::error::{Error, Result};
use crate::quad::gauss_legendre;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Test functions analytic in a neighbourhood of the spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFunction {
    /// `c0 + c1 x + c2 x^2 + ...`
    Polynomial(Vec<f64>),
    /// `log(γ - x)` for a point γ to the right of the support.
    LogShift(f64),
}

impl TestFunction {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            TestFunction::Polynomial(c) => c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci),
            TestFunction::LogShift(g) => (g - x).ln(),
        }
    }

    pub fn eval_complex(&self, z: Complex64) -> Complex64 {
        match self {
            TestFunction::Polynomial(c) => c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &ci| acc * z + ci),
            TestFunction::LogShift(g) => (Complex64::new(*g, 0.0) - z).ln(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContourOptions {
    /// Distance of the rectangle from the support.
    pub margin: f64,
    /// Gauss–Legendre panels per unit of graded side; the rule order is 16.
    pub panels: usize,
}

impl Default for ContourOptions {
    fn default() -> Self {
        ContourOptions { margin: 0.25, panels: 4 }
    }
}

const ORDER: usize = 16;

/// Breakpoints on [0, len] graded geometrically toward 0 down to `fine`.
fn graded(len: f64, fine: f64, sub: usize) -> Vec<f64> {
    let mut coarse = vec![len];
    while *coarse.last().unwrap() > fine {
        let next = coarse.last().unwrap() * 0.5;
        coarse.push(next);
    }
    coarse.push(0.0);
    coarse.reverse();
    let mut out = vec![0.0];
    for w in coarse.windows(2) {
        for k in 1..=sub {
            out.push(w[0] + (w[1] - w[0]) * k as f64 / sub as f64);
        }
    }
    out
}

impl FreeConvolution {
    /// Limiting variance of `(Σ f(λ_i) - N ∫ f dμ_fc) / √N`.
    ///
    /// The contour is the upper half of a rectangle around the support; the
    /// lower half follows from Schwarz reflection, so the result is real by
    /// construction.
    pub fn clt_variance(&self, f: &TestFunction, opts: &ContourOptions) -> Result<f64> {
        let (lo, hi) = self.support_edges();
        let d = opts.margin;
        if !(d > 0.0) || opts.panels == 0 {
            return Err(Error::InvalidParameter("contour margin and panel count must be positive".into()));
        }
        let right_gap = match f {
            TestFunction::LogShift(g) => {
                let gap = 0.5 * (g - hi);
                if gap < 1e-3 {
                    return Err(Error::ContourTooClose { margin: gap });
                }
                gap.min(d)
            }
            TestFunction::Polynomial(_) => d,
        };
        let (left, right) = (lo - d, hi + right_gap);
        let rule = gauss_legendre::<f64>(ORDER);

        // Path: up the right side, leftward along the top, down the left side.
        let mut path: Vec<(Complex64, Complex64)> = Vec::new();
        let vert_right = graded(d, right_gap / 8.0, opts.panels);
        for w in vert_right.windows(2) {
            let (s, ws) = rule.mapped(w[0], w[1]);
            for (si, wi) in s.into_iter().zip(ws) {
                path.push((Complex64::new(right, si), Complex64::new(0.0, wi)));
            }
        }
        let top_panels = opts.panels * ((right - left) / d).ceil().max(1.0) as usize;
        for k in 0..top_panels {
            let a = right - (right - left) * k as f64 / top_panels as f64;
            let b = right - (right - left) * (k + 1) as f64 / top_panels as f64;
            let (x, wx) = rule.mapped(a, b);
            for (xi, wi) in x.into_iter().zip(wx) {
                // mapped() on a reversed interval yields negative weights = dξ
                path.push((Complex64::new(xi, d), Complex64::new(wi, 0.0)));
            }
        }
        let vert_left = graded(d, d / 8.0, opts.panels);
        for w in vert_left.windows(2).rev() {
            let (s, ws) = rule.mapped(w[1], w[0]);
            for (si, wi) in s.into_iter().zip(ws) {
                path.push((Complex64::new(left, si), Complex64::new(0.0, wi)));
            }
        }

        let (atoms, masses) = self.measure.atoms();
        let lambda = self.lambda;
        let mut upper_a = Complex64::new(0.0, 0.0);
        let mut upper_b = vec![Complex64::new(0.0, 0.0); atoms.len()];
        let mut warm: Option<Complex64> = None;
        for &(xi, dxi) in &path {
            let omega = self.omega_upper(xi, warm)?;
            warm = Some(omega);
            let m = omega - xi;
            let one_plus_mp = (Complex64::new(1.0, 0.0) - self.s_prime(omega)).inv();
            let common = self.finite(f.eval_complex(xi) * one_plus_mp * dxi)?;
            upper_a += common * m;
            for (acc, &t) in upper_b.iter_mut().zip(&atoms) {
                *acc += common / (Complex64::new(lambda * t, 0.0) - omega);
            }
        }
        // Full contour integral = 2i Im(upper half).
        let ia = upper_a.im;
        let second: f64 = upper_b.iter().zip(&masses).map(|(bt, &w)| w * bt.im * bt.im).sum();
        let var = (second - ia * ia) / (std::f64::consts::PI * std::f64::consts::PI);
        if var < -1e-8 {
            return Err(Error::NoConvergence { what: "contour variance is negative".into(), residual: var });
        }
        Ok(var.max(0.0))
    }

    fn finite(&self, v: Complex64) -> Result<Complex64> {
        if v.re.is_finite() && v.im.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite { at: f64::NAN })
        }
    }
}
