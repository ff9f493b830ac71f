//! Per-realization free energy from the contour representation of the
//! spherical partition function.
//!
//! Spectra are passed as eigenvalue slices sorted descending. Offsets
//! `x - λ_1` are carried explicitly so that saddles sitting within ~1/N of the
//! top eigenvalue keep full relative precision.

use crate::error::{Error, Result};
use crate::quad::adaptive_gk15;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

/// Cap on the contour value; exceeding it is reported, not fatal.
pub const K_CAP: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KMethod {
    SteepestDescent,
    VerticalLine,
    Laplace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreeEnergyMode {
    /// Large-N form of the prefactor; O(1/N) relative error.
    Asymptotic,
    /// Prefactor through log-Gamma.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaddleData {
    pub beta: f64,
    pub gamma: f64,
    /// `γ - λ_1`.
    pub gamma_offset: f64,
    pub r_gamma: f64,
    pub r2: f64,
    pub k: f64,
    pub method: KMethod,
    /// `N^{-10} < K <= K_CAP`.
    pub k_in_bounds: bool,
    pub free_energy: f64,
}

fn check(eigs: &[f64], beta: f64) -> Result<()> {
    if eigs.is_empty() {
        return Err(Error::InvalidParameter("empty spectrum".into()));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
    }
    Ok(())
}

/// `R(z) = 2βz - (1/N) Σ log(z - λ_i)` with the principal logarithm.
pub fn r_eval(eigs: &[f64], beta: f64, z: Complex64) -> Result<Complex64> {
    check(eigs, beta)?;
    if z.im == 0.0 && z.re <= eigs[0] {
        return Err(Error::BranchCut { re: z.re, im: z.im });
    }
    let n = eigs.len() as f64;
    let s: Complex64 = eigs.iter().map(|&e| (z - e).ln()).sum();
    Ok(z * (2.0 * beta) - s / n)
}

/// `Im R(x + iy)` through arccosines of the eigenvalue angles.
pub fn im_r_arccos(eigs: &[f64], beta: f64, x: f64, y: f64) -> f64 {
    let n = eigs.len() as f64;
    let s: f64 = eigs.iter().map(|&e| ((x - e) / (x - e).hypot(y)).acos()).sum();
    2.0 * beta * y - s / n
}

/// l-th derivative of R at real `x > λ_1`.
pub fn r_derivative(eigs: &[f64], beta: f64, l: u32, x: f64) -> Result<f64> {
    check(eigs, beta)?;
    if x <= eigs[0] {
        return Err(Error::BranchCut { re: x, im: 0.0 });
    }
    Ok(derivative_at_offset(eigs, beta, l, x - eigs[0]))
}

fn derivative_at_offset(eigs: &[f64], beta: f64, l: u32, delta: f64) -> f64 {
    let n = eigs.len() as f64;
    let top = eigs[0];
    if l == 0 {
        let s: f64 = eigs.iter().map(|&e| (delta + (top - e)).ln()).sum();
        return 2.0 * beta * (top + delta) - s / n;
    }
    // d^l/dx^l of -log(x - e) = (-1)^l (l-1)! / (x - e)^l
    let fact: f64 = (1..l).map(|k| k as f64).product();
    let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
    let s: f64 = eigs.iter().map(|&e| (delta + (top - e)).powi(-(l as i32))).sum();
    let d = sign * fact * s / n;
    if l == 1 {
        2.0 * beta + d
    } else {
        d
    }
}

/// Offset `γ - λ_1` of the unique critical point of R on (λ_1, ∞).
fn gamma_offset(eigs: &[f64], beta: f64) -> Result<f64> {
    let n = eigs.len() as f64;
    let rp = |d: f64| derivative_at_offset(eigs, beta, 1, d);
    // R' < 0 at 1/(3βN) (one term alone exceeds 2β) and R' >= 0 at 1/(2β).
    let mut lo = 1.0 / (3.0 * beta * n);
    let mut hi = 1.0 / (2.0 * beta);
    while rp(hi) < 0.0 {
        hi *= 2.0;
    }
    if rp(lo) >= 0.0 {
        lo = 0.0;
    }
    let mut d = 0.5 * (lo + hi);
    for _ in 0..300 {
        let v = rp(d);
        if v.abs() <= 1e-15 * beta {
            return Ok(d);
        }
        if v < 0.0 {
            lo = d;
        } else {
            hi = d;
        }
        let step = d - v / derivative_at_offset(eigs, beta, 2, d);
        d = if step > lo && step < hi { step } else { 0.5 * (lo + hi) };
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            return Ok(d);
        }
    }
    Ok(d)
}

/// Saddle point γ: `2β = (1/N) Σ 1/(γ - λ_i)`.
pub fn saddle_gamma(eigs: &[f64], beta: f64) -> Result<f64> {
    check(eigs, beta)?;
    Ok(eigs[0] + gamma_offset(eigs, beta)?)
}

/// Im R on the horizontal line at height y, in offset coordinates.
fn im_r_offset(eigs: &[f64], beta: f64, s: f64, y: f64) -> (f64, f64) {
    let n = eigs.len() as f64;
    let top = eigs[0];
    let mut arg = 0.0;
    let mut slope = 0.0;
    for &e in eigs {
        let dx = s + (top - e);
        arg += y.atan2(dx);
        slope += y / (dx * dx + y * y);
    }
    (2.0 * beta * y - arg / n, slope / n)
}

/// Offset `h(y) - λ_1` of the steepest-descent curve.
fn curve_offset(eigs: &[f64], beta: f64, y: f64, g_off: f64) -> Result<f64> {
    let limit = PI / (2.0 * beta);
    let y = y.abs();
    if y >= limit {
        return Err(Error::OutOfDomain { y, limit });
    }
    if y == 0.0 {
        return Ok(g_off);
    }
    // f(s) = Im R(λ_1 + s + iy) increases in s; the root lies left of γ.
    let f = |s: f64| im_r_offset(eigs, beta, s, y);
    let mut hi = g_off;
    let mut step = g_off.abs().max(y).max(1e-3);
    let mut lo = hi - step;
    let mut guard = 0;
    while f(lo).0 > 0.0 {
        hi = lo;
        step *= 2.0;
        lo -= step;
        guard += 1;
        if guard > 200 {
            return Err(Error::NoConvergence { what: format!("bracket for h({y})"), residual: f(lo).0 });
        }
    }
    let mut s = 0.5 * (lo + hi);
    for _ in 0..300 {
        let (v, d) = f(s);
        if v.abs() < 1e-14 {
            return Ok(s);
        }
        if v < 0.0 {
            lo = s;
        } else {
            hi = s;
        }
        let next = s - v / d;
        s = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
        if hi - lo <= 4.0 * f64::EPSILON * s.abs().max(1e-300) {
            return Ok(s);
        }
    }
    Ok(s)
}

/// `h(y)`: the real part of the point at height y where Im R vanishes.
pub fn steepest_curve(eigs: &[f64], beta: f64, y: f64) -> Result<f64> {
    check(eigs, beta)?;
    let g = gamma_offset(eigs, beta)?;
    Ok(eigs[0] + curve_offset(eigs, beta, y, g)?)
}

/// `Re R(λ_1 + s + iy) - R(γ)`.
fn re_r_gap(eigs: &[f64], beta: f64, s: f64, y: f64, g_off: f64) -> f64 {
    let n = eigs.len() as f64;
    let top = eigs[0];
    let mut acc = 0.0;
    for &e in eigs {
        let gap = top - e;
        let a = s + gap;
        let b = g_off + gap;
        acc += 0.5 * ((a * a + y * y) / (b * b)).ln();
    }
    2.0 * beta * (s - g_off) - acc / n
}

fn laplace_scale(n: f64, r2: f64) -> f64 {
    2.0 / (n * r2).sqrt()
}

/// Geometric then uniform breakpoints on [0, end] around the peak width.
fn peak_breaks(width: f64, end: f64) -> Vec<f64> {
    let mut b = vec![0.0];
    let mut x = width / 16.0;
    while x < end {
        b.push(x);
        x *= 2.0;
    }
    b.push(end);
    b
}

/// Normalized contour value K.
pub fn contour_k(eigs: &[f64], beta: f64, method: KMethod) -> Result<f64> {
    check(eigs, beta)?;
    let g_off = gamma_offset(eigs, beta)?;
    contour_k_at(eigs, beta, g_off, method)
}

fn contour_k_at(eigs: &[f64], beta: f64, g_off: f64, method: KMethod) -> Result<f64> {
    let n = eigs.len() as f64;
    let r2 = derivative_at_offset(eigs, beta, 2, g_off);
    let width = laplace_scale(n, r2);
    match method {
        KMethod::Laplace => Ok((4.0 * PI / (n * r2)).sqrt()),
        KMethod::SteepestDescent => {
            let limit = PI / (2.0 * beta);
            let integrand = |y: f64| -> f64 {
                match curve_offset(eigs, beta, y, g_off) {
                    Ok(s) => (0.5 * n * re_r_gap(eigs, beta, s, y, g_off)).exp(),
                    Err(_) => 0.0,
                }
            };
            // Stop where the integrand is below e^-46 of its peak, or at the domain end.
            let mut end = width;
            while end < limit && integrand(end) > 1e-20 {
                end = (end * 2.0).min(limit * (1.0 - 1e-12));
                if end >= limit * (1.0 - 1e-12) {
                    break;
                }
            }
            let end = end.min(limit * (1.0 - 1e-12));
            let res = adaptive_gk15(integrand, &peak_breaks(width, end), 1e-300, 1e-11, 4000)?;
            Ok(2.0 * res.value)
        }
        KMethod::VerticalLine => {
            let top = eigs[0];
            let gaps: Vec<f64> = eigs.iter().map(|&e| g_off + (top - e)).collect();
            let log_bound = |t: f64| -> f64 { -0.25 * gaps.iter().map(|d| (t * t / (d * d)).ln_1p()).sum::<f64>() };
            let cutoff = (1e-16f64).ln();
            let mut hi = width;
            while log_bound(hi) > cutoff {
                hi *= 2.0;
                if hi > 1e12 {
                    return Err(Error::QuadratureFailure("integrand bound does not decay".into()));
                }
            }
            let mut lo = 0.0;
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if log_bound(mid) > cutoff {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let integrand = |t: f64| -> f64 {
                // exp(N/2 (R(γ+it) - R(γ))) = exp(iβNt) Π (1 + it/d_i)^{-1/2}
                let mut logmag = 0.0;
                let mut phase = beta * n * t;
                for d in &gaps {
                    let u = t / d;
                    logmag -= 0.25 * u.mul_add(u, 0.0).ln_1p();
                    phase -= 0.5 * u.atan();
                }
                logmag.exp() * phase.cos()
            };
            let res = adaptive_gk15(integrand, &peak_breaks(width, hi), 1e-300, 1e-11, 20000)?;
            Ok(2.0 * res.value)
        }
    }
}

/// Saddle data and free energy
/// `F_N = (1/N) log ∫_{S^{N-1}} exp(β⟨σ, Jσ⟩) dω(σ)` (uniform probability
/// measure on the sphere).
pub fn free_energy(eigs: &[f64], beta: f64, method: KMethod, mode: FreeEnergyMode) -> Result<SaddleData> {
    check(eigs, beta)?;
    let n = eigs.len() as f64;
    let g_off = gamma_offset(eigs, beta)?;
    let r_gamma = derivative_at_offset(eigs, beta, 0, g_off);
    let r2 = derivative_at_offset(eigs, beta, 2, g_off);
    let k = contour_k_at(eigs, beta, g_off, method)?;
    if !(k > 0.0) {
        return Err(Error::QuadratureFailure(format!("contour value is not positive: {k}")));
    }
    let free_energy = match mode {
        FreeEnergyMode::Asymptotic => {
            0.5 * r_gamma - 0.5 * (2.0 * beta * std::f64::consts::E).ln() + ((n / PI).sqrt() * beta * k).ln() / n
        }
        FreeEnergyMode::Exact => {
            (ln_gamma(0.5 * n) - (2.0 * PI).ln() - (0.5 * n - 1.0) * (n * beta).ln() + 0.5 * n * r_gamma + k.ln()) / n
        }
    };
    let k_in_bounds = k > n.powi(-10) && k <= K_CAP;
    Ok(SaddleData {
        beta,
        gamma: eigs[0] + g_off,
        gamma_offset: g_off,
        r_gamma,
        r2,
        k,
        method,
        k_in_bounds,
        free_energy,
    })
}

/// `exp(-c (-s)^{b+1} / (b+1))` for `s <= 0`.
pub fn weibull_cdf(c: f64, b: f64, s: f64) -> Result<f64> {
    if !(c > 0.0 && b > -1.0) {
        return Err(Error::DomainError(format!("need c > 0 and b > -1 (c={c}, b={b})")));
    }
    if s > 0.0 {
        return Err(Error::DomainError(format!("upper-edge law is supported on s <= 0, got {s}")));
    }
    Ok((-c * (-s).powf(b + 1.0) / (b + 1.0)).exp())
}

/// `1 - exp(-c s^{a+1} / (a+1))` for `s >= 0`.
pub fn weibull_cdf_lower(c: f64, a: f64, s: f64) -> Result<f64> {
    if !(c > 0.0 && a > -1.0) {
        return Err(Error::DomainError(format!("need c > 0 and a > -1 (c={c}, a={a})")));
    }
    if s < 0.0 {
        return Err(Error::DomainError(format!("lower-edge law is supported on s >= 0, got {s}")));
    }
    Ok(-(-c * s.powf(a + 1.0) / (a + 1.0)).exp_m1())
}
