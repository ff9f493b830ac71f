//! Cauchy transform of a Jacobi measure close to (and on) its support.
//!
//! Far from [-1, 1] the Gauss–Jacobi rule converges geometrically. Near the
//! interval the pole is handled by singularity subtraction against the
//! analytic continuation of the density, on a composite Gauss–Legendre mesh
//! graded geometrically toward both endpoints.

use super::JacobiMeasure;
use crate::quad::{composite_rule, gauss_legendre};
use num_complex::Complex64;

const LEVELS: i32 = 40;
const PANEL_ORDER: usize = 16;

#[derive(Debug, Clone)]
pub struct CauchyMesh {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    dens: Vec<f64>,
    order: usize,
}

fn breakpoints() -> Vec<f64> {
    let right: Vec<f64> = (0..=LEVELS).map(|k| 1.0 - 0.5f64.powi(k)).collect();
    let mut out: Vec<f64> = right.iter().rev().map(|x| -x).collect();
    out.extend(right.iter().skip(1));
    out.push(1.0);
    out.insert(0, -1.0);
    out
}

/// Size of the Bernstein ellipse parameter through `u`.
fn ellipse_radius(u: Complex64) -> f64 {
    let one = Complex64::new(1.0, 0.0);
    let s = (u * u - one).sqrt();
    (u + s).norm().max((u - s).norm())
}

fn log_ratio(u: Complex64) -> Complex64 {
    // ∫_{-1}^{1} dt/(t-u), boundary value from above on the interval.
    if u.im == 0.0 && u.re.abs() < 1.0 {
        Complex64::new(((1.0 - u.re) / (1.0 + u.re)).ln(), std::f64::consts::PI)
    } else {
        (Complex64::new(1.0, 0.0) - u).ln() - (Complex64::new(-1.0, 0.0) - u).ln()
    }
}

impl CauchyMesh {
    pub(crate) fn empty() -> Self {
        CauchyMesh { nodes: Vec::new(), weights: Vec::new(), dens: Vec::new(), order: 0 }
    }

    pub(crate) fn new(m: &JacobiMeasure) -> Self {
        let (nodes, weights) = composite_rule(&gauss_legendre::<f64>(PANEL_ORDER), &breakpoints());
        let dens = nodes.iter().map(|&t| m.density(t)).collect();
        CauchyMesh { nodes, weights, dens, order: m.spec.quadrature_order }
    }

    fn far(&self, u: Complex64) -> bool {
        2.0 * self.order as f64 * ellipse_radius(u).ln() > 40.0
    }

    pub(crate) fn transform(&self, m: &JacobiMeasure, u: Complex64) -> Complex64 {
        if u.im < 0.0 {
            return self.transform(m, u.conj()).conj();
        }
        if self.far(u) {
            return m.nodes().iter().zip(m.masses()).map(|(&x, &w)| w / (x - u)).sum();
        }
        if u.re.abs() < 1.0 {
            let (pu, p1, p2) = m.density_complex(u);
            let mut acc = Complex64::new(0.0, 0.0);
            for ((&t, &w), &p) in self.nodes.iter().zip(&self.weights).zip(&self.dens) {
                let dt = t - u;
                let q = if dt.norm() > 1e-6 { (p - pu) / dt } else { p1 + p2 * dt * 0.5 };
                acc += q * w;
            }
            acc + pu * log_ratio(u)
        } else {
            self.nodes.iter().zip(&self.weights).zip(&self.dens).map(|((&t, &w), &p)| w * p / (t - u)).sum()
        }
    }

    pub(crate) fn transform_prime(&self, m: &JacobiMeasure, u: Complex64) -> Complex64 {
        if u.im < 0.0 {
            return self.transform_prime(m, u.conj()).conj();
        }
        if self.far(u) {
            return m
                .nodes()
                .iter()
                .zip(m.masses())
                .map(|(&x, &w)| {
                    let d = x - u;
                    w / (d * d)
                })
                .sum();
        }
        if u.re.abs() < 1.0 {
            let (pu, p1, p2) = m.density_complex(u);
            let mut acc = Complex64::new(0.0, 0.0);
            for ((&t, &w), &p) in self.nodes.iter().zip(&self.weights).zip(&self.dens) {
                let dt = t - u;
                let q = if dt.norm() > 1e-4 { (p - pu - p1 * dt) / (dt * dt) } else { p2 * 0.5 };
                acc += q * w;
            }
            let one = Complex64::new(1.0, 0.0);
            let inv_sq = -(one - u).inv() - (one + u).inv();
            acc + pu * inv_sq + p1 * log_ratio(u)
        } else {
            self.nodes
                .iter()
                .zip(&self.weights)
                .zip(&self.dens)
                .map(|((&t, &w), &p)| {
                    let d = t - u;
                    w * p / (d * d)
                })
                .sum()
        }
    }
}
