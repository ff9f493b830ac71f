//! Centered Jacobi measures `d(x)(1+x)^a(1-x)^b dx / Z` on [-1, 1].

mod cauchy;

use crate::error::{Error, Result};
use crate::quad::{gauss_jacobi, GaussRule};
use num_complex::Complex64;
use num_traits::Zero;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::beta::inv_beta_reg;
use std::ops::{Add, Mul};

pub use cauchy::CauchyMesh;

/// How the smooth positive factor `d` is supplied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightSpec {
    /// Coefficients `c0 + c1 x + c2 x^2 + ...`.
    Poly(Vec<f64>),
    /// Values on a strictly increasing grid spanning [-1, 1]; interpolated
    /// by a C¹ cubic Hermite spline.
    Table { x: Vec<f64>, y: Vec<f64> },
}

impl Default for WeightSpec {
    fn default() -> Self {
        WeightSpec::Poly(vec![1.0])
    }
}

fn default_order() -> usize {
    128
}

/// Serializable description of a Jacobi measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSpec {
    pub a: f64,
    pub b: f64,
    #[serde(default)]
    pub d: WeightSpec,
    #[serde(default = "default_order")]
    pub quadrature_order: usize,
}

impl MeasureSpec {
    pub fn new(a: f64, b: f64) -> Self {
        MeasureSpec { a, b, d: WeightSpec::default(), quadrature_order: default_order() }
    }
}

#[derive(Debug, Clone)]
struct HermiteTable {
    x: Vec<f64>,
    y: Vec<f64>,
    slope: Vec<f64>,
}

impl HermiteTable {
    fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n {
            return Err(Error::InvalidParameter("weight table needs matching x/y with at least two points".into()));
        }
        if x.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("weight table abscissae must be strictly increasing".into()));
        }
        if (x[0] + 1.0).abs() > 1e-12 || (x[n - 1] - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter("weight table must span exactly [-1, 1]".into()));
        }
        let secant: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / (x[i + 1] - x[i])).collect();
        let mut slope = vec![0.0; n];
        slope[0] = secant[0];
        slope[n - 1] = secant[n - 2];
        for i in 1..n - 1 {
            let (h0, h1) = (x[i] - x[i - 1], x[i + 1] - x[i]);
            slope[i] = (h1 * secant[i - 1] + h0 * secant[i]) / (h0 + h1);
        }
        Ok(HermiteTable { x, y, slope })
    }

    /// Value and first two derivatives at `t`, clamped to the table range.
    fn eval(&self, t: f64) -> (f64, f64, f64) {
        let t = t.clamp(-1.0, 1.0);
        let n = self.x.len();
        let i = match self.x.partition_point(|&v| v <= t) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let (y0, y1) = (self.y[i], self.y[i + 1]);
        let (m0, m1) = (self.slope[i] * h, self.slope[i + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        let v = (2.0 * s3 - 3.0 * s2 + 1.0) * y0
            + (s3 - 2.0 * s2 + s) * m0
            + (-2.0 * s3 + 3.0 * s2) * y1
            + (s3 - s2) * m1;
        let dv = (6.0 * s2 - 6.0 * s) * y0 + (3.0 * s2 - 4.0 * s + 1.0) * m0 + (-6.0 * s2 + 6.0 * s) * y1
            + (3.0 * s2 - 2.0 * s) * m1;
        let ddv = (12.0 * s - 6.0) * y0 + (6.0 * s - 4.0) * m0 + (-12.0 * s + 6.0) * y1 + (6.0 * s - 2.0) * m1;
        (v, dv / h, ddv / (h * h))
    }
}

#[derive(Debug, Clone)]
enum Weight {
    Poly(Vec<f64>),
    Table(HermiteTable),
}

impl Weight {
    fn from_spec(spec: &WeightSpec) -> Result<Self> {
        match spec {
            WeightSpec::Poly(c) if c.is_empty() => Err(Error::InvalidParameter("empty polynomial weight".into())),
            WeightSpec::Poly(c) => Ok(Weight::Poly(c.clone())),
            WeightSpec::Table { x, y } => Ok(Weight::Table(HermiteTable::new(x.clone(), y.clone())?)),
        }
    }

    fn value(&self, x: f64) -> f64 {
        match self {
            Weight::Poly(c) => c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci),
            Weight::Table(t) => t.eval(x).0,
        }
    }

    /// `d`, `d'`, `d''` continued to complex `u`. Polynomials continue
    /// exactly; tables use a second-order Taylor step off the real axis.
    fn complex(&self, u: Complex64) -> (Complex64, Complex64, Complex64) {
        match self {
            Weight::Poly(c) => {
                let mut p = Complex64::zero();
                let mut dp = Complex64::zero();
                let mut ddp = Complex64::zero();
                for &ci in c.iter().rev() {
                    ddp = ddp * u + dp * 2.0;
                    dp = dp * u + p;
                    p = p * u + ci;
                }
                (p, dp, ddp)
            }
            Weight::Table(t) => {
                let (v, dv, ddv) = t.eval(u.re);
                let iy = Complex64::new(0.0, u.im);
                (v + iy * dv + iy * iy * (0.5 * ddv), dv + iy * ddv, Complex64::new(ddv, 0.0))
            }
        }
    }
}

/// Values a quadrature rule can accumulate.
pub trait Integrand: Copy + Zero + Add<Output = Self> + Mul<f64, Output = Self> {
    fn finite(&self) -> bool;
}

impl Integrand for f64 {
    fn finite(&self) -> bool {
        self.is_finite()
    }
}

impl Integrand for Complex64 {
    fn finite(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

/// Edge thresholds and Weibull constants of a measure at a given λ. Fields
/// are `None` when the defining integral diverges or the threshold is not
/// exceeded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeConstants {
    pub lambda: f64,
    pub lambda_plus: Option<f64>,
    pub lambda_minus: Option<f64>,
    pub tau_plus: Option<f64>,
    pub tau_minus: Option<f64>,
    pub c_mu: Option<f64>,
    pub c_mu_prime: Option<f64>,
}

impl EdgeConstants {
    /// λ exceeds both thresholds (the fast-decay regime at both edges).
    pub fn supercritical(&self) -> bool {
        matches!((self.lambda_plus, self.lambda_minus), (Some(p), Some(m)) if self.lambda > p && self.lambda > m)
    }
}

#[derive(Debug, Clone)]
pub struct JacobiMeasure {
    spec: MeasureSpec,
    weight: Weight,
    z: f64,
    rule: GaussRule<f64>,
    // Gauss–Jacobi weights already multiplied by d(x_k)/Z.
    mass: Vec<f64>,
    d_max: f64,
    mesh: CauchyMesh,
}

impl JacobiMeasure {
    pub fn new(spec: MeasureSpec) -> Result<Self> {
        let MeasureSpec { a, b, quadrature_order, .. } = spec;
        if !(a > -1.0 && b > -1.0) {
            return Err(Error::InvalidParameter(format!("exponents must exceed -1 (a={a}, b={b})")));
        }
        if quadrature_order == 0 {
            return Err(Error::InvalidParameter("quadrature_order must be positive".into()));
        }
        let weight = Weight::from_spec(&spec.d)?;
        let rule = gauss_jacobi::<f64>(quadrature_order, a, b)?;
        let mut d_max = 0.0f64;
        let probe = (0..=4000).map(|i| -1.0 + i as f64 / 2000.0).chain(rule.nodes.iter().copied());
        for x in probe {
            let v = weight.value(x);
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::NonPositiveWeight { at: x, value: v });
            }
            d_max = d_max.max(v);
        }
        let dvals: Vec<f64> = rule.nodes.iter().map(|&x| weight.value(x)).collect();
        let z: f64 = rule.weights.iter().zip(&dvals).map(|(w, d)| w * d).sum();
        let mass: Vec<f64> = rule.weights.iter().zip(&dvals).map(|(w, d)| w * d / z).collect();
        let mean: f64 = mass.iter().zip(&rule.nodes).map(|(m, x)| m * x).sum();
        if mean.abs() > 1e-8 {
            return Err(Error::NotCentered { mean });
        }
        let mut m = JacobiMeasure { spec, weight, z, rule, mass, d_max, mesh: CauchyMesh::empty() };
        m.mesh = CauchyMesh::new(&m);
        Ok(m)
    }

    pub fn spec(&self) -> &MeasureSpec {
        &self.spec
    }

    pub fn a(&self) -> f64 {
        self.spec.a
    }

    pub fn b(&self) -> f64 {
        self.spec.b
    }

    /// Normalization constant Z.
    pub fn normalization(&self) -> f64 {
        self.z
    }

    pub fn weight_at(&self, x: f64) -> f64 {
        self.weight.value(x)
    }

    /// Probability density of μ at `x` in [-1, 1].
    pub fn density(&self, x: f64) -> f64 {
        if !(-1.0..=1.0).contains(&x) {
            return 0.0;
        }
        self.weight.value(x) * (1.0 + x).powf(self.spec.a) * (1.0 - x).powf(self.spec.b) / self.z
    }

    /// Density continued off the real axis, with its first two derivatives.
    pub(crate) fn density_complex(&self, u: Complex64) -> (Complex64, Complex64, Complex64) {
        let (a, b) = (self.spec.a, self.spec.b);
        let (d, dd, ddd) = self.weight.complex(u);
        let (lp, lm) = (Complex64::new(1.0, 0.0) + u, Complex64::new(1.0, 0.0) - u);
        let base = (lp.ln() * a + lm.ln() * b).exp() / self.z;
        let g1 = lp.inv() * a - lm.inv() * b;
        let g2 = -(lp * lp).inv() * a - (lm * lm).inv() * b;
        let p = d * base;
        let p1 = base * (dd + d * g1);
        let p2 = base * (ddd + dd * g1 * 2.0 + d * (g2 + g1 * g1));
        (p, p1, p2)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.rule.nodes
    }

    /// Quadrature masses `∫ f dμ ≈ Σ mass_k f(node_k)`.
    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn integrate<T: Integrand, F: Fn(f64) -> T>(&self, f: F) -> Result<T> {
        let mut acc = T::zero();
        for (&x, &w) in self.rule.nodes.iter().zip(&self.mass) {
            let v = f(x);
            if !v.finite() {
                return Err(Error::NonFinite { at: x });
            }
            acc = acc + v * w;
        }
        Ok(acc)
    }

    /// `∫ f(x) (1+x)^{shift_a} (1-x)^{shift_b} dμ(x)`, with the extra factors
    /// folded into the Gauss–Jacobi weight.
    pub fn integrate_weighted<F: Fn(f64) -> f64>(&self, shift_a: f64, shift_b: f64, f: F) -> Result<f64> {
        let (a, b) = (self.spec.a + shift_a, self.spec.b + shift_b);
        if a <= -1.0 || b <= -1.0 {
            return Err(Error::DivergentIntegral(format!(
                "shifted exponents (a={a}, b={b}) are not integrable"
            )));
        }
        let rule = gauss_jacobi::<f64>(self.spec.quadrature_order, a, b)?;
        let mut acc = 0.0;
        for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
            let v = f(x);
            if !v.is_finite() {
                return Err(Error::NonFinite { at: x });
            }
            acc += w * self.weight.value(x) * v;
        }
        Ok(acc / self.z)
    }

    /// `∫ dμ(t) / (t - u)`, accurate up to and including the real axis
    /// (boundary values are taken from the upper half plane).
    pub fn cauchy(&self, u: Complex64) -> Complex64 {
        self.mesh.transform(self, u)
    }

    /// `∫ dμ(t) / (t - u)^2`.
    pub fn cauchy_prime(&self, u: Complex64) -> Complex64 {
        self.mesh.transform_prime(self, u)
    }

    pub fn edge_constants(&self, lambda: f64) -> EdgeConstants {
        let (a, b) = (self.spec.a, self.spec.b);
        let lambda_plus = self.integrate_weighted(0.0, -2.0, |_| 1.0).ok().map(f64::sqrt);
        let lambda_minus = self.integrate_weighted(-2.0, 0.0, |_| 1.0).ok().map(f64::sqrt);
        let tau_plus = self.integrate_weighted(0.0, -1.0, |_| 1.0).ok();
        let tau_minus = self.integrate_weighted(-1.0, 0.0, |_| 1.0).ok();
        let c_mu = lambda_plus.filter(|&lp| lambda > lp).map(|lp| {
            (lambda / (lambda * lambda - lp * lp)).powf(b + 1.0) * self.weight.value(1.0) * 2f64.powf(a) / self.z
        });
        let c_mu_prime = lambda_minus.filter(|&lm| lambda > lm).map(|lm| {
            (lambda / (lambda * lambda - lm * lm)).powf(a + 1.0) * self.weight.value(-1.0) * 2f64.powf(b) / self.z
        });
        EdgeConstants { lambda, lambda_plus, lambda_minus, tau_plus, tau_minus, c_mu, c_mu_prime }
    }

    /// One draw from μ: a Beta variate mapped to [-1, 1], thinned by
    /// `d / max d` when the weight is not constant.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (a, b) = (self.spec.a, self.spec.b);
        let constant = matches!(&self.weight, Weight::Poly(c) if c.iter().skip(1).all(|&ci| ci == 0.0));
        loop {
            let u: f64 = rng.random();
            let x = (2.0 * inv_beta_reg(a + 1.0, b + 1.0, u) - 1.0).clamp(-1.0, 1.0);
            if constant {
                return x;
            }
            let accept: f64 = rng.random();
            if accept * self.d_max <= self.weight.value(x) {
                return x;
            }
        }
    }
}

/// The base measure of the diagonal perturbation: a Jacobi measure, or a
/// point mass used to degenerate the model to the pure semicircle.
#[derive(Debug, Clone)]
pub enum BaseMeasure {
    Jacobi(JacobiMeasure),
    PointMass(f64),
}

impl From<JacobiMeasure> for BaseMeasure {
    fn from(m: JacobiMeasure) -> Self {
        BaseMeasure::Jacobi(m)
    }
}

impl BaseMeasure {
    pub fn jacobi(&self) -> Option<&JacobiMeasure> {
        match self {
            BaseMeasure::Jacobi(m) => Some(m),
            BaseMeasure::PointMass(_) => None,
        }
    }

    /// Convex hull of the support.
    pub fn support(&self) -> (f64, f64) {
        match self {
            BaseMeasure::Jacobi(_) => (-1.0, 1.0),
            BaseMeasure::PointMass(c) => (*c, *c),
        }
    }

    pub fn cauchy(&self, u: Complex64) -> Complex64 {
        match self {
            BaseMeasure::Jacobi(m) => m.cauchy(u),
            BaseMeasure::PointMass(c) => (Complex64::new(*c, 0.0) - u).inv(),
        }
    }

    pub fn cauchy_prime(&self, u: Complex64) -> Complex64 {
        match self {
            BaseMeasure::Jacobi(m) => m.cauchy_prime(u),
            BaseMeasure::PointMass(c) => {
                let d = Complex64::new(*c, 0.0) - u;
                (d * d).inv()
            }
        }
    }

    pub fn integrate<T: Integrand, F: Fn(f64) -> T>(&self, f: F) -> Result<T> {
        match self {
            BaseMeasure::Jacobi(m) => m.integrate(f),
            BaseMeasure::PointMass(c) => {
                let v = f(*c);
                if v.finite() {
                    Ok(v)
                } else {
                    Err(Error::NonFinite { at: *c })
                }
            }
        }
    }

    /// Quadrature nodes and masses representing the measure.
    pub fn atoms(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            BaseMeasure::Jacobi(m) => (m.nodes().to_vec(), m.masses().to_vec()),
            BaseMeasure::PointMass(c) => (vec![*c], vec![1.0]),
        }
    }

    pub fn edge_constants(&self, lambda: f64) -> EdgeConstants {
        match self {
            BaseMeasure::Jacobi(m) => m.edge_constants(lambda),
            BaseMeasure::PointMass(_) => EdgeConstants {
                lambda,
                lambda_plus: None,
                lambda_minus: None,
                tau_plus: None,
                tau_minus: None,
                c_mu: None,
                c_mu_prime: None,
            },
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            BaseMeasure::Jacobi(m) => m.sample(rng),
            BaseMeasure::PointMass(c) => *c,
        }
    }

    /// Stable textual identity used for cache keys and config hashes.
    pub fn fingerprint(&self) -> String {
        match self {
            BaseMeasure::Jacobi(m) => serde_json::to_string(m.spec()).expect("spec serializes"),
            BaseMeasure::PointMass(c) => format!("{{\"point_mass\":{c:?}}}"),
        }
    }
}
