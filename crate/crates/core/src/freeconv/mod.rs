//! Stieltjes transform, density, edges and spectral functionals of the
//! free additive convolution of the semicircle law with λμ.
//!
//! Everything is solved in the subordination variable `ω = z + m(z)`, which
//! satisfies `ω - z = S(ω)` with `S(ω) = ∫ dμ(t) / (λt - ω)`.

mod clt;

pub use clt::{ContourOptions, TestFunction};

use crate::error::{Error, Result};
use crate::measure::{BaseMeasure, EdgeConstants};
use crate::quad::gauss_legendre;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Refinement factor of the precomputed density table (1 = default).
    pub resolution: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-12, max_iter: 200, resolution: 1 }
    }
}

/// Density samples on a caller-supplied grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub xs: Vec<f64>,
    pub rho: Vec<f64>,
    pub eta_used: f64,
    /// Indices whose solve failed; their density is reported as 0.
    pub flagged: Vec<usize>,
}

impl DensityGrid {
    pub fn trapezoid_mass(&self) -> f64 {
        self.xs.windows(2).zip(self.rho.windows(2)).map(|(x, r)| 0.5 * (x[1] - x[0]) * (r[0] + r[1])).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HighTempSolution {
    pub beta: f64,
    pub gamma_hat: f64,
    pub f_limit: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub lambda: f64,
    pub l_minus: f64,
    pub l_plus: f64,
    pub closed_form_upper: bool,
    pub closed_form_lower: bool,
    pub beta_c: Option<f64>,
    pub beta_c_subordination: f64,
    pub total_mass: f64,
    pub edges: EdgeConstants,
}

/// Upper and lower support edge data.
#[derive(Debug, Clone, Copy)]
struct Edge {
    location: f64,
    omega: f64,
    closed_form: bool,
}

/// Composite Gauss–Legendre table of ρ over [L_-, L_+], graded toward both
/// edges, with the upper-tail mass at every breakpoint.
#[derive(Debug, Clone, Default)]
struct DensityTable {
    breaks: Vec<f64>,
    rho_breaks: Vec<f64>,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    rho_nodes: Vec<f64>,
    upper_tail: Vec<f64>,
}

const TABLE_ORDER: usize = 8;

#[derive(Debug, Clone)]
pub struct FreeConvolution {
    measure: BaseMeasure,
    lambda: f64,
    edges: EdgeConstants,
    upper: Edge,
    lower: Edge,
    opts: SolverOptions,
    table: DensityTable,
}

fn cplx(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

impl FreeConvolution {
    pub fn new(measure: impl Into<BaseMeasure>, lambda: f64) -> Result<Self> {
        Self::with_options(measure, lambda, SolverOptions::default())
    }

    pub fn with_options(measure: impl Into<BaseMeasure>, lambda: f64, opts: SolverOptions) -> Result<Self> {
        let measure = measure.into();
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
        }
        if opts.resolution == 0 || opts.max_iter == 0 || !(opts.tol > 0.0) {
            return Err(Error::InvalidParameter("solver options must be positive".into()));
        }
        let edges = measure.edge_constants(lambda);
        let dummy = Edge { location: 0.0, omega: 0.0, closed_form: false };
        let mut fc =
            FreeConvolution { measure, lambda, edges, upper: dummy, lower: dummy, opts, table: DensityTable::default() };
        fc.upper = fc.find_edge(true)?;
        fc.lower = fc.find_edge(false)?;
        fc.table = fc.build_table()?;
        Ok(fc)
    }

    pub fn measure(&self) -> &BaseMeasure {
        &self.measure
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn edges(&self) -> &EdgeConstants {
        &self.edges
    }

    pub fn options(&self) -> &SolverOptions {
        &self.opts
    }

    pub fn l_plus(&self) -> f64 {
        self.upper.location
    }

    pub fn l_minus(&self) -> f64 {
        self.lower.location
    }

    pub fn support_edges(&self) -> (f64, f64) {
        (self.lower.location, self.upper.location)
    }

    /// Whether each edge came from the closed form `±(λ + τ_±/λ)`.
    pub fn closed_form_edges(&self) -> (bool, bool) {
        (self.lower.closed_form, self.upper.closed_form)
    }

    /// `S(ω) = ∫ dμ(t) / (λt - ω)`.
    pub fn s(&self, omega: Complex64) -> Complex64 {
        self.measure.cauchy(omega / self.lambda) / self.lambda
    }

    /// `S'(ω) = ∫ dμ(t) / (λt - ω)^2`.
    pub fn s_prime(&self, omega: Complex64) -> Complex64 {
        self.measure.cauchy_prime(omega / self.lambda) / (self.lambda * self.lambda)
    }

    /// Residual `|m - ∫ dμ(t) / (λt - z - m)|` of the self-consistent equation.
    pub fn residual(&self, z: Complex64, m: Complex64) -> f64 {
        (m - self.s(z + m)).norm()
    }

    fn find_edge(&self, upper: bool) -> Result<Edge> {
        let lambda = self.lambda;
        let (lo, hi) = self.measure.support();
        let tip = if upper { lambda * hi } else { lambda * lo };
        let sign = if upper { 1.0 } else { -1.0 };
        if let BaseMeasure::Jacobi(m) = &self.measure {
            let (exponent, threshold, tau) = if upper {
                (m.b(), self.edges.lambda_plus, self.edges.tau_plus)
            } else {
                (m.a(), self.edges.lambda_minus, self.edges.tau_minus)
            };
            if let (Some(th), Some(tau)) = (threshold, tau) {
                if exponent > 1.0 && lambda > th {
                    return Ok(Edge { location: sign * (lambda + tau / lambda), omega: tip, closed_form: true });
                }
            }
        }
        // Square-root edge: the real branch turns where S'(ω) = 1.
        let g = |w: f64| self.s_prime(cplx(w, 0.0)).re - 1.0;
        let mut width = 1.0f64;
        let mut far = tip + sign * width;
        let mut grow = 0;
        while g(far) > 0.0 {
            width *= 2.0;
            far = tip + sign * width;
            grow += 1;
            if grow > 60 {
                return Err(Error::EdgeNotFound("no sign change of S'(w) - 1 on the real axis".into()));
            }
        }
        let (mut near, mut far) = (tip, far);
        for _ in 0..200 {
            let mid = 0.5 * (near + far);
            if mid == near || mid == far {
                break;
            }
            if g(mid) > 0.0 {
                near = mid;
            } else {
                far = mid;
            }
        }
        let omega = far;
        let location = omega - self.s(cplx(omega, 0.0)).re;
        if !location.is_finite() {
            return Err(Error::EdgeNotFound("edge location is not finite".into()));
        }
        Ok(Edge { location, omega, closed_form: false })
    }

    /// Real subordination value for real `x` outside the support.
    fn omega_real(&self, x: f64) -> Result<f64> {
        let upper = x > self.upper.location;
        let edge = if upper { self.upper } else { self.lower };
        let f = |w: f64| w - self.s(cplx(w, 0.0)).re - x;
        // X(ω) = ω - S(ω) is monotone beyond the edge and ω lies between the edge and x.
        let (mut lo, mut hi) = if upper { (edge.omega, x) } else { (x, edge.omega) };
        let mut w = if upper { 0.5 * (lo + hi).max(edge.omega) } else { 0.5 * (lo + hi) };
        let mut res = f64::INFINITY;
        for _ in 0..self.opts.max_iter.max(200) {
            let val = f(w);
            res = val.abs();
            if res <= self.opts.tol {
                return Ok(w);
            }
            if val > 0.0 {
                hi = w;
            } else {
                lo = w;
            }
            let deriv = 1.0 - self.s_prime(cplx(w, 0.0)).re;
            let step = w - val / deriv;
            w = if deriv > 0.0 && step > lo && step < hi { step } else { 0.5 * (lo + hi) };
            if hi - lo < 1e-16 * hi.abs().max(1.0) {
                let val = f(w);
                if val.abs() <= 10.0 * self.opts.tol {
                    return Ok(w);
                }
                res = val.abs();
                break;
            }
        }
        Err(Error::NoConvergence { what: format!("real subordination at x = {x}"), residual: res })
    }

    /// Damped fixed point followed by damped Newton, starting from `omega`.
    fn polish(&self, z: Complex64, omega: Complex64) -> Result<Complex64> {
        let tol = self.opts.tol;
        let phi = |w: Complex64| w - z - self.s(w);
        let mut m = omega - z;
        let mut r = phi(m + z).norm();
        let mut alpha = 1.0;
        let mut iter = 0;
        while r > 1e-4 && iter < self.opts.max_iter / 2 {
            iter += 1;
            let t = self.s(z + m);
            let cand = m * (1.0 - alpha) + t * alpha;
            let rc = phi(cand + z).norm();
            if rc < r {
                m = cand;
                r = rc;
                alpha = (alpha * 1.5).min(1.0);
            } else {
                alpha *= 0.5;
                if alpha < 1e-6 {
                    break;
                }
            }
        }
        let mut w = m + z;
        let mut fw = phi(w);
        r = fw.norm();
        for _ in 0..self.opts.max_iter {
            if r <= tol {
                return Ok(w);
            }
            let jac = Complex64::new(1.0, 0.0) - self.s_prime(w);
            let step = fw / jac;
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let cand = w - step * t;
                if z.im >= 0.0 && cand.im < 0.0 {
                    t *= 0.5;
                    continue;
                }
                let fc = phi(cand);
                if fc.norm() < r {
                    w = cand;
                    fw = fc;
                    r = fc.norm();
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if r <= tol {
            Ok(w)
        } else {
            Err(Error::NoConvergence { what: format!("self-consistent equation at z = {z}"), residual: r })
        }
    }

    /// Subordination value at `z` with `Im z >= 0`; on the support the
    /// boundary value from above is returned.
    fn omega_upper(&self, z: Complex64, warm: Option<Complex64>) -> Result<Complex64> {
        if let Some(w0) = warm {
            if let Ok(w) = self.polish(z, w0) {
                return Ok(w);
            }
        }
        if z.im >= 1.0 {
            return self.polish(z, z - z.inv());
        }
        // Continuation from Im z = 1 toward the target.
        let mut eta = 1.0;
        let mut w = self.polish(cplx(z.re, eta), cplx(z.re, eta) - cplx(z.re, eta).inv())?;
        let floor = if z.im > 0.0 { z.im } else { 1e-10 };
        while eta > floor {
            eta = (eta * 0.5).max(floor);
            w = self.polish(cplx(z.re, eta), w)?;
        }
        if z.im == 0.0 {
            w = self.polish(z, w)?;
            w = self.refine_small_imaginary(z.re, w);
        }
        Ok(w)
    }

    /// Where ρ_fc is tiny the absolute residual says nothing about Im ω.
    /// Balancing the imaginary part to first order gives it to full relative
    /// precision: `Im ω (1 - Re S'(ω_r)) = Im S(ω_r + i0)`.
    fn refine_small_imaginary(&self, x: f64, w: Complex64) -> Complex64 {
        if !(w.im >= 0.0 && w.im < 1e-6) {
            return w;
        }
        let mut wr = w.re;
        for _ in 0..3 {
            let g = wr - x - self.s(cplx(wr, 0.0)).re;
            let dg = 1.0 - self.s_prime(cplx(wr, 0.0)).re;
            if !(dg.abs() > 1e-8) {
                return w;
            }
            wr -= g / dg;
        }
        let den = 1.0 - self.s_prime(cplx(wr, 0.0)).re;
        let im = self.s(cplx(wr, 0.0)).im / den;
        if im.is_finite() && im >= 0.0 && (wr - w.re).abs() < 1e-8 {
            cplx(wr, im)
        } else {
            w
        }
    }

    fn omega_at(&self, z: Complex64, warm: Option<Complex64>) -> Result<Complex64> {
        if z.im < 0.0 {
            return Ok(self.omega_at(z.conj(), warm.map(|w| w.conj()))?.conj());
        }
        if z.im == 0.0 {
            let (lo, hi) = self.support_edges();
            let dist = if z.re > hi { z.re - hi } else if z.re < lo { lo - z.re } else { 0.0 };
            if dist <= 1e-6 {
                return Err(Error::OnSupport { x: z.re });
            }
            return Ok(cplx(self.omega_real(z.re)?, 0.0));
        }
        self.omega_upper(z, warm)
    }

    /// `m_fc(z)`; real `z` must lie off the support.
    pub fn solve_mfc(&self, z: Complex64) -> Result<Complex64> {
        Ok(self.omega_at(z, None)? - z)
    }

    /// Like [`solve_mfc`](Self::solve_mfc) but seeded with a nearby solution.
    pub fn solve_mfc_from(&self, z: Complex64, m_near: Complex64) -> Result<Complex64> {
        Ok(self.omega_at(z, Some(z + m_near))? - z)
    }

    /// `m_fc'(z)` from the differentiated self-consistent equation.
    pub fn mfc_prime(&self, z: Complex64) -> Result<Complex64> {
        let w = self.omega_at(z, None)?;
        self.mfc_prime_at_omega(w)
    }

    pub(crate) fn mfc_prime_at_omega(&self, w: Complex64) -> Result<Complex64> {
        let den = Complex64::new(1.0, 0.0) - self.s_prime(w);
        if den.norm() < 1e-10 {
            return Err(Error::SingularDerivative { denominator: den.norm() });
        }
        Ok(den.inv() - 1.0)
    }

    /// Boundary value `m_fc(x + i0)` for real `x`, on or off the support.
    pub fn boundary_mfc(&self, x: f64) -> Result<Complex64> {
        let (lo, hi) = self.support_edges();
        if x > hi || x < lo {
            if let Ok(w) = self.omega_real(x) {
                return Ok(cplx(w - x, 0.0));
            }
        }
        Ok(self.omega_upper(cplx(x, 0.0), None)? - x)
    }

    /// ρ_fc at a single point, by a direct boundary-value solve.
    pub fn density_at(&self, x: f64) -> Result<f64> {
        let (lo, hi) = self.support_edges();
        if x <= lo || x >= hi {
            return Ok(0.0);
        }
        Ok(self.omega_upper(cplx(x, 0.0), None)?.im.max(0.0) / std::f64::consts::PI)
    }

    /// Boundary-value densities along sorted points, warm-starting each
    /// solve from its neighbour. Returns `None` where a solve failed.
    fn sweep(&self, xs: &[f64]) -> Vec<Option<f64>> {
        let (lo, hi) = self.support_edges();
        let mut out = vec![None; xs.len()];
        let inside: Vec<usize> = (0..xs.len()).filter(|&i| xs[i] > lo && xs[i] < hi).collect();
        for i in 0..xs.len() {
            if !(xs[i] > lo && xs[i] < hi) {
                out[i] = Some(0.0);
            }
        }
        if inside.is_empty() {
            return out;
        }
        let mid = 0.5 * (lo + hi);
        let start = inside.partition_point(|&i| xs[i] < mid).min(inside.len() - 1);
        let pi = std::f64::consts::PI;
        let mut solve_run = |order: &mut dyn Iterator<Item = usize>, seed: Option<Complex64>| {
            let mut warm = seed;
            for i in order {
                let z = cplx(xs[i], 0.0);
                match self.omega_upper(z, warm) {
                    Ok(w) => {
                        out[i] = Some(w.im.max(0.0) / pi);
                        warm = Some(w);
                    }
                    Err(_) => warm = None,
                }
            }
        };
        let seed = self.omega_upper(cplx(xs[inside[start]], 0.0), None).ok();
        solve_run(&mut inside[start..].iter().copied(), seed);
        solve_run(&mut inside[..start].iter().rev().copied(), seed);
        out
    }

    /// ρ_fc on an arbitrary grid via boundary values of the subordination
    /// function (no inversion offset).
    pub fn density(&self, xs: &[f64]) -> DensityGrid {
        let mut idx: Vec<usize> = (0..xs.len()).collect();
        idx.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
        let sorted: Vec<f64> = idx.iter().map(|&i| xs[i]).collect();
        let vals = self.sweep(&sorted);
        let mut rho = vec![0.0; xs.len()];
        let mut flagged = Vec::new();
        for (k, &i) in idx.iter().enumerate() {
            match vals[k] {
                Some(v) => rho[i] = v,
                None => flagged.push(i),
            }
        }
        flagged.sort_unstable();
        DensityGrid { xs: xs.to_vec(), rho, eta_used: 0.0, flagged }
    }

    /// ρ_fc by Stieltjes inversion at the offsets in `etas` (decreasing,
    /// successive ratio 2), Richardson-extrapolated to η = 0.
    pub fn density_richardson(&self, xs: &[f64], etas: &[f64]) -> Result<DensityGrid> {
        if etas.is_empty() || etas.windows(2).any(|w| w[1] >= w[0]) || etas[etas.len() - 1] < 1e-7 {
            return Err(Error::InvalidParameter("eta schedule must be decreasing and end at or above 1e-7".into()));
        }
        let pi = std::f64::consts::PI;
        let mut rho = Vec::with_capacity(xs.len());
        let mut flagged = Vec::new();
        for (i, &x) in xs.iter().enumerate() {
            let mut levels = Vec::with_capacity(etas.len());
            let mut warm = None;
            let mut ok = true;
            for &eta in etas {
                match self.omega_upper(cplx(x, eta), warm) {
                    Ok(w) => {
                        levels.push((w - cplx(x, eta)).im / pi);
                        warm = Some(w);
                    }
                    Err(_) => {
                        ok = false;
                        break;
                    }
                }
            }
            if !ok {
                flagged.push(i);
                rho.push(0.0);
                continue;
            }
            // Neville-style elimination of the η, η², ... error terms.
            for k in 1..levels.len() {
                let ratio = etas[0] / etas[1];
                let factor = ratio.powi(k as i32);
                for j in (k..levels.len()).rev() {
                    levels[j] = (factor * levels[j] - levels[j - 1]) / (factor - 1.0);
                }
            }
            rho.push(levels.last().copied().unwrap_or(0.0).max(0.0));
        }
        Ok(DensityGrid { xs: xs.to_vec(), rho, eta_used: *etas.last().unwrap(), flagged })
    }

    fn table_breaks(&self) -> Vec<f64> {
        let (lo, hi) = self.support_edges();
        let r = self.opts.resolution;
        let width = hi - lo;
        let gap = width / 16.0;
        let ratio = 0.5f64.powf(0.125 / r as f64);
        let levels = 240 * r;
        let bulk = 320 * r;
        let mut breaks = vec![lo];
        let mut graded: Vec<f64> = (0..levels).map(|k| gap * ratio.powi((levels - k) as i32)).collect();
        graded.push(gap);
        breaks.extend(graded.iter().map(|d| lo + d));
        for k in 1..bulk {
            breaks.push(lo + gap + (width - 2.0 * gap) * k as f64 / bulk as f64);
        }
        breaks.extend(graded.iter().rev().map(|d| hi - d));
        breaks.push(hi);
        breaks
    }

    fn build_table(&self) -> Result<DensityTable> {
        let breaks = self.table_breaks();
        let rule = gauss_legendre::<f64>(TABLE_ORDER);
        let mut nodes = Vec::with_capacity(TABLE_ORDER * breaks.len());
        let mut weights = Vec::with_capacity(nodes.capacity());
        for w in breaks.windows(2) {
            let (x, ww) = rule.mapped(w[0], w[1]);
            nodes.extend(x);
            weights.extend(ww);
        }
        let mut points: Vec<f64> = nodes.iter().chain(&breaks[1..breaks.len() - 1]).copied().collect();
        points.sort_by(f64::total_cmp);
        let vals = self.sweep(&points);
        let lookup = |x: f64| -> Result<f64> {
            let i = points.partition_point(|&p| p < x);
            vals[i].ok_or(Error::NoConvergence { what: format!("density table at x = {x}"), residual: f64::NAN })
        };
        let rho_nodes = nodes.iter().map(|&x| lookup(x)).collect::<Result<Vec<_>>>()?;
        let mut rho_breaks = vec![0.0; breaks.len()];
        for j in 1..breaks.len() - 1 {
            rho_breaks[j] = lookup(breaks[j])?;
        }
        let panels = breaks.len() - 1;
        let mut upper_tail = vec![0.0; breaks.len()];
        for j in (0..panels).rev() {
            let mass: f64 = (0..TABLE_ORDER).map(|k| weights[j * TABLE_ORDER + k] * rho_nodes[j * TABLE_ORDER + k]).sum();
            upper_tail[j] = upper_tail[j + 1] + mass;
        }
        Ok(DensityTable { breaks, rho_breaks, nodes, weights, rho_nodes, upper_tail })
    }

    /// `∫ f dμ_fc` by the precomputed density table.
    pub fn integrate_density<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let t = &self.table;
        t.nodes.iter().zip(&t.weights).zip(&t.rho_nodes).map(|((&x, &w), &r)| w * r * f(x)).sum()
    }

    /// Total mass of the density table (1 up to discretization error).
    pub fn total_mass(&self) -> f64 {
        self.table.upper_tail[0]
    }

    /// Mean of `f` under μ_fc with the table renormalized to unit mass.
    pub fn expectation<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.integrate_density(f) / self.total_mass()
    }

    /// `β_c = ½ ∫ ρ_fc(t) / (L_+ - t) dt` by density quadrature.
    pub fn beta_c(&self) -> Result<f64> {
        if self.measure.jacobi().is_some() && !self.upper.closed_form {
            return Err(Error::DivergentIntegral(
                "critical temperature needs b > 1 and lambda above the upper threshold".into(),
            ));
        }
        let lp = self.l_plus();
        Ok(0.5 * self.integrate_density(|t| 1.0 / (lp - t)))
    }

    /// `-½ m_fc(L_+)` from the subordination value at the edge; equals
    /// [`beta_c`](Self::beta_c) up to quadrature error.
    pub fn beta_c_subordination(&self) -> f64 {
        -0.5 * self.s(cplx(self.upper.omega, 0.0)).re
    }

    /// `∫ log(γ - t) dμ_fc(t)` for `γ >= L_+`.
    pub fn log_integral(&self, gamma: f64) -> Result<f64> {
        if gamma < self.l_plus() {
            return Err(Error::InvalidParameter(format!("log integral needs gamma >= L_+ (got {gamma})")));
        }
        Ok(self.integrate_density(|t| (gamma - t).ln()))
    }

    /// The point γ̂ > L_+ with `∫ dμ_fc(t) / (γ̂ - t) = 2β`.
    pub fn gamma_hat_point(&self, beta: f64) -> Result<f64> {
        let bc = self.beta_c_subordination();
        if !(beta > 0.0) {
            return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
        }
        if beta >= bc {
            return Err(Error::OutOfRegime(format!("beta = {beta} is not below beta_c = {bc}")));
        }
        // In the subordination variable: S(ω̂) = -2β with ω̂ beyond the edge, γ̂ = ω̂ + 2β.
        let target = -2.0 * beta;
        let g = |w: f64| self.s(cplx(w, 0.0)).re - target;
        let mut lo = self.upper.omega;
        let mut hi = lo + 1.0;
        while g(hi) < 0.0 {
            hi = lo + 2.0 * (hi - lo);
        }
        let mut w = 0.5 * (lo + hi);
        for _ in 0..200 {
            let val = g(w);
            if val.abs() <= 1e-15 {
                break;
            }
            if val < 0.0 {
                lo = w;
            } else {
                hi = w;
            }
            let d = self.s_prime(cplx(w, 0.0)).re;
            let step = w - val / d;
            w = if step > lo && step < hi { step } else { 0.5 * (lo + hi) };
            if hi - lo < 1e-15 * hi.abs() {
                break;
            }
        }
        Ok(w + 2.0 * beta)
    }

    pub fn gamma_hat(&self, beta: f64) -> Result<HighTempSolution> {
        let gamma_hat = self.gamma_hat_point(beta)?;
        let f_limit = self.limiting_free_energy(beta)?;
        let variance = self.clt_variance(&TestFunction::LogShift(gamma_hat), &ContourOptions::default())?;
        Ok(HighTempSolution { beta, gamma_hat, f_limit, variance })
    }

    /// Limiting free energy; low-temperature branch at or above β_c.
    pub fn limiting_free_energy(&self, beta: f64) -> Result<f64> {
        if !(beta > 0.0) {
            return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
        }
        let head = -0.5 * (2.0 * std::f64::consts::E * beta).ln();
        if beta >= self.beta_c_subordination() {
            let lp = self.l_plus();
            Ok(head - 0.5 * self.log_integral(lp)? + beta * lp)
        } else {
            let g = self.gamma_hat_point(beta)?;
            Ok(head - 0.5 * self.log_integral(g)? + beta * g)
        }
    }

    /// The point x with `μ_fc([x, ∞)) = p`, by inverting the cubic Hermite
    /// interpolant of the tabulated tail mass.
    pub fn upper_quantile(&self, p: f64) -> f64 {
        let t = &self.table;
        let total = t.upper_tail[0];
        let p = p.clamp(0.0, 1.0) * total;
        if p <= 0.0 {
            return self.l_plus();
        }
        if p >= total {
            return self.l_minus();
        }
        // upper_tail decreases with the breakpoint index.
        let j = t.upper_tail.partition_point(|&u| u > p).clamp(1, t.breaks.len() - 1) - 1;
        let (x0, x1) = (t.breaks[j], t.breaks[j + 1]);
        let h = x1 - x0;
        let (g0, g1) = (t.upper_tail[j], t.upper_tail[j + 1]);
        let (d0, d1) = (-t.rho_breaks[j] * h, -t.rho_breaks[j + 1] * h);
        let interp = |s: f64| {
            let s2 = s * s;
            let s3 = s2 * s;
            (2.0 * s3 - 3.0 * s2 + 1.0) * g0 + (s3 - 2.0 * s2 + s) * d0 + (-2.0 * s3 + 3.0 * s2) * g1 + (s3 - s2) * d1
        };
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..64 {
            let mid = 0.5 * (lo + hi);
            if interp(mid) > p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        x0 + 0.5 * (lo + hi) * h
    }

    /// Classical locations γ_1 > ... > γ_N: `μ_fc([γ_i, ∞)) = (i - ½)/N`.
    pub fn classical_locations(&self, n: usize) -> Vec<f64> {
        (1..=n).map(|i| self.upper_quantile((i as f64 - 0.5) / n as f64)).collect()
    }

    /// Continuous quantile `γ̂_y` with `μ_fc([γ̂_y, ∞)) = y/N`.
    pub fn quantile_y(&self, y: f64, n: usize) -> f64 {
        self.upper_quantile(y / n as f64)
    }

    pub fn summary(&self) -> Summary {
        Summary {
            lambda: self.lambda,
            l_minus: self.l_minus(),
            l_plus: self.l_plus(),
            closed_form_upper: self.upper.closed_form,
            closed_form_lower: self.lower.closed_form,
            beta_c: self.beta_c().ok(),
            beta_c_subordination: self.beta_c_subordination(),
            total_mass: self.total_mass(),
            edges: self.edges,
        }
    }
}

#[cfg(test)]
mod tests;
