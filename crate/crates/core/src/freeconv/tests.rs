use super::*;
use crate::measure::{JacobiMeasure, MeasureSpec};
use approx::assert_relative_eq;
use std::f64::consts::PI;

fn semicircle() -> FreeConvolution {
    FreeConvolution::new(BaseMeasure::PointMass(0.0), 1.0).unwrap()
}

fn jacobi(a: f64, b: f64, lambda: f64) -> FreeConvolution {
    FreeConvolution::new(JacobiMeasure::new(MeasureSpec::new(a, b)).unwrap(), lambda).unwrap()
}

fn msc(z: Complex64) -> Complex64 {
    // Branch of (-z + sqrt(z^2 - 4))/2 decaying at infinity.
    let s = (z - 2.0).sqrt() * (z + 2.0).sqrt();
    (-z + s) * 0.5
}

#[test]
fn semicircle_transform_and_derivative() {
    let fc = semicircle();
    let m = fc.solve_mfc(cplx(0.0, 1.0)).unwrap();
    assert!((m - cplx(0.0, (5f64.sqrt() - 1.0) / 2.0)).norm() < 1e-12);
    let mp = fc.mfc_prime(cplx(3.0, 0.0)).unwrap();
    assert_relative_eq!(mp.re, (-1.0 + 3.0 / 5f64.sqrt()) / 2.0, max_relative = 1e-10);
    for &z in &[cplx(0.5, 0.01), cplx(-1.7, 0.3), cplx(2.5, 0.0), cplx(1.0, -0.2)] {
        assert!((fc.solve_mfc(z).unwrap() - msc(z)).norm() < 1e-10, "z = {z}");
    }
}

#[test]
fn semicircle_edges_density_and_functionals() {
    let fc = semicircle();
    assert!((fc.l_plus() - 2.0).abs() < 1e-9 && (fc.l_minus() + 2.0).abs() < 1e-9);
    for &x in &[-1.9f64, -1.0, 0.0, 0.7, 1.95] {
        let want = (4.0 - x * x).sqrt() / (2.0 * PI);
        assert!((fc.density_at(x).unwrap() - want).abs() < 1e-10);
    }
    assert!((fc.total_mass() - 1.0).abs() < 1e-9);
    assert_relative_eq!(fc.beta_c().unwrap(), 0.5, max_relative = 1e-6);
    assert_relative_eq!(fc.gamma_hat_point(0.25).unwrap(), 2.5, max_relative = 1e-12);
    let g = fc.classical_locations(2);
    assert!((g[0] + g[1]).abs() < 1e-9);
}

#[test]
fn quartic_jacobi_edges() {
    let fc = jacobi(2.0, 2.0, 2.0);
    assert!(fc.closed_form_edges().1);
    assert!((fc.l_plus() - 2.625).abs() < 1e-10);
    assert!((fc.l_minus() + 2.625).abs() < 1e-10);
    // L_+ + ∫ρ/(x - L_+) = λ
    let lp = fc.l_plus();
    let ident = lp + fc.integrate_density(|x| 1.0 / (x - lp));
    assert!((ident - 2.0).abs() < 1e-6, "{ident}");
}

#[test]
fn self_consistency_and_herglotz() {
    let fc = jacobi(2.0, 2.0, 2.0);
    let tol = fc.options().tol;
    for i in 0..20 {
        for &y in &[1e-3, 0.05, 0.7, 2.0] {
            let z = cplx(-3.5 + 0.35 * i as f64, y);
            let m = fc.solve_mfc(z).unwrap();
            assert!(fc.residual(z, m) <= tol);
            assert!(m.im > 0.0 && m.norm() <= 1.0 / y);
        }
    }
    let z = cplx(fc.l_plus() + 1.0, 0.0);
    assert!(fc.residual(z, fc.solve_mfc(z).unwrap()) < 1e-12);
}

#[test]
fn derivative_matches_difference_quotient() {
    let fc = jacobi(2.0, 2.0, 2.0);
    for &z in &[cplx(0.3, 0.2), cplx(fc.l_plus() + 0.5, 0.0), cplx(-2.0, 1.0), cplx(2.7, 0.05)] {
        let h = 1e-6;
        let fd = (fc.solve_mfc(z + h).unwrap() - fc.solve_mfc(z - h).unwrap()) / (2.0 * h);
        let mp = fc.mfc_prime(z).unwrap();
        assert!((fd - mp).norm() <= 1e-5 * mp.norm(), "z = {z}: {fd} vs {mp}");
        let w = z + fc.solve_mfc(z).unwrap();
        let lhs = (mp + 1.0) * (Complex64::new(1.0, 0.0) - fc.s_prime(w));
        assert!((lhs - 1.0).norm() < 1e-10);
    }
    let z = cplx(0.4, 2.0);
    assert!(fc.mfc_prime(z).unwrap().norm() <= 0.25);
}

#[test]
fn on_support_real_point_is_rejected() {
    let fc = jacobi(2.0, 2.0, 2.0);
    assert!(matches!(fc.solve_mfc(cplx(0.5, 0.0)), Err(Error::OnSupport { .. })));
}

#[test]
fn moments_of_the_convolution() {
    let fc = jacobi(2.0, 2.0, 2.0);
    assert!((fc.total_mass() - 1.0).abs() < 1e-9);
    assert!(fc.integrate_density(|x| x).abs() < 1e-10);
    // second moment: semicircle 1 plus λ² E v² = 4/7
    assert_relative_eq!(fc.integrate_density(|x| x * x), 1.0 + 4.0 / 7.0, max_relative = 1e-9);
}

#[test]
fn critical_temperature_routes_agree() {
    let fc = jacobi(12.0, 12.0, 2.0);
    let bc = fc.beta_c().unwrap();
    let tau = fc.edges().tau_plus.unwrap();
    assert_relative_eq!(bc, tau / (2.0 * 2.0), max_relative = 1e-8);
    assert_relative_eq!(fc.beta_c_subordination(), bc, max_relative = 1e-8);
    let fine = FreeConvolution::with_options(
        JacobiMeasure::new(MeasureSpec::new(12.0, 12.0)).unwrap(),
        2.0,
        SolverOptions { resolution: 2, ..Default::default() },
    )
    .unwrap();
    assert!((fine.beta_c().unwrap() - bc).abs() < 1e-4);
}

#[test]
fn gamma_hat_solves_defining_equation() {
    let fc = jacobi(12.0, 12.0, 2.0);
    let bc = fc.beta_c().unwrap();
    let mut prev = f64::INFINITY;
    for &frac in &[0.3, 0.5, 0.9, 0.99, 0.999] {
        let beta = frac * bc;
        let g = fc.gamma_hat_point(beta).unwrap();
        assert!(g > fc.l_plus() && g < prev);
        prev = g;
        let lhs = fc.integrate_density(|t| 1.0 / (g - t));
        assert!((lhs - 2.0 * beta).abs() < 1e-8, "{frac}: {lhs} vs {}", 2.0 * beta);
    }
    assert!(matches!(fc.gamma_hat_point(bc * 1.01), Err(Error::OutOfRegime(_))));
}

#[test]
fn log_integral_matches_integrated_transform() {
    // d/dγ ∫log(γ - t) dμ_fc = -m_fc(γ)
    let fc = jacobi(12.0, 12.0, 2.0);
    let (g0, g1) = (fc.l_plus() + 0.05, fc.l_plus() + 0.8);
    let diff = fc.log_integral(g1).unwrap() - fc.log_integral(g0).unwrap();
    let rule = crate::quad::gauss_legendre::<f64>(40);
    let (xs, ws) = rule.mapped(g0, g1);
    let route: f64 = xs.iter().zip(&ws).map(|(&x, &w)| -w * fc.solve_mfc(cplx(x, 0.0)).unwrap().re).sum();
    assert!((diff - route).abs() < 1e-9);
}

#[test]
fn free_energy_is_continuous_and_has_the_right_slope() {
    let fc = jacobi(12.0, 12.0, 2.0);
    let bc = fc.beta_c_subordination();
    let jump = fc.limiting_free_energy(bc - 1e-4).unwrap() - fc.limiting_free_energy(bc + 1e-4).unwrap();
    assert!(jump.abs() < 1e-3);
    let beta = 2.0 * bc;
    let h = 1e-5;
    let slope = (fc.limiting_free_energy(beta + h).unwrap() - fc.limiting_free_energy(beta - h).unwrap()) / (2.0 * h);
    assert!((slope - (fc.l_plus() - 0.5 / beta)).abs() < 1e-4);
    let beta = 0.5 * bc;
    let slope = (fc.limiting_free_energy(beta + h).unwrap() - fc.limiting_free_energy(beta - h).unwrap()) / (2.0 * h);
    assert!((slope - (fc.gamma_hat_point(beta).unwrap() - 0.5 / beta)).abs() < 1e-4);
}

#[test]
fn classical_locations_invert_the_tail_mass() {
    let fc = jacobi(12.0, 12.0, 2.0);
    let n = 50;
    let g = fc.classical_locations(n);
    assert!(g.windows(2).all(|w| w[0] > w[1]));
    for &i in &[0usize, 7, 24, 49] {
        let gi = g[i];
        let tail = crate::quad::adaptive_gk15(|t| fc.density_at(t).unwrap(), &[gi, fc.l_plus()], 1e-12, 1e-12, 2000)
            .unwrap()
            .value;
        assert!((tail - (i as f64 + 0.5) / n as f64).abs() < 1e-6, "i={i}: {tail}");
    }
    let median = fc.classical_locations(1)[0];
    assert!(median.abs() < 1e-8);
}

#[test]
fn richardson_agrees_with_boundary_values_in_the_bulk() {
    let fc = jacobi(2.0, 2.0, 2.0);
    let xs = [-1.5, -0.3, 0.0, 0.8, 1.9];
    let etas: Vec<f64> = (0..5).map(|k| 1e-2 * 0.5f64.powi(k)).collect();
    let rich = fc.density_richardson(&xs, &etas).unwrap();
    let direct = fc.density(&xs);
    for (r, d) in rich.rho.iter().zip(&direct.rho) {
        assert!((r - d).abs() < 1e-6, "{r} vs {d}");
    }
}

#[test]
fn clt_variance_oracles() {
    let fc = jacobi(13.0, 13.0, 2.0);
    let opts = ContourOptions::default();
    let m = fc.measure().jacobi().unwrap();
    let ev2 = m.integrate(|x| x * x).unwrap();
    let ev4 = m.integrate(|x| x.powi(4)).unwrap();
    let v1 = fc.clt_variance(&TestFunction::Polynomial(vec![0.0, 1.0]), &opts).unwrap();
    assert_relative_eq!(v1, 4.0 * ev2, max_relative = 1e-8);
    let v2 = fc.clt_variance(&TestFunction::Polynomial(vec![0.0, 0.0, 1.0]), &opts).unwrap();
    assert_relative_eq!(v2, 16.0 * (ev4 - ev2 * ev2), max_relative = 1e-8);
    let v0 = fc.clt_variance(&TestFunction::Polynomial(vec![1.0]), &opts).unwrap();
    assert!(v0.abs() < 1e-8);
    // the semicircle alone carries no fluctuation at this scale
    let sc = semicircle();
    assert!(sc.clt_variance(&TestFunction::Polynomial(vec![0.0, 1.0]), &opts).unwrap() < 1e-8);
}

#[test]
fn clt_variance_is_stable_under_refinement() {
    let fc = jacobi(12.0, 12.0, 2.0);
    let g = fc.gamma_hat_point(0.5 * fc.beta_c().unwrap()).unwrap();
    let f = TestFunction::LogShift(g);
    let coarse = fc.clt_variance(&f, &ContourOptions::default()).unwrap();
    let fine = fc.clt_variance(&f, &ContourOptions { panels: 8, ..Default::default() }).unwrap();
    assert!((coarse - fine).abs() < 1e-6);
    assert!(coarse > 0.0);
}

#[test]
fn critical_gap_in_log_contour_is_reported() {
    let fc = jacobi(12.0, 12.0, 2.0);
    let f = TestFunction::LogShift(fc.l_plus() + 1e-4);
    assert!(matches!(fc.clt_variance(&f, &ContourOptions::default()), Err(Error::ContourTooClose { .. })));
}

#[test]
fn tiny_edge_density_matches_off_axis_solve() {
    let fc = jacobi(12.0, 12.0, 2.0);
    let x = fc.l_plus() - 0.17;
    let rho = fc.density_at(x).unwrap();
    assert!(rho > 1e-10 && rho < 1e-6, "rho = {rho:e}");
    let eta = 1e-13;
    let off = fc.solve_mfc(cplx(x, eta)).unwrap().im / PI;
    assert_relative_eq!(rho, off, max_relative = 1e-3);
}
