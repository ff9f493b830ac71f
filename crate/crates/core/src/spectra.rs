//! Realizations of `J = W + λV`, their spectra, resolvents and the
//! empirical local-law and rigidity diagnostics.

use crate::error::{Error, Result};
use crate::freeconv::FreeConvolution;
use crate::linalg::{complex_inverse, symmetric_eigen};
use crate::measure::BaseMeasure;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

/// RNG stream of one trial, independent of scheduling.
pub fn trial_rng(master_seed: u64, trial: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
    rng.set_stream(trial);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSample {
    pub n: usize,
    pub lambda: f64,
    /// Diagonal of V.
    pub v: Vec<f64>,
    /// Eigenvalues, descending.
    pub eigs: Vec<f64>,
    pub seed: u64,
    pub trial: u64,
    /// False if some eigenvalue left [-(2 + λ + 0.5), 2 + λ + 0.5].
    pub within_bound: bool,
    matrix: Option<Vec<f64>>,
    // Eigenvectors, vector-major, in the order of `eigs`.
    vectors: Option<Vec<f64>>,
}

/// Draws `J = W + λV` with GOE-normalized Gaussian `W` (off-diagonal
/// variance 1/N, diagonal 2/N) and V i.i.d. from `measure`. The diagonal is
/// drawn first, then the lower triangle row by row.
pub fn sample_matrix_with_rng<R: Rng + ?Sized>(
    measure: &BaseMeasure,
    lambda: f64,
    n: usize,
    rng: &mut R,
    retain_matrix: bool,
) -> Result<SpectralSample> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("matrix size must be at least 2, got {n}")));
    }
    let v: Vec<f64> = (0..n).map(|_| measure.sample(rng)).collect();
    let off_sd = (1.0 / n as f64).sqrt();
    let diag_sd = (2.0 / n as f64).sqrt();
    let mut a = vec![0.0; n * n];
    let mut trace = 0.0;
    for i in 0..n {
        for j in 0..i {
            let g: f64 = rng.sample(StandardNormal);
            a[i * n + j] = off_sd * g;
            a[j * n + i] = off_sd * g;
        }
        let g: f64 = rng.sample(StandardNormal);
        let d = diag_sd * g + lambda * v[i];
        a[i * n + i] = d;
        trace += d;
    }
    let matrix = retain_matrix.then(|| a.clone());
    let eig = symmetric_eigen(a, n, retain_matrix)?;
    let sum: f64 = eig.values.iter().sum();
    if (sum - trace).abs() > 1e-8 * (1.0 + trace.abs()) {
        return Err(Error::NoConvergence { what: "eigenvalue trace identity".into(), residual: (sum - trace).abs() });
    }
    let bound = 2.0 + lambda + 0.5;
    let within_bound = eig.values.iter().all(|x| x.abs() <= bound);
    Ok(SpectralSample {
        n,
        lambda,
        v,
        eigs: eig.values,
        seed: 0,
        trial: 0,
        within_bound,
        matrix,
        vectors: eig.vectors,
    })
}

/// Sample for `trial` under `master_seed`.
pub fn sample_matrix(
    measure: &BaseMeasure,
    lambda: f64,
    n: usize,
    master_seed: u64,
    trial: u64,
    retain_matrix: bool,
) -> Result<SpectralSample> {
    let mut rng = trial_rng(master_seed, trial);
    let mut s = sample_matrix_with_rng(measure, lambda, n, &mut rng, retain_matrix)?;
    s.seed = master_seed;
    s.trial = trial;
    Ok(s)
}

impl SpectralSample {
    pub fn largest(&self) -> f64 {
        self.eigs[0]
    }

    pub fn smallest(&self) -> f64 {
        self.eigs[self.n - 1]
    }

    pub fn matrix(&self) -> Option<&[f64]> {
        self.matrix.as_deref()
    }

    /// `(1/N) Σ 1/(λ_i - z)`.
    pub fn empirical_stieltjes(&self, z: Complex64) -> Complex64 {
        self.eigs.iter().map(|&e| (Complex64::new(e, 0.0) - z).inv()).sum::<Complex64>() / self.n as f64
    }

    /// `‖J q_k - θ_k q_k‖` for the k-th eigenpair of a retained sample.
    pub fn eigenpair_residual(&self, k: usize) -> Result<f64> {
        let (a, q) = match (&self.matrix, &self.vectors) {
            (Some(a), Some(q)) => (a, q),
            _ => return Err(Error::MatrixNotRetained),
        };
        let n = self.n;
        let qk = &q[k * n..(k + 1) * n];
        let mut r2 = 0.0;
        for i in 0..n {
            let row = &a[i * n..(i + 1) * n];
            let jq: f64 = row.iter().zip(qk).map(|(x, y)| x * y).sum();
            r2 += (jq - self.eigs[k] * qk[i]).powi(2);
        }
        Ok(r2.sqrt())
    }

    /// Dense resolvent `(J - z)^{-1}` (row-major) from the spectral
    /// decomposition `Q diag(1/(λ_k - z)) Qᵀ`.
    pub fn resolvent(&self, z: Complex64) -> Result<Vec<Complex64>> {
        let q = self.vectors.as_ref().ok_or(Error::MatrixNotRetained)?;
        let n = self.n;
        let inv: Vec<Complex64> = self.eigs.iter().map(|&e| (Complex64::new(e, 0.0) - z).inv()).collect();
        let mut scaled_re = vec![0.0; n * n];
        let mut scaled_im = vec![0.0; n * n];
        for k in 0..n {
            for r in 0..n {
                scaled_re[k * n + r] = inv[k].re * q[k * n + r];
                scaled_im[k * n + r] = inv[k].im * q[k * n + r];
            }
        }
        let mut g_re = vec![0.0; n * n];
        let mut g_im = vec![0.0; n * n];
        // G = Vᵀ (D V) where the rows of V are eigenvectors.
        unsafe {
            matrixmultiply::dgemm(
                n, n, n, 1.0, q.as_ptr(), 1, n as isize, scaled_re.as_ptr(), n as isize, 1, 0.0, g_re.as_mut_ptr(),
                n as isize, 1,
            );
            matrixmultiply::dgemm(
                n, n, n, 1.0, q.as_ptr(), 1, n as isize, scaled_im.as_ptr(), n as isize, 1, 0.0, g_im.as_mut_ptr(),
                n as isize, 1,
            );
        }
        Ok(g_re.into_iter().zip(g_im).map(|(re, im)| Complex64::new(re, im)).collect())
    }

    /// Resolvent by LU factorization of `J - z`; slower, independent route.
    pub fn resolvent_lu(&self, z: Complex64) -> Result<Vec<Complex64>> {
        let a = self.matrix.as_ref().ok_or(Error::MatrixNotRetained)?;
        let n = self.n;
        let mut m: Vec<Complex64> = a.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        for i in 0..n {
            m[i * n + i] -= z;
        }
        complex_inverse(&m, n)
    }

    /// `max_ij |G_ij - δ_ij / (λ v_i - z - m_N(z))|`.
    pub fn local_law_residual(&self, z: Complex64) -> Result<f64> {
        let g = self.resolvent(z)?;
        Ok(self.local_law_residual_of(&g, z))
    }

    pub(crate) fn local_law_residual_of(&self, g: &[Complex64], z: Complex64) -> f64 {
        let n = self.n;
        let mn = self.empirical_stieltjes(z);
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let mut d = g[i * n + j];
                if i == j {
                    d -= (Complex64::new(self.lambda * self.v[i], 0.0) - z - mn).inv();
                }
                worst = worst.max(d.norm());
            }
        }
        worst
    }

    /// `max_i |Σ_j |G_ij|² - Im G_ii / Im z|`.
    pub fn ward_residual(&self, g: &[Complex64], z: Complex64) -> f64 {
        let n = self.n;
        (0..n)
            .map(|i| {
                let row: f64 = g[i * n..(i + 1) * n].iter().map(|x| x.norm_sqr()).sum();
                (row - g[i * n + i].im / z.im).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Envelope `N^{ε' - 1/2} |Im z|^{-3}` of the entrywise local law.
pub fn local_law_envelope(n: usize, z: Complex64, eps_prime: f64) -> f64 {
    (n as f64).powf(eps_prime - 0.5) * z.im.abs().powi(-3)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidityParams {
    /// Lower-edge exponent.
    pub a: f64,
    /// Upper-edge exponent.
    pub b: f64,
    pub zeta: f64,
    /// Constant in front of the window start.
    pub kappa: f64,
}

impl RigidityParams {
    pub fn for_convolution(fc: &FreeConvolution, zeta: f64) -> Self {
        let (a, b) = fc.measure().jacobi().map(|m| (m.a(), m.b())).unwrap_or((0.5, 0.5));
        RigidityParams { a, b, zeta, kappa: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidityReport {
    /// 1-based inclusive index windows.
    pub upper_window: (usize, usize),
    pub lower_window: (usize, usize),
    pub max_dev_upper: f64,
    pub max_dev_lower: f64,
    pub bound_upper: f64,
    pub bound_lower: f64,
    pub passed: bool,
}

/// Largest deviation `|λ_i - γ_i|` over the upper and lower bulk windows,
/// against the bound `N^{-1/4 + ε + ζb}` with `ε = 1/(b+1) + 0.01`.
pub fn rigidity_report(sample: &SpectralSample, classical: &[f64], p: &RigidityParams) -> Result<RigidityReport> {
    let n = sample.n;
    if classical.len() != n {
        return Err(Error::InvalidParameter(format!(
            "need {n} classical locations, got {}",
            classical.len()
        )));
    }
    let nf = n as f64;
    let start = |e: f64| ((p.kappa * nf.powf(1.0 - p.zeta * (e + 1.0))).ceil() as usize).clamp(1, n / 2);
    let bound = |e: f64| nf.powf(-0.25 + 1.0 / (e + 1.0) + 0.01 + p.zeta * e);
    let upper_window = (start(p.b), n / 2);
    let lower_window = (n / 2, n + 1 - start(p.a));
    let dev = |(lo, hi): (usize, usize)| (lo..=hi).map(|i| (sample.eigs[i - 1] - classical[i - 1]).abs()).fold(0.0, f64::max);
    let max_dev_upper = dev(upper_window);
    let max_dev_lower = dev(lower_window);
    let (bound_upper, bound_lower) = (bound(p.b), bound(p.a));
    Ok(RigidityReport {
        upper_window,
        lower_window,
        max_dev_upper,
        max_dev_lower,
        bound_upper,
        bound_lower,
        passed: max_dev_upper <= bound_upper && max_dev_lower <= bound_lower,
    })
}

/// CSV rows `trial,i,lambda_i` (1-based i).
pub fn write_eigenvalues_csv<W: Write>(out: &mut W, samples: &[SpectralSample]) -> std::io::Result<()> {
    writeln!(out, "trial,i,lambda_i")?;
    for s in samples {
        for (i, e) in s.eigs.iter().enumerate() {
            writeln!(out, "{},{},{:?}", s.trial, i + 1, e)?;
        }
    }
    Ok(())
}

const CACHE_MAGIC: &[u8; 8] = b"SSKSMP01";

/// On-disk cache of samples keyed by seed, trial, size, λ and measure.
#[derive(Debug, Clone)]
pub struct SampleCache {
    dir: PathBuf,
}

impl SampleCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(SampleCache { dir })
    }

    fn path(&self, measure: &BaseMeasure, lambda: f64, n: usize, seed: u64, trial: u64) -> PathBuf {
        let mut h = Sha256::new();
        h.update(measure.fingerprint().as_bytes());
        h.update(lambda.to_le_bytes());
        h.update((n as u64).to_le_bytes());
        h.update(seed.to_le_bytes());
        h.update(trial.to_le_bytes());
        let hex: String = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
        self.dir.join(format!("{hex}.bin"))
    }

    fn read(path: &Path, n: usize) -> Option<(Vec<f64>, Vec<f64>)> {
        let mut buf = Vec::new();
        std::fs::File::open(path).ok()?.read_to_end(&mut buf).ok()?;
        if buf.len() != 8 + 16 * n || &buf[..8] != CACHE_MAGIC {
            return None;
        }
        let vals: Vec<f64> =
            buf[8..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Some((vals[..n].to_vec(), vals[n..].to_vec()))
    }

    /// Eigenvalue-only sample, read from the cache or computed and stored.
    pub fn get_or_sample(
        &self,
        measure: &BaseMeasure,
        lambda: f64,
        n: usize,
        seed: u64,
        trial: u64,
    ) -> Result<SpectralSample> {
        let path = self.path(measure, lambda, n, seed, trial);
        if let Some((v, eigs)) = Self::read(&path, n) {
            let bound = 2.0 + lambda + 0.5;
            let within_bound = eigs.iter().all(|x| x.abs() <= bound);
            return Ok(SpectralSample { n, lambda, v, eigs, seed, trial, within_bound, matrix: None, vectors: None });
        }
        let s = sample_matrix(measure, lambda, n, seed, trial, false)?;
        let mut buf = Vec::with_capacity(8 + 16 * n);
        buf.extend_from_slice(CACHE_MAGIC);
        for x in s.v.iter().chain(&s.eigs) {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, &buf)?;
        std::fs::rename(&tmp, &path)?;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{JacobiMeasure, MeasureSpec};

    fn jac(a: f64, b: f64) -> BaseMeasure {
        JacobiMeasure::new(MeasureSpec::new(a, b)).unwrap().into()
    }

    #[test]
    fn identical_seeds_give_identical_samples() {
        let m = jac(12.0, 12.0);
        let s1 = sample_matrix(&m, 2.0, 60, 9, 3, false).unwrap();
        let s2 = sample_matrix(&m, 2.0, 60, 9, 3, false).unwrap();
        assert_eq!(s1, s2);
        let s3 = sample_matrix(&m, 2.0, 60, 9, 4, false).unwrap();
        assert_ne!(s1.eigs, s3.eigs);
    }

    #[test]
    fn eigenpairs_and_sorting() {
        let s = sample_matrix(&jac(2.0, 2.0), 2.0, 120, 1, 0, true).unwrap();
        assert!(s.eigs.windows(2).all(|w| w[0] >= w[1]));
        let norm = s.eigs[0].abs().max(s.eigs[s.n - 1].abs());
        for k in [0, 17, 59, 88, 119] {
            assert!(s.eigenpair_residual(k).unwrap() <= 1e-10 * norm);
        }
    }

    #[test]
    fn resolvent_routes_agree() {
        let s = sample_matrix(&jac(2.0, 2.0), 2.0, 40, 5, 0, true).unwrap();
        let z = Complex64::new(0.4, 0.3);
        let g1 = s.resolvent(z).unwrap();
        let g2 = s.resolvent_lu(z).unwrap();
        let diff = g1.iter().zip(&g2).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(diff < 1e-10);
        let n = s.n;
        for i in 0..n {
            for j in 0..n {
                assert!((g1[i * n + j] - g1[j * n + i]).norm() < 1e-10);
            }
        }
        assert!(s.ward_residual(&g1, z) < 1e-8);
        let tr: Complex64 = (0..n).map(|i| g1[i * n + i]).sum::<Complex64>() / n as f64;
        assert!((tr - s.empirical_stieltjes(z)).norm() < 1e-12);
    }

    #[test]
    fn stieltjes_conjugation_and_bound() {
        let s = sample_matrix(&jac(2.0, 2.0), 2.0, 50, 2, 0, false).unwrap();
        let z = Complex64::new(0.3, 1.0);
        let m = s.empirical_stieltjes(z);
        assert!(m.norm() <= 1.0 && m.im > 0.0);
        assert!((s.empirical_stieltjes(z.conj()) - m.conj()).norm() < 1e-15);
    }

    #[test]
    fn missing_matrix_is_reported() {
        let s = sample_matrix(&jac(2.0, 2.0), 2.0, 10, 2, 0, false).unwrap();
        assert!(matches!(s.local_law_residual(Complex64::new(0.0, 1.0)), Err(Error::MatrixNotRetained)));
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cache = SampleCache::new(dir.path()).unwrap();
        let m = jac(2.0, 2.0);
        let a = cache.get_or_sample(&m, 2.0, 30, 4, 1).unwrap();
        let b = cache.get_or_sample(&m, 2.0, 30, 4, 1).unwrap();
        assert_eq!(a.eigs, b.eigs);
        assert_eq!(a.v, b.v);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn eigenvalue_csv_layout() {
        let s = sample_matrix(&jac(2.0, 2.0), 2.0, 3, 2, 7, false).unwrap();
        let mut out = Vec::new();
        write_eigenvalues_csv(&mut out, &[s]).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "trial,i,lambda_i");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("7,1,"));
    }
}
