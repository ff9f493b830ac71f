//! Dense symmetric eigensolver: Householder tridiagonalization followed by
//! implicit QL iterations with Wilkinson-style shifts.
//!
//! Matrices are dense row-major `n * n` slices. Eigenvectors, when requested,
//! are returned "vector-major": entry `k * n + r` is component `r` of the
//! `k`-th eigenvector. That layout keeps every Givens rotation of the QL
//! sweep on two contiguous blocks.

use crate::error::{Error, Result};
use crate::scalar::Real;
use num_complex::Complex64;

/// Symmetric tridiagonal matrix: `diag.len() == n`, `offdiag.len() == n - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal<T> {
    pub diag: Vec<T>,
    pub offdiag: Vec<T>,
}

/// Result of a symmetric eigendecomposition, eigenvalues sorted descending.
#[derive(Debug, Clone)]
pub struct SymmetricEigen<T> {
    pub values: Vec<T>,
    /// Vector-major eigenvectors (see module docs), present when requested.
    pub vectors: Option<Vec<T>>,
}

struct Reflectors<T> {
    taus: Vec<T>,
}

/// Reduces the symmetric matrix `a` (only the lower triangle is read) to
/// tridiagonal form in place. The Householder vectors are left in the
/// strictly lower part of `a` so that [`form_q_transpose`] can rebuild `Q^T`.
fn householder_lower<T: Real>(a: &mut [T], n: usize) -> (Tridiagonal<T>, Reflectors<T>) {
    assert_eq!(a.len(), n * n, "matrix must be n * n");
    let mut diag = vec![T::zero(); n];
    let mut offdiag = vec![T::zero(); n.saturating_sub(1)];
    let mut taus = vec![T::zero(); n.saturating_sub(2)];
    if n == 0 {
        return (Tridiagonal { diag, offdiag }, Reflectors { taus });
    }
    let half = T::of(0.5);
    let mut v = vec![T::zero(); n];
    let mut p = vec![T::zero(); n];

    for k in 0..n.saturating_sub(2) {
        let m = n - k - 1;
        let x0 = a[(k + 1) * n + k];
        let mut tail = T::zero();
        for i in 1..m {
            let xi = a[(k + 1 + i) * n + k];
            tail += xi * xi;
        }
        diag[k] = a[k * n + k];
        if tail == T::zero() {
            taus[k] = T::zero();
            offdiag[k] = x0;
            for i in 0..m {
                a[(k + 1 + i) * n + k] = T::zero();
            }
            continue;
        }
        let norm = (x0 * x0 + tail).sqrt();
        let beta = if x0 >= T::zero() { -norm } else { norm };
        let tau = (beta - x0) / beta;
        let scale = T::one() / (x0 - beta);
        v[0] = T::one();
        for i in 1..m {
            v[i] = a[(k + 1 + i) * n + k] * scale;
        }
        offdiag[k] = beta;
        taus[k] = tau;

        // p = tau * B v, B the trailing block stored in its lower triangle.
        for pi in p[..m].iter_mut() {
            *pi = T::zero();
        }
        for i in 0..m {
            let row = &a[(k + 1 + i) * n + (k + 1)..(k + 1 + i) * n + (k + 1) + i + 1];
            let vi = v[i];
            let mut acc = row[i] * vi;
            for j in 0..i {
                acc += row[j] * v[j];
                p[j] += row[j] * vi;
            }
            p[i] += acc;
        }
        let mut pv = T::zero();
        for i in 0..m {
            p[i] *= tau;
            pv += p[i] * v[i];
        }
        let c = half * tau * pv;
        for i in 0..m {
            p[i] -= c * v[i];
        }
        // B -= v w^T + w v^T with w = p.
        for i in 0..m {
            let vi = v[i];
            let wi = p[i];
            let row = &mut a[(k + 1 + i) * n + (k + 1)..(k + 1 + i) * n + (k + 1) + i + 1];
            for j in 0..=i {
                row[j] -= vi * p[j] + wi * v[j];
            }
        }
        for i in 0..m {
            a[(k + 1 + i) * n + k] = v[i];
        }
    }
    if n >= 2 {
        diag[n - 2] = a[(n - 2) * n + (n - 2)];
        offdiag[n - 2] = a[(n - 1) * n + (n - 2)];
    }
    diag[n - 1] = a[(n - 1) * n + (n - 1)];
    (Tridiagonal { diag, offdiag }, Reflectors { taus })
}

/// Builds `Q^T` (row-major) from the reflectors left behind by
/// [`householder_lower`].
fn form_q_transpose<T: Real>(a: &[T], n: usize, refl: &Reflectors<T>) -> Vec<T> {
    let mut x = vec![T::zero(); n * n];
    for i in 0..n {
        x[i * n + i] = T::one();
    }
    let mut row = vec![T::zero(); n];
    for (k, &tau) in refl.taus.iter().enumerate() {
        if tau == T::zero() {
            continue;
        }
        // X <- (I - tau v v^T) X, v supported on rows k+1..n.
        for r in row.iter_mut() {
            *r = T::zero();
        }
        for i in (k + 1)..n {
            let vi = a[i * n + k];
            let xr = &x[i * n..(i + 1) * n];
            for (r, &xv) in row.iter_mut().zip(xr) {
                *r += vi * xv;
            }
        }
        for i in (k + 1)..n {
            let f = tau * a[i * n + k];
            let xr = &mut x[i * n..(i + 1) * n];
            for (xv, &r) in xr.iter_mut().zip(row.iter()) {
                *xv -= f * r;
            }
        }
    }
    x
}

/// Tridiagonalizes a symmetric matrix (lower triangle read, input consumed).
pub fn tridiagonalize<T: Real>(mut a: Vec<T>, n: usize) -> Tridiagonal<T> {
    householder_lower(&mut a, n).0
}

/// Implicit QL iteration on a symmetric tridiagonal matrix.
///
/// `d` holds the diagonal and `e` the sub-diagonal (`e.len() == d.len() - 1`).
/// When `vectors` is given as `(z, rows)`, `z` holds `n` blocks of `rows`
/// components; every rotation of columns `i, i+1` of the eigenvector matrix
/// is applied to blocks `i` and `i+1`. Eigenvalues are returned unsorted in
/// `d` order.
pub fn tridiagonal_ql<T: Real>(
    d: &mut [T],
    offdiag: &[T],
    mut vectors: Option<(&mut [T], usize)>,
) -> Result<()> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    assert_eq!(offdiag.len(), n - 1, "offdiagonal must have n - 1 entries");
    let mut e = vec![T::zero(); n];
    e[..n - 1].copy_from_slice(offdiag);
    let eps = T::epsilon();
    let two = T::of(2.0);

    for l in 0..n {
        let mut iter = 0usize;
        loop {
            let mut m = l;
            while m < n - 1 {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= eps * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 100 {
                return Err(Error::NoConvergence {
                    what: format!("QL iteration for eigenvalue {l}"),
                    residual: e[l].abs().to_f64_lossy(),
                });
            }
            let mut g = (d[l + 1] - d[l]) / (two * e[l]);
            let mut r = g.hypot(T::one());
            let sign_r = if g >= T::zero() { r.abs() } else { -r.abs() };
            g = d[m] - d[l] + e[l] / (g + sign_r);
            let mut s = T::one();
            let mut c = T::one();
            let mut p = T::zero();
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == T::zero() {
                    d[i + 1] -= p;
                    e[m] = T::zero();
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + two * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                if let Some((z, rows)) = vectors.as_mut() {
                    let rows = *rows;
                    let (lo, hi) = z.split_at_mut((i + 1) * rows);
                    let zi = &mut lo[i * rows..];
                    let zi1 = &mut hi[..rows];
                    for (a0, a1) in zi.iter_mut().zip(zi1.iter_mut()) {
                        let f1 = *a1;
                        *a1 = s * *a0 + c * f1;
                        *a0 = c * *a0 - s * f1;
                    }
                }
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = T::zero();
        }
    }
    Ok(())
}

/// Eigenvalues of a symmetric tridiagonal matrix, sorted descending.
pub fn tridiagonal_eigenvalues<T: Real>(t: &Tridiagonal<T>) -> Result<Vec<T>> {
    let mut d = t.diag.clone();
    tridiagonal_ql(&mut d, &t.offdiag, None)?;
    d.sort_by(|x, y| y.partial_cmp(x).expect("finite eigenvalues"));
    Ok(d)
}

/// Eigenvalues (descending) and the first component of each normalized
/// eigenvector of a symmetric tridiagonal matrix. This is the Golub–Welsch
/// ingredient for Gauss quadrature.
pub fn tridiagonal_eigen_first_components<T: Real>(t: &Tridiagonal<T>) -> Result<(Vec<T>, Vec<T>)> {
    let n = t.diag.len();
    let mut d = t.diag.clone();
    let mut z = vec![T::zero(); n];
    if n > 0 {
        z[0] = T::one();
    }
    tridiagonal_ql(&mut d, &t.offdiag, Some((&mut z, 1)))?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| d[j].partial_cmp(&d[i]).expect("finite eigenvalues"));
    Ok((idx.iter().map(|&i| d[i]).collect(), idx.iter().map(|&i| z[i]).collect()))
}

/// Full symmetric eigendecomposition of a dense row-major matrix. Only the
/// lower triangle of `a` is read.
pub fn symmetric_eigen<T: Real>(mut a: Vec<T>, n: usize, want_vectors: bool) -> Result<SymmetricEigen<T>> {
    let (tri, refl) = householder_lower(&mut a, n);
    let mut d = tri.diag.clone();
    if !want_vectors {
        tridiagonal_ql(&mut d, &tri.offdiag, None)?;
        d.sort_by(|x, y| y.partial_cmp(x).expect("finite eigenvalues"));
        return Ok(SymmetricEigen { values: d, vectors: None });
    }
    let mut z = form_q_transpose(&a, n, &refl);
    tridiagonal_ql(&mut d, &tri.offdiag, Some((&mut z, n)))?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| d[j].partial_cmp(&d[i]).expect("finite eigenvalues"));
    let mut values = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n * n);
    for &i in &idx {
        values.push(d[i]);
        vectors.extend_from_slice(&z[i * n..(i + 1) * n]);
    }
    Ok(SymmetricEigen { values, vectors: Some(vectors) })
}

/// Inverse of a dense complex matrix by LU with partial pivoting.
pub fn complex_inverse(a: &[Complex64], n: usize) -> Result<Vec<Complex64>> {
    assert_eq!(a.len(), n * n, "matrix must be n * n");
    let mut lu = a.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let (piv, mag) = (k..n)
            .map(|i| (i, lu[i * n + k].norm()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if mag == 0.0 {
            return Err(Error::InvalidParameter("singular matrix in LU".into()));
        }
        if piv != k {
            for j in 0..n {
                lu.swap(k * n + j, piv * n + j);
            }
            perm.swap(k, piv);
        }
        let inv = lu[k * n + k].inv();
        for i in (k + 1)..n {
            let f = lu[i * n + k] * inv;
            lu[i * n + k] = f;
            if f != Complex64::new(0.0, 0.0) {
                let (top, bottom) = lu.split_at_mut(i * n);
                let rk = &top[k * n + k + 1..k * n + n];
                let ri = &mut bottom[k + 1..n];
                for (x, &y) in ri.iter_mut().zip(rk) {
                    *x -= f * y;
                }
            }
        }
    }
    // Solve for each unit vector; columns of the inverse written row-major.
    let mut inv = vec![Complex64::new(0.0, 0.0); n * n];
    let mut col = vec![Complex64::new(0.0, 0.0); n];
    for c in 0..n {
        for (i, x) in col.iter_mut().enumerate() {
            *x = if perm[i] == c { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) };
        }
        for i in 0..n {
            let mut s = col[i];
            for j in 0..i {
                s -= lu[i * n + j] * col[j];
            }
            col[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = col[i];
            for j in (i + 1)..n {
                s -= lu[i * n + j] * col[j];
            }
            col[i] = s / lu[i * n + i];
        }
        for i in 0..n {
            inv[i * n + c] = col[i];
        }
    }
    Ok(inv)
}
