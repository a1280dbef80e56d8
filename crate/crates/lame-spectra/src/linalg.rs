//! Dense complex linear-algebra support shared by assembly and spectral code,
//! plus a minimal real CSR matrix with a conjugate-gradient solver for the
//! one problem size (the vector-Laplacian convergence study) where dense
//! storage would be wasteful.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;
pub type RMat = DMatrix<f64>;
pub type RVec = DVector<f64>;

/// Frobenius norm of a complex matrix.
pub fn frob(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Hermitian deviation `||A - A^H||_F`.
pub fn hermitian_deviation(a: &CMat) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            let d = a[(i, j)] - a[(j, i)].conj();
            s += d.norm_sqr();
        }
    }
    // Off-diagonal deviations are counted twice by the loop, matching ||.||_F.
    s.sqrt()
}

/// Real sparse matrix in compressed-row form. Built once from triplets,
/// read-only afterwards.
#[derive(Clone, Debug)]
pub struct Csr {
    pub n_rows: usize,
    pub n_cols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl Csr {
    /// Duplicate (i, j) entries are summed. The triplet list is consumed.
    pub fn from_triplets(n_rows: usize, n_cols: usize, mut t: Vec<(usize, usize, f64)>) -> Csr {
        t.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut indptr = vec![0usize; n_rows + 1];
        let mut indices = Vec::with_capacity(t.len());
        let mut data = Vec::with_capacity(t.len());
        let mut last = None;
        for &(i, j, v) in &t {
            debug_assert!(i < n_rows && j < n_cols);
            if last == Some((i, j)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(j);
                data.push(v);
                indptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n_rows {
            indptr[i + 1] += indptr[i];
        }
        Csr { n_rows, n_cols, indptr, indices, data }
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        debug_assert_eq!(y.len(), self.n_rows);
        for i in 0..self.n_rows {
            let mut acc = 0.0;
            for k in self.indptr[i]..self.indptr[i + 1] {
                acc += self.data[k] * x[self.indices[k]];
            }
            y[i] = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n_rows];
        for i in 0..self.n_rows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                if self.indices[k] == i {
                    d[i] += self.data[k];
                }
            }
        }
        d
    }
}

/// Cholesky factorization of a symmetric positive definite matrix with small
/// bandwidth, stored as a dense band. The factor fills the band but nothing
/// outside it, so storage and solve cost stay `O(n * bw)`.
#[derive(Clone, Debug)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    /// `band[i * (bw + 1) + (j - i + bw)]` holds `L[i, j]` for `i - bw <= j <= i`.
    band: Vec<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum BandError {
    #[error("matrix is not positive definite (pivot {0})")]
    NotPositiveDefinite(usize),
    #[error("matrix is not square")]
    NotSquare,
}

impl BandCholesky {
    /// Factor the lower triangle of `a` (assumed symmetric).
    pub fn new(a: &Csr) -> Result<BandCholesky, BandError> {
        if a.n_rows != a.n_cols {
            return Err(BandError::NotSquare);
        }
        let n = a.n_rows;
        let mut bw = 0usize;
        for i in 0..n {
            for k in a.indptr[i]..a.indptr[i + 1] {
                let j = a.indices[k];
                bw = bw.max(i.abs_diff(j));
            }
        }
        let stride = bw + 1;
        let mut band = vec![0.0; n * stride];
        for i in 0..n {
            for k in a.indptr[i]..a.indptr[i + 1] {
                let j = a.indices[k];
                if j <= i {
                    band[i * stride + (j + bw - i)] = a.data[k];
                }
            }
        }
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let klo = lo.max(j.saturating_sub(bw));
                let mut s = band[i * stride + (j + bw - i)];
                for k in klo..j {
                    s -= band[i * stride + (k + bw - i)] * band[j * stride + (k + bw - j)];
                }
                if j < i {
                    band[i * stride + (j + bw - i)] = s / band[j * stride + bw];
                } else {
                    if s <= 0.0 || !s.is_finite() {
                        return Err(BandError::NotPositiveDefinite(i));
                    }
                    band[i * stride + bw] = s.sqrt();
                }
            }
        }
        Ok(BandCholesky { n, bw, band })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    /// Solve `A x = b` in place.
    pub fn solve_into(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.n);
        let stride = self.bw + 1;
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let mut s = b[i];
            for j in lo..i {
                s -= self.band[i * stride + (j + self.bw - i)] * b[j];
            }
            b[i] = s / self.band[i * stride + self.bw];
        }
        for i in (0..self.n).rev() {
            let hi = (i + self.bw).min(self.n - 1);
            let mut s = b[i];
            for j in (i + 1)..=hi {
                s -= self.band[j * stride + (i + self.bw - j)] * b[j];
            }
            b[i] = s / self.band[i * stride + self.bw];
        }
    }
}

/// Jacobi-preconditioned conjugate gradients for symmetric positive definite
/// `A x = b`. Returns the iteration count and the final relative residual.
pub fn cg_solve(a: &Csr, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> (usize, f64) {
    let n = b.len();
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 }).collect();
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if bnorm == 0.0 {
        x.fill(0.0);
        return (0, 0.0);
    }
    let mut r = vec![0.0; n];
    a.matvec_into(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z: Vec<f64> = (0..n).map(|i| inv_diag[i] * r[i]).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];
    for it in 0..max_iter {
        let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rnorm <= tol * bnorm {
            return (it, rnorm / bnorm);
        }
        a.matvec_into(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = inv_diag[i] * r[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    (max_iter, rnorm / bnorm)
}

#[cfg(test)]
mod probe {
    use super::*;
    use nalgebra::linalg::{Cholesky, SymmetricEigen, QR, SVD};

    fn hpd(n: usize) -> CMat {
        let g = CMat::from_fn(n, n, |i, j| C64::new((i * 7 + j * 3) as f64 % 5.0 - 2.0, (i * 3 + j) as f64 % 3.0 - 1.0));
        let mut a = &g * g.adjoint();
        for i in 0..n {
            a[(i, i)] += C64::new(n as f64, 0.0);
        }
        a
    }

    #[test]
    fn nalgebra_complex_cholesky_roundtrip() {
        let a = hpd(6);
        let chol = Cholesky::new(a.clone()).expect("hpd");
        let l = chol.l();
        let err = frob(&(&l * l.adjoint() - &a)) / frob(&a);
        assert!(err < 1e-12, "err={err}");
    }

    #[test]
    fn nalgebra_complex_symmetric_eigen() {
        let a = hpd(6);
        let se = SymmetricEigen::new(a.clone());
        // eigenvalues real positive, reconstruction ok
        let mut rec = CMat::zeros(6, 6);
        for k in 0..6 {
            let v = se.eigenvectors.column(k);
            rec += v * v.adjoint() * C64::new(se.eigenvalues[k], 0.0);
        }
        let err = frob(&(&rec - &a)) / frob(&a);
        assert!(err < 1e-10, "err={err}");
        assert!(se.eigenvalues.iter().all(|&e| e > 0.0));
    }

    #[test]
    fn nalgebra_complex_qr_unitary() {
        let g = CMat::from_fn(5, 5, |i, j| C64::new((i + 2 * j) as f64 % 7.0 - 3.0, (3 * i + j) as f64 % 4.0 - 1.5));
        let qr = QR::new(g.clone());
        let q = qr.q();
        let err = frob(&(q.adjoint() * &q - CMat::identity(5, 5)));
        assert!(err < 1e-12, "err={err}");
    }

    #[test]
    fn nalgebra_complex_svd_values() {
        let g = CMat::from_fn(5, 3, |i, j| C64::new((i + 2 * j) as f64 % 7.0 - 3.0, (3 * i + j) as f64 % 4.0 - 1.5));
        let sv = SVD::new(g.clone(), false, false).singular_values;
        // cross-check against eigenvalues of G^H G
        let se = SymmetricEigen::new(g.adjoint() * &g);
        let mut expect: Vec<f64> = se.eigenvalues.iter().map(|e| e.max(0.0).sqrt()).collect();
        expect.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let mut got: Vec<f64> = sv.iter().cloned().collect();
        got.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (g, e) in got.iter().zip(expect.iter()) {
            assert!((g - e).abs() < 1e-9 * (1.0 + e), "{got:?} vs {expect:?}");
        }
    }
}

#[cfg(test)]
mod sparse_tests {
    use super::*;

    #[test]
    fn csr_from_triplets_sums_duplicates() {
        let t = vec![(0, 1, 2.0), (1, 0, 3.0), (0, 1, 0.5), (2, 2, 1.0), (1, 1, -1.0)];
        let a = Csr::from_triplets(3, 3, t);
        assert_eq!(a.nnz(), 4);
        let mut y = vec![0.0; 3];
        a.matvec_into(&[1.0, 1.0, 1.0], &mut y);
        assert_eq!(y, vec![2.5, 2.0, 1.0]);
        assert_eq!(a.diagonal(), vec![0.0, -1.0, 1.0]);
    }

    #[test]
    fn band_cholesky_matches_dense_solve() {
        // pentadiagonal SPD matrix with an irregular band profile
        let n = 40;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 6.0 + (i as f64 * 0.1).sin()));
            if i + 1 < n {
                t.push((i, i + 1, -2.0));
                t.push((i + 1, i, -2.0));
            }
            if i + 3 < n && i % 2 == 0 {
                t.push((i, i + 3, 0.5));
                t.push((i + 3, i, 0.5));
            }
        }
        let a = Csr::from_triplets(n, n, t);
        let chol = BandCholesky::new(&a).expect("spd");
        assert_eq!(chol.bandwidth(), 3);
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).cos()).collect();
        let mut x = b.clone();
        chol.solve_into(&mut x);
        let mut ax = vec![0.0; n];
        a.matvec_into(&x, &mut ax);
        for i in 0..n {
            assert!((ax[i] - b[i]).abs() < 1e-10, "row {i}");
        }
    }

    #[test]
    fn band_cholesky_rejects_indefinite() {
        let t = vec![(0, 0, 1.0), (1, 1, -1.0)];
        let a = Csr::from_triplets(2, 2, t);
        assert!(matches!(BandCholesky::new(&a), Err(BandError::NotPositiveDefinite(1))));
    }

    #[test]
    fn cg_solves_spd_system() {
        // 1D Laplacian, n = 50
        let n = 50;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        let a = Csr::from_triplets(n, n, t);
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut x = vec![0.0; n];
        let (_, relres) = cg_solve(&a, &b, &mut x, 1e-12, 10 * n);
        assert!(relres < 1e-12);
        let mut ax = vec![0.0; n];
        a.matvec_into(&x, &mut ax);
        for i in 0..n {
            assert!((ax[i] - b[i]).abs() < 1e-10);
        }
    }
}
