//! Small dense solvers used internally: complex QR for Haar sampling,
//! Cholesky for the fit normal equations, pivoted LU for the thermal
//! inverse. Sizes here are a few hundred at most, so plain loops are fine.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// QR factorization of a square complex matrix by modified Gram-Schmidt
/// with one reorthogonalization pass. Returns `(q, r_diag)` where `q` has
/// orthonormal columns and `r_diag` holds the diagonal of R (real,
/// positive for full-rank input).
pub(crate) fn qr_orthonormalize(a: &Array2<Complex64>) -> Result<(Array2<Complex64>, Vec<f64>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::ShapeMismatch(format!(
            "qr expects a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let mut q = a.clone();
    let mut r_diag = vec![0.0; n];
    for k in 0..n {
        // Two projection passes keep orthogonality at machine precision.
        for _ in 0..2 {
            for j in 0..k {
                let mut proj = Complex64::new(0.0, 0.0);
                for i in 0..n {
                    proj += q[[i, j]].conj() * q[[i, k]];
                }
                for i in 0..n {
                    let qij = q[[i, j]];
                    q[[i, k]] -= proj * qij;
                }
            }
        }
        let norm: f64 = (0..n).map(|i| q[[i, k]].norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-300 {
            return Err(Error::SingularSystem(format!(
                "rank-deficient matrix in QR at column {k}"
            )));
        }
        for i in 0..n {
            q[[i, k]] /= norm;
        }
        r_diag[k] = norm;
    }
    Ok((q, r_diag))
}

/// Solves the symmetric positive definite system `a x = b` in place via
/// Cholesky. `a` is overwritten with its factor.
pub(crate) fn cholesky_solve(a: &mut Array2<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "cholesky_solve: a is {}x{}, b has length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= a[[j, k]] * a[[j, k]];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::SingularSystem(format!(
                "matrix not positive definite at pivot {j} (d = {d:.3e})"
            )));
        }
        let d = d.sqrt();
        a[[j, j]] = d;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= a[[i, k]] * a[[j, k]];
            }
            a[[i, j]] = s / d;
        }
    }
    // Forward then backward substitution with the lower factor.
    let mut x = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            x[i] -= a[[i, k]] * x[k];
        }
        x[i] /= a[[i, i]];
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            x[i] -= a[[k, i]] * x[k];
        }
        x[i] /= a[[i, i]];
    }
    Ok(x)
}

/// LU factorization with partial pivoting, for repeated solves against the
/// same (generally nonsymmetric) matrix.
pub(crate) struct LuFactors {
    lu: Array2<f64>,
    pivots: Vec<usize>,
}

impl LuFactors {
    pub(crate) fn new(a: Array2<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::ShapeMismatch(format!(
                "lu expects a square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let mut lu = a;
        let mut pivots = vec![0usize; n];
        for k in 0..n {
            let mut p = k;
            let mut max = lu[[k, k]].abs();
            for i in (k + 1)..n {
                if lu[[i, k]].abs() > max {
                    max = lu[[i, k]].abs();
                    p = i;
                }
            }
            if max < 1e-300 || !max.is_finite() {
                return Err(Error::SingularSystem(format!("singular pivot at column {k}")));
            }
            pivots[k] = p;
            if p != k {
                for j in 0..n {
                    let tmp = lu[[k, j]];
                    lu[[k, j]] = lu[[p, j]];
                    lu[[p, j]] = tmp;
                }
            }
            let d = lu[[k, k]];
            for i in (k + 1)..n {
                let f = lu[[i, k]] / d;
                lu[[i, k]] = f;
                for j in (k + 1)..n {
                    let upd = f * lu[[k, j]];
                    lu[[i, j]] -= upd;
                }
            }
        }
        Ok(Self { lu, pivots })
    }

    pub(crate) fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.nrows();
        let mut x = b.to_vec();
        for k in 0..n {
            x.swap(k, self.pivots[k]);
            for i in (k + 1)..n {
                let upd = self.lu[[i, k]] * x[k];
                x[i] -= upd;
            }
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                x[i] -= self.lu[[i, k]] * x[k];
            }
            x[i] /= self.lu[[i, i]];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn qr_columns_are_orthonormal() {
        let n = 8;
        let mut a = Array2::zeros((n, n));
        // Deterministic, well-spread test matrix.
        for i in 0..n {
            for j in 0..n {
                let x = ((i * 31 + j * 17) % 13) as f64 - 6.0;
                let y = ((i * 7 + j * 29) % 11) as f64 - 5.0;
                a[[i, j]] = Complex64::new(x, y);
            }
        }
        let (q, r_diag) = qr_orthonormalize(&a).unwrap();
        for j in 0..n {
            assert!(r_diag[j] > 0.0);
            for k in 0..n {
                let mut dot = Complex64::new(0.0, 0.0);
                for i in 0..n {
                    dot += q[[i, j]].conj() * q[[i, k]];
                }
                let expect = if j == k { 1.0 } else { 0.0 };
                assert!((dot.re - expect).abs() < 1e-13 && dot.im.abs() < 1e-13);
            }
        }
    }

    #[test]
    fn cholesky_solves_spd_system() {
        let mut a = array![[4.0, 2.0, 0.6], [2.0, 5.0, 1.0], [0.6, 1.0, 3.0]];
        let x_true = [1.0, -2.0, 0.5];
        let b: Vec<f64> = (0..3)
            .map(|i| (0..3).map(|j| a[[i, j]] * x_true[j]).sum())
            .collect();
        let x = cholesky_solve(&mut a, &b).unwrap();
        for i in 0..3 {
            assert!((x[i] - x_true[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut a = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(cholesky_solve(&mut a, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn lu_solves_nonsymmetric_system() {
        let a = array![[2.0, 1.0, -0.3], [0.1, -3.0, 0.4], [1.0, 0.2, 5.0]];
        let x_true = [0.7, 2.0, -1.1];
        let b: Vec<f64> = (0..3)
            .map(|i| (0..3).map(|j| a[[i, j]] * x_true[j]).sum())
            .collect();
        let lu = LuFactors::new(a).unwrap();
        let x = lu.solve(&b);
        for i in 0..3 {
            assert!((x[i] - x_true[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn lu_rejects_singular() {
        let a = array![[1.0, 2.0], [2.0, 4.0]];
        assert!(LuFactors::new(a).is_err());
    }
}
