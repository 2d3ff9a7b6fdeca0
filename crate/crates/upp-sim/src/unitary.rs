//! Dense complex matrices, unitarity checks and Haar-random sampling.
//!
//! Everything downstream (mesh composition, measurement simulation,
//! calibration) moves `ComplexMatrix` / `Unitary` values around, so the
//! types are deliberately small wrappers over [`ndarray::Array2`].

use std::ops::Deref;

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::qr_orthonormalize;

/// Identifier of the seedable generator used everywhere in this crate;
/// stored in output metadata so campaigns can be reproduced bit for bit.
pub const RNG_ALGORITHM: &str = "chacha8";

/// Default tolerance on `‖U†U − I‖_max` accepted by [`Unitary::new`].
pub const UNITARITY_TOLERANCE: f64 = 1e-10;

/// Dense complex matrix with finite entries, row-major logical order.
///
/// Serializes as `{"rows": r, "cols": c, "re": [...], "im": [...]}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix(Array2<Complex64>);

impl ComplexMatrix {
    /// Wraps an array, rejecting empty shapes and non-finite entries.
    pub fn new(data: Array2<Complex64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::InvalidArgument(
                "matrix must have at least one row and one column".into(),
            ));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("matrix entries".into()));
        }
        Ok(Self(data))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self(Array2::zeros((rows, cols)))
    }

    pub fn identity(n: usize) -> Self {
        Self(Array2::eye(n))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    pub fn as_array(&self) -> &Array2<Complex64> {
        &self.0
    }

    pub fn into_array(self) -> Array2<Complex64> {
        self.0
    }

    /// Matrix product `self · rhs`.
    pub fn dot(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.cols() != rhs.rows() {
            return Err(Error::ShapeMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows(),
                self.cols(),
                rhs.rows(),
                rhs.cols()
            )));
        }
        Ok(ComplexMatrix(self.0.dot(&rhs.0)))
    }

    /// Conjugate transpose.
    pub fn dagger(&self) -> ComplexMatrix {
        let mut out = Array2::zeros((self.cols(), self.rows()));
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                out[[j, i]] = self.0[[i, j]].conj();
            }
        }
        ComplexMatrix(out)
    }

    /// Elementwise moduli `|M_ij|`.
    pub fn amplitudes(&self) -> Array2<f64> {
        self.0.mapv(|z| z.norm())
    }

    /// Largest entry modulus of `self − rhs`.
    pub fn max_abs_diff(&self, rhs: &ComplexMatrix) -> f64 {
        let mut max = 0.0f64;
        for (a, b) in self.0.iter().zip(rhs.0.iter()) {
            max = max.max((a - b).norm());
        }
        max
    }
}

impl Deref for ComplexMatrix {
    type Target = Array2<Complex64>;

    fn deref(&self) -> &Self::Target {
        &self.0
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl Serialize for ComplexMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut re = Vec::with_capacity(self.rows() * self.cols());
        let mut im = Vec::with_capacity(self.rows() * self.cols());
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                re.push(self.0[[i, j]].re);
                im.push(self.0[[i, j]].im);
            }
        }
        MatrixRepr { rows: self.rows(), cols: self.cols(), re, im }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ComplexMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = MatrixRepr::deserialize(deserializer)?;
        let len = repr.rows * repr.cols;
        if repr.re.len() != len || repr.im.len() != len {
            return Err(D::Error::custom(format!(
                "matrix payload length mismatch: {}x{} with {} re / {} im entries",
                repr.rows,
                repr.cols,
                repr.re.len(),
                repr.im.len()
            )));
        }
        let mut data = Array2::zeros((repr.rows, repr.cols));
        for i in 0..repr.rows {
            for j in 0..repr.cols {
                let k = i * repr.cols + j;
                data[[i, j]] = Complex64::new(repr.re[k], repr.im[k]);
            }
        }
        ComplexMatrix::new(data).map_err(D::Error::custom)
    }
}

/// Square complex matrix verified unitary at construction.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Unitary(ComplexMatrix);

impl Unitary {
    /// Checks `‖U†U − I‖_max ≤ tolerance` before wrapping.
    pub fn with_tolerance(m: ComplexMatrix, tolerance: f64) -> Result<Self> {
        let defect = unitarity_defect(&m)?;
        if defect > tolerance {
            return Err(Error::NotUnitary { defect, tolerance });
        }
        Ok(Self(m))
    }

    pub fn new(m: ComplexMatrix) -> Result<Self> {
        Self::with_tolerance(m, UNITARITY_TOLERANCE)
    }

    pub fn identity(n: usize) -> Self {
        Self(ComplexMatrix::identity(n))
    }

    /// Mode count (matrix dimension).
    pub fn n(&self) -> usize {
        self.0.rows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }
}

impl Deref for Unitary {
    type Target = ComplexMatrix;

    fn deref(&self) -> &Self::Target {
        &self.0
    }
}

impl<'de> Deserialize<'de> for Unitary {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let m = ComplexMatrix::deserialize(deserializer)?;
        Unitary::new(m).map_err(D::Error::custom)
    }
}

/// `‖M†M − I‖_max` for a square matrix; 0 iff `M` is exactly unitary.
pub fn unitarity_defect(m: &ComplexMatrix) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::ShapeMismatch(format!(
            "unitarity defect needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let n = m.rows();
    let mut max = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let mut dot = Complex64::new(0.0, 0.0);
            for k in 0..n {
                dot += m.as_array()[[k, i]].conj() * m.as_array()[[k, j]];
            }
            if i == j {
                dot -= 1.0;
            }
            max = max.max(dot.norm());
        }
    }
    Ok(max)
}

/// Embeds the 2x2 block `t` on modes `(i, i+1)` of an `n`-mode identity.
pub fn embed_two_mode(n: usize, i: usize, t: &ComplexMatrix) -> Result<ComplexMatrix> {
    if t.rows() != 2 || t.cols() != 2 {
        return Err(Error::ShapeMismatch(format!(
            "embed_two_mode expects a 2x2 block, got {}x{}",
            t.rows(),
            t.cols()
        )));
    }
    if n < 2 || i + 1 >= n {
        return Err(Error::InvalidArgument(format!(
            "mode index {i} out of range for {n} modes"
        )));
    }
    let mut out = Array2::eye(n);
    let b = t.as_array();
    out[[i, i]] = b[[0, 0]];
    out[[i, i + 1]] = b[[0, 1]];
    out[[i + 1, i]] = b[[1, 0]];
    out[[i + 1, i + 1]] = b[[1, 1]];
    ComplexMatrix::new(out)
}

/// Draws an `n×n` Haar-distributed unitary from the given stream.
///
/// Complex-Ginibre QR construction: fill with iid complex normals, QR
/// factorize, then normalize column phases by the sign of the R diagonal.
pub fn sample_haar<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Unitary> {
    if n == 0 {
        return Err(Error::InvalidArgument("mode count must be at least 1".into()));
    }
    let mut g = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            g[[i, j]] = Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2;
        }
    }
    let (mut q, r_diag) = qr_orthonormalize(&g)?;
    // Gram-Schmidt already leaves R with a positive real diagonal; the
    // explicit phase normalization keeps the construction valid for any
    // QR routine.
    for j in 0..n {
        let phase = if r_diag[j] >= 0.0 { 1.0 } else { -1.0 };
        for i in 0..n {
            q[[i, j]] *= phase;
        }
    }
    Unitary::with_tolerance(ComplexMatrix::new(q)?, 1e-12)
}

/// Haar-random unitary, deterministic for a fixed seed.
pub fn haar_random_unitary(n: usize, seed: u64) -> Result<Unitary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_haar(n, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn defect_of_identity_is_zero() {
        let m = ComplexMatrix::identity(5);
        assert_eq!(unitarity_defect(&m).unwrap(), 0.0);
    }

    #[test]
    fn defect_of_scaled_diagonal() {
        let m = ComplexMatrix::new(array![
            [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
            [Complex64::new(0.0, 0.0), Complex64::new(2.0, 0.0)]
        ])
        .unwrap();
        // M†M − I = diag(0, 3)
        assert!((unitarity_defect(&m).unwrap() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn defect_rejects_non_square() {
        let m = ComplexMatrix::zeros(2, 3);
        assert!(unitarity_defect(&m).is_err());
    }

    #[test]
    fn haar_output_is_unitary() {
        let u = haar_random_unitary(8, 42).unwrap();
        assert!(unitarity_defect(u.matrix()).unwrap() <= 1e-12);
    }

    #[test]
    fn haar_one_mode_is_a_phase() {
        let u = haar_random_unitary(1, 3).unwrap();
        assert!((u.as_array()[[0, 0]].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn haar_is_deterministic_per_seed() {
        let a = haar_random_unitary(24, 7).unwrap();
        let b = haar_random_unitary(24, 7).unwrap();
        assert_eq!(a.matrix(), b.matrix());
        let c = haar_random_unitary(24, 8).unwrap();
        assert!(a.max_abs_diff(&c) > 1e-3);
    }

    #[test]
    fn haar_moduli_are_uniform_on_average() {
        // E[|U_ij|^2] = 1/n for Haar; Monte-Carlo check at n = 4.
        let n = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut acc = Array2::<f64>::zeros((n, n));
        let samples = 4000;
        for _ in 0..samples {
            let u = sample_haar(n, &mut rng).unwrap();
            for i in 0..n {
                for j in 0..n {
                    acc[[i, j]] += u.as_array()[[i, j]].norm_sqr();
                }
            }
        }
        for v in acc.iter() {
            assert!((v / samples as f64 - 0.25).abs() < 0.02);
        }
    }

    #[test]
    fn haar_first_moment_invariant_under_left_multiplication() {
        let n = 4;
        let v = haar_random_unitary(n, 999).unwrap();
        let mut rng_a = ChaCha8Rng::seed_from_u64(5);
        let mut rng_b = ChaCha8Rng::seed_from_u64(6);
        let samples = 3000;
        let mut mean_plain = 0.0;
        let mut mean_rotated = 0.0;
        for _ in 0..samples {
            let u = sample_haar(n, &mut rng_a).unwrap();
            mean_plain += u.as_array()[[0, 0]].norm();
            let w = v.dot(&sample_haar(n, &mut rng_b).unwrap()).unwrap();
            mean_rotated += w.as_array()[[0, 0]].norm();
        }
        mean_plain /= samples as f64;
        mean_rotated /= samples as f64;
        assert!((mean_plain - mean_rotated).abs() < 0.02);
    }

    #[test]
    fn embed_identity_block_is_identity() {
        let t = ComplexMatrix::identity(2);
        let e = embed_two_mode(3, 1, &t).unwrap();
        assert_eq!(e, ComplexMatrix::identity(3));
    }

    #[test]
    fn embed_swap_block_is_permutation() {
        let t = ComplexMatrix::new(array![
            [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
            [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]
        ])
        .unwrap();
        let e = embed_two_mode(4, 1, &t).unwrap();
        let a = e.as_array();
        assert_eq!(a[[0, 0]], Complex64::new(1.0, 0.0));
        assert_eq!(a[[1, 2]], Complex64::new(1.0, 0.0));
        assert_eq!(a[[2, 1]], Complex64::new(1.0, 0.0));
        assert_eq!(a[[3, 3]], Complex64::new(1.0, 0.0));
        assert_eq!(a[[1, 1]], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn embed_n2_is_the_block_itself() {
        let u = haar_random_unitary(2, 1).unwrap();
        let e = embed_two_mode(2, 0, u.matrix()).unwrap();
        assert_eq!(&e, u.matrix());
    }

    #[test]
    fn embed_rejects_out_of_range() {
        let t = ComplexMatrix::identity(2);
        assert!(embed_two_mode(4, 3, &t).is_err());
        assert!(embed_two_mode(1, 0, &t).is_err());
    }

    #[test]
    fn embed_preserves_unitarity() {
        let u = haar_random_unitary(2, 77).unwrap();
        let e = embed_two_mode(6, 2, u.matrix()).unwrap();
        assert!(unitarity_defect(&e).unwrap() <= 1e-12);
    }

    #[test]
    fn matrix_json_round_trip() {
        let u = haar_random_unitary(3, 21).unwrap();
        let text = serde_json::to_string(u.matrix()).unwrap();
        assert!(text.contains("\"rows\":3"));
        let back: ComplexMatrix = serde_json::from_str(&text).unwrap();
        assert_eq!(&back, u.matrix());
    }

    #[test]
    fn unitary_deserialize_rejects_non_unitary() {
        let m = ComplexMatrix::new(array![
            [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
            [Complex64::new(0.0, 0.0), Complex64::new(2.0, 0.0)]
        ])
        .unwrap();
        let text = serde_json::to_string(&m).unwrap();
        assert!(serde_json::from_str::<Unitary>(&text).is_err());
    }
}
