//! Figures of merit: amplitude fidelity, extinction ratio, dB conversions.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reporting ceiling for extinction ratios when the leakage underflows.
pub const EXTINCTION_CEILING_DB: f64 = 60.0;

/// Overlap of two nonnegative amplitude patterns, in `[0, 1]`.
///
/// Both matrices are normalized columnwise (`Σ_i M_ij² = 1`) before the
/// elementwise overlap `F = (1/N)·Σ_ij T_ij·M_ij` is taken, so the metric
/// is invariant to per-column positive scaling and reaches 1 exactly when
/// the patterns match.
pub fn amplitude_fidelity(target: &Array2<f64>, measured: &Array2<f64>) -> Result<f64> {
    if target.dim() != measured.dim() {
        return Err(Error::ShapeMismatch(format!(
            "target is {:?} but measurement is {:?}",
            target.dim(),
            measured.dim()
        )));
    }
    let (rows, cols) = target.dim();
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument("empty amplitude matrix".into()));
    }
    let mut overlap = 0.0;
    for j in 0..cols {
        let mut norm_t = 0.0;
        let mut norm_m = 0.0;
        for i in 0..rows {
            let (t, m) = (target[[i, j]], measured[[i, j]]);
            if t < 0.0 || m < 0.0 || !t.is_finite() || !m.is_finite() {
                return Err(Error::InvalidArgument(
                    "amplitudes must be finite and nonnegative".into(),
                ));
            }
            norm_t += t * t;
            norm_m += m * m;
        }
        if norm_t == 0.0 || norm_m == 0.0 {
            return Err(Error::InvalidArgument(format!(
                "all-zero column {j} cannot be normalized"
            )));
        }
        let scale = (norm_t * norm_m).sqrt();
        let mut col = 0.0;
        for i in 0..rows {
            col += target[[i, j]] * measured[[i, j]];
        }
        overlap += col / scale;
    }
    Ok((overlap / cols as f64).min(1.0))
}

/// `10·log10(p_target / max_{k≠target} p_k)`, capped at the report ceiling.
pub fn extinction_ratio_db(distribution: &[f64], target_port: usize) -> Result<f64> {
    if distribution.is_empty() {
        return Err(Error::InvalidArgument("empty distribution".into()));
    }
    if target_port >= distribution.len() {
        return Err(Error::InvalidArgument(format!(
            "target port {target_port} out of range for {} ports",
            distribution.len()
        )));
    }
    if distribution.iter().any(|p| *p < 0.0 || !p.is_finite()) {
        return Err(Error::InvalidArgument("distribution must be nonnegative".into()));
    }
    let p_target = distribution[target_port];
    let worst_other = distribution
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != target_port)
        .map(|(_, p)| *p)
        .fold(0.0f64, f64::max);
    if worst_other <= 0.0 || p_target / worst_other > 1e6 {
        return Ok(EXTINCTION_CEILING_DB);
    }
    Ok((10.0 * (p_target / worst_other).log10()).min(EXTINCTION_CEILING_DB))
}

/// Loss in dB for a linear power transmission ratio.
pub fn db_from_transmission(t: f64) -> Result<f64> {
    if t <= 0.0 || !t.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "transmission must be positive, got {t}"
        )));
    }
    Ok(-10.0 * t.log10())
}

/// Linear power transmission ratio for a loss in dB.
pub fn transmission_from_db(db: f64) -> f64 {
    10f64.powf(-db / 10.0)
}

/// Summary statistics over per-target fidelities.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FidelityReport {
    pub per_target: Vec<f64>,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub std_dev: f64,
}

impl FidelityReport {
    pub fn from_values(per_target: Vec<f64>) -> Result<Self> {
        if per_target.is_empty() {
            return Err(Error::InvalidArgument("no fidelity values".into()));
        }
        if per_target.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::InvalidArgument("fidelity outside [0, 1]".into()));
        }
        let n = per_target.len() as f64;
        let mean = per_target.iter().sum::<f64>() / n;
        let min = per_target.iter().copied().fold(f64::INFINITY, f64::min);
        let max = per_target.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let var = per_target.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / n;
        Ok(Self { per_target, mean, min, max, std_dev: var.sqrt() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::unitary::haar_random_unitary;
    use ndarray::array;

    #[test]
    fn fidelity_of_identical_patterns_is_one() {
        let u = haar_random_unitary(6, 4).unwrap();
        let amps = u.amplitudes();
        let f = amplitude_fidelity(&amps, &amps).unwrap();
        assert!((f - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fidelity_of_disjoint_patterns_is_zero() {
        let identity = array![[1.0, 0.0], [0.0, 1.0]];
        let swap = array![[0.0, 1.0], [1.0, 0.0]];
        let f = amplitude_fidelity(&identity, &swap).unwrap();
        assert_eq!(f, 0.0);
    }

    #[test]
    fn fidelity_is_symmetric_and_scale_invariant() {
        let a = haar_random_unitary(5, 10).unwrap().amplitudes();
        let b = haar_random_unitary(5, 11).unwrap().amplitudes();
        let fab = amplitude_fidelity(&a, &b).unwrap();
        let fba = amplitude_fidelity(&b, &a).unwrap();
        assert!((fab - fba).abs() < 1e-12);
        let mut scaled = b.clone();
        for j in 0..5 {
            for i in 0..5 {
                scaled[[i, j]] *= 0.3 + j as f64;
            }
        }
        let fscaled = amplitude_fidelity(&a, &scaled).unwrap();
        assert!((fab - fscaled).abs() < 1e-12);
    }

    #[test]
    fn fidelity_of_independent_haar_pairs_near_quarter_pi() {
        // For independent Haar columns E[F] → π/4 as N grows; at N = 24 the
        // exact mean N·(E|u|)² ≈ 0.792. Checked by Monte Carlo.
        let n = 24;
        let mut acc = 0.0;
        let trials = 60;
        for k in 0..trials {
            let a = haar_random_unitary(n, 300 + k).unwrap().amplitudes();
            let b = haar_random_unitary(n, 9000 + k).unwrap().amplitudes();
            acc += amplitude_fidelity(&a, &b).unwrap();
        }
        let mean = acc / trials as f64;
        assert!(
            (mean - std::f64::consts::FRAC_PI_4).abs() < 0.02,
            "mean fidelity {mean}"
        );
    }

    #[test]
    fn fidelity_rejects_bad_inputs() {
        let a = array![[1.0, 0.0], [0.0, 1.0]];
        let wide = Array2::<f64>::zeros((2, 3));
        assert!(amplitude_fidelity(&a, &wide).is_err());
        let zero_col = array![[1.0, 0.0], [1.0, 0.0]];
        assert!(amplitude_fidelity(&a, &zero_col).is_err());
        let negative = array![[1.0, 0.0], [0.0, -1.0]];
        assert!(amplitude_fidelity(&a, &negative).is_err());
    }

    #[test]
    fn extinction_ratio_cases() {
        assert_eq!(extinction_ratio_db(&[1.0, 0.0, 0.0], 0).unwrap(), 60.0);
        let er = extinction_ratio_db(&[0.0039, 0.99, 0.002], 1).unwrap();
        assert!((er - 24.0).abs() < 0.1, "got {er}");
        let uniform = extinction_ratio_db(&[0.25; 4], 2).unwrap();
        assert!(uniform.abs() < 1e-12);
        assert!(extinction_ratio_db(&[], 0).is_err());
    }

    #[test]
    fn db_round_trip() {
        assert_eq!(db_from_transmission(1.0).unwrap(), 0.0);
        assert!((db_from_transmission(0.5).unwrap() - 3.0103).abs() < 1e-4);
        // 4.35 dB ↔ 0.3673 transmission.
        assert!((transmission_from_db(4.35) - 0.3673).abs() < 1e-4);
        for k in 1..=12 {
            let t = 10f64.powf(-(k as f64) / 2.0);
            let back = transmission_from_db(db_from_transmission(t).unwrap());
            assert!((t - back).abs() <= 1e-12 * t.max(1.0));
        }
        assert!(db_from_transmission(0.0).is_err());
        assert!(db_from_transmission(-0.2).is_err());
    }

    #[test]
    fn fidelity_report_statistics() {
        let report = FidelityReport::from_values(vec![0.9, 1.0, 0.8]).unwrap();
        assert!((report.mean - 0.9).abs() < 1e-12);
        assert_eq!(report.min, 0.8);
        assert_eq!(report.max, 1.0);
        assert!(FidelityReport::from_values(vec![]).is_err());
        assert!(FidelityReport::from_values(vec![1.2]).is_err());
    }
}
