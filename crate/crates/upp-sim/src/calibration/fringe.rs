//! Interference-fringe fitting: recovers the power needed for a 2π phase
//! shift (and the phase offset) from intensity-vs-power scans of a single
//! heater.

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::device::Device;
use crate::error::{Error, Result};
use crate::thermal::PowerVector;

/// Minimum fitted visibility below which a scan is declared degenerate.
pub const MIN_VISIBILITY: f64 = 0.05;

/// Intensity samples measured while sweeping one heater's power.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FringeScan {
    pub heater: usize,
    /// `(power mW, intensity)` pairs.
    pub samples: Vec<(f64, f64)>,
}

impl FringeScan {
    pub fn new(heater: usize, samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.len() < 8 {
            return Err(Error::InvalidArgument(format!(
                "a fringe scan needs at least 8 samples, got {}",
                samples.len()
            )));
        }
        for &(p, i) in &samples {
            if !p.is_finite() || !i.is_finite() {
                return Err(Error::NonFinite("fringe samples".into()));
            }
            if p < 0.0 {
                return Err(Error::InvalidArgument(format!("negative scan power {p} mW")));
            }
        }
        let scan = Self { heater, samples };
        if scan.span() <= 0.0 {
            return Err(Error::InvalidArgument("scan powers must not be constant".into()));
        }
        Ok(scan)
    }

    /// Power range covered by the scan.
    pub fn span(&self) -> f64 {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &(p, _) in &self.samples {
            lo = lo.min(p);
            hi = hi.max(p);
        }
        hi - lo
    }
}

/// Result of a cosine fringe fit `I(P) = A + B·cos(2π·P/p2pi + φ0)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FringeFit {
    pub heater: usize,
    /// Power for a full 2π phase shift, in mW.
    pub p2pi_mw: f64,
    /// Phase offset at zero power, in radians.
    pub phase_offset_rad: f64,
    /// Fringe visibility `B/A`.
    pub visibility: f64,
    /// RMS of the fit residual.
    pub residual_rms: f64,
    pub mean_intensity: f64,
    pub amplitude: f64,
}

impl FringeFit {
    /// Smallest nonnegative scan power maximizing the fitted fringe.
    pub fn power_at_maximum(&self) -> f64 {
        // cos(ωP + φ0) = 1  ⇔  P = p2pi·(−φ0/2π mod 1)
        self.p2pi_mw * (-self.phase_offset_rad).rem_euclid(TAU) / TAU
    }
}

/// Linear least squares for `(A, a, b)` in `I ≈ A + a·cos(ωP) + b·sin(ωP)`
/// at fixed angular frequency ω (rad/mW). Returns the coefficients and RSS.
fn linear_fit(samples: &[(f64, f64)], omega: f64) -> ([f64; 3], f64) {
    let mut ata = [[0.0f64; 3]; 3];
    let mut atb = [0.0f64; 3];
    for &(p, intensity) in samples {
        let row = [1.0, (omega * p).cos(), (omega * p).sin()];
        for r in 0..3 {
            for c in 0..3 {
                ata[r][c] += row[r] * row[c];
            }
            atb[r] += row[r] * intensity;
        }
    }
    // 3x3 Gaussian elimination with partial pivoting.
    let mut m = ata;
    let mut v = atb;
    for k in 0..3 {
        let mut piv = k;
        for r in (k + 1)..3 {
            if m[r][k].abs() > m[piv][k].abs() {
                piv = r;
            }
        }
        m.swap(k, piv);
        v.swap(k, piv);
        let d = m[k][k];
        if d.abs() < 1e-300 {
            return ([0.0; 3], f64::INFINITY);
        }
        for r in 0..3 {
            if r != k {
                let f = m[r][k] / d;
                for c in 0..3 {
                    m[r][c] -= f * m[k][c];
                }
                v[r] -= f * v[k];
            }
        }
    }
    let coef = [v[0] / m[0][0], v[1] / m[1][1], v[2] / m[2][2]];
    let mut rss = 0.0;
    for &(p, intensity) in samples {
        let model = coef[0] + coef[1] * (omega * p).cos() + coef[2] * (omega * p).sin();
        rss += (model - intensity).powi(2);
    }
    (coef, rss)
}

/// Gauss-Newton polish of `(A, a, b, ω)` from a good starting point.
fn polish(samples: &[(f64, f64)], mut coef: [f64; 3], mut omega: f64) -> ([f64; 3], f64) {
    for _ in 0..6 {
        let mut jtj = [[0.0f64; 4]; 4];
        let mut jtr = [0.0f64; 4];
        for &(p, intensity) in samples {
            let (s, c) = (omega * p).sin_cos();
            let r = coef[0] + coef[1] * c + coef[2] * s - intensity;
            let row = [1.0, c, s, p * (-coef[1] * s + coef[2] * c)];
            for i in 0..4 {
                for j in 0..4 {
                    jtj[i][j] += row[i] * row[j];
                }
                jtr[i] += row[i] * r;
            }
        }
        for (i, col) in jtj.iter_mut().enumerate() {
            col[i] += 1e-12;
        }
        // Solve the 4x4 step.
        let mut m = jtj;
        let mut v = jtr;
        let mut ok = true;
        for k in 0..4 {
            let mut piv = k;
            for r in (k + 1)..4 {
                if m[r][k].abs() > m[piv][k].abs() {
                    piv = r;
                }
            }
            m.swap(k, piv);
            v.swap(k, piv);
            if m[k][k].abs() < 1e-300 {
                ok = false;
                break;
            }
            for r in 0..4 {
                if r != k {
                    let f = m[r][k] / m[k][k];
                    for c in 0..4 {
                        m[r][c] -= f * m[k][c];
                    }
                    v[r] -= f * v[k];
                }
            }
        }
        if !ok {
            break;
        }
        let step: Vec<f64> = (0..4).map(|k| v[k] / m[k][k]).collect();
        coef[0] -= step[0];
        coef[1] -= step[1];
        coef[2] -= step[2];
        omega -= step[3];
        if !omega.is_finite() || omega <= 0.0 {
            return (coef, f64::NAN);
        }
        if step.iter().all(|s| s.abs() < 1e-14) {
            break;
        }
    }
    (coef, omega)
}

/// Fits the MZI fringe law to a scan.
///
/// Frequency is searched on a grid dense enough to resolve one phase wrap
/// across the scan, refined by Gauss–Newton. Fails loudly on scans with
/// visibility below [`MIN_VISIBILITY`] or a period longer than the scan
/// span (period not bracketed) — no silent defaults.
pub fn fit_fringe(scan: &FringeScan) -> Result<FringeFit> {
    let samples = &scan.samples;
    let span = scan.span();
    let n = samples.len() as f64;

    // Resolvable period range: at least ~2.5 samples per period, and the
    // span must bracket a full period. The grid extends slightly past the
    // bracket limit so the boundary case still converges, then the fitted
    // period is checked.
    let mean_gap = span / (n - 1.0);
    let omega_min = TAU / (1.25 * span);
    let omega_max = TAU / (2.5 * mean_gap);
    if omega_max <= omega_min {
        return Err(Error::DegenerateScan(
            "too few samples to resolve any period within the scan span".into(),
        ));
    }
    let step = std::f64::consts::PI / (8.0 * span);
    let candidates = ((omega_max - omega_min) / step).ceil() as usize + 1;

    let mut best = (f64::INFINITY, omega_min, [0.0f64; 3]);
    for k in 0..candidates {
        let omega = omega_min + step * k as f64;
        let (coef, rss) = linear_fit(samples, omega);
        if rss < best.0 {
            best = (rss, omega, coef);
        }
    }
    let (coef, omega) = polish(samples, best.2, best.1);
    let (coef, omega) = if omega.is_finite() { (coef, omega) } else { (best.2, best.1) };

    let mean = coef[0];
    let amplitude = coef[1].hypot(coef[2]);
    let visibility = if mean.abs() > 1e-12 { amplitude / mean.abs() } else { 0.0 };
    if visibility < MIN_VISIBILITY || amplitude < 1e-12 {
        return Err(Error::DegenerateScan(format!(
            "visibility {visibility:.4} below {MIN_VISIBILITY}"
        )));
    }
    let p2pi = TAU / omega;
    if p2pi > span * 1.02 {
        return Err(Error::DegenerateScan(format!(
            "fitted period {p2pi:.2} mW exceeds the {span:.2} mW scan span (period not bracketed)"
        )));
    }
    let mut rss = 0.0;
    for &(p, intensity) in samples {
        let model = coef[0] + coef[1] * (omega * p).cos() + coef[2] * (omega * p).sin();
        rss += (model - intensity).powi(2);
    }
    Ok(FringeFit {
        heater: scan.heater,
        p2pi_mw: p2pi,
        phase_offset_rad: (-coef[2]).atan2(coef[1]),
        visibility,
        residual_rms: (rss / n).sqrt(),
        mean_intensity: mean,
        amplitude,
    })
}

/// Sweeps one heater on a live device and records the intensity seen at
/// `monitor_port` for light injected at `input_port`.
pub fn scan_fringe(
    device: &mut Device,
    heater: usize,
    input_port: usize,
    monitor_port: usize,
    base_powers: &PowerVector,
    n_points: usize,
    max_scan_mw: f64,
) -> Result<FringeScan> {
    if heater >= device.n_heaters() {
        return Err(Error::InvalidArgument(format!(
            "heater {heater} out of range for {} heaters",
            device.n_heaters()
        )));
    }
    if monitor_port >= device.n_modes() {
        return Err(Error::InvalidArgument(format!(
            "monitor port {monitor_port} out of range for {} modes",
            device.n_modes()
        )));
    }
    if n_points < 8 {
        return Err(Error::InvalidArgument("a scan needs at least 8 points".into()));
    }
    if max_scan_mw <= 0.0 || max_scan_mw > device.max_power_mw() {
        return Err(Error::InvalidArgument(format!(
            "scan limit {max_scan_mw} mW outside (0, {}]",
            device.max_power_mw()
        )));
    }
    let mut samples = Vec::with_capacity(n_points);
    for k in 0..n_points {
        let p = max_scan_mw * k as f64 / (n_points - 1) as f64;
        let mut powers = base_powers.clone();
        powers.set(heater, p)?;
        let (dist, _) = device.measure_output_distribution(input_port, &powers)?;
        samples.push((p, dist[monitor_port]));
    }
    FringeScan::new(heater, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn synthetic_scan(p2pi: f64, phase: f64, noise: f64, points: usize, seed: u64) -> FringeScan {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = (0..points)
            .map(|k| {
                let p = 60.0 * k as f64 / (points - 1) as f64;
                let clean = 0.5 + 0.4 * (TAU * p / p2pi + phase).cos();
                let noisy = clean * (1.0 + noise * (rng.random::<f64>() * 2.0 - 1.0));
                (p, noisy)
            })
            .collect();
        FringeScan::new(0, samples).unwrap()
    }

    #[test]
    fn noiseless_fringe_recovers_p2pi_exactly() {
        let scan = synthetic_scan(46.0, 0.8, 0.0, 30, 0);
        let fit = fit_fringe(&scan).unwrap();
        assert!((fit.p2pi_mw - 46.0).abs() < 1e-6, "p2pi {}", fit.p2pi_mw);
        assert!(
            crate::mesh::circular_distance(fit.phase_offset_rad, 0.8) < 1e-6,
            "offset {}",
            fit.phase_offset_rad
        );
        assert!((fit.visibility - 0.8).abs() < 1e-6);
        assert!(fit.residual_rms < 1e-9);
    }

    #[test]
    fn constant_intensity_is_degenerate() {
        let samples: Vec<(f64, f64)> = (0..20).map(|k| (3.0 * k as f64, 0.7)).collect();
        let scan = FringeScan::new(1, samples).unwrap();
        match fit_fringe(&scan) {
            Err(Error::DegenerateScan(_)) => {}
            other => panic!("expected degenerate scan, got {other:?}"),
        }
    }

    #[test]
    fn unbracketed_period_is_rejected() {
        // True period 150 mW, scan span only 60 mW.
        let scan = synthetic_scan(150.0, 0.3, 0.0, 30, 0);
        assert!(fit_fringe(&scan).is_err());
    }

    #[test]
    fn noisy_fringe_stays_within_one_percent() {
        let mut hits = 0;
        for trial in 0..100 {
            let scan = synthetic_scan(46.0, 1.9, 0.02, 30, trial);
            let fit = fit_fringe(&scan).unwrap();
            if (fit.p2pi_mw - 46.0).abs() / 46.0 <= 0.01 {
                hits += 1;
            }
        }
        assert!(hits >= 95, "only {hits}/100 trials within 1 %");
    }

    #[test]
    fn power_at_maximum_is_the_crest() {
        let scan = synthetic_scan(46.0, 2.4, 0.0, 40, 0);
        let fit = fit_fringe(&scan).unwrap();
        let p = fit.power_at_maximum();
        assert!((0.0..=46.0).contains(&p));
        let value = fit.mean_intensity
            + fit.amplitude * (TAU * p / fit.p2pi_mw + fit.phase_offset_rad).cos();
        assert!((value - (fit.mean_intensity + fit.amplitude)).abs() < 1e-9);
    }

    #[test]
    fn scan_needs_enough_samples() {
        let samples: Vec<(f64, f64)> = (0..5).map(|k| (k as f64, 0.5)).collect();
        assert!(FringeScan::new(0, samples).is_err());
    }
}
