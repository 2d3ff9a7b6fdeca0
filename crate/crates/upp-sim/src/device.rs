//! Synthetic hardware: a processor with hidden ground-truth parameters,
//! measurement noise and facet losses. Calibration code is expected to go
//! through the measurement API only; the true parameters live in a sealed
//! section of the device file and behind an explicitly named accessor.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::{mesh_unitary, MeshLayout};
use crate::metrics::transmission_from_db;
use crate::thermal::{phases_from_powers, CrosstalkEntry, PowerVector, ThermalModel};
use crate::unitary::RNG_ALGORITHM;

pub const DEVICE_SCHEMA_VERSION: u32 = 1;
pub const DEVICE_FILE_KIND: &str = "upp-device";

/// Knobs for [`synth_device`]. Defaults follow the reference hardware:
/// couplers near 0.5, one turn near 46 mW, facet losses summing to 4.35 dB.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    /// Half-width of the uniform coupler imperfection around 0.5.
    pub coupler_delta: f64,
    /// Crosstalk strength: |c_ij| ≤ eps·(2π/46)/distance.
    pub crosstalk_eps: f64,
    /// Neighbor window per heater; `None` scales with the mode count.
    pub crosstalk_window: Option<usize>,
    /// Relative std-dev of the multiplicative amplitude noise.
    pub noise_sigma: f64,
    pub p2pi_mean_mw: f64,
    pub p2pi_sigma_mw: f64,
    /// Draw static phases uniformly in [0, 2π); zero them when false.
    pub random_theta0: bool,
    pub input_loss_db: f64,
    pub output_loss_db: f64,
    /// Explicit per-port overrides for the facet losses.
    pub input_loss_db_per_port: Option<Vec<f64>>,
    pub output_loss_db_per_port: Option<Vec<f64>>,
    pub max_power_mw: f64,
    /// Relative P2π drift per hour (0 disables the drift model).
    pub drift_rate_per_hour: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            coupler_delta: 0.05,
            crosstalk_eps: 0.05,
            crosstalk_window: None,
            noise_sigma: 0.01,
            p2pi_mean_mw: 46.0,
            p2pi_sigma_mw: 2.0,
            random_theta0: true,
            input_loss_db: 2.17,
            output_loss_db: 2.18,
            input_loss_db_per_port: None,
            output_loss_db_per_port: None,
            max_power_mw: 65.0,
            drift_rate_per_hour: 0.0,
        }
    }
}

impl SynthConfig {
    /// Ideal device: perfect couplers, no crosstalk, no noise, no loss,
    /// zero static phases, exact 46 mW per turn.
    pub fn ideal() -> Self {
        Self {
            coupler_delta: 0.0,
            crosstalk_eps: 0.0,
            noise_sigma: 0.0,
            p2pi_sigma_mw: 0.0,
            random_theta0: false,
            input_loss_db: 0.0,
            output_loss_db: 0.0,
            ..Self::default()
        }
    }

    fn validate(&self, n_modes: usize) -> Result<()> {
        if !(0.0..=0.5).contains(&self.coupler_delta) {
            return Err(Error::Config(format!(
                "coupler delta {} outside [0, 0.5]",
                self.coupler_delta
            )));
        }
        if !(0.0..=1.0).contains(&self.crosstalk_eps) {
            return Err(Error::Config(format!(
                "crosstalk eps {} outside [0, 1]",
                self.crosstalk_eps
            )));
        }
        if !(0.0..=0.2).contains(&self.noise_sigma) {
            return Err(Error::Config(format!(
                "noise sigma {} outside [0, 0.2]",
                self.noise_sigma
            )));
        }
        if self.p2pi_mean_mw <= 0.0 || self.p2pi_sigma_mw < 0.0 {
            return Err(Error::Config("p2pi distribution must be positive".into()));
        }
        if self.max_power_mw <= 0.0 {
            return Err(Error::Config("max power must be positive".into()));
        }
        if self.input_loss_db < 0.0 || self.output_loss_db < 0.0 {
            return Err(Error::Config("facet losses must be nonnegative dB".into()));
        }
        for (name, overrides) in [
            ("input", &self.input_loss_db_per_port),
            ("output", &self.output_loss_db_per_port),
        ] {
            if let Some(v) = overrides {
                if v.len() != n_modes {
                    return Err(Error::Config(format!(
                        "{name} loss overrides have {} entries for {n_modes} ports",
                        v.len()
                    )));
                }
                if v.iter().any(|db| *db < 0.0 || !db.is_finite()) {
                    return Err(Error::Config(format!("{name} losses must be nonnegative dB")));
                }
            }
        }
        if let Some(w) = self.crosstalk_window {
            if w + 1 > n_modes * n_modes {
                return Err(Error::Config(format!(
                    "crosstalk window {w} too wide for {} heaters",
                    n_modes * n_modes
                )));
            }
        }
        if self.drift_rate_per_hour < 0.0 {
            return Err(Error::Config("drift rate must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Hidden true parameters of a synthetic processor.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DeviceGroundTruth {
    pub layout: MeshLayout,
    pub thermal: ThermalModel,
    pub input_loss_db: Vec<f64>,
    pub output_loss_db: Vec<f64>,
    pub amplitude_noise_sigma: f64,
    pub drift_rate_per_hour: f64,
    pub seed: u64,
    pub rng_algorithm: String,
}

/// Draws a randomized ground truth, deterministic per seed.
///
/// Couplers uniform in `[0.5−δ, 0.5+δ]`; θ0 uniform in `[0, 2π)`; P2π
/// normal around the configured mean; crosstalk magnitudes bounded by
/// `eps·(2π/46)` and decaying with heater-index distance. The default
/// neighbor window equals the mode count, which reproduces the full-scale
/// coefficient count (576 heaters × 24 → 13824) and scales down with n.
pub fn synth_device(n_modes: usize, seed: u64, config: &SynthConfig) -> Result<DeviceGroundTruth> {
    config.validate(n_modes)?;
    let nominal = MeshLayout::standard(n_modes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let couplers: Vec<(f64, f64)> = (0..nominal.n_nodes())
        .map(|_| {
            let t1 = 0.5 + config.coupler_delta * (rng.random::<f64>() * 2.0 - 1.0);
            let t2 = 0.5 + config.coupler_delta * (rng.random::<f64>() * 2.0 - 1.0);
            (t1, t2)
        })
        .collect();
    let layout = nominal.with_couplers(&couplers)?;

    let n_heaters = layout.n_heaters();
    let theta0: Vec<f64> = (0..n_heaters)
        .map(|_| if config.random_theta0 { rng.random::<f64>() * TAU } else { 0.0 })
        .collect();
    let p2pi: Vec<f64> = (0..n_heaters)
        .map(|_| {
            let normal = Normal::new(config.p2pi_mean_mw, config.p2pi_sigma_mw.max(1e-12))
                .expect("valid normal");
            normal.sample(&mut rng).max(config.p2pi_mean_mw * 0.5)
        })
        .collect();

    let window = config
        .crosstalk_window
        .unwrap_or(n_modes)
        .min(n_heaters.saturating_sub(1));
    let crosstalk: Vec<CrosstalkEntry> = if config.crosstalk_eps > 0.0 && window > 0 {
        let bound = config.crosstalk_eps * TAU / 46.0;
        ThermalModel::window_pattern(n_heaters, window)?
            .into_iter()
            .map(|(i, j)| {
                let u = rng.random::<f64>() * 2.0 - 1.0;
                let dist = i.abs_diff(j) as f64;
                (i, j, u * bound / dist)
            })
            .collect()
    } else {
        Vec::new()
    };
    let thermal = ThermalModel::new(theta0, p2pi, crosstalk, config.max_power_mw)?;

    let input_loss_db = config
        .input_loss_db_per_port
        .clone()
        .unwrap_or_else(|| vec![config.input_loss_db; n_modes]);
    let output_loss_db = config
        .output_loss_db_per_port
        .clone()
        .unwrap_or_else(|| vec![config.output_loss_db; n_modes]);

    Ok(DeviceGroundTruth {
        layout,
        thermal,
        input_loss_db,
        output_loss_db,
        amplitude_noise_sigma: config.noise_sigma,
        drift_rate_per_hour: config.drift_rate_per_hour,
        seed,
        rng_algorithm: RNG_ALGORITHM.to_string(),
    })
}

/// One amplitude-only measurement: the applied powers and the observed
/// `|U_ij|` estimates. Phases are never observable.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub seq: u64,
    pub powers: PowerVector,
    pub amplitudes: Vec<Vec<f64>>,
}

impl MeasurementRecord {
    pub fn amplitude_matrix(&self) -> Array2<f64> {
        let n = self.amplitudes.len();
        let mut out = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                out[[i, j]] = self.amplitudes[i][j];
            }
        }
        out
    }
}

/// Per-input-port insertion loss summary.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InsertionLossReport {
    pub per_port_db: Vec<f64>,
    pub average_db: f64,
}

/// A simulated processor: hidden truth plus a measurement RNG stream.
///
/// Stateful (the noise stream and sequence counter advance per call), so a
/// single owner drives it; independent devices can run in parallel.
pub struct Device {
    truth: DeviceGroundTruth,
    rng: ChaCha8Rng,
    seq: u64,
    elapsed_hours: f64,
}

impl Device {
    pub fn new(truth: DeviceGroundTruth, measurement_seed: u64) -> Self {
        Self {
            truth,
            rng: ChaCha8Rng::seed_from_u64(measurement_seed),
            seq: 0,
            elapsed_hours: 0.0,
        }
    }

    pub fn n_modes(&self) -> usize {
        self.truth.layout.n_modes()
    }

    pub fn n_heaters(&self) -> usize {
        self.truth.layout.n_heaters()
    }

    pub fn max_power_mw(&self) -> f64 {
        self.truth.thermal.max_power_mw()
    }

    /// Nominal (ideal-coupler) topology; safe to share with calibration.
    pub fn nominal_layout(&self) -> MeshLayout {
        self.truth.layout.nominal()
    }

    pub fn topology_hash(&self) -> String {
        self.truth.layout.topology_hash()
    }

    /// Advances the drift clock.
    pub fn advance_hours(&mut self, hours: f64) {
        self.elapsed_hours += hours.max(0.0);
    }

    /// Deliberate escape hatch to the hidden parameters, for evaluation and
    /// oracle tests. Calibration pipelines must not call this.
    pub fn reveal_ground_truth(&self) -> &DeviceGroundTruth {
        &self.truth
    }

    /// Thermal model with the drift applied, if enabled.
    fn effective_thermal(&self) -> ThermalModel {
        let r = self.truth.drift_rate_per_hour;
        if r == 0.0 || self.elapsed_hours == 0.0 {
            return self.truth.thermal.clone();
        }
        let scale = 1.0 + r * self.elapsed_hours;
        let p2pi: Vec<f64> = self
            .truth
            .thermal
            .p2pi_mw()
            .iter()
            .map(|p| p * scale)
            .collect();
        ThermalModel::new(
            self.truth.thermal.theta0().to_vec(),
            p2pi,
            self.truth.thermal.crosstalk().to_vec(),
            self.truth.thermal.max_power_mw(),
        )
        .expect("scaled model stays valid")
    }

    fn noiseless_amplitudes(&self, powers: &PowerVector) -> Result<Array2<f64>> {
        let thermal = self.effective_thermal();
        let phases = phases_from_powers(&thermal, powers)?;
        let u = mesh_unitary(&self.truth.layout, &phases)?;
        Ok(u.amplitudes())
    }

    /// Sets the heater powers and reads back all `N×N` output amplitudes
    /// (laser into each input port, detector on every output port). Each
    /// amplitude picks up multiplicative Gaussian noise, clamped at zero.
    pub fn measure_amplitudes(&mut self, powers: &PowerVector) -> Result<MeasurementRecord> {
        let mut amps = self.noiseless_amplitudes(powers)?;
        let sigma = self.truth.amplitude_noise_sigma;
        if sigma > 0.0 {
            let normal = Normal::new(0.0, sigma).expect("valid sigma");
            for v in amps.iter_mut() {
                *v = (*v * (1.0 + normal.sample(&mut self.rng))).max(0.0);
            }
        }
        let n = self.n_modes();
        let amplitudes = (0..n)
            .map(|i| (0..n).map(|j| amps[[i, j]]).collect())
            .collect();
        let record = MeasurementRecord { seq: self.seq, powers: powers.clone(), amplitudes };
        self.seq += 1;
        Ok(record)
    }

    /// Normalized output power distribution for one input port, plus the
    /// absolute insertion loss (facet losses included) in dB.
    pub fn measure_output_distribution(
        &mut self,
        input_port: usize,
        powers: &PowerVector,
    ) -> Result<(Vec<f64>, f64)> {
        let n = self.n_modes();
        if input_port >= n {
            return Err(Error::InvalidArgument(format!(
                "input port {input_port} out of range for {n} modes"
            )));
        }
        let amps = self.noiseless_amplitudes(powers)?;
        let sigma = self.truth.amplitude_noise_sigma;
        let normal = Normal::new(0.0, sigma.max(1e-300)).expect("valid sigma");
        let t_in = transmission_from_db(self.truth.input_loss_db[input_port]);
        let mut raw = vec![0.0; n];
        for (out_port, slot) in raw.iter_mut().enumerate() {
            let t_out = transmission_from_db(self.truth.output_loss_db[out_port]);
            let mut a = amps[[out_port, input_port]];
            if sigma > 0.0 {
                a = (a * (1.0 + normal.sample(&mut self.rng))).max(0.0);
            }
            *slot = a * a * t_in * t_out;
        }
        self.seq += 1;
        let total: f64 = raw.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidArgument(
                "no detectable power at any output port".into(),
            ));
        }
        let distribution = raw.iter().map(|p| p / total).collect();
        Ok((distribution, -10.0 * total.log10()))
    }

    /// Per-input-port insertion loss with all heaters off, noise-free
    /// (the lab averages this measurement to arbitrary precision).
    pub fn insertion_loss_report(&self) -> Result<InsertionLossReport> {
        let n = self.n_modes();
        let amps = self.noiseless_amplitudes(&PowerVector::zeros(self.n_heaters()))?;
        let mut per_port_db = Vec::with_capacity(n);
        for input in 0..n {
            let t_in = transmission_from_db(self.truth.input_loss_db[input]);
            let mut total = 0.0;
            for output in 0..n {
                let t_out = transmission_from_db(self.truth.output_loss_db[output]);
                total += amps[[output, input]].powi(2) * t_in * t_out;
            }
            per_port_db.push(-10.0 * total.log10());
        }
        let average_db = per_port_db.iter().sum::<f64>() / n as f64;
        Ok(InsertionLossReport { per_port_db, average_db })
    }
}

// ---------------------------------------------------------------------
// Device files: public topology + sealed ground truth.
// ---------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct DeviceFile {
    schema_version: u32,
    kind: String,
    n_modes: usize,
    max_power_mw: f64,
    layout_hash: String,
    /// Nominal topology (ideal couplers) — everything calibration may see.
    layout: MeshLayout,
    /// Base64-encoded ground-truth JSON. Obscured, not secured: the point
    /// is that calibration code cannot read it by accident.
    sealed_ground_truth: String,
}

/// Writes a device file with the ground truth sealed away from casual eyes.
pub fn save_device(path: &Path, truth: &DeviceGroundTruth) -> Result<()> {
    use base64::Engine as _;
    let sealed = base64::engine::general_purpose::STANDARD
        .encode(serde_json::to_vec(truth)?);
    let file = DeviceFile {
        schema_version: DEVICE_SCHEMA_VERSION,
        kind: DEVICE_FILE_KIND.to_string(),
        n_modes: truth.layout.n_modes(),
        max_power_mw: truth.thermal.max_power_mw(),
        layout_hash: truth.layout.topology_hash(),
        layout: truth.layout.nominal(),
        sealed_ground_truth: sealed,
    };
    write_with_lock(path, &serde_json::to_vec_pretty(&file)?)
}

/// Loads a device file back into a runnable simulator.
pub fn load_device(path: &Path, measurement_seed: u64) -> Result<Device> {
    use base64::Engine as _;
    let text = std::fs::read(path)?;
    let file: DeviceFile = serde_json::from_slice(&text)?;
    if file.kind != DEVICE_FILE_KIND {
        return Err(Error::ArtifactMismatch(format!(
            "expected a {DEVICE_FILE_KIND} file, found kind {:?}",
            file.kind
        )));
    }
    if file.schema_version != DEVICE_SCHEMA_VERSION {
        return Err(Error::ArtifactMismatch(format!(
            "device schema version {} unsupported (expected {DEVICE_SCHEMA_VERSION})",
            file.schema_version
        )));
    }
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(file.sealed_ground_truth.as_bytes())
        .map_err(|e| Error::ArtifactMismatch(format!("sealed section corrupted: {e}")))?;
    let truth: DeviceGroundTruth = serde_json::from_slice(&bytes)?;
    if truth.layout.topology_hash() != file.layout_hash {
        return Err(Error::ArtifactMismatch(
            "layout hash does not match the sealed ground truth".into(),
        ));
    }
    Ok(Device::new(truth, measurement_seed))
}

/// Writes `bytes` to `path` under a `.lock` advisory file, failing if
/// another writer currently holds it.
pub(crate) fn write_with_lock(path: &Path, bytes: &[u8]) -> Result<()> {
    let lock_path = path.with_extension("lock");
    let lock = std::fs::OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(&lock_path);
    match lock {
        Ok(_) => {}
        Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::WouldBlock,
                format!("{} is locked by another writer", path.display()),
            )));
        }
        Err(e) => return Err(Error::Io(e)),
    }
    let result = (|| -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(bytes)?;
        f.write_all(b"\n")?;
        Ok(())
    })();
    let _ = std::fs::remove_file(&lock_path);
    result
}

/// Measurement log CSV: one row per record, columns
/// `seq, P_0..P_{H-1} (mW), A_0_0..A_{N-1}_{N-1}` (row-major amplitudes).
pub fn measurement_csv(records: &[MeasurementRecord]) -> String {
    let mut out = String::new();
    if records.is_empty() {
        return out;
    }
    let h = records[0].powers.len();
    let n = records[0].amplitudes.len();
    out.push_str("seq");
    for k in 0..h {
        out.push_str(&format!(",P_{k}"));
    }
    for i in 0..n {
        for j in 0..n {
            out.push_str(&format!(",A_{i}_{j}"));
        }
    }
    out.push('\n');
    for rec in records {
        out.push_str(&rec.seq.to_string());
        for k in 0..h {
            out.push_str(&format!(",{}", rec.powers.get(k)));
        }
        for row in &rec.amplitudes {
            for a in row {
                out.push_str(&format!(",{a}"));
            }
        }
        out.push('\n');
    }
    out
}
