//! Power-to-phase model of the microheaters: static offsets, linear
//! power response and sparse thermal crosstalk, plus the crosstalk-aware
//! inverse (phases → nonnegative powers under a per-heater budget).
//!
//! Forward law per heater: `θ_i = θ0_i + (2π / P2π_i)·P_i + Σ_{j≠i} c_ij·P_j`,
//! linear in dissipated power (not current).

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::linalg::LuFactors;
use crate::mesh::{wrap_phase, PhaseVector};

/// Sparse crosstalk entry: phase induced on heater `i` per milliwatt
/// dissipated on heater `j`, in rad/mW.
pub type CrosstalkEntry = (usize, usize, f64);

/// Per-heater thermal parameters.
///
/// Serializes to the device-file schema
/// `{"n_heaters", "theta0", "p2pi_mw", "xtalk", "max_power_mw"}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ThermalModelRepr", into = "ThermalModelRepr")]
pub struct ThermalModel {
    n_heaters: usize,
    theta0: Vec<f64>,
    p2pi_mw: Vec<f64>,
    crosstalk: Vec<CrosstalkEntry>,
    max_power_mw: f64,
    window: usize,
}

#[derive(Serialize, Deserialize)]
struct ThermalModelRepr {
    n_heaters: usize,
    theta0: Vec<f64>,
    p2pi_mw: Vec<f64>,
    xtalk: Vec<CrosstalkEntry>,
    max_power_mw: f64,
}

impl From<ThermalModel> for ThermalModelRepr {
    fn from(m: ThermalModel) -> Self {
        Self {
            n_heaters: m.n_heaters,
            theta0: m.theta0,
            p2pi_mw: m.p2pi_mw,
            xtalk: m.crosstalk,
            max_power_mw: m.max_power_mw,
        }
    }
}

impl TryFrom<ThermalModelRepr> for ThermalModel {
    type Error = Error;

    fn try_from(r: ThermalModelRepr) -> Result<Self> {
        ThermalModel::new(r.theta0, r.p2pi_mw, r.xtalk, r.max_power_mw)
    }
}

impl ThermalModel {
    /// Builds and validates a model. Crosstalk entries must be off-diagonal,
    /// in range, weaker than self-heating (`|c_ij| ≤ 2π/P2π_j`) and form
    /// uniform rows: every heater couples to the same number of neighbors.
    pub fn new(
        theta0: Vec<f64>,
        p2pi_mw: Vec<f64>,
        mut crosstalk: Vec<CrosstalkEntry>,
        max_power_mw: f64,
    ) -> Result<Self> {
        let n = theta0.len();
        if p2pi_mw.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{} theta0 entries but {} p2pi entries",
                n,
                p2pi_mw.len()
            )));
        }
        if n == 0 {
            return Err(Error::InvalidArgument("model needs at least one heater".into()));
        }
        if theta0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("theta0".into()));
        }
        if p2pi_mw.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::InvalidArgument("p2pi must be positive and finite".into()));
        }
        if !max_power_mw.is_finite() || max_power_mw <= 0.0 {
            return Err(Error::InvalidArgument("max power must be positive".into()));
        }
        let mut row_support = vec![0usize; n];
        for &(i, j, c) in &crosstalk {
            if i >= n || j >= n {
                return Err(Error::InvalidArgument(format!(
                    "crosstalk index ({i}, {j}) out of range for {n} heaters"
                )));
            }
            if i == j {
                return Err(Error::InvalidArgument(format!(
                    "crosstalk diagonal ({i}, {i}) is not stored; self-effect lives in p2pi"
                )));
            }
            if !c.is_finite() {
                return Err(Error::NonFinite("crosstalk coefficient".into()));
            }
            if c.abs() > TAU / p2pi_mw[j] + 1e-12 {
                return Err(Error::InvalidArgument(format!(
                    "crosstalk c[{i}][{j}] = {c} stronger than self-heating of heater {j}"
                )));
            }
            row_support[i] += 1;
        }
        let window = row_support.iter().copied().max().unwrap_or(0);
        if n * window != crosstalk.len() {
            return Err(Error::InvalidArgument(format!(
                "ragged crosstalk rows: {} entries cannot form uniform width-{window} rows over {n} heaters",
                crosstalk.len()
            )));
        }
        crosstalk.sort_unstable_by_key(|&(i, j, _)| (i, j));
        Ok(Self { n_heaters: n, theta0, p2pi_mw, crosstalk, max_power_mw, window })
    }

    /// Crosstalk-free model.
    pub fn without_crosstalk(theta0: Vec<f64>, p2pi_mw: Vec<f64>, max_power_mw: f64) -> Result<Self> {
        Self::new(theta0, p2pi_mw, Vec::new(), max_power_mw)
    }

    pub fn n_heaters(&self) -> usize {
        self.n_heaters
    }

    pub fn theta0(&self) -> &[f64] {
        &self.theta0
    }

    pub fn p2pi_mw(&self) -> &[f64] {
        &self.p2pi_mw
    }

    pub fn crosstalk(&self) -> &[CrosstalkEntry] {
        &self.crosstalk
    }

    pub fn max_power_mw(&self) -> f64 {
        self.max_power_mw
    }

    /// Neighbor-window width: crosstalk entries per row.
    pub fn window(&self) -> usize {
        self.window
    }

    /// rad/mW slope of heater `i`.
    pub fn slope(&self, i: usize) -> f64 {
        TAU / self.p2pi_mw[i]
    }

    /// Crosstalk sparsity pattern for `n_heaters` heaters and window `w`:
    /// heater `i` couples to the `w` nearest indices (a contiguous window
    /// shifted inward at the edges), so the entry count is exactly
    /// `n_heaters · w`.
    pub fn window_pattern(n_heaters: usize, w: usize) -> Result<Vec<(usize, usize)>> {
        if w >= n_heaters {
            return Err(Error::InvalidArgument(format!(
                "window {w} must be smaller than heater count {n_heaters}"
            )));
        }
        let mut pairs = Vec::with_capacity(n_heaters * w);
        for i in 0..n_heaters {
            let start = i.saturating_sub(w / 2).min(n_heaters - w - 1);
            let mut j = start;
            let mut taken = 0;
            while taken < w {
                if j != i {
                    pairs.push((i, j));
                    taken += 1;
                }
                j += 1;
            }
        }
        Ok(pairs)
    }
}

/// Per-heater dissipated electrical power in milliwatts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerVector(Vec<f64>);

impl PowerVector {
    pub fn new(powers: Vec<f64>) -> Result<Self> {
        if powers.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("power vector".into()));
        }
        if let Some(idx) = powers.iter().position(|p| *p < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "negative power {} mW on heater {idx}",
                powers[idx]
            )));
        }
        Ok(Self(powers))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, idx: usize) -> f64 {
        self.0[idx]
    }

    pub fn set(&mut self, idx: usize, value_mw: f64) -> Result<()> {
        if !value_mw.is_finite() || value_mw < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "power must be finite and nonnegative, got {value_mw}"
            )));
        }
        self.0[idx] = value_mw;
        Ok(())
    }
}

impl From<PowerVector> for Vec<f64> {
    fn from(v: PowerVector) -> Self {
        v.0
    }
}

/// Total dissipated power in milliwatts.
pub fn total_power(powers: &PowerVector) -> f64 {
    powers.as_slice().iter().sum()
}

/// Forward thermal law: per-heater phases for the given powers.
pub fn phases_from_powers(model: &ThermalModel, powers: &PowerVector) -> Result<PhaseVector> {
    if powers.len() != model.n_heaters() {
        return Err(Error::ShapeMismatch(format!(
            "{} powers for {} heaters",
            powers.len(),
            model.n_heaters()
        )));
    }
    if let Some(idx) = powers
        .as_slice()
        .iter()
        .position(|p| *p > model.max_power_mw() + 1e-9)
    {
        return Err(Error::InvalidArgument(format!(
            "power {} mW on heater {idx} exceeds the {} mW limit",
            powers.get(idx),
            model.max_power_mw()
        )));
    }
    let mut phases: Vec<f64> = (0..model.n_heaters())
        .map(|i| model.theta0[i] + model.slope(i) * powers.get(i))
        .collect();
    for &(i, j, c) in model.crosstalk() {
        phases[i] += c * powers.get(j);
    }
    PhaseVector::new(phases)
}

/// Factored inverse of the power-to-phase map; build once per model and
/// reuse across many targets.
pub struct InverseSolver<'a> {
    model: &'a ThermalModel,
    lu: LuFactors,
}

impl<'a> InverseSolver<'a> {
    pub fn new(model: &'a ThermalModel) -> Result<Self> {
        let n = model.n_heaters();
        let mut m = Array2::zeros((n, n));
        for i in 0..n {
            m[[i, i]] = model.slope(i);
        }
        for &(i, j, c) in model.crosstalk() {
            m[[i, j]] = c;
        }
        Ok(Self { model, lu: LuFactors::new(m)? })
    }

    /// Nonnegative powers realizing `target` modulo 2π per heater.
    ///
    /// Starts from the minimal wrap of each heater's phase increment and
    /// re-wraps upward (or downward when a heater exceeds its budget) until
    /// the solution is feasible; with weak crosstalk this converges in a few
    /// rounds. Iteration cap: `4 × n_heaters`.
    pub fn solve(&self, target: &PhaseVector) -> Result<PowerVector> {
        let model = self.model;
        let n = model.n_heaters();
        if target.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{} target phases for {} heaters",
                target.len(),
                n
            )));
        }
        // Base increment in [0, 2π), then integer 2π wraps per heater.
        let base: Vec<f64> = (0..n)
            .map(|i| wrap_phase(target.get(i) - model.theta0[i]))
            .collect();
        let mut wraps = vec![0i64; n];
        let mut raised = vec![false; n];
        let cap = 4 * n;
        for _ in 0..cap {
            let rhs: Vec<f64> = (0..n)
                .map(|i| base[i] + TAU * wraps[i] as f64)
                .collect();
            let p = self.lu.solve(&rhs);
            let mut changed = false;
            let mut infeasible = Vec::new();
            for i in 0..n {
                if p[i] < -1e-12 {
                    if raised[i] && wraps[i] >= 1 {
                        // Already bounced off the budget once; window is empty.
                        infeasible.push(i);
                    } else {
                        wraps[i] += 1;
                        changed = true;
                    }
                } else if p[i] > model.max_power_mw() + 1e-12 {
                    if wraps[i] == 0 {
                        infeasible.push(i);
                    } else {
                        wraps[i] -= 1;
                        raised[i] = true;
                        changed = true;
                    }
                }
            }
            if !infeasible.is_empty() {
                return Err(Error::InfeasiblePowers {
                    heaters: infeasible,
                    reason: format!(
                        "required power outside [0, {}] mW for every 2π wrap",
                        model.max_power_mw()
                    ),
                });
            }
            if !changed {
                let clamped: Vec<f64> = p.iter().map(|v| v.max(0.0)).collect();
                return PowerVector::new(clamped);
            }
        }
        Err(Error::InfeasiblePowers {
            heaters: Vec::new(),
            reason: format!("wrap search did not converge within {cap} iterations"),
        })
    }
}

/// One-shot convenience wrapper over [`InverseSolver`].
pub fn powers_for_phases(model: &ThermalModel, target: &PhaseVector) -> Result<PowerVector> {
    if target.as_slice().iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("target phases".into()));
    }
    InverseSolver::new(model)?.solve(target)
}
