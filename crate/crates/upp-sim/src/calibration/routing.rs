//! Routing optimization: steer light from one input port to one output
//! port by coordinate ascent over the MZIs along the geometric route,
//! fitting an interference fringe per heater scan. The fringe fits double
//! as the first P2π estimates of the calibration pipeline.

use serde::{Deserialize, Serialize};

use super::fringe::{fit_fringe, scan_fringe, FringeFit};
use crate::device::Device;
use crate::error::{Error, Result};
use crate::metrics::extinction_ratio_db;
use crate::thermal::PowerVector;

/// Knobs for [`optimize_routing`].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoutingOptions {
    /// Pass cap for the coordinate ascent.
    pub max_passes: usize,
    /// Stop once a full pass improves the extinction by less than this.
    pub min_improvement_db: f64,
    pub scan_points: usize,
    /// Scan ceiling in mW; `None` uses min(60, device limit).
    pub scan_max_mw: Option<f64>,
}

impl Default for RoutingOptions {
    fn default() -> Self {
        Self {
            max_passes: 10,
            min_improvement_db: 0.01,
            scan_points: 24,
            scan_max_mw: None,
        }
    }
}

/// Outcome of a routing optimization.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RoutingResult {
    pub input_port: usize,
    pub output_port: usize,
    pub powers: PowerVector,
    pub extinction_db: f64,
    /// Latest successful fringe fit per route heater.
    pub fringe_fits: Vec<FringeFit>,
    pub passes: usize,
    /// False when the pass cap was hit before the improvement threshold.
    pub converged: bool,
}

impl RoutingResult {
    /// Mean fitted P2π across the route, the natural seed for model fits.
    pub fn mean_p2pi_mw(&self) -> Option<f64> {
        if self.fringe_fits.is_empty() {
            return None;
        }
        Some(self.fringe_fits.iter().map(|f| f.p2pi_mw).sum::<f64>() / self.fringe_fits.len() as f64)
    }
}

/// θ heaters of the MZIs met when walking the mesh from `input` toward
/// `output`, in layer order.
fn route_theta_heaters(device: &Device, input: usize, output: usize) -> Result<Vec<usize>> {
    let layout = device.nominal_layout();
    let n = layout.n_modes();
    if input >= n || output >= n {
        return Err(Error::InvalidArgument(format!(
            "ports ({input}, {output}) out of range for {n} modes"
        )));
    }
    let mut heaters = Vec::new();
    let mut cur = input;
    for layer in 0..layout.n_layers() {
        // The node touching `cur` in this layer, if any.
        let node_idx = layout
            .node_at(layer, cur)
            .or_else(|| cur.checked_sub(1).and_then(|m| layout.node_at(layer, m)));
        let Some(node_idx) = node_idx else { continue };
        let node = &layout.nodes()[node_idx];
        heaters.push(node.theta_heater);
        // Cross toward the output when it makes progress, otherwise bar.
        if output > cur && node.top_mode == cur {
            cur += 1;
        } else if output < cur && node.top_mode + 1 == cur {
            cur -= 1;
        }
    }
    if cur != output {
        return Err(Error::InvalidArgument(format!(
            "no monotone route from port {input} to port {output} on this layout"
        )));
    }
    Ok(heaters)
}

/// Coordinate ascent on the θ heaters along the route: scan each heater,
/// fit the fringe and park it on the transmission maximum; repeat passes
/// until the extinction gain drops below the threshold. Heaters whose
/// fringe is flat (not yet on the light path) are skipped and retried in
/// the next pass.
pub fn optimize_routing(
    device: &mut Device,
    input_port: usize,
    output_port: usize,
    options: &RoutingOptions,
) -> Result<RoutingResult> {
    let heaters = route_theta_heaters(device, input_port, output_port)?;
    let scan_max = options
        .scan_max_mw
        .unwrap_or_else(|| device.max_power_mw().min(60.0));
    if scan_max <= 0.0 || scan_max > device.max_power_mw() {
        return Err(Error::InvalidArgument(format!(
            "scan ceiling {scan_max} mW outside (0, {}]",
            device.max_power_mw()
        )));
    }

    let mut powers = PowerVector::zeros(device.n_heaters());
    let mut fits: Vec<Option<FringeFit>> = vec![None; device.n_heaters()];
    let mut previous_extinction = f64::NEG_INFINITY;
    let mut extinction = f64::NEG_INFINITY;
    let mut converged = false;
    let mut passes = 0;

    for pass in 0..options.max_passes {
        passes = pass + 1;
        for &heater in &heaters {
            let scan = scan_fringe(
                device,
                heater,
                input_port,
                output_port,
                &powers,
                options.scan_points,
                scan_max,
            )?;
            match fit_fringe(&scan) {
                Ok(fit) => {
                    powers.set(heater, fit.power_at_maximum())?;
                    fits[heater] = Some(fit);
                }
                // Flat fringe: the MZI sees no light yet. Leave it for the
                // next pass.
                Err(Error::DegenerateScan(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        let (dist, _) = device.measure_output_distribution(input_port, &powers)?;
        extinction = extinction_ratio_db(&dist, output_port)?;
        if extinction - previous_extinction < options.min_improvement_db {
            converged = true;
            break;
        }
        previous_extinction = extinction;
    }

    Ok(RoutingResult {
        input_port,
        output_port,
        powers,
        extinction_db: extinction,
        fringe_fits: fits.into_iter().flatten().collect(),
        passes,
        converged,
    })
}
