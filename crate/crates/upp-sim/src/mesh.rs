//! Rectangular MZI mesh: topology, transfer matrices, composition and
//! unitary-to-phase decomposition.
//!
//! Conventions (fixed once, everything downstream depends on them):
//!
//! * coupler: `C(t) = [[√t, i√(1−t)], [i√(1−t), √t]]`, ideal `t = 0.5`;
//! * one MZI: `T(φ, θ) = C(t2) · P(θ) · C(t1) · P_ext(φ)` with
//!   `P(θ) = diag(e^{iθ}, 1)` on the top internal arm and
//!   `P_ext(φ) = diag(e^{iφ}, 1)` on the top input;
//! * for ideal couplers `|T_00|² = sin²(θ/2)`, the fringe law used by
//!   calibration;
//! * the mesh applies layer 0 first (inputs on the left), then an output
//!   phase screen `diag(e^{iφ_k})`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::unitary::{ComplexMatrix, Unitary};

/// Ideal coupler power transmissivity.
pub const IDEAL_COUPLER: f64 = 0.5;

/// One MZI in the mesh, acting on modes `(top_mode, top_mode + 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MZINode {
    pub layer: usize,
    pub top_mode: usize,
    /// Heater index of the external phase φ.
    pub phi_heater: usize,
    /// Heater index of the internal phase θ.
    pub theta_heater: usize,
    /// Power transmissivity of the input coupler.
    pub t1: f64,
    /// Power transmissivity of the output coupler.
    pub t2: f64,
}

/// Rectangular mesh topology with explicit heater indexing.
///
/// Node `k` (layer-major order, top to bottom within a layer) owns heaters
/// `2k` (φ) and `2k + 1` (θ); the output phase screen, when present, owns
/// heaters `2·n_nodes + mode`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshLayout {
    n_modes: usize,
    nodes: Vec<MZINode>,
    has_output_phase_screen: bool,
}

impl MeshLayout {
    /// Universal rectangular layout: `n(n−1)/2` MZIs plus an output phase
    /// screen, all couplers ideal.
    pub fn standard(n_modes: usize) -> Result<Self> {
        if n_modes < 2 {
            return Err(Error::InvalidArgument(format!(
                "a mesh needs at least 2 modes, got {n_modes}"
            )));
        }
        let mut nodes = Vec::with_capacity(n_modes * (n_modes - 1) / 2);
        for layer in 0..n_modes {
            let mut top = layer % 2;
            while top + 1 < n_modes {
                let k = nodes.len();
                nodes.push(MZINode {
                    layer,
                    top_mode: top,
                    phi_heater: 2 * k,
                    theta_heater: 2 * k + 1,
                    t1: IDEAL_COUPLER,
                    t2: IDEAL_COUPLER,
                });
                top += 2;
            }
        }
        debug_assert_eq!(nodes.len(), n_modes * (n_modes - 1) / 2);
        Ok(Self { n_modes, nodes, has_output_phase_screen: true })
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn nodes(&self) -> &[MZINode] {
        &self.nodes
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Directional couplers, two per MZI.
    pub fn n_couplers(&self) -> usize {
        2 * self.nodes.len()
    }

    pub fn has_output_phase_screen(&self) -> bool {
        self.has_output_phase_screen
    }

    pub fn n_heaters(&self) -> usize {
        2 * self.nodes.len() + if self.has_output_phase_screen { self.n_modes } else { 0 }
    }

    /// Heater index of the output screen phase on `mode`.
    pub fn screen_heater(&self, mode: usize) -> Option<usize> {
        if self.has_output_phase_screen && mode < self.n_modes {
            Some(2 * self.nodes.len() + mode)
        } else {
            None
        }
    }

    /// Index of the node at `(layer, top_mode)`, if present.
    pub fn node_at(&self, layer: usize, top_mode: usize) -> Option<usize> {
        self.nodes
            .iter()
            .position(|n| n.layer == layer && n.top_mode == top_mode)
    }

    pub fn n_layers(&self) -> usize {
        self.nodes.last().map_or(0, |n| n.layer + 1)
    }

    pub fn all_couplers_ideal(&self) -> bool {
        self.nodes
            .iter()
            .all(|n| n.t1 == IDEAL_COUPLER && n.t2 == IDEAL_COUPLER)
    }

    /// Copy of the layout with per-node couplers replaced; `couplers[k]` is
    /// `(t1, t2)` for node `k`.
    pub fn with_couplers(&self, couplers: &[(f64, f64)]) -> Result<Self> {
        if couplers.len() != self.nodes.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} coupler pairs for {} nodes",
                couplers.len(),
                self.nodes.len()
            )));
        }
        let mut out = self.clone();
        for (node, &(t1, t2)) in out.nodes.iter_mut().zip(couplers) {
            check_transmissivity(t1)?;
            check_transmissivity(t2)?;
            node.t1 = t1;
            node.t2 = t2;
        }
        Ok(out)
    }

    /// Copy with ideal couplers everywhere (the topology reference used for
    /// decomposition and hashing).
    pub fn nominal(&self) -> Self {
        let mut out = self.clone();
        for node in &mut out.nodes {
            node.t1 = IDEAL_COUPLER;
            node.t2 = IDEAL_COUPLER;
        }
        out
    }

    /// Hash of the topology (mode count, node placement, heater indexing,
    /// screen flag) — deliberately independent of coupler values, so a
    /// fitted model still matches the device it was trained on.
    pub fn topology_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(b"upp-layout-v1;");
        hasher.update(self.n_modes.to_le_bytes());
        hasher.update([u8::from(self.has_output_phase_screen)]);
        for n in &self.nodes {
            hasher.update(n.layer.to_le_bytes());
            hasher.update(n.top_mode.to_le_bytes());
            hasher.update(n.phi_heater.to_le_bytes());
            hasher.update(n.theta_heater.to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }

    /// Heaters whose static phase cannot be observed in amplitude-only
    /// measurements: output screen phases (left diagonal gauge) and the
    /// external phases of first-layer MZIs (right diagonal gauge on their
    /// top input mode).
    pub fn gauge_heaters(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .nodes
            .iter()
            .filter(|n| n.layer == 0)
            .map(|n| n.phi_heater)
            .collect();
        if self.has_output_phase_screen {
            out.extend((0..self.n_modes).map(|m| 2 * self.nodes.len() + m));
        }
        out
    }

    fn validate_phases(&self, phases: &PhaseVector) -> Result<()> {
        if phases.len() != self.n_heaters() {
            return Err(Error::ShapeMismatch(format!(
                "{} phases for {} heaters",
                phases.len(),
                self.n_heaters()
            )));
        }
        Ok(())
    }
}

fn check_transmissivity(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "coupler transmissivity {t} outside [0, 1]"
        )));
    }
    Ok(())
}

/// Per-heater phases in radians.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseVector(Vec<f64>);

impl PhaseVector {
    pub fn new(phases: Vec<f64>) -> Result<Self> {
        if phases.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("phase vector".into()));
        }
        Ok(Self(phases))
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

    pub fn set(&mut self, idx: usize, value: f64) {
        self.0[idx] = value;
    }

    /// Canonical representative with every entry in `[0, 2π)`.
    pub fn canonicalized(&self) -> PhaseVector {
        PhaseVector(self.0.iter().map(|p| wrap_phase(*p)).collect())
    }

    /// Largest per-heater distance to `other` on the circle (mod 2π).
    pub fn max_circular_distance(&self, other: &PhaseVector) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| circular_distance(*a, *b))
            .fold(0.0, f64::max)
    }
}

impl From<PhaseVector> for Vec<f64> {
    fn from(v: PhaseVector) -> Self {
        v.0
    }
}

/// Floored modulo into `[0, 2π)`.
pub fn wrap_phase(p: f64) -> f64 {
    let w = p.rem_euclid(TAU);
    if w == TAU {
        0.0
    } else {
        w
    }
}

/// Distance between two angles on the circle, in `[0, π]`.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = wrap_phase(a - b);
    d.min(TAU - d)
}

/// 2x2 MZI block as raw complex entries `[[a, b], [c, d]]`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Block {
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
    pub d: Complex64,
}

impl Block {
    /// `C(t2) · P(θ) · C(t1) · P_ext(φ)`.
    pub(crate) fn mzi(phi: f64, theta: f64, t1: f64, t2: f64) -> Self {
        let e_theta = Complex64::from_polar(1.0, theta);
        let e_phi = Complex64::from_polar(1.0, phi);
        let (r1, k1) = (t1.sqrt(), (1.0 - t1).sqrt());
        let (r2, k2) = (t2.sqrt(), (1.0 - t2).sqrt());
        let i = Complex64::new(0.0, 1.0);
        // (C(t2) · P(θ) · C(t1)) entries.
        let a = r1 * r2 * e_theta - k1 * k2;
        let b = i * (k1 * r2 * e_theta + r1 * k2);
        let c = i * (r1 * k2 * e_theta + k1 * r2);
        let d = r1 * r2 - k1 * k2 * e_theta;
        Self { a: a * e_phi, b, c: c * e_phi, d }
    }

    /// Derivative of the block with respect to θ.
    pub(crate) fn d_theta(phi: f64, theta: f64, t1: f64, t2: f64) -> Self {
        let e_theta = Complex64::from_polar(1.0, theta) * Complex64::new(0.0, 1.0);
        let e_phi = Complex64::from_polar(1.0, phi);
        let (r1, k1) = (t1.sqrt(), (1.0 - t1).sqrt());
        let (r2, k2) = (t2.sqrt(), (1.0 - t2).sqrt());
        let i = Complex64::new(0.0, 1.0);
        let a = r1 * r2 * e_theta;
        let b = i * (k1 * r2 * e_theta);
        let c = i * (r1 * k2 * e_theta);
        let d = -k1 * k2 * e_theta;
        Self { a: a * e_phi, b, c: c * e_phi, d }
    }

    /// Derivative with respect to φ (only the first column survives).
    pub(crate) fn d_phi(phi: f64, theta: f64, t1: f64, t2: f64) -> Self {
        let full = Self::mzi(phi, theta, t1, t2);
        let i = Complex64::new(0.0, 1.0);
        Self { a: full.a * i, b: Complex64::new(0.0, 0.0), c: full.c * i, d: Complex64::new(0.0, 0.0) }
    }

    /// Derivative with respect to the input coupler transmissivity t1.
    pub(crate) fn d_t1(phi: f64, theta: f64, t1: f64, t2: f64) -> Self {
        let e_theta = Complex64::from_polar(1.0, theta);
        let e_phi = Complex64::from_polar(1.0, phi);
        let (r1, k1) = (t1.sqrt(), (1.0 - t1).sqrt());
        let (r2, k2) = (t2.sqrt(), (1.0 - t2).sqrt());
        let dr1 = 0.5 / r1.max(1e-12);
        let dk1 = -0.5 / k1.max(1e-12);
        let i = Complex64::new(0.0, 1.0);
        let a = dr1 * r2 * e_theta - dk1 * k2;
        let b = i * (dk1 * r2 * e_theta + dr1 * k2);
        let c = i * (dr1 * k2 * e_theta + dk1 * r2);
        let d = dr1 * r2 - dk1 * k2 * e_theta;
        Self { a: a * e_phi, b, c: c * e_phi, d }
    }

    /// Derivative with respect to the output coupler transmissivity t2.
    pub(crate) fn d_t2(phi: f64, theta: f64, t1: f64, t2: f64) -> Self {
        let e_theta = Complex64::from_polar(1.0, theta);
        let e_phi = Complex64::from_polar(1.0, phi);
        let (r1, k1) = (t1.sqrt(), (1.0 - t1).sqrt());
        let (r2, k2) = (t2.sqrt(), (1.0 - t2).sqrt());
        let dr2 = 0.5 / r2.max(1e-12);
        let dk2 = -0.5 / k2.max(1e-12);
        let i = Complex64::new(0.0, 1.0);
        let a = r1 * dr2 * e_theta - k1 * dk2;
        let b = i * (k1 * dr2 * e_theta + r1 * dk2);
        let c = i * (r1 * dk2 * e_theta + k1 * dr2);
        let d = r1 * dr2 - k1 * dk2 * e_theta;
        Self { a: a * e_phi, b, c: c * e_phi, d }
    }

    pub(crate) fn to_matrix(self) -> ComplexMatrix {
        let mut m = ComplexMatrix::zeros(2, 2).into_array();
        m[[0, 0]] = self.a;
        m[[0, 1]] = self.b;
        m[[1, 0]] = self.c;
        m[[1, 1]] = self.d;
        ComplexMatrix::new(m).expect("finite block")
    }
}

/// Applies `block` on rows `(m, m+1)` of `u` in place (left multiplication).
pub(crate) fn apply_block_rows(u: &mut ndarray::Array2<Complex64>, m: usize, block: &Block) {
    let n = u.ncols();
    for j in 0..n {
        let top = u[[m, j]];
        let bot = u[[m + 1, j]];
        u[[m, j]] = block.a * top + block.b * bot;
        u[[m + 1, j]] = block.c * top + block.d * bot;
    }
}

/// Transfer matrix of a single MZI; unitary for any inputs.
pub fn mzi_transfer(phi: f64, theta: f64, t1: f64, t2: f64) -> Result<ComplexMatrix> {
    check_transmissivity(t1)?;
    check_transmissivity(t2)?;
    if !phi.is_finite() || !theta.is_finite() {
        return Err(Error::NonFinite("mzi phases".into()));
    }
    Ok(Block::mzi(phi, theta, t1, t2).to_matrix())
}

/// Full mesh transfer matrix for the given per-heater phases.
pub fn mesh_unitary(layout: &MeshLayout, phases: &PhaseVector) -> Result<Unitary> {
    layout.validate_phases(phases)?;
    let n = layout.n_modes();
    let mut u = ndarray::Array2::<Complex64>::eye(n);
    for node in layout.nodes() {
        let block = Block::mzi(
            phases.get(node.phi_heater),
            phases.get(node.theta_heater),
            node.t1,
            node.t2,
        );
        apply_block_rows(&mut u, node.top_mode, &block);
    }
    if layout.has_output_phase_screen() {
        for mode in 0..n {
            let heater = layout.screen_heater(mode).expect("screen present");
            let factor = Complex64::from_polar(1.0, phases.get(heater));
            for j in 0..n {
                u[[mode, j]] *= factor;
            }
        }
    }
    Unitary::new(ComplexMatrix::new(u)?)
}

/// Phases realizing `u` on a standard ideal-coupler layout.
///
/// Successive nulling on the lower-left triangle, alternating right
/// multiplications by inverse blocks and left multiplications by blocks;
/// the residual diagonal is absorbed into the output phase screen.
/// Returned phases are canonical in `[0, 2π)`.
pub fn clements_decompose(u: &Unitary, layout: &MeshLayout) -> Result<PhaseVector> {
    let n = layout.n_modes();
    if u.n() != n {
        return Err(Error::ShapeMismatch(format!(
            "unitary is {}x{} but layout has {} modes",
            u.n(),
            u.n(),
            n
        )));
    }
    if !layout.all_couplers_ideal() {
        return Err(Error::InvalidArgument(
            "decomposition requires ideal couplers (t = 0.5)".into(),
        ));
    }
    if !layout.has_output_phase_screen() {
        return Err(Error::InvalidArgument(
            "decomposition requires an output phase screen".into(),
        ));
    }

    let mut t = u.matrix().clone().into_array();
    // (top_mode, theta, phi), chronological.
    let mut rights: Vec<(usize, f64, f64)> = Vec::new();
    let mut lefts: Vec<(usize, f64, f64)> = Vec::new();

    for i in 1..n {
        if i % 2 == 1 {
            // Null the diagonal running up-right from (n−1, i−1) with
            // right multiplications by inverse blocks on columns (m, m+1).
            for j in 0..i {
                let r = n - 1 - j;
                let m = i - 1 - j;
                let (theta, phi) = null_right(&t, r, m);
                apply_inverse_block_cols(&mut t, m, theta, phi);
                rights.push((m, theta, phi));
            }
        } else {
            // Null the diagonal running down-right from (n−i, 0) with left
            // multiplications by blocks on rows (m, m+1).
            for j in 1..=i {
                let r = n - 1 + j - i;
                let c = j - 1;
                let m = r - 1;
                let (theta, phi) = null_left(&t, m, c);
                let block = Block::mzi(phi, theta, IDEAL_COUPLER, IDEAL_COUPLER);
                apply_block_rows(&mut t, m, &block);
                lefts.push((m, theta, phi));
            }
        }
    }

    // `t` is now diagonal: D = L_p…L_1 · U · R†_1…R†_q, i.e.
    // U = L_1^{-1}…L_p^{-1} · D · R_q…R_1. Push every L^{-1} through the
    // diagonal (θ is preserved, φ and the diagonal update), leaving
    // U = D' · B'_1…B'_p · R_q…R_1.
    let mut diag: Vec<Complex64> = (0..n).map(|k| t[[k, k]]).collect();

    // Physical factor sequence in application order (input side first).
    let mut physical: Vec<(usize, f64, f64)> = rights;
    for &(m, theta, phi) in lefts.iter().rev() {
        let a = diag[m];
        let b = diag[m + 1];
        let phi_new = wrap_phase(a.arg() - b.arg());
        diag[m] = -b * Complex64::from_polar(1.0, -(phi + theta));
        diag[m + 1] = -b * Complex64::from_polar(1.0, -theta);
        physical.push((m, theta, phi_new));
    }

    // Map the factor sequence onto mesh nodes: place each factor at the
    // earliest layer of matching parity after the last layer that touched
    // either of its modes.
    let mut phases = PhaseVector::zeros(layout.n_heaters());
    let mut frontier = vec![-1i64; n];
    let mut used = vec![false; layout.n_nodes()];
    for (m, theta, phi) in physical {
        let min_layer = frontier[m].max(frontier[m + 1]) + 1;
        let mut layer = min_layer.max(0) as usize;
        if layer % 2 != m % 2 {
            layer += 1;
        }
        let node_idx = layout.node_at(layer, m).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "layout is not a standard rectangular mesh: no node at layer {layer}, mode {m}"
            ))
        })?;
        if used[node_idx] {
            return Err(Error::InvalidArgument(format!(
                "layout is not a standard rectangular mesh: node {node_idx} assigned twice"
            )));
        }
        used[node_idx] = true;
        frontier[m] = layer as i64;
        frontier[m + 1] = layer as i64;
        let node = &layout.nodes()[node_idx];
        phases.set(node.theta_heater, wrap_phase(theta));
        phases.set(node.phi_heater, wrap_phase(phi));
    }
    if used.iter().any(|u| !u) {
        return Err(Error::InvalidArgument(
            "layout is not a standard rectangular mesh: unassigned nodes remain".into(),
        ));
    }
    for mode in 0..n {
        let heater = layout.screen_heater(mode).expect("screen present");
        phases.set(heater, wrap_phase(diag[mode].arg()));
    }
    Ok(phases)
}

/// Solves (U·B†)[r, m] = 0 for the block on columns (m, m+1).
fn null_right(t: &ndarray::Array2<Complex64>, r: usize, m: usize) -> (f64, f64) {
    let a = t[[r, m]];
    let b = t[[r, m + 1]];
    let theta = 2.0 * b.norm().atan2(a.norm());
    let phi = if a.norm() < 1e-300 || b.norm() < 1e-300 {
        0.0
    } else {
        a.arg() - b.arg() - std::f64::consts::PI
    };
    (theta, phi)
}

/// Solves (B·U)[m+1, c] = 0 for the block on rows (m, m+1).
fn null_left(t: &ndarray::Array2<Complex64>, m: usize, c: usize) -> (f64, f64) {
    let a = t[[m, c]];
    let b = t[[m + 1, c]];
    let theta = 2.0 * a.norm().atan2(b.norm());
    let phi = if a.norm() < 1e-300 || b.norm() < 1e-300 {
        0.0
    } else {
        b.arg() - a.arg()
    };
    (theta, phi)
}

/// Applies B†(φ, θ) on columns (m, m+1) of `t` in place (right mult).
fn apply_inverse_block_cols(t: &mut ndarray::Array2<Complex64>, m: usize, theta: f64, phi: f64) {
    let block = Block::mzi(phi, theta, IDEAL_COUPLER, IDEAL_COUPLER);
    // Conjugate transpose of the block.
    let (ha, hb) = (block.a.conj(), block.c.conj());
    let (hc, hd) = (block.b.conj(), block.d.conj());
    let n = t.nrows();
    for i in 0..n {
        let left = t[[i, m]];
        let right = t[[i, m + 1]];
        t[[i, m]] = left * ha + right * hc;
        t[[i, m + 1]] = left * hb + right * hd;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::unitary::{embed_two_mode, haar_random_unitary, unitarity_defect};
    use std::f64::consts::PI;

    #[test]
    fn standard_layout_counts() {
        let l2 = MeshLayout::standard(2).unwrap();
        assert_eq!(l2.n_nodes(), 1);
        assert_eq!(l2.n_heaters(), 4); // 2 MZI heaters + 2 screen phases

        let l6 = MeshLayout::standard(6).unwrap();
        assert_eq!(l6.n_nodes(), 15);
        assert_eq!(l6.n_heaters(), 36);

        let l24 = MeshLayout::standard(24).unwrap();
        assert_eq!(l24.n_nodes(), 276);
        assert_eq!(l24.n_couplers(), 552);
        assert_eq!(l24.n_heaters(), 576);
    }

    #[test]
    fn standard_layout_rejects_single_mode() {
        assert!(MeshLayout::standard(1).is_err());
    }

    #[test]
    fn layers_act_on_disjoint_modes() {
        let layout = MeshLayout::standard(9).unwrap();
        for layer in 0..layout.n_layers() {
            let mut seen = vec![false; 9];
            for node in layout.nodes().iter().filter(|n| n.layer == layer) {
                assert!(!seen[node.top_mode] && !seen[node.top_mode + 1]);
                seen[node.top_mode] = true;
                seen[node.top_mode + 1] = true;
            }
        }
    }

    #[test]
    fn mzi_bar_and_cross_states() {
        // θ = π: bar. θ = 0: cross.
        let bar = mzi_transfer(0.0, PI, 0.5, 0.5).unwrap();
        assert!((bar.as_array()[[0, 0]].norm() - 1.0).abs() < 1e-12);
        assert!(bar.as_array()[[0, 1]].norm() < 1e-12);
        let cross = mzi_transfer(0.0, 0.0, 0.5, 0.5).unwrap();
        assert!((cross.as_array()[[0, 1]].norm() - 1.0).abs() < 1e-12);
        assert!(cross.as_array()[[0, 0]].norm() < 1e-12);
    }

    #[test]
    fn mzi_fringe_law() {
        // |T_00|² = sin²(θ/2) for ideal couplers, any φ.
        for k in 0..40 {
            let theta = 0.157 * k as f64;
            let phi = 0.3 + 0.21 * k as f64;
            let t = mzi_transfer(phi, theta, 0.5, 0.5).unwrap();
            let got = t.as_array()[[0, 0]].norm_sqr();
            let want = (theta / 2.0).sin().powi(2);
            assert!((got - want).abs() < 1e-12, "theta={theta}: {got} vs {want}");
        }
    }

    #[test]
    fn mzi_transfer_is_unitary_for_any_inputs() {
        for &(phi, theta, t1, t2) in &[
            (0.0, 0.0, 0.5, 0.5),
            (1.3, 4.2, 0.47, 0.55),
            (6.0, 2.9, 0.0, 1.0),
            (-2.0, 11.0, 0.93, 0.07),
        ] {
            let t = mzi_transfer(phi, theta, t1, t2).unwrap();
            assert!(unitarity_defect(&t).unwrap() < 1e-14);
        }
    }

    #[test]
    fn mzi_transfer_rejects_bad_transmissivity() {
        assert!(mzi_transfer(0.0, 0.0, -0.1, 0.5).is_err());
        assert!(mzi_transfer(0.0, 0.0, 0.5, 1.2).is_err());
    }

    #[test]
    fn mesh_unitary_matches_brute_force_embedding() {
        // Oracle: explicit embed_two_mode products in the same order.
        for n in 2..=5 {
            let layout = MeshLayout::standard(n).unwrap();
            let mut phases = PhaseVector::zeros(layout.n_heaters());
            for k in 0..phases.len() {
                phases.set(k, wrap_phase(0.37 + 1.234 * k as f64));
            }
            let fast = mesh_unitary(&layout, &phases).unwrap();

            let mut oracle = ComplexMatrix::identity(n);
            for node in layout.nodes() {
                let block = mzi_transfer(
                    phases.get(node.phi_heater),
                    phases.get(node.theta_heater),
                    node.t1,
                    node.t2,
                )
                .unwrap();
                let e = embed_two_mode(n, node.top_mode, &block).unwrap();
                oracle = e.dot(&oracle).unwrap();
            }
            let mut screen = ComplexMatrix::identity(n).into_array();
            for mode in 0..n {
                screen[[mode, mode]] =
                    Complex64::from_polar(1.0, phases.get(layout.screen_heater(mode).unwrap()));
            }
            oracle = ComplexMatrix::new(screen).unwrap().dot(&oracle).unwrap();
            assert!(fast.max_abs_diff(&oracle) < 1e-12, "n={n}");
        }
    }

    #[test]
    fn mesh_unitary_stays_unitary_at_scale() {
        let layout = MeshLayout::standard(24).unwrap();
        let mut phases = PhaseVector::zeros(layout.n_heaters());
        for k in 0..phases.len() {
            phases.set(k, wrap_phase(2.11 * k as f64 + 0.5));
        }
        let u = mesh_unitary(&layout, &phases).unwrap();
        assert!(unitarity_defect(u.matrix()).unwrap() <= 1e-10);
    }

    #[test]
    fn mesh_unitary_rejects_length_mismatch() {
        let layout = MeshLayout::standard(4).unwrap();
        let phases = PhaseVector::zeros(3);
        assert!(mesh_unitary(&layout, &phases).is_err());
    }

    #[test]
    fn n2_zero_phases_is_cross() {
        let layout = MeshLayout::standard(2).unwrap();
        let u = mesh_unitary(&layout, &PhaseVector::zeros(4)).unwrap();
        assert!((u.as_array()[[0, 1]].norm() - 1.0).abs() < 1e-12);
        assert!((u.as_array()[[1, 0]].norm() - 1.0).abs() < 1e-12);
        assert!(u.as_array()[[0, 0]].norm() < 1e-12);
    }

    fn roundtrip_error(n: usize, seed: u64) -> f64 {
        let layout = MeshLayout::standard(n).unwrap();
        let u = haar_random_unitary(n, seed).unwrap();
        let phases = clements_decompose(&u, &layout).unwrap();
        let rebuilt = mesh_unitary(&layout, &phases).unwrap();
        rebuilt.max_abs_diff(u.matrix())
    }

    #[test]
    fn decompose_identity_round_trips() {
        let layout = MeshLayout::standard(4).unwrap();
        let u = Unitary::identity(4);
        let phases = clements_decompose(&u, &layout).unwrap();
        let rebuilt = mesh_unitary(&layout, &phases).unwrap();
        assert!(rebuilt.max_abs_diff(u.matrix()) < 1e-10);
    }

    #[test]
    fn decompose_round_trips_across_sizes() {
        for &n in &[2usize, 3, 4, 5, 6, 7, 8, 13] {
            for seed in 0..4u64 {
                let err = roundtrip_error(n, 1000 + seed);
                assert!(err < 1e-8, "n={n} seed={seed}: entrywise error {err}");
            }
        }
    }

    #[test]
    fn decompose_phases_are_canonical() {
        let layout = MeshLayout::standard(5).unwrap();
        let u = haar_random_unitary(5, 9).unwrap();
        let phases = clements_decompose(&u, &layout).unwrap();
        for k in 0..phases.len() {
            let p = phases.get(k);
            assert!((0.0..TAU).contains(&p));
        }
    }

    #[test]
    fn decompose_rejects_non_ideal_couplers() {
        let layout = MeshLayout::standard(4).unwrap();
        let couplers = vec![(0.48, 0.5); layout.n_nodes()];
        let bent = layout.with_couplers(&couplers).unwrap();
        let u = haar_random_unitary(4, 2).unwrap();
        assert!(clements_decompose(&u, &bent).is_err());
    }

    #[test]
    fn decompose_rejects_size_mismatch() {
        let layout = MeshLayout::standard(4).unwrap();
        let u = haar_random_unitary(5, 2).unwrap();
        assert!(clements_decompose(&u, &layout).is_err());
    }

    #[test]
    fn layer_permutation_leaves_mesh_unitary_unchanged() {
        // Nodes within a layer commute; reversing their order must not
        // change the composed unitary.
        let layout = MeshLayout::standard(6).unwrap();
        let mut segments: Vec<Vec<MZINode>> = vec![Vec::new(); layout.n_layers()];
        for node in layout.nodes() {
            segments[node.layer].push(node.clone());
        }
        for seg in &mut segments {
            seg.reverse();
        }
        let permuted = MeshLayout {
            n_modes: 6,
            nodes: segments.into_iter().flatten().collect(),
            has_output_phase_screen: true,
        };
        let mut phases = PhaseVector::zeros(layout.n_heaters());
        for k in 0..phases.len() {
            phases.set(k, wrap_phase(0.91 * k as f64));
        }
        let a = mesh_unitary(&layout, &phases).unwrap();
        let b = mesh_unitary(&permuted, &phases).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn topology_hash_ignores_couplers() {
        let layout = MeshLayout::standard(6).unwrap();
        let couplers = vec![(0.52, 0.49); layout.n_nodes()];
        let bent = layout.with_couplers(&couplers).unwrap();
        assert_eq!(layout.topology_hash(), bent.topology_hash());
        let other = MeshLayout::standard(7).unwrap();
        assert_ne!(layout.topology_hash(), other.topology_hash());
    }

    #[test]
    fn gauge_heaters_cover_first_layer_and_screen() {
        let layout = MeshLayout::standard(6).unwrap();
        let gauge = layout.gauge_heaters();
        // 3 first-layer φ heaters + 6 screen heaters.
        assert_eq!(gauge.len(), 9);
        assert!(gauge.contains(&0));
        assert!(gauge.contains(&(layout.n_heaters() - 1)));
    }
}
