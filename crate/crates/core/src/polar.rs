//! Polar decomposition `φ = A e^{iS/ħ}`, the quantum potential, and the
//! Hamilton–Jacobi / continuity residuals.
//!
//! Spatial derivatives of `A` and `S` are taken from spectral derivatives of
//! `φ` itself (through `ρ = |φ|²` and the current `Im(φ̄φ')`), which stays
//! smooth where `|φ|` has a cusp-like minimum.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::grid::{Grid1D, Spectral};
use crate::spline::UniformSpline;
use crate::{DEFAULT_NODE_THRESHOLD, HBAR};

/// Amplitude, unwrapped action, and their spatial derivatives at one time.
#[derive(Debug, Clone)]
pub struct PolarSnapshot {
    pub grid: Grid1D,
    pub time: f64,
    pub amplitude: Vec<f64>,
    pub action: Vec<f64>,
    /// `∂ᵏA/∂xᵏ` for `k = 1..=4`.
    pub d_amplitude: [Vec<f64>; 4],
    /// `∂S/∂x` and `∂²S/∂x²`.
    pub d_action: [Vec<f64>; 2],
    pub node_mask: Vec<bool>,
    pub node_threshold: f64,
    velocity_spline: OnceLock<UniformSpline>,
}

impl PolarSnapshot {
    pub fn density(&self) -> Vec<f64> {
        self.amplitude.iter().map(|a| a * a).collect()
    }

    pub fn peak_index(&self) -> usize {
        self.amplitude.iter().enumerate().fold((0, f64::MIN), |best, (i, &a)| if a > best.1 { (i, a) } else { best }).0
    }

    /// `∂S/∂x` spline, built on first use.
    pub fn action_gradient_spline(&self) -> &UniformSpline {
        self.velocity_spline
            .get_or_init(|| UniformSpline::new(self.grid.x_min, self.grid.dx(), self.d_action[0].clone()))
    }

    /// `A e^{iS/ħ}` on every grid point.
    pub fn reconstruct(&self) -> Vec<Complex64> {
        self.amplitude.iter().zip(&self.action).map(|(&a, &s)| Complex64::from_polar(a, s / HBAR)).collect()
    }

    /// Whether any node among the spline stencil around `x` is masked.
    pub fn stencil_masked(&self, x: f64) -> bool {
        stencil_masked(&self.grid, &self.node_mask, x)
    }
}

pub(crate) fn stencil_masked(grid: &Grid1D, mask: &[bool], x: f64) -> bool {
    let n = grid.n_points;
    let pos = ((x - grid.x_min) / grid.dx()).floor() as isize;
    (pos - 1..=pos + 2).any(|i| i >= 0 && (i as usize) < n && mask[i as usize])
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn node_mask(amplitude: &[f64], threshold: f64) -> Vec<bool> {
    let peak = amplitude.iter().cloned().fold(0.0, f64::max);
    amplitude.iter().map(|&a| !(a >= threshold * peak) || peak == 0.0).collect()
}

/// Polar decomposition with the default node threshold.
pub fn decompose_polar(state: &ComplexField, previous: Option<&PolarSnapshot>) -> Result<PolarSnapshot> {
    decompose_polar_with(state, previous, DEFAULT_NODE_THRESHOLD, &Spectral::new(state.grid))
}

/// Polar decomposition with an explicit node threshold and a reusable FFT plan.
pub fn decompose_polar_with(
    state: &ComplexField,
    previous: Option<&PolarSnapshot>,
    node_threshold: f64,
    spectral: &Spectral,
) -> Result<PolarSnapshot> {
    let grid = state.grid;
    let n = grid.n_points;
    if spectral.grid() != &grid {
        return Err(Error::Mismatch("spectral plan built for another grid".into()));
    }
    let phi = &state.values;
    let mut derivs = vec![phi.clone()];
    derivs.extend(spectral.derivatives(phi, 4));

    let rho: Vec<f64> = phi.iter().map(|v| v.norm_sqr()).collect();
    let amplitude: Vec<f64> = rho.iter().map(|r| r.sqrt()).collect();
    let node_mask = node_mask(&amplitude, node_threshold);

    // ρ^(k) = Σ_j C(k,j) φ^(j) conj(φ^(k-j))
    let rho_d: Vec<Vec<f64>> = (1..=4)
        .map(|k| {
            (0..n)
                .map(|i| (0..=k).map(|j| binomial(k, j) * (derivs[j][i] * derivs[k - j][i].conj()).re).sum())
                .collect()
        })
        .collect();

    let mut d_amplitude: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; n]);
    let mut d_action: [Vec<f64>; 2] = std::array::from_fn(|_| vec![0.0; n]);
    for i in 0..n {
        let r = rho[i];
        if r == 0.0 {
            continue;
        }
        let (r1, r2, r3, r4) = (rho_d[0][i] / r, rho_d[1][i] / r, rho_d[2][i] / r, rho_d[3][i] / r);
        // derivatives of ln A = ½ ln ρ
        let l1 = 0.5 * r1;
        let l2 = 0.5 * (r2 - r1 * r1);
        let l3 = 0.5 * (r3 - 3.0 * r1 * r2 + 2.0 * r1.powi(3));
        let l4 = 0.5 * (r4 - 4.0 * r1 * r3 - 3.0 * r2 * r2 + 12.0 * r1 * r1 * r2 - 6.0 * r1.powi(4));
        let a = amplitude[i];
        d_amplitude[0][i] = a * l1;
        d_amplitude[1][i] = a * (l2 + l1 * l1);
        d_amplitude[2][i] = a * (l3 + 3.0 * l1 * l2 + l1.powi(3));
        d_amplitude[3][i] = a * (l4 + 4.0 * l1 * l3 + 3.0 * l2 * l2 + 6.0 * l1 * l1 * l2 + l1.powi(4));

        let current = (phi[i].conj() * derivs[1][i]).im;
        let current_d = (phi[i].conj() * derivs[2][i]).im;
        d_action[0][i] = HBAR * current / r;
        d_action[1][i] = HBAR * (current_d / r - current * rho_d[0][i] / (r * r));
    }

    let action = unwrap_action(phi, &node_mask)?;
    let mut snap = PolarSnapshot {
        grid,
        time: state.time,
        amplitude,
        action,
        d_amplitude,
        d_action,
        node_mask,
        node_threshold,
        velocity_spline: OnceLock::new(),
    };
    if let Some(prev) = previous {
        align_in_time(&mut snap, prev);
    }
    Ok(snap)
}

/// Left-to-right unwrapping onto the nearest 2πħ branch of the previous
/// unmasked point; masked points carry the running offset.
fn unwrap_action(phi: &[Complex64], mask: &[bool]) -> Result<Vec<f64>> {
    let period = 2.0 * PI * HBAR;
    let mut action: Vec<f64> = phi.iter().map(|v| HBAR * v.arg()).collect();
    let mut offset = 0.0;
    let mut last_unmasked: Option<usize> = None;
    for i in 0..phi.len() {
        let raw = action[i];
        if !mask[i] {
            if let Some(j) = last_unmasked {
                offset += ((action[j] - (raw + offset)) / period).round() * period;
                if j + 1 == i && (raw + offset - action[j]).abs() >= PI * HBAR {
                    return Err(Error::UnwrapAmbiguous { index: j });
                }
            }
            last_unmasked = Some(i);
        }
        action[i] = raw + offset;
    }
    Ok(action)
}

fn align_in_time(snap: &mut PolarSnapshot, previous: &PolarSnapshot) {
    let period = 2.0 * PI * HBAR;
    let i = snap.peak_index();
    let shift = ((snap.action[i] - previous.action[i]) / period).round() * period;
    if shift != 0.0 {
        for s in snap.action.iter_mut() {
            *s -= shift;
        }
    }
}

/// `Q` and its space/time derivatives on the grid at one time.
#[derive(Debug, Clone)]
pub struct QuantumPotentialTable {
    pub grid: Grid1D,
    pub time: f64,
    pub q: Vec<f64>,
    pub qx: Vec<f64>,
    pub qxx: Vec<f64>,
    pub qt: Vec<f64>,
    pub qtt: Vec<f64>,
    pub qxt: Vec<f64>,
    pub node_mask: Vec<bool>,
    /// False until a [`QuantumPotentialBuilder`] has filled `qt`, `qtt`, `qxt`.
    pub has_time_derivatives: bool,
    splines: OnceLock<Box<[UniformSpline; 6]>>,
}

/// Interpolated quantum-potential values at one point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FieldSample {
    pub q: f64,
    pub qx: f64,
    pub qt: f64,
    pub qxx: f64,
    pub qxt: f64,
    pub qtt: f64,
    pub masked: bool,
}

impl QuantumPotentialTable {
    fn splines(&self) -> &[UniformSpline; 6] {
        self.splines.get_or_init(|| {
            let (x0, dx) = (self.grid.x_min, self.grid.dx());
            Box::new([
                UniformSpline::new(x0, dx, self.q.clone()),
                UniformSpline::new(x0, dx, self.qx.clone()),
                UniformSpline::new(x0, dx, self.qt.clone()),
                UniformSpline::new(x0, dx, self.qxx.clone()),
                UniformSpline::new(x0, dx, self.qxt.clone()),
                UniformSpline::new(x0, dx, self.qtt.clone()),
            ])
        })
    }

    fn with_arrays(grid: Grid1D, time: f64, q: Vec<f64>, qx: Vec<f64>, qxx: Vec<f64>, mask: Vec<bool>) -> Self {
        let n = grid.n_points;
        Self {
            grid,
            time,
            q,
            qx,
            qxx,
            qt: vec![0.0; n],
            qtt: vec![0.0; n],
            qxt: vec![0.0; n],
            node_mask: mask,
            has_time_derivatives: false,
            splines: OnceLock::new(),
        }
    }

    pub fn sample(&self, x: f64) -> Result<FieldSample> {
        sample_field(self, x)
    }
}

/// Spatial part of the quantum-potential table: `Q = -(ħ²/2m) A''/A`, `Qx`, `Qxx`.
///
/// Points with `A < node_threshold · max A` are masked and refilled by linear
/// continuation from the nearest unmasked nodes. Time derivatives are left at
/// zero; [`QuantumPotentialBuilder`] fills them.
pub fn quantum_potential(snap: &PolarSnapshot, mass: f64, node_threshold: f64) -> Result<QuantumPotentialTable> {
    let n = snap.grid.n_points;
    let mask = if (node_threshold - snap.node_threshold).abs() == 0.0 {
        snap.node_mask.clone()
    } else {
        node_mask(&snap.amplitude, node_threshold)
    };
    if mask.iter().all(|&m| m) {
        return Err(Error::AllMasked);
    }
    let scale = -HBAR * HBAR / (2.0 * mass);
    let mut q = vec![0.0; n];
    let mut qx = vec![0.0; n];
    let mut qxx = vec![0.0; n];
    for i in 0..n {
        if mask[i] {
            continue;
        }
        let a = snap.amplitude[i];
        let r1 = snap.d_amplitude[0][i] / a;
        let r2 = snap.d_amplitude[1][i] / a;
        let r3 = snap.d_amplitude[2][i] / a;
        let r4 = snap.d_amplitude[3][i] / a;
        q[i] = scale * r2;
        qx[i] = scale * (r3 - r2 * r1);
        qxx[i] = scale * (r4 - 2.0 * r3 * r1 - r2 * r2 + 2.0 * r2 * r1 * r1);
    }
    fill_masked(&snap.grid, &mask, &mut q, &mut qx, &mut qxx);
    Ok(QuantumPotentialTable::with_arrays(snap.grid, snap.time, q, qx, qxx, mask))
}

fn fill_masked(grid: &Grid1D, mask: &[bool], q: &mut [f64], qx: &mut [f64], qxx: &mut [f64]) {
    let n = mask.len();
    let dx = grid.dx();
    let mut i = 0;
    while i < n {
        if !mask[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && mask[i] {
            i += 1;
        }
        let left = start.checked_sub(1);
        let right = if i < n { Some(i) } else { None };
        match (left, right) {
            (Some(l), Some(r)) => {
                let slope = (q[r] - q[l]) / ((r - l) as f64 * dx);
                for j in start..i {
                    q[j] = q[l] + slope * (j - l) as f64 * dx;
                    qx[j] = slope;
                    qxx[j] = 0.0;
                }
            }
            (Some(l), None) => {
                for j in start..n {
                    q[j] = q[l] + qx[l] * (j - l) as f64 * dx;
                    qx[j] = qx[l];
                    qxx[j] = 0.0;
                }
            }
            (None, Some(r)) => {
                for j in 0..i {
                    q[j] = q[r] - qx[r] * (r - j) as f64 * dx;
                    qx[j] = qx[r];
                    qxx[j] = 0.0;
                }
            }
            (None, None) => {}
        }
    }
}

/// Ring buffer that completes tables with centered time derivatives.
///
/// Tables must be pushed at a fixed spacing. The table at `t_k` is emitted once
/// `t_{k+1}` is known; the first table uses one-sided second-order differences,
/// and [`QuantumPotentialBuilder::finish`] emits the last one with backward
/// differences.
#[derive(Debug, Default)]
pub struct QuantumPotentialBuilder {
    ring: VecDeque<QuantumPotentialTable>,
    emitted_first: bool,
    spacing: Option<f64>,
}

impl QuantumPotentialBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, table: QuantumPotentialTable) -> Result<Vec<QuantumPotentialTable>> {
        if let Some(last) = self.ring.back() {
            let dt = table.time - last.time;
            match self.spacing {
                None => self.spacing = Some(dt),
                Some(s) if (dt - s).abs() > 1e-9 * s.abs().max(1.0) => {
                    return Err(Error::Mismatch(format!("table spacing changed from {s} to {dt}")))
                }
                _ => {}
            }
            if !(dt > 0.0) {
                return Err(Error::Mismatch("tables must be pushed in increasing time".into()));
            }
        }
        if self.ring.len() == 3 {
            self.ring.pop_front();
        }
        self.ring.push_back(table);
        let mut out = Vec::new();
        if self.ring.len() == 3 {
            let spacing = self.spacing.unwrap();
            let (a, b, c) = (&self.ring[0], &self.ring[1], &self.ring[2]);
            if !self.emitted_first {
                out.push(with_time_derivatives(a, a, b, c, Stencil::Forward, spacing));
                self.emitted_first = true;
            }
            out.push(with_time_derivatives(b, a, b, c, Stencil::Centered, spacing));
        }
        Ok(out)
    }

    /// Emits the newest table with one-sided backward differences.
    pub fn finish(self) -> Option<QuantumPotentialTable> {
        if self.ring.len() < 3 {
            return None;
        }
        let spacing = self.spacing?;
        let (a, b, c) = (&self.ring[0], &self.ring[1], &self.ring[2]);
        Some(with_time_derivatives(c, a, b, c, Stencil::Backward, spacing))
    }
}

#[derive(Clone, Copy)]
enum Stencil {
    Forward,
    Centered,
    Backward,
}

fn with_time_derivatives(
    target: &QuantumPotentialTable,
    a: &QuantumPotentialTable,
    b: &QuantumPotentialTable,
    c: &QuantumPotentialTable,
    stencil: Stencil,
    dt: f64,
) -> QuantumPotentialTable {
    let n = target.grid.n_points;
    let mut out = QuantumPotentialTable::with_arrays(
        target.grid,
        target.time,
        target.q.clone(),
        target.qx.clone(),
        target.qxx.clone(),
        (0..n).map(|i| a.node_mask[i] || b.node_mask[i] || c.node_mask[i]).collect(),
    );
    let first = |fa: f64, fb: f64, fc: f64| match stencil {
        Stencil::Forward => (-3.0 * fa + 4.0 * fb - fc) / (2.0 * dt),
        Stencil::Centered => (fc - fa) / (2.0 * dt),
        Stencil::Backward => (fa - 4.0 * fb + 3.0 * fc) / (2.0 * dt),
    };
    for i in 0..n {
        out.qt[i] = first(a.q[i], b.q[i], c.q[i]);
        out.qxt[i] = first(a.qx[i], b.qx[i], c.qx[i]);
        out.qtt[i] = (a.q[i] - 2.0 * b.q[i] + c.q[i]) / (dt * dt);
    }
    out.has_time_derivatives = true;
    out
}

/// Cubic-spline evaluation of every stored array at `x`.
pub fn sample_field(table: &QuantumPotentialTable, x: f64) -> Result<FieldSample> {
    let g = &table.grid;
    if !(x >= g.x_min && x <= g.x_last()) {
        return Err(Error::OutOfRange { x, min: g.x_min, max: g.x_last() });
    }
    let s = table.splines();
    Ok(FieldSample {
        q: s[0].eval(x),
        qx: s[1].eval(x),
        qt: s[2].eval(x),
        qxx: s[3].eval(x),
        qxt: s[4].eval(x),
        qtt: s[5].eval(x),
        masked: stencil_masked(g, &table.node_mask, x),
    })
}

/// Pointwise residual with the node mask of the middle snapshot.
#[derive(Debug, Clone)]
pub struct Residual {
    pub values: Vec<f64>,
    pub masked: Vec<bool>,
}

impl Residual {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().zip(&self.masked).filter(|(_, &m)| !m).map(|(v, _)| v.abs()).fold(0.0, f64::max)
    }
}

fn check_triplet(snaps: [&PolarSnapshot; 3]) -> Result<f64> {
    let dt0 = snaps[1].time - snaps[0].time;
    let dt1 = snaps[2].time - snaps[1].time;
    if !(dt0 > 0.0) || (dt1 - dt0).abs() > 1e-9 * dt0.max(1.0) {
        return Err(Error::Mismatch("snapshots must be equally spaced in time".into()));
    }
    if snaps[0].grid != snaps[1].grid || snaps[1].grid != snaps[2].grid {
        return Err(Error::Mismatch("snapshots live on different grids".into()));
    }
    Ok(dt0)
}

/// `∂S/∂t + (∂S/∂x)²/2m - (ħ²/2m) A''/A + V` at the middle snapshot.
pub fn hj_residual(snaps: [&PolarSnapshot; 3], potential: &[f64], mass: f64) -> Result<Residual> {
    let dt = check_triplet(snaps)?;
    let mid = snaps[1];
    let period = 2.0 * PI * HBAR;
    let n = mid.grid.n_points;
    if potential.len() != n {
        return Err(Error::Mismatch("potential length differs from grid".into()));
    }
    let mut values = vec![0.0; n];
    for i in 0..n {
        if mid.node_mask[i] {
            continue;
        }
        let mut ds = snaps[2].action[i] - snaps[0].action[i];
        ds -= (ds / period).round() * period;
        let s_t = ds / (2.0 * dt);
        let s_x = mid.d_action[0][i];
        let lap_ratio = mid.d_amplitude[1][i] / mid.amplitude[i];
        values[i] = s_t + s_x * s_x / (2.0 * mass) - HBAR * HBAR / (2.0 * mass) * lap_ratio + potential[i];
    }
    Ok(Residual { values, masked: mid.node_mask.clone() })
}

/// `∂A²/∂t + ∂/∂x (A² ∂S/∂x / m)` at the middle snapshot.
pub fn continuity_residual(snaps: [&PolarSnapshot; 3], mass: f64) -> Result<Residual> {
    let dt = check_triplet(snaps)?;
    let mid = snaps[1];
    let n = mid.grid.n_points;
    let mut values = vec![0.0; n];
    for i in 0..n {
        if mid.node_mask[i] {
            continue;
        }
        let rho_t = (snaps[2].amplitude[i].powi(2) - snaps[0].amplitude[i].powi(2)) / (2.0 * dt);
        let a = mid.amplitude[i];
        let flux_x = 2.0 * a * mid.d_amplitude[0][i] * mid.d_action[0][i] + a * a * mid.d_action[1][i];
        values[i] = rho_t + flux_x / mass;
    }
    Ok(Residual { values, masked: mid.node_mask.clone() })
}
