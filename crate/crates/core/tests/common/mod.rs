#![allow(dead_code)]
pub mod identities;

use std::sync::{Arc, OnceLock};

use qgeo::experiment::ExperimentConfig;
use qgeo::field::{init_packet, SplitOperator};
use qgeo::finsler::{ExtendedState, ParamKind};
use qgeo::polar::PolarSnapshot;
use qgeo::probe::{ClassicalPotential, FieldProbe, TableProbe};
use qgeo::timeline::FieldTimeline;

pub const MASS: f64 = 2000.0;

/// A short stretch of the default Eckart run.
pub struct Window {
    pub probe: TableProbe,
    pub mid: Arc<PolarSnapshot>,
    /// Grid positions where `A > 10⁻³ · max A` at the middle time.
    pub support: Vec<f64>,
    pub t0: f64,
    pub t1: f64,
}

const SPANS: [(f64, f64); 3] = [(98.0, 102.0), (998.0, 1002.0), (1948.0, 1952.0)];

fn build() -> Vec<Window> {
    let cfg = ExperimentConfig::default();
    let grid = cfg.grid();
    let spec = cfg.potential();
    let v = spec.on_grid(&grid, cfg.mass);
    let psi = init_packet(&grid, cfg.beta, cfg.k, cfg.q_c).unwrap();
    let solver = SplitOperator::new(grid, &v, cfg.dt, cfg.mass).unwrap();
    let mut tl = FieldTimeline::new(psi, solver, cfg.node_threshold).unwrap();
    let mut out = Vec::new();
    for (t0, t1) in SPANS {
        let mut probe = TableProbe::new(ClassicalPotential::new(spec.clone(), cfg.mass).unwrap());
        let mut mid = None;
        while probe.end().is_none_or(|e| e < t1) {
            let step = tl.step().unwrap();
            if (step.polar.time - 0.5 * (t0 + t1)).abs() < 1e-9 {
                mid = Some(step.polar.clone());
            }
            for table in step.tables {
                if table.time >= t0 - 1e-9 {
                    probe.push(table).unwrap();
                }
            }
        }
        let mid = mid.unwrap();
        let peak = mid.amplitude.iter().cloned().fold(0.0, f64::max);
        let support = (0..grid.len())
            .filter(|&i| mid.amplitude[i] > 1e-3 * peak && !mid.node_mask[i])
            .map(|i| grid.x(i))
            .collect();
        out.push(Window { probe, mid, support, t0, t1 });
    }
    out
}

pub fn windows() -> &'static [Window] {
    static CELL: OnceLock<Vec<Window>> = OnceLock::new();
    CELL.get_or_init(build)
}

/// State at fractions `(ft, fx)` of a window's time span and support, with
/// `q̇ = (u, r·u)`.
pub fn state_in(w: &Window, ft: f64, fx: f64, u: f64, r: f64) -> ExtendedState {
    let t = w.t0 + 0.5 + ft * (w.t1 - w.t0 - 1.0);
    let i = ((fx * w.support.len() as f64) as usize).min(w.support.len() - 1);
    let dx = w.mid.grid.dx();
    let x = w.support[i] + (fx * w.support.len() as f64).fract() * 0.5 * dx;
    ExtendedState::planar(t, x, u, r * u, ParamKind::Tau).unwrap()
}

/// `½ m (r u)² / u² - Q`: the factor whose cube sets `det g`.
pub fn det_factor(w: &Window, s: &ExtendedState) -> f64 {
    let q = w.probe.quantum(&s.q).unwrap().value;
    let v = s.qdot[1] / s.qdot[0];
    0.5 * MASS * v * v - q
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
