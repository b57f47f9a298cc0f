//! The scattering run: field, Bohmian ensembles, geodesics, and curvature,
//! all advanced together over a sliding window of field tables.

use std::collections::VecDeque;
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, InitMode};
use super::sampling::sample_initial_positions;
use crate::bohmian::{
    FirstOrderStepper, SecondOrderStepper, TrajectoryRecord, TrajectoryStatus, VelocityTable, VelocityWindow,
};
use crate::curvature::{curvature_along, CurvaturePoint};
use crate::error::Result;
use crate::field::{init_packet, SplitOperator};
use crate::finsler::{ExtendedState, ExtendedTrajectory, GeodesicIntegrator, ParamKind};
use crate::grid::Grid1D;
use crate::polar::{continuity_residual, hj_residual, quantum_potential, PolarSnapshot};
use crate::probe::{ClassicalPotential, TableProbe};
use crate::timeline::FieldTimeline;

/// Which parts of the run to execute; the field is always propagated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stages {
    pub bohmian: bool,
    pub geodesics: bool,
    pub curvature: bool,
}

impl Stages {
    pub const FIELD: Stages = Stages { bohmian: false, geodesics: false, curvature: false };
    pub const TRAJECTORIES: Stages = Stages { bohmian: true, geodesics: false, curvature: false };
    pub const GEODESICS: Stages = Stages { bohmian: false, geodesics: true, curvature: false };
    pub const CURVATURE: Stages = Stages { bohmian: false, geodesics: true, curvature: true };
    pub const ALL: Stages = Stages { bohmian: true, geodesics: true, curvature: true };
}

/// Field data kept at one snapshot time.
#[derive(Debug, Clone)]
pub struct SnapshotRecord {
    pub time: f64,
    pub grid: Grid1D,
    pub psi: Vec<Complex64>,
    pub amplitude: Vec<f64>,
    pub action: Vec<f64>,
    pub q: Vec<f64>,
    pub node_mask: Vec<bool>,
    pub norm: f64,
}

/// Probability density kept for the equivariance check.
#[derive(Debug, Clone)]
pub struct DensityRecord {
    pub time: f64,
    pub grid: Grid1D,
    pub density: Vec<f64>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct FieldDiagnostics {
    pub steps: usize,
    pub max_norm_deviation: f64,
    pub hj_max: f64,
    pub hj_max_time: f64,
    pub continuity_max: f64,
    pub continuity_max_time: f64,
    /// Largest amplitude within 8 points of either edge, relative to the peak.
    pub max_edge_amplitude: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub stages: Stages,
    pub initial_positions: Vec<f64>,
    pub initial_velocities: Vec<f64>,
    pub snapshots: Vec<SnapshotRecord>,
    pub densities: Vec<DensityRecord>,
    pub first_order: Vec<TrajectoryRecord>,
    pub second_order: Vec<TrajectoryRecord>,
    pub geodesics: Vec<ExtendedTrajectory>,
    pub curvature: Vec<CurvaturePoint>,
    pub field: FieldDiagnostics,
    pub wall_time_s: f64,
}

struct GeodesicRun {
    traj: ExtendedTrajectory,
    next_curvature: usize,
    curvature: Vec<CurvaturePoint>,
}

fn is_at(t: f64, target: f64, dt: f64) -> bool {
    (t - target).abs() < 1e-6 * dt
}

fn snapshot_record(
    snap: &PolarSnapshot,
    psi: &[Complex64],
    mass: f64,
    threshold: f64,
    norm: f64,
) -> Result<SnapshotRecord> {
    let table = quantum_potential(snap, mass, threshold)?;
    Ok(SnapshotRecord {
        time: snap.time,
        grid: snap.grid,
        psi: psi.to_vec(),
        amplitude: snap.amplitude.clone(),
        action: snap.action.clone(),
        q: table.q,
        node_mask: snap.node_mask.clone(),
        norm,
    })
}

fn edge_ratio(amplitude: &[f64]) -> f64 {
    let n = amplitude.len();
    let peak = amplitude.iter().cloned().fold(0.0, f64::max);
    let edge = amplitude[..8].iter().chain(&amplitude[n - 8..]).cloned().fold(0.0, f64::max);
    edge / peak
}

/// Runs the configured stages and keeps everything needed for the exports.
pub fn simulate(config: &ExperimentConfig, stages: Stages) -> Result<ExperimentOutput> {
    config.validate()?;
    let clock = Instant::now();
    let grid = config.grid();
    let mass = config.mass;
    let dt = config.dt;
    let spec = config.potential();
    spec.validate(&grid)?;
    let potential = spec.on_grid(&grid, mass);
    let psi0 = init_packet(&grid, config.beta, config.k, config.q_c)?;
    let solver = SplitOperator::new(grid, &potential, dt, mass)?;
    let mut timeline = FieldTimeline::new(psi0, solver, config.node_threshold)?;

    let mut probe = TableProbe::new(ClassicalPotential::new(spec, mass)?);
    let mut velocities = VelocityWindow::new();
    velocities.push(Arc::new(VelocityTable::from_snapshot(timeline.polar(), mass)))?;

    let x0 = sample_initial_positions(config.beta, config.q_c, config.n_traj, config.sampling, config.seed)?;
    let v0: Vec<f64> = x0.iter().map(|&x| velocities.sample(0.0, x).map(|(v, _)| v)).collect::<Result<_>>()?;

    let mut first: Vec<TrajectoryRecord> = Vec::new();
    let mut second: Vec<TrajectoryRecord> = Vec::new();
    if stages.bohmian {
        for (id, (&x, &v)) in x0.iter().zip(&v0).enumerate() {
            first.push(TrajectoryRecord::new(id, 0.0, x, v));
            second.push(TrajectoryRecord::new(id, 0.0, x, v));
        }
    }
    let first_stepper = FirstOrderStepper { dt, t_stop: config.t_final };
    let second_stepper = SecondOrderStepper { dt, t_stop: config.t_final, mass };
    let integrator = GeodesicIntegrator {
        mass,
        forcing: config.forcing,
        metric_form: config.metric_form,
        ds: f64::INFINITY,
        dt_max: config.geodesic_dt_max,
        s_max: f64::INFINITY,
        t_stop: config.t_final,
    };
    let curvature_times: Vec<f64> =
        if stages.curvature { config.curvature_times().into_iter().filter(|&t| t > 0.0).collect() } else { Vec::new() };
    let mut geodesics: Vec<GeodesicRun> = Vec::new();
    let mut geodesics_started = !stages.geodesics;

    let snapshot_times = config.snapshot_times();
    let mut snapshots = Vec::new();
    let mut densities = Vec::new();
    let mut diag = FieldDiagnostics::default();
    let record_density = |snap: &PolarSnapshot, out: &mut Vec<DensityRecord>| {
        if config.ks_times.iter().any(|&t| is_at(snap.time, t, dt)) {
            out.push(DensityRecord { time: snap.time, grid: snap.grid, density: snap.density() });
        }
    };
    {
        let snap = timeline.polar();
        if snapshot_times.iter().any(|&t| is_at(0.0, t, dt)) {
            snapshots.push(snapshot_record(snap, &timeline.state().values, mass, config.node_threshold, 1.0)?);
        }
        record_density(snap, &mut densities);
        diag.max_edge_amplitude = edge_ratio(&snap.amplitude);
    }

    let lookahead = (2.0 / dt).ceil().max(2.0) as usize;
    let main_steps = (config.t_final / dt - 1e-9).ceil() as usize;
    let mut recent: VecDeque<Arc<PolarSnapshot>> = VecDeque::new();
    recent.push_back(timeline.polar().clone());

    for step in 1..=(main_steps + lookahead) {
        let out = timeline.step()?;
        let snap = out.polar.clone();
        let within = snap.time <= config.t_final + 1e-9 * dt;
        if within {
            let norm = timeline.state().norm();
            diag.steps = step;
            diag.max_norm_deviation = diag.max_norm_deviation.max((norm - 1.0).abs());
            diag.max_edge_amplitude = diag.max_edge_amplitude.max(edge_ratio(&snap.amplitude));
            if snapshot_times.iter().any(|&t| is_at(snap.time, t, dt)) {
                snapshots.push(snapshot_record(&snap, &timeline.state().values, mass, config.node_threshold, norm)?);
            }
            record_density(&snap, &mut densities);
            recent.push_back(snap.clone());
            if recent.len() > 3 {
                recent.pop_front();
            }
            if recent.len() == 3 {
                let triplet = [&*recent[0], &*recent[1], &*recent[2]];
                let hj = hj_residual(triplet, &potential, mass)?.max_abs();
                let cont = continuity_residual(triplet, mass)?.max_abs();
                if hj > diag.hj_max {
                    diag.hj_max = hj;
                    diag.hj_max_time = recent[1].time;
                }
                if cont > diag.continuity_max {
                    diag.continuity_max = cont;
                    diag.continuity_max_time = recent[1].time;
                }
            }
        }
        if stages.bohmian {
            velocities.push(Arc::new(VelocityTable::from_snapshot(&snap, mass)))?;
        }
        for table in out.tables {
            probe.push(table)?;
        }
        advance_all(
            stages,
            config,
            &integrator,
            &first_stepper,
            &second_stepper,
            &velocities,
            &probe,
            &mut first,
            &mut second,
            &mut geodesics,
            &mut geodesics_started,
            &x0,
            &v0,
            &curvature_times,
        )?;
        trim_windows(&mut velocities, &mut probe, &first, &second, &geodesics, &curvature_times);
    }
    if let Some(last) = timeline.finish() {
        probe.push(last)?;
    }
    advance_all(
        stages,
        config,
        &integrator,
        &first_stepper,
        &second_stepper,
        &velocities,
        &probe,
        &mut first,
        &mut second,
        &mut geodesics,
        &mut geodesics_started,
        &x0,
        &v0,
        &curvature_times,
    )?;
    for rec in first.iter_mut().chain(second.iter_mut()) {
        if rec.is_running() {
            rec.status = TrajectoryStatus::Completed;
        }
    }
    let mut curvature = Vec::new();
    let mut trajectories = Vec::new();
    for mut run in geodesics {
        integrator.finish(&mut run.traj);
        curvature.extend(run.curvature);
        trajectories.push(run.traj);
    }
    curvature.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.id.cmp(&b.id)));

    Ok(ExperimentOutput {
        config: config.clone(),
        stages,
        initial_positions: x0,
        initial_velocities: v0,
        snapshots,
        densities,
        first_order: first,
        second_order: second,
        geodesics: trajectories,
        curvature,
        field: diag,
        wall_time_s: clock.elapsed().as_secs_f64(),
    })
}

#[allow(clippy::too_many_arguments)]
fn advance_all(
    stages: Stages,
    config: &ExperimentConfig,
    integrator: &GeodesicIntegrator,
    first_stepper: &FirstOrderStepper,
    second_stepper: &SecondOrderStepper,
    velocities: &VelocityWindow,
    probe: &TableProbe,
    first: &mut [TrajectoryRecord],
    second: &mut [TrajectoryRecord],
    geodesics: &mut Vec<GeodesicRun>,
    geodesics_started: &mut bool,
    x0: &[f64],
    v0: &[f64],
    curvature_times: &[f64],
) -> Result<()> {
    let probe_end = probe.end().unwrap_or(f64::NEG_INFINITY);
    if stages.bohmian {
        let vel_end = velocities.end().unwrap_or(f64::NEG_INFINITY);
        first.par_iter_mut().for_each(|r| first_stepper.advance(r, velocities, vel_end));
        if probe_end >= 0.0 {
            second.par_iter_mut().for_each(|r| second_stepper.advance(r, probe, probe_end));
        }
    }
    if !*geodesics_started && probe.start().is_some_and(|s| s <= 0.0) {
        *geodesics = x0
            .iter()
            .zip(v0)
            .enumerate()
            .map(|(id, (&x, &v))| {
                let xdot = match config.init_mode {
                    InitMode::UnitVelocity => 1.0,
                    InitMode::BohmianConsistent => v,
                };
                let state = ExtendedState::planar(0.0, x, 1.0, xdot, ParamKind::Arclength)?;
                integrator.start(id, state, probe)
            })
            .map(|r| r.map(|traj| GeodesicRun { traj, next_curvature: 0, curvature: Vec::new() }))
            .collect::<Result<_>>()?;
        *geodesics_started = true;
    }
    if stages.geodesics && *geodesics_started {
        let h = config.curvature_h;
        geodesics.par_iter_mut().for_each(|run| {
            integrator.advance(&mut run.traj, probe, probe_end);
            let reached = run.traj.last().q[0];
            while let Some(&t) = curvature_times.get(run.next_curvature) {
                if t > reached {
                    if !run.traj.is_running() {
                        run.next_curvature = curvature_times.len();
                    }
                    break;
                }
                if t + 1.0 > probe_end {
                    break;
                }
                run.curvature.extend(curvature_along(&run.traj, probe, integrator.mass, &[t], h));
                run.next_curvature += 1;
            }
        });
    }
    Ok(())
}

fn trim_windows(
    velocities: &mut VelocityWindow,
    probe: &mut TableProbe,
    first: &[TrajectoryRecord],
    second: &[TrajectoryRecord],
    geodesics: &[GeodesicRun],
    curvature_times: &[f64],
) {
    let earliest = |recs: &[TrajectoryRecord]| {
        recs.iter().filter(|r| r.is_running()).map(|r| r.last().t).fold(f64::INFINITY, f64::min)
    };
    velocities.drop_before(earliest(first) - 2.0);
    let mut keep = earliest(second);
    for run in geodesics {
        if run.traj.is_running() {
            keep = keep.min(run.traj.last().q[0]);
        }
        if let Some(&t) = curvature_times.get(run.next_curvature) {
            keep = keep.min(t);
        }
    }
    if keep.is_finite() {
        probe.drop_before(keep - 2.0);
    }
}
