//! Bohmian trajectories: the first-order guidance law `ẋ = ∂ₓS/m` and the
//! second-order law `m ẍ = -∂ₓ(V + Q)`, both with classic RK4 in time.

use std::collections::VecDeque;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::Grid1D;
use crate::polar::{stencil_masked, PolarSnapshot};
use crate::probe::FieldProbe;
use crate::spline::UniformSpline;

/// One recorded point of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub x: f64,
    pub v: f64,
    pub node_flag: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrajectoryStatus {
    Running,
    Completed,
    LeftGrid { t: f64 },
}

#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub id: usize,
    pub points: Vec<TrajectoryPoint>,
    pub status: TrajectoryStatus,
}

impl TrajectoryRecord {
    pub fn new(id: usize, t0: f64, x0: f64, v0: f64) -> Self {
        Self {
            id,
            points: vec![TrajectoryPoint { t: t0, x: x0, v: v0, node_flag: false }],
            status: TrajectoryStatus::Running,
        }
    }

    pub fn last(&self) -> &TrajectoryPoint {
        self.points.last().expect("trajectory has at least its initial point")
    }

    pub fn is_running(&self) -> bool {
        self.status == TrajectoryStatus::Running
    }

    /// Position at time `t` by cubic Hermite interpolation on `(x, v)`.
    pub fn position_at(&self, t: f64) -> Option<f64> {
        let p = &self.points;
        if p.is_empty() || t < p[0].t || t > p[p.len() - 1].t {
            return None;
        }
        let j = p.partition_point(|q| q.t < t);
        if j == 0 {
            return Some(p[0].x);
        }
        let (a, b) = (&p[j - 1], &p[j]);
        let h = b.t - a.t;
        let w = (t - a.t) / h;
        let (w2, w3) = (w * w, w * w * w);
        Some(
            (2.0 * w3 - 3.0 * w2 + 1.0) * a.x
                + (w3 - 2.0 * w2 + w) * h * a.v
                + (-2.0 * w3 + 3.0 * w2) * b.x
                + (w3 - w2) * h * b.v,
        )
    }
}

/// `∂ₓS/m` on the grid at one time.
#[derive(Debug, Clone)]
pub struct VelocityTable {
    pub grid: Grid1D,
    pub time: f64,
    spline: UniformSpline,
    node_mask: Vec<bool>,
}

impl VelocityTable {
    pub fn from_snapshot(snap: &PolarSnapshot, mass: f64) -> Self {
        let v = snap.d_action[0].iter().map(|s| s / mass).collect();
        Self {
            grid: snap.grid,
            time: snap.time,
            spline: UniformSpline::new(snap.grid.x_min, snap.grid.dx(), v),
            node_mask: snap.node_mask.clone(),
        }
    }

    pub fn sample(&self, x: f64) -> Result<(f64, bool)> {
        let g = &self.grid;
        if !(x >= g.x_min && x <= g.x_last()) {
            return Err(Error::OutOfRange { x, min: g.x_min, max: g.x_last() });
        }
        Ok((self.spline.eval(x), stencil_masked(g, &self.node_mask, x)))
    }
}

/// Bohmian velocity `∂ₓS/m` at `x` from a single snapshot.
pub fn velocity_field(snap: &PolarSnapshot, x: f64, mass: f64) -> Result<f64> {
    let g = &snap.grid;
    if !(x >= g.x_min && x <= g.x_last()) {
        return Err(Error::OutOfRange { x, min: g.x_min, max: g.x_last() });
    }
    if snap.stencil_masked(x) {
        return Err(Error::NodeRegion { x });
    }
    Ok(snap.action_gradient_spline().eval(x) / mass)
}

/// Time-ordered velocity tables, linear in time between neighbours.
#[derive(Debug, Clone, Default)]
pub struct VelocityWindow {
    tables: VecDeque<Arc<VelocityTable>>,
}

impl VelocityWindow {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, table: Arc<VelocityTable>) -> Result<()> {
        if let Some(last) = self.tables.back() {
            if !(table.time > last.time) {
                return Err(Error::Mismatch("velocity tables must be appended in increasing time".into()));
            }
        }
        self.tables.push_back(table);
        Ok(())
    }

    pub fn drop_before(&mut self, t: f64) {
        while self.tables.len() > 2 && self.tables[1].time <= t {
            self.tables.pop_front();
        }
    }

    pub fn end(&self) -> Option<f64> {
        self.tables.back().map(|t| t.time)
    }

    pub fn start(&self) -> Option<f64> {
        self.tables.front().map(|t| t.time)
    }

    pub fn sample(&self, t: f64, x: f64) -> Result<(f64, bool)> {
        let n = self.tables.len();
        let (start, end) = match (self.start(), self.end()) {
            (Some(s), Some(e)) => (s, e),
            _ => return Err(Error::OutOfWindow { t, start: f64::NAN, end: f64::NAN }),
        };
        let slack = 1e-9 * (end - start).abs().max(1.0);
        if !(t >= start - slack && t <= end + slack) {
            return Err(Error::OutOfWindow { t, start, end });
        }
        if n == 1 {
            return self.tables[0].sample(x);
        }
        let k = self.tables.partition_point(|tab| tab.time <= t).clamp(1, n - 1) - 1;
        let (a, b) = (&self.tables[k], &self.tables[k + 1]);
        let w = ((t - a.time) / (b.time - a.time)).clamp(0.0, 1.0);
        let (va, ma) = a.sample(x)?;
        if w == 0.0 {
            return Ok((va, ma));
        }
        let (vb, mb) = b.sample(x)?;
        Ok(((1.0 - w) * va + w * vb, ma || mb))
    }
}

fn record_failure(rec: &mut TrajectoryRecord, err: Error) -> bool {
    match err {
        Error::OutOfWindow { .. } => false,
        _ => {
            rec.status = TrajectoryStatus::LeftGrid { t: rec.last().t };
            true
        }
    }
}

/// RK4 integrator for `ẋ = v(t, x)` over a [`VelocityWindow`].
#[derive(Debug, Clone, Copy)]
pub struct FirstOrderStepper {
    pub dt: f64,
    pub t_stop: f64,
}

impl FirstOrderStepper {
    /// Steps while the next step stays inside `t_available`.
    pub fn advance(&self, rec: &mut TrajectoryRecord, window: &VelocityWindow, t_available: f64) {
        while rec.is_running() {
            let p = *rec.last();
            if p.t >= self.t_stop - 1e-9 * self.dt {
                rec.status = TrajectoryStatus::Completed;
                return;
            }
            let dt = self.dt.min(self.t_stop - p.t);
            if p.t + dt > t_available + 1e-9 * self.dt {
                return;
            }
            let step = || -> Result<TrajectoryPoint> {
                let (k1, m1) = window.sample(p.t, p.x)?;
                let (k2, m2) = window.sample(p.t + 0.5 * dt, p.x + 0.5 * dt * k1)?;
                let (k3, m3) = window.sample(p.t + 0.5 * dt, p.x + 0.5 * dt * k2)?;
                let (k4, m4) = window.sample(p.t + dt, p.x + dt * k3)?;
                let x = p.x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                let (v, m5) = window.sample(p.t + dt, x)?;
                Ok(TrajectoryPoint { t: p.t + dt, x, v, node_flag: m1 || m2 || m3 || m4 || m5 })
            };
            match step() {
                Ok(next) => rec.points.push(next),
                Err(e) => {
                    record_failure(rec, e);
                    return;
                }
            }
        }
    }
}

/// RK4 integrator for `m ẍ = -∂ₓ(V + Q)` over any [`FieldProbe`].
#[derive(Debug, Clone, Copy)]
pub struct SecondOrderStepper {
    pub dt: f64,
    pub t_stop: f64,
    pub mass: f64,
}

impl SecondOrderStepper {
    fn accel<P: FieldProbe + ?Sized>(&self, probe: &P, t: f64, x: f64) -> Result<(f64, bool)> {
        let q = [t, x];
        let qs = probe.quantum(&q)?;
        let vs = probe.classical(&q)?;
        Ok((-(qs.gradient[1] + vs.gradient[1]) / self.mass, qs.masked))
    }

    pub fn advance<P: FieldProbe + ?Sized>(&self, rec: &mut TrajectoryRecord, probe: &P, t_available: f64) {
        while rec.is_running() {
            let p = *rec.last();
            if p.t >= self.t_stop - 1e-9 * self.dt {
                rec.status = TrajectoryStatus::Completed;
                return;
            }
            let dt = self.dt.min(self.t_stop - p.t);
            if p.t + dt > t_available + 1e-9 * self.dt {
                return;
            }
            let step = || -> Result<TrajectoryPoint> {
                let h = 0.5 * dt;
                let (a1, m1) = self.accel(probe, p.t, p.x)?;
                let (x2, v2) = (p.x + h * p.v, p.v + h * a1);
                let (a2, m2) = self.accel(probe, p.t + h, x2)?;
                let (x3, v3) = (p.x + h * v2, p.v + h * a2);
                let (a3, m3) = self.accel(probe, p.t + h, x3)?;
                let (x4, v4) = (p.x + dt * v3, p.v + dt * a3);
                let (a4, m4) = self.accel(probe, p.t + dt, x4)?;
                let x = p.x + dt / 6.0 * (p.v + 2.0 * v2 + 2.0 * v3 + v4);
                let v = p.v + dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
                let g = probe.quantum(&[p.t + dt, x])?;
                Ok(TrajectoryPoint { t: p.t + dt, x, v, node_flag: m1 || m2 || m3 || m4 || g.masked })
            };
            match step() {
                Ok(next) => rec.points.push(next),
                Err(e) => {
                    record_failure(rec, e);
                    return;
                }
            }
        }
    }
}

/// First-order trajectories over an equally spaced snapshot sequence.
pub fn integrate_first_order(
    snapshots: &[PolarSnapshot],
    x0: &[f64],
    dt: f64,
    mass: f64,
) -> Result<Vec<TrajectoryRecord>> {
    let (first, last) = match (snapshots.first(), snapshots.last()) {
        (Some(a), Some(b)) => (a.time, b.time),
        _ => return Err(Error::InvalidParameter("no snapshots".into())),
    };
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let mut window = VelocityWindow::new();
    for s in snapshots {
        window.push(Arc::new(VelocityTable::from_snapshot(s, mass)))?;
    }
    let stepper = FirstOrderStepper { dt, t_stop: last };
    let out = x0
        .iter()
        .enumerate()
        .map(|(id, &x)| {
            let v = window.sample(first, x).map(|s| s.0).unwrap_or(f64::NAN);
            let mut rec = TrajectoryRecord::new(id, first, x, v);
            if !v.is_finite() {
                rec.status = TrajectoryStatus::LeftGrid { t: first };
            }
            stepper.advance(&mut rec, &window, last);
            rec
        })
        .collect();
    Ok(out)
}

/// Second-order trajectories on `[t0, t1]` with given initial velocities.
pub fn integrate_second_order<P: FieldProbe + ?Sized>(
    probe: &P,
    x0: &[f64],
    v0: &[f64],
    t0: f64,
    t1: f64,
    dt: f64,
    mass: f64,
) -> Result<Vec<TrajectoryRecord>> {
    if x0.len() != v0.len() {
        return Err(Error::Mismatch("positions and velocities differ in length".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let stepper = SecondOrderStepper { dt, t_stop: t1, mass };
    Ok(x0
        .iter()
        .zip(v0)
        .enumerate()
        .map(|(id, (&x, &v))| {
            let mut rec = TrajectoryRecord::new(id, t0, x, v);
            stepper.advance(&mut rec, probe, t1);
            rec
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe::FreeGaussianProbe;

    #[test]
    fn second_order_follows_free_gaussian_scaling() {
        let probe = FreeGaussianProbe::new(4.0, 10.8842, 2.0, 2000.0);
        let x0 = [1.6, 2.0, 2.3];
        let v0: Vec<f64> = x0.iter().map(|&x| probe.velocity(0.0, x)).collect();
        let recs = integrate_second_order(&probe, &x0, &v0, 0.0, 400.0, 0.5, 2000.0).unwrap();
        for (rec, &x) in recs.iter().zip(&x0) {
            assert_eq!(rec.status, TrajectoryStatus::Completed);
            let end = rec.last();
            assert!((end.t - 400.0).abs() < 1e-9);
            assert!((end.x - probe.trajectory(x, 400.0)).abs() < 1e-8, "{} vs {}", end.x, probe.trajectory(x, 400.0));
        }
    }

    #[test]
    fn hermite_position_matches_endpoints() {
        let mut rec = TrajectoryRecord::new(0, 0.0, 1.0, 2.0);
        rec.points.push(TrajectoryPoint { t: 1.0, x: 3.0, v: 2.0, node_flag: false });
        assert_eq!(rec.position_at(0.0), Some(1.0));
        assert!((rec.position_at(0.5).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(rec.position_at(2.0), None);
    }
}
