//! Line fronts: the ensemble cut at a common time or arclength.

use serde::{Deserialize, Serialize};

use crate::finsler::ExtendedTrajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrontPlane {
    /// `(q¹, q̇¹)` at fixed coordinate time.
    Q1Qdot1,
    /// `(q¹, q⁰)` at fixed arclength.
    Q1Q0,
    /// `(q¹, s)` at fixed coordinate time.
    Q1Tau,
}

impl FrontPlane {
    pub fn name(self) -> &'static str {
        match self {
            FrontPlane::Q1Qdot1 => "q1_qdot1",
            FrontPlane::Q1Q0 => "q1_q0",
            FrontPlane::Q1Tau => "q1_tau",
        }
    }

    /// Column name of the second coordinate.
    pub fn value_name(self) -> &'static str {
        match self {
            FrontPlane::Q1Qdot1 => "qdot1",
            FrontPlane::Q1Q0 => "q0",
            FrontPlane::Q1Tau => "tau",
        }
    }

    /// Column name of the front label.
    pub fn label_name(self) -> &'static str {
        match self {
            FrontPlane::Q1Q0 => "s",
            _ => "t",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontPoint {
    pub id: usize,
    pub q1: f64,
    pub value: f64,
    pub node_flag: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineFront {
    pub plane: FrontPlane,
    pub label: f64,
    pub points: Vec<FrontPoint>,
}

impl LineFront {
    pub fn q1(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.q1).collect()
    }
}

/// Fronts every `every` units of the plane's label, from 0 to the furthest
/// label any trajectory reaches. Each front holds one point per trajectory
/// that covers the label.
pub fn export_fronts(trajectories: &[ExtendedTrajectory], plane: FrontPlane, every: f64) -> Vec<LineFront> {
    if !(every > 0.0) {
        return Vec::new();
    }
    let reach = |t: &ExtendedTrajectory| match plane {
        FrontPlane::Q1Q0 => t.last().s - t.samples[0].s,
        _ => t.last().q[0],
    };
    let furthest = trajectories.iter().map(reach).fold(f64::NEG_INFINITY, f64::max);
    if !furthest.is_finite() {
        return Vec::new();
    }
    let count = (furthest / every + 1e-9).floor() as usize;
    (0..=count)
        .map(|k| {
            let label = k as f64 * every;
            let points = trajectories
                .iter()
                .filter_map(|traj| {
                    let (state, flag) = match plane {
                        FrontPlane::Q1Q0 => traj.state_at_param(traj.samples[0].s + label)?,
                        _ => traj.state_at_time(label)?,
                    };
                    let value = match plane {
                        FrontPlane::Q1Qdot1 => state.qdot[1],
                        FrontPlane::Q1Q0 => state.q[0],
                        FrontPlane::Q1Tau => state.param,
                    };
                    Some(FrontPoint { id: traj.id, q1: state.q[1], value, node_flag: flag })
                })
                .collect();
            LineFront { plane, label, points }
        })
        .collect()
}
