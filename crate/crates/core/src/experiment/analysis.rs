//! Summary statistics of a run: equivariance, projection agreement, curvature
//! signs, front spread, and arclength time dilation.

use serde::Serialize;

use super::fronts::{export_fronts, FrontPlane, LineFront};
use super::pipeline::{DensityRecord, ExperimentOutput};
use crate::bohmian::TrajectoryRecord;
use crate::curvature::CurvaturePoint;
use crate::finsler::ExtendedTrajectory;

/// Kolmogorov–Smirnov distance between samples and the distribution with
/// density `density` on `grid` (trapezoidal CDF, linear in between).
pub fn ks_distance(samples: &[f64], record: &DensityRecord) -> f64 {
    let g = &record.grid;
    let dx = g.dx();
    let n = record.density.len();
    let mut cdf = vec![0.0; n];
    for i in 1..n {
        cdf[i] = cdf[i - 1] + 0.5 * (record.density[i - 1] + record.density[i]) * dx;
    }
    let total = cdf[n - 1];
    let cdf_at = |x: f64| -> f64 {
        let u = (x - g.x_min) / dx;
        if u <= 0.0 {
            return 0.0;
        }
        let i = u.floor() as usize;
        if i + 1 >= n {
            return 1.0;
        }
        let w = u - i as f64;
        ((1.0 - w) * cdf[i] + w * cdf[i + 1]) / total
    };
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let m = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf_at(x);
            (f - i as f64 / m).abs().max((f - (i + 1) as f64 / m).abs())
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivarianceReport {
    pub time: f64,
    pub ks: f64,
    pub n: usize,
}

/// KS distance of the first-order ensemble at each recorded density time.
pub fn equivariance(out: &ExperimentOutput) -> Vec<EquivarianceReport> {
    out.densities
        .iter()
        .map(|d| {
            let xs: Vec<f64> = out.first_order.iter().filter_map(|r| r.position_at(d.time)).collect();
            EquivarianceReport { time: d.time, ks: ks_distance(&xs, d), n: xs.len() }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct AgreementReport {
    /// Spread of second-order positions over the whole run.
    pub spatial_range: f64,
    /// Largest deviation over trajectories and unflagged times.
    pub max_deviation: f64,
    pub worst_id: Option<usize>,
    pub worst_time: f64,
    pub compared: usize,
    pub excluded_flagged: usize,
    /// Times with no counterpart (truncated geodesic, lost trajectory).
    pub missing: usize,
    /// Largest deviation on each trajectory before its first flagged sample.
    pub max_deviation_before_first_flag: f64,
}

impl AgreementReport {
    pub fn relative(&self) -> f64 {
        self.max_deviation / self.spatial_range
    }
}

pub fn spatial_range(records: &[TrajectoryRecord]) -> f64 {
    let (lo, hi) = records
        .iter()
        .flat_map(|r| r.points.iter())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.x), hi.max(p.x)));
    hi - lo
}

fn agreement<F>(reference: &[TrajectoryRecord], mut other: F) -> AgreementReport
where
    F: FnMut(usize, f64) -> Option<(f64, bool)>,
{
    let mut rep = AgreementReport {
        spatial_range: spatial_range(reference),
        max_deviation: 0.0,
        worst_id: None,
        worst_time: f64::NAN,
        compared: 0,
        excluded_flagged: 0,
        missing: 0,
        max_deviation_before_first_flag: 0.0,
    };
    for (idx, rec) in reference.iter().enumerate() {
        let mut clean = true;
        for p in &rec.points {
            match other(idx, p.t) {
                None => rep.missing += 1,
                Some((x, flag)) => {
                    let dev = (x - p.x).abs();
                    if flag || p.node_flag {
                        rep.excluded_flagged += 1;
                        clean = false;
                        continue;
                    }
                    rep.compared += 1;
                    if clean {
                        rep.max_deviation_before_first_flag = rep.max_deviation_before_first_flag.max(dev);
                    }
                    if dev > rep.max_deviation {
                        rep.max_deviation = dev;
                        rep.worst_id = Some(rec.id);
                        rep.worst_time = p.t;
                    }
                }
            }
        }
    }
    rep
}

/// Geodesic projections `q¹(t)` against second-order Bohmian `x(t)`.
pub fn geodesic_vs_second_order(second: &[TrajectoryRecord], geodesics: &[ExtendedTrajectory]) -> AgreementReport {
    agreement(second, |idx, t| {
        let g = geodesics.get(idx)?;
        let (state, flag) = g.state_at_time(t)?;
        Some((state.q[1], flag))
    })
}

/// First-order against second-order Bohmian positions.
pub fn first_vs_second_order(first: &[TrajectoryRecord], second: &[TrajectoryRecord]) -> AgreementReport {
    agreement(second, |idx, t| {
        let r = first.get(idx)?;
        let j = r.points.partition_point(|p| p.t < t - 1e-9);
        let p = r.points.get(j)?;
        if (p.t - t).abs() > 1e-9 {
            return Some((r.position_at(t)?, p.node_flag));
        }
        Some((p.x, p.node_flag))
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CurvatureSignReport {
    pub early_trusted: usize,
    pub early_positive: usize,
    pub intermediate_positive: usize,
    pub intermediate_negative: usize,
    pub late_right_trusted: usize,
    pub late_right_negative: usize,
    pub untrusted: usize,
}

impl CurvatureSignReport {
    pub fn early_all_positive(&self) -> bool {
        self.early_trusted > 0 && self.early_positive == self.early_trusted
    }

    pub fn intermediate_mixed(&self) -> bool {
        self.intermediate_positive > 0 && self.intermediate_negative > 0
    }

    pub fn late_right_all_negative(&self) -> bool {
        self.late_right_trusted > 0 && self.late_right_negative == self.late_right_trusted
    }
}

/// Sign census: `t < early_end`, `early_end ≤ t < late_start`, and
/// `t ≥ late_start` restricted to `q¹ > q_p`.
pub fn curvature_signs(rows: &[CurvaturePoint], q_p: f64, early_end: f64, late_start: f64) -> CurvatureSignReport {
    let mut rep = CurvatureSignReport {
        early_trusted: 0,
        early_positive: 0,
        intermediate_positive: 0,
        intermediate_negative: 0,
        late_right_trusted: 0,
        late_right_negative: 0,
        untrusted: 0,
    };
    for r in rows {
        if !r.trusted || !r.r.is_finite() {
            rep.untrusted += 1;
            continue;
        }
        if r.t < early_end {
            rep.early_trusted += 1;
            rep.early_positive += usize::from(r.r > 0.0);
        } else if r.t < late_start {
            rep.intermediate_positive += usize::from(r.r > 0.0);
            rep.intermediate_negative += usize::from(r.r < 0.0);
        } else if r.q1 > q_p {
            rep.late_right_trusted += 1;
            rep.late_right_negative += usize::from(r.r < 0.0);
        }
    }
    rep
}

fn std_dev(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

#[derive(Debug, Clone, Serialize)]
pub struct FrontSpreadReport {
    /// `(t, std of q¹)` per fixed-time front.
    pub spread: Vec<(f64, f64)>,
    pub min_time: f64,
    pub min_spread: f64,
}

impl FrontSpreadReport {
    /// Spread strictly decreases to an interior minimum, then grows past the start value.
    pub fn contracts_then_spreads(&self) -> bool {
        let n = self.spread.len();
        if n < 3 {
            return false;
        }
        let first = self.spread[0].1;
        let last = self.spread[n - 1].1;
        let interior = self.min_time > self.spread[0].0 && self.min_time < self.spread[n - 1].0;
        interior && self.min_spread < first && last > first
    }
}

pub fn front_spread(fronts: &[LineFront]) -> FrontSpreadReport {
    let spread: Vec<(f64, f64)> =
        fronts.iter().filter(|f| f.points.len() >= 2).map(|f| (f.label, std_dev(&f.q1()))).collect();
    let (min_time, min_spread) =
        spread.iter().cloned().fold((f64::NAN, f64::INFINITY), |best, p| if p.1 < best.1 { p } else { best });
    FrontSpreadReport { spread, min_time, min_spread }
}

#[derive(Debug, Clone, Serialize)]
pub struct TimeDilationReport {
    /// Fixed-arclength fronts whose mean `q⁰` is at least this time.
    pub late_from: f64,
    pub pairs: usize,
    pub mean_gap_right: f64,
    pub mean_gap_left: f64,
}

impl TimeDilationReport {
    pub fn right_runs_faster(&self) -> bool {
        self.pairs > 0 && self.mean_gap_right > self.mean_gap_left
    }
}

/// Mean `Δq⁰` between successive fixed-arclength fronts for the rightmost and
/// leftmost deciles of `q¹`, over fronts whose mean `q⁰ ≥ late_from`.
pub fn time_dilation(fronts: &[LineFront], late_from: f64) -> TimeDilationReport {
    let mut right = Vec::new();
    let mut left = Vec::new();
    let mut pairs = 0;
    for w in fronts.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let mut gaps: Vec<(f64, f64)> = b
            .points
            .iter()
            .filter_map(|pb| {
                let pa = a.points.iter().find(|p| p.id == pb.id)?;
                Some((pb.q1, pb.value - pa.value))
            })
            .collect();
        if gaps.len() < 10 {
            continue;
        }
        let mean_q0 = b.points.iter().map(|p| p.value).sum::<f64>() / b.points.len() as f64;
        if mean_q0 < late_from {
            continue;
        }
        gaps.sort_by(|x, y| x.0.total_cmp(&y.0));
        let decile = (gaps.len() / 10).max(1);
        left.extend(gaps[..decile].iter().map(|g| g.1));
        right.extend(gaps[gaps.len() - decile..].iter().map(|g| g.1));
        pairs += 1;
    }
    let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
    TimeDilationReport { late_from, pairs, mean_gap_right: mean(&right), mean_gap_left: mean(&left) }
}

/// All fronts of a run.
#[derive(Debug, Clone)]
pub struct FrontSet {
    pub q1_qdot1: Vec<LineFront>,
    pub q1_q0: Vec<LineFront>,
    pub q1_tau: Vec<LineFront>,
}

pub fn fronts_of(out: &ExperimentOutput) -> FrontSet {
    let c = &out.config;
    FrontSet {
        q1_qdot1: export_fronts(&out.geodesics, FrontPlane::Q1Qdot1, c.front_every),
        q1_q0: export_fronts(&out.geodesics, FrontPlane::Q1Q0, c.front_every_s),
        q1_tau: export_fronts(&out.geodesics, FrontPlane::Q1Tau, c.front_every),
    }
}
