//! Riemann, Ricci, and scalar curvature of the extended-space metric.
//!
//! `R^δ_{αβγ} = ∂_β Γ^δ_{αγ} - ∂_γ Γ^δ_{αβ} + Γ^λ_{αγ} Γ^δ_{λβ} - Γ^λ_{αβ} Γ^δ_{λγ}`,
//! contracted as `R_{αβ} = R^γ_{αβγ}` and `R = g^{αβ} R_{αβ}`. With this
//! contraction a round sphere has negative scalar curvature.

use nalgebra::DMatrix;

use crate::error::Result;
use crate::finsler::{christoffel_analytic, ExtendedState, ExtendedTrajectory};
use crate::probe::FieldProbe;

#[derive(Debug, Clone)]
pub struct CurvatureSample {
    pub dim: usize,
    /// `R^δ_{αβγ}` stored at `[δ][α][β][γ]`.
    pub riemann: Vec<f64>,
    pub ricci: DMatrix<f64>,
    pub scalar: f64,
    /// False when any stencil point touched a node region or the stencil
    /// straddles a sign change of `det g`.
    pub trusted: bool,
    pub at: ExtendedState,
}

impl CurvatureSample {
    #[inline]
    pub fn component(&self, delta: usize, a: usize, b: usize, c: usize) -> f64 {
        let d = self.dim;
        self.riemann[((delta * d + a) * d + b) * d + c]
    }
}

/// Curvature at `state`, with `∂Γ` from central differences in the positions
/// using an absolute step `h` in every coordinate and velocities held fixed.
pub fn riemann<P: FieldProbe + ?Sized>(state: &ExtendedState, probe: &P, mass: f64, h: f64) -> Result<CurvatureSample> {
    state.validate()?;
    let d = state.dim();
    let centre = christoffel_analytic(state, probe, mass)?;
    let mut trusted = !centre.masked;
    // dgamma[β][δ][α][γ] = ∂_β Γ^δ_{αγ}
    let mut dgamma = vec![0.0; d * d * d * d];
    for b in 0..d {
        let mut plus = state.clone();
        let mut minus = state.clone();
        plus.q[b] += h;
        minus.q[b] -= h;
        let cp = christoffel_analytic(&plus, probe, mass)?;
        let cm = christoffel_analytic(&minus, probe, mass)?;
        trusted &= !(cp.masked || cm.masked);
        trusted &= cp.metric.det.signum() == centre.metric.det.signum()
            && cm.metric.det.signum() == centre.metric.det.signum();
        for (k, (p, m)) in cp.second.iter().zip(&cm.second).enumerate() {
            dgamma[b * d * d * d + k] = (p - m) / (2.0 * h);
        }
    }
    let dg = |b: usize, delta: usize, a: usize, c: usize| dgamma[((b * d + delta) * d + a) * d + c];
    let gam = |delta: usize, a: usize, c: usize| centre.gamma(delta, a, c);
    let mut riemann = vec![0.0; d * d * d * d];
    for delta in 0..d {
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    let mut r = dg(b, delta, a, c) - dg(c, delta, a, b);
                    for l in 0..d {
                        r += gam(l, a, c) * gam(delta, l, b) - gam(l, a, b) * gam(delta, l, c);
                    }
                    riemann[((delta * d + a) * d + b) * d + c] = r;
                }
            }
        }
    }
    let mut ricci = DMatrix::zeros(d, d);
    for a in 0..d {
        for b in 0..d {
            ricci[(a, b)] = (0..d).map(|c| riemann[((c * d + a) * d + b) * d + c]).sum();
        }
    }
    let g_inv = &centre.metric.g_inv;
    let scalar =
        (0..d).flat_map(|a| (0..d).map(move |b| (a, b))).map(|(a, b)| g_inv[(a, b)] * ricci[(a, b)]).sum::<f64>();
    trusted &= scalar.is_finite();
    Ok(CurvatureSample { dim: d, riemann, ricci, scalar, trusted, at: state.clone() })
}

/// One row of the curvature export.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvaturePoint {
    pub t: f64,
    pub id: usize,
    pub q1: f64,
    pub r: f64,
    pub trusted: bool,
}

/// Scalar curvature along a trajectory at the given coordinate times.
///
/// Times outside the recorded range are skipped; failures at a sample time
/// (singular metric, grid exit) produce an untrusted `NaN` entry.
pub fn curvature_along<P: FieldProbe + ?Sized>(
    traj: &ExtendedTrajectory,
    probe: &P,
    mass: f64,
    times: &[f64],
    h: f64,
) -> Vec<CurvaturePoint> {
    times
        .iter()
        .filter_map(|&t| {
            let (state, flagged) = traj.state_at_time(t)?;
            let q1 = state.q[1];
            Some(match riemann(&state, probe, mass, h) {
                Ok(c) => CurvaturePoint { t, id: traj.id, q1, r: c.scalar, trusted: c.trusted && !flagged },
                Err(_) => CurvaturePoint { t, id: traj.id, q1, r: f64::NAN, trusted: false },
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finsler::ParamKind;
    use crate::probe::{ConstantProbe, FreeGaussianProbe};

    #[test]
    fn constant_q_is_flat() {
        let s = ExtendedState::planar(40.0, 3.0, 1.0, 0.005, ParamKind::Tau).unwrap();
        let c = riemann(&s, &ConstantProbe::new(0.002), 2000.0, 1e-4).unwrap();
        assert!(c.riemann.iter().all(|&r| r == 0.0));
        assert_eq!(c.scalar, 0.0);
        assert!(c.trusted);
    }

    #[test]
    fn riemann_antisymmetric_in_last_pair() {
        let probe = FreeGaussianProbe::new(4.0, 10.8842, 2.0, 2000.0);
        let s = ExtendedState::planar(100.0, 2.8, 1.0, 0.0056, ParamKind::Tau).unwrap();
        let c = riemann(&s, &probe, 2000.0, 1e-4).unwrap();
        let scale = c.riemann.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(scale > 0.0);
        for delta in 0..2 {
            for a in 0..2 {
                for b in 0..2 {
                    for g in 0..2 {
                        let sum = c.component(delta, a, b, g) + c.component(delta, a, g, b);
                        assert!(sum.abs() <= 1e-12 * scale);
                    }
                }
            }
        }
    }
}
