mod common;

use common::{state_in, windows, MASS};
use proptest::prelude::*;
use qgeo::curvature::riemann;
use qgeo::finsler::{kinetic, ExtendedState, ParamKind};
use qgeo::probe::{FieldProbe, FreeGaussianProbe};

fn gaussian() -> FreeGaussianProbe {
    FreeGaussianProbe::new(4.0, 10.8842, 2.0, MASS)
}

/// Gaussian curvature of the fixed-velocity metric by the Brioschi formula,
/// with `E = g₀₀`, `F = g₀₁`, `G = g₁₁` differentiated through `Q`.
fn brioschi<P: FieldProbe>(s: &ExtendedState, probe: &P) -> f64 {
    let qs = probe.quantum(&s.q).unwrap();
    let (q, qt, qx) = (qs.value, qs.gradient[0], qs.gradient[1]);
    let (qtt, qxx) = (qs.hessian[0], qs.hessian[3]);
    let u = s.qdot[0];
    let v = s.qdot[1];
    let t = kinetic(&s.qdot, MASS);
    let e = 3.0 * t * t / u.powi(4) + q * q;
    let f = -2.0 * MASS * v * t / u.powi(3);
    let g = MASS * MASS * v * v / (u * u) + (t / (u * u) - q) * MASS;
    // coordinates (u, v) = (q⁰, q¹)
    let (e_u, e_v) = (2.0 * q * qt, 2.0 * q * qx);
    let e_vv = 2.0 * (qx * qx + q * qxx);
    let (g_u, g_v) = (-MASS * qt, -MASS * qx);
    let g_uu = -MASS * qtt;
    let det3 = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let m1 = [[-0.5 * e_vv - 0.5 * g_uu, 0.5 * e_u, -0.5 * e_v], [-0.5 * g_u, e, f], [0.5 * g_v, f, g]];
    let m2 = [[0.0, 0.5 * e_v, 0.5 * g_u], [0.5 * e_v, e, f], [0.5 * g_u, f, g]];
    (det3(m1) - det3(m2)) / (e * g - f * f).powi(2)
}

#[test]
fn scalar_matches_brioschi_on_gaussian_packet() {
    let p = gaussian();
    for &t in &[0.0, 100.0, 400.0] {
        for &dx in &[-0.4, -0.1, 0.0, 0.2, 0.5] {
            let x = p.centre(t) + dx * p.sigma(t) / p.sigma0();
            let s = ExtendedState::planar(t, x, 1.3, 1.3 * p.velocity(t, x), ParamKind::Tau).unwrap();
            let r = riemann(&s, &p, MASS, 1e-4).unwrap().scalar;
            // the contraction R_{αβ} = R^γ_{αβγ} flips the usual sign: R = -2K
            let expect = -2.0 * brioschi(&s, &p);
            assert!((r - expect).abs() < 1e-5 * expect.abs(), "t={t} x={x}: {r} vs {expect}");
        }
    }
}

#[test]
fn scalar_matches_brioschi_off_trajectory_velocity() {
    let p = gaussian();
    for &(u, v) in &[(1.0, 0.004), (0.5, -0.006), (2.0, 0.02)] {
        let s = ExtendedState::planar(250.0, p.centre(250.0) + 0.1, u, v, ParamKind::Tau).unwrap();
        let r = riemann(&s, &p, MASS, 1e-4).unwrap().scalar;
        let expect = -2.0 * brioschi(&s, &p);
        assert!((r - expect).abs() < 1e-5 * expect.abs(), "{u},{v}: {r} vs {expect}");
    }
}

#[test]
fn gaussian_centre_step_halving() {
    let p = gaussian();
    let s = ExtendedState::planar(0.0, 2.0, 1.0, p.velocity(0.0, 2.0), ParamKind::Tau).unwrap();
    let r1 = riemann(&s, &p, MASS, 1e-4).unwrap().scalar;
    let r2 = riemann(&s, &p, MASS, 5e-5).unwrap().scalar;
    assert!((r1 - r2).abs() < 1e-3 * r2.abs(), "{r1} vs {r2}");
}

fn config() -> ProptestConfig {
    ProptestConfig { cases: 300, ..ProptestConfig::default() }
}

fn eckart_bohmian_state(w: usize, ft: f64, fx: f64) -> ExtendedState {
    let win = &windows()[w];
    let mut s = state_in(win, ft, fx, 1.0, 0.0);
    // Bohmian direction: q̇¹ = ∂S/∂x / m at the window's middle snapshot
    let i = ((s.q[1] - win.mid.grid.x_min) / win.mid.grid.dx()).round() as usize;
    s.qdot[1] = win.mid.d_action[0][i] / MASS;
    s
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn riemann_antisymmetric_last_pair(w in 0usize..3, ft in 0.0..1.0f64, fx in 0.0..1.0f64) {
        let s = eckart_bohmian_state(w, ft, fx);
        let Ok(c) = riemann(&s, &windows()[w].probe, MASS, 1e-4) else { return Ok(()) };
        for d in 0..2 { for a in 0..2 { for b in 0..2 { for g in 0..2 {
            prop_assert!((c.component(d, a, b, g) + c.component(d, a, g, b)).abs() < 1e-6);
        }}}}
    }

    #[test]
    fn eckart_step_halving(w in 0usize..3, ft in 0.0..1.0f64, fx in 0.0..1.0f64) {
        let s = eckart_bohmian_state(w, ft, fx);
        let probe = &windows()[w].probe;
        let (Ok(a), Ok(b)) = (riemann(&s, probe, MASS, 1e-4), riemann(&s, probe, MASS, 5e-5)) else { return Ok(()) };
        prop_assume!(a.trusted && b.trusted);
        // det g = 0 must lie at least 100 steps away: R grows like a power of 1/f there
        let qs = probe.quantum(&s.q).unwrap();
        let f = 0.5 * MASS * (s.qdot[1] / s.qdot[0]).powi(2) - qs.value;
        prop_assume!(f.abs() > 1e-2 * qs.gradient[0].hypot(qs.gradient[1]));
        let rel = (a.scalar - b.scalar).abs() / b.scalar.abs().max(1.0);
        prop_assert!(rel < 1e-2, "{} vs {}", a.scalar, b.scalar);
    }
}

#[test]
fn step_halving_at_late_reflected_edge() {
    // left edge of the support at t = 1948.5: Q changes fast in time here
    let s = eckart_bohmian_state(2, 0.0, 0.045_077_857_413_815_96);
    let probe = &windows()[2].probe;
    let a = riemann(&s, probe, MASS, 1e-4).unwrap();
    let b = riemann(&s, probe, MASS, 5e-5).unwrap();
    assert!(a.trusted && b.trusted);
    assert!((a.scalar - b.scalar).abs() < 1e-3 * b.scalar.abs(), "{} vs {}", a.scalar, b.scalar);
}

#[test]
fn stencil_across_singular_metric_is_untrusted() {
    // det g changes sign about 2e-5 to the left in x
    let s = eckart_bohmian_state(2, 0.825_741_353_311_100_2, 0.053_841_729_636_755_45);
    let c = riemann(&s, &windows()[2].probe, MASS, 1e-4).unwrap();
    assert!(!c.trusted);
}
