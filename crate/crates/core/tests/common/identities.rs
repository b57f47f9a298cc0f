//! Finsler identities as plain checks on one state of a window.
//! `Ok(false)` means the state was outside a check's domain and is skipped.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use qgeo::finsler::{christoffel, dot2, kinetic, lambda_for, lambda_value, metric, metric_fd_oracle, ExtendedState};
use qgeo::probe::FieldProbe;

use super::{det_factor, rel, windows, MASS};

pub type Check = fn(usize, &ExtendedState) -> Result<bool, String>;

pub const ALL: [(&str, Check); 11] = [
    ("lambda homogeneous of degree one", lambda_homogeneous),
    ("first Euler identity", euler_first),
    ("second Euler identity", euler_second),
    ("g q̇ q̇ = Λ²", metric_lambda_squared),
    ("momentum identity", momentum),
    ("Cartan contraction Ξ·q̇ = 0", cartan),
    ("g zero-homogeneous", metric_zero_homogeneous),
    ("closed form vs velocity Hessian", closed_form_vs_hessian),
    ("determinant law", determinant_law),
    ("g symmetric, g g⁻¹ = I", symmetric_inverse),
    ("Christoffel contraction and symmetry", christoffel_contraction),
];

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)*) => {
        if !$cond {
            return Err(format!($($fmt)*));
        }
    };
}

fn q_at(w: usize, s: &ExtendedState) -> f64 {
    windows()[w].probe.quantum(&s.q).unwrap().value
}

pub fn nondegenerate(w: usize, s: &ExtendedState) -> bool {
    let q = q_at(w, s).abs();
    let f = det_factor(&windows()[w], s).abs();
    f > 0.05 * q + 1e-7 && MASS * f.powi(3) > 1e-9
}

/// `∂Λ/∂q̇` by complex steps on `Λ = 𝒯/q̇⁰ - Q q̇⁰`; no subtractive
/// cancellation, so it stays exact where `𝒯/q̇⁰` and `Q q̇⁰` nearly cancel.
fn lambda_gradient_cs(qv: f64, qdot: &[f64]) -> Vec<f64> {
    let h = 1e-30;
    (0..qdot.len())
        .map(|a| {
            let z: Vec<Complex64> =
                qdot.iter().enumerate().map(|(b, &v)| Complex64::new(v, if a == b { h } else { 0.0 })).collect();
            let t = 0.5 * MASS * z[1..].iter().map(|v| v * v).sum::<Complex64>();
            (t / z[0] - qv * z[0]).im / h
        })
        .collect()
}

/// `∂Λ/∂q̇` written out by hand: `(-𝒯/u² - Q, m q̇ⁱ/u)`.
fn lambda_gradient_exact(qv: f64, qdot: &[f64]) -> Vec<f64> {
    let u = qdot[0];
    let t = 0.5 * MASS * qdot[1..].iter().map(|v| v * v).sum::<f64>();
    let mut g = vec![-t / (u * u) - qv];
    g.extend(qdot[1..].iter().map(|v| MASS * v / u));
    g
}

fn scaled(s: &ExtendedState, k: f64) -> ExtendedState {
    let mut t = s.clone();
    t.qdot.iter_mut().for_each(|v| *v *= k);
    t
}

pub fn lambda_homogeneous(w: usize, s: &ExtendedState) -> Result<bool, String> {
    let probe = &windows()[w].probe;
    let l = lambda_value(s, probe, MASS).unwrap();
    let lk = lambda_value(&scaled(s, 3.7), probe, MASS).unwrap();
    ensure!((lk - 3.7 * l).abs() <= 1e-12 * (3.7 * l).abs().max(1e-300), "{lk} vs {}", 3.7 * l);
    Ok(true)
}

pub fn euler_first(w: usize, s: &ExtendedState) -> Result<bool, String> {
    let qv = q_at(w, s);
    let l = lambda_for(qv, &s.qdot, MASS);
    if l.abs() <= 1e-8 {
        return Ok(false);
    }
    let grad = lambda_gradient_cs(qv, &s.qdot);
    let lhs: f64 = grad.iter().zip(&s.qdot).map(|(g, v)| g * v).sum();
    ensure!(rel(lhs, l) < 1e-8, "{lhs} vs {l}");
    Ok(true)
}

pub fn euler_second(w: usize, s: &ExtendedState) -> Result<bool, String> {
    let qv = q_at(w, s);
    let d = s.qdot.len();
    // Hessian columns from central differences of the gradient
    for b in 0..d {
        let mut sum = 0.0;
        for a in 0..d {
            let step = 1e-5 * s.qdot[a].abs().max(1e-3);
            let mut p = s.qdot.clone();
            let mut m = s.qdot.clone();
            p[a] += step;
            m[a] -= step;
            let hab = (lambda_gradient_exact(qv, &p)[b] - lambda_gradient_exact(qv, &m)[b]) / (2.0 * step);
            sum += hab * s.qdot[a];
        }
        ensure!(sum.abs() < 1e-6, "column {b}: {sum}");
    }
    Ok(true)
}

pub fn metric_lambda_squared(w: usize, s: &ExtendedState) -> Result<bool, String> {
    if !nondegenerate(w, s) {
        return Ok(false);
    }
    let probe = &windows()[w].probe;
    let g = metric(s, probe, MASS).unwrap();
    let v = DVector::from_vec(s.qdot.clone());
    let quad = (v.transpose() * &g.g * &v)[(0, 0)];
    let l = lambda_value(s, probe, MASS).unwrap();
    ensure!(rel(quad, l * l) < 1e-9, "{quad} vs {}", l * l);
    Ok(true)
}

pub fn momentum(w: usize, s: &ExtendedState) -> Result<bool, String> {
    if !nondegenerate(w, s) {
        return Ok(false);
    }
    let qv = q_at(w, s);
    let g = metric(s, &windows()[w].probe, MASS).unwrap();
    let l = lambda_for(qv, &s.qdot, MASS);
    let grad = lambda_gradient_cs(qv, &s.qdot);
    let p = &g.g * DVector::from_vec(s.qdot.clone());
    let scale = p.norm();
    for a in 0..s.qdot.len() {
        ensure!((p[a] - l * grad[a]).abs() < 1e-8 * scale, "{a}: {} vs {}", p[a], l * grad[a]);
    }
    Ok(true)
}

pub fn cartan(w: usize, s: &ExtendedState) -> Result<bool, String> {
    if !nondegenerate(w, s) {
        return Ok(false);
    }
    let probe = &windows()[w].probe;
    let h = 1e-4;
    let g = |k: f64| metric(&scaled(s, k), probe, MASS).unwrap().g;
    // Σ_γ ∂g/∂q̇^γ q̇^γ = d/dk g(k q̇) at k = 1
    let xi = (g(1.0 + h) - g(1.0 - h)) / (2.0 * h);
    ensure!(xi.amax() < 1e-6, "{xi}");
    Ok(true)
}

pub fn metric_zero_homogeneous(w: usize, s: &ExtendedState) -> Result<bool, String> {
    if !nondegenerate(w, s) {
        return Ok(false);
    }
    let probe = &windows()[w].probe;
    let g = metric(s, probe, MASS).unwrap().g;
    let gk = metric(&scaled(s, 2.5), probe, MASS).unwrap().g;
    for (a, b) in g.iter().zip(gk.iter()) {
        ensure!((a - b).abs() <= 1e-10 * a.abs().max(1e-300), "{a} vs {b}");
    }
    Ok(true)
}

pub fn closed_form_vs_hessian(w: usize, s: &ExtendedState) -> Result<bool, String> {
    if !nondegenerate(w, s) {
        return Ok(false);
    }
    let probe = &windows()[w].probe;
    let g = metric(s, probe, MASS).unwrap().g;
    let fd = metric_fd_oracle(s, probe, MASS, 1e-4).unwrap().g;
    for a in 0..2 {
        for b in 0..2 {
            // component scale sqrt(|g_aa g_bb|) keeps the small off-diagonal honest
            let scale = (g[(a, a)] * g[(b, b)]).abs().sqrt();
            ensure!((g[(a, b)] - fd[(a, b)]).abs() < 1e-6 * scale, "({a},{b}): {} vs {}", g[(a, b)], fd[(a, b)]);
        }
    }
    Ok(true)
}

pub fn determinant_law(w: usize, s: &ExtendedState) -> Result<bool, String> {
    if !nondegenerate(w, s) {
        return Ok(false);
    }
    let g = metric(s, &windows()[w].probe, MASS).unwrap();
    let brute = g.g[(0, 0)] * g.g[(1, 1)] - g.g[(0, 1)] * g.g[(1, 0)];
    let u = s.qdot[0];
    let law = MASS * (kinetic(&s.qdot, MASS) / (u * u) - q_at(w, s)).powi(3);
    ensure!(rel(brute, law) < 1e-9, "{brute} vs {law}");
    ensure!(rel(g.det, law) < 1e-9, "{} vs {law}", g.det);
    Ok(true)
}

pub fn symmetric_inverse(w: usize, s: &ExtendedState) -> Result<bool, String> {
    if !nondegenerate(w, s) {
        return Ok(false);
    }
    let g = metric(s, &windows()[w].probe, MASS).unwrap();
    ensure!((g.g[(0, 1)] - g.g[(1, 0)]).abs() <= 1e-12 * g.g[(0, 1)].abs(), "asymmetric {}", g.g);
    // even a correctly rounded inverse leaves eps·Σ|g||g⁻¹| per entry; past
    // 1e-10 the bound below is out of reach in double precision
    let floor = DMatrix::from_fn(2, 2, |i, j| {
        f64::EPSILON * (0..2).map(|k| (g.g[(i, k)] * g.g_inv[(k, j)]).abs()).sum::<f64>()
    });
    if floor.amax() > 1e-10 {
        return Ok(false);
    }
    // compensated products: plain summation alone floors at the same eps·Σ|g||g⁻¹|
    let id = DMatrix::from_fn(2, 2, |i, j| {
        dot2((0..2).map(|k| (g.g[(i, k)], g.g_inv[(k, j)]))) - if i == j { 1.0 } else { 0.0 }
    });
    ensure!(id.amax() < 1e-9, "{id} g={} ginv={}", g.g, g.g_inv);
    Ok(true)
}

pub fn christoffel_contraction(w: usize, s: &ExtendedState) -> Result<bool, String> {
    if !nondegenerate(w, s) {
        return Ok(false);
    }
    let c = christoffel(s, &windows()[w].probe, MASS, 1e-4).unwrap();
    let d = 2;
    for a in 0..d {
        let mut lhs = 0.0;
        let mut rhs = 0.0;
        let mut scale: f64 = 0.0;
        for b in 0..d {
            for g in 0..d {
                let vv = s.qdot[b] * s.qdot[g];
                lhs += c.gamma_first(a, b, g) * vv;
                rhs += 0.5 * c.metric_derivative(a, b, g) * vv;
                scale = scale.max((0.5 * c.metric_derivative(a, b, g) * vv).abs());
                ensure!(
                    (c.gamma(a, b, g) - c.gamma(a, g, b)).abs() <= 1e-12 * c.gamma(a, b, g).abs().max(1e-300),
                    "Γ not symmetric"
                );
            }
        }
        ensure!((lhs - rhs).abs() <= 1e-8 * scale.max(1e-300), "{lhs} vs {rhs}");
    }
    Ok(true)
}
