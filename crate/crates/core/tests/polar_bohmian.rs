use std::sync::Arc;

use num_complex::Complex64;
use qgeo::bohmian::{integrate_first_order, integrate_second_order, velocity_field};
use qgeo::experiment::ExperimentConfig;
use qgeo::field::{init_packet, ComplexField, PotentialSpec, SplitOperator};
use qgeo::grid::Grid1D;
use qgeo::polar::{continuity_residual, decompose_polar, hj_residual, PolarSnapshot};
use qgeo::probe::{ClassicalPotential, FreeGaussianProbe, TableProbe};
use qgeo::timeline::FieldTimeline;

const MASS: f64 = 2000.0;
const BETA: f64 = 4.0;
const K: f64 = 10.8842;
const QC: f64 = 2.0;

/// Free Gaussian `(2β/π)^{1/4} e^{-β(x-q_c)²+ik(x-q_c)}` evolved exactly.
fn free_packet(grid: Grid1D, t: f64) -> ComplexField {
    let n0 = (2.0 * BETA / std::f64::consts::PI).powf(0.25);
    let w = Complex64::new(1.0, 2.0 * BETA * t / MASS);
    let values = grid
        .positions()
        .iter()
        .map(|&x| {
            let r = x - QC;
            let arg = Complex64::new(-BETA * r * r, K * r - K * K * t / (2.0 * MASS));
            n0 / w.sqrt() * (arg / w).exp()
        })
        .collect();
    ComplexField::new(grid, values, t).unwrap()
}

fn grid() -> Grid1D {
    Grid1D::new(4096, -10.0, 25.0).unwrap()
}

fn triplet(t: f64, dt: f64) -> [PolarSnapshot; 3] {
    let a = decompose_polar(&free_packet(grid(), t - dt), None).unwrap();
    let b = decompose_polar(&free_packet(grid(), t), Some(&a)).unwrap();
    let c = decompose_polar(&free_packet(grid(), t + dt), Some(&b)).unwrap();
    [a, b, c]
}

#[test]
fn free_packet_residuals_are_small() {
    for &t in &[1.0, 200.0, 600.0] {
        let [a, b, c] = triplet(t, 0.5);
        let hj = hj_residual([&a, &b, &c], &vec![0.0; 4096], MASS).unwrap().max_abs();
        let cont = continuity_residual([&a, &b, &c], MASS).unwrap().max_abs();
        assert!(hj < 1e-4, "t={t}: hj {hj}");
        assert!(cont < 1e-4, "t={t}: continuity {cont}");
    }
}

#[test]
fn velocity_field_matches_free_packet() {
    let p = FreeGaussianProbe::new(BETA, K, QC, MASS);
    for &t in &[0.0, 300.0] {
        let snap = decompose_polar(&free_packet(grid(), t), None).unwrap();
        for &dx in &[-0.5, -0.2, 0.0, 0.3, 0.6] {
            let x = p.centre(t) + dx * p.sigma(t) / p.sigma0();
            let v = velocity_field(&snap, x, MASS).unwrap();
            assert!((v - p.velocity(t, x)).abs() < 1e-6, "t={t} x={x}: {v} vs {}", p.velocity(t, x));
        }
    }
    let snap = decompose_polar(&free_packet(grid(), 0.0), None).unwrap();
    assert!((velocity_field(&snap, 2.0, MASS).unwrap() - 0.0054421).abs() < 1e-7);
}

fn propagated_free_snapshots(t_end: f64, dt: f64) -> Vec<PolarSnapshot> {
    let g = grid();
    let mut psi = init_packet(&g, BETA, K, QC).unwrap();
    let solver = SplitOperator::new(g, &vec![0.0; 4096], dt, MASS).unwrap();
    let mut snaps = vec![decompose_polar(&psi, None).unwrap()];
    while psi.time < t_end - 1e-9 {
        solver.step_in_place(&mut psi).unwrap();
        let next = decompose_polar(&psi, snaps.last()).unwrap();
        snaps.push(next);
    }
    snaps
}

#[test]
fn first_order_free_trajectories_follow_width() {
    let p = FreeGaussianProbe::new(BETA, K, QC, MASS);
    let snaps = propagated_free_snapshots(500.0, 0.5);
    let x0 = [QC - 0.5, QC - 0.1, QC, QC + 0.2, QC + 0.6];
    let recs = integrate_first_order(&snaps, &x0, 0.5, MASS).unwrap();
    for (r, &x) in recs.iter().zip(&x0) {
        for pt in &r.points {
            let expect = p.trajectory(x, pt.t);
            assert!((pt.x - expect).abs() < 1e-4, "x0={x} t={}: {} vs {expect}", pt.t, pt.x);
        }
    }
    // the centre rides x_c + v_c t
    let centre = &recs[2];
    assert!((centre.last().x - (QC + K / MASS * 500.0)).abs() < 1e-6);
}

#[test]
fn second_order_matches_first_order_for_free_packet() {
    let p = FreeGaussianProbe::new(BETA, K, QC, MASS);
    let snaps = propagated_free_snapshots(500.0, 0.5);
    let x0 = [QC - 0.4, QC + 0.05, QC + 0.5];
    let v0: Vec<f64> = x0.iter().map(|&x| velocity_field(&snaps[0], x, MASS).unwrap()).collect();
    let first = integrate_first_order(&snaps, &x0, 0.5, MASS).unwrap();
    let second = integrate_second_order(&p, &x0, &v0, 0.0, 500.0, 0.5, MASS).unwrap();
    for (a, b) in first.iter().zip(&second) {
        for (pa, pb) in a.points.iter().zip(&b.points) {
            assert_eq!(pa.t, pb.t);
            assert!((pa.x - pb.x).abs() < 1e-4, "t={}: {} vs {}", pa.t, pa.x, pb.x);
        }
    }
}

#[test]
fn harmonic_ground_state_trajectories_rest() {
    let omega = 0.004;
    let g = Grid1D::new(1024, -5.0, 5.0).unwrap();
    let spec = PotentialSpec::Harmonic { omega, center: 0.0 };
    let v = spec.on_grid(&g, MASS);
    let a = (MASS * omega / std::f64::consts::PI).powf(0.25);
    let values = g.positions().iter().map(|x| Complex64::new(a * (-MASS * omega * x * x / 2.0).exp(), 0.0)).collect();
    let psi = ComplexField::new(g, values, 0.0).unwrap();
    let solver = SplitOperator::new(g, &v, 0.05, MASS).unwrap();
    let mut tl = FieldTimeline::new(psi, solver, 1e-6).unwrap();
    let mut probe = TableProbe::new(ClassicalPotential::new(spec, MASS).unwrap());
    let mut snaps = vec![(**tl.polar()).clone()];
    while tl.time() < 50.0 - 1e-9 {
        let step = tl.step().unwrap();
        snaps.push((*step.polar).clone());
        for t in step.tables {
            probe.push(t).unwrap();
        }
    }
    if let Some(t) = tl.finish() {
        probe.push(t).unwrap();
    }
    let x0 = [-0.3, 0.0, 0.1, 0.4];
    let first = integrate_first_order(&snaps, &x0, 0.05, MASS).unwrap();
    let second = integrate_second_order(&probe, &x0, &[0.0; 4], 0.0, 50.0, 0.05, MASS).unwrap();
    for (r, &x) in first.iter().chain(&second).zip(x0.iter().cycle()) {
        for pt in &r.points {
            assert!((pt.x - x).abs() < 1e-6, "x0={x} t={}: {}", pt.t, pt.x);
        }
    }
}

/// Largest residuals at `t` over unmasked points for the Eckart field at step `dt`.
fn eckart_residuals(t: f64, dt: f64) -> (f64, f64) {
    let cfg = ExperimentConfig::default();
    let g = cfg.grid();
    let v = cfg.potential().on_grid(&g, MASS);
    let psi = init_packet(&g, cfg.beta, cfg.k, cfg.q_c).unwrap();
    let solver = SplitOperator::new(g, &v, dt, MASS).unwrap();
    let mut tl = FieldTimeline::new(psi, solver, cfg.node_threshold).unwrap();
    let mut ring: Vec<Arc<PolarSnapshot>> = Vec::new();
    while tl.time() < t + dt - 1e-9 {
        let step = tl.step().unwrap();
        if step.polar.time > t - dt - 1e-9 {
            ring.push(step.polar);
        }
    }
    let trip = [&*ring[0], &*ring[1], &*ring[2]];
    (hj_residual(trip, &v, MASS).unwrap().max_abs(), continuity_residual(trip, MASS).unwrap().max_abs())
}

#[test]
fn eckart_residuals_second_order_in_dt() {
    let (h1, c1) = eckart_residuals(300.0, 0.5);
    let (h2, c2) = eckart_residuals(300.0, 0.25);
    let (h3, c3) = eckart_residuals(300.0, 0.125);
    eprintln!("hj {h1:.3e} {h2:.3e} {h3:.3e}  continuity {c1:.3e} {c2:.3e} {c3:.3e}");
    assert!(h1 < 1e-3 && c1 < 1e-3);
    // measured order ≥ 2 over both halvings
    assert!((h1 / h3).log2() / 2.0 >= 1.9, "hj order {}", (h1 / h3).log2() / 2.0);
    assert!((c1 / c3).log2() / 2.0 >= 1.9, "continuity order {}", (c1 / c3).log2() / 2.0);
    assert!(h2 < h1 / 2.0 && h3 < h2 / 2.0);
}
