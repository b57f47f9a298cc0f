//! Pilot-wave propagation on a periodic 1D grid with a symmetric split-operator scheme.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid1D, Spectral};
use crate::spline::KnotSpline;
use crate::HBAR;

/// Wavefunction samples on a grid at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    pub grid: Grid1D,
    pub values: Vec<Complex64>,
    pub time: f64,
}

impl ComplexField {
    pub fn new(grid: Grid1D, values: Vec<Complex64>, time: f64) -> Result<Self> {
        if values.len() != grid.n_points {
            return Err(Error::Mismatch(format!("{} samples for a {}-point grid", values.len(), grid.n_points)));
        }
        if let Some(index) = values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::NonFiniteField { index });
        }
        Ok(Self { grid, values, time })
    }

    pub fn norm(&self) -> f64 {
        norm(self)
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|v| v * factor).collect(), time: self.time }
    }

    pub fn probability_density(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm_sqr()).collect()
    }
}

/// Discrete L² norm `Σ|φ_i|² dx`.
pub fn norm(state: &ComplexField) -> f64 {
    state.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * state.grid.dx()
}

/// Static classical potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialSpec {
    /// `V0 sech²(a (x - q_p))`.
    Eckart {
        v0: f64,
        a: f64,
        q_p: f64,
    },
    /// `½ m ω² (x - center)²`.
    Harmonic {
        omega: f64,
        center: f64,
    },
    Free,
    /// Natural cubic spline through `(x, v)` pairs.
    Tabulated {
        x: Vec<f64>,
        v: Vec<f64>,
    },
}

impl PotentialSpec {
    pub fn validate(&self, grid: &Grid1D) -> Result<()> {
        match self {
            PotentialSpec::Eckart { v0, a, .. } => {
                if !(*v0 >= 0.0) || !(*a > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "Eckart barrier needs V0 >= 0 and a > 0 (got V0={v0}, a={a})"
                    )));
                }
            }
            PotentialSpec::Harmonic { omega, .. } => {
                if !(*omega > 0.0) {
                    return Err(Error::InvalidParameter(format!("harmonic frequency must be positive, got {omega}")));
                }
            }
            PotentialSpec::Free => {}
            PotentialSpec::Tabulated { x, v } => {
                let spline = KnotSpline::new(x.clone(), v.clone())?;
                if spline.x_min() > grid.x_min || spline.x_max() < grid.x_last() {
                    return Err(Error::InvalidParameter("tabulated potential does not cover the grid".into()));
                }
            }
        }
        Ok(())
    }

    /// Value and spatial derivative at `x`.
    pub fn value_and_gradient(&self, x: f64, mass: f64) -> (f64, f64) {
        match self {
            PotentialSpec::Eckart { v0, a, q_p } => {
                let z = a * (x - q_p);
                let sech = 1.0 / z.cosh();
                let v = v0 * sech * sech;
                (v, -2.0 * a * v * z.tanh())
            }
            PotentialSpec::Harmonic { omega, center } => {
                let k = mass * omega * omega;
                let d = x - center;
                (0.5 * k * d * d, k * d)
            }
            PotentialSpec::Free => (0.0, 0.0),
            PotentialSpec::Tabulated { x: xs, v } => {
                // validate() guarantees a well-formed table
                KnotSpline::new(xs.clone(), v.clone()).map(|s| s.eval_with_slope(x)).unwrap_or((f64::NAN, f64::NAN))
            }
        }
    }

    pub fn value(&self, x: f64, mass: f64) -> f64 {
        self.value_and_gradient(x, mass).0
    }

    pub fn on_grid(&self, grid: &Grid1D, mass: f64) -> Vec<f64> {
        match self {
            PotentialSpec::Tabulated { x, v } => match KnotSpline::new(x.clone(), v.clone()) {
                Ok(s) => grid.positions().iter().map(|&p| s.eval_with_slope(p).0).collect(),
                Err(_) => vec![f64::NAN; grid.n_points],
            },
            _ => grid.positions().iter().map(|&p| self.value(p, mass)).collect(),
        }
    }
}

/// Eckart barrier `V0 sech²(a (x - q_p))` sampled on the grid.
pub fn eckart_potential(grid: &Grid1D, v0: f64, a: f64, q_p: f64) -> Vec<f64> {
    PotentialSpec::Eckart { v0, a, q_p }.on_grid(grid, 1.0)
}

/// Relative edge amplitude above which a packet is considered truncated.
pub const PACKET_EDGE_LIMIT: f64 = 1e-12;

/// Gaussian packet `(2β/π)^{1/4} exp(-β(x-q_c)²) exp(ik(x-q_c))`, renormalized on the grid.
pub fn init_packet(grid: &Grid1D, beta: f64, k: f64, q_c: f64) -> Result<ComplexField> {
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
    }
    let prefactor = (2.0 * beta / PI).powf(0.25);
    let values: Vec<Complex64> = grid
        .positions()
        .iter()
        .map(|&x| {
            let r = x - q_c;
            Complex64::from_polar(prefactor * (-beta * r * r).exp(), k * r)
        })
        .collect();
    let peak = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let edge = values[0].norm().max(values[grid.n_points - 1].norm());
    if peak == 0.0 || edge > PACKET_EDGE_LIMIT * peak {
        return Err(Error::PacketTruncated {
            edge: if peak > 0.0 { edge / peak } else { f64::INFINITY },
            limit: PACKET_EDGE_LIMIT,
        });
    }
    let mut field = ComplexField::new(*grid, values, 0.0)?;
    let scale = 1.0 / field.norm().sqrt();
    for v in field.values.iter_mut() {
        *v *= scale;
    }
    Ok(field)
}

/// Symmetric split-operator propagator `e^{-iVdt/2ħ} e^{-iTdt/ħ} e^{-iVdt/2ħ}` for a fixed step.
#[derive(Debug, Clone)]
pub struct SplitOperator {
    spectral: Spectral,
    dt: f64,
    mass: f64,
    half_potential: Vec<Complex64>,
    kinetic: Vec<Complex64>,
}

impl SplitOperator {
    /// `dt` may be negative (backward propagation) but not zero.
    pub fn new(grid: Grid1D, potential: &[f64], dt: f64, mass: f64) -> Result<Self> {
        if potential.len() != grid.n_points {
            return Err(Error::Mismatch("potential length differs from grid".into()));
        }
        if !(dt.is_finite() && dt != 0.0) {
            return Err(Error::InvalidParameter(format!("time step must be finite and nonzero, got {dt}")));
        }
        if !(mass > 0.0) {
            return Err(Error::InvalidParameter(format!("mass must be positive, got {mass}")));
        }
        let spectral = Spectral::new(grid);
        let half_potential = potential.iter().map(|&v| Complex64::from_polar(1.0, -v * dt / (2.0 * HBAR))).collect();
        let kinetic = spectral
            .wavenumbers()
            .iter()
            .map(|&k| Complex64::from_polar(1.0, -HBAR * k * k * dt / (2.0 * mass)))
            .collect();
        Ok(Self { spectral, dt, mass, half_potential, kinetic })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn spectral(&self) -> &Spectral {
        &self.spectral
    }

    /// Advances `state` in place by one step.
    pub fn step_in_place(&self, state: &mut ComplexField) -> Result<()> {
        if state.grid != *self.spectral.grid() {
            return Err(Error::Mismatch("state grid differs from propagator grid".into()));
        }
        let buf = &mut state.values;
        for (v, p) in buf.iter_mut().zip(&self.half_potential) {
            *v *= p;
        }
        self.spectral.forward(buf);
        for (v, p) in buf.iter_mut().zip(&self.kinetic) {
            *v *= p;
        }
        self.spectral.inverse(buf);
        for (v, p) in buf.iter_mut().zip(&self.half_potential) {
            *v *= p;
        }
        if let Some(index) = buf.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::NonFiniteField { index });
        }
        state.time += self.dt;
        Ok(())
    }

    pub fn step(&self, state: &ComplexField) -> Result<ComplexField> {
        let mut next = state.clone();
        self.step_in_place(&mut next)?;
        Ok(next)
    }
}

/// One split-operator step; builds a throwaway propagator. Use [`SplitOperator`] in loops.
pub fn split_step(state: &ComplexField, potential: &[f64], dt: f64, mass: f64) -> Result<ComplexField> {
    SplitOperator::new(state.grid, potential, dt, mass)?.step(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid1D {
        Grid1D::new(1024, -10.0, 25.0).unwrap()
    }

    #[test]
    fn eckart_peak_and_symmetry() {
        let g = Grid1D::new(4096, -10.0, 25.0).unwrap();
        let spec = PotentialSpec::Eckart { v0: 0.0365, a: 0.4, q_p: 7.0 };
        assert!((spec.value(7.0, 2000.0) - 0.0365).abs() < 1e-15);
        for d in [0.3, 1.7, 4.2, 9.9] {
            assert!((spec.value(7.0 + d, 1.0) - spec.value(7.0 - d, 1.0)).abs() < 1e-16);
        }
        // sech²(1) = 0.41997434161402614
        assert!((spec.value(9.5, 1.0) - 0.0365 * 0.419_974_341_614_026_14).abs() < 1e-15);
        assert!((spec.value(9.5, 1.0) - 0.015329063).abs() < 1e-9);
        let v = eckart_potential(&g, 0.0365, 0.4, 7.0);
        assert!(v[0] < 2e-7 && v[4095] < 1e-7);
    }

    #[test]
    fn eckart_gradient_matches_finite_difference() {
        let spec = PotentialSpec::Eckart { v0: 0.0365, a: 0.4, q_p: 7.0 };
        for x in [3.0, 6.5, 7.0, 8.1, 12.0] {
            let h = 1e-5;
            let fd = (spec.value(x + h, 1.0) - spec.value(x - h, 1.0)) / (2.0 * h);
            assert!((spec.value_and_gradient(x, 1.0).1 - fd).abs() < 1e-10);
        }
    }

    #[test]
    fn packet_is_normalized_and_centered() {
        let psi = init_packet(&grid(), 4.0, 10.8842, 2.0).unwrap();
        assert!((psi.norm() - 1.0).abs() < 1e-14);
        let dx = psi.grid.dx();
        let rho = psi.probability_density();
        let xs = psi.grid.positions();
        let mean: f64 = rho.iter().zip(&xs).map(|(r, x)| r * x).sum::<f64>() * dx;
        let var: f64 = rho.iter().zip(&xs).map(|(r, x)| r * (x - mean).powi(2)).sum::<f64>() * dx;
        assert!((mean - 2.0).abs() < 1e-12);
        // density sd of exp(-2β r²) is 1/(2√β)
        assert!((var.sqrt() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn zero_wavenumber_packet_is_real() {
        let psi = init_packet(&grid(), 4.0, 0.0, 2.0).unwrap();
        assert!(psi.values.iter().all(|v| v.im == 0.0 && v.re >= 0.0));
    }

    #[test]
    fn truncated_packet_is_rejected() {
        let g = Grid1D::new(256, 0.0, 3.0).unwrap();
        assert!(matches!(init_packet(&g, 4.0, 1.0, 2.0), Err(Error::PacketTruncated { .. })));
    }

    #[test]
    fn plane_wave_acquires_free_phase() {
        let g = Grid1D::new(128, 0.0, 2.0 * PI).unwrap();
        let k = 5.0;
        let vals = g.positions().iter().map(|&x| Complex64::from_polar(1.0, k * x)).collect();
        let psi = ComplexField::new(g, vals, 0.0).unwrap();
        let dt = 0.37;
        let m = 3.0;
        let out = split_step(&psi, &vec![0.0; 128], dt, m).unwrap();
        let phase = Complex64::from_polar(1.0, -k * k * dt / (2.0 * m));
        for (a, b) in out.values.iter().zip(&psi.values) {
            assert!((a - b * phase).norm() < 1e-12);
            assert!((a.norm() - 1.0).abs() < 1e-12);
        }
        assert!((out.time - dt).abs() < 1e-15);
    }

    #[test]
    fn scaled_field_has_quadratic_norm() {
        let psi = init_packet(&grid(), 4.0, 3.0, 2.0).unwrap();
        assert!((psi.scaled(Complex64::new(2.0, 0.0)).norm() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn backward_step_inverts_forward_step() {
        let g = grid();
        let v = eckart_potential(&g, 0.0365, 0.4, 7.0);
        let psi = init_packet(&g, 4.0, 10.8842, 2.0).unwrap();
        let fwd = SplitOperator::new(g, &v, 0.5, 2000.0).unwrap();
        let bwd = SplitOperator::new(g, &v, -0.5, 2000.0).unwrap();
        let back = bwd.step(&fwd.step(&psi).unwrap()).unwrap();
        let err = back.values.iter().zip(&psi.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-12, "reversal error {err}");
    }

    #[test]
    fn zero_step_is_rejected() {
        let g = grid();
        assert!(SplitOperator::new(g, &vec![0.0; g.n_points], 0.0, 1.0).is_err());
    }
}
