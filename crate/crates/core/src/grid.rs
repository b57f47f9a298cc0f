use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform periodic grid on `[x_min, x_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub n_points: usize,
    pub x_min: f64,
    pub x_max: f64,
}

impl Grid1D {
    pub fn new(n_points: usize, x_min: f64, x_max: f64) -> Result<Self> {
        if n_points < 16 || !n_points.is_power_of_two() {
            return Err(Error::InvalidGrid(format!("n_points must be a power of two >= 16, got {n_points}")));
        }
        if !(x_max > x_min) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(Error::InvalidGrid(format!("empty interval [{x_min}, {x_max}]")));
        }
        Ok(Self { n_points, x_min, x_max })
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_points as f64
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n_points
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.n_points == 0
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.x(i)).collect()
    }

    /// Last grid node; the periodic image of `x_max` is node 0.
    #[inline]
    pub fn x_last(&self) -> f64 {
        self.x(self.n_points - 1)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.x_min && x <= self.x_last()
    }

    /// Angular wavenumbers in FFT order.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let n = self.n_points;
        let dk = 2.0 * PI / (self.x_max - self.x_min);
        (0..n).map(|j| if j <= n / 2 { j as f64 * dk } else { (j as f64 - n as f64) * dk }).collect()
    }
}

/// FFT plans and wavenumbers for spectral differentiation on one grid.
#[derive(Clone)]
pub struct Spectral {
    grid: Grid1D,
    k: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).finish()
    }
}

impl Spectral {
    pub fn new(grid: Grid1D) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(grid.n_points);
        let inverse = planner.plan_fft_inverse(grid.n_points);
        Self { grid, k: grid.wavenumbers(), forward, inverse }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.k
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.forward.process(buf);
    }

    /// Inverse transform including the `1/n` normalization.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.inverse.process(buf);
        let scale = 1.0 / self.grid.n_points as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }

    /// Derivatives of orders `1..=max_order` of a periodic complex signal.
    pub fn derivatives(&self, values: &[Complex64], max_order: usize) -> Vec<Vec<Complex64>> {
        let n = self.grid.n_points;
        let mut spectrum = values.to_vec();
        self.forward(&mut spectrum);
        (1..=max_order)
            .map(|order| {
                let mut out: Vec<Complex64> =
                    spectrum.iter().zip(&self.k).map(|(c, &k)| c * Complex64::new(0.0, k).powu(order as u32)).collect();
                if order % 2 == 1 {
                    out[n / 2] = Complex64::new(0.0, 0.0);
                }
                self.inverse(&mut out);
                out
            })
            .collect()
    }

    /// Derivatives of orders `1..=max_order` of a periodic real signal.
    pub fn real_derivatives(&self, values: &[f64], max_order: usize) -> Vec<Vec<f64>> {
        let complex: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.derivatives(&complex, max_order).into_iter().map(|d| d.into_iter().map(|c| c.re).collect()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_sizes() {
        assert!(Grid1D::new(15, 0.0, 1.0).is_err());
        assert!(Grid1D::new(24, 0.0, 1.0).is_err());
        assert!(Grid1D::new(8, 0.0, 1.0).is_err());
        assert!(Grid1D::new(16, 1.0, 1.0).is_err());
        assert!(Grid1D::new(16, 0.0, 1.0).is_ok());
    }

    #[test]
    fn spacing_excludes_right_endpoint() {
        let g = Grid1D::new(64, -10.0, 25.0).unwrap();
        assert!((g.dx() - 35.0 / 64.0).abs() < 1e-15);
        assert!((g.x_last() - (25.0 - g.dx())).abs() < 1e-12);
    }

    #[test]
    fn spectral_derivative_of_sine() {
        let g = Grid1D::new(64, 0.0, 2.0 * PI).unwrap();
        let s = Spectral::new(g);
        let vals: Vec<f64> = g.positions().iter().map(|x| (3.0 * x).sin()).collect();
        let d = s.real_derivatives(&vals, 4);
        for (i, x) in g.positions().iter().enumerate() {
            assert!((d[0][i] - 3.0 * (3.0 * x).cos()).abs() < 1e-11);
            assert!((d[1][i] + 9.0 * (3.0 * x).sin()).abs() < 1e-10);
            assert!((d[2][i] + 27.0 * (3.0 * x).cos()).abs() < 1e-9);
            assert!((d[3][i] - 81.0 * (3.0 * x).sin()).abs() < 1e-8);
        }
    }
}
