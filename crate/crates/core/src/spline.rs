//! Natural cubic splines, on uniform grids (hot path) and on arbitrary knots.

use crate::error::{Error, Result};

fn natural_second_derivatives(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // Thomas algorithm on the interior equations.
    let mut c_prime = vec![0.0; n];
    let mut d_prime = vec![0.0; n];
    for i in 1..n - 1 {
        let h0 = x[i] - x[i - 1];
        let h1 = x[i + 1] - x[i];
        let a = h0;
        let b = 2.0 * (h0 + h1);
        let c = h1;
        let d = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
        let denom = b - a * c_prime[i - 1];
        c_prime[i] = c / denom;
        d_prime[i] = (d - a * d_prime[i - 1]) / denom;
    }
    for i in (1..n - 1).rev() {
        m[i] = d_prime[i] - c_prime[i] * m[i + 1];
    }
    m
}

#[inline]
fn segment_eval(y0: f64, y1: f64, m0: f64, m1: f64, h: f64, t: f64) -> (f64, f64) {
    let u = 1.0 - t;
    let value = u * y0 + t * y1 + h * h / 6.0 * ((u * u * u - u) * m0 + (t * t * t - t) * m1);
    let slope = (y1 - y0) / h + h / 6.0 * (-(3.0 * u * u - 1.0) * m0 + (3.0 * t * t - 1.0) * m1);
    (value, slope)
}

/// Natural cubic spline through samples on `x0 + i*dx`.
#[derive(Debug, Clone)]
pub struct UniformSpline {
    x0: f64,
    dx: f64,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl UniformSpline {
    pub fn new(x0: f64, dx: f64, y: Vec<f64>) -> Self {
        let xs: Vec<f64> = (0..y.len()).map(|i| x0 + i as f64 * dx).collect();
        let m = natural_second_derivatives(&xs, &y);
        Self { x0, dx, y, m }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.y
    }

    /// Index of the left node of the segment containing `x` and the local coordinate in `[0, 1]`.
    #[inline]
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let n = self.y.len();
        let pos = (x - self.x0) / self.dx;
        let i = (pos.floor().max(0.0) as usize).min(n - 2);
        (i, pos - i as f64)
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.eval_with_slope(x).0
    }

    #[inline]
    pub fn eval_with_slope(&self, x: f64) -> (f64, f64) {
        let (i, t) = self.locate(x);
        segment_eval(self.y[i], self.y[i + 1], self.m[i], self.m[i + 1], self.dx, t)
    }
}

/// Natural cubic spline through strictly increasing knots.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl KnotSpline {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() || x.len() < 2 {
            return Err(Error::InvalidParameter("spline table needs at least two (x, y) pairs of equal length".into()));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("spline knots must be strictly increasing".into()));
        }
        let m = natural_second_derivatives(&x, &y);
        Ok(Self { x, y, m })
    }

    pub fn x_min(&self) -> f64 {
        self.x[0]
    }

    pub fn x_max(&self) -> f64 {
        self.x[self.x.len() - 1]
    }

    /// Value and slope; outside the knot range the end segments are extended.
    pub fn eval_with_slope(&self, x: f64) -> (f64, f64) {
        let n = self.x.len();
        let i = match self.x.partition_point(|&k| k <= x) {
            0 => 0,
            p => (p - 1).min(n - 2),
        };
        let h = self.x[i + 1] - self.x[i];
        segment_eval(self.y[i], self.y[i + 1], self.m[i], self.m[i + 1], h, (x - self.x[i]) / h)
    }
}
