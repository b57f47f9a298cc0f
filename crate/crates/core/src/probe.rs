//! Field probes: `Q`, `V`, and their derivatives at points of the extended
//! configuration space `q = (t, x¹, …)`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::PotentialSpec;
use crate::polar::{sample_field, QuantumPotentialTable};
use crate::spline::KnotSpline;
use crate::HBAR;

/// `Q` with gradient and Hessian in all `d` extended coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumSample {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Row-major `d × d`.
    pub hessian: Vec<f64>,
    pub masked: bool,
}

/// Classical potential with its gradient; the time component is always zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalSample {
    pub value: f64,
    pub gradient: Vec<f64>,
}

pub trait FieldProbe: Sync {
    /// Extended dimension `d` (time plus spatial coordinates).
    fn dim(&self) -> usize;
    fn quantum(&self, q: &[f64]) -> Result<QuantumSample>;
    fn classical(&self, q: &[f64]) -> Result<ClassicalSample>;
}

impl<P: FieldProbe + ?Sized> FieldProbe for &P {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn quantum(&self, q: &[f64]) -> Result<QuantumSample> {
        (**self).quantum(q)
    }
    fn classical(&self, q: &[f64]) -> Result<ClassicalSample> {
        (**self).classical(q)
    }
}

/// [`PotentialSpec`] bound to a mass, with any spline prebuilt.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalPotential {
    spec: PotentialSpec,
    mass: f64,
    table: Option<KnotSpline>,
}

impl ClassicalPotential {
    pub fn new(spec: PotentialSpec, mass: f64) -> Result<Self> {
        let table = match &spec {
            PotentialSpec::Tabulated { x, v } => Some(KnotSpline::new(x.clone(), v.clone())?),
            _ => None,
        };
        Ok(Self { spec, mass, table })
    }

    pub fn free() -> Self {
        Self { spec: PotentialSpec::Free, mass: 1.0, table: None }
    }

    pub fn spec(&self) -> &PotentialSpec {
        &self.spec
    }

    pub fn value_and_gradient(&self, x: f64) -> (f64, f64) {
        match &self.table {
            Some(s) => s.eval_with_slope(x),
            None => self.spec.value_and_gradient(x, self.mass),
        }
    }

    fn sample(&self, q: &[f64]) -> ClassicalSample {
        let (value, dv) = self.value_and_gradient(q[1]);
        ClassicalSample { value, gradient: vec![0.0, dv] }
    }
}

/// Spatially and temporally constant `Q`; the geometry is flat.
#[derive(Debug, Clone)]
pub struct ConstantProbe {
    pub q: f64,
    pub potential: ClassicalPotential,
    pub dim: usize,
}

impl ConstantProbe {
    pub fn new(q: f64) -> Self {
        Self { q, potential: ClassicalPotential::free(), dim: 2 }
    }

    pub fn with_potential(mut self, potential: ClassicalPotential) -> Self {
        self.potential = potential;
        self
    }
}

impl FieldProbe for ConstantProbe {
    fn dim(&self) -> usize {
        self.dim
    }

    fn quantum(&self, _q: &[f64]) -> Result<QuantumSample> {
        Ok(QuantumSample {
            value: self.q,
            gradient: vec![0.0; self.dim],
            hessian: vec![0.0; self.dim * self.dim],
            masked: false,
        })
    }

    fn classical(&self, q: &[f64]) -> Result<ClassicalSample> {
        if self.dim == 2 {
            Ok(self.potential.sample(q))
        } else {
            Ok(ClassicalSample { value: 0.0, gradient: vec![0.0; self.dim] })
        }
    }
}

/// Closed-form quantum potential of a freely spreading Gaussian packet
/// `(2β/π)^{1/4} e^{-β(x-q_c)²} e^{ik(x-q_c)}` at `t = 0`.
#[derive(Debug, Clone)]
pub struct FreeGaussianProbe {
    pub beta: f64,
    pub k: f64,
    pub q_c: f64,
    pub mass: f64,
    pub potential: ClassicalPotential,
}

impl FreeGaussianProbe {
    pub fn new(beta: f64, k: f64, q_c: f64, mass: f64) -> Self {
        Self { beta, k, q_c, mass, potential: ClassicalPotential::free() }
    }

    pub fn with_potential(mut self, potential: ClassicalPotential) -> Self {
        self.potential = potential;
        self
    }

    /// Standard deviation of `|ψ|²` at `t = 0`.
    pub fn sigma0(&self) -> f64 {
        0.5 / self.beta.sqrt()
    }

    pub fn group_velocity(&self) -> f64 {
        HBAR * self.k / self.mass
    }

    fn spreading_time(&self) -> f64 {
        2.0 * self.mass * self.sigma0().powi(2) / HBAR
    }

    pub fn centre(&self, t: f64) -> f64 {
        self.q_c + self.group_velocity() * t
    }

    pub fn sigma(&self, t: f64) -> f64 {
        let tau = self.spreading_time();
        self.sigma0() * (1.0 + (t / tau).powi(2)).sqrt()
    }

    /// Bohmian velocity field `v_c + (x - x_c) σ̇/σ`.
    pub fn velocity(&self, t: f64, x: f64) -> f64 {
        let tau = self.spreading_time();
        let rate = (t / (tau * tau)) / (1.0 + (t / tau).powi(2));
        self.group_velocity() + (x - self.centre(t)) * rate
    }

    /// Bohmian trajectory starting at `x0`.
    pub fn trajectory(&self, x0: f64, t: f64) -> f64 {
        self.centre(t) + (x0 - self.q_c) * self.sigma(t) / self.sigma0()
    }
}

impl FieldProbe for FreeGaussianProbe {
    fn dim(&self) -> usize {
        2
    }

    fn quantum(&self, q: &[f64]) -> Result<QuantumSample> {
        let (t, x) = (q[0], q[1]);
        let c = -HBAR * HBAR / (2.0 * self.mass);
        let s0 = self.sigma0().powi(2);
        let tau = self.spreading_time();
        let f = 1.0 + (t / tau).powi(2);
        let f_t = 2.0 * t / (tau * tau);
        let f_tt = 2.0 / (tau * tau);
        let p = 1.0 / (s0 * f);
        let p_t = -p * f_t / f;
        let p_tt = p * (2.0 * f_t * f_t / (f * f) - f_tt / f);
        let r = x - self.centre(t);
        let r_t = -self.group_velocity();

        let value = c * (r * r * p * p / 4.0 - p / 2.0);
        let qx = c * (r * p * p / 2.0);
        let qxx = c * (p * p / 2.0);
        let qt = c * ((r * r_t * p * p + r * r * p * p_t) / 2.0 - p_t / 2.0);
        let qxt = c * ((r_t * p * p + 2.0 * r * p * p_t) / 2.0);
        let qtt =
            c * ((r_t * r_t * p * p + 4.0 * r * r_t * p * p_t + r * r * (p_t * p_t + p * p_tt)) / 2.0 - p_tt / 2.0);
        Ok(QuantumSample { value, gradient: vec![qt, qx], hessian: vec![qtt, qxt, qxt, qxx], masked: false })
    }

    fn classical(&self, q: &[f64]) -> Result<ClassicalSample> {
        Ok(self.potential.sample(q))
    }
}

/// Time-ordered, equally spaced quantum-potential tables: cubic spline in `x`,
/// linear in `t` between neighbouring tables.
///
/// Tables can be appended and dropped from the front, so the probe doubles as
/// a sliding window that moves along with the field solver.
#[derive(Debug, Clone)]
pub struct TableProbe {
    tables: std::collections::VecDeque<Arc<QuantumPotentialTable>>,
    potential: ClassicalPotential,
}

impl TableProbe {
    pub fn new(potential: ClassicalPotential) -> Self {
        Self { tables: Default::default(), potential }
    }

    pub fn from_tables(tables: Vec<QuantumPotentialTable>, potential: ClassicalPotential) -> Result<Self> {
        let mut probe = Self::new(potential);
        for t in tables {
            probe.push(Arc::new(t))?;
        }
        Ok(probe)
    }

    pub fn push(&mut self, table: Arc<QuantumPotentialTable>) -> Result<()> {
        if let Some(last) = self.tables.back() {
            if !(table.time > last.time) {
                return Err(Error::Mismatch("tables must be appended in increasing time".into()));
            }
            if table.grid != last.grid {
                return Err(Error::Mismatch("tables live on different grids".into()));
            }
        }
        self.tables.push_back(table);
        Ok(())
    }

    /// Drops tables that end strictly before `t`, keeping one at or before it.
    pub fn drop_before(&mut self, t: f64) {
        while self.tables.len() > 2 && self.tables[1].time <= t {
            self.tables.pop_front();
        }
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    pub fn start(&self) -> Option<f64> {
        self.tables.front().map(|t| t.time)
    }

    pub fn end(&self) -> Option<f64> {
        self.tables.back().map(|t| t.time)
    }

    pub fn potential(&self) -> &ClassicalPotential {
        &self.potential
    }

    fn bracket(&self, t: f64) -> Result<(usize, f64)> {
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
            return Ok((0, 0.0));
        }
        let k = self.tables.partition_point(|tab| tab.time <= t).clamp(1, n - 1) - 1;
        let (t0, t1) = (self.tables[k].time, self.tables[k + 1].time);
        Ok((k, ((t - t0) / (t1 - t0)).clamp(0.0, 1.0)))
    }
}

impl FieldProbe for TableProbe {
    fn dim(&self) -> usize {
        2
    }

    fn quantum(&self, q: &[f64]) -> Result<QuantumSample> {
        let (k, w) = self.bracket(q[0])?;
        let a = sample_field(&self.tables[k], q[1])?;
        let b = if w > 0.0 { sample_field(&self.tables[k + 1], q[1])? } else { a };
        let mix = |u: f64, v: f64| (1.0 - w) * u + w * v;
        let qxt = mix(a.qxt, b.qxt);
        Ok(QuantumSample {
            value: mix(a.q, b.q),
            gradient: vec![mix(a.qt, b.qt), mix(a.qx, b.qx)],
            hessian: vec![mix(a.qtt, b.qtt), qxt, qxt, mix(a.qxx, b.qxx)],
            masked: a.masked || (w > 0.0 && b.masked),
        })
    }

    fn classical(&self, q: &[f64]) -> Result<ClassicalSample> {
        Ok(self.potential.sample(q))
    }
}

/// Largest discrepancy between a probe's supplied derivatives and central
/// differences of its own values, scaled by `max(1, |derivative|)`.
pub fn probe_derivative_error<P: FieldProbe + ?Sized>(probe: &P, points: &[Vec<f64>], h: f64) -> Result<f64> {
    let d = probe.dim();
    let mut worst: f64 = 0.0;
    for p in points {
        let here = probe.quantum(p)?;
        for a in 0..d {
            let mut plus = p.clone();
            let mut minus = p.clone();
            plus[a] += h;
            minus[a] -= h;
            let qp = probe.quantum(&plus)?;
            let qm = probe.quantum(&minus)?;
            let fd = (qp.value - qm.value) / (2.0 * h);
            worst = worst.max((fd - here.gradient[a]).abs() / here.gradient[a].abs().max(1.0));
            for b in 0..d {
                let fd2 = (qp.gradient[b] - qm.gradient[b]) / (2.0 * h);
                let exact = here.hessian[a * d + b];
                worst = worst.max((fd2 - exact).abs() / exact.abs().max(1.0));
            }
            if d >= 2 && a >= 1 {
                let vp = probe.classical(&plus)?.value;
                let vm = probe.classical(&minus)?.value;
                let g = probe.classical(p)?.gradient[a];
                worst = worst.max(((vp - vm) / (2.0 * h) - g).abs() / g.abs().max(1.0));
            }
        }
    }
    Ok(worst)
}
