//! Homogeneous Lagrangian, Finsler metric, Christoffel symbols, and forced
//! geodesics on the extended configuration space `q = (t, x¹, …, xⁿ)`.
//!
//! The Lagrangian is `Λ(q, q̇) = 𝒯/q̇⁰ - Q(q) q̇⁰` with `𝒯 = ½ m Σᵢ (q̇ⁱ)²`, and
//! the metric is `g = ½ ∂²Λ²/∂q̇∂q̇`. Everything here is dimension-generic;
//! only the field probes are one-dimensional.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probe::FieldProbe;

/// Threshold on `|det g|` below which the metric is treated as singular.
pub const SINGULAR_DET: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Tau,
    Arclength,
    CoordinateTime,
}

/// Point of the extended phase space.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedState {
    /// `q[0] = t`, `q[1..]` spatial positions.
    pub q: Vec<f64>,
    /// Derivatives with respect to the evolution parameter.
    pub qdot: Vec<f64>,
    pub param: f64,
    pub param_kind: ParamKind,
}

impl ExtendedState {
    pub fn new(q: Vec<f64>, qdot: Vec<f64>, param_kind: ParamKind) -> Result<Self> {
        let state = Self { q, qdot, param: 0.0, param_kind };
        state.validate()?;
        Ok(state)
    }

    /// `(t, x)` with `(ṫ, ẋ)`.
    pub fn planar(t: f64, x: f64, tdot: f64, xdot: f64, param_kind: ParamKind) -> Result<Self> {
        Self::new(vec![t, x], vec![tdot, xdot], param_kind)
    }

    pub fn validate(&self) -> Result<()> {
        if self.q.len() < 2 || self.q.len() != self.qdot.len() {
            return Err(Error::InvalidParameter(format!(
                "extended state needs d >= 2 coordinates and matching velocities (got {} and {})",
                self.q.len(),
                self.qdot.len()
            )));
        }
        if !(self.qdot[0] > 0.0) {
            return Err(Error::InvalidParameter(format!("time must flow forward (q̇⁰ = {})", self.qdot[0])));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn time(&self) -> f64 {
        self.q[0]
    }

    /// Coordinate-time velocity `dxⁱ/dt`.
    pub fn coordinate_velocity(&self, i: usize) -> f64 {
        self.qdot[i] / self.qdot[0]
    }
}

/// `𝒯 = ½ m Σᵢ (q̇ⁱ)²` over the spatial components.
pub fn kinetic(qdot: &[f64], mass: f64) -> f64 {
    0.5 * mass * qdot[1..].iter().map(|v| v * v).sum::<f64>()
}

/// `Λ` for a given value of `Q`.
pub fn lambda_for(q_value: f64, qdot: &[f64], mass: f64) -> f64 {
    kinetic(qdot, mass) / qdot[0] - q_value * qdot[0]
}

/// `Λ(q, q̇) = 𝒯/q̇⁰ - Q(q) q̇⁰`.
pub fn lambda_value<P: FieldProbe + ?Sized>(state: &ExtendedState, probe: &P, mass: f64) -> Result<f64> {
    if state.qdot[0] == 0.0 {
        return Err(Error::InvalidParameter("q̇⁰ must be nonzero".into()));
    }
    Ok(lambda_for(probe.quantum(&state.q)?.value, &state.qdot, mass))
}

/// How the time-derivative terms of the general metric formulas are read.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricForm {
    /// `Q` has no velocity dependence, so `∂Q/∂q̇⁰` terms vanish.
    #[default]
    VelocityIndependent,
    /// Sensitivity variant: substitute `∂Q/∂t`, `∂²Q/∂t²` for the `q̇⁰`-derivatives.
    TimeDerivativeSubstitution,
}

#[derive(Debug, Clone)]
pub struct MetricSample {
    pub g: DMatrix<f64>,
    pub g_inv: DMatrix<f64>,
    pub det: f64,
    pub at: ExtendedState,
}

/// Closed-form metric components for a given `Q` (and optional time derivatives).
pub fn metric_components(q_value: f64, q0: f64, q00: f64, qdot: &[f64], mass: f64) -> DMatrix<f64> {
    let d = qdot.len();
    let u = qdot[0];
    let t = kinetic(qdot, mass);
    let mut g = DMatrix::zeros(d, d);
    g[(0, 0)] = 3.0 * t * t / u.powi(4) + q_value * q_value + 4.0 * q_value * q0 * u + 2.0 * q0 * q0 * u * u - t * q00
        + q_value * q00 * u * u;
    for i in 1..d {
        let g0i = -(mass * qdot[i]) * (2.0 * t / u.powi(3) + q0);
        g[(0, i)] = g0i;
        g[(i, 0)] = g0i;
        for j in 1..d {
            let mut gij = mass * mass * qdot[i] * qdot[j] / (u * u);
            if i == j {
                gij += (t / (u * u) - q_value) * mass;
            }
            g[(i, j)] = gij;
        }
    }
    g
}

fn invert(g: DMatrix<f64>, at: ExtendedState) -> Result<MetricSample> {
    let det = g.determinant();
    if !(det.abs() >= SINGULAR_DET) {
        return Err(Error::SingularMetric { det });
    }
    let mut g_inv = g.clone().try_inverse().ok_or(Error::SingularMetric { det })?;
    // one refinement step X += X(I - gX), residual in compensated arithmetic
    let d = g.nrows();
    let residual = DMatrix::from_fn(d, d, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - dot2((0..d).map(|k| (g[(i, k)], g_inv[(k, j)])))
    });
    g_inv += &g_inv * residual;
    Ok(MetricSample { g, g_inv, det, at })
}

/// Dot product in twice the working precision (Ogita, Rump, Oishi).
pub fn dot2(pairs: impl Iterator<Item = (f64, f64)>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for (a, b) in pairs {
        let p = a * b;
        let pe = a.mul_add(b, -p);
        let t = s + p;
        let z = t - s;
        let se = (s - (t - z)) + (p - z);
        s = t;
        c += pe + se;
    }
    s + c
}

/// Closed-form metric `g = ½ ∂²Λ²/∂q̇∂q̇`.
pub fn metric<P: FieldProbe + ?Sized>(state: &ExtendedState, probe: &P, mass: f64) -> Result<MetricSample> {
    metric_with(state, probe, mass, MetricForm::VelocityIndependent)
}

pub fn metric_with<P: FieldProbe + ?Sized>(
    state: &ExtendedState,
    probe: &P,
    mass: f64,
    form: MetricForm,
) -> Result<MetricSample> {
    state.validate()?;
    let g = metric_matrix(state, probe, mass, form)?;
    invert(g, state.clone())
}

fn metric_matrix<P: FieldProbe + ?Sized>(
    state: &ExtendedState,
    probe: &P,
    mass: f64,
    form: MetricForm,
) -> Result<DMatrix<f64>> {
    let qs = probe.quantum(&state.q)?;
    let (q0, q00) = match form {
        MetricForm::VelocityIndependent => (0.0, 0.0),
        MetricForm::TimeDerivativeSubstitution => (qs.gradient[0], qs.hessian[0]),
    };
    Ok(metric_components(qs.value, q0, q00, &state.qdot, mass))
}

/// Central-difference Hessian of `½Λ²` in the velocities, Richardson
/// extrapolated from steps `h·‖q̇‖` and `h·‖q̇‖/2`.
///
/// `½Λ²` is a quartic in the spatial velocities, so the extrapolated value is
/// exact there up to rounding.
pub fn metric_fd_oracle<P: FieldProbe + ?Sized>(
    state: &ExtendedState,
    probe: &P,
    mass: f64,
    h: f64,
) -> Result<MetricSample> {
    state.validate()?;
    let q_value = probe.quantum(&state.q)?.value;
    let norm = state.qdot.iter().map(|v| v * v).sum::<f64>().sqrt();
    let coarse = velocity_hessian(state, q_value, mass, h * norm);
    let fine = velocity_hessian(state, q_value, mass, 0.5 * h * norm);
    invert((fine * 4.0 - coarse) / 3.0, state.clone())
}

fn velocity_hessian(state: &ExtendedState, q_value: f64, mass: f64, step: f64) -> DMatrix<f64> {
    let d = state.dim();
    let half_sq = |qdot: &[f64]| 0.5 * lambda_for(q_value, qdot, mass).powi(2);
    let shifted = |a: usize, sa: f64, b: usize, sb: f64| {
        let mut v = state.qdot.clone();
        v[a] += sa;
        v[b] += sb;
        half_sq(&v)
    };
    let centre = half_sq(&state.qdot);
    let h = step;
    let mut g = DMatrix::zeros(d, d);
    for a in 0..d {
        g[(a, a)] = (shifted(a, h, a, 0.0) - 2.0 * centre + shifted(a, -h, a, 0.0)) / (h * h);
        for b in (a + 1)..d {
            let v = (shifted(a, h, b, h) - shifted(a, h, b, -h) - shifted(a, -h, b, h) + shifted(a, -h, b, -h))
                / (4.0 * h * h);
            g[(a, b)] = v;
            g[(b, a)] = v;
        }
    }
    g
}

/// Christoffel symbols at one state.
#[derive(Debug, Clone)]
pub struct ChristoffelSample {
    pub dim: usize,
    /// `∂g_{αβ}/∂q^γ` stored at `[γ][α][β]`.
    pub dg: Vec<f64>,
    /// First kind `Γ_{αβγ} = ½(∂_γ g_{αβ} + ∂_α g_{βγ} - ∂_β g_{γα})` at `[α][β][γ]`.
    pub first: Vec<f64>,
    /// Second kind `Γ^α_{βγ} = g^{να} Γ_{βνγ}` at `[α][β][γ]`.
    pub second: Vec<f64>,
    pub metric: MetricSample,
    pub masked: bool,
}

impl ChristoffelSample {
    #[inline]
    pub fn idx(&self, a: usize, b: usize, c: usize) -> usize {
        (a * self.dim + b) * self.dim + c
    }

    #[inline]
    pub fn gamma(&self, a: usize, b: usize, c: usize) -> f64 {
        self.second[self.idx(a, b, c)]
    }

    #[inline]
    pub fn gamma_first(&self, a: usize, b: usize, c: usize) -> f64 {
        self.first[self.idx(a, b, c)]
    }

    #[inline]
    pub fn metric_derivative(&self, gamma: usize, a: usize, b: usize) -> f64 {
        self.dg[self.idx(gamma, a, b)]
    }

    /// `Γ^α_{βγ} q̇^β q̇^γ`.
    pub fn contract(&self, qdot: &[f64]) -> Vec<f64> {
        let d = self.dim;
        (0..d)
            .map(|a| {
                let mut s = 0.0;
                for b in 0..d {
                    for c in 0..d {
                        s += self.gamma(a, b, c) * qdot[b] * qdot[c];
                    }
                }
                s
            })
            .collect()
    }
}

fn assemble_christoffel(dg: Vec<f64>, metric: MetricSample, masked: bool) -> ChristoffelSample {
    let d = metric.g.nrows();
    let at = |g: usize, a: usize, b: usize| dg[(g * d + a) * d + b];
    let mut first = vec![0.0; d * d * d];
    for a in 0..d {
        for b in 0..d {
            for c in 0..d {
                first[(a * d + b) * d + c] = 0.5 * (at(c, a, b) + at(a, b, c) - at(b, c, a));
            }
        }
    }
    let mut second = vec![0.0; d * d * d];
    for a in 0..d {
        for b in 0..d {
            for c in 0..d {
                let mut s = 0.0;
                for nu in 0..d {
                    s += metric.g_inv[(nu, a)] * first[(b * d + nu) * d + c];
                }
                second[(a * d + b) * d + c] = s;
            }
        }
    }
    ChristoffelSample { dim: d, dg, first, second, metric, masked }
}

/// Christoffel symbols with `∂g/∂q` from central differences in the positions
/// (velocities held fixed), absolute step `h` in every coordinate.
pub fn christoffel<P: FieldProbe + ?Sized>(
    state: &ExtendedState,
    probe: &P,
    mass: f64,
    h: f64,
) -> Result<ChristoffelSample> {
    christoffel_with(state, probe, mass, h, MetricForm::VelocityIndependent)
}

pub fn christoffel_with<P: FieldProbe + ?Sized>(
    state: &ExtendedState,
    probe: &P,
    mass: f64,
    h: f64,
    form: MetricForm,
) -> Result<ChristoffelSample> {
    state.validate()?;
    let d = state.dim();
    let metric = metric_with(state, probe, mass, form)?;
    let mut masked = probe.quantum(&state.q)?.masked;
    let mut dg = vec![0.0; d * d * d];
    for c in 0..d {
        let mut plus = state.clone();
        let mut minus = state.clone();
        plus.q[c] += h;
        minus.q[c] -= h;
        masked |= probe.quantum(&plus.q)?.masked || probe.quantum(&minus.q)?.masked;
        let gp = metric_matrix(&plus, probe, mass, form)?;
        let gm = metric_matrix(&minus, probe, mass, form)?;
        for a in 0..d {
            for b in 0..d {
                dg[(c * d + a) * d + b] = (gp[(a, b)] - gm[(a, b)]) / (2.0 * h);
            }
        }
    }
    Ok(assemble_christoffel(dg, metric, masked))
}

/// Christoffel symbols with `∂g/∂q = (∂g/∂Q) ∂Q/∂q` from the probe's gradient.
///
/// Only `g₀₀ = 3𝒯²/(q̇⁰)⁴ + Q²` and `gᵢⱼ ∋ -Q m δᵢⱼ` depend on `Q`.
pub fn christoffel_analytic<P: FieldProbe + ?Sized>(
    state: &ExtendedState,
    probe: &P,
    mass: f64,
) -> Result<ChristoffelSample> {
    let d = state.dim();
    let qs = probe.quantum(&state.q)?;
    let g = metric_components(qs.value, 0.0, 0.0, &state.qdot, mass);
    let metric = invert(g, state.clone())?;
    let mut dg = vec![0.0; d * d * d];
    for c in 0..d {
        let dq = qs.gradient[c];
        dg[c * d * d] = 2.0 * qs.value * dq;
        for i in 1..d {
            dg[(c * d + i) * d + i] = -mass * dq;
        }
    }
    Ok(assemble_christoffel(dg, metric, qs.masked))
}

/// Treatment of the classical potential in the geodesic equation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Forcing {
    /// Generalized force of the `-V q̇⁰` term of the homogeneous Lagrangian:
    /// `q̈ + Γq̇q̇ = -Λ g⁻¹F` with `F₀ = -q̇ⁱ∂ᵢV`, `Fᵢ = q̇⁰∂ᵢV`. Preserves `Λ` and
    /// projects onto `m x'' = -∂(V+Q)`.
    #[default]
    Lagrangian,
    /// `q̈ + Γq̇q̇ = -g⁻¹∂V` taken literally, with `∂V/∂q⁰ = 0`.
    InverseMetricGradient,
}

/// Acceleration `q̈` for the forced geodesic (or the reduced Lagrange system in
/// coordinate-time parametrization), using the default [`Forcing::Lagrangian`].
pub fn geodesic_rhs<P: FieldProbe + ?Sized>(state: &ExtendedState, probe: &P, mass: f64) -> Result<Vec<f64>> {
    geodesic_rhs_with(state, probe, mass, Forcing::default(), MetricForm::default())
}

pub fn geodesic_rhs_with<P: FieldProbe + ?Sized>(
    state: &ExtendedState,
    probe: &P,
    mass: f64,
    forcing: Forcing,
    form: MetricForm,
) -> Result<Vec<f64>> {
    Ok(geodesic_rhs_detailed(state, probe, mass, forcing, form)?.0)
}

/// Acceleration, `Λ`, and the node flag at the state.
pub(crate) fn geodesic_rhs_detailed<P: FieldProbe + ?Sized>(
    state: &ExtendedState,
    probe: &P,
    mass: f64,
    forcing: Forcing,
    form: MetricForm,
) -> Result<(Vec<f64>, f64, bool)> {
    let d = state.dim();
    let qdot = &state.qdot;
    if state.param_kind == ParamKind::CoordinateTime {
        // reduced Lagrange equations on q̇⁰ = 1: m ẍ = -∂(Q + V)
        let qs = probe.quantum(&state.q)?;
        let vs = probe.classical(&state.q)?;
        let mut acc = vec![0.0; d];
        for i in 1..d {
            acc[i] = -(qs.gradient[i] + vs.gradient[i]) / mass;
        }
        return Ok((acc, lambda_for(qs.value, qdot, mass), qs.masked));
    }
    let chris = match form {
        MetricForm::VelocityIndependent => christoffel_analytic(state, probe, mass)?,
        // Q₀, Q₀₀ vary in space and time: differentiate the full metric numerically
        MetricForm::TimeDerivativeSubstitution => christoffel_with(state, probe, mass, 1e-4, form)?,
    };
    let lambda = lambda_for(probe.quantum(&state.q)?.value, qdot, mass);
    let mut acc: Vec<f64> = chris.contract(qdot).into_iter().map(|v| -v).collect();
    let vs = probe.classical(&state.q)?;
    let covector: Vec<f64> = match forcing {
        Forcing::Lagrangian => {
            let mut f = vec![0.0; d];
            f[0] = -(1..d).map(|i| qdot[i] * vs.gradient[i]).sum::<f64>();
            for i in 1..d {
                f[i] = lambda * qdot[0] * vs.gradient[i];
            }
            f[0] *= lambda;
            f
        }
        Forcing::InverseMetricGradient => {
            let mut f = vs.gradient.clone();
            f[0] = 0.0;
            f
        }
    };
    for a in 0..d {
        for b in 0..d {
            acc[a] -= chris.metric.g_inv[(a, b)] * covector[b];
        }
    }
    Ok((acc, lambda, chris.masked))
}

/// One recorded point of an extended trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicSample {
    pub s: f64,
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    pub lambda: f64,
    pub node_flag: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason")]
pub enum Termination {
    Running,
    Completed,
    SingularMetric { s: f64, t: f64 },
    LeftGrid { s: f64, t: f64 },
}

/// Extended-space trajectory in the evolution parameter.
#[derive(Debug, Clone)]
pub struct ExtendedTrajectory {
    pub id: usize,
    pub param_kind: ParamKind,
    /// Factor applied to the initial velocities to reach `|Λ| = 1`.
    pub scale_factor: f64,
    pub initial_lambda: f64,
    pub samples: Vec<GeodesicSample>,
    pub termination: Termination,
}

impl ExtendedTrajectory {
    pub fn last(&self) -> &GeodesicSample {
        self.samples.last().expect("trajectory has at least its initial sample")
    }

    pub fn is_running(&self) -> bool {
        self.termination == Termination::Running
    }

    /// Largest `|Λ - Λ(0)|` along the recorded samples.
    pub fn lambda_drift(&self) -> f64 {
        let l0 = self.samples[0].lambda;
        self.samples.iter().map(|s| (s.lambda - l0).abs()).fold(0.0, f64::max)
    }

    pub fn node_flag_count(&self) -> usize {
        self.samples.iter().filter(|s| s.node_flag).count()
    }

    /// State at coordinate time `t`, by cubic Hermite interpolation between samples.
    pub fn state_at_time(&self, t: f64) -> Option<(ExtendedState, bool)> {
        self.interpolate(|s| s.q[0], |s| s.qdot[0], t)
    }

    /// State at evolution parameter `s`.
    pub fn state_at_param(&self, s: f64) -> Option<(ExtendedState, bool)> {
        self.interpolate(|g| g.s, |_| 1.0, s)
    }

    fn interpolate(
        &self,
        key: impl Fn(&GeodesicSample) -> f64,
        key_rate: impl Fn(&GeodesicSample) -> f64,
        target: f64,
    ) -> Option<(ExtendedState, bool)> {
        let n = self.samples.len();
        if n == 0 || target < key(&self.samples[0]) || target > key(&self.samples[n - 1]) {
            return None;
        }
        let j = self.samples.partition_point(|s| key(s) < target);
        if j == 0 {
            let s = &self.samples[0];
            return Some((self.state_from(s.q.clone(), s.qdot.clone(), s.s), s.node_flag));
        }
        let (a, b) = (&self.samples[j - 1], &self.samples[j]);
        let ds = b.s - a.s;
        // solve key(s) = target on the Hermite cubic of the key, by bisection
        let ka = key(a);
        let kb = key(b);
        let ra = key_rate(a) * ds;
        let rb = key_rate(b) * ds;
        let key_at = |w: f64| hermite(ka, kb, ra, rb, w);
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if key_at(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let w = 0.5 * (lo + hi);
        let d = a.q.len();
        let q = (0..d).map(|i| hermite(a.q[i], b.q[i], a.qdot[i] * ds, b.qdot[i] * ds, w)).collect();
        let qdot = (0..d).map(|i| (1.0 - w) * a.qdot[i] + w * b.qdot[i]).collect();
        Some((self.state_from(q, qdot, a.s + w * ds), a.node_flag || b.node_flag))
    }

    fn state_from(&self, q: Vec<f64>, qdot: Vec<f64>, s: f64) -> ExtendedState {
        ExtendedState { q, qdot, param: s, param_kind: self.param_kind }
    }
}

#[inline]
fn hermite(p0: f64, p1: f64, m0: f64, m1: f64, w: f64) -> f64 {
    let w2 = w * w;
    let w3 = w2 * w;
    (2.0 * w3 - 3.0 * w2 + 1.0) * p0 + (w3 - 2.0 * w2 + w) * m0 + (-2.0 * w3 + 3.0 * w2) * p1 + (w3 - w2) * m1
}

/// Settings for forced-geodesic integration with classic RK4.
#[derive(Debug, Clone, Copy)]
pub struct GeodesicIntegrator {
    pub mass: f64,
    pub forcing: Forcing,
    pub metric_form: MetricForm,
    /// Largest parameter step.
    pub ds: f64,
    /// Largest coordinate-time advance per step; the step is `min(ds, dt_max/q̇⁰)`.
    pub dt_max: f64,
    pub s_max: f64,
    /// Integration stops once `q⁰` reaches this time.
    pub t_stop: f64,
}

impl GeodesicIntegrator {
    pub fn new(mass: f64, ds: f64, s_max: f64) -> Self {
        Self {
            mass,
            forcing: Forcing::default(),
            metric_form: MetricForm::default(),
            ds,
            dt_max: f64::INFINITY,
            s_max,
            t_stop: f64::INFINITY,
        }
    }

    /// Normalizes the initial data and records the first sample.
    ///
    /// In arclength mode the velocities are divided by `|Λ₀|`; the sign of `Λ`
    /// is kept so time still flows forward.
    pub fn start<P: FieldProbe + ?Sized>(
        &self,
        id: usize,
        init: ExtendedState,
        probe: &P,
    ) -> Result<ExtendedTrajectory> {
        init.validate()?;
        let mut state = init;
        let lambda0 = lambda_value(&state, probe, self.mass)?;
        let mut scale = 1.0;
        match state.param_kind {
            ParamKind::Arclength => {
                if lambda0 == 0.0 {
                    return Err(Error::SingularMetric { det: 0.0 });
                }
                scale = 1.0 / lambda0.abs();
                state.qdot.iter_mut().for_each(|v| *v *= scale);
            }
            ParamKind::CoordinateTime => {
                scale = 1.0 / state.qdot[0];
                state.qdot.iter_mut().for_each(|v| *v *= scale);
            }
            ParamKind::Tau => {}
        }
        let (_, lambda, masked) = geodesic_rhs_detailed(&state, probe, self.mass, self.forcing, self.metric_form)?;
        Ok(ExtendedTrajectory {
            id,
            param_kind: state.param_kind,
            scale_factor: scale,
            initial_lambda: lambda0,
            samples: vec![GeodesicSample { s: state.param, q: state.q, qdot: state.qdot, lambda, node_flag: masked }],
            termination: Termination::Running,
        })
    }

    /// Steps the trajectory while every stage stays at or below `t_available`.
    ///
    /// Returns without changing the termination when more field data is needed.
    pub fn advance<P: FieldProbe + ?Sized>(&self, traj: &mut ExtendedTrajectory, probe: &P, t_available: f64) {
        while traj.is_running() {
            let last = traj.last().clone();
            if last.q[0] >= self.t_stop || last.s >= self.s_max {
                traj.termination = Termination::Completed;
                return;
            }
            let u = last.qdot[0];
            let mut ds = self.ds.min(self.s_max - last.s);
            if self.dt_max.is_finite() {
                ds = ds.min(self.dt_max / u);
            }
            if last.q[0] + 1.5 * u * ds > t_available {
                return;
            }
            match self.step(&last, traj.param_kind, probe, ds) {
                Ok(sample) => {
                    let sign_flip = sample.lambda.signum() != last.lambda.signum();
                    if sign_flip || !(sample.qdot[0] > 0.0) {
                        traj.termination = Termination::SingularMetric { s: last.s, t: last.q[0] };
                        return;
                    }
                    traj.samples.push(sample);
                }
                Err(Error::OutOfWindow { .. }) => return,
                Err(Error::OutOfRange { .. }) | Err(Error::LeftGrid { .. }) => {
                    traj.termination = Termination::LeftGrid { s: last.s, t: last.q[0] };
                    return;
                }
                Err(_) => {
                    traj.termination = Termination::SingularMetric { s: last.s, t: last.q[0] };
                    return;
                }
            }
        }
    }

    /// Marks a trajectory that can no longer advance as completed.
    pub fn finish(&self, traj: &mut ExtendedTrajectory) {
        if traj.is_running() {
            traj.termination = Termination::Completed;
        }
    }

    fn step<P: FieldProbe + ?Sized>(
        &self,
        last: &GeodesicSample,
        kind: ParamKind,
        probe: &P,
        ds: f64,
    ) -> Result<GeodesicSample> {
        let d = last.q.len();
        let eval = |q: &[f64], qdot: &[f64]| -> Result<(Vec<f64>, f64, bool)> {
            let state = ExtendedState { q: q.to_vec(), qdot: qdot.to_vec(), param: 0.0, param_kind: kind };
            if !(qdot[0] > 0.0) {
                return Err(Error::SingularMetric { det: 0.0 });
            }
            geodesic_rhs_detailed(&state, probe, self.mass, self.forcing, self.metric_form)
        };
        let shift =
            |base: &[f64], k: &[f64], f: f64| -> Vec<f64> { base.iter().zip(k).map(|(b, k)| b + f * k).collect() };
        let (a1, lambda0, m1) = eval(&last.q, &last.qdot)?;
        let v1 = last.qdot.clone();
        let q2 = shift(&last.q, &v1, 0.5 * ds);
        let v2 = shift(&last.qdot, &a1, 0.5 * ds);
        let (a2, l2, m2) = eval(&q2, &v2)?;
        let q3 = shift(&last.q, &v2, 0.5 * ds);
        let v3 = shift(&last.qdot, &a2, 0.5 * ds);
        let (a3, l3, m3) = eval(&q3, &v3)?;
        let q4 = shift(&last.q, &v3, ds);
        let v4 = shift(&last.qdot, &a3, ds);
        let (a4, l4, m4) = eval(&q4, &v4)?;
        for l in [l2, l3, l4] {
            if l.signum() != lambda0.signum() {
                return Err(Error::SingularMetric { det: 0.0 });
            }
        }
        let q: Vec<f64> = (0..d).map(|i| last.q[i] + ds / 6.0 * (v1[i] + 2.0 * v2[i] + 2.0 * v3[i] + v4[i])).collect();
        let qdot: Vec<f64> =
            (0..d).map(|i| last.qdot[i] + ds / 6.0 * (a1[i] + 2.0 * a2[i] + 2.0 * a3[i] + a4[i])).collect();
        let (_, lambda, m_end) = eval(&q, &qdot)?;
        Ok(GeodesicSample { s: last.s + ds, q, qdot, lambda, node_flag: m1 || m2 || m3 || m4 || m_end })
    }
}

/// Integrates a forced geodesic from `init` until `s_max`, a grid exit, or a
/// metric singularity. Truncation is recorded in [`ExtendedTrajectory::termination`].
pub fn integrate_geodesic<P: FieldProbe + ?Sized>(
    init: ExtendedState,
    probe: &P,
    mass: f64,
    ds: f64,
    s_max: f64,
) -> Result<ExtendedTrajectory> {
    let integrator = GeodesicIntegrator::new(mass, ds, s_max);
    let mut traj = integrator.start(0, init, probe)?;
    integrator.advance(&mut traj, probe, f64::INFINITY);
    integrator.finish(&mut traj);
    Ok(traj)
}
