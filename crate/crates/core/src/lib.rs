//! Geometrized pilot-wave dynamics.
//!
//! A wavefunction is propagated on a periodic grid ([`field`]), split into
//! amplitude and action ([`polar`]), and turned into the quantum potential
//! `Q = -ħ²/2m A''/A`. Trajectories are integrated either as Bohmian flows
//! ([`bohmian`]) or as geodesics of the Finsler metric `½ ∂²Λ²/∂q̇∂q̇` on the
//! extended configuration space `(t, x)` ([`finsler`]), whose curvature is
//! evaluated along the way ([`curvature`]). [`experiment`] wires the stages
//! into the Eckart-barrier scattering run and its exports.

// `!(x > 0.0)` is used on purpose: it also rejects NaN. Tensor loops stay indexed.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bohmian;
pub mod curvature;
pub mod error;
pub mod experiment;
pub mod field;
pub mod finsler;
pub mod grid;
pub mod polar;
pub mod probe;
pub mod spline;
pub mod timeline;

pub use error::{Error, Result};
pub use field::{eckart_potential, init_packet, norm, split_step, ComplexField, PotentialSpec, SplitOperator};
pub use grid::Grid1D;
pub use polar::{decompose_polar, quantum_potential, PolarSnapshot, QuantumPotentialTable};

/// Reduced Planck constant; everything runs in atomic units.
pub const HBAR: f64 = 1.0;

/// Default node threshold relative to the peak amplitude.
pub const DEFAULT_NODE_THRESHOLD: f64 = 1e-6;
