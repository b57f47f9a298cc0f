//! Streaming field evolution: each solver step yields a polar snapshot and,
//! one step later, a quantum-potential table with time derivatives.

use std::sync::Arc;

use crate::error::Result;
use crate::field::{ComplexField, SplitOperator};
use crate::grid::Spectral;
use crate::polar::{
    decompose_polar_with, quantum_potential, PolarSnapshot, QuantumPotentialBuilder, QuantumPotentialTable,
};

pub struct FieldTimeline {
    solver: SplitOperator,
    spectral: Spectral,
    state: ComplexField,
    polar: Arc<PolarSnapshot>,
    builder: QuantumPotentialBuilder,
    node_threshold: f64,
    steps: usize,
}

/// Output of one timeline step.
#[derive(Debug, Clone)]
pub struct TimelineStep {
    pub polar: Arc<PolarSnapshot>,
    /// Tables completed by this step (usually one, two on the first step).
    pub tables: Vec<Arc<QuantumPotentialTable>>,
}

impl FieldTimeline {
    /// Starts from `initial`; the initial snapshot is available via [`Self::polar`].
    pub fn new(initial: ComplexField, solver: SplitOperator, node_threshold: f64) -> Result<Self> {
        let spectral = Spectral::new(initial.grid);
        let polar = decompose_polar_with(&initial, None, node_threshold, &spectral)?;
        let mut builder = QuantumPotentialBuilder::new();
        let emitted = builder.push(quantum_potential(&polar, solver.mass(), node_threshold)?)?;
        debug_assert!(emitted.is_empty());
        Ok(Self { solver, spectral, state: initial, polar: Arc::new(polar), builder, node_threshold, steps: 0 })
    }

    pub fn state(&self) -> &ComplexField {
        &self.state
    }

    pub fn polar(&self) -> &Arc<PolarSnapshot> {
        &self.polar
    }

    pub fn time(&self) -> f64 {
        self.state.time
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn solver(&self) -> &SplitOperator {
        &self.solver
    }

    pub fn step(&mut self) -> Result<TimelineStep> {
        self.solver.step_in_place(&mut self.state)?;
        self.steps += 1;
        let polar = decompose_polar_with(&self.state, Some(&self.polar), self.node_threshold, &self.spectral)?;
        let table = quantum_potential(&polar, self.solver.mass(), self.node_threshold)?;
        let tables = self.builder.push(table)?.into_iter().map(Arc::new).collect();
        self.polar = Arc::new(polar);
        Ok(TimelineStep { polar: self.polar.clone(), tables })
    }

    /// Completes the newest table with backward differences.
    pub fn finish(self) -> Option<Arc<QuantumPotentialTable>> {
        self.builder.finish().map(Arc::new)
    }
}
