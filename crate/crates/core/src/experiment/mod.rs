//! Eckart scattering experiment.

pub mod analysis;
pub mod config;
pub mod export;
pub mod fronts;
pub mod pipeline;
pub mod sampling;

use std::path::Path;

pub use config::{ExperimentConfig, InitMode, OutputFormat, Sampling};
pub use export::{verify_manifest, write_manifest, write_outputs, Manifest};
pub use fronts::{export_fronts, FrontPlane, LineFront};
pub use pipeline::{simulate, ExperimentOutput, Stages};
pub use sampling::sample_initial_positions;

use crate::error::Result;

/// Runs the stages and writes the bundle to `dir`. On failure a manifest
/// with `status = "failed"` is written before the error is returned.
pub fn run_experiment(config: &ExperimentConfig, stages: Stages, dir: &Path) -> Result<(ExperimentOutput, Manifest)> {
    match simulate(config, stages) {
        Ok(out) => {
            let manifest = write_outputs(&out, dir)?;
            Ok((out, manifest))
        }
        Err(err) => {
            write_manifest(&Manifest::failed(config, &err), dir)?;
            Err(err)
        }
    }
}
