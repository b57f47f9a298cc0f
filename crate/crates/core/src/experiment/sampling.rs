//! Initial ensemble positions drawn from `A²(x, 0)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use statrs::distribution::{ContinuousCDF, Normal};

use super::config::Sampling;
use crate::error::{Error, Result};

/// Standard deviation of `|φ|² ∝ exp(-2β(x - q_c)²)`.
pub fn density_sigma(beta: f64) -> f64 {
    1.0 / (2.0 * beta.sqrt())
}

/// Quantile mode: `q_c + σ Φ⁻¹((i - ½)/n)`. Seeded mode: `n` normal draws.
pub fn sample_initial_positions(beta: f64, q_c: f64, n_traj: usize, mode: Sampling, seed: u64) -> Result<Vec<f64>> {
    if n_traj < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 trajectories, got {n_traj}")));
    }
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
    }
    let sigma = density_sigma(beta);
    match mode {
        Sampling::Quantile => {
            let unit = Normal::new(0.0, 1.0).expect("unit normal");
            Ok((1..=n_traj).map(|i| q_c + sigma * unit.inverse_cdf((i as f64 - 0.5) / n_traj as f64)).collect())
        }
        Sampling::SeededRandom => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dist = rand_distr::Normal::new(q_c, sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            let mut xs: Vec<f64> = (0..n_traj).map(|_| dist.sample(&mut rng)).collect();
            xs.sort_by(f64::total_cmp);
            Ok(xs)
        }
    }
}
