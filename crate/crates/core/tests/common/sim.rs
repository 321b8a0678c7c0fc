//! Simulation helpers shared by integration tests.

use ggseason::design::{CoefficientSet, LinkSpec, TimeGrid};
use ggseason::estimation::Dataset;
use ggseason::simulate::simulate_series;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Daily series starting at day `start` (days since 1900-01-01).
pub fn daily(start: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| start + i as f64).collect()
}

/// Simulated dataset whose trend scale spans its own timestamps.
pub fn dataset(station: &str, coeffs: &CoefficientSet, timestamps: Vec<f64>, ar_phi: f64, seed: u64) -> Dataset {
    let grid = TimeGrid::new(timestamps, 365.25).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = simulate_series(coeffs, &LinkSpec::default(), grid.scale(), grid.timestamps(), ar_phi, &mut rng).unwrap();
    Dataset::new(station, grid, values).unwrap()
}
