//! Fixtures shared by the kernel benchmarks.

use sdnlab_core::harness::config::default_perturbation;
use sdnlab_core::{PotentialPair, SpaceTimeGrid};

/// Grid of side `n` with `n + 1` time steps and the default perturbation on it.
pub fn fixture(n: usize) -> (SpaceTimeGrid, PotentialPair) {
    let g = SpaceTimeGrid::new(n, n, n + 1, 1.0).expect("benchmark grid");
    let p = PotentialPair::sample_discrete_curl(&g, &default_perturbation().scaled(0.1));
    (g, p)
}
