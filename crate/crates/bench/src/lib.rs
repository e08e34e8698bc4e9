//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use cge_core::experiment::{generate_instance, InstanceParams};
use cge_core::{Objective, Result};

/// Objective for the loop-edge selection problem on a generated environment
/// of the given side length, three robots from a common start.
pub fn selection_objective(side: f64, lambda: f64, seed: u64) -> Result<Arc<Objective>> {
    let params = InstanceParams {
        robots: 3,
        common_start: true,
        seed,
        vrp_time_limit_s: 5.0,
    };
    let instance = generate_instance(side, &params).map_err(|e| e.source)?;
    instance.pool.ground_set(lambda)?.objective()
}
