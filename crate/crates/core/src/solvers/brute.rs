use std::sync::Arc;
use std::time::Instant;

use super::{finish, SolverResult};
use crate::error::{Error, Result};
use crate::objective::Objective;

/// Largest ground set enumerated exhaustively.
pub const BRUTE_FORCE_LIMIT: usize = 20;

/// Exact maximizer over all subsets, visited in Gray-code order so that
/// consecutive subsets differ by one add or remove.
pub fn brute_force_opt(objective: &Arc<Objective>) -> Result<SolverResult> {
    let k = objective.len();
    if k > BRUTE_FORCE_LIMIT {
        return Err(Error::TooManyCandidates(k, BRUTE_FORCE_LIMIT));
    }
    let started = Instant::now();
    let mut state = objective.empty_state();
    let mut best_mask = 0u32;
    let mut best = state.gain();
    for step in 1u32..(1u32 << k) {
        let bit = step.trailing_zeros() as usize;
        if state.contains(bit) {
            state.remove(bit)?;
        } else {
            state.add(bit)?;
        }
        let v = state.gain();
        if v > best {
            best = v;
            best_mask = step ^ (step >> 1);
        }
    }
    let selected = (0..k).filter(|&u| best_mask >> u & 1 == 1).collect();
    finish(objective, "brute-force", 0, selected, state.oracle_calls(), started)
}
