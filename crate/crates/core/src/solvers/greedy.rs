use std::sync::Arc;
use std::time::Instant;

use super::{eager_best, finish, LazyHeap, SolverResult};
use crate::error::Result;
use crate::objective::Objective;

/// Adds the best remaining candidate while its marginal stays positive.
///
/// The lazy variant re-evaluates only the heap top; both variants return the
/// same set.
pub fn simple_greedy(objective: &Arc<Objective>, lazy: bool) -> Result<SolverResult> {
    let started = Instant::now();
    let mut state = objective.empty_state();
    let label = if lazy { "sgre-lc" } else { "sgre" };
    if lazy {
        let mut heap = LazyHeap::with_values((0..objective.len()).map(|u| (u, state.marginal(u))));
        while let Some((u, gain)) = heap.pop_best(|u| state.marginal(u)) {
            if gain <= 0.0 {
                break;
            }
            state.add(u)?;
            heap.advance();
        }
    } else {
        let mut remaining: Vec<usize> = (0..objective.len()).collect();
        while let Some((u, gain)) = eager_best(&state, &remaining) {
            if gain <= 0.0 {
                break;
            }
            state.add(u)?;
            remaining.retain(|&r| r != u);
        }
    }
    finish(objective, label, 0, state.selected(), state.oracle_calls(), started)
}
