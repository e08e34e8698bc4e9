use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{eager_best, finish, LazyHeap, SolverResult};
use crate::error::Result;
use crate::objective::Objective;

/// Randomized double greedy: grows `X` from ∅ and shrinks `Y` from the full
/// set, deciding each element with probability `a / (a + b)`.
///
/// Without ordering the objective's visit order is used. With ordering the next
/// element is the one with the largest marginal on `X`; `lazy` finds it
/// through a stale-bound heap.
pub fn double_greedy(objective: &Arc<Objective>, seed: u64, ordering: bool, lazy: bool) -> Result<SolverResult> {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = objective.empty_state();
    let mut y = objective.full_state(x.counter())?;
    let k = objective.len();
    let label = match (ordering, lazy) {
        (false, _) => "dgre",
        (true, false) => "dgre-order",
        (true, true) => "dgre-order-lc",
    };

    let mut heap = (ordering && lazy).then(|| LazyHeap::with_values((0..k).map(|u| (u, x.marginal(u)))));
    let mut remaining: Vec<usize> = (0..k).collect();
    for i in 0..k {
        let (u, gain_x) = if !ordering {
            let u = objective.visit_order()[i];
            (u, x.marginal(u))
        } else if let Some(h) = heap.as_mut() {
            h.pop_best(|u| x.marginal(u)).expect("heap holds every unvisited element")
        } else {
            let best = eager_best(&x, &remaining).expect("unvisited elements remain");
            remaining.retain(|&r| r != best.0);
            best
        };
        let a = gain_x.max(0.0);
        let b = y.removal_gain(u).max(0.0);
        let ratio = if a + b == 0.0 { 1.0 } else { a / (a + b) };
        let p: f64 = rng.gen();
        if p < ratio {
            x.add(u)?;
            if let Some(h) = heap.as_mut() {
                h.advance();
            }
        } else {
            y.remove(u)?;
        }
    }
    debug_assert_eq!(x.members(), y.members());
    finish(objective, label, seed, x.selected(), x.oracle_calls(), started)
}
