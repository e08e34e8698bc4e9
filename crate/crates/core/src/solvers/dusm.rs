use std::rc::Rc;
use std::sync::Arc;
use std::time::Instant;

use super::lp::{lp_extreme_point, LpPair};
use super::{eager_best, finish, LazyHeap, SolverResult};
use crate::error::{Error, Result};
use crate::objective::{Objective, ObjectiveState};

/// Support size limit relative to the ground-set size.
pub const SUPPORT_CAP_FACTOR: usize = 4;

/// One support pair `(X, Y)` with its probability. States are shared
/// between siblings and copied on write.
#[derive(Clone)]
struct Pair {
    p: f64,
    x: Rc<ObjectiveState>,
    y: Rc<ObjectiveState>,
}

/// Deterministic USM: keeps an explicit distribution over `(X, Y)` pairs
/// and splits every pair by a vertex solution of a two-constraint LP.
/// Returns the support set `X` with the largest objective.
///
/// With ordering, the next element maximizes the marginal on the `X` of the
/// most probable pair; `lazy` keeps a stale-bound heap for that search while
/// the reference `X` only grows.
pub fn deterministic_usm(objective: &Arc<Objective>, ordering: bool, lazy: bool) -> Result<SolverResult> {
    let started = Instant::now();
    let k = objective.len();
    let cap = SUPPORT_CAP_FACTOR * k.max(1);
    let label = match (ordering, lazy) {
        (false, _) => "dusm",
        (true, false) => "dusm-order",
        (true, true) => "dusm-order-lc",
    };
    let empty = objective.empty_state();
    let counter = Arc::clone(empty.counter());
    let full = objective.full_state(&counter)?;
    let mut support = vec![Pair {
        p: 1.0,
        x: Rc::new(empty),
        y: Rc::new(full),
    }];

    let mut remaining: Vec<usize> = (0..k).collect();
    let mut heap: Option<LazyHeap> = None;
    let mut basis: Vec<bool> = vec![false; k];

    for i in 0..k {
        let u = if !ordering {
            objective.visit_order()[i]
        } else {
            let top = most_probable(&support);
            let x_max = &support[top].x;
            let u = if lazy {
                let fresh = match heap.as_mut() {
                    Some(h) if is_superset(x_max.members(), &basis) => {
                        if x_max.members() != basis.as_slice() {
                            h.advance();
                        }
                        false
                    }
                    _ => true,
                };
                if fresh {
                    heap = Some(LazyHeap::with_values(remaining.iter().map(|&u| (u, x_max.marginal(u)))));
                }
                basis = x_max.members().to_vec();
                heap.as_mut()
                    .and_then(|h| h.pop_best(|u| x_max.marginal(u)))
                    .expect("heap holds every unvisited element")
                    .0
            } else {
                eager_best(x_max, &remaining).expect("unvisited elements remain").0
            };
            remaining.retain(|&r| r != u);
            u
        };

        let coeffs: Vec<LpPair> = support
            .iter()
            .map(|s| LpPair {
                p: s.p,
                a: s.x.marginal(u),
                b: s.y.removal_gain(u),
            })
            .collect();
        let z = lp_extreme_point(&coeffs)?;

        let mut next = Vec::with_capacity(support.len() + 2);
        for (pair, z) in support.into_iter().zip(z) {
            let w = 1.0 - z;
            match (z > 0.0, w > 0.0) {
                (true, true) => {
                    let mut x = (*pair.x).clone();
                    x.add(u)?;
                    let mut y = (*pair.y).clone();
                    y.remove(u)?;
                    next.push(Pair {
                        p: pair.p * z,
                        x: Rc::new(x),
                        y: Rc::clone(&pair.y),
                    });
                    next.push(Pair {
                        p: pair.p * w,
                        x: pair.x,
                        y: Rc::new(y),
                    });
                }
                (true, false) => {
                    let Pair { p, mut x, y } = pair;
                    Rc::make_mut(&mut x).add(u)?;
                    next.push(Pair { p, x, y });
                }
                _ => {
                    let Pair { p, x, mut y } = pair;
                    Rc::make_mut(&mut y).remove(u)?;
                    next.push(Pair { p, x, y });
                }
            }
        }
        if next.len() > cap {
            return Err(Error::SupportOverflow { size: next.len(), cap });
        }
        debug_assert!((next.iter().map(|s| s.p).sum::<f64>() - 1.0).abs() < 1e-9);
        support = next;
    }

    let mut best: Option<(usize, f64)> = None;
    for (idx, s) in support.iter().enumerate() {
        let v = s.x.gain();
        if best.map_or(true, |(_, b)| v > b) {
            best = Some((idx, v));
        }
    }
    let (idx, _) = best.expect("support is never empty");
    finish(objective, label, 0, support[idx].x.selected(), counter.load(std::sync::atomic::Ordering::Relaxed), started)
}

/// Index of the highest-probability pair; the first one on ties.
fn most_probable(support: &[Pair]) -> usize {
    let mut best = 0;
    for (i, s) in support.iter().enumerate() {
        if s.p > support[best].p {
            best = i;
        }
    }
    best
}

fn is_superset(set: &[bool], of: &[bool]) -> bool {
    set.iter().zip(of).all(|(&s, &o)| s || !o)
}
