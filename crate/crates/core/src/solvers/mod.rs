//! Loop-edge selection algorithms over a pruned ground set.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::objective::{Objective, ObjectiveState};

pub mod brute;
pub mod double_greedy;
pub mod dusm;
pub mod greedy;
pub mod lp;

pub use brute::{brute_force_opt, BRUTE_FORCE_LIMIT};
pub use double_greedy::double_greedy;
pub use dusm::deterministic_usm;
pub use greedy::simple_greedy;
pub use lp::{lp_extreme_point, LpPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    #[serde(rename = "sgre")]
    SimpleGreedy,
    #[serde(rename = "dgre")]
    DoubleGreedy,
    #[serde(rename = "dgre-order")]
    DoubleGreedyOrdered,
    #[serde(rename = "dusm")]
    DeterministicUsm,
    #[serde(rename = "dusm-order")]
    DeterministicUsmOrdered,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::SimpleGreedy,
        Algorithm::DoubleGreedy,
        Algorithm::DoubleGreedyOrdered,
        Algorithm::DeterministicUsm,
        Algorithm::DeterministicUsmOrdered,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Algorithm::SimpleGreedy => "sgre",
            Algorithm::DoubleGreedy => "dgre",
            Algorithm::DoubleGreedyOrdered => "dgre-order",
            Algorithm::DeterministicUsm => "dusm",
            Algorithm::DeterministicUsmOrdered => "dusm-order",
        }
    }

    /// Whether a lazy heap changes how this algorithm searches.
    pub fn supports_lazy(self) -> bool {
        matches!(
            self,
            Algorithm::SimpleGreedy | Algorithm::DoubleGreedyOrdered | Algorithm::DeterministicUsmOrdered
        )
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.label() == s)
            .ok_or_else(|| invalid(format!("unknown algorithm {s:?}")))
    }
}

/// An algorithm plus the lazy-check switch, e.g. `sgre-lc`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SolverSpec {
    pub algorithm: Algorithm,
    pub lazy: bool,
}

impl SolverSpec {
    pub fn new(algorithm: Algorithm, lazy: bool) -> Self {
        Self {
            algorithm,
            lazy: lazy && algorithm.supports_lazy(),
        }
    }

    pub fn label(&self) -> String {
        if self.lazy {
            format!("{}-lc", self.algorithm.label())
        } else {
            self.algorithm.label().to_string()
        }
    }
}

impl FromStr for SolverSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (name, lazy) = match s.strip_suffix("-lc") {
            Some(base) => (base, true),
            None => (s, false),
        };
        let algorithm: Algorithm = name.parse()?;
        if lazy && !algorithm.supports_lazy() {
            return Err(invalid(format!("{name} has no lazy variant")));
        }
        Ok(Self { algorithm, lazy })
    }
}

impl TryFrom<String> for SolverSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SolverSpec> for String {
    fn from(s: SolverSpec) -> String {
        s.label()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverResult {
    pub algorithm: String,
    pub seed: u64,
    /// Ground-set indices, ascending.
    pub selected: Vec<usize>,
    /// `f(S*)`, recomputed from a fresh factorization.
    pub objective: f64,
    /// `f(S*) − f(∅)`.
    pub gain: f64,
    pub oracle_calls: u64,
    pub wall_time_s: f64,
}

/// Runs one solver; `seed` only matters for double greedy.
pub fn run(spec: SolverSpec, objective: &Arc<Objective>, seed: u64) -> Result<SolverResult> {
    match spec.algorithm {
        Algorithm::SimpleGreedy => simple_greedy(objective, spec.lazy),
        Algorithm::DoubleGreedy => double_greedy(objective, seed, false, false),
        Algorithm::DoubleGreedyOrdered => double_greedy(objective, seed, true, spec.lazy),
        Algorithm::DeterministicUsm => deterministic_usm(objective, false, false),
        Algorithm::DeterministicUsmOrdered => deterministic_usm(objective, true, spec.lazy),
    }
    .map(|mut r| {
        r.algorithm = spec.label();
        r.seed = seed;
        r
    })
}

/// Builds the result, recomputing the objective from scratch.
pub(crate) fn finish(
    objective: &Objective,
    label: &str,
    seed: u64,
    mut selected: Vec<usize>,
    oracle_calls: u64,
    started: Instant,
) -> Result<SolverResult> {
    let wall_time_s = started.elapsed().as_secs_f64();
    selected.sort_unstable();
    let gain = objective.gain_from_scratch(&selected)?;
    Ok(SolverResult {
        algorithm: label.to_string(),
        seed,
        selected,
        objective: gain + objective.empty_value(),
        gain,
        oracle_calls,
        wall_time_s,
    })
}

/// Heap entry: larger value first, then lower index.
#[derive(Debug, Clone, Copy)]
struct Entry {
    value: f64,
    index: usize,
    stamp: u64,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.value
            .total_cmp(&other.value)
            .then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Max-heap of possibly stale marginals. An entry is fresh when its stamp
/// equals the current epoch; stale entries are upper bounds by
/// submodularity as long as the reference set only grows between epochs.
#[derive(Debug, Default)]
pub(crate) struct LazyHeap {
    heap: BinaryHeap<Entry>,
    epoch: u64,
}

impl LazyHeap {
    pub fn with_values(values: impl IntoIterator<Item = (usize, f64)>) -> Self {
        Self {
            heap: values
                .into_iter()
                .map(|(index, value)| Entry { value, index, stamp: 0 })
                .collect(),
            epoch: 0,
        }
    }

    /// Marks every stored value stale.
    pub fn advance(&mut self) {
        self.epoch += 1;
    }

    #[cfg(test)]
    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Removes and returns the element with the largest current marginal,
    /// refreshing stale tops with `eval`. Ties go to the lower index.
    pub fn pop_best(&mut self, mut eval: impl FnMut(usize) -> f64) -> Option<(usize, f64)> {
        while let Some(top) = self.heap.pop() {
            if top.stamp == self.epoch {
                return Some((top.index, top.value));
            }
            self.heap.push(Entry {
                value: eval(top.index),
                index: top.index,
                stamp: self.epoch,
            });
        }
        None
    }
}

/// Eager argmax of `Δ(u | state)` over `remaining`, ties to lower index.
pub(crate) fn eager_best(state: &ObjectiveState, remaining: &[usize]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for &u in remaining {
        let m = state.marginal(u);
        match best {
            Some((bu, bm)) if m < bm || (m == bm && u > bu) => {}
            _ => best = Some((u, m)),
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heap_orders_by_value_then_index() {
        let mut h = LazyHeap::with_values([(3, 1.0), (1, 2.0), (2, 2.0)]);
        assert_eq!(h.pop_best(|_| unreachable!()), Some((1, 2.0)));
        assert_eq!(h.pop_best(|_| unreachable!()), Some((2, 2.0)));
        h.advance();
        assert_eq!(h.pop_best(|_| 0.5), Some((3, 0.5)));
        assert!(h.is_empty());
    }

    #[test]
    fn spec_labels_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.label().parse::<Algorithm>().unwrap(), a);
            let s = SolverSpec::new(a, true);
            assert_eq!(s.label().parse::<SolverSpec>().unwrap(), s);
        }
        assert!("dgre-lc".parse::<SolverSpec>().is_err());
        assert!("greedy".parse::<Algorithm>().is_err());
        assert_eq!(SolverSpec::new(Algorithm::DoubleGreedy, true).label(), "dgre");
    }
}
