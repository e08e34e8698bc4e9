//! Turning selected loop edges into detours on the robots' walks.
//!
//! Intra-robot edges go to their only robot. Inter-robot edges are assigned
//! by an exact min-makespan search, then every edge is spliced into its
//! robot's walk as a go-and-return detour.

use serde::{Deserialize, Serialize};

use crate::env_graph::{DistanceOracle, EnvGraph};
use crate::error::{invalid, Error, Result};
use crate::loop_candidates::LoopCandidate;
use crate::pose_graph::Pose;
use crate::vrp::Walk;

/// An inter-robot edge as the allocator sees it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterEdge {
    /// Robot owning pose `i`, then robot owning pose `j`.
    pub robots: (usize, usize),
    /// Added length when assigned, `2ω`.
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    /// Robot id per edge.
    pub assignment: Vec<usize>,
    pub loads: Vec<f64>,
    pub makespan: f64,
    /// Search nodes expanded.
    pub nodes: usize,
    /// False when the node budget ran out before optimality was proven;
    /// the assignment is then the best one found.
    pub optimal: bool,
}

fn loads_for(base: &[f64], edges: &[InterEdge], assignment: &[usize]) -> Vec<f64> {
    let mut loads = base.to_vec();
    for (e, &r) in edges.iter().zip(assignment) {
        loads[r] += e.cost;
    }
    loads
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn check_edges(edges: &[InterEdge], robots: usize) -> Result<()> {
    for (k, e) in edges.iter().enumerate() {
        let (a, b) = e.robots;
        if a == b || a >= robots || b >= robots {
            return Err(invalid(format!("inter edge {k} has robots {:?} with {robots} robots", e.robots)));
        }
        if !(e.cost >= 0.0 && e.cost.is_finite()) {
            return Err(invalid(format!("inter edge {k} has cost {}", e.cost)));
        }
    }
    if robots == 0 {
        return Err(invalid("no robots"));
    }
    Ok(())
}

/// Lower bound on the makespan of any completion of a partial assignment.
///
/// For every robot subset `R`, the edges with both endpoints in `R` must be
/// absorbed by `R`, so some member ends at least at their average load. Each
/// remaining edge also lands on its cheaper endpoint at best.
fn bound(loads: &[f64], rest: &[InterEdge]) -> f64 {
    let mut lb = max_of(loads);
    for e in rest {
        let (a, b) = e.robots;
        lb = lb.max((loads[a] + e.cost).min(loads[b] + e.cost));
    }
    let m = loads.len();
    if m <= SUBSET_BOUND_ROBOTS && !rest.is_empty() {
        for set in 1u32..(1 << m) {
            let members = set.count_ones();
            if members < 2 {
                continue;
            }
            let inside = |r: usize| set >> r & 1 == 1;
            let mut total: f64 = (0..m).filter(|&r| inside(r)).map(|r| loads[r]).sum();
            for e in rest {
                if inside(e.robots.0) && inside(e.robots.1) {
                    total += e.cost;
                }
            }
            // rounding slack: the average is not a sum the leaves compute
            lb = lb.max(total / members as f64 * (1.0 - 1e-12));
        }
    }
    lb
}

/// Robot counts up to which [`bound`] enumerates robot subsets.
const SUBSET_BOUND_ROBOTS: usize = 8;

/// Node budget of [`allocate_inter`].
pub const ALLOCATION_NODE_LIMIT: usize = 2_000_000;

struct Search<'a> {
    edges: &'a [InterEdge],
    limit: usize,
    stopped: bool,
    best: f64,
    best_assignment: Vec<usize>,
    nodes: usize,
}

impl Search<'_> {
    /// Whether a subtree with this bound and prefix could still hold a
    /// better leaf: a lower makespan, or an equal one that is
    /// lexicographically smaller.
    fn worth(&self, lb: f64, prefix: &[usize]) -> bool {
        lb < self.best || (lb == self.best && prefix <= &self.best_assignment[..prefix.len()])
    }

    fn dfs(&mut self, loads: &mut [f64], prefix: &mut Vec<usize>) {
        self.nodes += 1;
        let depth = prefix.len();
        if depth == self.edges.len() {
            let m = max_of(loads);
            if m < self.best || (m == self.best && prefix.as_slice() < self.best_assignment.as_slice()) {
                self.best = m;
                self.best_assignment.clone_from(prefix);
            }
            return;
        }
        let e = self.edges[depth];
        let (lo, hi) = (e.robots.0.min(e.robots.1), e.robots.0.max(e.robots.1));
        let mut children = [(lo, 0.0), (hi, 0.0)];
        for c in &mut children {
            let saved = loads[c.0];
            loads[c.0] += e.cost;
            c.1 = bound(loads, &self.edges[depth + 1..]);
            loads[c.0] = saved;
        }
        // stronger child first; the prefix test keeps ties lexicographic
        if children[1].1 < children[0].1 {
            children.swap(0, 1);
        }
        for (r, lb) in children {
            if self.nodes >= self.limit {
                self.stopped = true;
                return;
            }
            prefix.push(r);
            if self.worth(lb, prefix) {
                let saved = loads[r];
                loads[r] += e.cost;
                self.dfs(loads, prefix);
                loads[r] = saved;
            }
            prefix.pop();
        }
    }
}

/// Each edge to its currently lighter endpoint, lower robot id on ties.
fn greedy_assignment(edges: &[InterEdge], base: &[f64]) -> Vec<usize> {
    let mut loads = base.to_vec();
    edges
        .iter()
        .map(|e| {
            let (lo, hi) = (e.robots.0.min(e.robots.1), e.robots.0.max(e.robots.1));
            let r = if loads[hi] + e.cost < loads[lo] + e.cost { hi } else { lo };
            loads[r] += e.cost;
            r
        })
        .collect()
}

/// Exact min-makespan assignment of inter-robot edges by depth-first branch
/// and bound from a greedy incumbent. Among optimal assignments the
/// lexicographically smallest robot-id vector wins.
///
/// Large near-balanced instances are partition problems in disguise, so
/// the search stops after [`ALLOCATION_NODE_LIMIT`] nodes and reports the
/// best assignment found with `optimal = false`.
pub fn allocate_inter(edges: &[InterEdge], base: &[f64]) -> Result<Allocation> {
    allocate_inter_with_limit(edges, base, ALLOCATION_NODE_LIMIT)
}

/// [`allocate_inter`] with an explicit node budget.
pub fn allocate_inter_with_limit(edges: &[InterEdge], base: &[f64], limit: usize) -> Result<Allocation> {
    check_edges(edges, base.len())?;
    let start = greedy_assignment(edges, base);
    let mut search = Search {
        edges,
        limit: limit.max(1),
        stopped: false,
        best: max_of(&loads_for(base, edges, &start)),
        best_assignment: start,
        nodes: 0,
    };
    let mut loads = base.to_vec();
    let mut prefix = Vec::with_capacity(edges.len());
    search.dfs(&mut loads, &mut prefix);
    let optimal = !search.stopped;
    if !optimal {
        log::warn!("allocation search stopped after {} nodes on {} inter edges", search.nodes, edges.len());
    }
    let loads = loads_for(base, edges, &search.best_assignment);
    Ok(Allocation {
        optimal,
        makespan: max_of(&loads),
        assignment: search.best_assignment,
        loads,
        nodes: search.nodes,
    })
}

/// Reference allocation by enumerating all `2^k` assignments.
pub fn allocate_exhaustive(edges: &[InterEdge], base: &[f64]) -> Result<Allocation> {
    check_edges(edges, base.len())?;
    if edges.len() > 24 {
        return Err(Error::TooManyCandidates(edges.len(), 24));
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for mask in 0u32..(1u32 << edges.len()) {
        let assignment: Vec<usize> = edges
            .iter()
            .enumerate()
            .map(|(k, e)| {
                let (lo, hi) = (e.robots.0.min(e.robots.1), e.robots.0.max(e.robots.1));
                if mask >> k & 1 == 0 {
                    lo
                } else {
                    hi
                }
            })
            .collect();
        let m = max_of(&loads_for(base, edges, &assignment));
        let better = match &best {
            None => true,
            Some((bm, ba)) => m < *bm || (m == *bm && assignment < *ba),
        };
        if better {
            best = Some((m, assignment));
        }
    }
    let (makespan, assignment) = best.expect("at least the empty assignment");
    Ok(Allocation {
        loads: loads_for(base, edges, &assignment),
        makespan,
        assignment,
        nodes: 1 << edges.len(),
        optimal: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetourKind {
    Intra,
    Inter,
}

/// A spliced go-and-return excursion `from ⇝ to ⇝ from`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detour {
    /// Index into the selected-edge list.
    pub edge: usize,
    pub poses: (usize, usize),
    pub kind: DetourKind,
    pub robot: usize,
    pub from_vertex: usize,
    pub to_vertex: usize,
    pub travel: f64,
    /// Walk indices of the detour's first and last vertex (both `from_vertex`).
    pub span: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalPlan {
    pub walks: Vec<Walk>,
    pub base_lengths: Vec<f64>,
    /// `base + Σ 2ω` over each robot's detours.
    pub lengths: Vec<f64>,
    pub makespan: f64,
    /// Makespan returned by the inter-edge allocation.
    pub allocation_makespan: f64,
    /// Whether the inter-edge allocation was proven optimal.
    pub allocation_optimal: bool,
    pub detours: Vec<Detour>,
}

impl FinalPlan {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Splices `from ⇝ to ⇝ from` after the first visit of `from` and shifts the
/// spans of detours that start at or after the splice point.
fn splice(
    walk: &mut Walk,
    oracle: &DistanceOracle,
    from: usize,
    to: usize,
    travel: f64,
    detours: &mut [Detour],
) -> Result<(usize, usize)> {
    let pos = walk
        .vertices
        .iter()
        .position(|&v| v == from)
        .ok_or_else(|| Error::Consistency(format!("vertex {from} is not on robot {}'s walk", walk.robot)))?;
    let mut loop_part = oracle.path(from, to);
    let back = oracle.path(to, from);
    loop_part.extend_from_slice(&back[1..]);
    let added = loop_part.len() - 1;
    for d in detours.iter_mut().filter(|d| d.robot == walk.robot && d.span.0 >= pos) {
        d.span.0 += added;
        d.span.1 += added;
    }
    walk.vertices.splice(pos + 1..pos + 1, loop_part[1..].iter().copied());
    walk.length += 2.0 * travel;
    Ok((pos, pos + added))
}

/// Allocates and inserts every selected edge, intra-robot edges first.
pub fn finalize(
    env: &EnvGraph,
    oracle: &DistanceOracle,
    walks: &[Walk],
    poses: &[Pose],
    selected: &[LoopCandidate],
) -> Result<FinalPlan> {
    let robots = walks.len();
    for (r, w) in walks.iter().enumerate() {
        if w.robot != r {
            return Err(invalid(format!("walk {r} belongs to robot {}", w.robot)));
        }
    }
    let base_lengths: Vec<f64> = walks.iter().map(|w| w.length).collect();
    let mut out: Vec<Walk> = walks.to_vec();
    let mut detours: Vec<Detour> = Vec::new();
    let pose = |p: usize| -> Result<(usize, usize)> {
        poses
            .get(p)
            .map(|x| (x.robot, x.vertex))
            .ok_or_else(|| invalid(format!("pose {p} is not in the pose graph")))
    };

    let mut inter = Vec::new();
    for (k, c) in selected.iter().enumerate() {
        let ((ri, vi), (rj, vj)) = (pose(c.i)?, pose(c.j)?);
        if ri >= robots || rj >= robots {
            return Err(invalid(format!("edge {k} refers to a robot without a walk")));
        }
        if ri == rj {
            let span = splice(&mut out[rj], oracle, vj, vi, c.travel, &mut detours)?;
            detours.push(Detour {
                edge: k,
                poses: (c.i, c.j),
                kind: DetourKind::Intra,
                robot: rj,
                from_vertex: vj,
                to_vertex: vi,
                travel: c.travel,
                span,
            });
        } else {
            inter.push(k);
        }
    }

    let edges: Vec<InterEdge> = inter
        .iter()
        .map(|&k| {
            let c = &selected[k];
            InterEdge {
                robots: (poses[c.i].robot, poses[c.j].robot),
                cost: 2.0 * c.travel,
            }
        })
        .collect();
    let after_intra: Vec<f64> = out.iter().map(|w| w.length).collect();
    let alloc = allocate_inter(&edges, &after_intra)?;

    for (&k, &r) in inter.iter().zip(&alloc.assignment) {
        let c = &selected[k];
        let ((ri, vi), (_, vj)) = (pose(c.i)?, pose(c.j)?);
        let (from, to) = if r == ri { (vi, vj) } else { (vj, vi) };
        let span = splice(&mut out[r], oracle, from, to, c.travel, &mut detours)?;
        detours.push(Detour {
            edge: k,
            poses: (c.i, c.j),
            kind: DetourKind::Inter,
            robot: r,
            from_vertex: from,
            to_vertex: to,
            travel: c.travel,
            span,
        });
    }

    let mut seen = vec![false; env.len()];
    for w in &out {
        for &v in &w.vertices {
            seen[v] = true;
        }
    }
    if let Some(v) = seen.iter().position(|s| !s) {
        return Err(Error::CoverageViolation(v));
    }
    let lengths: Vec<f64> = out.iter().map(|w| w.length).collect();
    Ok(FinalPlan {
        makespan: max_of(&lengths),
        walks: out,
        base_lengths,
        lengths,
        allocation_makespan: alloc.makespan,
        allocation_optimal: alloc.optimal,
        detours,
    })
}
