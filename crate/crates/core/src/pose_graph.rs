//! Abstracted pose graphs built from walks, their collaborative merge, and
//! the anchored, weighted reduced Laplacian.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::env_graph::EnvGraph;
use crate::error::{invalid, Error, Result};
use crate::linalg::DenseMatrix;
use crate::vrp::Walk;

/// SE(2) measurement covariance (x, y, heading).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Covariance(pub [[f64; 3]; 3]);

impl Covariance {
    pub fn diag(x: f64, y: f64, theta: f64) -> Self {
        Self([[x, 0.0, 0.0], [0.0, y, 0.0], [0.0, 0.0, theta]])
    }

    /// `diag{0.1 m, 0.1 m, 0.001 rad}`, used for every edge by default.
    pub fn default_se2() -> Self {
        Self::diag(0.1, 0.1, 0.001)
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Symmetric with positive leading minors.
    pub fn is_spd(&self) -> bool {
        let m = &self.0;
        let sym = (0..3).all(|i| (0..3).all(|j| (m[i][j] - m[j][i]).abs() <= 1e-12 * (1.0 + m[i][j].abs())));
        sym && m[0][0] > 0.0 && m[0][0] * m[1][1] - m[0][1] * m[1][0] > 0.0 && self.det() > 0.0
    }

    pub fn inverse(&self) -> Result<[[f64; 3]; 3]> {
        if !self.is_spd() {
            return Err(invalid(format!("covariance {:?} is not SPD", self.0)));
        }
        let m = &self.0;
        let det = self.det();
        let mut inv = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let (a, b) = ((j + 1) % 3, (j + 2) % 3);
                let (c, d) = ((i + 1) % 3, (i + 2) % 3);
                inv[i][j] = (m[a][c] * m[b][d] - m[a][d] * m[b][c]) / det;
            }
        }
        Ok(inv)
    }

    /// D-optimality of the information matrix, `det(Σ⁻¹)^(1/3)`.
    pub fn d_opt_weight(&self) -> Result<f64> {
        if !self.is_spd() {
            return Err(invalid(format!("covariance {:?} is not SPD", self.0)));
        }
        Ok(self.det().powf(-1.0 / 3.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeKind {
    Odometry,
    Revisit,
    InterRobot,
    /// A selected loop edge added on top of the explored graph.
    Loop,
}

/// Single-robot abstracted pose graph; poses are indexed locally in
/// first-visit order.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotPoseGraph {
    pub robot: usize,
    /// Environment vertex of each local pose.
    pub vertices: Vec<usize>,
    pub edges: Vec<(usize, usize, EdgeKind)>,
    pub cov: Covariance,
}

/// One pose per distinct vertex of the walk; consecutive visits become
/// edges, skipping pairs that are already connected.
pub fn build_abstracted(walk: &Walk, cov: Covariance) -> Result<RobotPoseGraph> {
    if walk.vertices.is_empty() {
        return Err(invalid(format!("walk of robot {} is empty", walk.robot)));
    }
    let mut index: HashMap<usize, usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut edges = Vec::new();
    let mut linked: HashSet<(usize, usize)> = HashSet::new();
    let mut prev: Option<usize> = None;
    for &v in &walk.vertices {
        let (pose, fresh) = match index.get(&v) {
            Some(&p) => (p, false),
            None => {
                index.insert(v, vertices.len());
                vertices.push(v);
                (vertices.len() - 1, true)
            }
        };
        if let Some(p) = prev {
            if p != pose && linked.insert((p.min(pose), p.max(pose))) {
                let kind = if fresh { EdgeKind::Odometry } else { EdgeKind::Revisit };
                edges.push((p, pose, kind));
            }
        }
        prev = Some(pose);
    }
    Ok(RobotPoseGraph {
        robot: walk.robot,
        vertices,
        edges,
        cov,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub id: usize,
    pub robot: usize,
    pub vertex: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseEdge {
    pub i: usize,
    pub j: usize,
    pub kind: EdgeKind,
    pub cov: Covariance,
    pub gamma: f64,
}

/// Merged multi-robot pose graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollabPoseGraph {
    pub poses: Vec<Pose>,
    pub edges: Vec<PoseEdge>,
    /// First pose of every robot.
    pub anchors: Vec<usize>,
    /// False when the robots' graphs share no vertex and stay disjoint.
    pub connected: bool,
}

/// Disjoint union of the robot graphs plus a pairwise clique of inter-robot
/// edges at every vertex visited by two or more robots.
pub fn merge_collaborative(graphs: &[RobotPoseGraph], cov: Covariance) -> Result<CollabPoseGraph> {
    if graphs.is_empty() {
        return Err(invalid("no robot pose graphs to merge"));
    }
    let mut poses = Vec::new();
    let mut edges = Vec::new();
    let mut anchors = Vec::new();
    let mut at_vertex: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for g in graphs {
        let offset = poses.len();
        anchors.push(offset);
        let gamma = g.cov.d_opt_weight()?;
        for (k, &v) in g.vertices.iter().enumerate() {
            poses.push(Pose {
                id: offset + k,
                robot: g.robot,
                vertex: v,
            });
            at_vertex.entry(v).or_default().push(offset + k);
        }
        edges.extend(g.edges.iter().map(|&(a, b, kind)| PoseEdge {
            i: offset + a,
            j: offset + b,
            kind,
            cov: g.cov,
            gamma,
        }));
    }
    let gamma = cov.d_opt_weight()?;
    for shared in at_vertex.values() {
        for (a, &p) in shared.iter().enumerate() {
            for &q in &shared[a + 1..] {
                edges.push(PoseEdge {
                    i: p,
                    j: q,
                    kind: EdgeKind::InterRobot,
                    cov,
                    gamma,
                });
            }
        }
    }
    let mut cpg = CollabPoseGraph {
        poses,
        edges,
        anchors,
        connected: false,
    };
    cpg.connected = cpg.components().iter().all(|&c| c == 0);
    Ok(cpg)
}

/// Builds and merges pose graphs for a set of walks with one covariance.
pub fn build_collaborative(walks: &[Walk], cov: Covariance) -> Result<CollabPoseGraph> {
    let graphs = walks
        .iter()
        .map(|w| build_abstracted(w, cov))
        .collect::<Result<Vec<_>>>()?;
    merge_collaborative(&graphs, cov)
}

impl CollabPoseGraph {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Number of non-anchored poses, the reduced Laplacian dimension.
    pub fn free_count(&self) -> usize {
        self.poses.len() - self.anchors.len()
    }

    pub fn is_anchor(&self, pose: usize) -> bool {
        self.anchors.contains(&pose)
    }

    /// Row of each pose in the reduced Laplacian; `None` for anchors.
    pub fn row_index(&self) -> Vec<Option<usize>> {
        let mut next = 0;
        (0..self.poses.len())
            .map(|p| {
                if self.is_anchor(p) {
                    None
                } else {
                    next += 1;
                    Some(next - 1)
                }
            })
            .collect()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges
            .iter()
            .any(|e| (e.i == i && e.j == j) || (e.i == j && e.j == i))
    }

    /// Set of unordered pose pairs already joined by an edge.
    pub fn edge_set(&self) -> HashSet<(usize, usize)> {
        self.edges.iter().map(|e| (e.i.min(e.j), e.i.max(e.j))).collect()
    }

    /// Component label of every pose.
    pub fn components(&self) -> Vec<usize> {
        let n = self.poses.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for e in &self.edges {
            let (a, b) = (find(&mut parent, e.i), find(&mut parent, e.j));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        let roots: Vec<usize> = (0..n).map(|x| find(&mut parent, x)).collect();
        let mut label = HashMap::new();
        roots
            .iter()
            .map(|r| {
                let next = label.len();
                *label.entry(*r).or_insert(next)
            })
            .collect()
    }

    /// Copy with extra loop edges `(i, j)` using covariance `cov`.
    pub fn with_loop_edges(&self, pairs: &[(usize, usize)], cov: Covariance) -> Result<Self> {
        let gamma = cov.d_opt_weight()?;
        let mut out = self.clone();
        for &(i, j) in pairs {
            if i >= self.len() || j >= self.len() || i == j {
                return Err(invalid(format!("loop edge ({i}, {j}) is not a valid pose pair")));
            }
            out.edges.push(PoseEdge {
                i,
                j,
                kind: EdgeKind::Loop,
                cov,
                gamma,
            });
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Anchored weighted reduced Laplacian with its pose→row map.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedLaplacian {
    pub matrix: DenseMatrix,
    pub rows: Vec<Option<usize>>,
}

impl ReducedLaplacian {
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }
}

fn check_anchored(cpg: &CollabPoseGraph) -> Result<()> {
    let comp = cpg.components();
    let mut anchored = vec![false; cpg.len()];
    for &a in &cpg.anchors {
        anchored[comp[a]] = true;
    }
    if let Some(p) = (0..cpg.len()).find(|&p| !anchored[comp[p]]) {
        return Err(Error::SingularLaplacian(format!(
            "pose {p} lies in a component without an anchor"
        )));
    }
    Ok(())
}

/// `Σ γ_ij b_ij b_ijᵀ` over the non-anchored poses.
pub fn reduced_weighted_laplacian(cpg: &CollabPoseGraph) -> Result<ReducedLaplacian> {
    assemble(cpg, |e| e.gamma)
}

/// Same with unit weights; its determinant counts spanning trees of the
/// graph with all anchors contracted.
pub fn reduced_unweighted_laplacian(cpg: &CollabPoseGraph) -> Result<ReducedLaplacian> {
    assemble(cpg, |_| 1.0)
}

fn assemble(cpg: &CollabPoseGraph, weight: impl Fn(&PoseEdge) -> f64) -> Result<ReducedLaplacian> {
    check_anchored(cpg)?;
    let rows = cpg.row_index();
    let mut matrix = DenseMatrix::zeros(cpg.free_count());
    for e in &cpg.edges {
        let w = weight(e);
        if !(w > 0.0 && w.is_finite()) {
            return Err(invalid(format!("edge ({}, {}) has weight {w}", e.i, e.j)));
        }
        matrix.add_edge(rows[e.i], rows[e.j], w);
    }
    Ok(ReducedLaplacian { matrix, rows })
}

/// Vertices of `env` that no pose maps to.
pub fn unvisited(env: &EnvGraph, cpg: &CollabPoseGraph) -> Vec<usize> {
    let mut seen = vec![false; env.len()];
    for p in &cpg.poses {
        seen[p.vertex] = true;
    }
    (0..env.len()).filter(|&v| !seen[v]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::log_det_spd;

    fn walk(robot: usize, v: &[usize]) -> Walk {
        Walk {
            robot,
            vertices: v.to_vec(),
            length: 0.0,
        }
    }

    fn unit_cov() -> Covariance {
        Covariance::diag(1.0, 1.0, 1.0)
    }

    #[test]
    fn back_and_forth_walk() {
        let g = build_abstracted(&walk(0, &[10, 11, 10, 12]), unit_cov()).unwrap();
        assert_eq!(g.vertices, vec![10, 11, 12]);
        let pairs: Vec<(usize, usize)> = g.edges.iter().map(|e| (e.0, e.1)).collect();
        assert_eq!(pairs, vec![(0, 1), (0, 2)]);
    }

    #[test]
    fn closing_walk_marks_revisit() {
        let g = build_abstracted(&walk(0, &[10, 11, 12, 10]), unit_cov()).unwrap();
        assert_eq!(
            g.edges,
            vec![
                (0, 1, EdgeKind::Odometry),
                (1, 2, EdgeKind::Odometry),
                (2, 0, EdgeKind::Revisit)
            ]
        );
    }

    #[test]
    fn single_vertex_walk() {
        let g = build_abstracted(&walk(0, &[4]), unit_cov()).unwrap();
        assert_eq!(g.vertices, vec![4]);
        assert!(g.edges.is_empty());
        assert!(build_abstracted(&walk(0, &[]), unit_cov()).is_err());
    }

    #[test]
    fn inter_robot_cliques() {
        let graphs: Vec<_> = [&[0, 1][..], &[2, 1], &[3, 1]]
            .iter()
            .enumerate()
            .map(|(r, v)| build_abstracted(&walk(r, v), unit_cov()).unwrap())
            .collect();
        let two = merge_collaborative(&graphs[..2], unit_cov()).unwrap();
        assert_eq!(two.edges.iter().filter(|e| e.kind == EdgeKind::InterRobot).count(), 1);
        assert!(two.connected);
        let three = merge_collaborative(&graphs, unit_cov()).unwrap();
        assert_eq!(three.edges.iter().filter(|e| e.kind == EdgeKind::InterRobot).count(), 3);
        assert_eq!(three.anchors, vec![0, 2, 4]);
    }

    #[test]
    fn disjoint_robots_are_flagged() {
        let graphs: Vec<_> = [&[0, 1][..], &[2, 3]]
            .iter()
            .enumerate()
            .map(|(r, v)| build_abstracted(&walk(r, v), unit_cov()).unwrap())
            .collect();
        let cpg = merge_collaborative(&graphs, unit_cov()).unwrap();
        assert!(!cpg.connected);
        assert!(cpg.edges.iter().all(|e| e.kind != EdgeKind::InterRobot));
        // each robot has its own anchor, so the Laplacian is still PD
        let l = reduced_weighted_laplacian(&cpg).unwrap();
        assert!(log_det_spd(&l.matrix).is_ok());
    }

    #[test]
    fn anchored_chain_laplacian() {
        let cpg = build_collaborative(&[walk(0, &[0, 1, 2])], unit_cov()).unwrap();
        let l = reduced_weighted_laplacian(&cpg).unwrap();
        assert_eq!(l.matrix, DenseMatrix::from_rows(&[vec![2.0, -1.0], vec![-1.0, 1.0]]));
        assert!(log_det_spd(&l.matrix).unwrap().abs() < 1e-14);
        assert_eq!(l.rows, vec![None, Some(0), Some(1)]);
    }

    #[test]
    fn single_free_pose() {
        let cov = Covariance::diag(0.5, 0.5, 0.5);
        let cpg = build_collaborative(&[walk(0, &[0, 1])], cov).unwrap();
        let l = reduced_weighted_laplacian(&cpg).unwrap();
        let gamma = cov.d_opt_weight().unwrap();
        assert_eq!(l.dim(), 1);
        assert!((l.matrix[(0, 0)] - gamma).abs() < 1e-12);
        assert!((gamma - 2.0).abs() < 1e-12);
    }

    #[test]
    fn default_weight_closed_form() {
        // det Σ⁻¹ = 10 · 10 · 1000 = 1e5
        let gamma = Covariance::default_se2().d_opt_weight().unwrap();
        assert!((gamma - 1e5f64.cbrt()).abs() < 1e-9);
        assert!((gamma - 46.4159).abs() < 1e-4);
    }

    #[test]
    fn unanchored_component_is_singular() {
        let mut cpg = build_collaborative(&[walk(0, &[0, 1]), walk(1, &[2, 3])], unit_cov()).unwrap();
        cpg.anchors = vec![0];
        assert!(matches!(
            reduced_weighted_laplacian(&cpg),
            Err(Error::SingularLaplacian(_))
        ));
    }

    #[test]
    fn covariance_inverse() {
        let c = Covariance([[2.0, 0.3, 0.1], [0.3, 1.5, 0.2], [0.1, 0.2, 1.0]]);
        let inv = c.inverse().unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| c.0[i][k] * inv[k][j]).sum();
                assert!((s - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
        assert!(Covariance::diag(1.0, -1.0, 1.0).inverse().is_err());
    }
}
