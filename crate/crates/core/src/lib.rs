//! Collaborative exploration planning with informative loop closures.
//!
//! The pipeline goes environment graph → multi-robot routes → abstracted
//! pose graphs → candidate loop edges → submodular selection → allocation of
//! the selected edges back to the robots.

pub mod allocation;
pub mod env_graph;
pub mod error;
pub mod experiment;
pub mod fim;
pub mod linalg;
pub mod loop_candidates;
pub mod objective;
pub mod pose_graph;
pub mod solvers;
pub mod stats;
pub mod vrp;

pub use allocation::{allocate_inter, finalize, Allocation, Detour, FinalPlan, InterEdge};
pub use env_graph::{generate_random_env, shortest_paths, DistanceOracle, EnvGraph, GenParams};
pub use error::{Error, Result};
pub use experiment::{
    run_benchmark, run_pipeline, BenchRow, ExperimentConfig, Instance, InstanceParams, PipelineConfig,
    PipelineOutput, StageError,
};
pub use loop_candidates::{
    compute_alpha, enumerate_candidates, AlphaBounds, CandidatePool, GroundSet, GroundSummary,
    LoopCandidate,
};
pub use objective::{Element, Objective, ObjectiveState};
pub use pose_graph::{
    build_abstracted, build_collaborative, merge_collaborative, reduced_unweighted_laplacian,
    reduced_weighted_laplacian, CollabPoseGraph, Covariance, EdgeKind, Pose, PoseEdge,
    ReducedLaplacian, RobotPoseGraph,
};
pub use solvers::{Algorithm, SolverResult, SolverSpec};
pub use vrp::{expand_to_walk, solve_vrp, VrpOptions, VrpSolution, Walk};
