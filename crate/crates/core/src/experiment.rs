//! End-to-end pipeline, seeded benchmark batches, and their CSV reports.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::allocation::{finalize, FinalPlan};
use crate::env_graph::{generate_random_env, shortest_paths, DistanceOracle, EnvGraph, GenParams};
use crate::error::{invalid, Error, Result};
use crate::fim::{correlation_point, CorrelationReport, CovarianceModel};
use crate::loop_candidates::{CandidatePool, GroundSet, GroundSummary, LoopCandidate};
use crate::pose_graph::{build_collaborative, CollabPoseGraph, Covariance, Pose};
use crate::solvers::{self, Algorithm, SolverResult, SolverSpec};
use crate::stats::{mean, median};
use crate::vrp::{expand_to_walk, solve_vrp, VrpOptions, VrpSolution, Walk};

/// Pipeline stage, used to tag failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Environment,
    Routing,
    PoseGraph,
    Candidates,
    Selection,
    Allocation,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Environment => "environment",
            Stage::Routing => "routing",
            Stage::PoseGraph => "pose-graph",
            Stage::Candidates => "candidates",
            Stage::Selection => "selection",
            Stage::Allocation => "allocation",
        })
    }
}

#[derive(Debug, thiserror::Error)]
#[error("[{stage}] {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}

/// SplitMix64 finalizer, used to derive independent per-trial seeds.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Folds `parts` into `base` with SplitMix64.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix64(base), |acc, &p| splitmix64(acc ^ p))
}

/// Start vertex per robot. A common start is one seeded random vertex;
/// otherwise robots get distinct random vertices when enough exist.
pub fn pick_starts(env: &EnvGraph, robots: usize, common: bool, seed: u64) -> Result<Vec<usize>> {
    if robots == 0 {
        return Err(invalid("at least one robot is required"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if common {
        let v = rng.gen_range(0..env.len());
        return Ok(vec![v; robots]);
    }
    let mut all: Vec<usize> = (0..env.len()).collect();
    let mut starts = Vec::with_capacity(robots);
    for _ in 0..robots {
        if all.is_empty() {
            all = (0..env.len()).collect();
        }
        starts.push(all.swap_remove(rng.gen_range(0..all.len())));
    }
    Ok(starts)
}

/// Everything upstream of loop-edge selection for one environment.
#[derive(Debug, Clone)]
pub struct Instance {
    pub env: EnvGraph,
    pub oracle: DistanceOracle,
    pub vrp: VrpSolution,
    pub walks: Vec<Walk>,
    pub graph: CollabPoseGraph,
    pub pool: CandidatePool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceParams {
    pub robots: usize,
    pub common_start: bool,
    pub seed: u64,
    pub vrp_time_limit_s: f64,
}

/// Routes, pose graph and candidate pool for an existing environment.
pub fn build_instance(env: EnvGraph, params: &InstanceParams) -> std::result::Result<Instance, StageError> {
    let oracle = shortest_paths(&env);
    let starts = pick_starts(&env, params.robots, params.common_start, derive_seed(params.seed, &[1])).at(Stage::Routing)?;
    let opts = VrpOptions {
        time_limit: Duration::from_secs_f64(params.vrp_time_limit_s),
        seed: params.seed,
    };
    let vrp = solve_vrp(&env, &oracle, &starts, &opts).at(Stage::Routing)?;
    let walks: Vec<Walk> = vrp.routes.iter().enumerate().map(|(r, route)| expand_to_walk(&oracle, r, route)).collect();
    let cov = Covariance::default_se2();
    let graph = build_collaborative(&walks, cov).at(Stage::PoseGraph)?;
    if !graph.connected {
        log::warn!("robot pose graphs share no vertex; the merged graph is disconnected");
    }
    let pool = CandidatePool::new(&graph, &oracle, cov).at(Stage::Candidates)?;
    Ok(Instance {
        env,
        oracle,
        vrp,
        walks,
        graph,
        pool,
    })
}

/// Generated environment plus [`build_instance`].
pub fn generate_instance(side: f64, params: &InstanceParams) -> std::result::Result<Instance, StageError> {
    let env = generate_random_env(&GenParams::new(side, derive_seed(params.seed, &[0]))).at(Stage::Environment)?;
    build_instance(env, params)
}

/// A selected loop edge with the context needed to act on it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectedEdge {
    pub i: usize,
    pub j: usize,
    pub robot_i: usize,
    pub robot_j: usize,
    pub vertex_i: usize,
    pub vertex_j: usize,
    pub travel: f64,
    pub gamma: f64,
}

impl SelectedEdge {
    pub fn new(c: &LoopCandidate, poses: &[Pose]) -> Self {
        Self {
            i: c.i,
            j: c.j,
            robot_i: poses[c.i].robot,
            robot_j: poses[c.j].robot,
            vertex_i: poses[c.i].vertex,
            vertex_j: poses[c.j].vertex,
            travel: c.travel,
            gamma: c.gamma,
        }
    }

    pub fn candidate(&self) -> LoopCandidate {
        LoopCandidate {
            i: self.i,
            j: self.j,
            gamma: self.gamma,
            travel: self.travel,
        }
    }
}

/// Output of `solve-vrp`: the environment travels with its routes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VrpDocument {
    pub env: EnvGraph,
    pub solution: VrpSolution,
    pub walks: Vec<Walk>,
}

/// Output of `build-pg`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseGraphDocument {
    pub env: EnvGraph,
    pub walks: Vec<Walk>,
    pub graph: CollabPoseGraph,
}

/// Output of `select-loops`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionDocument {
    pub ground: GroundSummary,
    pub result: SolverResult,
    pub edges: Vec<SelectedEdge>,
    pub poses: Vec<Pose>,
}

/// Runs one solver on a ground set and lists the chosen edges.
pub fn select(
    ground: &GroundSet,
    poses: &[Pose],
    spec: SolverSpec,
    seed: u64,
) -> Result<SelectionDocument> {
    let objective = ground.objective()?;
    let result = solvers::run(spec, &objective, seed)?;
    let edges = result
        .selected
        .iter()
        .map(|&k| SelectedEdge::new(&ground.candidates[k], poses))
        .collect();
    Ok(SelectionDocument {
        ground: ground.summary(),
        result,
        edges,
        poses: poses.to_vec(),
    })
}

/// Applies a selection to the walks of a routing document.
pub fn finalize_selection(vrp: &VrpDocument, sel: &SelectionDocument) -> Result<FinalPlan> {
    let oracle = shortest_paths(&vrp.env);
    let edges: Vec<LoopCandidate> = sel.edges.iter().map(SelectedEdge::candidate).collect();
    finalize(&vrp.env, &oracle, &vrp.walks, &sel.poses, &edges)
}

/// Where the pipeline gets its environment.
#[derive(Debug, Clone)]
pub enum EnvSource {
    Generate(GenParams),
    Given(EnvGraph),
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub env: EnvSource,
    pub robots: usize,
    pub common_start: bool,
    pub lambda: f64,
    pub solver: SolverSpec,
    pub seed: u64,
    pub vrp_time_limit_s: f64,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub instance: Instance,
    pub ground: GroundSummary,
    pub selection: SelectionDocument,
    pub plan: FinalPlan,
}

/// Environment → routes → pose graph → ground set → selection → plan.
pub fn run_pipeline(config: &PipelineConfig) -> std::result::Result<PipelineOutput, StageError> {
    let env = match &config.env {
        EnvSource::Generate(p) => generate_random_env(p).at(Stage::Environment)?,
        EnvSource::Given(g) => g.clone(),
    };
    let params = InstanceParams {
        robots: config.robots,
        common_start: config.common_start,
        seed: config.seed,
        vrp_time_limit_s: config.vrp_time_limit_s,
    };
    let instance = build_instance(env, &params)?;
    let ground = instance.pool.ground_set(config.lambda).at(Stage::Candidates);
    let selection = match ground {
        Ok(g) => select(&g, &instance.graph.poses, config.solver, config.seed).at(Stage::Selection)?,
        Err(StageError {
            source: Error::NoCandidates,
            ..
        }) => empty_selection(&instance, config),
        Err(e) => return Err(e),
    };
    let edges: Vec<LoopCandidate> = selection.edges.iter().map(SelectedEdge::candidate).collect();
    let plan = finalize(&instance.env, &instance.oracle, &instance.walks, &instance.graph.poses, &edges)
        .at(Stage::Allocation)?;
    Ok(PipelineOutput {
        ground: selection.ground,
        instance,
        selection,
        plan,
    })
}

/// Selection over an empty candidate set (every pose pair already linked).
fn empty_selection(instance: &Instance, config: &PipelineConfig) -> SelectionDocument {
    SelectionDocument {
        ground: GroundSummary {
            total: 0,
            valid: 0,
            d_max: 0.0,
            alpha_min: 0.0,
            alpha_max: 0.0,
            alpha: 0.0,
            lambda: config.lambda,
        },
        result: SolverResult {
            algorithm: config.solver.label(),
            seed: config.seed,
            selected: Vec::new(),
            objective: 0.0,
            gain: 0.0,
            oracle_calls: 0,
            wall_time_s: 0.0,
        },
        edges: Vec::new(),
        poses: instance.graph.poses.clone(),
    }
}

fn default_sizes() -> Vec<f64> {
    vec![60.0, 80.0, 100.0, 120.0]
}
fn default_trials() -> usize {
    50
}
fn default_robots() -> usize {
    3
}
fn default_true() -> bool {
    true
}
fn default_lambdas() -> Vec<f64> {
    vec![0.3]
}
fn default_algorithms() -> Vec<SolverSpec> {
    let mut v: Vec<SolverSpec> = Algorithm::ALL.iter().map(|&a| SolverSpec::new(a, false)).collect();
    v.extend(
        Algorithm::ALL
            .iter()
            .filter(|a| a.supports_lazy())
            .map(|&a| SolverSpec::new(a, true)),
    );
    v
}
fn default_time_limit() -> f64 {
    20.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_sizes")]
    pub sizes: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_robots")]
    pub robots: usize,
    #[serde(default = "default_true")]
    pub common_start: bool,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<SolverSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_time_limit")]
    pub vrp_time_limit_s: f64,
    /// Worker threads; 0 uses the available parallelism.
    #[serde(default)]
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        if self.sizes.is_empty() || self.sizes.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(invalid(format!("sizes {:?} must be non-empty and non-negative", self.sizes)));
        }
        if self.lambdas.is_empty() || self.lambdas.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return Err(invalid(format!("lambdas {:?} must be non-empty and in [0, 1]", self.lambdas)));
        }
        if self.algorithms.is_empty() {
            return Err(invalid("no algorithms configured"));
        }
        if self.robots == 0 {
            return Err(invalid("at least one robot is required"));
        }
        Ok(())
    }

    pub fn trial_seed(&self, size: f64, trial: usize) -> u64 {
        derive_seed(self.seed, &[size.to_bits(), trial as u64])
    }

    fn worker_count(&self) -> usize {
        if self.threads > 0 {
            self.threads
        } else {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }
    }
}

/// One (size, trial, λ, algorithm) measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub size: f64,
    pub trial: usize,
    pub seed: u64,
    pub lambda: f64,
    pub algorithm: String,
    pub robots: usize,
    pub poses: usize,
    pub total: usize,
    pub valid: usize,
    pub selected: usize,
    pub gain: f64,
    pub objective: f64,
    pub oracle_calls: u64,
    pub wall_time_s: f64,
    pub base_makespan: f64,
    pub final_makespan: f64,
    pub allocation_optimal: bool,
    /// Final walks jointly visit every vertex.
    pub covered: bool,
    /// Largest `|walk edge sum − (base + Σ 2ω)|` over robots.
    pub length_error: f64,
    pub error: Option<String>,
}

/// Checks a plan against its base walks: coverage and length bookkeeping.
pub fn plan_checks(env: &EnvGraph, plan: &FinalPlan) -> (bool, f64) {
    let covered = crate::vrp::covers_all(env, &plan.walks);
    let mut worst: f64 = 0.0;
    for (r, w) in plan.walks.iter().enumerate() {
        let expected = plan.base_lengths[r]
            + plan
                .detours
                .iter()
                .filter(|d| d.robot == r)
                .map(|d| 2.0 * d.travel)
                .sum::<f64>();
        worst = worst.max((w.edge_length_sum(env) - expected).abs());
        worst = worst.max((plan.lengths[r] - expected).abs());
    }
    (covered, worst)
}

fn failed_row(config: &ExperimentConfig, size: f64, trial: usize, lambda: f64, algorithm: String, err: String) -> BenchRow {
    BenchRow {
        size,
        trial,
        seed: config.trial_seed(size, trial),
        lambda,
        algorithm,
        robots: config.robots,
        poses: 0,
        total: 0,
        valid: 0,
        selected: 0,
        gain: f64::NAN,
        objective: f64::NAN,
        oracle_calls: 0,
        wall_time_s: f64::NAN,
        base_makespan: f64::NAN,
        final_makespan: f64::NAN,
        allocation_optimal: false,
        covered: false,
        length_error: f64::NAN,
        error: Some(err),
    }
}

/// All rows of one (size, trial) pair.
pub fn run_trial(config: &ExperimentConfig, size: f64, trial: usize) -> Vec<BenchRow> {
    let seed = config.trial_seed(size, trial);
    let params = InstanceParams {
        robots: config.robots,
        common_start: config.common_start,
        seed,
        vrp_time_limit_s: config.vrp_time_limit_s,
    };
    let fail_all = |msg: String| -> Vec<BenchRow> {
        config
            .lambdas
            .iter()
            .flat_map(|&l| {
                config
                    .algorithms
                    .iter()
                    .map(move |a| (l, a.label()))
            })
            .map(|(l, a)| failed_row(config, size, trial, l, a, msg.clone()))
            .collect()
    };
    let inst = match generate_instance(size, &params) {
        Ok(i) => i,
        Err(e) => {
            log::error!("size {size} trial {trial}: {e}");
            return fail_all(e.to_string());
        }
    };
    let mut rows = Vec::new();
    for &lambda in &config.lambdas {
        let ground = match inst.pool.ground_set(lambda) {
            Ok(g) => g,
            Err(e) => {
                for a in &config.algorithms {
                    rows.push(failed_row(config, size, trial, lambda, a.label(), format!("[candidates] {e}")));
                }
                continue;
            }
        };
        let objective = match ground.objective() {
            Ok(o) => o,
            Err(e) => {
                for a in &config.algorithms {
                    rows.push(failed_row(config, size, trial, lambda, a.label(), format!("[candidates] {e}")));
                }
                continue;
            }
        };
        for &spec in &config.algorithms {
            let outcome = solvers::run(spec, &objective, seed)
                .map_err(|e| format!("[selection] {e}"))
                .and_then(|res| {
                    let edges: Vec<LoopCandidate> = res.selected.iter().map(|&k| ground.candidates[k]).collect();
                    finalize(&inst.env, &inst.oracle, &inst.walks, &inst.graph.poses, &edges)
                        .map(|plan| (res, plan))
                        .map_err(|e| format!("[allocation] {e}"))
                });
            match outcome {
                Ok((res, plan)) => {
                    let (covered, length_error) = plan_checks(&inst.env, &plan);
                    rows.push(BenchRow {
                        size,
                        trial,
                        seed,
                        lambda,
                        algorithm: spec.label(),
                        robots: config.robots,
                        poses: inst.graph.len(),
                        total: ground.total,
                        valid: ground.len(),
                        selected: res.selected.len(),
                        gain: res.gain,
                        objective: res.objective,
                        oracle_calls: res.oracle_calls,
                        wall_time_s: res.wall_time_s,
                        base_makespan: inst.vrp.makespan,
                        final_makespan: plan.makespan,
                        allocation_optimal: plan.allocation_optimal,
                        covered,
                        length_error,
                        error: None,
                    })
                }
                Err(msg) => {
                    log::error!("size {size} trial {trial} {}: {msg}", spec.label());
                    rows.push(failed_row(config, size, trial, lambda, spec.label(), msg));
                }
            }
        }
    }
    rows
}

/// Runs every (size, trial) on a worker pool; rows come back ordered by
/// size, trial, λ and configured algorithm order regardless of scheduling.
pub fn run_benchmark(config: &ExperimentConfig) -> Result<Vec<BenchRow>> {
    config.validate()?;
    let jobs: Vec<(usize, f64, usize)> = config
        .sizes
        .iter()
        .enumerate()
        .flat_map(|(si, &s)| (0..config.trials).map(move |t| (si, s, t)))
        .collect();
    let next = AtomicUsize::new(0);
    let done: Mutex<Vec<((usize, usize), Vec<BenchRow>)>> = Mutex::new(Vec::with_capacity(jobs.len()));
    let workers = config.worker_count().min(jobs.len()).max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(si, size, trial)) = jobs.get(k) else {
                    break;
                };
                let rows = run_trial(config, size, trial);
                log::info!("size {size} trial {trial} finished");
                done.lock().expect("no worker panicked").push(((si, trial), rows));
            });
        }
    });
    let mut done = done.into_inner().expect("no worker panicked");
    done.sort_by_key(|(key, _)| *key);
    Ok(done.into_iter().flat_map(|(_, rows)| rows).collect())
}

/// Per (size, algorithm) aggregates at one λ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub size: f64,
    pub lambda: f64,
    pub algorithm: String,
    pub trials: usize,
    pub failures: usize,
    pub mean_time_s: f64,
    pub median_time_s: f64,
    pub mean_oracle_calls: f64,
    pub mean_gain: f64,
    pub median_gain: f64,
    pub mean_selected: f64,
}

pub fn aggregate(rows: &[BenchRow], algorithms: &[String]) -> Vec<TimingRow> {
    let mut groups: BTreeMap<(u64, u64, usize), Vec<&BenchRow>> = BTreeMap::new();
    for r in rows {
        if let Some(a) = algorithms.iter().position(|x| *x == r.algorithm) {
            groups.entry((r.size.to_bits(), r.lambda.to_bits(), a)).or_default().push(r);
        }
    }
    let mut out: Vec<TimingRow> = groups
        .into_iter()
        .map(|((size, lambda, a), rs)| {
            let ok: Vec<&&BenchRow> = rs.iter().filter(|r| r.error.is_none()).collect();
            let col = |f: fn(&BenchRow) -> f64| -> Vec<f64> { ok.iter().map(|r| f(r)).collect() };
            TimingRow {
                size: f64::from_bits(size),
                lambda: f64::from_bits(lambda),
                algorithm: algorithms[a].clone(),
                trials: ok.len(),
                failures: rs.len() - ok.len(),
                mean_time_s: mean(&col(|r| r.wall_time_s)),
                median_time_s: median(&col(|r| r.wall_time_s)),
                mean_oracle_calls: mean(&col(|r| r.oracle_calls as f64)),
                mean_gain: mean(&col(|r| r.gain)),
                median_gain: median(&col(|r| r.gain)),
                mean_selected: mean(&col(|r| r.selected as f64)),
            }
        })
        .collect();
    out.sort_by(|a, b| a.size.total_cmp(&b.size).then(a.lambda.total_cmp(&b.lambda)));
    out
}

type TrialKey = (u64, usize);

/// Gains by (size, trial) → algorithm for one λ, successful rows only.
fn gains_at(rows: &[BenchRow], lambda: f64) -> BTreeMap<TrialKey, (u64, BTreeMap<String, f64>)> {
    let mut map: BTreeMap<TrialKey, (u64, BTreeMap<String, f64>)> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.lambda == lambda && r.error.is_none()) {
        map.entry((r.size.to_bits(), r.trial))
            .or_insert_with(|| (r.seed, BTreeMap::new()))
            .1
            .insert(r.algorithm.clone(), r.gain);
    }
    map
}

fn opt(v: Option<&f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

/// Writes `results.csv` and the per-figure CSVs into `dir`.
pub fn write_reports(dir: &Path, config: &ExperimentConfig, rows: &[BenchRow]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let labels: Vec<String> = config.algorithms.iter().map(SolverSpec::label).collect();
    let lambda = config.lambdas[0];

    let mut w = csv::Writer::from_path(dir.join("results.csv"))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;

    // objective gains per trial, ordered by the simple-greedy gain
    let gains = gains_at(rows, lambda);
    let mut w = csv::Writer::from_path(dir.join("fig4_objectives.csv"))?;
    let mut header = vec!["size".to_string(), "rank".into(), "trial".into(), "seed".into(), "lambda".into()];
    header.extend(labels.iter().cloned());
    w.write_record(&header)?;
    let mut by_size: BTreeMap<u64, Vec<(usize, &(u64, BTreeMap<String, f64>))>> = BTreeMap::new();
    for ((size, trial), v) in &gains {
        by_size.entry(*size).or_default().push((*trial, v));
    }
    for (size, mut trials) in by_size {
        trials.sort_by(|a, b| {
            let ka = a.1 .1.get("sgre").copied().unwrap_or(f64::NAN);
            let kb = b.1 .1.get("sgre").copied().unwrap_or(f64::NAN);
            ka.total_cmp(&kb).then(a.0.cmp(&b.0))
        });
        for (rank, (trial, (seed, g))) in trials.into_iter().enumerate() {
            let mut rec = vec![
                f64::from_bits(size).to_string(),
                rank.to_string(),
                trial.to_string(),
                seed.to_string(),
                lambda.to_string(),
            ];
            rec.extend(labels.iter().map(|l| opt(g.get(l))));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;

    // improvement ratios against double greedy, and ordering ratios
    let mut w = csv::Writer::from_path(dir.join("fig5_ratios.csv"))?;
    let compared: Vec<&String> = labels.iter().filter(|l| l.as_str() != "dgre").collect();
    let mut header = vec!["size".to_string(), "trial".into(), "seed".into(), "lambda".into()];
    header.extend(compared.iter().map(|l| format!("{l}_vs_dgre")));
    header.push("dgre-order_vs_dgre_order_gain".into());
    header.push("dusm-order_vs_dusm_order_gain".into());
    w.write_record(&header)?;
    let ratio = |g: &BTreeMap<String, f64>, a: &str, b: &str| -> String {
        match (g.get(a), g.get(b)) {
            (Some(x), Some(y)) => ((x - y) / y.abs()).to_string(),
            _ => String::new(),
        }
    };
    for ((size, trial), (seed, g)) in &gains {
        let mut rec = vec![
            f64::from_bits(*size).to_string(),
            trial.to_string(),
            seed.to_string(),
            lambda.to_string(),
        ];
        rec.extend(compared.iter().map(|l| ratio(g, l, "dgre")));
        rec.push(ratio(g, "dgre-order", "dgre"));
        rec.push(ratio(g, "dusm-order", "dusm"));
        w.write_record(&rec)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("fig6_lambda.csv"))?;
    w.write_record(["size", "trial", "seed", "lambda", "algorithm", "total", "valid", "selected", "gain"])?;
    for r in rows.iter().filter(|r| r.error.is_none()) {
        w.write_record([
            r.size.to_string(),
            r.trial.to_string(),
            r.seed.to_string(),
            r.lambda.to_string(),
            r.algorithm.clone(),
            r.total.to_string(),
            r.valid.to_string(),
            r.selected.to_string(),
            r.gain.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("table1_times.csv"))?;
    for t in aggregate(rows, &labels) {
        w.serialize(t)?;
    }
    w.flush()?;
    Ok(())
}

/// Settings of the FIM/Laplacian correlation study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationConfig {
    pub side: f64,
    pub trials: usize,
    pub robots: usize,
    /// Upper bound on random loop edges added per trial.
    pub max_loops: usize,
    pub model: CovarianceModel,
    pub seed: u64,
    pub vrp_time_limit_s: f64,
}

impl CorrelationConfig {
    pub fn new(side: f64, trials: usize, seed: u64) -> Self {
        Self {
            side,
            trials,
            robots: 3,
            max_loops: 200,
            model: CovarianceModel::Heterogeneous,
            seed,
            vrp_time_limit_s: default_time_limit(),
        }
    }
}

/// One point per trial: a fresh instance, a random subset of its candidate
/// loop edges, and per-edge covariances drawn from `config.model`.
pub fn correlation_experiment(config: &CorrelationConfig) -> std::result::Result<CorrelationReport, StageError> {
    if config.trials < 2 {
        return Err(StageError {
            stage: Stage::Environment,
            source: invalid("a correlation needs at least two trials"),
        });
    }
    let mut points = Vec::with_capacity(config.trials);
    for trial in 0..config.trials {
        let seed = derive_seed(config.seed, &[config.side.to_bits(), trial as u64]);
        let params = InstanceParams {
            robots: config.robots,
            common_start: true,
            seed,
            vrp_time_limit_s: config.vrp_time_limit_s,
        };
        let inst = generate_instance(config.side, &params)?;
        let pairs: Vec<(usize, usize)> = inst.pool.candidates.iter().map(|c| (c.i, c.j)).collect();
        let point = correlation_point(&inst.graph, &pairs, config.max_loops, config.model, trial, derive_seed(seed, &[2]))
            .at(Stage::PoseGraph)?;
        points.push(point);
    }
    Ok(CorrelationReport::from_points(points))
}

/// Writes the scatter points as CSV and the correlations to a `.json`
/// file next to it.
pub fn write_correlation(path: &Path, report: &CorrelationReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for p in &report.points {
        w.serialize(p)?;
    }
    w.flush()?;
    let stats = serde_json::json!({ "spearman": report.spearman, "pearson": report.pearson, "trials": report.points.len() });
    std::fs::write(path.with_extension("json"), serde_json::to_string_pretty(&stats)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_distinct_and_stable() {
        let a = derive_seed(7, &[1, 2]);
        assert_eq!(a, derive_seed(7, &[1, 2]));
        assert_ne!(a, derive_seed(7, &[2, 1]));
        assert_ne!(a, derive_seed(8, &[1, 2]));
    }

    #[test]
    fn default_config_lists_all_variants() {
        let c = ExperimentConfig::default();
        assert_eq!(c.trials, 50);
        assert_eq!(c.robots, 3);
        let labels: Vec<String> = c.algorithms.iter().map(SolverSpec::label).collect();
        assert_eq!(
            labels,
            ["sgre", "dgre", "dgre-order", "dusm", "dusm-order", "sgre-lc", "dgre-order-lc", "dusm-order-lc"]
        );
        c.validate().unwrap();
    }

    #[test]
    fn config_rejects_bad_values() {
        let mut c = ExperimentConfig::default();
        c.trials = 0;
        assert!(c.validate().is_err());
        let parsed: std::result::Result<ExperimentConfig, _> = serde_json::from_str(r#"{"algorithms": ["nope"]}"#);
        assert!(parsed.is_err());
        let parsed: std::result::Result<ExperimentConfig, _> = serde_json::from_str(r#"{"trails": 3}"#);
        assert!(parsed.is_err());
    }

    #[test]
    fn common_start_is_shared() {
        let env = generate_random_env(&GenParams::new(40.0, 1)).unwrap();
        let s = pick_starts(&env, 3, true, 5).unwrap();
        assert!(s.iter().all(|&v| v == s[0]));
        let d = pick_starts(&env, 3, false, 5).unwrap();
        assert!(d[0] != d[1] && d[1] != d[2] && d[0] != d[2]);
    }
}
