use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use cge_core::experiment::{
    correlation_experiment, finalize_selection, run_pipeline, select, write_correlation, write_reports,
    CorrelationConfig, EnvSource, PipelineConfig, PoseGraphDocument, SelectionDocument, VrpDocument,
};
use cge_core::fim::CovarianceModel;
use cge_core::{
    build_collaborative, expand_to_walk, generate_random_env, run_benchmark, shortest_paths, solve_vrp,
    CandidatePool, Covariance, EnvGraph, ExperimentConfig, GenParams, SolverSpec, VrpOptions,
};

#[derive(Parser)]
#[command(name = "cge", version, about = "Multi-robot exploration planning with informative loop closures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random grid-like environment graph.
    GenEnv(GenEnvArgs),
    /// Plan min-makespan coverage routes.
    SolveVrp(SolveVrpArgs),
    /// Build the collaborative pose graph of the planned walks.
    BuildPg(BuildPgArgs),
    /// Select loop edges with one of the submodular solvers.
    SelectLoops(SelectArgs),
    /// Splice the selected loop edges into the walks.
    Finalize(FinalizeArgs),
    /// Run the whole pipeline on one environment.
    Run(RunArgs),
    /// Compare the weighted-Laplacian metric with the full FIM.
    ValidateFim(FimArgs),
    /// Seeded benchmark batch with CSV reports.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenEnvArgs {
    #[arg(long, default_value_t = 100.0)]
    side: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Full generator parameters as JSON; `--side`/`--seed` override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveVrpArgs {
    #[arg(long)]
    env: PathBuf,
    /// Start vertex per robot, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0,0,0")]
    starts: Vec<usize>,
    /// Local-search time cap in seconds.
    #[arg(long, default_value_t = 20.0)]
    time_limit: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BuildPgArgs {
    /// Routing document written by `solve-vrp`.
    #[arg(long)]
    vrp: PathBuf,
    /// Environment file; defaults to the one embedded in the routing document.
    #[arg(long)]
    env: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SelectArgs {
    /// Pose-graph document written by `build-pg`.
    #[arg(long)]
    pg: PathBuf,
    #[arg(long, default_value = "sgre")]
    algo: String,
    /// Use the lazy-check variant where one exists.
    #[arg(long)]
    lazy: bool,
    #[arg(long, default_value_t = 0.3)]
    lambda: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FinalizeArgs {
    #[arg(long)]
    vrp: PathBuf,
    #[arg(long)]
    sel: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Environment file; a random one is generated when absent.
    #[arg(long)]
    env: Option<PathBuf>,
    #[arg(long, default_value_t = 100.0)]
    side: f64,
    #[arg(long, default_value_t = 3)]
    robots: usize,
    /// Give each robot its own random start vertex.
    #[arg(long)]
    distinct_starts: bool,
    #[arg(long, default_value = "sgre")]
    algo: String,
    #[arg(long)]
    lazy: bool,
    #[arg(long, default_value_t = 0.3)]
    lambda: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20.0)]
    time_limit: f64,
    /// Directory for every intermediate document.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct FimArgs {
    #[arg(long, default_value_t = 120.0)]
    side: f64,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    max_loops: usize,
    /// Use the default covariance on every edge instead of random ones.
    #[arg(long)]
    homogeneous: bool,
    #[arg(long, default_value = "fim.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Experiment configuration as JSON; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value = "results")]
    out_dir: PathBuf,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(path) => fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn solver_spec(algo: &str, lazy: bool) -> Result<SolverSpec> {
    let spec: SolverSpec = algo.parse()?;
    if lazy && !spec.algorithm.supports_lazy() {
        bail!("{algo} has no lazy-check variant");
    }
    Ok(SolverSpec::new(spec.algorithm, spec.lazy || lazy))
}

fn gen_env(args: GenEnvArgs) -> Result<()> {
    let mut params: GenParams = match &args.config {
        Some(path) => read_json(path)?,
        None => GenParams::default(),
    };
    params.side = args.side;
    params.seed = args.seed;
    let env = generate_random_env(&params).context("[environment]")?;
    emit(&env, args.out.as_deref())
}

fn solve(args: SolveVrpArgs) -> Result<()> {
    let env: EnvGraph = read_json(&args.env).context("[environment]")?;
    let oracle = shortest_paths(&env);
    let opts = VrpOptions {
        time_limit: Duration::try_from_secs_f64(args.time_limit).context("[routing] bad --time-limit")?,
        seed: args.seed,
    };
    let solution = solve_vrp(&env, &oracle, &args.starts, &opts).context("[routing]")?;
    let walks = solution
        .routes
        .iter()
        .enumerate()
        .map(|(r, route)| expand_to_walk(&oracle, r, route))
        .collect();
    emit(&VrpDocument { env, solution, walks }, args.out.as_deref())
}

fn build_pg(args: BuildPgArgs) -> Result<()> {
    let doc: VrpDocument = read_json(&args.vrp).context("[routing]")?;
    let env = match &args.env {
        Some(path) => read_json(path).context("[environment]")?,
        None => doc.env,
    };
    let graph = build_collaborative(&doc.walks, Covariance::default_se2()).context("[pose-graph]")?;
    if !graph.connected {
        log::warn!("robot walks share no vertex; the pose graph is disconnected");
    }
    emit(&PoseGraphDocument { env, walks: doc.walks, graph }, args.out.as_deref())
}

fn select_loops(args: SelectArgs) -> Result<()> {
    let spec = solver_spec(&args.algo, args.lazy).context("[selection]")?;
    let doc: PoseGraphDocument = read_json(&args.pg).context("[pose-graph]")?;
    let oracle = shortest_paths(&doc.env);
    let pool = CandidatePool::new(&doc.graph, &oracle, Covariance::default_se2()).context("[candidates]")?;
    let ground = pool.ground_set(args.lambda).context("[candidates]")?;
    let sel = select(&ground, &doc.graph.poses, spec, args.seed).context("[selection]")?;
    let g = &sel.ground;
    eprintln!(
        "|S| = {}, |valid| = {}, alpha in [{:.3e}, {:.3e}], alpha = {:.3e}; {} selected {} edges",
        g.total,
        g.valid,
        g.alpha_min,
        g.alpha_max,
        g.alpha,
        sel.result.algorithm,
        sel.edges.len()
    );
    emit(&sel, args.out.as_deref())
}

fn finalize(args: FinalizeArgs) -> Result<()> {
    let vrp: VrpDocument = read_json(&args.vrp).context("[routing]")?;
    let sel: SelectionDocument = read_json(&args.sel).context("[selection]")?;
    let plan = finalize_selection(&vrp, &sel).context("[allocation]")?;
    eprintln!("makespan {:.2} (routes alone {:.2})", plan.makespan, vrp.solution.makespan);
    emit(&plan, args.out.as_deref())
}

fn run(args: RunArgs) -> Result<()> {
    let env = match &args.env {
        Some(path) => EnvSource::Given(read_json(path).context("[environment]")?),
        None => EnvSource::Generate(GenParams::new(args.side, args.seed)),
    };
    let config = PipelineConfig {
        env,
        robots: args.robots,
        common_start: !args.distinct_starts,
        lambda: args.lambda,
        solver: solver_spec(&args.algo, args.lazy).context("[selection]")?,
        seed: args.seed,
        vrp_time_limit_s: args.time_limit,
    };
    let out = run_pipeline(&config)?;
    eprintln!(
        "{} vertices, {} poses, |S| = {}, |valid| = {}, {} loop edges, makespan {:.2} -> {:.2}",
        out.instance.env.len(),
        out.instance.graph.len(),
        out.ground.total,
        out.ground.valid,
        out.selection.edges.len(),
        out.instance.vrp.makespan,
        out.plan.makespan
    );
    match &args.out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let inst = &out.instance;
            emit(&inst.env, Some(&dir.join("env.json")))?;
            let vrp = VrpDocument {
                env: inst.env.clone(),
                solution: inst.vrp.clone(),
                walks: inst.walks.clone(),
            };
            emit(&vrp, Some(&dir.join("vrp.json")))?;
            let pg = PoseGraphDocument {
                env: inst.env.clone(),
                walks: inst.walks.clone(),
                graph: inst.graph.clone(),
            };
            emit(&pg, Some(&dir.join("pg.json")))?;
            emit(&out.selection, Some(&dir.join("sel.json")))?;
            emit(&out.plan, Some(&dir.join("plan.json")))
        }
        None => emit(&out.plan, None),
    }
}

fn validate_fim(args: FimArgs) -> Result<()> {
    let mut config = CorrelationConfig::new(args.side, args.trials, args.seed);
    config.max_loops = args.max_loops;
    if args.homogeneous {
        config.model = CovarianceModel::Homogeneous(Covariance::default_se2());
    }
    let report = correlation_experiment(&config)?;
    write_correlation(&args.out, &report).context("[output]")?;
    eprintln!(
        "{} trials: spearman {:.4}, pearson {:.4}",
        report.points.len(),
        report.spearman,
        report.pearson
    );
    Ok(())
}

fn bench(args: BenchArgs) -> Result<()> {
    let mut config: ExperimentConfig = match &args.config {
        Some(path) => read_json(path).context("[config]")?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(threads) = args.threads {
        config.threads = threads;
    }
    let rows = run_benchmark(&config).context("[config]")?;
    write_reports(&args.out_dir, &config, &rows).context("[output]")?;
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    eprintln!("{} rows written to {} ({failed} failed)", rows.len(), args.out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenEnv(a) => gen_env(a),
        Command::SolveVrp(a) => solve(a),
        Command::BuildPg(a) => build_pg(a),
        Command::SelectLoops(a) => select_loops(a),
        Command::Finalize(a) => finalize(a),
        Command::Run(a) => run(a),
        Command::ValidateFim(a) => validate_fim(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
