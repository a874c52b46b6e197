//! Scenario runs and parameter sweeps with CSV/JSON output.
//!
//! `records.csv`, `bounds_by_path.csv` and `episode.csv` hold only values that
//! are a function of the configuration and seed, so two runs produce identical
//! bytes. Wall-clock measurements go to `timings.csv` and `report.json`.

use crate::bounds::{
    conditional_entropy, level_bounds, partitioned_bounds, Backend, DenseBackend, PosteriorLogdet, RamdlBackend,
    RamdlPrior,
};
use crate::config::{ConfigError, ScenarioConfig};
use crate::error::Error;
use crate::parallel;
use crate::partition::{max_depth, NodeId, PartitionTree};
use crate::planner::{
    evaluate_candidates, refine_adaptive, replan_loop, select_with_loss, EpisodeLog, EvaluationRecord, PlannerConfig,
    PlanningModel, RefinementOutcome, ReplanConfig, SelectionResult,
};
use crate::sim::{
    build_collective_jacobian, generate_world, predict_associations, prior_mapping, prm_generate, CandidatePath,
    PriorMap, SensorSpec, World,
};
use crate::synthetic::{slam_instance, SlamShape};
use crate::motion::MotionSpec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

/// Version of the CSV column layouts written by this module.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{context}: {source}")]
    Pipeline { context: String, source: Error },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl RunError {
    fn pipeline(context: impl Into<String>) -> impl FnOnce(Error) -> Self {
        let context = context.into();
        move |source| RunError::Pipeline { context, source }
    }
}

/// Command-line overrides applied on top of a scenario file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    /// Timed repetitions after one discarded warm-up run; 0 is treated as 1.
    pub repeats: usize,
    /// Worker threads; 0 keeps the global pool.
    pub threads: usize,
}

impl RunOptions {
    fn apply(&self, config: &ScenarioConfig) -> ScenarioConfig {
        let mut c = config.clone();
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(d) = &self.output_dir {
            c.output_dir = d.clone();
        }
        c
    }

    fn repeats(&self) -> usize {
        self.repeats.max(1)
    }
}

/// Mean, sample standard deviation and minimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub samples: Vec<f64>,
}

impl Stat {
    pub fn of(samples: Vec<f64>) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n.max(1.0);
        let var = if samples.len() > 1 {
            samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            mean,
            std: var.sqrt(),
            min: samples.iter().copied().reduce(f64::min).unwrap_or(0.0),
            samples,
        }
    }
}

/// Runs `f` once to warm up, then `repeats` more times, returning the timed results.
fn timed<R>(repeats: usize, mut f: impl FnMut() -> Result<R, RunError>) -> Result<Vec<(R, f64)>, RunError> {
    f()?;
    (0..repeats)
        .map(|_| {
            let t = Instant::now();
            let r = f()?;
            Ok((r, t.elapsed().as_secs_f64()))
        })
        .collect()
}

/// World, models and prior belief of a scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub world: World,
    pub motion: MotionSpec,
    pub sensor: SensorSpec,
    pub prior: PriorMap,
}

impl Scenario {
    pub fn prepare(config: &ScenarioConfig) -> Result<Self, RunError> {
        let world = generate_world(&config.world, config.world.seed).map_err(RunError::pipeline("world generation"))?;
        let motion = config.motion.spec();
        let sensor = config.sensor.spec();
        let prior = prior_mapping(
            &world,
            config.mapping.start_pose(),
            &config.mapping.trajectory(),
            &motion,
            &sensor,
            &config.mapping.options(),
            config.seed,
        )
        .map_err(RunError::pipeline("prior mapping"))?;
        log::debug!(
            "prior map: {} variables, dim {}",
            prior.belief.index().len(),
            prior.belief.dim()
        );
        Ok(Self {
            config: config.clone(),
            world,
            motion,
            sensor,
            prior,
        })
    }

    pub fn model(&self) -> PlanningModel<'_> {
        PlanningModel {
            belief: &self.prior.belief,
            motion: &self.motion,
            sensor: &self.sensor,
        }
    }

    pub fn candidates(&self) -> Result<Vec<CandidatePath>, RunError> {
        prm_generate(
            &self.world,
            self.prior.mapper.estimated_pose(),
            self.config.planning.goal,
            self.config.planning.paths,
            &self.config.planning.prm,
            self.config.seed,
        )
        .map_err(RunError::pipeline("candidate generation"))
    }

    pub fn prior_summary(&self) -> PriorSummary {
        let b = &self.prior.belief;
        PriorSummary {
            poses: self.prior.mapper.pose_count(),
            landmarks: b.landmarks().count(),
            dim: b.dim(),
            factors: self.prior.mapper.factor_count(),
            landmarks_per_pose: self.prior.mapper.landmarks_per_pose(),
            entropy: b.entropy().unwrap_or(f64::NAN),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSummary {
    pub poses: usize,
    pub landmarks: usize,
    pub dim: usize,
    pub factors: usize,
    pub landmarks_per_pose: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub package_version: String,
    pub os: String,
    pub arch: String,
    pub parallel_feature: bool,
    pub threads: usize,
    pub available_parallelism: usize,
}

impl Environment {
    fn capture(threads: usize) -> Self {
        Self {
            package_version: env!("CARGO_PKG_VERSION").to_string(),
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
            parallel_feature: cfg!(feature = "parallel"),
            threads,
            available_parallelism: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub repeats: usize,
    /// One-time prior covariance recovery shared by all candidates.
    pub covariance_recovery_s: Stat,
    /// Sum of the per-candidate build, bound, exact and refinement times.
    pub per_path_total_s: Stat,
    /// Wall clock of evaluation, refinement and selection together.
    pub evaluation_wall_s: Stat,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub config: ScenarioConfig,
    pub environment: Environment,
    pub prior: PriorSummary,
    pub candidates: usize,
    pub selection: SelectionResult,
    pub refinement: RefinementOutcome,
    pub pruned_fraction: f64,
    pub chosen_exact: Option<f64>,
    pub best_exact: Option<f64>,
    pub timing: TimingSummary,
    pub episode: Option<EpisodeLog>,
    #[serde(skip)]
    pub records: Vec<EvaluationRecord>,
    #[serde(skip)]
    pub paths: Vec<CandidatePath>,
}

/// Full-precision scientific notation that parses back to the same `f64`.
pub fn sci(x: f64) -> String {
    format!("{x:e}")
}

fn opt_sci(x: Option<f64>) -> String {
    x.map(sci).unwrap_or_default()
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), RunError> {
    let io = |source: std::io::Error| RunError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(|e| io(e.into()))?;
    w.write_record(header).map_err(|e| io(e.into()))?;
    for r in rows {
        w.write_record(&r).map_err(|e| io(e.into()))?;
    }
    w.flush().map_err(io)?;
    log::debug!("wrote {}", path.display());
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), RunError> {
    let text = serde_json::to_string_pretty(value).expect("reports serialize");
    std::fs::write(path, text + "\n").map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(dir: &Path) -> Result<(), RunError> {
    std::fs::create_dir_all(dir).map_err(|source| RunError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

pub const RECORDS_HEADER: [&str; 13] = [
    "schema_version",
    "path_id",
    "length",
    "actions",
    "measurements",
    "level",
    "lb",
    "ub",
    "width",
    "exact",
    "state_cost",
    "pruned",
    "chosen",
];

struct Session {
    records: Vec<EvaluationRecord>,
    selection: SelectionResult,
    refinement: RefinementOutcome,
    recovery_s: f64,
}

fn plan_once(scenario: &Scenario, paths: &[CandidatePath], planner: &PlannerConfig) -> Result<Session, RunError> {
    let mut eval = evaluate_candidates(&scenario.model(), paths, planner).map_err(RunError::pipeline("evaluation"))?;
    let refinement =
        refine_adaptive(&mut eval, planner.refinement_budget).map_err(RunError::pipeline("refinement"))?;
    let selection = select_with_loss(&eval.records).map_err(RunError::pipeline("selection"))?;
    Ok(Session {
        records: eval.records,
        selection,
        refinement,
        recovery_s: eval.covariance_recovery_s,
    })
}

/// Plans once from the prior (plus an optional re-planning episode) and writes
/// `records.csv`, `bounds_by_path.csv`, `timings.csv`, `report.json` and, for
/// episodes, `episode.csv` into the output directory.
pub fn run_scenario(config: &ScenarioConfig, options: &RunOptions) -> Result<RunReport, RunError> {
    let config = options.apply(config);
    config.validate()?;
    parallel::with_threads(options.threads, || run_scenario_inner(&config, options))
}

fn run_scenario_inner(config: &ScenarioConfig, options: &RunOptions) -> Result<RunReport, RunError> {
    let scenario = Scenario::prepare(config)?;
    let paths = scenario.candidates()?;
    let planner = config.planner();
    let repeats = options.repeats();

    let runs = timed(repeats, || plan_once(&scenario, &paths, &planner))?;
    let (session, _) = runs.last().expect("at least one repeat");
    let records = session.records.clone();

    let dir = &config.output_dir;
    create_dir(dir)?;
    let pruned: std::collections::HashSet<usize> = session.selection.pruned.iter().copied().collect();
    write_csv(
        &dir.join("records.csv"),
        &RECORDS_HEADER,
        records.iter().map(|r| {
            let p = &paths[r.path_id];
            vec![
                SCHEMA_VERSION.to_string(),
                r.path_id.to_string(),
                sci(p.length),
                p.actions.len().to_string(),
                r.measurements.to_string(),
                r.level.to_string(),
                sci(r.interval.lb),
                sci(r.interval.ub),
                sci(r.interval.width()),
                opt_sci(r.exact),
                sci(r.state_cost),
                u8::from(pruned.contains(&r.path_id)).to_string(),
                u8::from(r.path_id == session.selection.chosen).to_string(),
            ]
        }),
    )?;
    let min_ub = records.iter().map(|r| r.interval.ub).fold(f64::INFINITY, f64::min);
    let mut by_lb: Vec<&EvaluationRecord> = records.iter().collect();
    by_lb.sort_by(|a, b| a.interval.lb.total_cmp(&b.interval.lb).then(a.path_id.cmp(&b.path_id)));
    write_csv(
        &dir.join("bounds_by_path.csv"),
        &["rank", "path_id", "lb", "ub", "exact", "min_ub"],
        by_lb.iter().enumerate().map(|(i, r)| {
            vec![
                i.to_string(),
                r.path_id.to_string(),
                sci(r.interval.lb),
                sci(r.interval.ub),
                opt_sci(r.exact),
                sci(min_ub),
            ]
        }),
    )?;
    write_csv(
        &dir.join("timings.csv"),
        &["repeat", "path_id", "build_s", "bounds_s", "exact_s", "refine_s", "total_s"],
        runs.iter().enumerate().flat_map(|(k, (s, _))| {
            s.records.iter().map(move |r| {
                let t = r.timings;
                vec![
                    k.to_string(),
                    r.path_id.to_string(),
                    sci(t.build_s),
                    sci(t.bounds_s),
                    sci(t.exact_s),
                    sci(t.refine_s),
                    sci(t.total()),
                ]
            })
        }),
    )?;

    let episode = if config.replan_steps > 0 {
        let mut mapper = scenario.prior.mapper.clone();
        let replan = ReplanConfig {
            steps: config.replan_steps,
            paths: config.planning.paths,
            prm: config.planning.prm,
            planner: planner.clone(),
            seed: config.seed,
        };
        let log = replan_loop(
            &scenario.world,
            &mut mapper,
            &scenario.motion,
            &scenario.sensor,
            config.planning.goal,
            &replan,
        )
        .map_err(RunError::pipeline("re-planning episode"))?;
        write_csv(
            &dir.join("episode.csv"),
            &[
                "iteration", "est_x", "est_y", "est_theta", "true_x", "true_y", "true_theta", "candidates", "chosen",
                "chosen_length", "lb", "ub", "loss_bound", "pruned", "refinement_steps", "action_dx", "action_dy",
                "action_dtheta",
            ],
            log.sessions.iter().map(|s| {
                vec![
                    s.iteration.to_string(),
                    sci(s.estimated_pose.x),
                    sci(s.estimated_pose.y),
                    sci(s.estimated_pose.theta),
                    sci(s.true_pose.x),
                    sci(s.true_pose.y),
                    sci(s.true_pose.theta),
                    s.candidates.to_string(),
                    s.chosen.to_string(),
                    sci(s.chosen_length),
                    sci(s.lb),
                    sci(s.ub),
                    sci(s.loss_bound),
                    s.pruned.to_string(),
                    s.refinement_steps.to_string(),
                    sci(s.action.dx),
                    sci(s.action.dy),
                    sci(s.action.dtheta),
                ]
            }),
        )?;
        Some(log)
    } else {
        None
    };

    let chosen_exact = records[session.selection.chosen].exact;
    let best_exact = records
        .iter()
        .map(|r| r.exact)
        .collect::<Option<Vec<f64>>>()
        .map(|v| v.into_iter().fold(f64::INFINITY, f64::min));
    let report = RunReport {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        environment: Environment::capture(options.threads),
        prior: scenario.prior_summary(),
        candidates: paths.len(),
        selection: session.selection.clone(),
        refinement: session.refinement,
        pruned_fraction: session.selection.pruned.len() as f64 / paths.len() as f64,
        chosen_exact,
        best_exact,
        timing: TimingSummary {
            repeats,
            covariance_recovery_s: Stat::of(runs.iter().map(|(s, _)| s.recovery_s).collect()),
            per_path_total_s: Stat::of(
                runs.iter()
                    .map(|(s, _)| s.records.iter().map(|r| r.timings.total()).sum())
                    .collect(),
            ),
            evaluation_wall_s: Stat::of(runs.iter().map(|(_, t)| *t).collect()),
        },
        episode,
        records,
        paths,
    };
    write_json(&dir.join("report.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    Convergence,
    Depth,
    Density,
    Speedup,
}

impl SweepKind {
    pub const ALL: [SweepKind; 4] = [Self::Convergence, Self::Depth, Self::Density, Self::Speedup];

    pub fn name(self) -> &'static str {
        match self {
            Self::Convergence => "convergence",
            Self::Depth => "depth",
            Self::Density => "density",
            Self::Speedup => "speedup",
        }
    }
}

impl fmt::Display for SweepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown sweep `{s}` (expected convergence, depth, density or speedup)"))
    }
}

/// One point of the convergence sweep: `moved` components transferred into `Z^s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub zs_size: usize,
    pub zsbar_size: usize,
    pub lb: f64,
    pub ub: f64,
    pub exact: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthRow {
    pub depth: usize,
    pub nodes: usize,
    pub lb: f64,
    pub ub: f64,
    pub exact: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityRow {
    pub density: f64,
    pub landmarks_per_pose: f64,
    pub prior_factors: usize,
    pub prior_dim: usize,
    pub covariance_recovery_s: Stat,
    /// Per-path partitioned rAMDL bound evaluation, summed over candidates.
    pub partitioned_s: Stat,
    /// Per-path unpartitioned rAMDL exact evaluation, summed over candidates.
    pub ramdl_exact_s: Stat,
    /// Dense-factorization exact evaluation, summed over candidates.
    pub dense_exact_s: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupRow {
    pub rows: usize,
    pub state_dim: usize,
    pub full_s: Stat,
    pub partitioned_s: Stat,
}

impl SpeedupRow {
    pub fn ratio(&self) -> f64 {
        self.full_s.mean / self.partitioned_s.mean
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "rows", rename_all = "kebab-case")]
pub enum SweepOutput {
    Convergence(Vec<ConvergenceRow>),
    Depth(Vec<DepthRow>),
    Density(Vec<DensityRow>),
    Speedup(Vec<SpeedupRow>),
}

/// Runs one sweep and writes `sweep_<kind>.csv` into the output directory.
pub fn run_sweep(kind: SweepKind, config: &ScenarioConfig, options: &RunOptions) -> Result<SweepOutput, RunError> {
    let config = options.apply(config);
    config.validate()?;
    let out = parallel::with_threads(options.threads, || match kind {
        SweepKind::Convergence => convergence_sweep(&config).map(SweepOutput::Convergence),
        SweepKind::Depth => depth_sweep(&config).map(SweepOutput::Depth),
        SweepKind::Density => density_sweep(&config, options.repeats()).map(SweepOutput::Density),
        SweepKind::Speedup => speedup_sweep(&config, options.repeats()).map(SweepOutput::Speedup),
    })?;
    create_dir(&config.output_dir)?;
    let path = config.output_dir.join(format!("sweep_{kind}.csv"));
    let stat = |s: &Stat| [sci(s.mean), sci(s.std), sci(s.min)];
    match &out {
        SweepOutput::Convergence(rows) => write_csv(
            &path,
            &["zs_size", "zsbar_size", "lb", "ub", "exact"],
            rows.iter().map(|r| {
                vec![r.zs_size.to_string(), r.zsbar_size.to_string(), sci(r.lb), sci(r.ub), sci(r.exact)]
            }),
        )?,
        SweepOutput::Depth(rows) => write_csv(
            &path,
            &["depth", "nodes", "lb", "ub", "width", "exact"],
            rows.iter().map(|r| {
                vec![
                    r.depth.to_string(),
                    r.nodes.to_string(),
                    sci(r.lb),
                    sci(r.ub),
                    sci(r.ub - r.lb),
                    sci(r.exact),
                ]
            }),
        )?,
        SweepOutput::Density(rows) => write_csv(
            &path,
            &[
                "density",
                "landmarks_per_pose",
                "prior_factors",
                "prior_dim",
                "recovery_s",
                "recovery_std",
                "recovery_min",
                "partitioned_s",
                "partitioned_std",
                "partitioned_min",
                "ramdl_exact_s",
                "ramdl_exact_std",
                "ramdl_exact_min",
                "dense_exact_s",
                "dense_exact_std",
                "dense_exact_min",
            ],
            rows.iter().map(|r| {
                let mut v = vec![
                    sci(r.density),
                    sci(r.landmarks_per_pose),
                    r.prior_factors.to_string(),
                    r.prior_dim.to_string(),
                ];
                for s in [&r.covariance_recovery_s, &r.partitioned_s, &r.ramdl_exact_s, &r.dense_exact_s] {
                    v.extend(stat(s));
                }
                v
            }),
        )?,
        SweepOutput::Speedup(rows) => write_csv(
            &path,
            &[
                "rows",
                "state_dim",
                "full_s",
                "full_std",
                "full_min",
                "partitioned_s",
                "partitioned_std",
                "partitioned_min",
                "ratio",
            ],
            rows.iter().map(|r| {
                let mut v = vec![r.rows.to_string(), r.state_dim.to_string()];
                v.extend(stat(&r.full_s));
                v.extend(stat(&r.partitioned_s));
                v.push(sci(r.ratio()));
                v
            }),
        )?,
    }
    Ok(out)
}

/// Backend, tree and path used by the single-candidate sweeps.
fn sweep_candidate(config: &ScenarioConfig) -> Result<(Scenario, CandidatePath), RunError> {
    let scenario = Scenario::prepare(config)?;
    let paths = scenario.candidates()?;
    let path = paths
        .into_iter()
        .nth(config.sweep.path)
        .ok_or_else(|| RunError::Pipeline {
            context: "sweep candidate".into(),
            source: Error::InfeasibleConfig(format!("roadmap has no path {}", config.sweep.path)),
        })?;
    let path = match config.planning.horizon {
        Some(h) => path.truncated(h),
        None => path,
    };
    Ok((scenario, path))
}

fn with_candidate_backend<R>(
    config: &ScenarioConfig,
    f: impl FnOnce(&dyn PosteriorLogdet) -> Result<R, Error>,
) -> Result<R, RunError> {
    let (scenario, path) = sweep_candidate(config)?;
    let belief = &scenario.prior.belief;
    let ctx = RunError::pipeline(format!("sweep path {}", path.id));
    let assoc = predict_associations(belief, &path, &scenario.sensor, &scenario.motion).map_err(RunError::pipeline("association"))?;
    let (prop, jac) = build_collective_jacobian(belief, &path, &assoc, &scenario.motion, &scenario.sensor)
        .map_err(RunError::pipeline("jacobian"))?;
    let run = || -> Result<R, Error> {
        match config.planning.backend {
            Backend::Dense => f(&DenseBackend::new(&prop, &jac)?),
            Backend::Ramdl => {
                let current = belief.latest_pose().ok_or(Error::MissingPose)?.id;
                let mut vars = vec![current];
                vars.extend(assoc.involved().into_iter().filter(|&v| v != current));
                let factored = belief.factorize()?;
                let cov = factored.covariance_entries(&vars)?;
                let prior = RamdlPrior::from_propagation(factored.logdet(), &cov, &prop, &assoc.involved())?;
                f(&RamdlBackend::new(&prior, &jac)?)
            }
        }
    };
    run().map_err(ctx)
}

/// Moves the components of `Z^{s̄}` one at a time into an initially empty `Z^s`.
pub fn convergence_sweep(config: &ScenarioConfig) -> Result<Vec<ConvergenceRow>, RunError> {
    let strategy = config.planning.strategy;
    with_candidate_backend(config, |backend| {
        let m = backend.jacobian().n_components();
        let exact = conditional_entropy(backend)?;
        let tree = PartitionTree::build(m, 1.min(max_depth(m)), strategy)?;
        if tree.depth() == 0 {
            let ub = backend.prior_entropy();
            return Ok(vec![ConvergenceRow {
                zs_size: 0,
                zsbar_size: 0,
                lb: ub,
                ub,
                exact,
            }]);
        }
        let (s, sbar) = (NodeId::new(1, 0), NodeId::new(1, 1));
        let mut tree = tree.move_members(s, sbar, tree.members(s)?)?;
        let order = tree.members(sbar)?.to_vec();
        let mut rows = Vec::with_capacity(m + 1);
        for k in 0..=m {
            if k > 0 {
                tree = tree.move_members(sbar, s, &order[k - 1..k])?;
            }
            let iv = partitioned_bounds(backend, &tree.upper(s)?, &tree.lower(&[s, sbar])?)?;
            rows.push(ConvergenceRow {
                zs_size: k,
                zsbar_size: m - k,
                lb: iv.lb,
                ub: iv.ub,
                exact,
            });
        }
        Ok(rows)
    })
}

/// Level bounds of one nested tree from the root down to its deepest level.
pub fn depth_sweep(config: &ScenarioConfig) -> Result<Vec<DepthRow>, RunError> {
    let strategy = config.planning.strategy;
    with_candidate_backend(config, |backend| {
        let m = backend.jacobian().n_components();
        let exact = conditional_entropy(backend)?;
        let tree = PartitionTree::build(m, max_depth(m), strategy)?;
        (0..=tree.depth())
            .map(|d| {
                let cover = tree.level_cover(d)?;
                let iv = level_bounds(backend, &cover)?;
                Ok(DepthRow {
                    depth: d,
                    nodes: cover.nodes.len(),
                    lb: iv.lb,
                    ub: iv.ub,
                    exact,
                })
            })
            .collect()
    })
}

fn per_path_seconds(
    scenario: &Scenario,
    paths: &[CandidatePath],
    planner: &PlannerConfig,
) -> Result<(f64, f64), RunError> {
    let eval = evaluate_candidates(&scenario.model(), paths, planner).map_err(RunError::pipeline("evaluation"))?;
    let per_path = eval.records.iter().map(|r| r.timings.total()).sum();
    Ok((per_path, eval.covariance_recovery_s))
}

/// Re-maps the prior at each re-observation density and times three evaluators
/// over the same candidates: partitioned rAMDL bounds, unpartitioned rAMDL and
/// dense factorization. Candidates are evaluated one at a time so that the
/// summed per-path times are free of thread contention.
pub fn density_sweep(config: &ScenarioConfig, repeats: usize) -> Result<Vec<DensityRow>, RunError> {
    let base = config.planner();
    let partitioned = PlannerConfig {
        backend: Backend::Ramdl,
        exact: false,
        refinement_budget: 0,
        execution: parallel::Execution::Sequential,
        ..base.clone()
    };
    let ramdl_exact = PlannerConfig {
        depth: 0,
        ..partitioned.clone()
    };
    let dense_exact = PlannerConfig {
        backend: Backend::Dense,
        ..ramdl_exact.clone()
    };
    let scenarios = config
        .sweep
        .densities
        .iter()
        .map(|&density| {
            let mut c = config.clone();
            c.mapping.density = density;
            let scenario = Scenario::prepare(&c)?;
            let paths = scenario.candidates()?;
            Ok((density, scenario, paths))
        })
        .collect::<Result<Vec<_>, RunError>>()?;

    // Rounds visit every density in turn so slow drift in machine load is
    // spread over all rows instead of landing between them. Round 0 is warm-up.
    let methods = [&partitioned, &ramdl_exact, &dense_exact];
    let mut samples = vec![[(); 3].map(|_| Vec::with_capacity(repeats)); scenarios.len()];
    let mut recovery = vec![Vec::with_capacity(repeats); scenarios.len()];
    for round in 0..=repeats {
        for (i, (_, scenario, paths)) in scenarios.iter().enumerate() {
            for (k, planner) in methods.iter().enumerate() {
                let (t, rec) = per_path_seconds(scenario, paths, planner)?;
                if round > 0 {
                    samples[i][k].push(t);
                    if k == 0 {
                        recovery[i].push(rec);
                    }
                }
            }
        }
    }
    Ok(scenarios
        .iter()
        .zip(samples)
        .zip(recovery)
        .map(|(((density, scenario, _), [part, ramdl, dense]), rec)| {
            let summary = scenario.prior_summary();
            DensityRow {
                density: *density,
                landmarks_per_pose: summary.landmarks_per_pose,
                prior_factors: summary.factors,
                prior_dim: summary.dim,
                covariance_recovery_s: Stat::of(rec),
                partitioned_s: Stat::of(part),
                ramdl_exact_s: Stat::of(ramdl),
                dense_exact_s: Stat::of(dense),
            }
        })
        .collect())
}

/// Synthetic SLAM kernel with `rows` measurement rows over a state of at least
/// `4 · rows` dimensions.
pub fn speedup_instance(rows: usize, seed: u64) -> Result<crate::synthetic::SlamInstance, Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ rows as u64);
    let shape = SlamShape {
        poses: 20,
        landmarks: (2 * rows).max(30),
        horizon: 2,
        measurements: rows / 2,
    };
    slam_instance(&mut rng, shape, None)
}

/// Times unpartitioned rAMDL evaluation against the depth-1 partitioned bounds.
pub fn speedup_sweep(config: &ScenarioConfig, repeats: usize) -> Result<Vec<SpeedupRow>, RunError> {
    let strategy = config.planning.strategy;
    config
        .sweep
        .speedup_rows
        .iter()
        .map(|&rows| {
            let ctx = || RunError::pipeline(format!("speedup kernel with {rows} rows"));
            let inst = speedup_instance(rows, config.seed).map_err(ctx())?;
            let prior = RamdlPrior::from_propagation(inst.prior_logdet, &inst.prior_cov, &inst.propagation, &inst.involved)
                .map_err(ctx())?;
            let tree = PartitionTree::build(inst.jacobian.n_components(), 1, strategy).map_err(ctx())?;
            let cover = tree.level_cover(1).map_err(ctx())?;
            let full = timed(repeats, || {
                let b = RamdlBackend::new(&prior, &inst.jacobian).map_err(ctx())?;
                conditional_entropy(&b).map_err(ctx())
            })?;
            let part = timed(repeats, || {
                let b = RamdlBackend::new(&prior, &inst.jacobian).map_err(ctx())?;
                level_bounds(&b, &cover).map_err(ctx())
            })?;
            Ok(SpeedupRow {
                rows,
                state_dim: inst.propagation.dim(),
                full_s: Stat::of(full.iter().map(|(_, t)| *t).collect()),
                partitioned_s: Stat::of(part.iter().map(|(_, t)| *t).collect()),
            })
        })
        .collect()
}
