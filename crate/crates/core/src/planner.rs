//! Candidate evaluation, bound-based pruning, selection with a loss bound,
//! adaptive refinement over the partition levels and the re-planning loop.
//!
//! The planner minimizes expected posterior entropy plus an optional
//! state-dependent cost `α · distance(final predicted pose, goal)`.

use crate::belief::{CovarianceTable, GaussianBelief, VarId};
use crate::bounds::{
    conditional_entropy, level_bounds, Backend, BoundsInterval, CollectiveJacobian, DenseBackend, PosteriorLogdet,
    RamdlBackend, RamdlPrior,
};
use crate::belief::Propagation;
use crate::error::{Error, Result};
use crate::motion::{Action, MotionSpec, Pose2};
use crate::parallel::{self, Execution};
use crate::partition::{max_depth, PartitionTree, SplitStrategy};
use crate::sim::{
    build_collective_jacobian, predict_associations, predicted_poses, prm_generate, CandidatePath, DataAssociation,
    Mapper, Point, PrmConfig, SensorSpec, World,
};
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// Entropy of the joint state after the last action.
    #[default]
    FinalStep,
    /// Sum of the entropies after every action of the horizon.
    HorizonSum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub depth: usize,
    pub strategy: SplitStrategy,
    pub backend: Backend,
    pub objective: Objective,
    /// Number of leading actions of each path to plan over; whole paths when absent.
    pub horizon: Option<usize>,
    /// Weight of the distance-to-goal cost.
    pub alpha: f64,
    pub goal: Option<Point>,
    pub refinement_budget: usize,
    /// Also evaluate the exact objective of every candidate.
    pub exact: bool,
    pub execution: Execution,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            depth: 1,
            strategy: SplitStrategy::default(),
            backend: Backend::Ramdl,
            objective: Objective::FinalStep,
            horizon: None,
            alpha: 0.0,
            goal: None,
            refinement_budget: 0,
            exact: false,
            execution: Execution::Parallel,
        }
    }
}

/// Belief and models shared by every candidate of one planning session.
#[derive(Debug, Clone, Copy)]
pub struct PlanningModel<'a> {
    pub belief: &'a GaussianBelief,
    pub motion: &'a MotionSpec,
    pub sensor: &'a SensorSpec,
}

/// Wall-clock seconds spent per phase for one candidate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub build_s: f64,
    pub bounds_s: f64,
    pub exact_s: f64,
    pub refine_s: f64,
}

impl PhaseTimings {
    pub fn total(&self) -> f64 {
        self.build_s + self.bounds_s + self.exact_s + self.refine_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementStep {
    pub level: usize,
    pub interval: BoundsInterval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub path_id: usize,
    /// Bounds on the objective (entropy plus state cost).
    pub interval: BoundsInterval,
    pub exact: Option<f64>,
    /// Partition level the interval was computed at.
    pub level: usize,
    pub measurements: usize,
    pub state_cost: f64,
    pub timings: PhaseTimings,
    pub refinement_trace: Vec<RefinementStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pruning {
    pub min_ub: f64,
    pub pruned: Vec<usize>,
    pub survivors: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub chosen: usize,
    pub loss_bound: f64,
    /// `loss_bound / |objective|`, using the exact objective when known.
    pub loss_ratio: f64,
    pub pruned: Vec<usize>,
    pub survivors: Vec<usize>,
}

struct StepProblem {
    prop: Propagation,
    jac: CollectiveJacobian,
    ramdl: Option<RamdlPrior>,
    tree: PartitionTree,
}

impl StepProblem {
    fn with_backend<R>(&self, f: impl FnOnce(&dyn PosteriorLogdet) -> Result<R>) -> Result<R> {
        match &self.ramdl {
            Some(p) => f(&RamdlBackend::new(p, &self.jac)?),
            None => f(&DenseBackend::new(&self.prop, &self.jac)?),
        }
    }

    fn interval(&self, level: usize) -> Result<BoundsInterval> {
        let cover = self.tree.level_cover(level.min(self.tree.depth()))?;
        self.with_backend(|b| level_bounds(b, &cover))
    }

    fn exact(&self) -> Result<f64> {
        self.with_backend(conditional_entropy)
    }
}

struct CandidateProblem {
    steps: Vec<StepProblem>,
    state_cost: f64,
}

impl CandidateProblem {
    fn max_level(&self) -> usize {
        self.steps.iter().map(|s| s.tree.depth()).max().unwrap_or(0)
    }

    fn interval(&self, level: usize) -> Result<BoundsInterval> {
        let mut total: Option<BoundsInterval> = None;
        for s in &self.steps {
            let iv = s.interval(level)?;
            total = Some(match total {
                None => iv,
                Some(t) => BoundsInterval {
                    lb: t.lb + iv.lb,
                    ub: t.ub + iv.ub,
                    ..iv
                },
            });
        }
        Ok(total.expect("at least one step").shifted(self.state_cost))
    }

    fn exact(&self) -> Result<f64> {
        let mut h = 0.0;
        for s in &self.steps {
            h += s.exact()?;
        }
        Ok(h + self.state_cost)
    }
}

/// Candidate records together with the per-candidate problems needed for refinement.
pub struct Evaluation {
    pub records: Vec<EvaluationRecord>,
    /// One-time prior covariance recovery shared by all candidates (zero for the dense backend).
    pub covariance_recovery_s: f64,
    pub association_s: f64,
    problems: Vec<CandidateProblem>,
}

impl std::fmt::Debug for Evaluation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Evaluation")
            .field("records", &self.records)
            .field("covariance_recovery_s", &self.covariance_recovery_s)
            .finish_non_exhaustive()
    }
}

impl Evaluation {
    /// Exact objective of one candidate, computed on demand.
    pub fn exact(&self, index: usize) -> Result<f64> {
        self.problems[index].exact()
    }

    /// Fills in the exact objective of every record.
    pub fn evaluate_exact(&mut self, exec: Execution) -> Result<()> {
        let idx: Vec<usize> = (0..self.records.len()).collect();
        let values = parallel::try_map(exec, &idx, |&i| {
            let t = Instant::now();
            let h = self.problems[i].exact()?;
            Ok::<_, Error>((h, t.elapsed().as_secs_f64()))
        })?;
        for (r, (h, t)) in self.records.iter_mut().zip(values) {
            r.exact = Some(h);
            r.timings.exact_s += t;
        }
        Ok(())
    }
}

/// `α · distance` from the final most-likely pose to the goal; the negated state reward.
pub fn state_reward(belief: &GaussianBelief, path: &CandidatePath, motion: &MotionSpec, config: &PlannerConfig) -> Result<f64> {
    let Some(goal) = config.goal else {
        return Ok(0.0);
    };
    let last = match predicted_poses(belief, path, motion)?.last() {
        Some(&p) => p,
        None => {
            let v = belief.latest_pose().ok_or(Error::MissingPose)?;
            belief.pose(v.id).expect("pose variable")
        }
    };
    Ok(-config.alpha * last.distance_to(goal))
}

fn truncated(path: &CandidatePath, steps: usize) -> CandidatePath {
    path.truncated(steps)
}

fn build_step(
    model: &PlanningModel,
    path: &CandidatePath,
    assoc: &DataAssociation,
    config: &PlannerConfig,
    shared: Option<&(f64, CovarianceTable)>,
) -> Result<StepProblem> {
    let (prop, jac) = build_collective_jacobian(model.belief, path, assoc, model.motion, model.sensor)?;
    let m = jac.n_components();
    let tree = PartitionTree::build(m, config.depth.min(max_depth(m)), config.strategy)?;
    let ramdl = match shared {
        Some((logdet, cov)) => Some(RamdlPrior::from_propagation(*logdet, cov, &prop, &assoc.involved())?),
        None => None,
    };
    Ok(StepProblem { prop, jac, ramdl, tree })
}

fn build_problem(
    model: &PlanningModel,
    path: &CandidatePath,
    assoc: &DataAssociation,
    config: &PlannerConfig,
    shared: Option<&(f64, CovarianceTable)>,
) -> Result<CandidateProblem> {
    let steps = match config.objective {
        Objective::FinalStep => vec![build_step(model, path, assoc, config, shared)?],
        Objective::HorizonSum => {
            let l = path.actions.len();
            if l == 0 {
                vec![build_step(model, path, assoc, config, shared)?]
            } else {
                (1..=l)
                    .map(|i| {
                        let sub = DataAssociation {
                            per_step: assoc.per_step[..i].to_vec(),
                        };
                        build_step(model, &truncated(path, i), &sub, config, shared)
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        }
    };
    let state_cost = -state_reward(model.belief, path, model.motion, config)?;
    Ok(CandidateProblem { steps, state_cost })
}

/// Bounds (and optionally exact values) of every candidate at the configured partition depth.
pub fn evaluate_candidates(model: &PlanningModel, paths: &[CandidatePath], config: &PlannerConfig) -> Result<Evaluation> {
    if paths.is_empty() {
        return Err(Error::InfeasibleConfig("no candidate paths to evaluate".into()));
    }
    let exec = config.execution;
    let horizon_paths: Vec<CandidatePath>;
    let paths = match config.horizon {
        Some(h) => {
            horizon_paths = paths.iter().map(|p| p.truncated(h)).collect();
            &horizon_paths[..]
        }
        None => paths,
    };
    let t = Instant::now();
    let assocs = parallel::try_map(exec, paths, |p| predict_associations(model.belief, p, model.sensor, model.motion))?;
    let association_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let shared = match config.backend {
        Backend::Dense => None,
        Backend::Ramdl => {
            let current = model.belief.latest_pose().ok_or(Error::MissingPose)?.id;
            let mut vars: Vec<VarId> = assocs.iter().flat_map(DataAssociation::involved).collect();
            vars.sort_unstable();
            vars.dedup();
            vars.insert(0, current);
            let f = model.belief.factorize()?;
            Some((f.logdet(), f.covariance_entries(&vars)?))
        }
    };
    let covariance_recovery_s = t.elapsed().as_secs_f64();

    let work: Vec<(&CandidatePath, &DataAssociation)> = paths.iter().zip(&assocs).collect();
    let built = parallel::try_map(exec, &work, |&(path, assoc)| {
        let t0 = Instant::now();
        let problem = build_problem(model, path, assoc, config, shared.as_ref())?;
        let t1 = Instant::now();
        let level = config.depth.min(problem.max_level());
        let interval = problem.interval(level)?;
        let t2 = Instant::now();
        let exact = if config.exact { Some(problem.exact()?) } else { None };
        let t3 = Instant::now();
        let record = EvaluationRecord {
            path_id: path.id,
            interval: interval.clone(),
            exact,
            level,
            measurements: assoc.measurement_count(),
            state_cost: problem.state_cost,
            timings: PhaseTimings {
                build_s: (t1 - t0).as_secs_f64(),
                bounds_s: (t2 - t1).as_secs_f64(),
                exact_s: (t3 - t2).as_secs_f64(),
                refine_s: 0.0,
            },
            refinement_trace: vec![RefinementStep { level, interval }],
        };
        Ok::<_, Error>((record, problem))
    })?;
    let (records, problems) = built.into_iter().unzip();
    Ok(Evaluation {
        records,
        covariance_recovery_s,
        association_s,
        problems,
    })
}

/// Drops every candidate whose lower bound exceeds the smallest upper bound.
pub fn prune(records: &[EvaluationRecord]) -> Pruning {
    let min_ub = records.iter().map(|r| r.interval.ub).fold(f64::INFINITY, f64::min);
    let (pruned, survivors): (Vec<&EvaluationRecord>, Vec<&EvaluationRecord>) =
        records.iter().partition(|r| r.interval.lb > min_ub);
    Pruning {
        min_ub,
        pruned: pruned.iter().map(|r| r.path_id).collect(),
        survivors: survivors.iter().map(|r| r.path_id).collect(),
    }
}

fn lowest_lb<'a>(records: impl Iterator<Item = &'a EvaluationRecord>) -> Option<&'a EvaluationRecord> {
    records.min_by(|a, b| {
        a.interval
            .lb
            .total_cmp(&b.interval.lb)
            .then(a.path_id.cmp(&b.path_id))
    })
}

/// Prunes, then picks the survivor with the lowest lower bound (ties to the smaller id).
pub fn select_with_loss(records: &[EvaluationRecord]) -> Result<SelectionResult> {
    let pruning = prune(records);
    let chosen = lowest_lb(records.iter().filter(|r| pruning.survivors.contains(&r.path_id)))
        .ok_or_else(|| Error::InfeasibleConfig("no candidates to select from".into()))?;
    let loss_bound = (chosen.interval.ub - chosen.interval.lb).max(0.0);
    let objective = chosen.exact.unwrap_or(chosen.interval.ub);
    Ok(SelectionResult {
        chosen: chosen.path_id,
        loss_bound,
        loss_ratio: if objective == 0.0 { f64::INFINITY } else { loss_bound / objective.abs() },
        pruned: pruning.pruned,
        survivors: pruning.survivors,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinementOutcome {
    pub steps: usize,
    /// The best candidate's upper bound lies strictly below every other lower bound.
    pub separated: bool,
}

/// Whether the lowest-lb candidate is separated from the runner-up; `None` with fewer than two.
fn top_two(records: &[EvaluationRecord]) -> Option<(usize, usize, bool)> {
    let first = lowest_lb(records.iter())?;
    let second = lowest_lb(records.iter().filter(|r| r.path_id != first.path_id))?;
    let i = records.iter().position(|r| r.path_id == first.path_id)?;
    let j = records.iter().position(|r| r.path_id == second.path_id)?;
    Some((i, j, first.interval.ub < second.interval.lb))
}

/// While the two lowest-lb candidates overlap, moves both one partition level up.
pub fn refine_adaptive(evaluation: &mut Evaluation, budget: usize) -> Result<RefinementOutcome> {
    let mut steps = 0;
    loop {
        let Some((i, j, separated)) = top_two(&evaluation.records) else {
            return Ok(RefinementOutcome { steps, separated: true });
        };
        if separated || steps >= budget {
            return Ok(RefinementOutcome { steps, separated });
        }
        let mut moved = false;
        for k in [i, j] {
            let record = &mut evaluation.records[k];
            if record.level == 0 {
                continue;
            }
            let t = Instant::now();
            let level = record.level - 1;
            let interval = evaluation.problems[k].interval(level)?;
            record.timings.refine_s += t.elapsed().as_secs_f64();
            record.level = level;
            record.interval = interval.clone();
            record.refinement_trace.push(RefinementStep { level, interval });
            moved = true;
        }
        if !moved {
            return Ok(RefinementOutcome { steps, separated });
        }
        steps += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplanConfig {
    pub steps: usize,
    pub paths: usize,
    pub prm: PrmConfig,
    pub planner: PlannerConfig,
    pub seed: u64,
}

impl Default for ReplanConfig {
    fn default() -> Self {
        Self {
            steps: 5,
            paths: 20,
            prm: PrmConfig::default(),
            planner: PlannerConfig::default(),
            seed: 0,
        }
    }
}

/// Deterministic summary of one planning session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub iteration: usize,
    pub estimated_pose: Pose2,
    pub true_pose: Pose2,
    pub candidates: usize,
    pub chosen: usize,
    pub chosen_length: f64,
    pub lb: f64,
    pub ub: f64,
    pub loss_bound: f64,
    pub pruned: usize,
    pub refinement_steps: usize,
    pub action: Action,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionTimings {
    pub covariance_recovery_s: f64,
    pub evaluation_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub sessions: Vec<SessionLog>,
    pub timings: Vec<SessionTimings>,
    pub reached_goal: bool,
}

/// Plan, execute the first action of the chosen path, fold the simulated measurements
/// into the belief and re-plan from the new pose, up to `config.steps` times.
pub fn replan_loop(
    world: &World,
    mapper: &mut Mapper,
    motion: &MotionSpec,
    sensor: &SensorSpec,
    goal: Point,
    config: &ReplanConfig,
) -> Result<EpisodeLog> {
    if config.steps == 0 {
        return Err(Error::InfeasibleConfig("an episode needs at least one step".into()));
    }
    let mut log = EpisodeLog {
        sessions: Vec::with_capacity(config.steps),
        timings: Vec::with_capacity(config.steps),
        reached_goal: false,
    };
    for iteration in 0..config.steps {
        let t = Instant::now();
        let belief = mapper.belief()?;
        let start = mapper.estimated_pose();
        let paths = prm_generate(
            world,
            start,
            goal,
            config.paths,
            &config.prm,
            config.seed.wrapping_add(iteration as u64),
        )?;
        let model = PlanningModel {
            belief: &belief,
            motion,
            sensor,
        };
        let t_eval = Instant::now();
        let mut eval = evaluate_candidates(&model, &paths, &config.planner)?;
        let refinement = refine_adaptive(&mut eval, config.planner.refinement_budget)?;
        let selection = select_with_loss(&eval.records)?;
        let evaluation_s = t_eval.elapsed().as_secs_f64();
        let path = &paths[selection.chosen];
        let record = &eval.records[selection.chosen];
        let Some(&action) = path.actions.first() else {
            log.reached_goal = true;
            break;
        };
        log.sessions.push(SessionLog {
            iteration,
            estimated_pose: start,
            true_pose: mapper.true_pose(),
            candidates: paths.len(),
            chosen: selection.chosen,
            chosen_length: path.length,
            lb: record.interval.lb,
            ub: record.interval.ub,
            loss_bound: selection.loss_bound,
            pruned: selection.pruned.len(),
            refinement_steps: refinement.steps,
            action,
        });
        mapper.step(world, &action);
        log.timings.push(SessionTimings {
            covariance_recovery_s: eval.covariance_recovery_s,
            evaluation_s,
            total_s: t.elapsed().as_secs_f64(),
        });
        if path.actions.len() == 1 {
            log.reached_goal = true;
            break;
        }
    }
    Ok(log)
}

#[cfg(test)]
mod tests;
