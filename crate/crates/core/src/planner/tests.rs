use super::*;
use crate::sim::{generate_world, prior_mapping, WorldConfig};
use std::f64::consts::TAU;

struct Fixture {
    world: World,
    belief: GaussianBelief,
    mapper: Mapper,
    motion: MotionSpec,
    sensor: SensorSpec,
    paths: Vec<CandidatePath>,
}

fn fixture(paths: usize) -> Fixture {
    let world = generate_world(
        &WorldConfig {
            width: 40.0,
            height: 40.0,
            landmarks: 60,
            obstacles: vec![],
            seed: 0,
        },
        3,
    )
    .unwrap();
    let motion = MotionSpec::odometry(0.1, 0.01);
    let sensor = SensorSpec::new(6.0, TAU, 0.1, 0.01);
    let traj: Vec<[f64; 2]> = (1..=12).map(|i| [4.0 + 2.0 * i as f64, 6.0]).collect();
    let map = prior_mapping(&world, Pose2::new(4.0, 6.0, 0.0), &traj, &motion, &sensor, &Default::default(), 9).unwrap();
    let prm = PrmConfig {
        samples: 60,
        neighbors: 6,
        radius: Some(12.0),
    };
    let paths = prm_generate(&world, map.mapper.estimated_pose(), [34.0, 30.0], paths, &prm, 2).unwrap();
    Fixture {
        world,
        belief: map.belief,
        mapper: map.mapper,
        motion,
        sensor,
        paths,
    }
}

impl Fixture {
    fn model(&self) -> PlanningModel<'_> {
        PlanningModel {
            belief: &self.belief,
            motion: &self.motion,
            sensor: &self.sensor,
        }
    }
}

fn record(id: usize, lb: f64, ub: f64) -> EvaluationRecord {
    let interval = BoundsInterval {
        lb,
        ub,
        upper: crate::partition::NodeId::ROOT,
        lower: vec![],
    };
    EvaluationRecord {
        path_id: id,
        interval: interval.clone(),
        exact: None,
        level: 0,
        measurements: 0,
        state_cost: 0.0,
        timings: PhaseTimings::default(),
        refinement_trace: vec![RefinementStep { level: 0, interval }],
    }
}

fn strip(records: &[EvaluationRecord]) -> Vec<(usize, f64, f64, Option<f64>, usize)> {
    records
        .iter()
        .map(|r| (r.path_id, r.interval.lb, r.interval.ub, r.exact, r.level))
        .collect()
}

#[test]
fn bounds_contain_exact_for_both_backends() {
    let f = fixture(6);
    for depth in [1, 2, 3] {
        let mut per_backend = Vec::new();
        for backend in [Backend::Dense, Backend::Ramdl] {
            let cfg = PlannerConfig {
                depth,
                backend,
                exact: true,
                ..Default::default()
            };
            let eval = evaluate_candidates(&f.model(), &f.paths, &cfg).unwrap();
            for r in &eval.records {
                let h = r.exact.unwrap();
                assert!(r.interval.contains(h, 1e-9), "{r:?}");
                assert!(r.measurements > 0);
            }
            per_backend.push(eval.records);
        }
        for (a, b) in per_backend[0].iter().zip(&per_backend[1]) {
            assert!((a.interval.lb - b.interval.lb).abs() < 1e-7);
            assert!((a.interval.ub - b.interval.ub).abs() < 1e-7);
            assert!((a.exact.unwrap() - b.exact.unwrap()).abs() < 1e-7);
        }
    }
}

#[test]
fn depth_zero_is_exact() {
    let f = fixture(3);
    let cfg = PlannerConfig {
        depth: 0,
        exact: true,
        ..Default::default()
    };
    let eval = evaluate_candidates(&f.model(), &f.paths[..1], &cfg).unwrap();
    let r = &eval.records[0];
    assert!(r.interval.width().abs() < 1e-9);
    assert!((r.interval.lb - r.exact.unwrap()).abs() < 1e-9);
}

#[test]
fn modes_give_identical_records() {
    let f = fixture(8);
    let mk = |execution| PlannerConfig {
        depth: 2,
        exact: true,
        execution,
        ..Default::default()
    };
    let a = evaluate_candidates(&f.model(), &f.paths, &mk(Execution::Parallel)).unwrap();
    let b = evaluate_candidates(&f.model(), &f.paths, &mk(Execution::Sequential)).unwrap();
    assert_eq!(strip(&a.records), strip(&b.records));
}

#[test]
fn prune_and_select() {
    let records = vec![record(0, 5.0, 7.0), record(1, 6.5, 8.0), record(2, 7.5, 9.0), record(3, 5.0, 6.0)];
    let p = prune(&records);
    assert_eq!(p.min_ub, 6.0);
    assert_eq!(p.pruned, vec![1, 2]);
    assert_eq!(p.survivors, vec![0, 3]);
    let s = select_with_loss(&records).unwrap();
    assert_eq!(s.chosen, 0);
    assert_eq!(s.loss_bound, 2.0);
    assert!(select_with_loss(&[]).is_err());
}

#[test]
fn chosen_is_within_loss_of_best() {
    let f = fixture(10);
    for depth in [1, 2] {
        let cfg = PlannerConfig {
            depth,
            exact: true,
            ..Default::default()
        };
        let eval = evaluate_candidates(&f.model(), &f.paths, &cfg).unwrap();
        let s = select_with_loss(&eval.records).unwrap();
        let best = eval.records.iter().map(|r| r.exact.unwrap()).fold(f64::INFINITY, f64::min);
        let chosen = eval.records[s.chosen].exact.unwrap();
        assert!(chosen - best <= s.loss_bound + 1e-9);
        for id in &s.pruned {
            assert!(eval.records[*id].exact.unwrap() > best);
        }
    }
}

#[test]
fn refinement_tightens_and_terminates() {
    let f = fixture(10);
    let cfg = PlannerConfig {
        depth: 3,
        ..Default::default()
    };
    let mut eval = evaluate_candidates(&f.model(), &f.paths, &cfg).unwrap();
    let before: Vec<f64> = eval.records.iter().map(|r| r.interval.width()).collect();
    let out = refine_adaptive(&mut eval, 10).unwrap();
    for (r, w) in eval.records.iter().zip(before) {
        assert!(r.interval.width() <= w + 1e-9);
        assert_eq!(r.refinement_trace.len(), 1 + cfg.depth.min(r.refinement_trace[0].level) - r.level);
        for t in r.refinement_trace.windows(2) {
            assert!(t[1].interval.lb >= t[0].interval.lb - 1e-9);
            assert!(t[1].interval.ub <= t[0].interval.ub + 1e-9);
        }
    }
    assert!(out.steps <= 10);
    if out.steps < 10 && !out.separated {
        let (i, j, _) = top_two(&eval.records).unwrap();
        assert_eq!((eval.records[i].level, eval.records[j].level), (0, 0));
    }
    let none = refine_adaptive(&mut eval, 0).unwrap();
    assert_eq!(none.steps, 0);
    assert_eq!(none.separated, out.separated);
}

#[test]
fn horizon_sum_adds_truncated_entropies() {
    let f = fixture(2);
    let path = &f.paths[0];
    let cfg = PlannerConfig {
        depth: 1,
        objective: Objective::HorizonSum,
        exact: true,
        ..Default::default()
    };
    let eval = evaluate_candidates(&f.model(), std::slice::from_ref(path), &cfg).unwrap();
    let mut total = 0.0;
    for i in 1..=path.actions.len() {
        let sub = truncated(path, i);
        let single = PlannerConfig {
            objective: Objective::FinalStep,
            ..cfg.clone()
        };
        total += evaluate_candidates(&f.model(), &[sub], &single).unwrap().records[0].exact.unwrap();
    }
    let r = &eval.records[0];
    assert!((r.exact.unwrap() - total).abs() < 1e-8);
    assert!(r.interval.contains(total, 1e-8));
}

#[test]
fn state_cost_shifts_both_bounds() {
    let f = fixture(4);
    let base = PlannerConfig {
        depth: 2,
        exact: true,
        ..Default::default()
    };
    let goal = PlannerConfig {
        alpha: 0.5,
        goal: Some([34.0, 30.0]),
        ..base.clone()
    };
    let a = evaluate_candidates(&f.model(), &f.paths, &base).unwrap();
    let b = evaluate_candidates(&f.model(), &f.paths, &goal).unwrap();
    for (x, y) in a.records.iter().zip(&b.records) {
        // every PRM path ends at the goal
        assert!(y.state_cost.abs() < 1e-9);
        assert!((y.interval.lb - x.interval.lb - y.state_cost).abs() < 1e-12);
    }
    let short = truncated(&f.paths[0], 1);
    let r = state_reward(&f.belief, &short, &f.motion, &goal).unwrap();
    let end = predicted_poses(&f.belief, &short, &f.motion).unwrap()[0];
    assert!((r + 0.5 * end.distance_to([34.0, 30.0])).abs() < 1e-12);
}

#[test]
fn empty_candidate_set_rejected() {
    let f = fixture(1);
    assert!(matches!(
        evaluate_candidates(&f.model(), &[], &PlannerConfig::default()),
        Err(Error::InfeasibleConfig(_))
    ));
}

#[test]
fn replan_loop_is_deterministic() {
    let f = fixture(1);
    let cfg = ReplanConfig {
        steps: 3,
        paths: 5,
        prm: PrmConfig {
            samples: 60,
            neighbors: 6,
            radius: Some(12.0),
        },
        planner: PlannerConfig {
            depth: 2,
            refinement_budget: 2,
            ..Default::default()
        },
        seed: 4,
    };
    let run = || {
        let mut m = f.mapper.clone();
        let log = replan_loop(&f.world, &mut m, &f.motion, &f.sensor, [34.0, 30.0], &cfg).unwrap();
        (log, m.pose_count())
    };
    let (a, poses) = run();
    let (b, _) = run();
    assert_eq!(a.sessions, b.sessions);
    assert_eq!(a.sessions.len(), 3);
    assert_eq!(a.timings.len(), 3);
    assert_eq!(poses, f.mapper.pose_count() + 3);
    for s in &a.sessions {
        assert!(s.lb <= s.ub + 1e-9);
        assert!(s.chosen < s.candidates);
    }
}
