use rbl_core::dynamics::Model;
use rbl_core::engine::{RandomHook, RunOutcome, Scheduling, StopRule, WorldConfig};
use rbl_core::rules::RuleMode;
use rbl_core::scenarios::{compute_metrics, ScenarioKind, ScenarioSpec, Span};
use rbl_core::Point2;

fn run(spec: &ScenarioSpec, cfg: &WorldConfig) -> (RunOutcome, rbl_core::scenarios::Metrics) {
    let placements = spec.placements().unwrap();
    let mut world = spec.build(cfg).unwrap();
    let result = world.run(spec.max_time, None);
    let m = compute_metrics(&result.log, &world, spec.mission_area(&placements));
    (result.outcome, m)
}

#[test]
fn small_circle_sync_and_async_converge() {
    for scheduling in [Scheduling::Sync, Scheduling::Async] {
        let cfg = WorldConfig {
            scheduling,
            ..WorldConfig::default()
        };
        let spec = ScenarioSpec {
            n: 6,
            radius: 4.0,
            max_time: 30.0,
            ..ScenarioSpec::default()
        };
        let (outcome, m) = run(&spec, &cfg);
        assert_eq!(outcome, RunOutcome::Success, "{scheduling:?}");
        assert_eq!(m.rsr, 1.0);
        assert_eq!(m.arrived_ratio, 1.0);
        assert!(m.min_clearance >= 0.0);
        assert!(m.max_time_ball <= m.max_time);
    }
}

#[test]
fn heterogeneous_room_is_safe_and_reaches_goal_balls() {
    let cfg = WorldConfig {
        stop: StopRule::SensingBall,
        ..WorldConfig::default()
    };
    let spec = ScenarioSpec {
        kind: ScenarioKind::Room,
        n: 12,
        delta: Span::Range([0.1, 0.5]),
        beta_d: Span::Range([0.2, 0.75]),
        k_p: Span::Range([3.0, 6.0]),
        seed: 3,
        max_time: 30.0,
        ..ScenarioSpec::default()
    };
    let (outcome, m) = run(&spec, &cfg);
    assert_eq!(outcome, RunOutcome::Success);
    assert_eq!(m.rsr, 1.0);
    assert!(m.min_clearance >= -1e-9);
}

#[test]
fn unicycle_pair_swaps_places() {
    let spec = ScenarioSpec {
        kind: ScenarioKind::FixtureC,
        model: Model::Unicycle,
        v_max: Some(1.5),
        max_time: 30.0,
        ..ScenarioSpec::default()
    };
    let (outcome, m) = run(&spec, &WorldConfig::default());
    assert_eq!(outcome, RunOutcome::Success);
    assert!(m.min_clearance >= 0.0);
    assert!(m.mean_speed <= 1.5);
}

#[test]
fn bicycle_circle_stays_safe() {
    let spec = ScenarioSpec {
        n: 4,
        radius: 4.0,
        model: Model::Bicycle,
        v_max: Some(1.0),
        max_time: 20.0,
        ..ScenarioSpec::default()
    };
    let mut world = spec.build(&WorldConfig::default()).unwrap();
    let result = world.run(spec.max_time, None);
    assert!(result.log.min_clearance() >= -1e-9);
    assert_eq!(result.rollout_violations, 0);
    let first = &result.log.ticks[0].robots[0];
    let last = &result.log.ticks.last().unwrap().robots[0];
    let goal = world.robots[0].goal;
    assert!(Point2::new(last.x, last.y).distance(goal) < Point2::new(first.x, first.y).distance(goal));
}

#[test]
fn frozen_rules_leave_the_symmetric_pair_stuck() {
    let spec = ScenarioSpec {
        kind: ScenarioKind::FixtureC,
        rules: RuleMode::Frozen,
        max_time: 10.0,
        ..ScenarioSpec::default()
    };
    let (outcome, m) = run(&spec, &WorldConfig::default());
    assert_eq!(outcome, RunOutcome::Timeout);
    assert_eq!(m.rsr, 0.0);
    let (outcome, m) = run(&ScenarioSpec { rules: RuleMode::Active, ..spec }, &WorldConfig::default());
    assert_eq!(outcome, RunOutcome::Success);
    assert_eq!(m.rsr, 1.0);
}

#[test]
fn hooked_runs_replay_exactly() {
    let spec = ScenarioSpec {
        kind: ScenarioKind::Room,
        n: 5,
        width: 4.0,
        height: 4.0,
        seed: 11,
        max_time: 2.0,
        ..ScenarioSpec::default()
    };
    let cfg = WorldConfig {
        scheduling: Scheduling::Async,
        seed: 5,
        ..WorldConfig::default()
    };
    let hook = RandomHook { seed: 9, r_s: cfg.r_s };
    let a = spec.build(&cfg).unwrap().run(spec.max_time, Some(&hook));
    let b = spec.build(&cfg).unwrap().run(spec.max_time, Some(&hook));
    assert_eq!(a.log, b.log);
    assert!(a.log.min_clearance() >= -1e-9);
}
