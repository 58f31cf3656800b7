//! World state, neighbor sensing, synchronous and asynchronous scheduling,
//! the weight-override hook and trajectory logging.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{self, DynState, DynamicsError, Input, InputLimits, Model, MpcProblem, MpcSettings};
use crate::field::{FieldError, Grid};
use crate::geom::{Cell, NeighborObs, Point2};
use crate::rules::{self, Decision, GainBoundError, OwnState, RuleError, RuleParams, RuleState, WeightOverride};

/// Clearance below this is a safety violation.
pub const CLEARANCE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("robots {i} and {j} start {distance} apart, closer than their combined encumbrance {required}")]
    StartSeparation { i: usize, j: usize, distance: f64, required: f64 },
    #[error("goals of robots {i} and {j} are {distance} apart, not more than their combined encumbrance {required}")]
    GoalSeparation { i: usize, j: usize, distance: f64, required: f64 },
    #[error("robot {id}: {source}")]
    GainBound { id: usize, source: GainBoundError },
    #[error("robot {id}: {source}")]
    Rule { id: usize, source: RuleError },
    #[error("robot {id}: {source}")]
    Dynamics { id: usize, source: DynamicsError },
    #[error("no robot with id {0}")]
    UnknownRobot(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheduling {
    /// Every robot decides from the same snapshot, then all move at once.
    #[default]
    Sync,
    /// Robots update one at a time in a seeded random order, each against the
    /// positions committed so far.
    Async,
}

/// When a robot counts as arrived for the stop rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    /// All arrival flags set (`‖p − e‖ ≤ goal_tolerance`, with hysteresis).
    #[default]
    GoalTolerance,
    /// All robots strictly inside their sensing ball around the goal.
    SensingBall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub r_s: f64,
    pub dx: f64,
    pub dt: f64,
    pub scheduling: Scheduling,
    pub mpc: MpcSettings,
    /// Distance to the centroid below which the MPC targets zero velocity.
    pub mpc_deadband: f64,
    /// Arrival flags clear only beyond `goal_tolerance + d_hyst`.
    pub d_hyst: f64,
    pub stop: StopRule,
    pub seed: u64,
    /// Reject holonomic robots whose `k_p·dt` exceeds `1 − δ/r_s`.
    pub enforce_gain_bound: bool,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            r_s: 1.5,
            dx: 0.075,
            dt: 0.033,
            scheduling: Scheduling::Sync,
            mpc: MpcSettings::default(),
            mpc_deadband: 0.0,
            d_hyst: 0.1,
            stop: StopRule::GoalTolerance,
            seed: 0,
            enforce_gain_bound: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Robot {
    pub id: usize,
    pub state: DynState,
    pub delta: f64,
    pub goal: Point2,
    pub rule: RuleState,
    pub params: RuleParams,
    pub limits: InputLimits,
    pub arrived: bool,
}

impl Robot {
    /// Robot at rest with its waypoint on the goal and `β = β^D`.
    pub fn new(id: usize, state: DynState, delta: f64, goal: Point2, params: RuleParams, limits: InputLimits) -> Self {
        Self {
            id,
            state,
            delta,
            goal,
            rule: RuleState::at_goal(goal, params.beta_d),
            params,
            limits,
            arrived: false,
        }
    }

    pub fn position(&self) -> Point2 {
        self.state.position()
    }

    fn speed(&self, prev: Point2, dt: f64) -> f64 {
        match self.state {
            DynState::Bicycle { v, .. } => v,
            _ => (self.position() - prev).norm() / dt,
        }
    }

    fn update_arrival(&mut self, d_hyst: f64) {
        let dist = self.position().distance(self.goal);
        if dist <= self.params.goal_tolerance {
            self.arrived = true;
        } else if dist > self.params.goal_tolerance + d_hyst {
            self.arrived = false;
        }
    }
}

/// What a weight-override policy sees.
#[derive(Debug, Clone, Copy)]
pub struct HookContext<'a> {
    pub robot_id: usize,
    pub tick: u64,
    pub own: &'a OwnState,
    pub neighbors: &'a [NeighborObs],
}

/// Waypoint offset from the robot and spreading factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HookAction {
    pub delta_pbar: Point2,
    pub beta: f64,
}

/// Extension point replacing the rule-driven `(p̄, β)`. Proposals are clamped
/// into `‖Δp̄‖ ≤ r_s` and `β ∈ [HOOK_BETA_MIN, HOOK_BETA_MAX]`.
pub trait PolicyHook: Sync {
    fn propose(&self, ctx: &HookContext<'_>) -> Option<HookAction>;
}

pub const HOOK_BETA_MIN: f64 = 0.1;
pub const HOOK_BETA_MAX: f64 = 0.5;

fn clamp_action(action: HookAction, p: Point2, r_s: f64) -> WeightOverride {
    let mut offset = action.delta_pbar;
    let len = offset.norm();
    if !len.is_finite() {
        offset = Point2::ZERO;
    } else if len > r_s {
        offset = offset * (r_s / len);
    }
    let beta = if action.beta.is_nan() {
        HOOK_BETA_MAX
    } else {
        action.beta.clamp(HOOK_BETA_MIN, HOOK_BETA_MAX)
    };
    WeightOverride { pbar: p + offset, beta }
}

/// Uniformly random overrides, deterministic in `(seed, robot, tick)`.
#[derive(Debug, Clone, Copy)]
pub struct RandomHook {
    pub seed: u64,
    pub r_s: f64,
}

impl PolicyHook for RandomHook {
    fn propose(&self, ctx: &HookContext<'_>) -> Option<HookAction> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(mix(self.seed, ctx.robot_id as u64, ctx.tick));
        let radius = self.r_s * rng.gen::<f64>().sqrt();
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        Some(HookAction {
            delta_pbar: Point2::from_polar(radius, angle),
            beta: rng.gen_range(HOOK_BETA_MIN..=HOOK_BETA_MAX),
        })
    }
}

fn mix(a: u64, b: u64, c: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ c.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotRecord {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub beta: f64,
    pub pbar: Point2,
    /// Centroid the robot tracked during the tick that ended here.
    pub command: Point2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub t: f64,
    pub robots: Vec<RobotRecord>,
    /// `min_{i<j} ‖p_i − p_j‖ − Δ_ij`, infinite with fewer than two robots.
    pub min_clearance: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub dt: f64,
    pub ticks: Vec<TickRecord>,
}

impl TrajectoryLog {
    pub fn min_clearance(&self) -> f64 {
        self.ticks.iter().map(|t| t.min_clearance).fold(f64::INFINITY, f64::min)
    }

    pub fn duration(&self) -> f64 {
        self.ticks.last().map_or(0.0, |t| t.t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunOutcome {
    Success,
    Timeout,
    SafetyViolation,
    /// Some robot had no safe MPC solution and was halted.
    MpcFailure,
    Fault(String),
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub log: TrajectoryLog,
    pub outcome: RunOutcome,
    pub mpc_failures: usize,
    pub clamped_inputs: usize,
    /// MPC rollouts with a predicted position outside the planning region.
    pub rollout_violations: usize,
}

struct Plan {
    state: DynState,
    rule: RuleState,
    command: Point2,
    mpc_failed: bool,
    clamped: bool,
    rollout_escaped: bool,
}

#[derive(Debug, Clone)]
pub struct World {
    pub robots: Vec<Robot>,
    pub config: WorldConfig,
    grid: Grid,
    tick: u64,
    permutation_rng: ChaCha8Rng,
    mpc_failures: usize,
    clamped_inputs: usize,
    rollout_violations: usize,
    last_positions: Vec<Point2>,
    last_commands: Vec<Point2>,
    headings: Vec<f64>,
}

impl World {
    /// Validates the configuration, encumbrances, start and goal separation
    /// and (for holonomic robots) the gain bound.
    pub fn new(robots: Vec<Robot>, config: WorldConfig) -> Result<Self, EngineError> {
        for (name, v) in [("r_s", config.r_s), ("dx", config.dx), ("dt", config.dt)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(EngineError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(config.mpc_deadband >= 0.0) {
            return Err(EngineError::InvalidConfig(format!("mpc_deadband must be non-negative, got {}", config.mpc_deadband)));
        }
        if !(config.d_hyst >= 0.0) {
            return Err(EngineError::InvalidConfig(format!("d_hyst must be non-negative, got {}", config.d_hyst)));
        }
        let grid = Grid::new(config.dx, config.r_s).map_err(|e: FieldError| EngineError::InvalidConfig(e.to_string()))?;
        for (k, r) in robots.iter().enumerate() {
            if r.id != k {
                return Err(EngineError::InvalidConfig(format!("robot ids must be 0..N in order, found {} at {k}", r.id)));
            }
            if !(r.delta > 0.0 && r.delta < config.r_s) {
                return Err(EngineError::InvalidConfig(format!(
                    "robot {k}: encumbrance {} must lie in (0, r_s)",
                    r.delta
                )));
            }
            if !r.position().is_finite() || !r.goal.is_finite() {
                return Err(EngineError::InvalidConfig(format!("robot {k}: non-finite start or goal")));
            }
            if r.state.model() == Model::Holonomic && config.enforce_gain_bound {
                rules::validate_gain(r.params.k_p, config.dt, r.delta, config.r_s)
                    .map_err(|source| EngineError::GainBound { id: k, source })?;
            }
        }
        for i in 0..robots.len() {
            for j in i + 1..robots.len() {
                let required = robots[i].delta + robots[j].delta;
                let distance = robots[i].position().distance(robots[j].position());
                if distance < required {
                    return Err(EngineError::StartSeparation { i, j, distance, required });
                }
                let distance = robots[i].goal.distance(robots[j].goal);
                if distance <= required {
                    return Err(EngineError::GoalSeparation { i, j, distance, required });
                }
            }
        }
        let last_positions = robots.iter().map(Robot::position).collect();
        let last_commands = robots.iter().map(Robot::position).collect();
        let headings = robots
            .iter()
            .map(|r| r.state.heading().unwrap_or_else(|| (r.goal - r.position()).angle()))
            .collect();
        let mut world = Self {
            permutation_rng: ChaCha8Rng::seed_from_u64(config.seed),
            robots,
            config,
            grid,
            tick: 0,
            mpc_failures: 0,
            clamped_inputs: 0,
            rollout_violations: 0,
            last_positions,
            last_commands,
            headings,
        };
        for r in &mut world.robots {
            r.update_arrival(world.config.d_hyst);
        }
        Ok(world)
    }

    pub fn clock(&self) -> f64 {
        self.tick as f64 * self.config.dt
    }

    pub fn tick_count(&self) -> u64 {
        self.tick
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn positions(&self) -> Vec<Point2> {
        self.robots.iter().map(Robot::position).collect()
    }

    pub fn mpc_failures(&self) -> usize {
        self.mpc_failures
    }

    /// Positions and encumbrances of the other robots within `2·r_s`
    /// (inclusive) of `robot_id`.
    pub fn sense(&self, robot_id: usize) -> Result<Vec<NeighborObs>, EngineError> {
        let me = self.robots.get(robot_id).ok_or(EngineError::UnknownRobot(robot_id))?;
        Ok(sense_from(&self.robots, me.id, me.position(), 2.0 * self.config.r_s))
    }

    /// Decisions of every robot against the current state, without moving.
    pub fn decide_all(&self, hook: Option<&dyn PolicyHook>) -> Result<Vec<Decision>, EngineError> {
        self.robots
            .iter()
            .map(|r| {
                let obs = sense_from(&self.robots, r.id, r.position(), 2.0 * self.config.r_s);
                self.decide(r, &obs, hook)
            })
            .collect()
    }

    /// `min_{i<j} ‖p_i − p_j‖ − Δ_ij` over the current positions.
    pub fn min_clearance(&self) -> f64 {
        min_clearance(&self.robots)
    }

    fn decide(&self, r: &Robot, obs: &[NeighborObs], hook: Option<&dyn PolicyHook>) -> Result<Decision, EngineError> {
        let own = OwnState {
            position: r.position(),
            encumbrance: r.delta,
            goal: r.goal,
            rule: r.rule,
        };
        let over = hook.and_then(|h| {
            h.propose(&HookContext {
                robot_id: r.id,
                tick: self.tick,
                own: &own,
                neighbors: obs,
            })
            .map(|a| clamp_action(a, own.position, self.config.r_s))
        });
        rules::rbl_decide(&own, obs, &r.params, self.config.r_s, &self.grid, self.config.dt, over)
            .map_err(|source| EngineError::Rule { id: r.id, source })
    }

    fn plan(&self, r: &Robot, obs: &[NeighborObs], hook: Option<&dyn PolicyHook>) -> Result<Plan, EngineError> {
        let d = self.decide(r, obs, hook)?;
        let dt = self.config.dt;
        let p = r.position();
        let region: Cell = match self.config.scheduling {
            Scheduling::Sync => d.cell.shrunk(0.5),
            Scheduling::Async => d.cell.clone(),
        };
        let mut plan = Plan {
            state: r.state,
            rule: d.rule,
            command: d.target,
            mpc_failed: false,
            clamped: false,
            rollout_escaped: false,
        };
        if let DynState::Holonomic { .. } = r.state {
            let mut step = rules::holonomic_step(p, d.target, r.params.k_p, dt) - p;
            let max_step = r.limits.v_max * dt;
            if step.norm() > max_step {
                step = step * (max_step / step.norm());
            }
            let lambda = region.segment_fraction(p, p + step);
            plan.state = DynState::Holonomic { p: p + step * lambda };
            return Ok(plan);
        }
        let problem = MpcProblem {
            settings: self.config.mpc.clone(),
            dt,
            cell: region,
            centroid: d.target,
            limits: r.limits,
            x_init: r.state,
            deadband: self.config.mpc_deadband,
            seed: mix(self.config.seed, r.id as u64, self.tick),
        };
        let input = match dynamics::mpc_solve(&problem) {
            Ok(sol) => {
                plan.rollout_escaped = !sol.trajectory.states[1..]
                    .iter()
                    .all(|s| problem.cell.contains(s.position()));
                sol.inputs[0]
            }
            Err(DynamicsError::SafetyMarginExhausted) => {
                plan.mpc_failed = true;
                match r.state {
                    DynState::Bicycle { .. } => Input::Bicycle {
                        accel: -r.limits.a_max,
                        steer: 0.0,
                    },
                    _ => Input::zero(r.state.model()),
                }
            }
            Err(source) => return Err(EngineError::Dynamics { id: r.id, source }),
        };
        let out = dynamics::step_model(&r.state, input, dt, &r.limits)
            .map_err(|source| EngineError::Dynamics { id: r.id, source })?;
        plan.state = out.state;
        plan.clamped = out.clamped;
        Ok(plan)
    }

    fn commit(&mut self, k: usize, plan: Plan) {
        let r = &mut self.robots[k];
        r.state = plan.state;
        r.rule = plan.rule;
        self.last_commands[k] = plan.command;
        self.mpc_failures += plan.mpc_failed as usize;
        self.clamped_inputs += plan.clamped as usize;
        self.rollout_violations += plan.rollout_escaped as usize;
    }

    /// One synchronous tick: all robots plan from the same snapshot, then all
    /// move.
    pub fn tick_sync(&mut self, hook: Option<&dyn PolicyHook>) -> Result<(), EngineError> {
        self.last_positions = self.positions();
        let reach = 2.0 * self.config.r_s;
        let plans: Vec<Plan> = self
            .robots
            .par_iter()
            .map(|r| {
                let obs = sense_from(&self.robots, r.id, r.position(), reach);
                self.plan(r, &obs, hook)
            })
            .collect::<Result<_, _>>()?;
        for (k, plan) in plans.into_iter().enumerate() {
            self.commit(k, plan);
        }
        self.finish_tick();
        Ok(())
    }

    /// One asynchronous tick: robots update in a seeded random order, each
    /// sensing the positions committed so far.
    pub fn tick_async(&mut self, hook: Option<&dyn PolicyHook>) -> Result<(), EngineError> {
        self.last_positions = self.positions();
        let mut order: Vec<usize> = (0..self.robots.len()).collect();
        order.shuffle(&mut self.permutation_rng);
        let reach = 2.0 * self.config.r_s;
        for k in order {
            let r = &self.robots[k];
            let obs = sense_from(&self.robots, k, r.position(), reach);
            let plan = self.plan(r, &obs, hook)?;
            self.commit(k, plan);
        }
        self.finish_tick();
        Ok(())
    }

    pub fn tick(&mut self, hook: Option<&dyn PolicyHook>) -> Result<(), EngineError> {
        match self.config.scheduling {
            Scheduling::Sync => self.tick_sync(hook),
            Scheduling::Async => self.tick_async(hook),
        }
    }

    fn finish_tick(&mut self) {
        self.tick += 1;
        let d_hyst = self.config.d_hyst;
        for (k, r) in self.robots.iter_mut().enumerate() {
            r.update_arrival(d_hyst);
            let motion = r.position() - self.last_positions[k];
            self.headings[k] = match r.state.heading() {
                Some(h) => h,
                None if motion.norm() > 0.0 => motion.angle(),
                None => self.headings[k],
            };
        }
    }

    fn all_arrived(&self) -> bool {
        match self.config.stop {
            StopRule::GoalTolerance => self.robots.iter().all(|r| r.arrived),
            StopRule::SensingBall => self
                .robots
                .iter()
                .all(|r| r.position().distance(r.goal) < self.config.r_s),
        }
    }

    fn record(&self, first: bool) -> TickRecord {
        let dt = self.config.dt;
        TickRecord {
            t: self.clock(),
            robots: self
                .robots
                .iter()
                .enumerate()
                .map(|(k, r)| {
                    let p = r.position();
                    RobotRecord {
                        id: r.id,
                        x: p.x,
                        y: p.y,
                        heading: self.headings[k],
                        speed: if first { 0.0 } else { r.speed(self.last_positions[k], dt) },
                        beta: r.rule.beta,
                        pbar: r.rule.pbar,
                        command: self.last_commands[k],
                    }
                })
                .collect(),
            min_clearance: self.min_clearance(),
        }
    }

    /// Ticks until every robot has arrived (per the stop rule) or `max_time`
    /// elapses. Errors end the run and are reported in the outcome.
    pub fn run(&mut self, max_time: f64, hook: Option<&dyn PolicyHook>) -> RunResult {
        let mut log = TrajectoryLog {
            dt: self.config.dt,
            ticks: vec![self.record(true)],
        };
        let max_ticks = (max_time / self.config.dt - 1e-9).ceil().max(0.0) as u64;
        let start_tick = self.tick;
        let outcome = loop {
            if log.ticks.last().expect("non-empty").min_clearance < -CLEARANCE_TOLERANCE {
                break RunOutcome::SafetyViolation;
            }
            if self.all_arrived() {
                break if self.mpc_failures > 0 {
                    RunOutcome::MpcFailure
                } else {
                    RunOutcome::Success
                };
            }
            if self.tick - start_tick >= max_ticks {
                break if self.mpc_failures > 0 {
                    RunOutcome::MpcFailure
                } else {
                    RunOutcome::Timeout
                };
            }
            if let Err(e) = self.tick(hook) {
                break RunOutcome::Fault(e.to_string());
            }
            log.ticks.push(self.record(false));
        };
        RunResult {
            log,
            outcome,
            mpc_failures: self.mpc_failures,
            clamped_inputs: self.clamped_inputs,
            rollout_violations: self.rollout_violations,
        }
    }
}

fn sense_from(robots: &[Robot], id: usize, p: Point2, reach: f64) -> Vec<NeighborObs> {
    robots
        .iter()
        .filter(|o| o.id != id && o.position().distance(p) <= reach)
        .map(|o| NeighborObs {
            position: o.position(),
            encumbrance: o.delta,
        })
        .collect()
}

fn min_clearance(robots: &[Robot]) -> f64 {
    let mut best = f64::INFINITY;
    for (i, a) in robots.iter().enumerate() {
        for b in &robots[i + 1..] {
            best = best.min(a.position().distance(b.position()) - (a.delta + b.delta));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> RuleParams {
        RuleParams::with_beta_d(0.5, 1.5, 0.075).unwrap()
    }

    fn holo(id: usize, p: Point2, goal: Point2) -> Robot {
        let limits = InputLimits {
            v_max: f64::INFINITY,
            ..InputLimits::default()
        };
        Robot::new(id, DynState::Holonomic { p }, 0.35, goal, params(), limits)
    }

    fn head_on(scheduling: Scheduling, seed: u64) -> World {
        let robots = vec![
            holo(0, Point2::new(-2.0, 0.0), Point2::new(2.0, 0.0)),
            holo(1, Point2::new(2.0, 0.0), Point2::new(-2.0, 0.0)),
        ];
        World::new(robots, WorldConfig { scheduling, seed, ..WorldConfig::default() }).unwrap()
    }

    #[test]
    fn sensing_range_is_inclusive() {
        let robots = vec![holo(0, Point2::ZERO, Point2::new(0.0, 5.0)), holo(1, Point2::new(3.0, 0.0), Point2::new(3.0, 5.0))];
        let w = World::new(robots, WorldConfig::default()).unwrap();
        assert_eq!(w.sense(0).unwrap().len(), 1);
        assert_eq!(w.sense(1).unwrap()[0].position, Point2::ZERO);
        let robots = vec![holo(0, Point2::ZERO, Point2::new(0.0, 5.0)), holo(1, Point2::new(3.001, 0.0), Point2::new(3.0, 5.0))];
        let w = World::new(robots, WorldConfig::default()).unwrap();
        assert!(w.sense(0).unwrap().is_empty());
        assert!(matches!(w.sense(5), Err(EngineError::UnknownRobot(5))));
    }

    #[test]
    fn validation_rejects_bad_worlds() {
        let close = vec![holo(0, Point2::ZERO, Point2::new(0.0, 5.0)), holo(1, Point2::new(0.5, 0.0), Point2::new(3.0, 5.0))];
        assert!(matches!(World::new(close, WorldConfig::default()), Err(EngineError::StartSeparation { .. })));
        let goals = vec![holo(0, Point2::ZERO, Point2::new(0.0, 5.0)), holo(1, Point2::new(3.0, 0.0), Point2::new(0.7, 5.0))];
        assert!(matches!(World::new(goals, WorldConfig::default()), Err(EngineError::GoalSeparation { .. })));
        let fast = vec![holo(0, Point2::ZERO, Point2::new(0.0, 5.0))];
        let cfg = WorldConfig { dt: 0.2, ..WorldConfig::default() };
        assert!(matches!(World::new(fast.clone(), cfg), Err(EngineError::GainBound { .. })));
        let cfg = WorldConfig { dt: 0.2, enforce_gain_bound: false, ..WorldConfig::default() };
        assert!(World::new(fast, cfg).is_ok());
    }

    #[test]
    fn empty_world_only_advances_clock() {
        let mut w = World::new(vec![], WorldConfig::default()).unwrap();
        w.tick_sync(None).unwrap();
        w.tick_async(None).unwrap();
        assert_eq!(w.tick_count(), 2);
        assert!((w.clock() - 0.066).abs() < 1e-15);
    }

    #[test]
    fn single_robot_approaches_goal_monotonically() {
        let goal = Point2::new(5.0, 0.0);
        let mut w = World::new(vec![holo(0, Point2::ZERO, goal)], WorldConfig::default()).unwrap();
        let mut last = 5.0;
        while last > 0.1 {
            w.tick_sync(None).unwrap();
            let d = w.robots[0].position().distance(goal);
            assert!(d < last, "{d} !< {last}");
            last = d;
        }
    }

    #[test]
    fn single_robot_sync_equals_async() {
        let mk = |s| World::new(vec![holo(0, Point2::ZERO, Point2::new(3.0, 1.0))], WorldConfig { scheduling: s, ..WorldConfig::default() }).unwrap();
        let (mut a, mut b) = (mk(Scheduling::Sync), mk(Scheduling::Async));
        for _ in 0..50 {
            a.tick(None).unwrap();
            b.tick(None).unwrap();
        }
        assert_eq!(a.robots, b.robots);
    }

    #[test]
    fn head_on_is_safe_and_resolves() {
        for s in [Scheduling::Sync, Scheduling::Async] {
            let mut w = head_on(s, 3);
            let res = w.run(30.0, None);
            assert!(res.log.min_clearance() >= -CLEARANCE_TOLERANCE);
            assert_eq!(res.outcome, RunOutcome::Success, "{s:?}");
        }
    }

    #[test]
    fn async_permutation_seed_changes_order_not_safety() {
        let mut logs = Vec::new();
        for seed in 0..4 {
            let mut w = head_on(Scheduling::Async, seed);
            let res = w.run(3.0, None);
            assert!(res.log.min_clearance() >= -CLEARANCE_TOLERANCE);
            logs.push(res.log);
        }
        assert!(logs.windows(2).any(|w| w[0] != w[1]));
    }

    #[test]
    fn runs_are_deterministic() {
        for s in [Scheduling::Sync, Scheduling::Async] {
            let a = head_on(s, 9).run(2.0, None).log;
            let b = head_on(s, 9).run(2.0, None).log;
            assert_eq!(a, b);
        }
    }

    #[test]
    fn trivial_runs() {
        let mut w = World::new(vec![holo(0, Point2::ZERO, Point2::new(0.05, 0.0))], WorldConfig::default()).unwrap();
        let res = w.run(10.0, None);
        assert_eq!(res.outcome, RunOutcome::Success);
        assert_eq!(res.log.ticks.len(), 1);
        let mut w = World::new(vec![holo(0, Point2::ZERO, Point2::new(4.0, 0.0))], WorldConfig::default()).unwrap();
        let res = w.run(0.0, None);
        assert_eq!(res.outcome, RunOutcome::Timeout);
        assert_eq!(res.log.ticks.len(), 1);
    }

    #[test]
    fn arrival_flag_has_hysteresis() {
        let mut r = holo(0, Point2::new(0.05, 0.0), Point2::ZERO);
        r.update_arrival(0.1);
        assert!(r.arrived);
        r.state = DynState::Holonomic { p: Point2::new(0.15, 0.0) };
        r.update_arrival(0.1);
        assert!(r.arrived);
        r.state = DynState::Holonomic { p: Point2::new(0.25, 0.0) };
        r.update_arrival(0.1);
        assert!(!r.arrived);
    }

    #[test]
    fn hook_overrides_are_clamped() {
        let o = clamp_action(HookAction { delta_pbar: Point2::new(30.0, 40.0), beta: 9.0 }, Point2::new(1.0, 1.0), 1.5);
        assert!((o.pbar - Point2::new(1.9, 2.2)).norm() < 1e-12);
        assert_eq!(o.beta, HOOK_BETA_MAX);
        let o = clamp_action(HookAction { delta_pbar: Point2::new(f64::NAN, 0.0), beta: 0.0 }, Point2::ZERO, 1.5);
        assert_eq!(o.pbar, Point2::ZERO);
        assert_eq!(o.beta, HOOK_BETA_MIN);
    }

    #[test]
    fn random_hook_keeps_head_on_safe() {
        let hook = RandomHook { seed: 1, r_s: 1.5 };
        for s in [Scheduling::Sync, Scheduling::Async] {
            let res = head_on(s, 1).run(3.0, Some(&hook));
            assert!(res.log.min_clearance() >= -CLEARANCE_TOLERANCE);
            assert!(!matches!(res.outcome, RunOutcome::Fault(_) | RunOutcome::SafetyViolation));
        }
    }

    #[test]
    fn unicycle_pair_crosses_safely() {
        let mk = |id, p: Point2, g: Point2| {
            let state = DynState::at_rest(Model::Unicycle, p, (g - p).angle());
            Robot::new(id, state, 0.35, g, params(), InputLimits::default())
        };
        let robots = vec![
            mk(0, Point2::new(-2.0, 0.0), Point2::new(2.0, 0.0)),
            mk(1, Point2::new(2.0, 0.0), Point2::new(-2.0, 0.0)),
        ];
        let mut w = World::new(robots, WorldConfig::default()).unwrap();
        let res = w.run(30.0, None);
        assert!(res.log.min_clearance() >= -CLEARANCE_TOLERANCE);
        assert_eq!(res.outcome, RunOutcome::Success);
        assert!(res.log.ticks.iter().flat_map(|t| &t.robots).all(|r| r.speed <= 1.5 + 1e-9));
    }
}
