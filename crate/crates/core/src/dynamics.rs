//! Motion models and the MPC layer that tracks the centroid under
//! non-holonomic constraints while keeping every predicted position inside
//! the robot's cell.
//!
//! The solver is sampling based: a deterministic set of candidate input
//! sequences (braking, constant inputs, a pursuit heuristic, the shifted
//! previous solution and seeded random draws) is rolled out, infeasible
//! rollouts are dropped and the best survivor is refined by coordinate
//! descent. Rollouts are plain forward-Euler integrations, so replaying the
//! returned inputs through [`step_model`] reproduces the solver's trajectory
//! exactly.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Cell, Point2};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("no input sequence keeps the robot inside its cell, braking included")]
    SafetyMarginExhausted,
    #[error("initial position ({x}, {y}) is outside the cell")]
    StartOutsideCell { x: f64, y: f64 },
    #[error("input {input:?} does not match the {model:?} model")]
    ModelMismatch { model: Model, input: Input },
    #[error("invalid MPC problem: {0}")]
    InvalidProblem(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    #[default]
    Holonomic,
    Unicycle,
    Bicycle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum DynState {
    Holonomic { p: Point2 },
    Unicycle { p: Point2, theta: f64 },
    /// Kinematic bicycle: heading `eta`, forward speed `v`.
    Bicycle { p: Point2, eta: f64, v: f64 },
}

impl DynState {
    pub fn position(&self) -> Point2 {
        match *self {
            DynState::Holonomic { p } | DynState::Unicycle { p, .. } | DynState::Bicycle { p, .. } => p,
        }
    }

    pub fn heading(&self) -> Option<f64> {
        match *self {
            DynState::Holonomic { .. } => None,
            DynState::Unicycle { theta, .. } => Some(theta),
            DynState::Bicycle { eta, .. } => Some(eta),
        }
    }

    pub fn model(&self) -> Model {
        match self {
            DynState::Holonomic { .. } => Model::Holonomic,
            DynState::Unicycle { .. } => Model::Unicycle,
            DynState::Bicycle { .. } => Model::Bicycle,
        }
    }

    pub fn with_position(self, p: Point2) -> Self {
        match self {
            DynState::Holonomic { .. } => DynState::Holonomic { p },
            DynState::Unicycle { theta, .. } => DynState::Unicycle { p, theta },
            DynState::Bicycle { eta, v, .. } => DynState::Bicycle { p, eta, v },
        }
    }

    /// Initial state of `model` at `p` facing `heading`, at rest.
    pub fn at_rest(model: Model, p: Point2, heading: f64) -> Self {
        match model {
            Model::Holonomic => DynState::Holonomic { p },
            Model::Unicycle => DynState::Unicycle {
                p,
                theta: wrap_angle(heading),
            },
            Model::Bicycle => DynState::Bicycle {
                p,
                eta: wrap_angle(heading),
                v: 0.0,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Input {
    Holonomic { vx: f64, vy: f64 },
    Unicycle { v: f64, omega: f64 },
    Bicycle { accel: f64, steer: f64 },
}

impl Input {
    pub fn zero(model: Model) -> Self {
        Self::from_array(model, [0.0, 0.0])
    }

    fn from_array(model: Model, u: [f64; 2]) -> Self {
        match model {
            Model::Holonomic => Input::Holonomic { vx: u[0], vy: u[1] },
            Model::Unicycle => Input::Unicycle { v: u[0], omega: u[1] },
            Model::Bicycle => Input::Bicycle { accel: u[0], steer: u[1] },
        }
    }

    fn to_array(self) -> [f64; 2] {
        match self {
            Input::Holonomic { vx, vy } => [vx, vy],
            Input::Unicycle { v, omega } => [v, omega],
            Input::Bicycle { accel, steer } => [accel, steer],
        }
    }

    fn model(&self) -> Model {
        match self {
            Input::Holonomic { .. } => Model::Holonomic,
            Input::Unicycle { .. } => Model::Unicycle,
            Input::Bicycle { .. } => Model::Bicycle,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputLimits {
    /// Maximum forward (or, holonomic, absolute) speed. `f64::INFINITY`
    /// leaves holonomic robots uncapped.
    pub v_max: f64,
    pub omega_max: f64,
    pub a_max: f64,
    pub steer_max: f64,
    pub wheelbase: f64,
}

impl Default for InputLimits {
    fn default() -> Self {
        Self {
            v_max: 1.5,
            omega_max: 3.0,
            a_max: 1.0,
            steer_max: 0.5,
            wheelbase: 0.5,
        }
    }
}

impl InputLimits {
    /// Component-wise bounds on the input array of `model`.
    fn bounds(&self, model: Model) -> [(f64, f64); 2] {
        match model {
            Model::Holonomic => [(-self.v_max, self.v_max), (-self.v_max, self.v_max)],
            Model::Unicycle => [(0.0, self.v_max), (-self.omega_max, self.omega_max)],
            Model::Bicycle => [(-self.a_max, self.a_max), (-self.steer_max, self.steer_max)],
        }
    }
}

/// Wraps an angle to `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: DynState,
    /// True when the input had to be clamped into the limits.
    pub clamped: bool,
}

fn clamp_tracked(x: f64, lo: f64, hi: f64, clamped: &mut bool) -> f64 {
    let y = x.clamp(lo, hi);
    if y != x {
        *clamped = true;
    }
    y
}

/// One forward-Euler step. Out-of-range inputs are clamped and flagged.
pub fn step_model(state: &DynState, input: Input, dt: f64, limits: &InputLimits) -> Result<StepOutcome, DynamicsError> {
    if input.model() != state.model() {
        return Err(DynamicsError::ModelMismatch {
            model: state.model(),
            input,
        });
    }
    let mut clamped = false;
    let state = match (*state, input) {
        (DynState::Holonomic { p }, Input::Holonomic { vx, vy }) => {
            let mut v = Point2::new(vx, vy);
            let speed = v.norm();
            if speed > limits.v_max {
                v = v * (limits.v_max / speed);
                clamped = true;
            }
            DynState::Holonomic { p: p + v * dt }
        }
        (DynState::Unicycle { p, theta }, Input::Unicycle { v, omega }) => {
            let v = clamp_tracked(v, 0.0, limits.v_max, &mut clamped);
            let omega = clamp_tracked(omega, -limits.omega_max, limits.omega_max, &mut clamped);
            DynState::Unicycle {
                p: p + Point2::from_polar(v * dt, theta),
                theta: wrap_angle(theta + omega * dt),
            }
        }
        (DynState::Bicycle { p, eta, v }, Input::Bicycle { accel, steer }) => {
            let accel = clamp_tracked(accel, -limits.a_max, limits.a_max, &mut clamped);
            let steer = clamp_tracked(steer, -limits.steer_max, limits.steer_max, &mut clamped);
            DynState::Bicycle {
                p: p + Point2::from_polar(v * dt, eta),
                eta: wrap_angle(eta + v * steer.tan() / limits.wheelbase * dt),
                v: (v + accel * dt).clamp(0.0, limits.v_max),
            }
        }
        _ => unreachable!("model checked above"),
    };
    Ok(StepOutcome { state, clamped })
}

/// Planar velocity associated with the arrival at `next`: the state speed for
/// the bicycle, the displacement rate otherwise.
fn planar_velocity(prev: &DynState, next: &DynState, dt: f64) -> Point2 {
    match *next {
        DynState::Bicycle { eta, v, .. } => Point2::from_polar(v, eta),
        _ => (next.position() - prev.position()) / dt,
    }
}

/// Target speed as a function of the distance `d` to the centroid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedProfile {
    /// `v^D`.
    Constant,
    /// `v^D·min(1, d/r_s)`.
    Linear,
    /// `min(v^D, k·d)` with `k = speed_gain`.
    #[default]
    Proportional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcSettings {
    /// Predicted steps `N_t`.
    pub horizon: usize,
    /// Consecutive steps sharing one input during refinement and random
    /// sampling.
    pub block_len: usize,
    /// Diagonal of the input weight.
    pub q: [f64; 2],
    /// Target speed `v^D`.
    pub v_desired: f64,
    pub speed_profile: SpeedProfile,
    pub speed_gain: f64,
    pub random_samples: usize,
    pub refine_sweeps: usize,
}

impl Default for MpcSettings {
    fn default() -> Self {
        Self {
            horizon: 40,
            block_len: 4,
            q: [0.01, 0.01],
            v_desired: 1.5,
            speed_profile: SpeedProfile::Proportional,
            speed_gain: 6.0,
            random_samples: 16,
            refine_sweeps: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcProblem {
    pub settings: MpcSettings,
    pub dt: f64,
    /// Region every predicted position must stay in.
    pub cell: Cell,
    pub centroid: Point2,
    pub limits: InputLimits,
    pub x_init: DynState,
    /// Below this distance to the centroid the target velocity is zero.
    pub deadband: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `horizon + 1` states, starting at `x_init`.
    pub states: Vec<DynState>,
    pub inputs: Vec<Input>,
}

impl Trajectory {
    pub fn positions(&self) -> impl Iterator<Item = Point2> + '_ {
        self.states.iter().map(|s| s.position())
    }
}

/// Tracking cost `Σ_k ‖v_k − v^D û_k‖² + u_kᵀ Q u_k`, with `û_k` the unit
/// vector from `p_k` to the centroid; the tracking term targets zero velocity
/// inside the deadband.
pub fn mpc_cost(traj: &Trajectory, problem: &MpcProblem) -> f64 {
    let s = &problem.settings;
    let mut cost = 0.0;
    for (k, input) in traj.inputs.iter().enumerate() {
        let (prev, next) = (&traj.states[k], &traj.states[k + 1]);
        let vel = planar_velocity(prev, next, problem.dt);
        let to_centroid = problem.centroid - next.position();
        let dist = to_centroid.norm();
        let target = if dist < problem.deadband {
            Point2::ZERO
        } else {
            let speed = match s.speed_profile {
                SpeedProfile::Constant => s.v_desired,
                SpeedProfile::Linear => s.v_desired * (dist / problem.cell.radius).min(1.0),
                SpeedProfile::Proportional => s.v_desired.min(s.speed_gain * dist),
            };
            to_centroid * (speed / dist)
        };
        let u = input.to_array();
        cost += (vel - target).norm_squared() + s.q[0] * u[0] * u[0] + s.q[1] * u[1] * u[1];
    }
    cost
}

/// Rolls `inputs` forward from `x_init`.
pub fn rollout(problem: &MpcProblem, inputs: &[Input]) -> Result<Trajectory, DynamicsError> {
    let mut states = Vec::with_capacity(inputs.len() + 1);
    states.push(problem.x_init);
    for u in inputs {
        let prev = *states.last().expect("non-empty");
        states.push(step_model(&prev, *u, problem.dt, &problem.limits)?.state);
    }
    Ok(Trajectory {
        states,
        inputs: inputs.to_vec(),
    })
}

fn feasible(traj: &Trajectory, cell: &Cell) -> bool {
    traj.states[1..].iter().all(|s| cell.contains(s.position()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcSolution {
    pub inputs: Vec<Input>,
    pub trajectory: Trajectory,
    pub cost: f64,
    /// Best cost among the raw candidates, before refinement.
    pub best_sample_cost: f64,
    /// Only the braking sequence was feasible.
    pub braking_fallback: bool,
}

/// Maximum-deceleration, zero-steering sequence.
fn braking_sequence(model: Model, limits: &InputLimits, horizon: usize) -> Vec<[f64; 2]> {
    let u = match model {
        Model::Bicycle => [-limits.a_max, 0.0],
        _ => [0.0, 0.0],
    };
    vec![u; horizon]
}

/// Closed-loop pursuit of the centroid, used as one candidate.
fn pursuit_sequence(problem: &MpcProblem) -> Vec<[f64; 2]> {
    let lim = &problem.limits;
    let dt = problem.dt;
    let v_d = problem.settings.v_desired.min(lim.v_max);
    let mut state = problem.x_init;
    let mut seq = Vec::with_capacity(problem.settings.horizon);
    for _ in 0..problem.settings.horizon {
        let to_c = problem.centroid - state.position();
        let dist = to_c.norm();
        let u = match state {
            DynState::Holonomic { .. } => {
                let speed = v_d.min(dist / dt);
                if dist > 0.0 {
                    let v = to_c * (speed / dist);
                    [v.x, v.y]
                } else {
                    [0.0, 0.0]
                }
            }
            DynState::Unicycle { theta, .. } => {
                let err = wrap_angle(to_c.angle() - theta);
                let omega = (err / dt).clamp(-lim.omega_max, lim.omega_max);
                let v = (v_d * err.cos()).max(0.0).min(dist / dt);
                [v, omega]
            }
            DynState::Bicycle { eta, v, .. } => {
                let err = wrap_angle(to_c.angle() - eta);
                let want = (v_d * err.cos()).max(0.0).min((2.0 * lim.a_max * dist).sqrt());
                let accel = ((want - v) / dt).clamp(-lim.a_max, lim.a_max);
                let steer = if v > 1e-9 {
                    (err / dt * lim.wheelbase / v).atan().clamp(-lim.steer_max, lim.steer_max)
                } else {
                    err.signum() * lim.steer_max
                };
                [accel, steer]
            }
        };
        seq.push(u);
        let input = Input::from_array(state.model(), u);
        state = step_model(&state, input, dt, lim).expect("model matches").state;
    }
    seq
}

struct Candidate {
    u: Vec<[f64; 2]>,
    traj: Trajectory,
    cost: f64,
}

/// Approximately minimizes [`mpc_cost`] subject to the model, the input
/// bounds and containment of every predicted position in `problem.cell`.
pub fn mpc_solve(problem: &MpcProblem) -> Result<MpcSolution, DynamicsError> {
    let settings = &problem.settings;
    if settings.horizon == 0 || settings.block_len == 0 {
        return Err(DynamicsError::InvalidProblem("horizon and block length must be at least 1"));
    }
    if settings.q.iter().any(|q| !(*q > 0.0)) {
        return Err(DynamicsError::InvalidProblem("input weights must be positive"));
    }
    let start = problem.x_init.position();
    if !problem.cell.contains(start) {
        return Err(DynamicsError::StartOutsideCell { x: start.x, y: start.y });
    }
    let model = problem.x_init.model();
    let bounds = problem.limits.bounds(model);
    let n = settings.horizon;
    let block = settings.block_len.min(n);

    let evaluate = |u: Vec<[f64; 2]>| -> Result<Option<Candidate>, DynamicsError> {
        let inputs: Vec<Input> = u.iter().map(|a| Input::from_array(model, *a)).collect();
        let traj = rollout(problem, &inputs)?;
        if !feasible(&traj, &problem.cell) {
            return Ok(None);
        }
        let cost = mpc_cost(&traj, problem);
        Ok(Some(Candidate { u, traj, cost }))
    };
    let clamp = |a: [f64; 2]| -> [f64; 2] {
        let mut b = [a[0].clamp(bounds[0].0, bounds[0].1), a[1].clamp(bounds[1].0, bounds[1].1)];
        if model == Model::Holonomic {
            let speed = b[0].hypot(b[1]);
            if speed > problem.limits.v_max {
                let s = problem.limits.v_max / speed;
                b = [b[0] * s, b[1] * s];
            }
        }
        b
    };

    let mut seeds: Vec<Vec<[f64; 2]>> = Vec::new();
    seeds.push(pursuit_sequence(problem).into_iter().map(clamp).collect());
    let finite = |lo: f64, hi: f64| (lo.max(-5.0), hi.min(5.0));
    let (r0, r1) = (finite(bounds[0].0, bounds[0].1), finite(bounds[1].0, bounds[1].1));
    const LEVELS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
    for a in LEVELS {
        for b in LEVELS {
            for sign in [-1.0, 1.0] {
                if b == 0.0 && sign > 0.0 {
                    continue;
                }
                let u0 = r0.0 + a * (r0.1 - r0.0);
                let u1 = 0.5 * (r1.0 + r1.1) + sign * b * 0.5 * (r1.1 - r1.0);
                seeds.push(vec![clamp([u0, u1]); n]);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(problem.seed);
    for _ in 0..settings.random_samples {
        let blocks: Vec<[f64; 2]> = (0..n.div_ceil(block))
            .map(|_| clamp([rng.gen_range(r0.0..=r0.1), rng.gen_range(r1.0..=r1.1)]))
            .collect();
        seeds.push((0..n).map(|k| blocks[k / block]).collect());
    }

    let mut best: Option<Candidate> = None;
    for u in seeds {
        if let Some(c) = evaluate(u)? {
            if best.as_ref().is_none_or(|b| c.cost < b.cost) {
                best = Some(c);
            }
        }
    }

    let Some(mut best) = best else {
        let brake = braking_sequence(model, &problem.limits, n);
        return match evaluate(brake)? {
            Some(c) => Ok(MpcSolution {
                inputs: c.traj.inputs.clone(),
                cost: c.cost,
                best_sample_cost: c.cost,
                trajectory: c.traj,
                braking_fallback: true,
            }),
            None => Err(DynamicsError::SafetyMarginExhausted),
        };
    };
    let best_sample_cost = best.cost;

    let widths = [r0.1 - r0.0, r1.1 - r1.0];
    for sweep in 0..settings.refine_sweeps {
        let scale = 0.25 / (1 << sweep) as f64;
        for start in (0..n).step_by(block) {
            let range = start..(start + block).min(n);
            for dim in 0..2 {
                for frac in [scale, scale * 0.25] {
                    for sign in [-1.0, 1.0] {
                        let mut u = best.u.clone();
                        for a in &mut u[range.clone()] {
                            a[dim] += sign * frac * widths[dim];
                            *a = clamp(*a);
                        }
                        if u[range.clone()] == best.u[range.clone()] {
                            continue;
                        }
                        if let Some(c) = evaluate(u)? {
                            if c.cost < best.cost {
                                best = c;
                            }
                        }
                    }
                }
            }
        }
    }

    Ok(MpcSolution {
        inputs: best.traj.inputs.clone(),
        cost: best.cost,
        best_sample_cost,
        trajectory: best.traj,
        braking_fallback: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{build_cell, NeighborObs};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const DT: f64 = 0.033;

    fn problem(x_init: DynState, cell: Cell, centroid: Point2) -> MpcProblem {
        MpcProblem {
            settings: MpcSettings::default(),
            dt: DT,
            cell,
            centroid,
            limits: InputLimits::default(),
            x_init,
            deadband: 0.075,
            seed: 7,
        }
    }

    #[test]
    fn unicycle_steps() {
        let lim = InputLimits::default();
        let s = DynState::Unicycle { p: Point2::ZERO, theta: 0.0 };
        let next = step_model(&s, Input::Unicycle { v: 1.0, omega: 0.0 }, 0.1, &lim).unwrap();
        assert_eq!(next.state, DynState::Unicycle { p: Point2::new(0.1, 0.0), theta: 0.0 });
        assert!(!next.clamped);
        let spin = step_model(&s, Input::Unicycle { v: 0.0, omega: 1.0 }, 0.1, &lim).unwrap();
        assert_eq!(spin.state, DynState::Unicycle { p: Point2::ZERO, theta: 0.1 });
    }

    #[test]
    fn bicycle_heading_rate() {
        let lim = InputLimits { wheelbase: 0.5, steer_max: 1.0, ..InputLimits::default() };
        let s = DynState::Bicycle { p: Point2::ZERO, eta: 0.0, v: 1.0 };
        let out = step_model(&s, Input::Bicycle { accel: 0.0, steer: 0.5f64.atan() }, 0.1, &lim).unwrap();
        let DynState::Bicycle { p, eta, v } = out.state else { panic!() };
        assert_abs_diff_eq!(eta, 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(p.x, 0.1, epsilon = 1e-12);
        assert_eq!(v, 1.0);
    }

    #[test]
    fn out_of_range_inputs_are_clamped_and_flagged() {
        let lim = InputLimits::default();
        let s = DynState::Unicycle { p: Point2::ZERO, theta: 0.0 };
        let out = step_model(&s, Input::Unicycle { v: 10.0, omega: -9.0 }, 0.1, &lim).unwrap();
        assert!(out.clamped);
        let DynState::Unicycle { p, theta } = out.state else { panic!() };
        assert_abs_diff_eq!(p.x, 0.15, epsilon = 1e-12);
        assert_abs_diff_eq!(theta, -0.3, epsilon = 1e-12);
        let h = step_model(&DynState::Holonomic { p: Point2::ZERO }, Input::Holonomic { vx: 3.0, vy: 4.0 }, 1.0, &lim).unwrap();
        assert!(h.clamped);
        assert_abs_diff_eq!(h.state.position().norm(), 1.5, epsilon = 1e-12);
        assert!(step_model(&s, Input::Holonomic { vx: 0.0, vy: 0.0 }, 0.1, &lim).is_err());
    }

    #[test]
    fn angles_wrap_into_half_open_interval() {
        assert_abs_diff_eq!(wrap_angle(PI), PI, epsilon = 1e-15);
        assert_abs_diff_eq!(wrap_angle(-PI), PI, epsilon = 1e-15);
        assert_abs_diff_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-12);
        let s = DynState::Unicycle { p: Point2::ZERO, theta: 3.1 };
        let out = step_model(&s, Input::Unicycle { v: 0.0, omega: 3.0 }, 0.1, &InputLimits::default()).unwrap();
        let theta = out.state.heading().unwrap();
        assert!(theta > -PI && theta <= PI);
    }

    #[test]
    fn cost_examples() {
        let cell = Cell::disk(Point2::ZERO, 1.5);
        let at_rest = DynState::Unicycle { p: Point2::ZERO, theta: 0.0 };
        let mut pb = problem(at_rest, cell, Point2::ZERO);
        pb.settings.horizon = 3;
        let still = rollout(&pb, &[Input::Unicycle { v: 0.0, omega: 0.0 }; 3]).unwrap();
        assert_eq!(mpc_cost(&still, &pb), 0.0);
        let moving = rollout(&pb, &[Input::Unicycle { v: 1.0, omega: 0.0 }; 3]).unwrap();
        assert!(mpc_cost(&moving, &pb) > 3.0);

        // exact tracking of v^D û costs nothing without input weights
        pb.settings.q = [0.0, 0.0];
        pb.centroid = Point2::new(1.0, 0.0);
        let one = rollout(&pb, &[Input::Unicycle { v: 1.5, omega: 0.0 }]).unwrap();
        assert_abs_diff_eq!(mpc_cost(&one, &pb), 0.0, epsilon = 1e-20);
        let idle = rollout(&pb, &[Input::Unicycle { v: 0.0, omega: 0.0 }]).unwrap();
        assert_abs_diff_eq!(mpc_cost(&idle, &pb), 2.25, epsilon = 1e-12);
    }

    #[test]
    fn holonomic_solution_tracks_centroid_direction() {
        let c = Point2::new(0.6, -0.8);
        let pb = problem(DynState::Holonomic { p: Point2::ZERO }, Cell::disk(Point2::ZERO, 1.5), c);
        let sol = mpc_solve(&pb).unwrap();
        let Input::Holonomic { vx, vy } = sol.inputs[0] else { panic!() };
        let v = Point2::new(vx, vy);
        assert!(v.normalized().unwrap().dot(c.normalized().unwrap()) > 0.99);
    }

    #[test]
    fn unicycle_facing_away_turns_then_advances() {
        let cell = Cell::disk(Point2::ZERO, 1.5);
        let x0 = DynState::Unicycle { p: Point2::ZERO, theta: PI };
        let c = Point2::new(1.0, 0.0);
        let pb = problem(x0, cell.clone(), c);
        let sol = mpc_solve(&pb).unwrap();
        let lim = InputLimits::default();
        for u in &sol.inputs {
            let Input::Unicycle { omega, v } = *u else { panic!() };
            assert!(omega.abs() <= lim.omega_max && (0.0..=lim.v_max).contains(&v));
        }
        assert!(sol.trajectory.positions().all(|p| cell.contains(p)));
        let end = sol.trajectory.states.last().unwrap();
        assert!(end.heading().unwrap().abs() < 1.0, "{end:?}");
        assert!(end.position().x > 0.0);
    }

    #[test]
    fn bicycle_accelerates_at_limit_toward_distant_centroid() {
        // 1-D bang-bang oracle: from rest, speed after N steps is min(v_max, a_max N dt).
        let cell = Cell::disk(Point2::ZERO, 1.5);
        let lim = InputLimits { steer_max: 0.5, ..InputLimits::default() };
        let x0 = DynState::Bicycle { p: Point2::ZERO, eta: 0.0, v: 0.0 };
        let mut pb = problem(x0, cell, Point2::new(1.4, 0.0));
        pb.settings.horizon = 10;
        pb.settings.block_len = 1;
        pb.limits = lim;
        let sol = mpc_solve(&pb).unwrap();
        let DynState::Bicycle { v, .. } = *sol.trajectory.states.last().unwrap() else { panic!() };
        let oracle = lim.v_max.min(lim.a_max * pb.settings.horizon as f64 * DT);
        assert_abs_diff_eq!(v, oracle, epsilon = 0.02 * oracle);
    }

    #[test]
    fn braking_fallback_and_exhaustion() {
        // moving bicycle in a cell too small to stop in
        let neighbor = NeighborObs { position: Point2::new(0.72, 0.0), encumbrance: 0.35 };
        let cell = build_cell(Point2::ZERO, 0.35, 1.5, &[neighbor]).unwrap();
        let x0 = DynState::Bicycle { p: Point2::ZERO, eta: 0.0, v: 1.5 };
        let pb = problem(x0, cell.clone(), Point2::new(0.01, 0.0));
        assert_eq!(mpc_solve(&pb).unwrap_err(), DynamicsError::SafetyMarginExhausted);

        // unicycle can always stop in place
        let x0 = DynState::Unicycle { p: Point2::ZERO, theta: 0.0 };
        let pb = problem(x0, cell, Point2::new(0.01, 0.0));
        let sol = mpc_solve(&pb).unwrap();
        assert!(sol.trajectory.positions().all(|p| p.x <= 0.02));
    }

    #[test]
    fn rejects_bad_problems() {
        let cell = Cell::disk(Point2::ZERO, 1.5);
        let mut pb = problem(DynState::Unicycle { p: Point2::new(3.0, 0.0), theta: 0.0 }, cell, Point2::ZERO);
        assert!(matches!(mpc_solve(&pb), Err(DynamicsError::StartOutsideCell { .. })));
        pb.x_init = DynState::Unicycle { p: Point2::ZERO, theta: 0.0 };
        pb.settings.horizon = 0;
        assert!(mpc_solve(&pb).is_err());
        pb.settings.horizon = 5;
        pb.settings.block_len = 0;
        assert!(mpc_solve(&pb).is_err());
        pb.settings.block_len = 1;
        pb.settings.q = [0.0, 0.01];
        assert!(mpc_solve(&pb).is_err());
    }

    fn arb_problem() -> impl Strategy<Value = MpcProblem> {
        (
            prop::collection::vec((0.0..std::f64::consts::TAU, 0.0..1.5f64), 0..4),
            -PI..PI,
            0.0..1.5f64,
            -1.5..1.5f64,
            -1.5..1.5f64,
            prop::bool::ANY,
            any::<u64>(),
        )
            .prop_map(|(ns, heading, speed, cx, cy, bicycle, seed)| {
                let obs: Vec<_> = ns
                    .iter()
                    .map(|&(a, gap)| NeighborObs { position: Point2::from_polar(0.7 + gap, a), encumbrance: 0.35 })
                    .collect();
                let cell = build_cell(Point2::ZERO, 0.35, 1.5, &obs).unwrap();
                let x0 = if bicycle {
                    DynState::Bicycle { p: Point2::ZERO, eta: heading, v: speed * 0.3 }
                } else {
                    DynState::Unicycle { p: Point2::ZERO, theta: heading }
                };
                let mut pb = problem(x0, cell, Point2::new(cx, cy));
                pb.seed = seed;
                pb
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn solutions_are_contained_consistent_and_improving(pb in arb_problem()) {
            match mpc_solve(&pb) {
                Ok(sol) => {
                    prop_assert!(sol.trajectory.positions().skip(1).all(|p| pb.cell.contains(p)));
                    let replay = rollout(&pb, &sol.inputs).unwrap();
                    prop_assert_eq!(&replay, &sol.trajectory);
                    prop_assert_eq!(mpc_cost(&replay, &pb), sol.cost);
                    prop_assert!(sol.cost <= sol.best_sample_cost);
                    for s in &sol.trajectory.states {
                        if let DynState::Bicycle { v, .. } = s {
                            prop_assert!(*v <= pb.limits.v_max);
                        }
                    }
                    for w in sol.trajectory.states.windows(2) {
                        let step = (w[1].position() - w[0].position()).norm();
                        prop_assert!(step <= pb.limits.v_max * pb.dt + 1e-12);
                    }
                }
                Err(e) => prop_assert_eq!(e, DynamicsError::SafetyMarginExhausted),
            }
        }

        #[test]
        fn solver_is_deterministic(pb in arb_problem()) {
            prop_assert_eq!(mpc_solve(&pb), mpc_solve(&pb));
        }
    }
}
