//! Benchmark worlds (crossing circles, random rooms, the symmetric deadlock
//! fixtures) and the per-run metrics.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{DynState, InputLimits, Model};
use crate::engine::{EngineError, Robot, TrajectoryLog, World, WorldConfig};
use crate::field::FieldError;
use crate::geom::Point2;
use crate::rules::{RuleMode, RuleParams};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("adjacent robots on the circle are {spacing} apart, need {required}; use a radius of at least {min_radius}")]
    CircleTooSmall { spacing: f64, required: f64, min_radius: f64 },
    #[error("could not place robot {robot} after {attempts} attempts; the room is too crowded")]
    RoomTooCrowded { robot: usize, attempts: usize },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    #[default]
    Circle,
    HalfCircle,
    Room,
    /// A robot ringed by robots already sitting on their goals.
    FixtureA,
    /// Four robots on the corners of a square swapping diagonally.
    FixtureB,
    /// Two robots head-on along a line, goals swapped.
    FixtureC,
}

/// A fixed value or a `[min, max]` range sampled uniformly per robot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Span {
    Fixed(f64),
    Range([f64; 2]),
}

impl Span {
    fn sample(self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Span::Fixed(v) => v,
            Span::Range([a, b]) if a == b => a,
            Span::Range([a, b]) => rng.gen_range(a..=b),
        }
    }

    pub fn max(self) -> f64 {
        match self {
            Span::Fixed(v) => v,
            Span::Range([a, b]) => a.max(b),
        }
    }

    fn validate(self, name: &str, lo: f64) -> Result<(), ScenarioError> {
        let (a, b) = match self {
            Span::Fixed(v) => (v, v),
            Span::Range([a, b]) => (a, b),
        };
        if !(a > lo && b >= a && b.is_finite()) {
            return Err(ScenarioError::Invalid(format!("{name} range [{a}, {b}] must be finite, ordered and above {lo}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub n: usize,
    /// Circle radius `R_c`.
    pub radius: f64,
    pub width: f64,
    pub height: f64,
    /// Extra goal rotation past the antipode (half-crossing circle).
    pub gamma: f64,
    /// Angle of robot 0 on the circle.
    pub phase: f64,
    pub delta: Span,
    pub beta_d: Span,
    pub k_p: Span,
    pub seed: u64,
    pub model: Model,
    /// Speed cap; holonomic robots are uncapped when absent.
    pub v_max: Option<f64>,
    pub rules: RuleMode,
    /// Replacements for the derived rule thresholds.
    pub rule_overrides: RuleOverrides,
    pub max_time: f64,
}

/// Optional replacements for the default [`RuleParams`] thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuleOverrides {
    pub beta_min: Option<f64>,
    pub d1: Option<f64>,
    pub d2: Option<f64>,
    pub d3: Option<f64>,
    pub d4: Option<f64>,
    pub epsilon_rot: Option<f64>,
    pub goal_tolerance: Option<f64>,
}

impl RuleOverrides {
    pub fn apply(&self, p: RuleParams) -> RuleParams {
        RuleParams {
            beta_min: self.beta_min.unwrap_or(p.beta_min),
            d1: self.d1.unwrap_or(p.d1),
            d2: self.d2.unwrap_or(p.d2),
            d3: self.d3.unwrap_or(p.d3),
            d4: self.d4.unwrap_or(p.d4),
            epsilon_rot: self.epsilon_rot.unwrap_or(p.epsilon_rot),
            goal_tolerance: self.goal_tolerance.unwrap_or(p.goal_tolerance),
            ..p
        }
    }
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            kind: ScenarioKind::Circle,
            n: 5,
            radius: 10.0,
            width: 7.0,
            height: 7.0,
            gamma: 0.0,
            phase: 0.0,
            delta: Span::Fixed(0.35),
            beta_d: Span::Fixed(0.5),
            k_p: Span::Fixed(RuleParams::K_P),
            seed: 0,
            model: Model::Holonomic,
            v_max: None,
            rules: RuleMode::Active,
            rule_overrides: RuleOverrides::default(),
            max_time: 60.0,
        }
    }
}

/// Start, goal and sampled per-robot parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Placement {
    pub start: Point2,
    pub goal: Point2,
    pub delta: f64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.delta.validate("delta", 0.0)?;
        self.beta_d.validate("beta_d", 0.0)?;
        self.k_p.validate("k_p", 0.0)?;
        let o = &self.rule_overrides;
        for (name, v) in [
            ("beta_min", o.beta_min),
            ("d1", o.d1),
            ("d2", o.d2),
            ("d3", o.d3),
            ("d4", o.d4),
            ("epsilon_rot", o.epsilon_rot),
            ("goal_tolerance", o.goal_tolerance),
        ] {
            if let Some(v) = v {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(ScenarioError::Invalid(format!("{name} must be finite and non-negative, got {v}")));
                }
            }
        }
        if o.beta_min.is_some_and(|b| b <= 0.0) {
            return Err(ScenarioError::Invalid("beta_min must be positive".into()));
        }
        if !(self.max_time >= 0.0 && self.max_time.is_finite()) {
            return Err(ScenarioError::Invalid(format!("max_time must be non-negative, got {}", self.max_time)));
        }
        if let Some(v) = self.v_max {
            if !(v > 0.0) {
                return Err(ScenarioError::Invalid(format!("v_max must be positive, got {v}")));
            }
        }
        match self.kind {
            ScenarioKind::Circle | ScenarioKind::HalfCircle
                if self.n == 0 || !(self.radius > 0.0 && self.radius.is_finite()) =>
            {
                return Err(ScenarioError::Invalid("circle needs n ≥ 1 and a positive radius".into()));
            }
            ScenarioKind::Room if self.n == 0 || !(self.width > 0.0 && self.height > 0.0) => {
                return Err(ScenarioError::Invalid("room needs n ≥ 1 and positive width and height".into()));
            }
            _ => {}
        }
        Ok(())
    }

    /// Area used in the crowdness factor.
    pub fn mission_area(&self, placements: &[Placement]) -> f64 {
        match self.kind {
            ScenarioKind::Circle | ScenarioKind::HalfCircle => PI * self.radius * self.radius,
            ScenarioKind::Room => self.width * self.height,
            _ => {
                let pts = placements.iter().flat_map(|p| [p.start, p.goal]);
                let (mut lo, mut hi) = (Point2::new(f64::INFINITY, f64::INFINITY), Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
                for q in pts {
                    lo = Point2::new(lo.x.min(q.x), lo.y.min(q.y));
                    hi = Point2::new(hi.x.max(q.x), hi.y.max(q.y));
                }
                let margin = 1.5;
                (hi.x - lo.x + 2.0 * margin) * (hi.y - lo.y + 2.0 * margin)
            }
        }
    }

    /// Starts, goals and encumbrances, deterministic in the seed.
    pub fn placements(&self) -> Result<Vec<Placement>, ScenarioError> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        match self.kind {
            ScenarioKind::Circle => crossing_circle(self.n, self.radius, self.delta, 0.0, self.phase, &mut rng),
            ScenarioKind::HalfCircle => crossing_circle(self.n, self.radius, self.delta, self.gamma, self.phase, &mut rng),
            ScenarioKind::Room => random_room(self.width, self.height, self.n, self.delta, &mut rng),
            ScenarioKind::FixtureA | ScenarioKind::FixtureB | ScenarioKind::FixtureC => {
                Ok(deadlock_fixture(self.kind, self.delta.max()))
            }
        }
    }

    /// Builds a validated world. Per-robot `β^D` and `k_p` are drawn after the
    /// placements from the same seeded stream.
    pub fn build(&self, config: &WorldConfig) -> Result<World, ScenarioError> {
        let placements = self.placements()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x005E_ED0F_9A7A);
        let mut d_star_cache: HashMap<u64, RuleParams> = HashMap::new();
        let mut robots = Vec::with_capacity(placements.len());
        for (id, pl) in placements.iter().enumerate() {
            let beta_d = self.beta_d.sample(&mut rng);
            let k_p = self.k_p.sample(&mut rng);
            let base = match d_star_cache.get(&beta_d.to_bits()) {
                Some(p) => *p,
                None => {
                    let p = RuleParams::with_beta_d(beta_d, config.r_s, config.dx)?;
                    d_star_cache.insert(beta_d.to_bits(), p);
                    p
                }
            };
            let params = self.rule_overrides.apply(RuleParams { k_p, mode: self.rules, ..base });
            let limits = InputLimits {
                v_max: match (self.v_max, self.model) {
                    (Some(v), _) => v,
                    (None, Model::Holonomic) => f64::INFINITY,
                    (None, _) => InputLimits::default().v_max,
                },
                ..InputLimits::default()
            };
            let state = DynState::at_rest(self.model, pl.start, (pl.goal - pl.start).angle());
            robots.push(Robot::new(id, state, pl.delta, pl.goal, params, limits));
        }
        Ok(World::new(robots, config.clone())?)
    }
}

/// `n` robots evenly spaced on a circle of radius `r_c`; the robot at angle
/// `θ` heads for the point at `θ + π + γ`.
pub fn crossing_circle(
    n: usize,
    r_c: f64,
    delta: Span,
    gamma: f64,
    phase: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Placement>, ScenarioError> {
    if n > 1 {
        let spacing = 2.0 * r_c * (PI / n as f64).sin();
        let required = 2.0 * delta.max();
        if spacing <= required {
            return Err(ScenarioError::CircleTooSmall {
                spacing,
                required,
                min_radius: required / (2.0 * (PI / n as f64).sin()),
            });
        }
    }
    Ok((0..n)
        .map(|k| {
            let theta = phase + TAU * k as f64 / n as f64;
            Placement {
                start: Point2::from_polar(r_c, theta),
                goal: Point2::from_polar(r_c, theta + PI + gamma),
                delta: delta.sample(rng),
            }
        })
        .collect())
}

const ROOM_ATTEMPTS: usize = 10_000;

/// Rejection-sampled starts and goals in `[0, w] × [0, h]`, each at least
/// `δ_i` from the walls and more than `δ_i + δ_j` from the others.
pub fn random_room(w: f64, h: f64, n: usize, delta: Span, rng: &mut ChaCha8Rng) -> Result<Vec<Placement>, ScenarioError> {
    let mut out: Vec<Placement> = Vec::with_capacity(n);
    for robot in 0..n {
        let d = delta.sample(rng);
        if 2.0 * d >= w.min(h) {
            return Err(ScenarioError::RoomTooCrowded { robot, attempts: 0 });
        }
        let draw = |rng: &mut ChaCha8Rng, pick: fn(&Placement) -> Point2| -> Option<Point2> {
            (0..ROOM_ATTEMPTS).find_map(|_| {
                let q = Point2::new(rng.gen_range(d..=w - d), rng.gen_range(d..=h - d));
                out.iter().all(|o| pick(o).distance(q) > o.delta + d).then_some(q)
            })
        };
        let start = draw(rng, |o| o.start).ok_or(ScenarioError::RoomTooCrowded { robot, attempts: ROOM_ATTEMPTS })?;
        let goal = draw(rng, |o| o.goal).ok_or(ScenarioError::RoomTooCrowded { robot, attempts: ROOM_ATTEMPTS })?;
        out.push(Placement { start, goal, delta: d });
    }
    Ok(out)
}

/// Frozen coordinates of the three symmetric deadlock configurations.
pub fn deadlock_fixture(kind: ScenarioKind, delta: f64) -> Vec<Placement> {
    let at = |start: Point2, goal: Point2| Placement { start, goal, delta };
    match kind {
        ScenarioKind::FixtureA => {
            let ring = 2.0 * delta + 0.1;
            let mut v = vec![at(Point2::ZERO, Point2::new(3.0, 0.0))];
            v.extend((0..6).map(|k| {
                let q = Point2::from_polar(ring, TAU * k as f64 / 6.0);
                at(q, q)
            }));
            v
        }
        ScenarioKind::FixtureB => {
            let s = 1.5;
            [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)]
                .into_iter()
                .map(|(x, y)| at(Point2::new(s * x, s * y), Point2::new(-s * x, -s * y)))
                .collect()
        }
        ScenarioKind::FixtureC => vec![
            at(Point2::new(-2.0, 0.0), Point2::new(2.0, 0.0)),
            at(Point2::new(2.0, 0.0), Point2::new(-2.0, 0.0)),
        ],
        _ => Vec::new(),
    }
}

/// `Σ π δ_i² / area`.
pub fn crowdness(deltas: impl IntoIterator<Item = f64>, area: f64) -> f64 {
    deltas.into_iter().map(|d| PI * d * d).sum::<f64>() / area
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Last arrival within the goal tolerance; the run duration if some robot
    /// never arrived.
    pub max_time: f64,
    /// Last entry into the sensing ball around the goal.
    pub max_time_ball: f64,
    /// Path length over personal mission time, averaged over robots.
    pub mean_speed: f64,
    /// Fraction of robots ending inside `B(e_i, r_s)` with no collision.
    pub rsr: f64,
    /// Fraction of robots ending within the goal tolerance.
    pub arrived_ratio: f64,
    pub eta: f64,
    /// Infinite with fewer than two robots; JSON writes that as `null`.
    #[serde(deserialize_with = "infinite_if_null")]
    pub min_clearance: f64,
    /// Per-robot arrival times (goal tolerance).
    pub arrival_times: Vec<Option<f64>>,
}

fn infinite_if_null<'de, D: serde::Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

/// Earliest tick index after which `inside(k)` holds for every later tick,
/// provided `enter(k)` holds at that tick.
fn settle_index(n: usize, enter: impl Fn(usize) -> bool, stay: impl Fn(usize) -> bool) -> Option<usize> {
    let mut candidate = None;
    for k in (0..n).rev() {
        if !stay(k) {
            break;
        }
        if enter(k) {
            candidate = Some(k);
        }
    }
    candidate
}

/// Metrics of a completed run. `mission_area` feeds the crowdness factor.
pub fn compute_metrics(log: &TrajectoryLog, world: &World, mission_area: f64) -> Metrics {
    let robots = &world.robots;
    let n = robots.len();
    let ticks = &log.ticks;
    let r_s = world.config.r_s;
    let d_hyst = world.config.d_hyst;
    let duration = log.duration();
    let pos = |k: usize, i: usize| Point2::new(ticks[k].robots[i].x, ticks[k].robots[i].y);

    let mut collided = vec![false; n];
    for k in 0..ticks.len() {
        for i in 0..n {
            for j in i + 1..n {
                if pos(k, i).distance(pos(k, j)) - (robots[i].delta + robots[j].delta) < -crate::engine::CLEARANCE_TOLERANCE {
                    collided[i] = true;
                    collided[j] = true;
                }
            }
        }
    }

    let mut arrival_times = Vec::with_capacity(n);
    let (mut max_time, mut max_time_ball, mut speed_sum, mut speed_count) = (0.0f64, 0.0f64, 0.0, 0);
    let (mut safe_in_ball, mut arrived) = (0usize, 0usize);
    for (i, r) in robots.iter().enumerate() {
        let tol = r.params.goal_tolerance;
        let dist = |k: usize| pos(k, i).distance(r.goal);
        let arrival = settle_index(ticks.len(), |k| dist(k) <= tol, |k| dist(k) <= tol + d_hyst).map(|k| ticks[k].t);
        let ball = settle_index(ticks.len(), |k| dist(k) < r_s, |k| dist(k) < r_s).map(|k| ticks[k].t);
        max_time = max_time.max(arrival.unwrap_or(duration));
        max_time_ball = max_time_ball.max(ball.unwrap_or(duration));
        if let Some(last) = ticks.last() {
            let end = Point2::new(last.robots[i].x, last.robots[i].y);
            if end.distance(r.goal) < r_s && !collided[i] {
                safe_in_ball += 1;
            }
        }
        arrived += arrival.is_some() as usize;
        let stop = arrival.unwrap_or(duration);
        if stop > 0.0 {
            let path: f64 = ticks
                .windows(2)
                .take_while(|w| w[1].t <= stop + 1e-12)
                .map(|w| {
                    Point2::new(w[1].robots[i].x, w[1].robots[i].y).distance(Point2::new(w[0].robots[i].x, w[0].robots[i].y))
                })
                .sum();
            speed_sum += path / stop;
            speed_count += 1;
        }
        arrival_times.push(arrival);
    }
    let ratio = |c: usize| if n == 0 { 1.0 } else { c as f64 / n as f64 };
    Metrics {
        max_time,
        max_time_ball,
        mean_speed: if speed_count == 0 { 0.0 } else { speed_sum / speed_count as f64 },
        rsr: ratio(safe_in_ball),
        arrived_ratio: ratio(arrived),
        eta: crowdness(robots.iter().map(|r| r.delta), mission_area),
        min_clearance: log.min_clearance(),
        arrival_times,
    }
}
