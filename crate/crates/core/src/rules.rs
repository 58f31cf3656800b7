//! Per-robot decision step: spreading-factor and waypoint rule dynamics, the
//! proportional centroid-tracking law and its discrete gain bound.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{self, CellShape, FieldError, Grid, WeightParams};
use crate::geom::{self, Cell, GeomError, NeighborObs, Point2};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuleError {
    #[error(transparent)]
    Geometry(#[from] GeomError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("gain bound violated: k_p·dt = {product} exceeds 1 − δ/r_s = {max_admissible}")]
pub struct GainBoundError {
    pub product: f64,
    pub max_admissible: f64,
}

/// Whether the spreading factor and waypoint evolve, or stay frozen at their
/// current values (time-invariant weighting).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleMode {
    #[default]
    Active,
    Frozen,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleState {
    pub beta: f64,
    pub pbar: Point2,
    /// Latched while the waypoint chases the rotated goal; cleared on reset.
    pub rotated_goal_active: bool,
}

impl RuleState {
    pub fn at_goal(goal: Point2, beta: f64) -> Self {
        Self {
            beta,
            pbar: goal,
            rotated_goal_active: false,
        }
    }

    pub fn weight(&self) -> WeightParams {
        WeightParams::new(self.pbar, self.beta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleParams {
    pub beta_d: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    /// Thresholds on `‖c_A − p‖` (d1, d3) and `‖c_A − c_S‖` (d2, d4).
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub d4: f64,
    pub k_p: f64,
    /// Offset ε in the rotation angle `π/2 − ε`.
    pub epsilon_rot: f64,
    pub goal_tolerance: f64,
    pub mode: RuleMode,
}

impl RuleParams {
    pub const BETA_MIN: f64 = 0.1;
    pub const D1: f64 = 0.1;
    pub const K_P: f64 = 6.0;
    pub const EPSILON_ROT: f64 = 0.1;
    pub const GOAL_TOLERANCE: f64 = 0.1;

    /// Defaults for a given desired spreading factor: `d1 = d3 = 0.1`,
    /// `d2 = d4 = d* − d1` with `d*` from [`reference_centroid_distance`].
    pub fn with_beta_d(beta_d: f64, r_s: f64, dx: f64) -> Result<Self, FieldError> {
        let d_star = reference_centroid_distance(beta_d, r_s, dx)?;
        Ok(Self {
            beta_d,
            beta_min: Self::BETA_MIN,
            beta_max: beta_d.max(1.5),
            d1: Self::D1,
            d2: d_star - Self::D1,
            d3: Self::D1,
            d4: d_star - Self::D1,
            k_p: Self::K_P,
            epsilon_rot: Self::EPSILON_ROT,
            goal_tolerance: Self::GOAL_TOLERANCE,
            mode: RuleMode::Active,
        })
    }

    pub fn clamp_beta(&self, beta: f64) -> f64 {
        beta.clamp(self.beta_min, self.beta_max)
    }
}

/// Distance from a robot to its centroid over the bare sensing disk when the
/// goal sits `r_s` away and `β = beta_d`. Upper bound for `d1`, `d2`.
pub fn reference_centroid_distance(beta_d: f64, r_s: f64, dx: f64) -> Result<f64, FieldError> {
    field::distance_to_centroid(Point2::new(r_s, 0.0), beta_d, r_s, &CellShape::Disk, dx)
}

fn rule_condition(near: f64, spread: f64, c_a: Point2, c_s: Point2, p: Point2) -> bool {
    (c_a - p).norm() < near && (c_a - c_s).norm() > spread
}

/// One forward-Euler step of the spreading-factor dynamics, clamped.
pub fn update_beta(state: &RuleState, params: &RuleParams, c_a: Point2, c_s: Point2, p: Point2, dt: f64) -> f64 {
    let rate = if rule_condition(params.d1, params.d2, c_a, c_s, p) {
        -state.beta
    } else {
        -(state.beta - params.beta_d)
    };
    params.clamp_beta(state.beta + dt * rate)
}

/// Goal rotated counter-clockwise about the robot by `π/2 − ε`.
pub fn rotated_goal(p: Point2, goal: Point2, epsilon_rot: f64) -> Point2 {
    goal.rotated_about(p, FRAC_PI_2 - epsilon_rot)
}

/// One step of the waypoint dynamics, including the reset to the goal.
///
/// Returns the new waypoint and latch. The reset compares the goal-attracted
/// centroid `c_a_bar` against the current one and fires only while the latch
/// from a previous rotated-goal phase is set.
#[allow(clippy::too_many_arguments)]
pub fn update_pbar(
    state: &RuleState,
    params: &RuleParams,
    c_a: Point2,
    c_s: Point2,
    c_a_bar: Point2,
    p: Point2,
    goal: Point2,
    dt: f64,
) -> (Point2, bool) {
    if state.rotated_goal_active && (p - c_a_bar).norm() > (p - c_a).norm() {
        return (goal, false);
    }
    if rule_condition(params.d3, params.d4, c_a, c_s, p) {
        let target = rotated_goal(p, goal, params.epsilon_rot);
        (state.pbar + (target - state.pbar) * dt, true)
    } else {
        (state.pbar + (goal - state.pbar) * dt, state.rotated_goal_active)
    }
}

/// `p + k_p·dt·(c − p)`.
pub fn holonomic_step(p: Point2, centroid: Point2, k_p: f64, dt: f64) -> Point2 {
    p + (centroid - p) * (k_p * dt)
}

/// Checks `k_p·dt ≤ 1 − δ/r_s` and returns the remaining margin. Products
/// within a relative 1e-12 of the bound count as on it.
pub fn validate_gain(k_p: f64, dt: f64, delta: f64, r_s: f64) -> Result<f64, GainBoundError> {
    let product = k_p * dt;
    let max_admissible = 1.0 - delta / r_s;
    if product > 0.0 && product <= max_admissible * (1.0 + 1e-12) {
        Ok((max_admissible - product).max(0.0))
    } else {
        Err(GainBoundError {
            product,
            max_admissible,
        })
    }
}

/// What a robot knows about itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OwnState {
    pub position: Point2,
    pub encumbrance: f64,
    pub goal: Point2,
    pub rule: RuleState,
}

/// Replacement waypoint and spreading factor, applied after the rule update
/// and before the command centroid is computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightOverride {
    pub pbar: Point2,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub cell: Cell,
    /// Centroid of the updated weight over the cell: the tracking target.
    pub target: Point2,
    pub rule: RuleState,
    /// Pre-update centroids that drove the rules.
    pub c_a: Point2,
    pub c_s: Point2,
    pub c_a_bar: Point2,
}

/// Builds the cell, evaluates the centroids, advances the rules and returns
/// the centroid of the updated weight as the target.
///
/// Rule branches use the centroids of the current weight; the emitted target
/// uses the post-update (and possibly overridden) weight.
pub fn rbl_decide(
    own: &OwnState,
    neighbors: &[NeighborObs],
    params: &RuleParams,
    r_s: f64,
    grid: &Grid,
    dt: f64,
    weight_override: Option<WeightOverride>,
) -> Result<Decision, RuleError> {
    let p = own.position;
    let cell = geom::build_cell(p, own.encumbrance, r_s, neighbors)?;
    let (c_a, c_s) = field::cell_and_disk_centroids(&cell, &own.rule.weight(), grid)?;
    let (c_a, c_s) = (c_a.centroid, c_s.centroid);

    let (mut rule, c_a_bar) = match params.mode {
        RuleMode::Frozen => (own.rule, c_a),
        RuleMode::Active => {
            let c_a_bar = if own.rule.pbar == own.goal {
                c_a
            } else {
                field::centroid_over(&cell, &WeightParams::new(own.goal, own.rule.beta), grid)?.centroid
            };
            let beta = update_beta(&own.rule, params, c_a, c_s, p, dt);
            let (pbar, rotated_goal_active) = update_pbar(&own.rule, params, c_a, c_s, c_a_bar, p, own.goal, dt);
            (
                RuleState {
                    beta,
                    pbar,
                    rotated_goal_active,
                },
                c_a_bar,
            )
        }
    };
    if let Some(o) = weight_override {
        rule.pbar = o.pbar;
        rule.beta = o.beta;
    }
    let target = if rule == own.rule {
        c_a
    } else {
        field::centroid_over(&cell, &rule.weight(), grid)?.centroid
    };
    Ok(Decision {
        cell,
        target,
        rule,
        c_a,
        c_s,
        c_a_bar,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const DT: f64 = 0.033;
    const R_S: f64 = 1.5;
    const DX: f64 = 0.075;

    fn params() -> RuleParams {
        RuleParams::with_beta_d(0.5, R_S, DX).unwrap()
    }

    fn grid() -> Grid {
        Grid::new(DX, R_S).unwrap()
    }

    /// Rule inputs that make both rule conditions true or false.
    fn centroids(active: bool) -> (Point2, Point2, Point2) {
        let p = Point2::ZERO;
        if active {
            (Point2::new(0.05, 0.0), Point2::new(0.9, 0.0), p)
        } else {
            (Point2::new(0.8, 0.0), Point2::new(0.8, 0.0), p)
        }
    }

    #[test]
    fn beta_is_fixed_at_desired_value() {
        let p = params();
        let s = RuleState::at_goal(Point2::new(5.0, 0.0), p.beta_d);
        let (c_a, c_s, pos) = centroids(false);
        assert_eq!(update_beta(&s, &p, c_a, c_s, pos, DT), p.beta_d);
    }

    #[test]
    fn beta_decays_when_blocked() {
        let p = params();
        let s = RuleState::at_goal(Point2::new(5.0, 0.0), 0.5);
        let (c_a, c_s, pos) = centroids(true);
        assert_abs_diff_eq!(update_beta(&s, &p, c_a, c_s, pos, DT), 0.4835, epsilon = 1e-12);
        let floor = RuleState { beta: p.beta_min, ..s };
        assert_eq!(update_beta(&floor, &p, c_a, c_s, pos, DT), 0.1);
    }

    #[test]
    fn beta_iteration_converges_monotonically() {
        let p = params();
        let mut s = RuleState::at_goal(Point2::ZERO, 1.4);
        let (c_a, c_s, pos) = centroids(false);
        let mut last = s.beta;
        for _ in 0..2000 {
            s.beta = update_beta(&s, &p, c_a, c_s, pos, DT);
            assert!(s.beta <= last && s.beta >= p.beta_d);
            last = s.beta;
        }
        assert_abs_diff_eq!(s.beta, p.beta_d, epsilon = 1e-9);
    }

    #[test]
    fn waypoint_at_goal_is_fixed_point() {
        let p = params();
        let goal = Point2::new(1.0, 0.0);
        let s = RuleState::at_goal(goal, 0.5);
        let (c_a, c_s, pos) = centroids(false);
        assert_eq!(update_pbar(&s, &p, c_a, c_s, c_a, pos, goal, DT), (goal, false));
    }

    #[test]
    fn waypoint_relaxes_toward_rotated_goal() {
        let p = params();
        let goal = Point2::new(1.0, 0.0);
        let s = RuleState::at_goal(goal, 0.5);
        let (c_a, c_s, pos) = centroids(true);
        let target = rotated_goal(pos, goal, 0.1);
        assert_abs_diff_eq!(target.x, 0.09983341664682815, epsilon = 1e-12);
        assert_abs_diff_eq!(target.y, 0.9950041652780258, epsilon = 1e-12);
        let (pbar, latched) = update_pbar(&s, &p, c_a, c_s, c_a, pos, goal, DT);
        assert!(latched);
        assert_abs_diff_eq!(pbar.x, 1.0 + DT * (target.x - 1.0), epsilon = 1e-12);
        assert_abs_diff_eq!(pbar.y, DT * target.y, epsilon = 1e-12);
        assert_abs_diff_eq!(pbar.x, 0.9703, epsilon = 1e-4);
        assert_abs_diff_eq!(pbar.y, 0.0328, epsilon = 1e-4);
    }

    #[test]
    fn waypoint_resets_when_goal_centroid_is_better() {
        let p = params();
        let goal = Point2::new(3.0, 0.0);
        let s = RuleState {
            beta: 0.3,
            pbar: Point2::new(0.4, 2.9),
            rotated_goal_active: true,
        };
        let c_a = Point2::new(0.05, 0.1);
        let c_a_bar = Point2::new(0.5, 0.0);
        let (pbar, latched) = update_pbar(&s, &p, c_a, Point2::new(0.9, 0.0), c_a_bar, Point2::ZERO, goal, DT);
        assert_eq!(pbar, goal);
        assert!(!latched);
        // without the latch the same geometry does not reset
        let unlatched = RuleState { rotated_goal_active: false, ..s };
        let (pbar, _) = update_pbar(&unlatched, &p, c_a, Point2::new(0.9, 0.0), c_a_bar, Point2::ZERO, goal, DT);
        assert_ne!(pbar, goal);
    }

    #[test]
    fn holonomic_step_values() {
        let c = Point2::new(1.0, 0.0);
        assert_eq!(holonomic_step(c, c, 6.0, DT), c);
        let next = holonomic_step(Point2::ZERO, c, 6.0, DT);
        assert_abs_diff_eq!(next.x, 0.198, epsilon = 1e-12);
        assert_eq!(next.y, 0.0);
    }

    #[test]
    fn gain_bound() {
        assert_abs_diff_eq!(validate_gain(6.0, 0.033, 0.35, 1.5).unwrap(), 0.5686666666666667, epsilon = 1e-4);
        let err = validate_gain(6.0, 0.2, 0.35, 1.5).unwrap_err();
        assert_abs_diff_eq!(err.product, 1.2, epsilon = 1e-12);
        assert_abs_diff_eq!(err.max_admissible, 0.7666666666666667, epsilon = 1e-12);
        assert!(validate_gain(0.01, 0.033, 1.5, 1.5).is_err());
        assert!(validate_gain(0.0, 0.033, 0.35, 1.5).is_err());
        assert!(validate_gain((1.0 - 0.35 / 1.5) / 0.033, 0.033, 0.35, 1.5).is_ok());
    }

    #[test]
    fn reference_distance_supports_default_thresholds() {
        let p = params();
        let d_star = p.d2 + p.d1;
        assert!(d_star > p.d1 && d_star < R_S);
        assert!(p.d2 > 0.0);
    }

    fn own(position: Point2, goal: Point2) -> OwnState {
        OwnState {
            position,
            encumbrance: 0.35,
            goal,
            rule: RuleState::at_goal(goal, 0.5),
        }
    }

    #[test]
    fn isolated_robot_heads_to_goal() {
        let goal = Point2::new(8.0, 3.0);
        let d = rbl_decide(&own(Point2::ZERO, goal), &[], &params(), R_S, &grid(), DT, None).unwrap();
        let dir = d.target.normalized().unwrap();
        let want = goal.normalized().unwrap();
        assert!(dir.dot(want) > 0.999, "{dir:?}");
        assert!(d.target.norm() > 0.3);
    }

    #[test]
    fn robot_at_goal_stays_put() {
        let g = Point2::new(2.0, 2.0);
        let d = rbl_decide(&own(g, g), &[], &params(), R_S, &grid(), DT, None).unwrap();
        assert!((d.target - g).norm() <= DX);
    }

    #[test]
    fn aggressive_neighbor_pushes_robot_off_goal() {
        // Neighbor pressing in at contact distance: the cell is a half disk and
        // the centroid leaves the goal by the half-disk distance, below d2.
        let g = Point2::ZERO;
        let p = params();
        let neighbor = NeighborObs { position: Point2::new(0.7, 0.0), encumbrance: 0.35 };
        let d = rbl_decide(&own(g, g), &[neighbor], &p, R_S, &grid(), DT, None).unwrap();
        let push = (d.target - g).norm();
        assert!(d.target.x < 0.0);
        assert!(push > 0.0 && push <= p.d2, "{push} vs d2 {}", p.d2);
    }

    #[test]
    fn frozen_rules_keep_state() {
        let mut p = params();
        p.mode = RuleMode::Frozen;
        let o = own(Point2::ZERO, Point2::new(3.0, 0.0));
        let blocker = NeighborObs { position: Point2::new(0.75, 0.0), encumbrance: 0.35 };
        let d = rbl_decide(&o, &[blocker], &p, R_S, &grid(), DT, None).unwrap();
        assert_eq!(d.rule, o.rule);
        assert_eq!(d.target, d.c_a);
    }

    #[test]
    fn override_replaces_weight() {
        let o = own(Point2::ZERO, Point2::new(3.0, 0.0));
        let ov = WeightOverride { pbar: Point2::new(0.0, -1.5), beta: 0.1 };
        let d = rbl_decide(&o, &[], &params(), R_S, &grid(), DT, Some(ov)).unwrap();
        assert_eq!(d.rule.pbar, ov.pbar);
        assert_eq!(d.rule.beta, 0.1);
        assert!(d.target.y < -0.8);
    }

    proptest! {
        #[test]
        fn rotation_preserves_distance_to_robot(px in -5.0..5.0f64, py in -5.0..5.0f64, gx in -5.0..5.0f64, gy in -5.0..5.0f64, eps in 0.0..1.0f64) {
            let (p, g) = (Point2::new(px, py), Point2::new(gx, gy));
            let r = rotated_goal(p, g, eps);
            prop_assert!(((r - p).norm() - (g - p).norm()).abs() < 1e-9);
        }

        #[test]
        fn step_stays_in_cell(angle in 0.0..std::f64::consts::TAU, gap in 0.0..2.0f64, gx in -6.0..6.0f64, gy in -6.0..6.0f64, beta in 0.1..1.0f64) {
            let n = NeighborObs { position: Point2::from_polar(0.7 + gap, angle), encumbrance: 0.35 };
            let mut o = own(Point2::ZERO, Point2::new(gx, gy));
            o.rule.beta = beta;
            let d = rbl_decide(&o, &[n], &params(), R_S, &grid(), DT, None).unwrap();
            let next = holonomic_step(Point2::ZERO, d.target, 6.0, DT);
            prop_assert!(d.cell.contains(next) || d.cell.halfplanes[0].slack(next) > -1e-12);
            prop_assert!(next.norm() <= (1.0 - 0.35 / R_S) * d.target.norm() + 1e-12);
        }
    }
}
