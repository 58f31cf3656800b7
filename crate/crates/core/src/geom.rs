//! Planar geometry of the buffered safe cell.
//!
//! A robot's cell is the intersection of its sensing disk with one half-plane
//! per observed neighbor. The half-planes are perpendicular bisectors, shifted
//! toward the robot when the pair is close enough that a plain bisector would
//! not leave room for both bodies. Cells are kept implicit: membership is the
//! only query, no polygon is ever extracted.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("robot at ({x}, {y}) observes a neighbor at its own position")]
    CoincidentPositions { x: f64, y: f64 },
    #[error("non-finite coordinate in geometric input")]
    NonFinite,
}

/// A point (or free vector) in the plane, meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ZERO: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_polar(radius: f64, angle: f64) -> Self {
        Self::new(radius * angle.cos(), radius * angle.sin())
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Unit vector in the same direction, or `None` for the zero vector.
    pub fn normalized(self) -> Option<Point2> {
        let n = self.norm();
        (n > 0.0).then(|| self / n)
    }

    /// Counter-clockwise rotation about the origin.
    pub fn rotated(self, angle: f64) -> Point2 {
        let (s, c) = angle.sin_cos();
        Point2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    /// Counter-clockwise rotation of `self` about `center`.
    pub fn rotated_about(self, center: Point2, angle: f64) -> Point2 {
        center + (self - center).rotated(angle)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Point2 {
    fn add_assign(&mut self, rhs: Point2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl SubAssign for Point2 {
    fn sub_assign(&mut self, rhs: Point2) {
        self.x -= rhs.x;
        self.y -= rhs.y;
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

impl Mul<Point2> for f64 {
    type Output = Point2;
    fn mul(self, rhs: Point2) -> Point2 {
        rhs * self
    }
}

impl Div<f64> for Point2 {
    type Output = Point2;
    fn div(self, rhs: f64) -> Point2 {
        Point2::new(self.x / rhs, self.y / rhs)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

/// The closed half-plane `{q : normal·q ≤ offset}` with a unit normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfPlane {
    pub normal: Point2,
    pub offset: f64,
}

impl HalfPlane {
    /// Half-plane whose boundary passes at signed distance `distance` from
    /// `anchor` along the unit `normal`.
    pub fn through(anchor: Point2, normal: Point2, distance: f64) -> Self {
        Self {
            normal,
            offset: normal.dot(anchor) + distance,
        }
    }

    /// Signed distance from `q` to the boundary; non-negative inside.
    pub fn slack(&self, q: Point2) -> f64 {
        self.offset - self.normal.dot(q)
    }

    pub fn contains(&self, q: Point2) -> bool {
        self.normal.dot(q) <= self.offset
    }
}

/// Position and body radius of a sensed neighbor. Nothing else about a
/// neighbor (velocity, goal, intent) is ever observable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborObs {
    pub position: Point2,
    pub encumbrance: f64,
}

/// Convex safe region: the disk of `radius` about `center` intersected with
/// every half-plane. Boundaries are inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub center: Point2,
    pub radius: f64,
    pub halfplanes: Vec<HalfPlane>,
}

impl Cell {
    pub fn disk(center: Point2, radius: f64) -> Self {
        Self {
            center,
            radius,
            halfplanes: Vec::new(),
        }
    }

    pub fn contains(&self, q: Point2) -> bool {
        (q - self.center).norm() <= self.radius && self.halfplanes.iter().all(|h| h.contains(q))
    }

    /// Membership of `center + offset`, phrased on the offset so that the
    /// test is exact under mirror symmetries of the lattice.
    pub(crate) fn contains_offset(&self, offset: Point2, slacks: &[f64]) -> bool {
        offset.norm() <= self.radius
            && self
                .halfplanes
                .iter()
                .zip(slacks)
                .all(|(h, s)| h.normal.dot(offset) <= *s)
    }

    /// Slack of the center with respect to each half-plane.
    pub(crate) fn center_slacks(&self) -> Vec<f64> {
        self.halfplanes.iter().map(|h| h.slack(self.center)).collect()
    }

    /// Cell with every half-plane pulled toward the center so that only the
    /// fraction `share` of the center's slack remains available.
    ///
    /// Two neighbors that move in the same tick, each inside its own
    /// `share = 0.5` region, keep their body clearance: the far-case bisector
    /// leaves each robot `d/2 ≥ Δ` of slack and the near-case buffered
    /// boundary leaves `d − Δ`, so the combined approach along the pair axis
    /// is at most `d − Δ`.
    pub fn shrunk(&self, share: f64) -> Cell {
        let halfplanes = self
            .halfplanes
            .iter()
            .map(|h| {
                let slack = h.slack(self.center);
                HalfPlane {
                    normal: h.normal,
                    offset: h.offset - (1.0 - share) * slack,
                }
            })
            .collect();
        Cell {
            center: self.center,
            radius: self.radius,
            halfplanes,
        }
    }

    /// Largest fraction `λ ∈ [0, 1]` such that `from + λ·(to − from)` stays in
    /// the cell. `from` must already be inside.
    pub fn segment_fraction(&self, from: Point2, to: Point2) -> f64 {
        let dir = to - from;
        let mut lambda: f64 = 1.0;
        for h in &self.halfplanes {
            let rate = h.normal.dot(dir);
            if rate > 0.0 {
                lambda = lambda.min((h.slack(from) / rate).max(0.0));
            }
        }
        // disk: |from − c + λ dir| ≤ r
        let rel = from - self.center;
        let a = dir.norm_squared();
        if a > 0.0 {
            let b = rel.dot(dir);
            let c = rel.norm_squared() - self.radius * self.radius;
            let disc = b * b - a * c;
            if disc >= 0.0 {
                let root = (-b + disc.sqrt()) / a;
                lambda = lambda.min(root.max(0.0));
            } else {
                lambda = 0.0;
            }
        }
        lambda
    }
}

/// Boundary of the buffered bisector between `p_i` and an observed neighbor.
///
/// The normal points from `p_i` toward the neighbor. The boundary lies at
/// `‖p_i − p_j‖/2` from `p_i` when the pair is far (half-distance at least
/// the combined encumbrance `Δ`), otherwise at `‖p_i − p_j‖ − Δ`: the
/// bisector of `p_i` and the neighbor shifted toward `p_i` by `2Δ − ‖p_i − p_j‖`.
pub fn bisector_halfplane(
    p_i: Point2,
    delta_i: f64,
    obs: &NeighborObs,
) -> Result<HalfPlane, GeomError> {
    if !p_i.is_finite() || !obs.position.is_finite() {
        return Err(GeomError::NonFinite);
    }
    let to_neighbor = obs.position - p_i;
    let dist = to_neighbor.norm();
    let normal = to_neighbor
        .normalized()
        .ok_or(GeomError::CoincidentPositions { x: p_i.x, y: p_i.y })?;
    let combined = delta_i + obs.encumbrance;
    let boundary = if dist / 2.0 >= combined {
        dist / 2.0
    } else {
        dist - combined
    };
    Ok(HalfPlane::through(p_i, normal, boundary))
}

/// Safe cell of a robot at `p_i` with encumbrance `delta_i` and sensing
/// half-range `r_s`. One half-plane per neighbor; no neighbors gives the bare
/// disk.
pub fn build_cell(
    p_i: Point2,
    delta_i: f64,
    r_s: f64,
    neighbors: &[NeighborObs],
) -> Result<Cell, GeomError> {
    let halfplanes = neighbors
        .iter()
        .map(|obs| bisector_halfplane(p_i, delta_i, obs))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Cell {
        center: p_i,
        radius: r_s,
        halfplanes,
    })
}
