//! Laplacian weighting and weighted centroids over discretized cells.
//!
//! Cells are sampled on a square lattice of spacing `dx` centered on the
//! robot and clipped to the sensing disk. Lattice points are grouped into
//! mirror orbits `(±x, ±y)` and summed orbit by orbit, so that a cell and
//! weight that are mirror-symmetric about the robot's axis produce a centroid
//! that is exactly on that axis. Without this, rounding noise alone is enough
//! to break the symmetric standoffs the rule dynamics are meant to resolve.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Cell, HalfPlane, Point2};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("no lattice point of spacing {spacing} falls inside the cell")]
    EmptyCell { spacing: f64 },
    #[error("invalid grid: spacing {spacing}, radius {radius}")]
    InvalidGrid { spacing: f64, radius: f64 },
    #[error("spreading factor must be positive, got {0}")]
    NonPositiveBeta(f64),
}

/// Attractor `pbar` and spreading factor `beta` of the Laplacian weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightParams {
    pub pbar: Point2,
    pub beta: f64,
}

impl WeightParams {
    pub fn new(pbar: Point2, beta: f64) -> Self {
        Self { pbar, beta }
    }
}

/// `exp(−‖q − p̄‖ / β)`.
pub fn phi(q: Point2, w: &WeightParams) -> f64 {
    (-(q - w.pbar).norm() / w.beta).exp()
}

/// Robot-centered sampling lattice covering the disk of `radius`.
///
/// The lattice is a template: it is anchored at `cell.center` whenever a cell
/// is integrated.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    spacing: f64,
    radius: f64,
    /// First-quadrant representatives `(x, y)`, `x, y ≥ 0`, of the mirror orbits.
    orbits: Vec<Point2>,
    point_count: usize,
}

impl Grid {
    pub fn new(spacing: f64, radius: f64) -> Result<Self, FieldError> {
        if !(spacing > 0.0 && radius > 0.0 && spacing.is_finite() && radius.is_finite()) {
            return Err(FieldError::InvalidGrid { spacing, radius });
        }
        let cells_per_radius = radius / spacing;
        let n = (cells_per_radius + 1e-9).floor() as i64;
        let limit = cells_per_radius * cells_per_radius + 1e-9;
        let mut orbits = Vec::new();
        let mut point_count = 0;
        for i in 0..=n {
            for j in 0..=n {
                if ((i * i + j * j) as f64) <= limit {
                    orbits.push(Point2::new(i as f64 * spacing, j as f64 * spacing));
                    point_count += match (i, j) {
                        (0, 0) => 1,
                        (0, _) | (_, 0) => 2,
                        _ => 4,
                    };
                }
            }
        }
        Ok(Self {
            spacing,
            radius,
            orbits,
            point_count,
        })
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Number of lattice points in the disk.
    pub fn len(&self) -> usize {
        self.point_count
    }

    pub fn is_empty(&self) -> bool {
        self.point_count == 0
    }

    /// Lattice offsets relative to the anchor, each listed once.
    pub fn offsets(&self) -> impl Iterator<Item = Point2> + '_ {
        self.orbits.iter().flat_map(|o| mirror_images(*o).into_iter().flatten())
    }
}

/// The distinct images `(x, y), (−x, y), (x, −y), (−x, −y)`; duplicates on
/// the axes are `None`.
fn mirror_images(o: Point2) -> [Option<Point2>; 4] {
    let on_y_axis = o.x == 0.0;
    let on_x_axis = o.y == 0.0;
    [
        Some(o),
        (!on_y_axis).then(|| Point2::new(-o.x, o.y)),
        (!on_x_axis).then(|| Point2::new(o.x, -o.y)),
        (!on_y_axis && !on_x_axis).then(|| Point2::new(-o.x, -o.y)),
    ]
}

/// First moments of a weighted point set, in anchor-relative coordinates.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Moments {
    mass: f64,
    sx: f64,
    sy: f64,
    count: usize,
}

impl Moments {
    /// Adds one orbit. Weights are ordered `(x,y), (−x,y), (x,−y), (−x,−y)`;
    /// the pairing makes mirror-symmetric contributions cancel exactly.
    fn add_orbit(&mut self, o: Point2, w: [f64; 4], count: usize) {
        let [pp, mp, pm, mm] = w;
        self.mass += (pp + mp) + (pm + mm);
        self.sx += o.x * ((pp + pm) - (mp + mm));
        self.sy += o.y * ((pp + mp) - (pm + mm));
        self.count += count;
    }

    fn centroid(&self, anchor: Point2) -> Point2 {
        anchor + Point2::new(self.sx / self.mass, self.sy / self.mass)
    }
}

/// Weighted centroid of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CentroidResult {
    pub centroid: Point2,
    /// `Σ φ(q)` over the in-cell lattice points.
    pub mass: f64,
    pub point_count: usize,
}

/// Orbit-wise moments of `φ` over the cell and over the whole disk.
fn cell_and_disk_moments(cell: &Cell, w: &WeightParams, grid: &Grid) -> (Moments, Moments, f64) {
    let anchor = cell.center;
    let rel = anchor - w.pbar;
    // Every lattice point is at least this far from p̄; factoring it out keeps
    // the weights away from underflow when the attractor is distant.
    let floor = (rel.norm() - grid.radius).max(0.0);
    let slacks = cell.center_slacks();
    let planes: &[HalfPlane] = &cell.halfplanes;

    let mut in_cell = Moments::default();
    let mut disk = Moments::default();
    for &o in &grid.orbits {
        let images = mirror_images(o);
        let mut w_cell = [0.0; 4];
        let mut w_disk = [0.0; 4];
        let mut n_cell = 0;
        let mut n_disk = 0;
        for (k, img) in images.iter().enumerate() {
            let Some(q) = img else { continue };
            let weight = (-((*q + rel).norm() - floor) / w.beta).exp();
            w_disk[k] = weight;
            n_disk += 1;
            if planes.iter().zip(&slacks).all(|(h, s)| h.normal.dot(*q) <= *s) {
                w_cell[k] = weight;
                n_cell += 1;
            }
        }
        in_cell.add_orbit(o, w_cell, n_cell);
        disk.add_orbit(o, w_disk, n_disk);
    }
    let scale = (-floor / w.beta).exp();
    (in_cell, disk, scale)
}

fn to_result(m: Moments, anchor: Point2, scale: f64, spacing: f64) -> Result<CentroidResult, FieldError> {
    if m.count == 0 || !(m.mass > 0.0) {
        return Err(FieldError::EmptyCell { spacing });
    }
    Ok(CentroidResult {
        centroid: m.centroid(anchor),
        mass: m.mass * scale,
        point_count: m.count,
    })
}

/// `Σ q φ(q) / Σ φ(q)` over the lattice points (anchored at the cell center)
/// that lie in the cell.
pub fn centroid_over(cell: &Cell, w: &WeightParams, grid: &Grid) -> Result<CentroidResult, FieldError> {
    if !(w.beta > 0.0) {
        return Err(FieldError::NonPositiveBeta(w.beta));
    }
    let (in_cell, _, scale) = cell_and_disk_moments(cell, w, grid);
    to_result(in_cell, cell.center, scale, grid.spacing)
}

/// Centroids of the same weight over the cell and over the bare sensing disk
/// of that cell, from a single pass.
pub fn cell_and_disk_centroids(
    cell: &Cell,
    w: &WeightParams,
    grid: &Grid,
) -> Result<(CentroidResult, CentroidResult), FieldError> {
    if !(w.beta > 0.0) {
        return Err(FieldError::NonPositiveBeta(w.beta));
    }
    let (in_cell, disk, scale) = cell_and_disk_moments(cell, w, grid);
    Ok((
        to_result(in_cell, cell.center, scale, grid.spacing)?,
        to_result(disk, cell.center, scale, grid.spacing)?,
    ))
}

/// Shape of a cell relative to a robot sitting at the origin.
#[derive(Debug, Clone, PartialEq)]
pub enum CellShape {
    Disk,
    /// Disk cut by half-planes expressed in robot-relative coordinates.
    Cut(Vec<HalfPlane>),
}

/// `‖p − c‖` for a robot at the origin whose attractor sits at `goal_offset`,
/// integrated on a lattice four times finer than `dx`.
pub fn distance_to_centroid(
    goal_offset: Point2,
    beta: f64,
    r_s: f64,
    shape: &CellShape,
    dx: f64,
) -> Result<f64, FieldError> {
    let grid = Grid::new(dx / 4.0, r_s)?;
    let cell = match shape {
        CellShape::Disk => Cell::disk(Point2::ZERO, r_s),
        CellShape::Cut(planes) => Cell {
            center: Point2::ZERO,
            radius: r_s,
            halfplanes: planes.clone(),
        },
    };
    let c = centroid_over(&cell, &WeightParams::new(goal_offset, beta), &grid)?;
    Ok(c.centroid.norm())
}

/// Distance from the robot to the centroid when the robot sits on its goal and
/// its cell is the half disk left by a neighbor at contact distance:
/// `(2/π)·∫z²e^{−z/β}dz / ∫z e^{−z/β}dz` over `[0, r_s]`, in closed form.
pub fn half_disk_centroid_distance(beta: f64, r_s: f64) -> f64 {
    let decay = (-r_s / beta).exp();
    let second = 2.0 * beta.powi(3) - beta * decay * (r_s * r_s + 2.0 * beta * beta + 2.0 * beta * r_s);
    let first = beta * beta - beta * decay * (beta + r_s);
    2.0 / std::f64::consts::PI * (second / first).abs()
}

/// Discrete coverage cost `Σ_i Σ_{q ∈ A_i} ‖q − p_i‖² φ_i(q) dx²`.
///
/// Quadrature points are the lattice anchored at each cell's center, while the
/// squared distances use `positions`. Passing the cells of one tick together
/// with the positions of the next evaluates the cost with frozen cells.
pub fn coverage_cost(positions: &[Point2], cells: &[Cell], weights: &[WeightParams], grid: &Grid) -> f64 {
    let area = grid.spacing * grid.spacing;
    positions
        .iter()
        .zip(cells)
        .zip(weights)
        .map(|((p, cell), w)| {
            let slacks = cell.center_slacks();
            grid.offsets()
                .filter(|o| cell.contains_offset(*o, &slacks))
                .map(|o| {
                    let q = cell.center + o;
                    (q - *p).norm_squared() * phi(q, w)
                })
                .sum::<f64>()
                * area
        })
        .sum()
}
