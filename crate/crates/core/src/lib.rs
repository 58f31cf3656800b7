#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Rule-based Lloyd motion planning for teams of robots.
//!
//! Each robot builds a convex safe cell from its own pose and the observed
//! positions and encumbrances of nearby robots ([`geom`]), weights the cell
//! with a Laplacian attractor ([`field`]), moves toward the weighted centroid
//! while a small set of rules reshapes the attractor to break deadlocks
//! ([`rules`]), and optionally tracks the centroid through a constrained
//! model-predictive layer for non-holonomic bodies ([`dynamics`]).
//!
//! [`engine`] runs whole teams under synchronous or asynchronous scheduling
//! and [`scenarios`] builds the benchmark worlds and their metrics.

pub mod dynamics;
pub mod engine;
pub mod field;
pub mod geom;
pub mod rules;
pub mod scenarios;

pub use geom::Point2;
