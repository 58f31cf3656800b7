//! Per-run artifacts: trajectory CSV and SVG plot.
//!
//! CSV columns are `t,id,x,y,heading,speed,beta,pbar_x,pbar_y,min_clearance`,
//! one row per robot per tick. `id` is an integer; every other value is
//! written in scientific notation with 9 significant digits (`1.23456789e0`),
//! and `inf` when no pair of robots exists.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use rbl_core::engine::TrajectoryLog;
use rbl_core::Point2;
use serde::Deserialize;

pub fn sig9(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.8e}")
    } else {
        format!("{v}")
    }
}

pub const CSV_HEADER: [&str; 10] = ["t", "id", "x", "y", "heading", "speed", "beta", "pbar_x", "pbar_y", "min_clearance"];

pub fn write_csv<W: io::Write>(log: &TrajectoryLog, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for tick in &log.ticks {
        let t = sig9(tick.t);
        let clearance = sig9(tick.min_clearance);
        for r in &tick.robots {
            w.write_record([
                t.clone(),
                r.id.to_string(),
                sig9(r.x),
                sig9(r.y),
                sig9(r.heading),
                sig9(r.speed),
                sig9(r.beta),
                sig9(r.pbar.x),
                sig9(r.pbar.y),
                clearance.clone(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct CsvRow {
    pub t: f64,
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub beta: f64,
    pub pbar_x: f64,
    pub pbar_y: f64,
    pub min_clearance: f64,
}

pub fn read_csv<R: io::Read>(input: R) -> Result<Vec<CsvRow>, csv::Error> {
    csv::Reader::from_reader(input).deserialize().collect()
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

/// Most points kept per trajectory; longer runs are subsampled evenly.
const MAX_POINTS: usize = 500;

/// Trajectories as polylines, starts as circles of the robot's radius and
/// goals as crosses. World `y` points up.
pub fn render_svg(log: &TrajectoryLog, goals: &[Point2], deltas: &[f64]) -> String {
    let n = goals.len();
    let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut grow = |p: Point2, r: f64| {
        lo = Point2::new(lo.x.min(p.x - r), lo.y.min(p.y - r));
        hi = Point2::new(hi.x.max(p.x + r), hi.y.max(p.y + r));
    };
    for tick in &log.ticks {
        for r in &tick.robots {
            grow(Point2::new(r.x, r.y), deltas.get(r.id).copied().unwrap_or(0.0));
        }
    }
    for g in goals {
        grow(*g, 0.2);
    }
    if !lo.x.is_finite() {
        lo = Point2::new(-1.0, -1.0);
        hi = Point2::new(1.0, 1.0);
    }
    let margin = 0.05 * (hi.x - lo.x).max(hi.y - lo.y).max(1.0);
    let (x0, y0) = (lo.x - margin, lo.y - margin);
    let (w, h) = (hi.x - lo.x + 2.0 * margin, hi.y - lo.y + 2.0 * margin);
    let scale = 800.0 / w.max(h);
    let px = |p: Point2| ((p.x - x0) * scale, (y0 + h - p.y) * scale);
    let stroke = (0.02 * w.max(h) * scale / 10.0).max(1.0);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" viewBox="0 0 {:.3} {:.3}">"#,
        w * scale,
        h * scale,
        w * scale,
        h * scale
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let step = log.ticks.len().div_ceil(MAX_POINTS).max(1);
    for i in 0..n {
        let color = PALETTE[i % PALETTE.len()];
        let mut pts: Vec<Point2> = log
            .ticks
            .iter()
            .step_by(step)
            .filter_map(|t| t.robots.get(i).map(|r| Point2::new(r.x, r.y)))
            .collect();
        if let Some(last) = log.ticks.last().and_then(|t| t.robots.get(i)) {
            let end = Point2::new(last.x, last.y);
            if pts.last() != Some(&end) {
                pts.push(end);
            }
        }
        if pts.is_empty() {
            continue;
        }
        let mut d = String::new();
        for p in &pts {
            let (x, y) = px(*p);
            let _ = write!(d, "{x:.2},{y:.2} ");
        }
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="{stroke:.2}"/>"#,
            d.trim_end()
        );
        let (sx, sy) = px(pts[0]);
        let radius = deltas.get(i).copied().unwrap_or(0.0) * scale;
        let _ = writeln!(
            s,
            r#"<circle cx="{sx:.2}" cy="{sy:.2}" r="{radius:.2}" fill="none" stroke="{color}" stroke-width="{stroke:.2}"/>"#
        );
        let (gx, gy) = px(goals[i]);
        let arm = 0.15 * scale;
        let _ = writeln!(
            s,
            r#"<path d="M{:.2},{:.2}L{:.2},{:.2}M{:.2},{:.2}L{:.2},{:.2}" stroke="{color}" stroke-width="{stroke:.2}"/>"#,
            gx - arm,
            gy - arm,
            gx + arm,
            gy + arm,
            gx - arm,
            gy + arm,
            gx + arm,
            gy - arm
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn write_run_artifacts(dir: &Path, stem: &str, log: &TrajectoryLog, goals: &[Point2], deltas: &[f64]) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let file = std::fs::File::create(dir.join(format!("{stem}.csv")))?;
    write_csv(log, io::BufWriter::new(file)).map_err(io::Error::other)?;
    std::fs::write(dir.join(format!("{stem}.svg")), render_svg(log, goals, deltas))
}
