//! Dwell-time transform from trajectories to pseudo-counts.
//!
//! A trajectory is treated as the polyline obtained by linear interpolation
//! between consecutive probes, in planar space and in time. Each segment is
//! split at temporal interval boundaries and then at grid lines; every piece
//! lies in exactly one (cell, interval) and contributes its duration there.
//! Pseudo-counts are stored in device-hours.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geo::{CellId, IntervalId, Point, SpatialScheme, TemporalScheme};
use crate::ingest::Trajectory;

/// A timestamped planar position on a piecewise-linear path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathPoint {
    pub ts_ms: f64,
    pub pos: Point,
}

impl PathPoint {
    pub fn new(ts_ms: f64, x: f64, y: f64) -> Self {
        PathPoint { ts_ms, pos: Point::new(x, y) }
    }
}

/// Time spent by a path inside one spatiotemporal partition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dwell {
    pub cell: CellId,
    pub interval: IntervalId,
    pub dwell_s: f64,
}

/// Projects a trajectory's probes onto the plane of `space`.
pub fn project_path(traj: &Trajectory, space: &SpatialScheme) -> Result<Vec<PathPoint>> {
    traj.probes
        .iter()
        .map(|p| {
            let pos = space.projection.project(p.lon, p.lat)?;
            Ok(PathPoint { ts_ms: p.ts_ms as f64, pos })
        })
        .collect()
}

pub fn dwell_intersections(
    traj: &Trajectory,
    space: &SpatialScheme,
    time: &TemporalScheme,
) -> Result<Vec<Dwell>> {
    let path = project_path(traj, space)?;
    dwell_along_path(&path, space, time)
}

/// Clips a planar path against the spatiotemporal lattice.
///
/// Points must have non-decreasing timestamps and lie inside the extent.
pub fn dwell_along_path(
    path: &[PathPoint],
    space: &SpatialScheme,
    time: &TemporalScheme,
) -> Result<Vec<Dwell>> {
    let cells = path
        .iter()
        .map(|p| space.cell_of(&p.pos))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    let mut breaks = Vec::new();
    for (w, c) in path.windows(2).zip(cells.windows(2)) {
        clip_segment(&w[0], &w[1], c[0], c[1], space, time, &mut breaks, &mut out)?;
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn clip_segment(
    a: &PathPoint,
    b: &PathPoint,
    ca: CellId,
    cb: CellId,
    space: &SpatialScheme,
    time: &TemporalScheme,
    breaks: &mut Vec<f64>,
    out: &mut Vec<Dwell>,
) -> Result<()> {
    let dur_ms = b.ts_ms - a.ts_ms;
    if dur_ms < 0.0 {
        return Err(Error::input("path timestamps must be non-decreasing"));
    }
    if dur_ms == 0.0 {
        return Ok(());
    }
    breaks.clear();

    // temporal boundaries first
    let mut k = time.interval_of_f64(a.ts_ms).0 + 1;
    loop {
        let tb = time.start_ms(IntervalId(k)) as f64;
        if tb >= b.ts_ms {
            break;
        }
        breaks.push((tb - a.ts_ms) / dur_ms);
        k += 1;
    }

    // then vertical and horizontal grid lines
    let (dx, dy) = (b.pos.x - a.pos.x, b.pos.y - a.pos.y);
    let (ix_lo, ix_hi) = (ca.ix.min(cb.ix), ca.ix.max(cb.ix));
    let (iy_lo, iy_hi) = (ca.iy.min(cb.iy), ca.iy.max(cb.iy));
    if dx != 0.0 {
        for ix in ix_lo + 1..=ix_hi {
            breaks.push((space.gridline_x(ix) - a.pos.x) / dx);
        }
    }
    if dy != 0.0 {
        for iy in iy_lo + 1..=iy_hi {
            breaks.push((space.gridline_y(iy) - a.pos.y) / dy);
        }
    }
    breaks.retain(|u| *u > 0.0 && *u < 1.0);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    let dur_s = dur_ms / 1000.0;
    let mut prev = 0.0;
    for &u in breaks.iter().chain(std::iter::once(&1.0)) {
        if u <= prev {
            continue;
        }
        let mid = 0.5 * (prev + u);
        let x = a.pos.x + mid * dx;
        let y = a.pos.y + mid * dy;
        // the piece lies between the endpoint cells; clamp guards rounding at grid lines
        let ix = space.col_of(x).clamp(ix_lo, ix_hi);
        let iy = space.row_of(y).clamp(iy_lo, iy_hi);
        let interval = time.interval_of_f64(a.ts_ms + mid * dur_ms);
        out.push(Dwell {
            cell: CellId::new(ix, iy, space.level),
            interval,
            dwell_s: (u - prev) * dur_s,
        });
        prev = u;
    }
    Ok(())
}

/// Map (cell, interval) → dwell mass in device-hours under a fixed scheme pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoCountField {
    space: SpatialScheme,
    time: TemporalScheme,
    entries: BTreeMap<(CellId, IntervalId), f64>,
}

impl PseudoCountField {
    pub fn new(space: SpatialScheme, time: TemporalScheme) -> Self {
        PseudoCountField {
            space,
            time,
            entries: BTreeMap::new(),
        }
    }

    pub fn space(&self) -> &SpatialScheme {
        &self.space
    }

    pub fn time(&self) -> &TemporalScheme {
        &self.time
    }

    pub fn get(&self, cell: CellId, interval: IntervalId) -> f64 {
        self.entries.get(&(cell, interval)).copied().unwrap_or(0.0)
    }

    /// Adds `value` device-hours to a key. Negative or non-finite values are rejected.
    pub fn add(&mut self, cell: CellId, interval: IntervalId, value: f64) -> Result<()> {
        if !(value.is_finite() && value >= 0.0) {
            return Err(Error::input(format!("pseudo-count must be finite and >= 0, got {value}")));
        }
        if !self.space.contains_cell(&cell) {
            return Err(Error::input(format!("cell {cell} is not part of the scheme")));
        }
        *self.entries.entry((cell, interval)).or_insert(0.0) += value;
        Ok(())
    }

    fn add_unchecked(&mut self, cell: CellId, interval: IntervalId, value: f64) {
        *self.entries.entry((cell, interval)).or_insert(0.0) += value;
    }

    pub fn add_dwells(&mut self, dwells: &[Dwell]) {
        for d in dwells {
            self.add_unchecked(d.cell, d.interval, d.dwell_s / 3600.0);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (CellId, IntervalId, f64)> + '_ {
        self.entries.iter().map(|(&(c, t), &v)| (c, t, v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.entries.values().sum()
    }

    pub fn intervals(&self) -> BTreeSet<IntervalId> {
        self.entries.keys().map(|&(_, t)| t).collect()
    }

    /// Dense per-cell vector for one interval (zeros for absent keys).
    pub fn interval_vector(&self, interval: IntervalId) -> Vec<f64> {
        let mut v = vec![0.0; self.space.cell_count()];
        for (&(c, t), &x) in &self.entries {
            if t == interval {
                if let Some(i) = self.space.cell_index(&c) {
                    v[i] += x;
                }
            }
        }
        v
    }

    /// Dense per-interval vectors for every interval in `intervals`.
    pub fn interval_vectors(&self, intervals: &[IntervalId]) -> BTreeMap<IntervalId, Vec<f64>> {
        let n = self.space.cell_count();
        let mut out: BTreeMap<IntervalId, Vec<f64>> =
            intervals.iter().map(|&t| (t, vec![0.0; n])).collect();
        for (&(c, t), &x) in &self.entries {
            if let (Some(v), Some(i)) = (out.get_mut(&t), self.space.cell_index(&c)) {
                v[i] += x;
            }
        }
        out
    }

    pub fn ensure_same_schemes(&self, other: &PseudoCountField) -> Result<()> {
        self.space.ensure_same(&other.space)?;
        self.time.ensure_same(&other.time)
    }

    /// Pointwise sum with another field under the same schemes.
    pub fn merge(&mut self, other: &PseudoCountField) -> Result<()> {
        self.ensure_same_schemes(other)?;
        for (&k, &v) in &other.entries {
            *self.entries.entry(k).or_insert(0.0) += v;
        }
        Ok(())
    }
}

/// Per-trajectory field.
pub fn trajectory_field(
    traj: &Trajectory,
    space: &SpatialScheme,
    time: &TemporalScheme,
) -> Result<PseudoCountField> {
    let mut f = PseudoCountField::new(*space, *time);
    f.add_dwells(&dwell_intersections(traj, space, time)?);
    Ok(f)
}

/// Dwell transform of a trajectory set.
///
/// Trajectories are clipped in parallel and merged in input order, so the
/// result does not depend on the thread count.
pub fn transform(
    trajs: &[Trajectory],
    space: &SpatialScheme,
    time: &TemporalScheme,
) -> Result<PseudoCountField> {
    let parts = trajs
        .par_iter()
        .map(|t| dwell_intersections(t, space, time))
        .collect::<Result<Vec<_>>>()?;
    let mut field = PseudoCountField::new(*space, *time);
    for dwells in &parts {
        field.add_dwells(dwells);
    }
    Ok(field)
}

/// Pointwise sum of fields that share both schemes.
pub fn accumulate(parts: &[PseudoCountField]) -> Result<PseudoCountField> {
    let (first, rest) = parts
        .split_first()
        .ok_or_else(|| Error::input("accumulate needs at least one field"))?;
    let mut out = first.clone();
    for p in rest {
        out.merge(p)?;
    }
    Ok(out)
}

/// Sums each block of four children into its parent cell.
pub fn coarsen_spatial(field: &PseudoCountField) -> Result<PseudoCountField> {
    let space = field.space.coarser()?;
    let mut out = PseudoCountField::new(space, field.time);
    for (&(c, t), &v) in &field.entries {
        out.add_unchecked(c.parent()?, t, v);
    }
    Ok(out)
}

/// Merges every `factor` consecutive intervals into one.
pub fn coarsen_temporal(field: &PseudoCountField, factor: u32) -> Result<PseudoCountField> {
    let time = field.time.merged(factor)?;
    let k = i64::from(factor);
    let mut out = PseudoCountField::new(field.space, time);
    for (&(c, t), &v) in &field.entries {
        out.add_unchecked(c, IntervalId(t.0.div_euclid(k)), v);
    }
    Ok(out)
}

/// Rejected transform: one unit per probe.
pub fn baseline_probe_count(
    trajs: &[Trajectory],
    space: &SpatialScheme,
    time: &TemporalScheme,
) -> Result<PseudoCountField> {
    let mut f = PseudoCountField::new(*space, *time);
    for traj in trajs {
        for p in &traj.probes {
            let cell = space.cell_of(&space.projection.project(p.lon, p.lat)?)?;
            f.add_unchecked(cell, time.interval_of(p.ts_ms), 1.0);
        }
    }
    Ok(f)
}

/// Rejected transform: one unit per trajectory in every partition its polyline touches.
pub fn baseline_trajectory_count(
    trajs: &[Trajectory],
    space: &SpatialScheme,
    time: &TemporalScheme,
) -> Result<PseudoCountField> {
    let mut f = PseudoCountField::new(*space, *time);
    for traj in trajs {
        let mut touched: BTreeSet<(CellId, IntervalId)> = BTreeSet::new();
        for p in &traj.probes {
            let cell = space.cell_of(&space.projection.project(p.lon, p.lat)?)?;
            touched.insert((cell, time.interval_of(p.ts_ms)));
        }
        for d in dwell_intersections(traj, space, time)? {
            if d.dwell_s > 0.0 {
                touched.insert((d.cell, d.interval));
            }
        }
        for (c, t) in touched {
            f.add_unchecked(c, t, 1.0);
        }
    }
    Ok(f)
}

/// Splits a trajectory at probes outside the extent, dropping those probes.
///
/// Returns the inside pieces and the number of dropped probes. The extent is
/// convex, so segments between inside probes stay inside.
pub fn split_at_extent(traj: &Trajectory, space: &SpatialScheme) -> (Vec<Trajectory>, usize) {
    let mut pieces = Vec::new();
    let mut current = Vec::new();
    let mut dropped = 0;
    for p in &traj.probes {
        let inside = space
            .projection
            .project(p.lon, p.lat)
            .and_then(|q| space.cell_of(&q))
            .is_ok();
        if inside {
            current.push(*p);
        } else {
            dropped += 1;
            if !current.is_empty() {
                pieces.push(std::mem::take(&mut current));
            }
        }
    }
    if !current.is_empty() {
        pieces.push(current);
    }
    let single = pieces.len() == 1;
    let pieces = pieces
        .into_iter()
        .enumerate()
        .map(|(k, probes)| Trajectory {
            id: if single { traj.id.clone() } else { format!("{}~x{k}", traj.id) },
            probes,
        })
        .collect();
    (pieces, dropped)
}

/// Observed duration of a trajectory set in device-hours.
pub fn observed_hours(trajs: &[Trajectory]) -> f64 {
    trajs.iter().map(|t| t.duration_s()).sum::<f64>() / 3600.0
}
