//! Synthetic commuter city with exact ground truth.
//!
//! Agents live at a home anchor, some commute to a work anchor on weekdays,
//! and everybody may take short leisure outings. Travel is a straight line
//! at constant speed. The synthetic clock starts at local midnight of a
//! Monday (`start_ms`), so day `d` is a weekend day when `d % 7 >= 5`.
//!
//! Ground truth is time-averaged presence: the person-seconds an agent's
//! true path spends in a partition divided by the interval length.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geo::{CellId, IntervalId, Point, SpatialScheme, TemporalScheme};
use crate::ingest::{Probe, Trajectory};
use crate::prior::StaticPopulation;
use crate::transform::{dwell_along_path, PathPoint};

const DAY_MS: f64 = 86_400_000.0;
const HOUR_MS: f64 = 3_600_000.0;
const EMPLOYED_SHARE: f64 = 0.65;
const WEEKEND_OUTING_P: f64 = 0.8;
const WEEKDAY_OUTING_P: f64 = 0.3;
const EVENING_OUTING_P: f64 = 0.15;

const WORLD_STREAM: u64 = 0x5eed_0001;
const EMISSION_STREAM: u64 = 0x5eed_0002;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_agents: usize,
    pub seed: u64,
    pub start_ms: i64,
    pub days: u32,
    pub work_start_h: f64,
    pub work_end_h: f64,
    pub jitter_s: f64,
    pub speed_mps: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_agents: 1000,
            seed: 42,
            // Monday 2019-04-01T00:00:00Z
            start_ms: 1_554_076_800_000,
            days: 7,
            work_start_h: 8.0,
            work_end_h: 17.0,
            jitter_s: 1800.0,
            speed_mps: 10.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_agents == 0 {
            return Err(Error::config("n_agents must be >= 1"));
        }
        if self.days == 0 {
            return Err(Error::config("synth_days must be >= 1"));
        }
        if !(0.0..24.0).contains(&self.work_start_h)
            || !(0.0..24.0).contains(&self.work_end_h)
            || self.work_start_h >= self.work_end_h
        {
            return Err(Error::config(format!(
                "need 0 <= work_start_h < work_end_h < 24, got {} and {}",
                self.work_start_h, self.work_end_h
            )));
        }
        let span_s = (self.work_end_h - self.work_start_h) * 3600.0;
        if !(self.jitter_s >= 0.0 && 4.0 * self.jitter_s < span_s) {
            return Err(Error::config("jitter_s must be >= 0 and well below the working day"));
        }
        if !(self.speed_mps.is_finite() && self.speed_mps > 0.0) {
            return Err(Error::config("speed_mps must be > 0"));
        }
        Ok(())
    }

    pub fn end_ms(&self) -> i64 {
        self.start_ms + i64::from(self.days) * DAY_MS as i64
    }
}

/// How long covered devices emit probes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivityMode {
    /// Emit for the whole simulated range.
    Always,
    /// Short active windows whose frequency follows the time of day, plus
    /// every trip.
    Diurnal,
}

impl std::str::FromStr for ActivityMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "always" => Ok(ActivityMode::Always),
            "diurnal" => Ok(ActivityMode::Diurnal),
            other => Err(Error::config(format!("activity must be `always` or `diurnal`, got `{other}`"))),
        }
    }
}

impl std::fmt::Display for ActivityMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ActivityMode::Always => "always",
            ActivityMode::Diurnal => "diurnal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmissionConfig {
    pub coverage: f64,
    pub probe_period_s_min: f64,
    pub probe_period_s_max: f64,
    pub session_max_s: f64,
    pub activity: ActivityMode,
}

impl Default for EmissionConfig {
    fn default() -> Self {
        EmissionConfig {
            coverage: 0.3,
            probe_period_s_min: 5.0,
            probe_period_s_max: 60.0,
            session_max_s: 600.0,
            activity: ActivityMode::Diurnal,
        }
    }
}

impl EmissionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.coverage > 0.0 && self.coverage <= 1.0) {
            return Err(Error::config(format!("coverage must lie in (0, 1], got {}", self.coverage)));
        }
        if !(self.probe_period_s_min > 0.0 && self.probe_period_s_min <= self.probe_period_s_max && self.probe_period_s_max.is_finite()) {
            return Err(Error::config("need 0 < probe_period_s_min <= probe_period_s_max"));
        }
        if !(self.session_max_s.is_finite() && self.session_max_s >= self.probe_period_s_max) {
            return Err(Error::config("session_max_s must be >= probe_period_s_max"));
        }
        Ok(())
    }
}

/// One straight-line move between anchors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trip {
    pub depart_ms: f64,
    pub arrive_ms: f64,
    pub from: Point,
    pub to: Point,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub index: usize,
    pub home: Point,
    pub work: Option<Point>,
    pub speed_mps: f64,
    /// Chronological, non-overlapping.
    pub trips: Vec<Trip>,
}

impl Agent {
    /// True path over `[start_ms, end_ms]` as waypoints.
    pub fn path(&self, start_ms: f64, end_ms: f64) -> Vec<PathPoint> {
        let mut pts = vec![PathPoint { ts_ms: start_ms, pos: self.home }];
        for t in &self.trips {
            pts.push(PathPoint { ts_ms: t.depart_ms, pos: t.from });
            pts.push(PathPoint { ts_ms: t.arrive_ms, pos: t.to });
        }
        let last = pts.last().map_or(self.home, |p| p.pos);
        pts.push(PathPoint { ts_ms: end_ms, pos: last });
        pts.retain(|p| p.ts_ms >= start_ms && p.ts_ms <= end_ms);
        pts
    }

    pub fn position_at(&self, ts_ms: f64) -> Point {
        let mut at = self.home;
        for t in &self.trips {
            if ts_ms < t.depart_ms {
                return at;
            }
            if ts_ms < t.arrive_ms {
                let u = (ts_ms - t.depart_ms) / (t.arrive_ms - t.depart_ms);
                return Point::new(t.from.x + u * (t.to.x - t.from.x), t.from.y + u * (t.to.y - t.from.y));
            }
            at = t.to;
        }
        at
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub space: SpatialScheme,
    pub start_ms: i64,
    pub end_ms: i64,
    pub agents: Vec<Agent>,
}

impl World {
    /// Realized home histogram, used as the census.
    pub fn census(&self) -> Result<StaticPopulation> {
        let mut v = vec![0.0; self.space.cell_count()];
        for a in &self.agents {
            let c = self.space.cell_of(&a.home)?;
            v[self.space.cell_index(&c).expect("home inside extent")] += 1.0;
        }
        StaticPopulation::from_dense(self.space, v)
    }
}

fn stream_rng(seed: u64, purpose: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ purpose.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.set_stream(index as u64);
    rng
}

fn bump(p: Point, center: Point, scale: f64) -> f64 {
    (-p.distance(&center) / scale).exp()
}

/// Residential density: a dense core and a secondary town inside a settled
/// area, with an uninhabited periphery.
pub fn default_home_prior(space: &SpatialScheme) -> Result<StaticPopulation> {
    let e = space.extent();
    let l = e.width().min(e.height());
    let core = e.center();
    let town = Point::new(e.min_x + 0.25 * e.width(), e.min_y + 0.7 * e.height());
    let values = space
        .cells()
        .map(|c| {
            let p = space.cell_rect(&c).center();
            let settled = p.distance(&core) <= 0.3 * l || p.distance(&town) <= 0.15 * l;
            if settled {
                1000.0 * (bump(p, core, 0.15 * l) + 0.5 * bump(p, town, 0.06 * l) + 0.01)
            } else {
                0.0
            }
        })
        .collect();
    StaticPopulation::from_dense(*space, values)
}

/// Workplace density: downtown plus a business park.
fn work_weights(space: &SpatialScheme) -> Vec<f64> {
    let e = space.extent();
    let l = e.width().min(e.height());
    let core = e.center();
    let park = Point::new(e.min_x + 0.72 * e.width(), e.min_y + 0.3 * e.height());
    space
        .cells()
        .map(|c| {
            let p = space.cell_rect(&c).center();
            bump(p, core, 0.05 * l) + 0.35 * bump(p, park, 0.03 * l) + 1e-4
        })
        .collect()
}

fn point_in_cell<R: Rng>(space: &SpatialScheme, index: usize, rng: &mut R) -> Point {
    let r = space.cell_rect(&space.cell_at(index));
    Point::new(
        r.min_x + rng.random::<f64>() * r.width(),
        r.min_y + rng.random::<f64>() * r.height(),
    )
}

/// Systematic sample of `n` indices: each index appears floor or ceil of
/// its expected count, in shuffled order.
fn systematic_sample<R: Rng>(weights: &[f64], n: usize, rng: &mut R) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let u0: f64 = rng.random();
    let mut out = Vec::with_capacity(n);
    let mut cum = 0.0;
    for (i, w) in weights.iter().enumerate() {
        cum += w / total * n as f64;
        while out.len() < n && (out.len() as f64 + u0) < cum {
            out.push(i);
        }
    }
    // rounding can leave the last slot unfilled
    let last = weights.iter().rposition(|w| *w > 0.0).unwrap_or(0);
    out.resize(n, last);
    out.shuffle(rng);
    out
}

/// Agents with homes drawn from the default residential density.
pub fn generate_world(cfg: &SynthConfig, space: &SpatialScheme) -> Result<World> {
    generate_world_with_prior(cfg, &default_home_prior(space)?)
}

/// Agents with homes drawn from `home_prior`.
pub fn generate_world_with_prior(cfg: &SynthConfig, home_prior: &StaticPopulation) -> Result<World> {
    cfg.validate()?;
    let space = *home_prior.scheme();
    if !(home_prior.total() > 0.0) {
        return Err(Error::config("home prior has no positive mass"));
    }
    let n = cfg.n_agents;
    let home_cells = systematic_sample(home_prior.values(), n, &mut stream_rng(cfg.seed, WORLD_STREAM, n));
    let work_w = work_weights(&space);
    let work = WeightedIndex::new(&work_w).map_err(|e| Error::config(e.to_string()))?;
    // leisure destinations favor downtown but also follow where people live
    let leisure_w: Vec<f64> = work_w
        .iter()
        .zip(home_prior.values())
        .map(|(w, h)| 0.8 * w / work_w.iter().sum::<f64>() + 0.2 * h / home_prior.total())
        .collect();
    let leisure = WeightedIndex::new(&leisure_w).map_err(|e| Error::config(e.to_string()))?;

    let agents = (0..cfg.n_agents)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(cfg.seed, WORLD_STREAM, i);
            let home = point_in_cell(&space, home_cells[i], &mut rng);
            let employed = rng.random::<f64>() < EMPLOYED_SHARE;
            let work_at = employed.then(|| point_in_cell(&space, work.sample(&mut rng), &mut rng));
            let speed = cfg.speed_mps * rng.random_range(0.8..1.2);
            let offset_out = rng.random_range(-cfg.jitter_s..=cfg.jitter_s);
            let offset_back = rng.random_range(-cfg.jitter_s..=cfg.jitter_s);
            let mut trips = Vec::new();
            let travel_ms = |a: Point, b: Point| a.distance(&b) / speed * 1000.0;
            let go = |trips: &mut Vec<Trip>, depart: f64, from: Point, to: Point| {
                trips.push(Trip { depart_ms: depart, arrive_ms: depart + travel_ms(from, to), from, to });
            };
            for d in 0..cfg.days {
                let day0 = cfg.start_ms as f64 + f64::from(d) * DAY_MS;
                let weekend = d % 7 >= 5;
                let daily = 0.25 * cfg.jitter_s;
                match work_at {
                    Some(w) if !weekend => {
                        let out = day0 + (cfg.work_start_h * 3600.0 + offset_out + rng.random_range(-daily..=daily)) * 1000.0;
                        let back = day0 + (cfg.work_end_h * 3600.0 + offset_back + rng.random_range(-daily..=daily)) * 1000.0;
                        go(&mut trips, out, home, w);
                        let back = back.max(trips.last().expect("just pushed").arrive_ms + 60_000.0);
                        go(&mut trips, back, w, home);
                        if rng.random::<f64>() < EVENING_OUTING_P {
                            let dest = point_in_cell(&space, leisure.sample(&mut rng), &mut rng);
                            let start = trips.last().expect("just pushed").arrive_ms + rng.random_range(0.5..1.5) * HOUR_MS;
                            let stay = rng.random_range(0.5..2.0) * HOUR_MS;
                            if start + stay + 2.0 * travel_ms(home, dest) < day0 + 23.0 * HOUR_MS {
                                go(&mut trips, start, home, dest);
                                let back = trips.last().expect("just pushed").arrive_ms + stay;
                                go(&mut trips, back, dest, home);
                            }
                        }
                    }
                    _ => {
                        let p = if weekend { WEEKEND_OUTING_P } else { WEEKDAY_OUTING_P };
                        if rng.random::<f64>() < p {
                            let dest = point_in_cell(&space, leisure.sample(&mut rng), &mut rng);
                            let (start_h, stay_h) = if weekend {
                                (rng.random_range(8.0..9.5), rng.random_range(7.0..9.0))
                            } else {
                                (rng.random_range(10.0..15.0), rng.random_range(1.0..3.0))
                            };
                            let start = day0 + start_h * HOUR_MS;
                            let stay = stay_h * HOUR_MS;
                            go(&mut trips, start, home, dest);
                            let back = trips.last().expect("just pushed").arrive_ms + stay;
                            go(&mut trips, back, dest, home);
                        }
                    }
                }
            }
            Agent { index: i, home, work: work_at, speed_mps: speed, trips }
        })
        .collect();
    Ok(World {
        space,
        start_ms: cfg.start_ms,
        end_ms: cfg.end_ms(),
        agents,
    })
}

/// Time-averaged presence in persons per (cell, interval).
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthField {
    space: SpatialScheme,
    time: TemporalScheme,
    entries: BTreeMap<(CellId, IntervalId), f64>,
}

impl GroundTruthField {
    pub fn space(&self) -> &SpatialScheme {
        &self.space
    }

    pub fn time(&self) -> &TemporalScheme {
        &self.time
    }

    pub fn get(&self, cell: CellId, interval: IntervalId) -> f64 {
        self.entries.get(&(cell, interval)).copied().unwrap_or(0.0)
    }

    /// Entries ordered by cell then interval.
    pub fn iter(&self) -> impl Iterator<Item = (CellId, IntervalId, f64)> + '_ {
        self.entries.iter().map(|(&(c, t), &v)| (c, t, v))
    }

    pub fn intervals(&self) -> Vec<IntervalId> {
        let mut v: Vec<IntervalId> = self.entries.keys().map(|k| k.1).collect();
        v.sort();
        v.dedup();
        v
    }

    /// Dense values of one interval in scheme cell order.
    pub fn interval_vector(&self, interval: IntervalId) -> Vec<f64> {
        self.space.cells().map(|c| self.get(c, interval)).collect()
    }
}

/// Exact presence of every agent, from the same clipping used for probes.
pub fn true_occupancy(
    world: &World,
    space: &SpatialScheme,
    time: &TemporalScheme,
    start_ms: i64,
    end_ms: i64,
) -> Result<GroundTruthField> {
    let interval_s = time.interval_len_ms() as f64 / 1000.0;
    let parts = world
        .agents
        .par_iter()
        .map(|a| dwell_along_path(&a.path(start_ms as f64, end_ms as f64), space, time))
        .collect::<Result<Vec<_>>>()?;
    let mut entries = BTreeMap::new();
    for dwells in &parts {
        for d in dwells {
            *entries.entry((d.cell, d.interval)).or_insert(0.0) += d.dwell_s / interval_s;
        }
    }
    Ok(GroundTruthField {
        space: *space,
        time: *time,
        entries,
    })
}

/// Active periods `[from, to)` of one device, sorted and disjoint.
fn active_windows<R: Rng>(agent: &Agent, world: &World, mode: ActivityMode, rng: &mut R) -> Vec<(f64, f64)> {
    let (start, end) = (world.start_ms as f64, world.end_ms as f64);
    if mode == ActivityMode::Always {
        return vec![(start, end)];
    }
    let mut w = Vec::new();
    let mut h = start;
    while h < end {
        let hour_of_day = (((h - start) / HOUR_MS).round() as i64).rem_euclid(24);
        if rng.random::<f64>() < duty_cycle(hour_of_day) {
            let len = rng.random_range(10.0..40.0) * 60_000.0;
            let from = h + rng.random::<f64>() * (HOUR_MS - len);
            w.push((from, from + len));
        }
        h += HOUR_MS;
    }
    for t in &agent.trips {
        w.push((t.depart_ms - 60_000.0, t.arrive_ms + 60_000.0));
    }
    w.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (a, b) in w {
        let (a, b) = (a.max(start), b.min(end));
        if a >= b {
            continue;
        }
        match merged.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => merged.push((a, b)),
        }
    }
    merged
}

/// Probability that a device opens an active window in a given hour.
fn duty_cycle(hour_of_day: i64) -> f64 {
    match hour_of_day {
        0..=5 => 0.02,
        6 => 0.1,
        7..=18 => 0.6,
        19..=21 => 0.25,
        _ => 0.08,
    }
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Opaque, collision-free session id for (device, session counter).
fn session_id(seed: u64, device: usize, counter: u32) -> String {
    let key = mix64(seed ^ 0xa076_1d64_78bd_642f);
    format!("{:016x}", mix64(((device as u64) << 32) | u64::from(counter)) ^ key)
}

/// Probe sessions of the covered devices, ordered by agent.
pub fn simulate_probes(world: &World, emission: &EmissionConfig, seed: u64) -> Result<Vec<Trajectory>> {
    emission.validate()?;
    let proj = world.space.projection;
    let chop_ms = emission.session_max_s * 1000.0;
    let per_agent = world
        .agents
        .par_iter()
        .map(|agent| {
            let mut rng = stream_rng(seed, EMISSION_STREAM, agent.index);
            if rng.random::<f64>() >= emission.coverage {
                return Ok(Vec::new());
            }
            let period_ms = rng.random_range(emission.probe_period_s_min..=emission.probe_period_s_max) * 1000.0;
            let mut sessions = Vec::new();
            let mut counter = 0u32;
            for (from, to) in active_windows(agent, world, emission.activity, &mut rng) {
                let mut chunk_start = from;
                let mut probes: Vec<Probe> = Vec::new();
                let mut t = from + rng.random::<f64>() * period_ms;
                while t < to {
                    while t >= chunk_start + chop_ms {
                        chunk_start += chop_ms;
                        if !probes.is_empty() {
                            sessions.push(Trajectory::new(session_id(seed, agent.index, counter), std::mem::take(&mut probes))?);
                            counter += 1;
                        }
                    }
                    let ts = t.floor();
                    let (lon, lat) = proj.unproject(&agent.position_at(ts));
                    if probes.last().is_none_or(|p: &Probe| p.ts_ms < ts as i64) {
                        probes.push(Probe::new(ts as i64, lon, lat));
                    }
                    t += period_ms * rng.random_range(0.9..1.1);
                }
                if !probes.is_empty() {
                    sessions.push(Trajectory::new(session_id(seed, agent.index, counter), probes)?);
                    counter += 1;
                }
            }
            Ok(sessions)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_agent.into_iter().flatten().collect())
}
