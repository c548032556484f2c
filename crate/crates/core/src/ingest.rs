//! Probe CSV parsing and trajectory preprocessing.

use std::collections::{BTreeMap, HashSet};
use std::io::Read;

use crate::error::{Error, Result};
use crate::geo::EARTH_RADIUS_M;

pub const PROBE_HEADER: [&str; 4] = ["trajectory_id", "timestamp_ms", "lon_deg", "lat_deg"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub ts_ms: i64,
    pub lon: f64,
    pub lat: f64,
}

impl Probe {
    pub fn new(ts_ms: i64, lon: f64, lat: f64) -> Self {
        Probe { ts_ms, lon, lat }
    }

    pub fn is_valid(&self) -> bool {
        self.lon.is_finite() && self.lat.is_finite() && self.lat.abs() < 90.0 && self.lon.abs() <= 180.0
    }
}

/// One pseudonymous session: probes with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub id: String,
    pub probes: Vec<Probe>,
}

impl Trajectory {
    /// Sorts by timestamp and keeps the first probe of each duplicated timestamp.
    pub fn new(id: impl Into<String>, mut probes: Vec<Probe>) -> Result<Self> {
        if probes.is_empty() {
            return Err(Error::input("trajectory needs at least one probe"));
        }
        if let Some(p) = probes.iter().find(|p| !p.is_valid()) {
            return Err(Error::input(format!("invalid probe {p:?}")));
        }
        probes.sort_by_key(|p| p.ts_ms);
        probes.dedup_by_key(|p| p.ts_ms);
        Ok(Trajectory { id: id.into(), probes })
    }

    pub fn duration_s(&self) -> f64 {
        match (self.probes.first(), self.probes.last()) {
            (Some(a), Some(b)) => (b.ts_ms - a.ts_ms) as f64 / 1000.0,
            _ => 0.0,
        }
    }
}

/// A CSV row that could not be turned into a probe.
#[derive(Debug, Clone, PartialEq)]
pub struct Reject {
    pub fields: Vec<String>,
    pub line_no: u64,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct ParsedProbes {
    pub trajectories: Vec<Trajectory>,
    pub rejects: Vec<Reject>,
    pub duplicates: usize,
}

/// Parses the probe CSV. Lines starting with `#` are comments.
///
/// Malformed rows go to `rejects`; only a missing or wrong header is fatal.
/// Trajectories come out ordered by id.
pub fn parse_probes<R: Read>(input: R) -> Result<ParsedProbes> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = reader
        .headers()
        .map_err(|e| Error::format(format!("unreadable probe header: {e}")))?
        .clone();
    if header.is_empty() {
        // empty input, not even a header line
        return Err(Error::format("probe file has no header"));
    }
    if header.iter().collect::<Vec<_>>() != PROBE_HEADER {
        return Err(Error::format(format!(
            "probe header must be `{}`, got `{}`",
            PROBE_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut out = ParsedProbes::default();
    let mut groups: BTreeMap<String, Vec<Probe>> = BTreeMap::new();
    let mut seen: HashSet<(String, i64)> = HashSet::new();
    let mut record = csv::StringRecord::new();
    loop {
        let line_no = reader.position().line();
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                if e.is_io_error() {
                    return Err(e.into());
                }
                out.rejects.push(Reject {
                    fields: Vec::new(),
                    line_no: e.position().map_or(line_no, |p| p.line()),
                    reason: e.to_string(),
                });
                continue;
            }
        }
        let line_no = record.position().map_or(line_no, |p| p.line());
        match parse_row(&record) {
            Ok((id, probe)) => {
                if seen.insert((id.clone(), probe.ts_ms)) {
                    groups.entry(id).or_default().push(probe);
                } else {
                    out.duplicates += 1;
                }
            }
            Err(reason) => out.rejects.push(Reject {
                fields: record.iter().map(str::to_owned).collect(),
                line_no,
                reason,
            }),
        }
    }
    for (id, mut probes) in groups {
        // stable sort keeps first occurrence order for equal timestamps (already deduplicated)
        probes.sort_by_key(|p| p.ts_ms);
        out.trajectories.push(Trajectory { id, probes });
    }
    Ok(out)
}

fn parse_row(record: &csv::StringRecord) -> std::result::Result<(String, Probe), String> {
    if record.len() != 4 {
        return Err(format!("expected 4 fields, found {}", record.len()));
    }
    let id = &record[0];
    if id.is_empty() {
        return Err("empty trajectory_id".into());
    }
    let ts: i64 = record[1]
        .parse()
        .map_err(|_| format!("bad timestamp_ms `{}`", &record[1]))?;
    let lon: f64 = record[2].parse().map_err(|_| format!("bad lon_deg `{}`", &record[2]))?;
    let lat: f64 = record[3].parse().map_err(|_| format!("bad lat_deg `{}`", &record[3]))?;
    let probe = Probe::new(ts, lon, lat);
    if !probe.is_valid() {
        return Err(format!("coordinate out of range: lon {lon}, lat {lat}"));
    }
    Ok((id.to_owned(), probe))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreprocessConfig {
    pub max_speed_mps: f64,
    pub max_gap_s: f64,
    pub min_probes: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            max_speed_mps: 70.0,
            max_gap_s: 300.0,
            min_probes: 2,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_speed_mps > 0.0 && self.max_speed_mps.is_finite()) {
            return Err(Error::config("max_speed_mps must be > 0"));
        }
        if !(self.max_gap_s > 0.0 && self.max_gap_s.is_finite()) {
            return Err(Error::config("max_gap_s must be > 0"));
        }
        if self.min_probes == 0 {
            return Err(Error::config("min_probes must be > 0"));
        }
        Ok(())
    }
}

/// Great-circle distance in meters.
pub fn haversine_m(a: &Probe, b: &Probe) -> f64 {
    let (la1, la2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = la2 - la1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + la1.cos() * la2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

fn implied_speed(a: &Probe, b: &Probe) -> f64 {
    let dt = (b.ts_ms - a.ts_ms) as f64 / 1000.0;
    haversine_m(a, b) / dt
}

/// Speed filter, gap split and minimum-length filter, in that order.
///
/// A probe too fast from its last kept predecessor is dropped. When more
/// than one piece survives, pieces get ids `<id>~<k>`.
pub fn preprocess(traj: &Trajectory, cfg: &PreprocessConfig) -> Vec<Trajectory> {
    let mut kept: Vec<Probe> = Vec::with_capacity(traj.probes.len());
    for p in &traj.probes {
        match kept.last() {
            Some(prev) if implied_speed(prev, p) > cfg.max_speed_mps => {}
            _ => kept.push(*p),
        }
    }

    let max_gap_ms = cfg.max_gap_s * 1000.0;
    let mut pieces: Vec<Vec<Probe>> = Vec::new();
    let mut current: Vec<Probe> = Vec::new();
    for p in kept {
        if let Some(prev) = current.last() {
            if (p.ts_ms - prev.ts_ms) as f64 > max_gap_ms {
                pieces.push(std::mem::take(&mut current));
            }
        }
        current.push(p);
    }
    if !current.is_empty() {
        pieces.push(current);
    }
    pieces.retain(|p| p.len() >= cfg.min_probes);

    match pieces.len() {
        0 => Vec::new(),
        1 => vec![Trajectory {
            id: traj.id.clone(),
            probes: pieces.pop().unwrap_or_default(),
        }],
        _ => pieces
            .into_iter()
            .enumerate()
            .map(|(k, probes)| Trajectory {
                id: format!("{}~{k}", traj.id),
                probes,
            })
            .collect(),
    }
}
