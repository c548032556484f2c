//! CSV and GeoJSON interchange.
//!
//! Every file written here starts with a version comment line and, for
//! gridded data, a `#scheme,...` line carrying the scheme keys. Readers skip
//! `#` lines; the scheme line, when present, is checked against the run
//! configuration. Counts and populations use 9 significant digits.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde_json::{json, Value};

use crate::analytics::ClusterResult;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::estimator::PopulationField;
use crate::geo::{CellId, IntervalId, SpatialScheme, TemporalScheme};
use crate::ingest::{Reject, Trajectory, PROBE_HEADER};
use crate::numeric::fmt_sig9;
use crate::prior::{StaticPopulation, CENSUS_HEADER};
use crate::synth::GroundTruthField;
use crate::transform::PseudoCountField;

pub const SCHEMA_VERSION: u32 = 1;

pub const COUNTS_HEADER: [&str; 5] = ["cell_ix", "cell_iy", "level", "interval_index", "count_device_hours"];
pub const ESTIMATE_HEADER: [&str; 7] = [
    "cell_ix",
    "cell_iy",
    "level",
    "interval_index",
    "interval_start_ms",
    "pseudo_count_device_hours",
    "estimated_population",
];
pub const TRUTH_HEADER: [&str; 5] = ["cell_ix", "cell_iy", "level", "interval_index", "true_population"];
pub const CORRELATION_HEADER: [&str; 4] = ["interval_index", "interval_start_ms", "spearman_rho", "status"];
pub const CLUSTER_HEADER: [&str; 4] = ["cell_ix", "cell_iy", "level", "cluster_label"];
pub const ENVELOPE_HEADER: [&str; 5] = ["cluster_label", "interval_index", "median_z", "p10_z", "p90_z"];

/// Value columns recognized by [`read_field_rows`], in priority order.
pub const VALUE_COLUMNS: [&str; 5] = [
    "estimated_population",
    "count_device_hours",
    "true_population",
    "population",
    "cluster_label",
];

pub fn version_line() -> String {
    format!("#popflux-version={},schema-version={SCHEMA_VERSION}", env!("CARGO_PKG_VERSION"))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schemes {
    pub space: SpatialScheme,
    pub time: TemporalScheme,
}

impl Schemes {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        Ok(Schemes { space: cfg.space()?, time: cfg.time()? })
    }

    pub fn header_line(&self) -> String {
        let e = self.space.extent();
        format!(
            "#scheme,cell_size_m={},origin_x_m={},origin_y_m={},level={},extent_width_m={},extent_height_m={},ref_lat_deg={},interval_len_s={},epoch_ms={}",
            self.space.cell_size(),
            self.space.origin.x,
            self.space.origin.y,
            self.space.level,
            e.width(),
            e.height(),
            self.space.projection.ref_lat_deg,
            self.time.interval_len_s,
            self.time.epoch_ms
        )
    }

    pub fn ensure_same(&self, other: &Schemes) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::SchemeMismatch { left: self.to_string(), right: other.to_string() })
        }
    }
}

impl fmt::Display for Schemes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.space, self.time)
    }
}

pub fn write_preamble<W: Write>(w: &mut W, schemes: Option<&Schemes>) -> Result<()> {
    writeln!(w, "{}", version_line())?;
    if let Some(s) = schemes {
        writeln!(w, "{}", s.header_line())?;
    }
    Ok(())
}

/// Scheme recorded in a file's leading comment lines, if any.
///
/// Non-scheme parameters come from `base`.
pub fn read_schemes(text: &str, base: &RunConfig) -> Result<Option<Schemes>> {
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        if let Some(rest) = line.strip_prefix("#popflux-version=") {
            let version = rest
                .split(',')
                .find_map(|kv| kv.strip_prefix("schema-version="))
                .ok_or_else(|| Error::format("version line lacks schema-version"))?;
            if version.trim() != SCHEMA_VERSION.to_string() {
                return Err(Error::format(format!("unsupported schema-version {version}")));
            }
        } else if let Some(rest) = line.strip_prefix("#scheme,") {
            let pairs = rest
                .split(',')
                .map(|kv| kv.split_once('=').map(|(k, v)| (k.trim(), v.trim())))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| Error::format(format!("malformed scheme line `{line}`")))?;
            let cfg = base.with_scheme_pairs(pairs)?;
            return Ok(Some(Schemes::from_config(&cfg)?));
        }
    }
    Ok(None)
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn column(header: &csv::StringRecord, name: &str) -> Option<usize> {
    header.iter().position(|h| h == name)
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, name: &str) -> Result<T> {
    let raw = rec.get(idx).unwrap_or("");
    raw.parse().map_err(|_| {
        let line = rec.position().map_or(0, |p| p.line());
        Error::format(format!("line {line}: bad {name} `{raw}`"))
    })
}

fn check_header(reader: &mut csv::Reader<&[u8]>, expected: &[&str]) -> Result<()> {
    let header = reader.headers()?;
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(Error::format(format!("expected header `{}`", expected.join(","))));
    }
    Ok(())
}

pub fn write_counts<W: Write>(mut w: W, field: &PseudoCountField) -> Result<()> {
    write_preamble(&mut w, Some(&Schemes { space: *field.space(), time: *field.time() }))?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(COUNTS_HEADER)?;
    for (c, t, v) in field.iter() {
        out.write_record([c.ix.to_string(), c.iy.to_string(), c.level.to_string(), t.0.to_string(), fmt_sig9(v)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_counts(text: &str, schemes: &Schemes) -> Result<PseudoCountField> {
    let mut reader = csv_reader(text);
    check_header(&mut reader, &COUNTS_HEADER)?;
    let mut f = PseudoCountField::new(schemes.space, schemes.time);
    for rec in reader.records() {
        let rec = rec?;
        let cell = CellId::new(field(&rec, 0, "cell_ix")?, field(&rec, 1, "cell_iy")?, field(&rec, 2, "level")?);
        let t = IntervalId(field(&rec, 3, "interval_index")?);
        f.add(cell, t, field(&rec, 4, "count_device_hours")?)?;
    }
    Ok(f)
}

pub fn write_estimates<W: Write>(mut w: W, est: &PopulationField) -> Result<()> {
    write_preamble(&mut w, Some(&Schemes { space: *est.space(), time: *est.time() }))?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(ESTIMATE_HEADER)?;
    for (c, t, count, pop) in est.rows() {
        out.write_record([
            c.ix.to_string(),
            c.iy.to_string(),
            c.level.to_string(),
            t.0.to_string(),
            est.time().start_ms(t).to_string(),
            fmt_sig9(count),
            fmt_sig9(pop),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_truth<W: Write>(mut w: W, truth: &GroundTruthField) -> Result<()> {
    write_preamble(&mut w, Some(&Schemes { space: *truth.space(), time: *truth.time() }))?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TRUTH_HEADER)?;
    for (c, t, v) in truth.iter() {
        out.write_record([c.ix.to_string(), c.iy.to_string(), c.level.to_string(), t.0.to_string(), fmt_sig9(v)])?;
    }
    out.flush()?;
    Ok(())
}

/// Census rows for every cell, zeros included.
pub fn write_census<W: Write>(mut w: W, pop: &StaticPopulation, time: &TemporalScheme) -> Result<()> {
    write_preamble(&mut w, Some(&Schemes { space: *pop.scheme(), time: *time }))?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CENSUS_HEADER)?;
    for (c, v) in pop.iter() {
        out.write_record([c.ix.to_string(), c.iy.to_string(), c.level.to_string(), fmt_sig9(v)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_probes<W: Write>(mut w: W, trajs: &[Trajectory]) -> Result<()> {
    write_preamble(&mut w, None)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(PROBE_HEADER)?;
    for t in trajs {
        for p in &t.probes {
            out.write_record([t.id.clone(), p.ts_ms.to_string(), p.lon.to_string(), p.lat.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_rejects<W: Write>(mut w: W, rejects: &[Reject]) -> Result<()> {
    write_preamble(&mut w, None)?;
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<&str> = PROBE_HEADER.to_vec();
    header.extend(["line_no", "reason"]);
    out.write_record(&header)?;
    for r in rejects {
        // malformed rows may have any number of fields; keep the first four
        let mut rec: Vec<String> = (0..PROBE_HEADER.len()).map(|i| r.fields.get(i).cloned().unwrap_or_default()).collect();
        rec.push(r.line_no.to_string());
        rec.push(r.reason.clone());
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_correlation<W: Write>(
    mut w: W,
    rho: &BTreeMap<IntervalId, Option<f64>>,
    schemes: &Schemes,
) -> Result<()> {
    write_preamble(&mut w, Some(schemes))?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CORRELATION_HEADER)?;
    for (t, r) in rho {
        let (value, status) = match r {
            Some(v) => (fmt_sig9(*v), "ok"),
            None => (String::new(), "undefined"),
        };
        out.write_record([t.0.to_string(), schemes.time.start_ms(*t).to_string(), value, status.to_owned()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_clusters<W: Write>(mut w: W, result: &ClusterResult, schemes: &Schemes) -> Result<()> {
    write_preamble(&mut w, Some(schemes))?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CLUSTER_HEADER)?;
    for (c, l) in &result.labels {
        out.write_record([c.ix.to_string(), c.iy.to_string(), c.level.to_string(), l.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_envelopes<W: Write>(mut w: W, result: &ClusterResult, schemes: &Schemes) -> Result<()> {
    write_preamble(&mut w, Some(schemes))?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(ENVELOPE_HEADER)?;
    for (l, env) in &result.envelopes {
        for (k, e) in env.iter().enumerate() {
            out.write_record([
                l.to_string(),
                (result.start.0 + k as i64).to_string(),
                fmt_sig9(e.median),
                fmt_sig9(e.p10),
                fmt_sig9(e.p90),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Rows of any gridded CSV: `cell_ix,cell_iy,level` plus an optional
/// `interval_index` and one recognized value column.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldRows {
    pub value_column: String,
    pub rows: Vec<(CellId, Option<IntervalId>, f64)>,
}

pub fn read_field_rows(text: &str) -> Result<FieldRows> {
    let mut reader = csv_reader(text);
    let header = reader.headers()?.clone();
    let idx = |name: &str| column(&header, name).ok_or_else(|| Error::format(format!("missing column `{name}`")));
    let (ix, iy, lv) = (idx("cell_ix")?, idx("cell_iy")?, idx("level")?);
    let iv = column(&header, "interval_index");
    let (value_column, vi) = VALUE_COLUMNS
        .iter()
        .find_map(|name| column(&header, name).map(|i| (name.to_string(), i)))
        .ok_or_else(|| Error::format(format!("no value column; expected one of {}", VALUE_COLUMNS.join(", "))))?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let cell = CellId::new(field(&rec, ix, "cell_ix")?, field(&rec, iy, "cell_iy")?, field(&rec, lv, "level")?);
        let t = iv.map(|i| field(&rec, i, "interval_index").map(IntervalId)).transpose()?;
        rows.push((cell, t, field(&rec, vi, &value_column)?));
    }
    Ok(FieldRows { value_column, rows })
}

/// FeatureCollection of cell polygons with a `value` property.
pub fn cells_geojson(space: &SpatialScheme, cells: &[(CellId, f64)]) -> Result<Value> {
    let features = cells
        .iter()
        .map(|(c, v)| {
            if c.level != space.level || !space.contains_cell(c) {
                return Err(Error::range(format!("cell {c} is not part of the scheme")));
            }
            let ring: Vec<[f64; 2]> = space.cell_polygon(c).ring.iter().map(|&(lon, lat)| [lon, lat]).collect();
            Ok(json!({
                "type": "Feature",
                "geometry": { "type": "Polygon", "coordinates": [ring] },
                "properties": { "cell_ix": c.ix, "cell_iy": c.iy, "level": c.level, "value": v },
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(json!({ "type": "FeatureCollection", "features": features }))
}
