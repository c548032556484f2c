//! Static population prior: census loading and areal-weighting disaggregation.

use std::collections::BTreeMap;
use std::io::Read;

use rayon::prelude::*;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geo::{CellId, Point, Projection, Rect, SpatialScheme};
use crate::numeric::compensated_sum;

pub const CENSUS_HEADER: [&str; 4] = ["cell_ix", "cell_iy", "level", "population"];

/// Prior persons per cell, dense in the scheme's cell order.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticPopulation {
    scheme: SpatialScheme,
    values: Vec<f64>,
    total: f64,
}

impl StaticPopulation {
    pub fn from_dense(scheme: SpatialScheme, values: Vec<f64>) -> Result<Self> {
        if values.len() != scheme.cell_count() {
            return Err(Error::input(format!(
                "expected {} cell values, got {}",
                scheme.cell_count(),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::input(format!("population must be finite and >= 0, got {v}")));
        }
        let total = compensated_sum(values.iter().copied());
        Ok(StaticPopulation { scheme, values, total })
    }

    pub fn scheme(&self) -> &SpatialScheme {
        &self.scheme
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Total population N.
    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn get(&self, cell: &CellId) -> f64 {
        self.scheme.cell_index(cell).map_or(0.0, |i| self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (CellId, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(|(i, &v)| (self.scheme.cell_at(i), v))
    }

    /// Sums children into parents one level up.
    pub fn coarsen(&self) -> Result<StaticPopulation> {
        let coarse = self.scheme.coarser()?;
        let mut values = vec![0.0; coarse.cell_count()];
        for (cell, v) in self.iter() {
            let parent = cell.parent()?;
            if let Some(i) = coarse.cell_index(&parent) {
                values[i] += v;
            }
        }
        StaticPopulation::from_dense(coarse, values)
    }
}

/// One census row rejected during loading.
#[derive(Debug, Clone, PartialEq)]
pub struct CensusReject {
    pub line_no: u64,
    pub fields: Vec<String>,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct LoadedPopulation {
    pub population: StaticPopulation,
    pub rejects: Vec<CensusReject>,
}

/// Reads raw census rows `(cell, population)`; duplicates are fatal.
pub fn read_census_rows<R: Read>(input: R) -> Result<(Vec<(CellId, f64)>, Vec<CensusReject>)> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = reader
        .headers()
        .map_err(|e| Error::format(format!("unreadable census header: {e}")))?
        .clone();
    if header.iter().collect::<Vec<_>>() != CENSUS_HEADER {
        return Err(Error::format(format!(
            "census header must be `{}`",
            CENSUS_HEADER.join(",")
        )));
    }
    let mut rows = Vec::new();
    let mut rejects = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for rec in reader.records() {
        let rec = rec?;
        let line_no = rec.position().map_or(0, |p| p.line());
        match parse_census_row(&rec) {
            Ok((cell, pop)) => {
                if !seen.insert(cell) {
                    return Err(Error::DuplicateCell(cell));
                }
                rows.push((cell, pop));
            }
            Err(reason) => rejects.push(CensusReject {
                line_no,
                fields: rec.iter().map(str::to_owned).collect(),
                reason,
            }),
        }
    }
    Ok((rows, rejects))
}

fn parse_census_row(rec: &csv::StringRecord) -> std::result::Result<(CellId, f64), String> {
    if rec.len() != 4 {
        return Err(format!("expected 4 fields, found {}", rec.len()));
    }
    let ix: i64 = rec[0].parse().map_err(|_| format!("bad cell_ix `{}`", &rec[0]))?;
    let iy: i64 = rec[1].parse().map_err(|_| format!("bad cell_iy `{}`", &rec[1]))?;
    let level: u8 = rec[2].parse().map_err(|_| format!("bad level `{}`", &rec[2]))?;
    let pop: f64 = rec[3].parse().map_err(|_| format!("bad population `{}`", &rec[3]))?;
    if !pop.is_finite() {
        return Err(format!("non-finite population `{}`", &rec[3]));
    }
    if pop < 0.0 {
        return Err(format!("negative population {pop}"));
    }
    Ok((CellId::new(ix, iy, level), pop))
}

/// Loads gridded census data onto `scheme`.
///
/// Rows at the scheme's level are taken as-is. Rows at another level of the
/// same grid are redistributed by areal weighting. Rows outside the extent
/// are rejected.
pub fn load_static_population<R: Read>(input: R, scheme: &SpatialScheme) -> Result<LoadedPopulation> {
    let (rows, mut rejects) = read_census_rows(input)?;
    let mut values = vec![0.0; scheme.cell_count()];
    let mut other_level = Vec::new();
    for (cell, pop) in rows {
        if cell.level == scheme.level {
            match scheme.cell_index(&cell) {
                Some(i) => values[i] = pop,
                None => rejects.push(CensusReject {
                    line_no: 0,
                    fields: vec![
                        cell.ix.to_string(),
                        cell.iy.to_string(),
                        cell.level.to_string(),
                        pop.to_string(),
                    ],
                    reason: format!("cell {cell} outside the extent"),
                }),
            }
        } else {
            other_level.push(SourceZone::cell(cell, pop));
        }
    }
    if !other_level.is_empty() {
        let extra = disaggregate(&other_level, scheme)?;
        for (v, e) in values.iter_mut().zip(extra.values()) {
            *v += e;
        }
    }
    Ok(LoadedPopulation {
        population: StaticPopulation::from_dense(*scheme, values)?,
        rejects,
    })
}

/// Simple polygon with optional holes, planar meters.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub outer: Vec<Point>,
    pub holes: Vec<Vec<Point>>,
}

impl Polygon {
    pub fn new(outer: Vec<Point>) -> Self {
        Polygon { outer, holes: Vec::new() }
    }

    pub fn area(&self) -> f64 {
        ring_area(&self.outer) - self.holes.iter().map(|h| ring_area(h)).sum::<f64>()
    }

    fn bbox(&self) -> Rect {
        let mut r = Rect::new(f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.outer {
            r.min_x = r.min_x.min(p.x);
            r.min_y = r.min_y.min(p.y);
            r.max_x = r.max_x.max(p.x);
            r.max_y = r.max_y.max(p.y);
        }
        r
    }

    fn overlap_area(&self, rect: &Rect) -> f64 {
        let outer = ring_area(&clip_ring(&self.outer, rect));
        let holes: f64 = self.holes.iter().map(|h| ring_area(&clip_ring(h, rect))).sum();
        (outer - holes).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ZoneGeometry {
    Cell(CellId),
    Rect(Rect),
    Polygons(Vec<Polygon>),
}

/// A source area with a known population.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceZone {
    pub geometry: ZoneGeometry,
    pub population: f64,
}

impl SourceZone {
    pub fn cell(cell: CellId, population: f64) -> Self {
        SourceZone { geometry: ZoneGeometry::Cell(cell), population }
    }

    pub fn rect(rect: Rect, population: f64) -> Self {
        SourceZone { geometry: ZoneGeometry::Rect(rect), population }
    }

    pub fn polygon(polygon: Polygon, population: f64) -> Self {
        SourceZone {
            geometry: ZoneGeometry::Polygons(vec![polygon]),
            population,
        }
    }
}

/// Areal weighting of source zones onto the target grid.
///
/// Each zone's population is split over target cells in proportion to the
/// overlap area, normalized by the zone's area inside the extent, so the
/// total is conserved. Zones are assumed pairwise disjoint.
pub fn disaggregate(sources: &[SourceZone], target: &SpatialScheme) -> Result<StaticPopulation> {
    let shares = sources
        .par_iter()
        .map(|z| zone_shares(z, target))
        .collect::<Result<Vec<_>>>()?;
    let mut values = vec![0.0; target.cell_count()];
    for zone in &shares {
        for &(i, v) in zone {
            values[i] += v;
        }
    }
    StaticPopulation::from_dense(*target, values)
}

fn zone_shares(zone: &SourceZone, target: &SpatialScheme) -> Result<Vec<(usize, f64)>> {
    if !(zone.population.is_finite() && zone.population >= 0.0) {
        return Err(Error::input(format!("zone population must be >= 0, got {}", zone.population)));
    }
    let overlaps: Vec<(usize, f64)> = match &zone.geometry {
        ZoneGeometry::Cell(c) => rect_overlaps(&target.cell_rect(c), target)?,
        ZoneGeometry::Rect(r) => rect_overlaps(r, target)?,
        ZoneGeometry::Polygons(polys) => {
            let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
            for poly in polys {
                if poly.outer.len() < 3 || !(poly.area() > 0.0) {
                    return Err(Error::input("degenerate source polygon"));
                }
                for (i, rect) in cells_under(&poly.bbox(), target) {
                    let a = poly.overlap_area(&rect);
                    if a > 0.0 {
                        *acc.entry(i).or_insert(0.0) += a;
                    }
                }
            }
            acc.into_iter().collect()
        }
    };
    let inside = compensated_sum(overlaps.iter().map(|&(_, a)| a));
    if !(inside > 0.0) {
        return Err(Error::input("source zone does not overlap the target extent"));
    }
    Ok(overlaps
        .into_iter()
        .map(|(i, a)| (i, zone.population * a / inside))
        .collect())
}

fn rect_overlaps(r: &Rect, target: &SpatialScheme) -> Result<Vec<(usize, f64)>> {
    if !(r.width() > 0.0 && r.height() > 0.0) {
        return Err(Error::input("degenerate source rectangle"));
    }
    Ok(cells_under(r, target)
        .filter_map(|(i, cell)| {
            let a = cell.overlap_area(r);
            (a > 0.0).then_some((i, a))
        })
        .collect())
}

/// Target cells whose rectangles intersect `bbox`, clamped to the extent.
fn cells_under<'a>(bbox: &Rect, target: &'a SpatialScheme) -> impl Iterator<Item = (usize, Rect)> + 'a {
    let x0 = target.col_of(bbox.min_x).max(0);
    let x1 = target.col_of(bbox.max_x).min(target.cols() - 1);
    let y0 = target.row_of(bbox.min_y).max(0);
    let y1 = target.row_of(bbox.max_y).min(target.rows() - 1);
    (y0..=y1).flat_map(move |iy| {
        (x0..=x1).filter_map(move |ix| {
            let c = CellId::new(ix, iy, target.level);
            target.cell_index(&c).map(|i| (i, target.cell_rect(&c)))
        })
    })
}

/// Unsigned shoelace area.
pub fn ring_area(ring: &[Point]) -> f64 {
    if ring.len() < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for (i, p) in ring.iter().enumerate() {
        let q = &ring[(i + 1) % ring.len()];
        s += p.x * q.y - q.x * p.y;
    }
    0.5 * s.abs()
}

/// Sutherland–Hodgman clip of a ring against a rectangle.
fn clip_ring(ring: &[Point], rect: &Rect) -> Vec<Point> {
    let mut out: Vec<Point> = ring.to_vec();
    if out.len() > 1 && out.first() == out.last() {
        out.pop();
    }
    // (axis, bound, keep_greater)
    let planes = [
        (0, rect.min_x, true),
        (0, rect.max_x, false),
        (1, rect.min_y, true),
        (1, rect.max_y, false),
    ];
    for (axis, bound, keep_greater) in planes {
        if out.is_empty() {
            break;
        }
        let coord = |p: &Point| if axis == 0 { p.x } else { p.y };
        let inside = |p: &Point| {
            if keep_greater {
                coord(p) >= bound
            } else {
                coord(p) <= bound
            }
        };
        let input = std::mem::take(&mut out);
        for (i, cur) in input.iter().enumerate() {
            let prev = &input[(i + input.len() - 1) % input.len()];
            let (ci, pi) = (inside(cur), inside(prev));
            if ci != pi {
                let t = (bound - coord(prev)) / (coord(cur) - coord(prev));
                out.push(Point::new(
                    prev.x + t * (cur.x - prev.x),
                    prev.y + t * (cur.y - prev.y),
                ));
            }
            if ci {
                out.push(*cur);
            }
        }
    }
    out
}

/// Reads a GeoJSON FeatureCollection of (Multi)Polygons with a numeric
/// `population` property. Coordinates are lon/lat and get projected.
pub fn load_geojson_zones<R: Read>(input: R, projection: &Projection) -> Result<Vec<SourceZone>> {
    let doc: Value = serde_json::from_reader(input)?;
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(Error::format("expected a GeoJSON FeatureCollection"));
    }
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::format("FeatureCollection without features"))?;
    features
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let population = f
                .get("properties")
                .and_then(|p| p.get("population"))
                .and_then(Value::as_f64)
                .ok_or_else(|| Error::format(format!("feature {k}: missing numeric `population`")))?;
            let geom = f
                .get("geometry")
                .ok_or_else(|| Error::format(format!("feature {k}: missing geometry")))?;
            let coords = geom
                .get("coordinates")
                .ok_or_else(|| Error::format(format!("feature {k}: missing coordinates")))?;
            let polygons = match geom.get("type").and_then(Value::as_str) {
                Some("Polygon") => vec![parse_polygon(coords, projection)?],
                Some("MultiPolygon") => coords
                    .as_array()
                    .ok_or_else(|| Error::format("MultiPolygon coordinates must be an array"))?
                    .iter()
                    .map(|c| parse_polygon(c, projection))
                    .collect::<Result<_>>()?,
                other => {
                    return Err(Error::format(format!(
                        "feature {k}: unsupported geometry {other:?}"
                    )))
                }
            };
            Ok(SourceZone {
                geometry: ZoneGeometry::Polygons(polygons),
                population,
            })
        })
        .collect()
}

fn parse_polygon(coords: &Value, projection: &Projection) -> Result<Polygon> {
    let rings = coords
        .as_array()
        .ok_or_else(|| Error::format("polygon coordinates must be an array of rings"))?;
    let mut parsed = rings.iter().map(|r| parse_ring(r, projection));
    let outer = parsed
        .next()
        .ok_or_else(|| Error::format("polygon without rings"))??;
    let holes = parsed.collect::<Result<Vec<_>>>()?;
    Ok(Polygon { outer, holes })
}

fn parse_ring(ring: &Value, projection: &Projection) -> Result<Vec<Point>> {
    ring.as_array()
        .ok_or_else(|| Error::format("ring must be an array of positions"))?
        .iter()
        .map(|pos| {
            let lon = pos.get(0).and_then(Value::as_f64);
            let lat = pos.get(1).and_then(Value::as_f64);
            match (lon, lat) {
                (Some(lon), Some(lat)) => projection.project(lon, lat),
                _ => Err(Error::format("position must be [lon, lat]")),
            }
        })
        .collect()
}
