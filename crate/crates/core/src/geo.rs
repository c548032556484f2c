//! Spatial and temporal partitioning schemes.
//!
//! The spatial scheme is a square grid in an equirectangular planar projection.
//! Cells are half-open (`[x, x + size) × [y, y + size)`) and form a quad
//! hierarchy: a level-`L + 1` cell has half the edge length of its level-`L`
//! parent. The temporal scheme slices time into half-open intervals of a
//! fixed length starting from an epoch.

use std::fmt;

use crate::error::{Error, Result};

/// Mean earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Deepest supported hierarchy level.
pub const MAX_LEVEL: u8 = 24;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Axis-aligned rectangle, half-open on the max sides.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Rect {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Rect { min_x, min_y, max_x, max_y }
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.min_x && p.x < self.max_x && p.y >= self.min_y && p.y < self.max_y
    }

    pub fn center(&self) -> Point {
        Point::new(
            0.5 * (self.min_x + self.max_x),
            0.5 * (self.min_y + self.max_y),
        )
    }

    /// Overlap area with another rectangle (zero when disjoint).
    pub fn overlap_area(&self, other: &Rect) -> f64 {
        let w = self.max_x.min(other.max_x) - self.min_x.max(other.min_x);
        let h = self.max_y.min(other.max_y) - self.min_y.max(other.min_y);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }
}

/// Equirectangular projection around a reference latitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub ref_lat_deg: f64,
    pub earth_radius_m: f64,
}

impl Default for Projection {
    fn default() -> Self {
        Projection::new(0.0)
    }
}

impl Projection {
    pub fn new(ref_lat_deg: f64) -> Self {
        Projection {
            ref_lat_deg,
            earth_radius_m: EARTH_RADIUS_M,
        }
    }

    fn x_scale(&self) -> f64 {
        self.earth_radius_m * self.ref_lat_deg.to_radians().cos()
    }

    pub fn project(&self, lon_deg: f64, lat_deg: f64) -> Result<Point> {
        if !lon_deg.is_finite() || !lat_deg.is_finite() || lat_deg.abs() >= 90.0 {
            return Err(Error::input(format!(
                "coordinate out of range: lon {lon_deg}, lat {lat_deg}"
            )));
        }
        Ok(Point::new(
            self.x_scale() * lon_deg.to_radians(),
            self.earth_radius_m * lat_deg.to_radians(),
        ))
    }

    /// Inverse of [`Projection::project`], returning `(lon, lat)` in degrees.
    pub fn unproject(&self, p: &Point) -> (f64, f64) {
        (
            (p.x / self.x_scale()).to_degrees(),
            (p.y / self.earth_radius_m).to_degrees(),
        )
    }
}

/// Identity of one grid cell at one hierarchy level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellId {
    pub level: u8,
    pub iy: i64,
    pub ix: i64,
}

impl CellId {
    pub const fn new(ix: i64, iy: i64, level: u8) -> Self {
        CellId { level, iy, ix }
    }

    /// The four children in order (0,0), (1,0), (0,1), (1,1) relative to `2·ix, 2·iy`.
    pub fn children(&self) -> Result<[CellId; 4]> {
        if self.level >= MAX_LEVEL {
            return Err(Error::range(format!(
                "cell level {} has no children (max level {MAX_LEVEL})",
                self.level
            )));
        }
        let (x, y, l) = (2 * self.ix, 2 * self.iy, self.level + 1);
        Ok([
            CellId::new(x, y, l),
            CellId::new(x + 1, y, l),
            CellId::new(x, y + 1, l),
            CellId::new(x + 1, y + 1, l),
        ])
    }

    pub fn parent(&self) -> Result<CellId> {
        if self.level == 0 {
            return Err(Error::range("level-0 cell has no parent"));
        }
        Ok(CellId::new(self.ix >> 1, self.iy >> 1, self.level - 1))
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, L{})", self.ix, self.iy, self.level)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IntervalId(pub i64);

impl fmt::Display for IntervalId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A square-grid spatial partitioning scheme with a quad hierarchy.
///
/// The extent starts at `origin` and spans a whole number of level-0 cells,
/// so every level tiles it exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialScheme {
    pub origin: Point,
    pub base_cell_size: f64,
    pub base_cols: u32,
    pub base_rows: u32,
    pub level: u8,
    pub projection: Projection,
}

impl SpatialScheme {
    /// Builds a scheme whose cells at `level` have edge `cell_size` meters.
    /// The extent `width × height` must be a whole number of level-0 cells.
    pub fn new(
        origin: Point,
        cell_size: f64,
        level: u8,
        width: f64,
        height: f64,
        projection: Projection,
    ) -> Result<Self> {
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(Error::config(format!("cell size must be > 0, got {cell_size}")));
        }
        if level > MAX_LEVEL {
            return Err(Error::range(format!("level {level} exceeds {MAX_LEVEL}")));
        }
        if !origin.x.is_finite() || !origin.y.is_finite() {
            return Err(Error::config("origin must be finite"));
        }
        if !projection.ref_lat_deg.is_finite() || projection.ref_lat_deg.abs() >= 90.0 {
            return Err(Error::config("reference latitude must lie in (-90, 90)"));
        }
        let base = cell_size * f64::from(1u32 << level);
        let cols = whole_cells(width, base, "extent width")?;
        let rows = whole_cells(height, base, "extent height")?;
        Ok(SpatialScheme {
            origin,
            base_cell_size: base,
            base_cols: cols,
            base_rows: rows,
            level,
            projection,
        })
    }

    pub fn cell_size(&self) -> f64 {
        self.base_cell_size / f64::from(1u32 << self.level)
    }

    pub fn cols(&self) -> i64 {
        i64::from(self.base_cols) << self.level
    }

    pub fn rows(&self) -> i64 {
        i64::from(self.base_rows) << self.level
    }

    pub fn cell_count(&self) -> usize {
        (self.cols() * self.rows()) as usize
    }

    pub fn extent(&self) -> Rect {
        Rect::new(
            self.origin.x,
            self.origin.y,
            self.origin.x + self.base_cell_size * f64::from(self.base_cols),
            self.origin.y + self.base_cell_size * f64::from(self.base_rows),
        )
    }

    /// Same grid at another hierarchy level.
    pub fn at_level(&self, level: u8) -> Result<Self> {
        if level > MAX_LEVEL {
            return Err(Error::range(format!("level {level} exceeds {MAX_LEVEL}")));
        }
        Ok(SpatialScheme { level, ..*self })
    }

    pub fn coarser(&self) -> Result<Self> {
        if self.level == 0 {
            return Err(Error::range("cannot coarsen a level-0 scheme"));
        }
        self.at_level(self.level - 1)
    }

    pub fn finer(&self) -> Result<Self> {
        if self.level >= MAX_LEVEL {
            return Err(Error::range("cannot refine past the maximum level"));
        }
        self.at_level(self.level + 1)
    }

    /// Column index of the cell containing `x`, without extent checks.
    pub(crate) fn col_of(&self, x: f64) -> i64 {
        ((x - self.origin.x) / self.cell_size()).floor() as i64
    }

    pub(crate) fn row_of(&self, y: f64) -> i64 {
        ((y - self.origin.y) / self.cell_size()).floor() as i64
    }

    pub(crate) fn gridline_x(&self, ix: i64) -> f64 {
        self.origin.x + ix as f64 * self.cell_size()
    }

    pub(crate) fn gridline_y(&self, iy: i64) -> f64 {
        self.origin.y + iy as f64 * self.cell_size()
    }

    pub fn cell_of(&self, p: &Point) -> Result<CellId> {
        if !p.x.is_finite() || !p.y.is_finite() {
            return Err(Error::OutOfExtent { x: p.x, y: p.y });
        }
        let (ix, iy) = (self.col_of(p.x), self.row_of(p.y));
        if ix < 0 || iy < 0 || ix >= self.cols() || iy >= self.rows() {
            return Err(Error::OutOfExtent { x: p.x, y: p.y });
        }
        Ok(CellId::new(ix, iy, self.level))
    }

    pub fn contains_cell(&self, c: &CellId) -> bool {
        c.level == self.level && c.ix >= 0 && c.iy >= 0 && c.ix < self.cols() && c.iy < self.rows()
    }

    pub fn cell_rect(&self, c: &CellId) -> Rect {
        let size = self.base_cell_size / f64::from(1u32 << c.level);
        let x = self.origin.x + c.ix as f64 * size;
        let y = self.origin.y + c.iy as f64 * size;
        Rect::new(x, y, x + size, y + size)
    }

    /// Cell rectangle plus its closed lon/lat ring (counter-clockwise).
    pub fn cell_polygon(&self, c: &CellId) -> CellPolygon {
        let rect = self.cell_rect(c);
        let corners = [
            Point::new(rect.min_x, rect.min_y),
            Point::new(rect.max_x, rect.min_y),
            Point::new(rect.max_x, rect.max_y),
            Point::new(rect.min_x, rect.max_y),
            Point::new(rect.min_x, rect.min_y),
        ];
        let ring = corners.map(|p| self.projection.unproject(&p));
        CellPolygon { rect, ring }
    }

    /// Dense row-major index of a cell of this scheme.
    pub fn cell_index(&self, c: &CellId) -> Option<usize> {
        self.contains_cell(c)
            .then(|| (c.iy * self.cols() + c.ix) as usize)
    }

    pub fn cell_at(&self, index: usize) -> CellId {
        let cols = self.cols();
        let i = index as i64;
        CellId::new(i % cols, i / cols, self.level)
    }

    /// All cells of the scheme in dense-index order.
    pub fn cells(&self) -> impl Iterator<Item = CellId> + '_ {
        (0..self.cell_count()).map(move |i| self.cell_at(i))
    }

    /// Same grid geometry, ignoring level.
    pub fn same_grid(&self, other: &SpatialScheme) -> bool {
        self.origin == other.origin
            && self.base_cell_size == other.base_cell_size
            && self.base_cols == other.base_cols
            && self.base_rows == other.base_rows
            && self.projection == other.projection
    }

    pub fn ensure_same(&self, other: &SpatialScheme) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::SchemeMismatch {
                left: self.to_string(),
                right: other.to_string(),
            })
        }
    }
}

impl fmt::Display for SpatialScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let e = self.extent();
        write!(
            f,
            "cell_size_m={} origin_x_m={} origin_y_m={} level={} extent_width_m={} extent_height_m={} ref_lat_deg={}",
            self.cell_size(),
            self.origin.x,
            self.origin.y,
            self.level,
            e.width(),
            e.height(),
            self.projection.ref_lat_deg
        )
    }
}

fn whole_cells(len: f64, base: f64, what: &str) -> Result<u32> {
    if !(len.is_finite() && len > 0.0) {
        return Err(Error::config(format!("{what} must be > 0, got {len}")));
    }
    let n = (len / base).round();
    if n < 1.0 || (n * base - len).abs() > 1e-9 * len.max(1.0) || n > f64::from(u32::MAX) {
        return Err(Error::config(format!(
            "{what} {len} m is not a whole number of level-0 cells of {base} m"
        )));
    }
    Ok(n as u32)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellPolygon {
    pub rect: Rect,
    /// Closed ring of `(lon, lat)` corners.
    pub ring: [(f64, f64); 5],
}

/// Fixed-length half-open time intervals anchored at an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TemporalScheme {
    pub epoch_ms: i64,
    pub interval_len_s: u32,
}

impl TemporalScheme {
    pub fn new(epoch_ms: i64, interval_len_s: u32) -> Result<Self> {
        if interval_len_s == 0 {
            return Err(Error::config("interval length must be > 0"));
        }
        Ok(TemporalScheme { epoch_ms, interval_len_s })
    }

    pub fn interval_len_ms(&self) -> i64 {
        i64::from(self.interval_len_s) * 1000
    }

    pub fn interval_hours(&self) -> f64 {
        f64::from(self.interval_len_s) / 3600.0
    }

    pub fn interval_of(&self, ts_ms: i64) -> IntervalId {
        IntervalId((ts_ms - self.epoch_ms).div_euclid(self.interval_len_ms()))
    }

    /// Interval of a fractional timestamp (interpolated positions).
    pub(crate) fn interval_of_f64(&self, ts_ms: f64) -> IntervalId {
        IntervalId(((ts_ms - self.epoch_ms as f64) / self.interval_len_ms() as f64).floor() as i64)
    }

    pub fn start_ms(&self, id: IntervalId) -> i64 {
        self.epoch_ms + id.0 * self.interval_len_ms()
    }

    /// Scheme whose intervals each merge `factor` consecutive intervals of this one.
    pub fn merged(&self, factor: u32) -> Result<Self> {
        if factor < 2 {
            return Err(Error::range(format!("merge factor must be >= 2, got {factor}")));
        }
        let len = self
            .interval_len_s
            .checked_mul(factor)
            .ok_or_else(|| Error::range("merged interval length overflows"))?;
        TemporalScheme::new(self.epoch_ms, len)
    }

    pub fn ensure_same(&self, other: &TemporalScheme) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::SchemeMismatch {
                left: self.to_string(),
                right: other.to_string(),
            })
        }
    }
}

impl fmt::Display for TemporalScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epoch_ms={} interval_len_s={}",
            self.epoch_ms, self.interval_len_s
        )
    }
}
