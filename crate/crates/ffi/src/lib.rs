//! C ABI over popflux.
//!
//! Handles are opaque pointers owned by the caller and released with the
//! matching `*_free`. Every function returns a [`PfStatus`]; on failure
//! [`pf_last_error`] describes the problem for the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::fs::File;
use std::io::BufWriter;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use popflux::config::RunConfig;
use popflux::estimator::{posterior_population, EstimatorConfig, PopulationField};
use popflux::geo::{CellId, IntervalId};
use popflux::io::{read_counts, read_schemes, write_estimates, Schemes};
use popflux::prior::{load_static_population, StaticPopulation};
use popflux::transform::PseudoCountField;
use popflux::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PfStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Input = 3,
    Config = 4,
    Format = 5,
    Io = 6,
    SchemeMismatch = 7,
    Model = 8,
    Undefined = 9,
    OutOfRange = 10,
    Panic = 99,
}

impl From<&Error> for PfStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Input(_) | Error::DuplicateCell(_) => PfStatus::Input,
            Error::OutOfExtent { .. } | Error::Range(_) => PfStatus::OutOfRange,
            Error::SchemeMismatch { .. } => PfStatus::SchemeMismatch,
            Error::Config(_) => PfStatus::Config,
            Error::Format(_) | Error::Csv(_) | Error::Json(_) => PfStatus::Format,
            Error::Model(_) => PfStatus::Model,
            Error::UndefinedPosterior(_) | Error::UndefinedCorrelation(_) | Error::ConstantSeries(_) => {
                PfStatus::Undefined
            }
            Error::Io(_) => PfStatus::Io,
        }
    }
}

/// Pseudo-counts in device-hours.
pub struct PfCounts {
    field: PseudoCountField,
}

/// Static population on the grid of the counts it was loaded against.
pub struct PfCensus {
    population: StaticPopulation,
}

/// Posterior population estimate.
pub struct PfEstimate {
    field: PopulationField,
    rows: Vec<(CellId, IntervalId, f64, f64)>,
}

/// One row of an estimate.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PfEstimateRow {
    pub cell_ix: i64,
    pub cell_iy: i64,
    pub level: u8,
    pub interval_index: i64,
    pub pseudo_count: f64,
    pub population: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

struct Failure(PfStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(PfStatus::from(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            PfStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            PfStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(PfStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(PfStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure(PfStatus::NullArgument, format!("{what} is null")))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure(PfStatus::NullArgument, format!("{what} is null")))
}

unsafe fn config(p: *const c_char) -> Result<RunConfig, Failure> {
    if p.is_null() {
        Ok(RunConfig::default())
    } else {
        Ok(RunConfig::parse(text(p, "config")?)?)
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread; empty after success.
/// The pointer stays valid until the next popflux call on the same thread.
#[no_mangle]
pub extern "C" fn pf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Reads a counts CSV. The scheme comes from the file header, falling back
/// to `config_text` (flat `key = value` text, may be null for defaults).
///
/// # Safety
/// `path` and `config_text` must be null or NUL-terminated strings; `out`
/// must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pf_counts_read(path: *const c_char, config_text: *const c_char, out_counts: *mut *mut PfCounts) -> PfStatus {
    guard(|| {
        let slot = out(out_counts, "out")?;
        *slot = ptr::null_mut();
        let cfg = config(config_text)?;
        let body = std::fs::read_to_string(text(path, "path")?).map_err(Error::from)?;
        let schemes = match read_schemes(&body, &cfg)? {
            Some(s) => s,
            None => Schemes::from_config(&cfg)?,
        };
        let field = read_counts(&body, &schemes)?;
        *slot = Box::into_raw(Box::new(PfCounts { field }));
        Ok(())
    })
}

/// Empty counts on the grid described by `config_text`.
///
/// # Safety
/// `config_text` must be null or a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pf_counts_new(config_text: *const c_char, out_counts: *mut *mut PfCounts) -> PfStatus {
    guard(|| {
        let slot = out(out_counts, "out")?;
        *slot = ptr::null_mut();
        let s = Schemes::from_config(&config(config_text)?)?;
        *slot = Box::into_raw(Box::new(PfCounts { field: PseudoCountField::new(s.space, s.time) }));
        Ok(())
    })
}

/// Adds device-hours to one key; the cell level must match the grid.
///
/// # Safety
/// `counts` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn pf_counts_add(counts: *mut PfCounts, cell_ix: i64, cell_iy: i64, interval_index: i64, device_hours: f64) -> PfStatus {
    guard(|| {
        let c = out(counts, "counts")?;
        let cell = CellId::new(cell_ix, cell_iy, c.field.space().level);
        c.field.add(cell, IntervalId(interval_index), device_hours)?;
        Ok(())
    })
}

/// Total device-hours.
///
/// # Safety
/// `counts` must be a live handle; `total` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pf_counts_total(counts: *const PfCounts, total: *mut f64) -> PfStatus {
    guard(|| {
        *out(total, "total")? = deref(counts, "counts")?.field.total();
        Ok(())
    })
}

/// # Safety
/// `counts` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pf_counts_free(counts: *mut PfCounts) {
    if !counts.is_null() {
        drop(Box::from_raw(counts));
    }
}

/// Reads a census CSV onto the grid of `counts`.
///
/// # Safety
/// `path` must be a NUL-terminated string, `counts` a live handle and `out`
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pf_census_read(path: *const c_char, counts: *const PfCounts, out_census: *mut *mut PfCensus) -> PfStatus {
    guard(|| {
        let slot = out(out_census, "out")?;
        *slot = ptr::null_mut();
        let space = *deref(counts, "counts")?.field.space();
        let file = File::open(text(path, "path")?).map_err(Error::from)?;
        let loaded = load_static_population(file, &space)?;
        *slot = Box::into_raw(Box::new(PfCensus { population: loaded.population }));
        Ok(())
    })
}

/// Census from dense values in row-major cell order of the grid of `counts`.
///
/// # Safety
/// `values` must point to `len` doubles; `counts` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pf_census_from_values(counts: *const PfCounts, values: *const f64, len: usize, out_census: *mut *mut PfCensus) -> PfStatus {
    guard(|| {
        let slot = out(out_census, "out")?;
        *slot = ptr::null_mut();
        let space = *deref(counts, "counts")?.field.space();
        if values.is_null() {
            return Err(Failure(PfStatus::NullArgument, "values is null".into()));
        }
        let v = std::slice::from_raw_parts(values, len).to_vec();
        *slot = Box::into_raw(Box::new(PfCensus { population: StaticPopulation::from_dense(space, v)? }));
        Ok(())
    })
}

/// Total census population.
///
/// # Safety
/// `census` must be a live handle; `total` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pf_census_total(census: *const PfCensus, total: *mut f64) -> PfStatus {
    guard(|| {
        *out(total, "total")? = deref(census, "census")?.population.total();
        Ok(())
    })
}

/// # Safety
/// `census` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pf_census_free(census: *mut PfCensus) {
    if !census.is_null() {
        drop(Box::from_raw(census));
    }
}

/// Posterior population with prior strength `lambda`; `likelihood_only`
/// non-zero requires `lambda == 0`.
///
/// # Safety
/// Handles must be live; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pf_estimate(
    counts: *const PfCounts,
    census: *const PfCensus,
    lambda: f64,
    likelihood_only: c_int,
    out_estimate: *mut *mut PfEstimate,
) -> PfStatus {
    guard(|| {
        let slot = out(out_estimate, "out")?;
        *slot = ptr::null_mut();
        let cfg = EstimatorConfig { lambda, likelihood_only: likelihood_only != 0 };
        cfg.validate()?;
        let field = posterior_population(&deref(counts, "counts")?.field, &deref(census, "census")?.population, &cfg)?;
        let rows = field.rows().collect();
        *slot = Box::into_raw(Box::new(PfEstimate { field, rows }));
        Ok(())
    })
}

/// Number of rows: every cell for every estimated interval.
///
/// # Safety
/// `estimate` must be a live handle; `len` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pf_estimate_len(estimate: *const PfEstimate, len: *mut usize) -> PfStatus {
    guard(|| {
        *out(len, "len")? = deref(estimate, "estimate")?.rows.len();
        Ok(())
    })
}

/// Row `index`, ordered by interval then cell.
///
/// # Safety
/// `estimate` must be a live handle; `row` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pf_estimate_row(estimate: *const PfEstimate, index: usize, row: *mut PfEstimateRow) -> PfStatus {
    guard(|| {
        let e = deref(estimate, "estimate")?;
        let (c, t, count, pop) = *e
            .rows
            .get(index)
            .ok_or_else(|| Failure(PfStatus::OutOfRange, format!("row {index} of {}", e.rows.len())))?;
        *out(row, "row")? = PfEstimateRow {
            cell_ix: c.ix,
            cell_iy: c.iy,
            level: c.level,
            interval_index: t.0,
            pseudo_count: count,
            population: pop,
        };
        Ok(())
    })
}

/// Writes the estimate as CSV, as the `estimate` subcommand does.
///
/// # Safety
/// `estimate` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pf_estimate_write(estimate: *const PfEstimate, path: *const c_char) -> PfStatus {
    guard(|| {
        let e = deref(estimate, "estimate")?;
        let file = File::create(text(path, "path")?).map_err(Error::from)?;
        write_estimates(BufWriter::new(file), &e.field)?;
        Ok(())
    })
}

/// # Safety
/// `estimate` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pf_estimate_free(estimate: *mut PfEstimate) {
    if !estimate.is_null() {
        drop(Box::from_raw(estimate));
    }
}

/// Runs the command line with `argc` arguments (program name first) and
/// stores its exit code.
///
/// # Safety
/// `argv` must point to `argc` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn pf_run_cli(argc: usize, argv: *const *const c_char, exit_code: *mut c_int) -> PfStatus {
    guard(|| {
        let code = out(exit_code, "exit_code")?;
        if argv.is_null() {
            return Err(Failure(PfStatus::NullArgument, "argv is null".into()));
        }
        let args = std::slice::from_raw_parts(argv, argc)
            .iter()
            .map(|&a| text(a, "argument").map(str::to_owned))
            .collect::<Result<Vec<_>, _>>()?;
        *code = popflux::cli::run(args);
        Ok(())
    })
}
