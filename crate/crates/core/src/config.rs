//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Unknown or repeated keys are
//! errors, and every parameter is validated before any input is read.

use std::collections::BTreeSet;

use crate::analytics::HdbscanParams;
use crate::error::{Error, Result};
use crate::estimator::{EstimatorConfig, DEFAULT_LAMBDA};
use crate::geo::{Point, Projection, SpatialScheme, TemporalScheme};
use crate::ingest::PreprocessConfig;
use crate::synth::{ActivityMode, EmissionConfig, SynthConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub cell_size_m: f64,
    pub origin_x_m: f64,
    pub origin_y_m: f64,
    pub level: u8,
    pub extent_width_m: f64,
    pub extent_height_m: f64,
    pub ref_lat_deg: f64,
    pub interval_len_s: u32,
    pub epoch_ms: i64,
    pub preprocess: PreprocessConfig,
    pub lambda: f64,
    pub likelihood_only: bool,
    pub hdbscan: HdbscanParams,
    pub synth: SynthConfig,
    pub emission: EmissionConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let synth = SynthConfig::default();
        RunConfig {
            cell_size_m: 1000.0,
            origin_x_m: 890_000.0,
            origin_y_m: 5_825_000.0,
            level: 0,
            extent_width_m: 20_000.0,
            extent_height_m: 20_000.0,
            ref_lat_deg: 52.52,
            interval_len_s: 3600,
            epoch_ms: synth.start_ms,
            preprocess: PreprocessConfig::default(),
            lambda: DEFAULT_LAMBDA,
            likelihood_only: false,
            hdbscan: HdbscanParams::default(),
            synth,
            emission: EmissionConfig::default(),
        }
    }
}

/// Keys that describe the spatial and temporal schemes.
pub const SCHEME_KEYS: [&str; 9] = [
    "cell_size_m",
    "origin_x_m",
    "origin_y_m",
    "level",
    "extent_width_m",
    "extent_height_m",
    "ref_lat_deg",
    "interval_len_s",
    "epoch_ms",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(format!("cannot parse `{value}` for key `{key}`")))
}

impl RunConfig {
    /// Parses config text on top of the defaults and validates the result.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = BTreeSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split_once('#').map_or(raw, |(l, _)| l).trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected `key = value`", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_owned()) {
                return Err(Error::config(format!("line {}: key `{key}` repeated", n + 1)));
            }
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "cell_size_m" => self.cell_size_m = parse(key, value)?,
            "origin_x_m" => self.origin_x_m = parse(key, value)?,
            "origin_y_m" => self.origin_y_m = parse(key, value)?,
            "level" => self.level = parse(key, value)?,
            "extent_width_m" => self.extent_width_m = parse(key, value)?,
            "extent_height_m" => self.extent_height_m = parse(key, value)?,
            "ref_lat_deg" => self.ref_lat_deg = parse(key, value)?,
            "interval_len_s" => self.interval_len_s = parse(key, value)?,
            "epoch_ms" => {
                self.epoch_ms = parse(key, value)?;
                self.synth.start_ms = self.epoch_ms;
            }
            "max_speed_mps" => self.preprocess.max_speed_mps = parse(key, value)?,
            "max_gap_s" => self.preprocess.max_gap_s = parse(key, value)?,
            "min_probes" => self.preprocess.min_probes = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "likelihood_only" => self.likelihood_only = parse(key, value)?,
            "min_cluster_size" => self.hdbscan.min_cluster_size = parse(key, value)?,
            "min_samples" => self.hdbscan.min_samples = parse(key, value)?,
            "n_agents" => self.synth.n_agents = parse(key, value)?,
            "seed" => self.synth.seed = parse(key, value)?,
            "synth_days" => self.synth.days = parse(key, value)?,
            "work_start_h" => self.synth.work_start_h = parse(key, value)?,
            "work_end_h" => self.synth.work_end_h = parse(key, value)?,
            "jitter_s" => self.synth.jitter_s = parse(key, value)?,
            "speed_mps" => self.synth.speed_mps = parse(key, value)?,
            "coverage" => self.emission.coverage = parse(key, value)?,
            "probe_period_s_min" => self.emission.probe_period_s_min = parse(key, value)?,
            "probe_period_s_max" => self.emission.probe_period_s_max = parse(key, value)?,
            "session_max_s" => self.emission.session_max_s = parse(key, value)?,
            "activity" => self.emission.activity = value.parse::<ActivityMode>()?,
            other => return Err(Error::config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.space()?;
        self.time()?;
        self.preprocess.validate()?;
        self.estimator().validate()?;
        self.hdbscan.validate()?;
        self.synth.validate()?;
        self.emission.validate()
    }

    pub fn space(&self) -> Result<SpatialScheme> {
        SpatialScheme::new(
            Point::new(self.origin_x_m, self.origin_y_m),
            self.cell_size_m,
            self.level,
            self.extent_width_m,
            self.extent_height_m,
            Projection::new(self.ref_lat_deg),
        )
    }

    pub fn time(&self) -> Result<TemporalScheme> {
        TemporalScheme::new(self.epoch_ms, self.interval_len_s)
    }

    pub fn estimator(&self) -> EstimatorConfig {
        if self.likelihood_only {
            EstimatorConfig { lambda: self.lambda, likelihood_only: true }
        } else {
            EstimatorConfig::new(self.lambda)
        }
    }

    /// Overrides the scheme keys from `key=value` pairs (file headers).
    pub fn with_scheme_pairs<'a, I>(&self, pairs: I) -> Result<RunConfig>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut out = self.clone();
        for (k, v) in pairs {
            if !SCHEME_KEYS.contains(&k) {
                return Err(Error::format(format!("unexpected scheme key `{k}`")));
            }
            out.set(k, v)?;
        }
        Ok(out)
    }
}
