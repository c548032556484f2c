//! Command-line front end: one subcommand per pipeline stage, handing off
//! through CSV files.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::analytics::{cluster_series, per_interval_prior_correlation, series_from_rows};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::estimator::posterior_population;
use crate::geo::IntervalId;
use crate::ingest::{parse_probes, preprocess};
use crate::io::{self as pio, Schemes};
use crate::prior::{disaggregate, load_geojson_zones, load_static_population, StaticPopulation};
use crate::synth::{generate_world, simulate_probes, true_occupancy};
use crate::transform::{observed_hours, split_at_extent, transform};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_SCHEME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "popflux", version, about = "Hourly population estimates from census priors and GPS trajectories")]
pub struct Cli {
    /// Flat `key = value` run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Treat dropped probes and rejected rows as fatal.
    #[arg(long, global = true)]
    pub strict: bool,

    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Probes CSV to per-cell, per-interval device-hours.
    Transform(TransformArgs),
    /// Posterior population from counts and census.
    Estimate(EstimateArgs),
    /// Per-interval Spearman correlation between counts and census.
    Correlate(CorrelateArgs),
    /// Cluster z-scored population series and write percentile envelopes.
    Cluster(ClusterArgs),
    /// Simulate a synthetic city: probes, ground truth and census.
    Synth(SynthArgs),
    /// Write one interval of a gridded CSV as GeoJSON polygons.
    ExportGeojson(ExportArgs),
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    #[arg(long)]
    pub probes: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Where to write malformed probe rows.
    #[arg(long)]
    pub rejects: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub counts: PathBuf,
    #[arg(long)]
    pub census: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Overrides `lambda` from the config.
    #[arg(long)]
    pub lambda: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    #[arg(long)]
    pub counts: PathBuf,
    #[arg(long)]
    pub census: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[arg(long)]
    pub estimates: PathBuf,
    #[arg(long)]
    pub clusters: PathBuf,
    #[arg(long)]
    pub envelopes: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub probes: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Also write the realized home census.
    #[arg(long)]
    pub census: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Interval index to export; required when the file has several.
    #[arg(long, allow_hyphen_values = true)]
    pub interval: Option<i64>,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) | Error::Csv(_) | Error::Json(_) | Error::Format(_) | Error::Config(_) => EXIT_INPUT,
        Error::SchemeMismatch { .. } => EXIT_SCHEME,
        _ => EXIT_FAILURE,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::parse(&fs::read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let ctx = Context { cfg, strict: cli.strict };
    pool.install(|| match &cli.command {
        Command::Transform(a) => ctx.transform(a),
        Command::Estimate(a) => ctx.estimate(a),
        Command::Correlate(a) => ctx.correlate(a),
        Command::Cluster(a) => ctx.cluster(a),
        Command::Synth(a) => ctx.synth(a),
        Command::ExportGeojson(a) => ctx.export_geojson(a),
    })
}

struct Context {
    cfg: RunConfig,
    strict: bool,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

impl Context {
    fn schemes(&self) -> Result<Schemes> {
        Schemes::from_config(&self.cfg)
    }

    /// The file's own scheme if it records one, otherwise the configured one.
    fn file_schemes(&self, text: &str) -> Result<Schemes> {
        match pio::read_schemes(text, &self.cfg)? {
            Some(s) => Ok(s),
            None => self.schemes(),
        }
    }

    fn load_counts(&self, path: &Path) -> Result<crate::transform::PseudoCountField> {
        let text = fs::read_to_string(path)?;
        let schemes = self.file_schemes(&text)?;
        pio::read_counts(&text, &schemes)
    }

    fn load_census(&self, path: &Path, expected: &Schemes) -> Result<StaticPopulation> {
        let text = fs::read_to_string(path)?;
        if text.trim_start().starts_with('{') {
            let zones = load_geojson_zones(text.as_bytes(), &expected.space.projection)?;
            return disaggregate(&zones, &expected.space);
        }
        if let Some(s) = pio::read_schemes(&text, &self.cfg)? {
            expected.space.ensure_same(&s.space)?;
        }
        let loaded = load_static_population(text.as_bytes(), &expected.space)?;
        if !loaded.rejects.is_empty() {
            eprintln!("census: {} rows rejected", loaded.rejects.len());
            if self.strict {
                let r = &loaded.rejects[0];
                return Err(Error::Format(format!("census line {}: {}", r.line_no, r.reason)));
            }
        }
        Ok(loaded.population)
    }

    fn transform(&self, a: &TransformArgs) -> Result<()> {
        let schemes = self.schemes()?;
        let parsed = parse_probes(File::open(&a.probes)?)?;
        if self.strict {
            if let Some(r) = parsed.rejects.first() {
                return Err(Error::Format(format!("probe line {}: {}", r.line_no, r.reason)));
            }
        }
        let mut dropped = 0;
        let mut kept = Vec::new();
        for traj in &parsed.trajectories {
            let (pieces, n) = split_at_extent(traj, &schemes.space);
            if n > 0 && self.strict {
                return Err(Error::Range(format!("trajectory {}: {n} probes outside the extent", traj.id)));
            }
            dropped += n;
            kept.extend(pieces.iter().flat_map(|p| preprocess(p, &self.cfg.preprocess)));
        }
        let counts = transform(&kept, &schemes.space, &schemes.time)?;
        pio::write_counts(create(&a.output)?, &counts)?;
        if let Some(path) = &a.rejects {
            pio::write_rejects(create(path)?, &parsed.rejects)?;
        }
        println!("trajectories: {}", parsed.trajectories.len());
        println!("segments kept: {}", kept.len());
        println!("rejected rows: {}", parsed.rejects.len());
        println!("duplicate probes: {}", parsed.duplicates);
        println!("out-of-extent probes dropped: {dropped}");
        println!("observed device-hours: {}", crate::numeric::fmt_sig9(observed_hours(&kept)));
        println!("total device-hours: {}", crate::numeric::fmt_sig9(counts.total()));
        Ok(())
    }

    fn estimate(&self, a: &EstimateArgs) -> Result<()> {
        let counts = self.load_counts(&a.counts)?;
        let schemes = Schemes { space: *counts.space(), time: *counts.time() };
        let prior = self.load_census(&a.census, &schemes)?;
        let mut est_cfg = self.cfg.estimator();
        if let Some(l) = a.lambda {
            est_cfg.lambda = l;
        }
        let est = posterior_population(&counts, &prior, &est_cfg)?;
        pio::write_estimates(create(&a.output)?, &est)?;
        println!("intervals: {}", est.intervals().count());
        Ok(())
    }

    fn correlate(&self, a: &CorrelateArgs) -> Result<()> {
        let counts = self.load_counts(&a.counts)?;
        let schemes = Schemes { space: *counts.space(), time: *counts.time() };
        let prior = self.load_census(&a.census, &schemes)?;
        let rho = per_interval_prior_correlation(&counts, &prior)?;
        pio::write_correlation(create(&a.output)?, &rho, &schemes)?;
        let undefined = rho.values().filter(|r| r.is_none()).count();
        println!("intervals: {} ({undefined} undefined)", rho.len());
        Ok(())
    }

    fn cluster(&self, a: &ClusterArgs) -> Result<()> {
        let text = fs::read_to_string(&a.estimates)?;
        let schemes = self.file_schemes(&text)?;
        let rows = pio::read_field_rows(&text)?;
        if rows.value_column != "estimated_population" {
            return Err(Error::Format(format!("expected an estimates file, found `{}`", rows.value_column)));
        }
        let rows = rows
            .rows
            .into_iter()
            .map(|(c, t, v)| t.map(|t| (c, t, v)).ok_or_else(|| Error::Format("missing interval_index".into())))
            .collect::<Result<Vec<_>>>()?;
        let series = series_from_rows(rows);
        let result = cluster_series(&series, &self.cfg.hdbscan)?;
        pio::write_clusters(create(&a.clusters)?, &result, &schemes)?;
        pio::write_envelopes(create(&a.envelopes)?, &result, &schemes)?;
        let noise = result.labels.values().filter(|&&l| l == crate::analytics::NOISE).count();
        println!(
            "cells: {} clustered, {} noise, {} constant; clusters: {}",
            result.labels.len() - noise,
            noise,
            result.excluded.len(),
            result.envelopes.len()
        );
        Ok(())
    }

    fn synth(&self, a: &SynthArgs) -> Result<()> {
        let schemes = self.schemes()?;
        let synth = &self.cfg.synth;
        let world = generate_world(synth, &schemes.space)?;
        let probes = simulate_probes(&world, &self.cfg.emission, synth.seed)?;
        let truth = true_occupancy(&world, &schemes.space, &schemes.time, synth.start_ms, synth.end_ms())?;
        pio::write_probes(create(&a.probes)?, &probes)?;
        pio::write_truth(create(&a.truth)?, &truth)?;
        if let Some(path) = &a.census {
            pio::write_census(create(path)?, &world.census()?, &schemes.time)?;
        }
        let n: usize = probes.iter().map(|t| t.probes.len()).sum();
        println!("agents: {}; sessions: {}; probes: {n}", world.agents.len(), probes.len());
        Ok(())
    }

    fn export_geojson(&self, a: &ExportArgs) -> Result<()> {
        let text = fs::read_to_string(&a.input)?;
        let schemes = self.file_schemes(&text)?;
        let rows = pio::read_field_rows(&text)?.rows;
        let intervals: std::collections::BTreeSet<Option<IntervalId>> = rows.iter().map(|r| r.1).collect();
        let wanted = match (a.interval, intervals.len()) {
            (Some(i), _) => Some(IntervalId(i)),
            (None, 0) => None,
            (None, 1) => *intervals.iter().next().expect("one interval"),
            (None, n) => return Err(Error::Config(format!("file has {n} intervals; pass --interval"))),
        };
        let cells: Vec<_> = rows
            .into_iter()
            .filter(|r| wanted.is_none() || r.1.is_none() || r.1 == wanted)
            .map(|(c, _, v)| (c, v))
            .collect();
        let doc = pio::cells_geojson(&schemes.space, &cells)?;
        let mut out = create(&a.output)?;
        serde_json::to_writer(&mut out, &doc)?;
        writeln!(out)?;
        out.flush()?;
        println!("features: {}", cells.len());
        Ok(())
    }
}
