//! Shared fixtures and brute-force oracles for the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use popflux::analytics::{CellTimeSeries, DistanceMatrix, NOISE};
use popflux::geo::{CellId, IntervalId, Point, Projection, SpatialScheme, TemporalScheme};
use popflux::ingest::{preprocess, PreprocessConfig, Probe, Trajectory};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use popflux::prior::StaticPopulation;
use popflux::synth::{generate_world, simulate_probes, true_occupancy, EmissionConfig, GroundTruthField, SynthConfig, World};
use popflux::transform::{transform, PseudoCountField};

/// 20 km x 20 km city with 1 km cells.
pub fn city_space() -> SpatialScheme {
    SpatialScheme::new(Point::new(890_000.0, 5_825_000.0), 1000.0, 0, 20_000.0, 20_000.0, Projection::new(52.52)).unwrap()
}

pub struct Pipeline {
    pub world: World,
    pub time: TemporalScheme,
    pub census: StaticPopulation,
    pub counts: PseudoCountField,
    pub truth: GroundTruthField,
    pub trajectories: Vec<Trajectory>,
}

pub fn run_pipeline(cfg: &SynthConfig, emission: &EmissionConfig, space: &SpatialScheme) -> Pipeline {
    let time = TemporalScheme::new(cfg.start_ms, 3600).unwrap();
    let world = generate_world(cfg, space).unwrap();
    let raw = simulate_probes(&world, emission, cfg.seed).unwrap();
    let pre = PreprocessConfig::default();
    let trajectories: Vec<Trajectory> = raw.iter().flat_map(|t| preprocess(t, &pre)).collect();
    let counts = transform(&trajectories, space, &time).unwrap();
    let truth = true_occupancy(&world, space, &time, world.start_ms, world.end_ms).unwrap();
    let census = world.census().unwrap();
    Pipeline { world, time, census, counts, truth, trajectories }
}

/// Average ranks by exhaustive comparison.
pub fn brute_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|x| {
            let below = v.iter().filter(|y| *y < x).count() as f64;
            let equal = v.iter().filter(|y| *y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

/// Textbook Pearson with two-pass means.
pub fn brute_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

pub fn brute_spearman(x: &[f64], y: &[f64]) -> f64 {
    brute_pearson(&brute_ranks(x), &brute_ranks(y))
}

/// Percentile by sorting and interpolating between closest ranks.
pub fn brute_percentile(values: &[f64], q: f64) -> f64 {
    let mut s = values.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = (s.len() - 1) as f64 * q;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    s[lo] * (1.0 - (h - lo as f64)) + s[hi] * (h - lo as f64)
}

/// Random probe sequences inside `space`: 1 to 8 trajectories of 2 to 25
/// probes, steps of 1 to 300 s, starting within four hours of `epoch_ms`.
pub fn random_trajectories(rng: &mut ChaCha8Rng, space: &SpatialScheme, epoch_ms: i64) -> Vec<Trajectory> {
    let e = space.extent();
    let n = rng.random_range(1..=8);
    (0..n)
        .map(|i| {
            let mut ts = epoch_ms + rng.random_range(0..4 * 3_600_000);
            let len = rng.random_range(2..=25);
            let probes = (0..len)
                .map(|_| {
                    ts += rng.random_range(1_000..=300_000);
                    let p = Point::new(rng.random_range(e.min_x + 1.0..e.max_x - 1.0), rng.random_range(e.min_y + 1.0..e.max_y - 1.0));
                    let (lon, lat) = space.projection.unproject(&p);
                    Probe::new(ts, lon, lat)
                })
                .collect();
            Trajectory::new(format!("t{i}"), probes).unwrap()
        })
        .collect()
}

pub fn data_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

/// The 100-point matrix and the labels scikit-learn assigned to it.
pub fn hdbscan_fixture() -> (DistanceMatrix, Vec<i64>) {
    let text = std::fs::read_to_string(data_path("hdbscan_matrix.csv")).unwrap();
    let data: Vec<f64> = text.lines().flat_map(|l| l.split(',').map(|v| v.trim().parse::<f64>().unwrap())).collect();
    let n = text.lines().count();
    let labels = std::fs::read_to_string(data_path("hdbscan_labels.csv"))
        .unwrap()
        .lines()
        .map(|l| l.trim().parse().unwrap())
        .collect();
    (DistanceMatrix::new(n, data).unwrap(), labels)
}

/// True when both labelings induce the same partition and agree on noise.
pub fn same_partition(a: &[i64], b: &[i64]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut fwd = BTreeMap::new();
    let mut back = BTreeMap::new();
    a.iter().zip(b).all(|(&x, &y)| {
        if (x == NOISE) != (y == NOISE) {
            return false;
        }
        *fwd.entry(x).or_insert(y) == y && *back.entry(y).or_insert(x) == x
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Archetype {
    Residential,
    Road,
    Noise,
}

fn bump(h: f64, center: f64, width: f64) -> f64 {
    (-((h - center) / width).powi(2)).exp()
}

/// Noiseless weekly shape starting Monday 00:00, hourly.
pub fn archetype_shape(kind: Archetype, hours: usize) -> Vec<f64> {
    (0..hours)
        .map(|t| {
            let h = (t % 24) as f64;
            let weekend = (t / 24) % 7 >= 5;
            match (kind, weekend) {
                (Archetype::Residential, false) => 1.0 - 0.7 * bump(h, 13.0, 4.0),
                (Archetype::Residential, true) => 1.0 - 0.4 * bump(h, 14.0, 3.0),
                (Archetype::Road, false) => bump(h, 8.0, 1.2) + bump(h, 17.5, 1.5) + 0.1,
                (Archetype::Road, true) => 0.6 * bump(h, 14.0, 3.0) + 0.1,
                (Archetype::Noise, _) => 0.0,
            }
        })
        .collect()
}

/// `count` series of one archetype with random gain, offset and Gaussian
/// noise; noise archetypes are pure white noise.
pub fn archetype_series(rng: &mut ChaCha8Rng, kind: Archetype, count: usize, hours: usize, first_ix: i64) -> Vec<CellTimeSeries> {
    let shape = archetype_shape(kind, hours);
    (0..count)
        .map(|i| {
            let gain = rng.random_range(0.5..2.0);
            let offset = rng.random_range(0.0..10.0);
            let values = shape
                .iter()
                .map(|s| {
                    let z = gaussian(rng);
                    match kind {
                        Archetype::Noise => z,
                        _ => offset + gain * (s + 0.08 * z),
                    }
                })
                .collect();
            CellTimeSeries { cell: CellId::new(first_ix + i as i64, 0, 0), start: IntervalId(0), values }
        })
        .collect()
}

/// Standard normal by Box-Muller.
pub fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
