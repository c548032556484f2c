//! Acceptance suite: one line per criterion, non-zero exit on any failure.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{Archetype, Pipeline};
use popflux::analytics::{
    cluster_envelopes, cluster_series, hdbscan, per_interval_prior_correlation, spearman, sqrt_pearson_dissimilarity,
    zscore, HdbscanParams, NOISE,
};
use popflux::estimator::{
    covered_intervals, posterior_population, posterior_population_for, power_law_estimate, spatial_coarsen_estimate,
    EstimatorConfig, PopulationField, PowerLawConfig,
};
use popflux::geo::{CellId, IntervalId, Point, Projection, SpatialScheme, TemporalScheme};
use popflux::prior::StaticPopulation;
use popflux::synth::{EmissionConfig, SynthConfig};
use popflux::transform::{coarsen_spatial, coarsen_temporal, dwell_along_path, transform, PathPoint, PseudoCountField};

type Outcome = Result<String, String>;

const EPOCH_MS: i64 = 1_554_076_800_000;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn field_dev(a: &PseudoCountField, b: &PseudoCountField) -> f64 {
    let keys: BTreeSet<(CellId, IntervalId)> = a.iter().chain(b.iter()).map(|(c, t, _)| (c, t)).collect();
    keys.into_iter().map(|(c, t)| rel(a.get(c, t), b.get(c, t))).fold(0.0, f64::max)
}

fn estimate_dev(a: &PopulationField, b: &PopulationField) -> Result<f64, String> {
    let ra: Vec<_> = a.rows().collect();
    let rb: Vec<_> = b.rows().collect();
    ensure(ra.len() == rb.len(), || format!("{} vs {} estimate rows", ra.len(), rb.len()))?;
    let mut dev: f64 = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        ensure(x.0 == y.0 && x.1 == y.1, || format!("row keys differ: {:?} vs {:?}", x, y))?;
        dev = dev.max(rel(x.3, y.3));
    }
    Ok(dev)
}

fn random_prior(rng: &mut ChaCha8Rng, space: &SpatialScheme) -> StaticPopulation {
    let values = (0..space.cell_count())
        .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(1.0..1000.0) })
        .collect();
    StaticPopulation::from_dense(*space, values).unwrap()
}

fn criterion_1() -> Outcome {
    let fine = SpatialScheme::new(Point::new(890_000.0, 5_825_000.0), 250.0, 2, 4000.0, 4000.0, Projection::new(52.52))
        .map_err(err)?;
    let mid = fine.coarser().map_err(err)?;
    let top = mid.coarser().map_err(err)?;
    let t30 = TemporalScheme::new(EPOCH_MS, 1800).map_err(err)?;
    let t60 = TemporalScheme::new(EPOCH_MS, 3600).map_err(err)?;
    let (mut p1, mut p2, mut p3, mut p4, mut p5, mut p6) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut p5_exact = true;
    let mut pairs = 0usize;
    for set in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0xacce_0001 + set);
        let trajs = common::random_trajectories(&mut rng, &fine, EPOCH_MS);
        let c_fine = transform(&trajs, &fine, &t60).map_err(err)?;
        let c_mid = transform(&trajs, &mid, &t60).map_err(err)?;
        let c_top = transform(&trajs, &top, &t60).map_err(err)?;
        let via_mid = coarsen_spatial(&c_fine).map_err(err)?;
        p1 = p1
            .max(field_dev(&via_mid, &c_mid))
            .max(field_dev(&coarsen_spatial(&c_mid).map_err(err)?, &c_top))
            .max(field_dev(&coarsen_spatial(&via_mid).map_err(err)?, &c_top));
        let c30 = transform(&trajs, &fine, &t30).map_err(err)?;
        let merged = coarsen_temporal(&c30, 2).map_err(err)?;
        p2 = p2.max(field_dev(&merged, &c_fine));

        let prior = random_prior(&mut rng, &fine);
        let prior_mid = prior.coarsen().map_err(err)?;
        let prior_top = prior_mid.coarsen().map_err(err)?;
        let cfg = EstimatorConfig::new([0.01, 0.05, 1.0][set as usize % 3]);
        let e_fine = posterior_population(&c_fine, &prior, &cfg).map_err(err)?;
        let e_mid = posterior_population(&via_mid, &prior_mid, &cfg).map_err(err)?;
        let e_top = posterior_population(&coarsen_spatial(&via_mid).map_err(err)?, &prior_top, &cfg).map_err(err)?;
        let up = spatial_coarsen_estimate(&e_fine).map_err(err)?;
        p3 = p3
            .max(estimate_dev(&up, &e_mid)?)
            .max(estimate_dev(&spatial_coarsen_estimate(&up).map_err(err)?, &e_top)?);

        // every half-hour pair inside the hourly range
        let hourly = covered_intervals(&merged);
        let halves: Vec<IntervalId> = hourly.iter().flat_map(|t| [IntervalId(2 * t.0), IntervalId(2 * t.0 + 1)]).collect();
        let e30 = posterior_population_for(&c30, &prior, &cfg, &halves).map_err(err)?;
        let e60 = posterior_population(&merged, &prior, &cfg).map_err(err)?;
        for t in e60.intervals() {
            let m = &e60.interval(t).unwrap().posterior;
            let a = &e30.interval(IntervalId(2 * t.0)).ok_or("missing half interval")?.posterior;
            let b = &e30.interval(IntervalId(2 * t.0 + 1)).ok_or("missing half interval")?.posterior;
            for s in 0..m.len() {
                let (lo, hi) = (a[s].min(b[s]), a[s].max(b[s]));
                p4 = p4.max(lo - m[s]).max(m[s] - hi);
            }
            pairs += 1;
        }

        let empty = PseudoCountField::new(fine, t60);
        let zero = posterior_population_for(&empty, &prior, &cfg, &[IntervalId(0)]).map_err(err)?;
        p5_exact &= zero.interval(IntervalId(0)).unwrap().population == prior.values();
        let strong = posterior_population(&c_fine, &prior, &EstimatorConfig::new(1e9)).map_err(err)?;
        for t in strong.intervals() {
            for (d, b) in strong.interval(t).unwrap().population.iter().zip(prior.values()) {
                p5 = p5.max((d - b).abs());
            }
        }

        let positive: Vec<IntervalId> = c_fine
            .interval_vectors(&covered_intervals(&c_fine))
            .into_iter()
            .filter(|(_, v)| v.iter().sum::<f64>() > 0.0)
            .map(|(t, _)| t)
            .collect();
        let lo = posterior_population_for(&c_fine, &prior, &EstimatorConfig::likelihood_only(), &positive).map_err(err)?;
        for t in lo.intervals() {
            let e = lo.interval(t).unwrap();
            let ratios: Vec<f64> = e.counts.iter().zip(&e.population).filter(|(c, _)| **c > 0.0).map(|(c, d)| d / c).collect();
            let (rmin, rmax) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
            p6 = p6.max((rmax - rmin) / rmax);
            ensure(e.counts.iter().zip(&e.population).all(|(c, d)| *c > 0.0 || *d == 0.0), || {
                "likelihood-only estimate is non-zero where counts are zero".into()
            })?;
        }
    }
    let detail = format!(
        "P1 {p1:.1e}, P2 {p2:.1e}, P3 {p3:.1e}, P4 overshoot {p4:.1e} over {pairs} pairs, P5 exact={p5_exact} max|d-b| {p5:.1e}, P6 {p6:.1e}"
    );
    let ok = p1 <= 1e-9 && p2 <= 1e-9 && p3 <= 1e-9 && p4 <= 1e-12 && p5_exact && p5 < 1e-3 && p6 <= 1e-12;
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Samples the polyline at every millisecond midpoint and bins by floor.
fn sampled_dwell(path: &[PathPoint], origin: Point, size: f64, interval_ms: i64) -> BTreeMap<(i64, i64, i64), f64> {
    let mut bins: BTreeMap<(i64, i64, i64), i64> = BTreeMap::new();
    let t0 = path[0].ts_ms as i64;
    let t1 = path[path.len() - 1].ts_ms as i64;
    let mut seg = 0;
    for ms in t0..t1 {
        let t = ms as f64 + 0.5;
        while path[seg + 1].ts_ms < t {
            seg += 1;
        }
        let (a, b) = (&path[seg], &path[seg + 1]);
        let f = (t - a.ts_ms) / (b.ts_ms - a.ts_ms);
        let x = a.pos.x + f * (b.pos.x - a.pos.x);
        let y = a.pos.y + f * (b.pos.y - a.pos.y);
        let key = (
            ((x - origin.x) / size).floor() as i64,
            ((y - origin.y) / size).floor() as i64,
            (ms - EPOCH_MS).div_euclid(interval_ms),
        );
        *bins.entry(key).or_insert(0) += 1;
    }
    bins.into_iter().map(|(k, v)| (k, v as f64 / 1000.0)).collect()
}

fn criterion_2() -> Outcome {
    let origin = Point::new(0.0, 0.0);
    let space = SpatialScheme::new(origin, 250.0, 0, 4000.0, 4000.0, Projection::new(0.0)).map_err(err)?;
    let time = TemporalScheme::new(EPOCH_MS, 900).map_err(err)?;
    let mut worst: f64 = 0.0;
    let mut keys = 0;
    for k in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0xacce_0200 + k);
        let mut ts = (EPOCH_MS + rng.random_range(0..3_600_000)) as f64;
        let mut p = Point::new(rng.random_range(100.0..3900.0), rng.random_range(100.0..3900.0));
        let mut path = Vec::new();
        for _ in 0..20 {
            path.push(PathPoint::new(ts, p.x, p.y));
            let dt = rng.random_range(5_000..120_000) as f64;
            let speed = rng.random_range(0.0..30.0);
            let heading: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let step = speed * dt / 1000.0;
            p = Point::new((p.x + step * heading.cos()).clamp(1.0, 3999.0), (p.y + step * heading.sin()).clamp(1.0, 3999.0));
            ts += dt;
        }
        let mut clipped: BTreeMap<(i64, i64, i64), f64> = BTreeMap::new();
        for d in dwell_along_path(&path, &space, &time).map_err(err)? {
            *clipped.entry((d.cell.ix, d.cell.iy, d.interval.0)).or_insert(0.0) += d.dwell_s;
        }
        let oracle = sampled_dwell(&path, origin, 250.0, 900_000);
        let all: BTreeSet<_> = clipped.keys().chain(oracle.keys()).copied().collect();
        for key in all {
            let a = clipped.get(&key).copied().unwrap_or(0.0);
            let b = oracle.get(&key).copied().unwrap_or(0.0);
            worst = worst.max((a - b).abs());
            keys += 1;
        }
    }
    let detail = format!("max |clip - oracle| {worst:.4} s over {keys} keys");
    if worst <= 0.5 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn two_cell_space() -> SpatialScheme {
    SpatialScheme::new(Point::new(0.0, 0.0), 1000.0, 0, 2000.0, 1000.0, Projection::new(0.0)).unwrap()
}

fn criterion_3() -> Outcome {
    let space = two_cell_space();
    let time = TemporalScheme::new(0, 3600).map_err(err)?;
    let prior = StaticPopulation::from_dense(space, vec![100.0, 300.0]).map_err(err)?;
    let mut c = PseudoCountField::new(space, time);
    c.add(CellId::new(0, 0, 0), IntervalId(0), 2.0).map_err(err)?;
    c.add(CellId::new(1, 0, 0), IntervalId(1), 2.0).map_err(err)?;
    let cfg = EstimatorConfig::new(1.0);
    let est = posterior_population(&c, &prior, &cfg).map_err(err)?;
    let merged = posterior_population(&coarsen_temporal(&c, 2).map_err(err)?, &prior, &cfg).map_err(err)?;
    let s = CellId::new(0, 0, 0);
    let got = [
        est.population(&s, IntervalId(0)).unwrap(),
        est.population(&s, IntervalId(1)).unwrap(),
        merged.population(&s, IntervalId(0)).unwrap(),
    ];
    let want = [101.4925, 99.5025, 100.4975];
    let detail = format!("{:.4} / {:.4} / {:.4}", got[0], got[1], got[2]);
    if got.iter().zip(want).all(|(g, w)| (g - w).abs() <= 1e-4) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_4() -> Outcome {
    // two coarse cells of four children each: one concentrated, one spread
    let fine = SpatialScheme::new(Point::new(0.0, 0.0), 500.0, 1, 2000.0, 1000.0, Projection::new(0.0)).map_err(err)?;
    let time = TemporalScheme::new(0, 3600).map_err(err)?;
    let mut c = PseudoCountField::new(fine, time);
    c.add(CellId::new(0, 0, 1), IntervalId(0), 4.0).map_err(err)?;
    for (ix, iy) in [(2, 0), (3, 0), (2, 1), (3, 1)] {
        c.add(CellId::new(ix, iy, 1), IntervalId(0), 1.0).map_err(err)?;
    }
    let coarse_counts = coarsen_spatial(&c).map_err(err)?;
    let violation = |beta: f64| -> Result<f64, String> {
        let cfg = PowerLawConfig { scale: 1.0, exponent: beta };
        let a = spatial_coarsen_estimate(&power_law_estimate(&c, &cfg, 1000.0).map_err(err)?).map_err(err)?;
        let b = power_law_estimate(&coarse_counts, &cfg, 1000.0).map_err(err)?;
        Ok(a.rows().zip(b.rows()).map(|(x, y)| (x.3 - y.3).abs() / y.3.abs()).fold(0.0, f64::max))
    };
    let (half, one) = (violation(0.5)?, violation(1.0)?);
    let detail = format!("beta 0.5 violates by {:.1}%, beta 1 by {:.1e}", 100.0 * half, one);
    if half > 0.10 && one <= 1e-9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn weekly_pipeline() -> Pipeline {
    common::run_pipeline(&SynthConfig::default(), &EmissionConfig::default(), &common::city_space())
}

fn criterion_5(p: &Pipeline) -> Outcome {
    let ivs = p.truth.intervals();
    let first = ivs[0].0;
    let mut lines = Vec::new();
    let mut ok = true;
    for lambda in [0.01, 0.05, 0.2] {
        let est = posterior_population_for(&p.counts, &p.census, &EstimatorConfig::new(lambda), &ivs).map_err(err)?;
        let mut min_rho: f64 = 1.0;
        let (mut wins, mut day) = (0, 0);
        for &t in &ivs {
            let d = &est.interval(t).unwrap().population;
            let truth = p.truth.interval_vector(t);
            min_rho = min_rho.min(spearman(d, &truth).map_err(err)?);
            if (9..17).contains(&(t.0 - first).rem_euclid(24)) {
                day += 1;
                let mae = |v: &[f64]| v.iter().zip(&truth).map(|(a, b)| (a - b).abs()).sum::<f64>() / v.len() as f64;
                if mae(d) < mae(p.census.values()) {
                    wins += 1;
                }
            }
        }
        ok &= min_rho >= 0.85 && wins as f64 >= 0.9 * day as f64;
        lines.push(format!("lambda {lambda}: min rho {min_rho:.3}, MAE wins {wins}/{day}"));
    }
    if ok {
        Ok(lines.join("; "))
    } else {
        Err(lines.join("; "))
    }
}

fn criterion_6(p: &Pipeline) -> Outcome {
    let rho = per_interval_prior_correlation(&p.counts, &p.census).map_err(err)?;
    let first = p.time.interval_of(p.world.start_ms).0;
    let mut parts = Vec::new();
    let mut ok = true;
    for day in 0..5 {
        let at = |h: i64| rho.get(&IntervalId(first + day * 24 + h)).copied().flatten();
        match (at(3), at(14)) {
            (Some(night), Some(noon)) => {
                ok &= noon > night;
                parts.push(format!("{night:.2}<{noon:.2}"));
            }
            other => {
                ok = false;
                parts.push(format!("undefined {other:?}"));
            }
        }
    }
    let detail = format!("weekday 03h<14h: {}", parts.join(" "));
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce_0700);
    let hours = 168;
    let mut series = common::archetype_series(&mut rng, Archetype::Residential, 200, hours, 0);
    series.extend(common::archetype_series(&mut rng, Archetype::Road, 200, hours, 200));
    series.extend(common::archetype_series(&mut rng, Archetype::Noise, 40, hours, 400));
    let truth = |ix: i64| match ix {
        0..200 => Archetype::Residential,
        200..400 => Archetype::Road,
        _ => Archetype::Noise,
    };
    let result = cluster_series(&series, &HdbscanParams::default()).map_err(err)?;
    let clusters: BTreeSet<i64> = result.labels.values().copied().filter(|&l| l != NOISE).collect();
    let mut votes: BTreeMap<(i64, Archetype), usize> = BTreeMap::new();
    for (c, &l) in &result.labels {
        *votes.entry((l, truth(c.ix))).or_insert(0) += 1;
    }
    let owner = |kind: Archetype| {
        clusters.iter().copied().max_by_key(|&l| votes.get(&(l, kind)).copied().unwrap_or(0))
    };
    let (res, road) = (owner(Archetype::Residential), owner(Archetype::Road));
    let correct = result
        .labels
        .iter()
        .filter(|(c, &l)| match truth(c.ix) {
            Archetype::Residential => Some(l) == res,
            Archetype::Road => Some(l) == road,
            Archetype::Noise => false,
        })
        .count();
    let noise_ok = result.labels.iter().filter(|(c, &l)| truth(c.ix) == Archetype::Noise && l == NOISE).count();
    let accuracy = correct as f64 / 400.0;

    let (matrix, reference) = common::hdbscan_fixture();
    let ours = hdbscan(&matrix, &HdbscanParams::default()).map_err(err)?;
    let fixture_ok = common::same_partition(&ours, &reference);

    let detail = format!(
        "{} clusters, {:.1}% members correct, {noise_ok}/40 noise series as noise, reference fixture partition {}",
        clusters.len(),
        100.0 * accuracy,
        if fixture_ok { "identical" } else { "differs" }
    );
    if clusters.len() == 2 && res != road && accuracy >= 0.95 && fixture_ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let tied = rng.random_bool(0.5);
    let scale = 10f64.powi(rng.random_range(-3..4));
    let shift = rng.random_range(-1000.0..1000.0);
    (0..n)
        .map(|_| if tied { rng.random_range(0..5) as f64 } else { shift + scale * common::gaussian(rng) })
        .collect()
}

fn non_constant(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v = random_vector(rng, n);
        if v.iter().any(|x| *x != v[0]) {
            return v;
        }
    }
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce_0800);
    let (mut sp, mut zs, mut dp, mut env) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..1000 {
        let n = rng.random_range(2..40);
        let (x, y) = (non_constant(&mut rng, n), non_constant(&mut rng, n));
        sp = sp.max((spearman(&x, &y).map_err(err)? - common::brute_spearman(&x, &y)).abs());
    }
    for _ in 0..1000 {
        let n = rng.random_range(2..60);
        let v = non_constant(&mut rng, n);
        let m = v.iter().sum::<f64>() / n as f64;
        let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64).sqrt();
        for (z, x) in zscore(&v).map_err(err)?.iter().zip(&v) {
            zs = zs.max((z - (x - m) / sd).abs());
        }
    }
    for _ in 0..1000 {
        let n = rng.random_range(2..40);
        let (x, y) = (non_constant(&mut rng, n), non_constant(&mut rng, n));
        let want = (1.0 - common::brute_pearson(&x, &y)).max(0.0).sqrt();
        dp = dp.max((sqrt_pearson_dissimilarity(&x, &y).map_err(err)? - want).abs());
    }
    for _ in 0..1000 {
        let members = rng.random_range(1..30);
        let len = rng.random_range(1..10);
        let labels: Vec<i64> = (0..members).map(|_| rng.random_range(-1..3)).collect();
        let series: Vec<Vec<f64>> = (0..members).map(|_| random_vector(&mut rng, len)).collect();
        let got = cluster_envelopes(&labels, &series).map_err(err)?;
        for (l, e) in &got {
            for (t, point) in e.iter().enumerate() {
                let col: Vec<f64> = labels.iter().zip(&series).filter(|(m, _)| *m == l).map(|(_, s)| s[t]).collect();
                for (q, v) in [(0.5, point.median), (0.1, point.p10), (0.9, point.p90)] {
                    env = env.max((v - common::brute_percentile(&col, q)).abs());
                }
            }
        }
    }
    let detail = format!("max abs error: spearman {sp:.1e}, zscore {zs:.1e}, sqrt_pearson {dp:.1e}, envelopes {env:.1e}");
    if sp.max(zs).max(dp).max(env) <= 1e-9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

const CLI_CONFIG: &str = "n_agents = 300\nsynth_days = 2\nseed = 7\nmin_cluster_size = 5\n";
const CLI_OUTPUTS: [&str; 9] =
    ["probes.csv", "truth.csv", "census.csv", "counts.csv", "estimates.csv", "rho.csv", "clusters.csv", "envelopes.csv", "cells.geojson"];

fn cli_run(dir: &Path, threads: usize) -> Result<Vec<Vec<u8>>, String> {
    let cfg = dir.join("run.cfg");
    std::fs::write(&cfg, CLI_CONFIG).map_err(err)?;
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let steps: [Vec<String>; 6] = [
        vec!["synth".into(), "--probes".into(), p("probes.csv"), "--truth".into(), p("truth.csv"), "--census".into(), p("census.csv")],
        vec!["transform".into(), "--probes".into(), p("probes.csv"), "--output".into(), p("counts.csv")],
        vec!["estimate".into(), "--counts".into(), p("counts.csv"), "--census".into(), p("census.csv"), "--output".into(), p("estimates.csv")],
        vec!["correlate".into(), "--counts".into(), p("counts.csv"), "--census".into(), p("census.csv"), "--output".into(), p("rho.csv")],
        vec!["cluster".into(), "--estimates".into(), p("estimates.csv"), "--clusters".into(), p("clusters.csv"), "--envelopes".into(), p("envelopes.csv")],
        vec!["export-geojson".into(), "--input".into(), p("estimates.csv"), "--interval".into(), "12".into(), "--output".into(), p("cells.geojson")],
    ];
    for step in steps {
        let mut args = vec!["popflux".to_string(), "--config".into(), p("run.cfg"), "--threads".into(), threads.to_string()];
        let name = step[0].clone();
        args.extend(step);
        let code = popflux::cli::run(args);
        ensure(code == 0, || format!("`{name}` exited with {code}"))?;
    }
    CLI_OUTPUTS.iter().map(|f| std::fs::read(dir.join(f)).map_err(err)).collect()
}

fn json_close(a: &serde_json::Value, b: &serde_json::Value) -> bool {
    use serde_json::Value;
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => rel_close(x.as_f64().unwrap(), y.as_f64().unwrap()),
        (Value::Array(x), Value::Array(y)) => x.len() == y.len() && x.iter().zip(y).all(|(p, q)| json_close(p, q)),
        (Value::Object(x), Value::Object(y)) => {
            x.len() == y.len() && x.iter().all(|(k, v)| y.get(k).is_some_and(|w| json_close(v, w)))
        }
        _ => a == b,
    }
}

fn rel_close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-9 * a.abs().max(b.abs())
}

fn csv_close(a: &[u8], b: &[u8]) -> bool {
    let (a, b) = (String::from_utf8_lossy(a), String::from_utf8_lossy(b));
    let (la, lb): (Vec<&str>, Vec<&str>) = (a.lines().collect(), b.lines().collect());
    la.len() == lb.len()
        && la.iter().zip(&lb).all(|(x, y)| {
            let (fx, fy): (Vec<&str>, Vec<&str>) = (x.split(',').collect(), y.split(',').collect());
            fx.len() == fy.len()
                && fx.iter().zip(&fy).all(|(p, q)| match (p.parse::<f64>(), q.parse::<f64>()) {
                    (Ok(u), Ok(v)) => rel_close(u, v),
                    _ => p == q,
                })
        })
}

fn criterion_9() -> Outcome {
    let dirs: Vec<tempfile::TempDir> = (0..3).map(|_| tempfile::tempdir()).collect::<Result<_, _>>().map_err(err)?;
    let first = cli_run(dirs[0].path(), 1)?;
    let second = cli_run(dirs[1].path(), 1)?;
    let eight = cli_run(dirs[2].path(), 8)?;
    let differing: Vec<&str> = CLI_OUTPUTS.iter().zip(first.iter().zip(&second)).filter(|(_, (a, b))| a != b).map(|(n, _)| *n).collect();
    ensure(differing.is_empty(), || format!("repeat run differs in {differing:?}"))?;
    let mut identical = 0;
    for ((name, a), b) in CLI_OUTPUTS.iter().zip(&first).zip(&eight) {
        if a == b {
            identical += 1;
            continue;
        }
        let close = if name.ends_with(".geojson") {
            let (x, y): (serde_json::Value, serde_json::Value) =
                (serde_json::from_slice(a).map_err(err)?, serde_json::from_slice(b).map_err(err)?);
            json_close(&x, &y)
        } else {
            csv_close(a, b)
        };
        ensure(close, || format!("{name} differs between 1 and 8 threads beyond 1e-9"))?;
    }
    let bytes: usize = first.iter().map(Vec::len).sum();
    Ok(format!("{} files, {bytes} bytes identical across repeats; {identical}/{} byte-identical at 8 threads", first.len(), first.len()))
}

fn main() {
    let mut failed = Vec::new();
    let mut record = |id: u32, budget: Option<u64>, start: Instant, outcome: Outcome| {
        let secs = start.elapsed().as_secs_f64();
        let over = budget.is_some_and(|b| start.elapsed() > Duration::from_secs(b));
        let (pass, detail) = match outcome {
            Ok(d) if !over => (true, d),
            Ok(d) => (false, format!("{d}; over the {}s budget", budget.unwrap())),
            Err(d) => (false, d),
        };
        println!("[{}] criterion {id}: {detail} ({secs:.2}s)", if pass { "PASS" } else { "FAIL" });
        if !pass {
            failed.push(id);
        }
    };

    let t = Instant::now();
    record(1, Some(10), t, criterion_1());
    let t = Instant::now();
    record(2, Some(10), t, criterion_2());
    let t = Instant::now();
    record(3, None, t, criterion_3());
    let t = Instant::now();
    record(4, None, t, criterion_4());
    let t = Instant::now();
    let pipeline = weekly_pipeline();
    record(5, Some(60), t, criterion_5(&pipeline));
    let t = Instant::now();
    record(6, None, t, criterion_6(&pipeline));
    let t = Instant::now();
    record(7, None, t, criterion_7());
    let t = Instant::now();
    record(8, None, t, criterion_8());
    let t = Instant::now();
    record(9, None, t, criterion_9());

    if failed.is_empty() {
        println!("acceptance: all 9 criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
