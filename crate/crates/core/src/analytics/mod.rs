//! Correlation against the prior, z-scored cell series, clustering and
//! per-cluster percentile envelopes.

pub mod hdbscan;
pub mod stats;

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimator::{covered_intervals, PopulationField};
use crate::geo::{CellId, IntervalId};
use crate::prior::StaticPopulation;
use crate::transform::PseudoCountField;

pub use hdbscan::{hdbscan, DistanceMatrix, HdbscanParams, NOISE};
pub use stats::{average_ranks, pearson, percentile_sorted, spearman, sqrt_pearson_dissimilarity, zscore};

/// One value per interval from `start`, without holes.
#[derive(Debug, Clone, PartialEq)]
pub struct CellTimeSeries {
    pub cell: CellId,
    pub start: IntervalId,
    pub values: Vec<f64>,
}

/// Groups `(cell, interval, value)` rows into per-cell series over the
/// common interval range; missing keys become zeros.
pub fn series_from_rows<I>(rows: I) -> Vec<CellTimeSeries>
where
    I: IntoIterator<Item = (CellId, IntervalId, f64)>,
{
    let mut by_cell: BTreeMap<CellId, BTreeMap<IntervalId, f64>> = BTreeMap::new();
    let mut range: Option<(i64, i64)> = None;
    for (c, t, v) in rows {
        *by_cell.entry(c).or_default().entry(t).or_insert(0.0) += v;
        range = Some(match range {
            None => (t.0, t.0),
            Some((lo, hi)) => (lo.min(t.0), hi.max(t.0)),
        });
    }
    let Some((lo, hi)) = range else {
        return Vec::new();
    };
    by_cell
        .into_iter()
        .map(|(cell, vals)| CellTimeSeries {
            cell,
            start: IntervalId(lo),
            values: (lo..=hi).map(|t| vals.get(&IntervalId(t)).copied().unwrap_or(0.0)).collect(),
        })
        .collect()
}

/// Estimated population series for every cell of the field's scheme.
pub fn population_series(field: &PopulationField) -> Vec<CellTimeSeries> {
    series_from_rows(field.rows().map(|(c, t, _, d)| (c, t, d)))
}

pub fn zscore_series(series: &CellTimeSeries) -> Result<CellTimeSeries> {
    let values = zscore(&series.values).map_err(|e| match e {
        Error::ConstantSeries(None) => Error::ConstantSeries(Some(series.cell)),
        other => other,
    })?;
    Ok(CellTimeSeries { values, ..*series })
}

/// Spearman ρ between the pseudo-counts of each interval and the prior,
/// over every cell of the scheme. `None` flags an undefined correlation.
pub fn per_interval_prior_correlation(
    field: &PseudoCountField,
    prior: &StaticPopulation,
) -> Result<BTreeMap<IntervalId, Option<f64>>> {
    field.space().ensure_same(prior.scheme())?;
    if prior.values().len() < 2 {
        return Err(Error::input("correlation needs at least two cells"));
    }
    let intervals = covered_intervals(field);
    field
        .interval_vectors(&intervals)
        .into_par_iter()
        .map(|(t, c)| match spearman(&c, prior.values()) {
            Ok(rho) => Ok((t, Some(rho))),
            Err(Error::UndefinedCorrelation(_)) => Ok((t, None)),
            Err(e) => Err(e),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    pub median: f64,
    pub p10: f64,
    pub p90: f64,
}

/// Pointwise median and 10th/90th percentiles per cluster, noise excluded.
pub fn cluster_envelopes(labels: &[i64], series: &[Vec<f64>]) -> Result<BTreeMap<i64, Vec<Envelope>>> {
    if labels.len() != series.len() {
        return Err(Error::input(format!("{} labels for {} series", labels.len(), series.len())));
    }
    let len = series.first().map_or(0, Vec::len);
    if series.iter().any(|s| s.len() != len) {
        return Err(Error::input("series have different lengths"));
    }
    let mut members: BTreeMap<i64, Vec<&[f64]>> = BTreeMap::new();
    for (&l, s) in labels.iter().zip(series) {
        if l != NOISE {
            members.entry(l).or_default().push(s);
        }
    }
    Ok(members
        .into_iter()
        .map(|(l, group)| {
            let env = (0..len)
                .map(|t| {
                    let mut col: Vec<f64> = group.iter().map(|s| s[t]).collect();
                    col.sort_by(f64::total_cmp);
                    Envelope {
                        median: percentile_sorted(&col, 0.5),
                        p10: percentile_sorted(&col, 0.1),
                        p90: percentile_sorted(&col, 0.9),
                    }
                })
                .collect();
            (l, env)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    pub start: IntervalId,
    /// Clustered cells, including noise (-1).
    pub labels: BTreeMap<CellId, i64>,
    /// Cells left out because their series is constant.
    pub excluded: Vec<CellId>,
    pub envelopes: BTreeMap<i64, Vec<Envelope>>,
}

/// Dissimilarity matrix `sqrt(1 - ρ)` between z-scored series of equal length.
pub fn zscore_dissimilarity(zscored: &[Vec<f64>]) -> Result<DistanceMatrix> {
    let len = zscored.first().map_or(0, Vec::len) as f64;
    DistanceMatrix::from_fn(zscored.len(), |i, j| {
        // population σ = 1, so ρ is the mean product
        let rho = zscored[i].iter().zip(&zscored[j]).map(|(a, b)| a * b).sum::<f64>() / len;
        (1.0 - rho.clamp(-1.0, 1.0)).max(0.0).sqrt()
    })
}

/// Z-scores every series, clusters the non-constant ones and summarizes
/// each cluster by its percentile envelope.
pub fn cluster_series(series: &[CellTimeSeries], params: &HdbscanParams) -> Result<ClusterResult> {
    params.validate()?;
    let start = series.first().map_or(IntervalId(0), |s| s.start);
    let len = series.first().map_or(0, |s| s.values.len());
    if series.iter().any(|s| s.start != start || s.values.len() != len) {
        return Err(Error::input("series must share one interval range"));
    }
    let scored: Vec<Result<CellTimeSeries>> = series.par_iter().map(zscore_series).collect();
    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    for (s, z) in series.iter().zip(scored) {
        match z {
            Ok(z) => kept.push(z),
            Err(Error::ConstantSeries(_)) => excluded.push(s.cell),
            Err(e) => return Err(e),
        }
    }
    let values: Vec<Vec<f64>> = kept.iter().map(|s| s.values.clone()).collect();
    let matrix = zscore_dissimilarity(&values)?;
    let labels = hdbscan(&matrix, params)?;
    let envelopes = cluster_envelopes(&labels, &values)?;
    Ok(ClusterResult {
        start,
        labels: kept.iter().map(|s| s.cell).zip(labels).collect(),
        excluded,
        envelopes,
    })
}
