//! Dirichlet-categorical population estimator and the power-law baseline.
//!
//! Within one interval `t` the prior concentration of cell `s` is
//! `λ·b(s)·|t|` (|t| in hours). Adding the observed pseudo-counts gives the
//! posterior concentration; its normalized mean is the probability of
//! observing a device in `s`, and the population estimate is that
//! probability times the total static population `N`.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geo::{CellId, IntervalId, SpatialScheme, TemporalScheme};
use crate::numeric::compensated_sum;
use crate::prior::StaticPopulation;
use crate::transform::PseudoCountField;

/// Default prior weight, device-hours per person-hour.
pub const DEFAULT_LAMBDA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    pub lambda: f64,
    /// Permits `lambda == 0`, i.e. pseudo-counts alone.
    pub likelihood_only: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig::new(DEFAULT_LAMBDA)
    }
}

impl EstimatorConfig {
    pub fn new(lambda: f64) -> Self {
        EstimatorConfig { lambda, likelihood_only: false }
    }

    pub fn likelihood_only() -> Self {
        EstimatorConfig { lambda: 0.0, likelihood_only: true }
    }

    pub fn validate(&self) -> Result<()> {
        if self.likelihood_only {
            if self.lambda != 0.0 {
                return Err(Error::config("likelihood-only estimation requires lambda = 0"));
            }
            return Ok(());
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::config(format!(
                "lambda must be > 0 (use the likelihood-only flag for 0), got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Dense estimates for one interval, indexed like the scheme's cells.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalEstimate {
    pub counts: Vec<f64>,
    pub posterior: Vec<f64>,
    pub population: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationField {
    space: SpatialScheme,
    time: TemporalScheme,
    total: f64,
    intervals: BTreeMap<IntervalId, IntervalEstimate>,
}

impl PopulationField {
    pub fn new(space: SpatialScheme, time: TemporalScheme, total: f64) -> Self {
        PopulationField {
            space,
            time,
            total,
            intervals: BTreeMap::new(),
        }
    }

    pub fn space(&self) -> &SpatialScheme {
        &self.space
    }

    pub fn time(&self) -> &TemporalScheme {
        &self.time
    }

    /// Total population N the estimates are normalized to.
    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn intervals(&self) -> impl Iterator<Item = IntervalId> + '_ {
        self.intervals.keys().copied()
    }

    pub fn interval(&self, t: IntervalId) -> Option<&IntervalEstimate> {
        self.intervals.get(&t)
    }

    pub fn insert(&mut self, t: IntervalId, est: IntervalEstimate) -> Result<()> {
        let n = self.space.cell_count();
        if est.counts.len() != n || est.posterior.len() != n || est.population.len() != n {
            return Err(Error::input(format!("interval estimate must have {n} cells")));
        }
        self.intervals.insert(t, est);
        Ok(())
    }

    pub fn population(&self, cell: &CellId, t: IntervalId) -> Option<f64> {
        let i = self.space.cell_index(cell)?;
        self.intervals.get(&t).map(|e| e.population[i])
    }

    pub fn posterior(&self, cell: &CellId, t: IntervalId) -> Option<f64> {
        let i = self.space.cell_index(cell)?;
        self.intervals.get(&t).map(|e| e.posterior[i])
    }

    /// Rows `(cell, interval, pseudo_count, population)` ordered by interval then cell.
    pub fn rows(&self) -> impl Iterator<Item = (CellId, IntervalId, f64, f64)> + '_ {
        self.intervals.iter().flat_map(move |(&t, e)| {
            (0..self.space.cell_count())
                .map(move |i| (self.space.cell_at(i), t, e.counts[i], e.population[i]))
        })
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }
}

/// Contiguous interval range spanning every interval present in `counts`.
pub fn covered_intervals(counts: &PseudoCountField) -> Vec<IntervalId> {
    let present = counts.intervals();
    match (present.first(), present.last()) {
        (Some(a), Some(b)) => (a.0..=b.0).map(IntervalId).collect(),
        _ => Vec::new(),
    }
}

/// Posterior mean population for every interval between the first and last
/// interval present in `counts` (gaps get prior-only estimates).
pub fn posterior_population(
    counts: &PseudoCountField,
    prior: &StaticPopulation,
    cfg: &EstimatorConfig,
) -> Result<PopulationField> {
    posterior_population_for(counts, prior, cfg, &covered_intervals(counts))
}

/// Posterior mean population for an explicit list of intervals.
pub fn posterior_population_for(
    counts: &PseudoCountField,
    prior: &StaticPopulation,
    cfg: &EstimatorConfig,
    intervals: &[IntervalId],
) -> Result<PopulationField> {
    cfg.validate()?;
    counts.space().ensure_same(prior.scheme())?;
    let total = prior.total();
    if !(total > 0.0) {
        return Err(Error::Model(format!("total static population must be > 0, got {total}")));
    }
    let hours = counts.time().interval_hours();
    let b = prior.values();
    let vectors = counts.interval_vectors(intervals);
    let estimates = vectors
        .into_par_iter()
        .map(|(t, c)| estimate_interval(t, c, b, total, cfg.lambda, hours).map(|e| (t, e)))
        .collect::<Result<Vec<_>>>()?;
    let mut field = PopulationField::new(*counts.space(), *counts.time(), total);
    field.intervals.extend(estimates);
    Ok(field)
}

fn estimate_interval(
    t: IntervalId,
    counts: Vec<f64>,
    prior: &[f64],
    total: f64,
    lambda: f64,
    hours: f64,
) -> Result<IntervalEstimate> {
    let observed = compensated_sum(counts.iter().copied());
    if observed == 0.0 {
        if lambda == 0.0 {
            return Err(Error::UndefinedPosterior(t));
        }
        // prior concentrations alone normalize to b / N
        let posterior = prior.iter().map(|b| b / total).collect();
        return Ok(IntervalEstimate {
            counts,
            posterior,
            population: prior.to_vec(),
        });
    }
    let scale = lambda * hours;
    let alpha_hat: Vec<f64> = prior
        .iter()
        .zip(&counts)
        .map(|(b, c)| scale * b + c)
        .collect();
    let denom = compensated_sum(alpha_hat.iter().copied());
    let posterior: Vec<f64> = alpha_hat.iter().map(|a| a / denom).collect();
    let population = posterior.iter().map(|p| total * p).collect();
    Ok(IntervalEstimate {
        counts,
        posterior,
        population,
    })
}

/// Parent estimates as sums of their four children.
pub fn spatial_coarsen_estimate(field: &PopulationField) -> Result<PopulationField> {
    let coarse = field.space.coarser()?;
    let n = coarse.cell_count();
    let parent_index: Vec<usize> = (0..field.space.cell_count())
        .map(|i| {
            let parent = field.space.cell_at(i).parent()?;
            coarse
                .cell_index(&parent)
                .ok_or_else(|| Error::range(format!("parent {parent} outside the coarse scheme")))
        })
        .collect::<Result<_>>()?;
    let mut out = PopulationField::new(coarse, field.time, field.total);
    for (&t, e) in &field.intervals {
        let mut agg = IntervalEstimate {
            counts: vec![0.0; n],
            posterior: vec![0.0; n],
            population: vec![0.0; n],
        };
        for (i, &p) in parent_index.iter().enumerate() {
            agg.counts[p] += e.counts[i];
            agg.posterior[p] += e.posterior[i];
            agg.population[p] += e.population[i];
        }
        out.intervals.insert(t, agg);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawConfig {
    pub scale: f64,
    pub exponent: f64,
}

impl PowerLawConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite() && self.exponent > 0.0 && self.exponent.is_finite()) {
            return Err(Error::config("power-law scale and exponent must be > 0"));
        }
        Ok(())
    }
}

/// Unnormalized power-law values `a·c^β` per key.
pub fn power_law_raw(counts: &PseudoCountField, cfg: &PowerLawConfig) -> Result<PseudoCountField> {
    cfg.validate()?;
    let mut out = PseudoCountField::new(*counts.space(), *counts.time());
    for (c, t, v) in counts.iter() {
        out.add(c, t, cfg.scale * v.powf(cfg.exponent))?;
    }
    Ok(out)
}

/// Power-law baseline renormalized per interval to total `total`.
///
/// Intervals whose raw mass is zero come out as all zeros.
pub fn power_law_estimate(
    counts: &PseudoCountField,
    cfg: &PowerLawConfig,
    total: f64,
) -> Result<PopulationField> {
    let raw = power_law_raw(counts, cfg)?;
    let intervals = covered_intervals(counts);
    let mut field = PopulationField::new(*counts.space(), *counts.time(), total);
    let count_vectors = counts.interval_vectors(&intervals);
    for (t, r) in raw.interval_vectors(&intervals) {
        let mass = compensated_sum(r.iter().copied());
        let posterior: Vec<f64> = if mass > 0.0 {
            r.iter().map(|v| v / mass).collect()
        } else {
            vec![0.0; r.len()]
        };
        let population = posterior.iter().map(|p| total * p).collect();
        field.intervals.insert(
            t,
            IntervalEstimate {
                counts: count_vectors[&t].clone(),
                posterior,
                population,
            },
        );
    }
    Ok(field)
}
