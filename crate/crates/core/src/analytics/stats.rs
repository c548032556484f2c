//! Rank correlation, z-scores, dissimilarities and percentiles.

use crate::error::{Error, Result};

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::input(format!("length mismatch: {} vs {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::input("need at least two observations"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::input("non-finite observation"));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && v[order[j]] == v[order[i]] {
            j += 1;
        }
        // positions i..j hold ranks i+1..=j
        let avg = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("constant input".into()));
    }
    // the joint root is exact for sxx == syy, keeping perfect correlations at ±1
    let prod = sxx * syy;
    let norm = if prod.is_normal() { prod.sqrt() } else { sxx.sqrt() * syy.sqrt() };
    Ok((sxy / norm).clamp(-1.0, 1.0))
}

/// Spearman's ρ: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Standard scores using the population standard deviation.
pub fn zscore(v: &[f64]) -> Result<Vec<f64>> {
    if v.len() < 2 {
        return Err(Error::input("z-score needs at least two values"));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::input("non-finite value in series"));
    }
    let m = mean(v);
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64;
    let sd = var.sqrt();
    // relative guard so rounding noise on a constant series is not amplified
    if sd == 0.0 || sd <= 1e-14 * m.abs() {
        return Err(Error::ConstantSeries(None));
    }
    Ok(v.iter().map(|x| (x - m) / sd).collect())
}

/// `sqrt(1 - ρ)` with ρ the Pearson correlation.
pub fn sqrt_pearson_dissimilarity(x: &[f64], y: &[f64]) -> Result<f64> {
    Ok((1.0 - pearson(x, y)?).max(0.0).sqrt())
}

/// Percentile `q ∈ [0, 1]` of sorted data, linear between closest ranks.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}
