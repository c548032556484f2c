mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::Archetype;
use popflux::analytics::{
    cluster_envelopes, cluster_series, hdbscan, spearman, sqrt_pearson_dissimilarity, zscore, DistanceMatrix,
    HdbscanParams, NOISE,
};

#[test]
fn hdbscan_matches_reference_fixture() {
    let (matrix, reference) = common::hdbscan_fixture();
    let ours = hdbscan(&matrix, &HdbscanParams::default()).unwrap();
    assert!(common::same_partition(&ours, &reference), "ours {ours:?}\nreference {reference:?}");
}

#[test]
fn hdbscan_ignores_point_order_up_to_relabeling() {
    let (matrix, _) = common::hdbscan_fixture();
    let n = matrix.len();
    let perm: Vec<usize> = (0..n).rev().collect();
    let shuffled = DistanceMatrix::from_fn(n, |i, j| matrix.get(perm[i], perm[j])).unwrap();
    let a = hdbscan(&matrix, &HdbscanParams::default()).unwrap();
    let b = hdbscan(&shuffled, &HdbscanParams::default()).unwrap();
    let b_back: Vec<i64> = (0..n).map(|i| b[n - 1 - i]).collect();
    assert!(common::same_partition(&a, &b_back));
}

#[test]
fn archetypes_separate() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut series = common::archetype_series(&mut rng, Archetype::Residential, 60, 168, 0);
    series.extend(common::archetype_series(&mut rng, Archetype::Road, 60, 168, 60));
    let r = cluster_series(&series, &HdbscanParams::default()).unwrap();
    let res = r.labels[&series[0].cell];
    let road = r.labels[&series[60].cell];
    assert!(res != NOISE && road != NOISE && res != road);
    assert_eq!(r.envelopes.len(), 2);
    // the residential median dips around midday on weekdays
    let env = &r.envelopes[&res];
    assert!(env[13].median < env[3].median);
}

#[test]
fn perfect_correlation_gives_zero_dissimilarity() {
    let x = [1.0, 2.0, 4.0];
    let y = [3.0, 5.0, 9.0];
    assert_eq!(sqrt_pearson_dissimilarity(&x, &y).unwrap(), 0.0);
    let neg: Vec<f64> = y.iter().map(|v| -v).collect();
    assert!((sqrt_pearson_dissimilarity(&x, &neg).unwrap() - 2f64.sqrt()).abs() < 1e-15);
}

proptest! {
    #[test]
    fn spearman_matches_brute_force(pairs in prop::collection::vec((0i32..6, -1e3f64..1e3), 2..30), tie in any::<bool>()) {
        let x: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let y: Vec<f64> = pairs.iter().map(|p| if tie { p.1.round() } else { p.1 }).collect();
        prop_assume!(x.iter().any(|v| *v != x[0]) && y.iter().any(|v| *v != y[0]));
        let got = spearman(&x, &y).unwrap();
        prop_assert!((got - common::brute_spearman(&x, &y)).abs() < 1e-9);
        prop_assert!((spearman(&y, &x).unwrap() - got).abs() < 1e-15);
    }

    #[test]
    fn zscore_matches_brute_force(v in prop::collection::vec(-1e4f64..1e4, 2..50)) {
        prop_assume!(v.iter().any(|x| (x - v[0]).abs() > 1e-3));
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt();
        for (z, x) in zscore(&v).unwrap().iter().zip(&v) {
            prop_assert!((z - (x - m) / sd).abs() < 1e-9);
        }
    }

    #[test]
    fn envelopes_match_brute_force(cols in prop::collection::vec(prop::collection::vec(-50f64..50.0, 4), 1..25)) {
        let labels = vec![0; cols.len()];
        let env = cluster_envelopes(&labels, &cols).unwrap();
        for t in 0..4 {
            let col: Vec<f64> = cols.iter().map(|s| s[t]).collect();
            let e = env[&0][t];
            prop_assert!((e.median - common::brute_percentile(&col, 0.5)).abs() < 1e-9);
            prop_assert!((e.p10 - common::brute_percentile(&col, 0.1)).abs() < 1e-9);
            prop_assert!((e.p90 - common::brute_percentile(&col, 0.9)).abs() < 1e-9);
            prop_assert!(e.p10 <= e.median && e.median <= e.p90);
        }
    }
}
