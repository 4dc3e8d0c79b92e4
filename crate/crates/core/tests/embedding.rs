mod common;

use std::collections::HashMap;

use dbn_ccm::embedding::{
    delayed_mutual_information, embed, fnn_fraction, select_dimension, select_tau, EmbeddingParams, FnnConfig,
};
use dbn_ccm::synthetic::{generate, SyntheticSpec};
use proptest::prelude::*;

use common::{delay_row, series, white_noise};

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// I(A;B) = H(A) + H(B) - H(A,B) with equal-width bins over the full range.
fn mi_oracle(x: &[f64], lag: usize, bins: usize) -> f64 {
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let bin = |v: f64| {
        if hi == lo {
            0
        } else {
            (((v - lo) / ((hi - lo) / bins as f64)) as usize).min(bins - 1)
        }
    };
    let n = x.len() - lag;
    let mut a: HashMap<usize, usize> = HashMap::new();
    let mut b: HashMap<usize, usize> = HashMap::new();
    let mut ab: HashMap<(usize, usize), usize> = HashMap::new();
    for t in 0..n {
        let (i, j) = (bin(x[t]), bin(x[t + lag]));
        *a.entry(i).or_default() += 1;
        *b.entry(j).or_default() += 1;
        *ab.entry((i, j)).or_default() += 1;
    }
    let nf = n as f64;
    entropy(a.into_values(), nf) + entropy(b.into_values(), nf) - entropy(ab.into_values(), nf)
}

/// Straight transcription of the false-neighbor test: nearest neighbor in E
/// dimensions, then check how far apart the pair lands in dimension E+1.
fn fnn_oracle(x: &[f64], tau: usize, e: usize, cfg: &FnnConfig) -> f64 {
    let m = x.len() - e * tau;
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let vec_at = |s: usize, d: usize| -> Vec<f64> { (0..d).map(|k| x[s + k * tau]).collect() };
    let mut false_n = 0;
    for i in 0..m {
        let vi = vec_at(i, e);
        let mut best = (f64::INFINITY, 0);
        for j in (0..m).filter(|&j| j != i) {
            let d2: f64 = vi.iter().zip(vec_at(j, e)).map(|(a, b)| (a - b).powi(2)).sum();
            if d2 < best.0 {
                best = (d2, j);
            }
        }
        let r = best.0.sqrt();
        let gap = (x[i + e * tau] - x[best.1 + e * tau]).abs();
        let grows = if r <= 1e-9 * sd { gap > 1e-9 * sd } else { gap / r > cfg.distance_ratio };
        let lonely = (best.0 + gap * gap).sqrt() / sd > cfg.loneliness;
        if grows || lonely {
            false_n += 1;
        }
    }
    false_n as f64 / m as f64
}

fn sinusoid(n: usize, period: f64) -> Vec<f64> {
    (0..n)
        .map(|t| (2.0 * std::f64::consts::PI * t as f64 / period).sin())
        .collect()
}

proptest! {
    #[test]
    fn rows_follow_the_delay_definition(
        x in prop::collection::vec(-1e3f64..1e3, 12..80),
        e in 1usize..5,
        tau in 1usize..4,
    ) {
        prop_assume!(x.len() > (e - 1) * tau);
        let m = embed(&series("x", x.clone()), EmbeddingParams::new(e, tau).unwrap()).unwrap();
        prop_assert_eq!(m.len(), x.len() - (e - 1) * tau);
        for k in 0..m.len() {
            let want = delay_row(&x, e, tau, k);
            prop_assert_eq!(m.row(k), want.as_slice());
            prop_assert_eq!(m.time_index(k), k + (e - 1) * tau);
            prop_assert_eq!(m.row_of_time(m.time_index(k)), Some(k));
        }
    }

    #[test]
    fn mutual_information_matches_entropy_decomposition(
        seed in 0u64..1000,
        lag in 1usize..8,
        bins in 2usize..12,
    ) {
        let x = white_noise(300, seed);
        let got = delayed_mutual_information(&x, lag, bins);
        prop_assert!((got - mi_oracle(&x, lag, bins)).abs() < 1e-10);
        prop_assert!(got >= -1e-12);
    }
}

#[test]
fn invalid_parameters_and_short_series_are_rejected() {
    assert!(EmbeddingParams::new(0, 1).is_err());
    assert!(EmbeddingParams::new(2, 0).is_err());
    let short = series("x", vec![1.0, 2.0, 3.0]);
    assert!(embed(&short, EmbeddingParams::new(3, 2).unwrap()).is_err());
    assert!(select_tau(&short, 5).is_err());
}

#[test]
fn sinusoid_delay_is_the_first_minimum_of_the_oracle_curve() {
    let x = sinusoid(2000, 40.0);
    let bins = 20;
    let curve: Vec<f64> = (1..=30).map(|lag| mi_oracle(&x, lag, bins)).collect();
    // the curve mirrors about the quarter period
    for d in 1..9 {
        assert!((curve[9 - d] - curve[9 + d]).abs() < 0.01, "asymmetric at 10 +- {d}");
    }
    let bias = |lag: usize| ((bins - 1) * (bins - 1)) as f64 / (2.0 * (2000 - lag) as f64);
    let first_min = (2..30)
        .find(|&l| {
            let at = |l: usize| curve[l - 1];
            at(l) < at(l - 1) && at(l) <= at(l + 1) && at(1) - at(l) > bias(l)
        })
        .unwrap();
    let tau = select_tau(&series("s", x), 30).unwrap();
    assert_eq!(tau, first_min);
    // inside the low plateau that spans the quarter period
    assert!((5..=15).contains(&tau), "tau = {tau}");
}

// Equal-width bins alias against the 40 distinct sample values, so the
// plateau's left edge (lag 6 or 7) is the first minimum rather than lag 10.
#[test]
#[ignore = "histogram MI of a period-commensurate sinusoid bottoms out at lag 6-7"]
fn sinusoid_delay_is_a_quarter_period() {
    let tau = select_tau(&series("s", sinusoid(2000, 40.0)), 30).unwrap();
    assert!((8..=12).contains(&tau), "tau = {tau}");
}

#[test]
fn white_noise_delay_is_one() {
    for seed in 0..5 {
        assert_eq!(select_tau(&series("w", white_noise(2000, seed)), 20).unwrap(), 1);
    }
}

#[test]
fn fnn_fraction_matches_oracle() {
    let cfg = FnnConfig::default();
    let rec = generate(&SyntheticSpec::logistic_pair(0.2, 0.0, 300, 4)).unwrap();
    let sine: Vec<f64> = sinusoid(300, 23.0);
    for x in [rec.channels()[1].values().to_vec(), sine, white_noise(300, 9)] {
        for e in 1..4 {
            assert_eq!(fnn_fraction(&x, 2, e, &cfg), fnn_oracle(&x, 2, e, &cfg));
        }
    }
}

#[test]
fn sinusoid_unfolds_in_two_dimensions() {
    let e = select_dimension(&series("s", sinusoid(1000, 40.0)), 10, 6).unwrap();
    assert_eq!(e, 2);
}

#[test]
fn logistic_map_has_no_false_neighbors_in_one_dimension() {
    // x_{t+1} = f(x_t) with |f'| <= 3.8, well under the ratio threshold of 15
    let rec = generate(&SyntheticSpec::logistic_pair(0.0, 0.0, 2000, 1)).unwrap();
    let x = &rec.channels()[0];
    assert!(fnn_fraction(x.values(), 1, 1, &FnnConfig::default()) < 0.05);
    assert_eq!(select_dimension(x, 1, 6).unwrap(), 1);
}

#[test]
#[ignore = "the FNN thresholds accept E = 1 for a one-dimensional map"]
fn logistic_map_dimension_is_two_or_three() {
    let rec = generate(&SyntheticSpec::logistic_pair(0.0, 0.0, 2000, 1)).unwrap();
    let e = select_dimension(&rec.channels()[0], 1, 6).unwrap();
    assert!((2..=3).contains(&e), "E = {e}");
}

#[test]
fn single_candidate_cases_return_one() {
    let x = series("w", white_noise(200, 4));
    assert_eq!(select_tau(&x, 1).unwrap(), 1);
    assert_eq!(select_dimension(&x, 1, 1).unwrap(), 1);
}
