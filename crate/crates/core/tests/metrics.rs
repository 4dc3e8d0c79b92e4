mod common;

use dbn_ccm::crossmap::{cross_map, CrossMapConfig};
use dbn_ccm::dbn::{learn_with, LearnConfig};
use dbn_ccm::embedding::EmbeddingParams;
use dbn_ccm::metrics::{
    causal_impact, pc_norm, shuffled_rho, surrogate_index_map, MetricRow, MetricsReport, SurrogateConfig,
    SurrogateMethod,
};
use dbn_ccm::synthetic::{generate, SyntheticSpec};
use proptest::prelude::*;

use common::{series, white_noise};

fn e2() -> CrossMapConfig {
    CrossMapConfig::new(EmbeddingParams::new(2, 1).unwrap())
}

fn pair(seed: u64) -> dbn_ccm::series::Recording {
    generate(&SyntheticSpec::logistic_pair(0.32, 0.0, 500, seed)).unwrap()
}

#[test]
fn zero_rotation_reproduces_the_unshuffled_skill() {
    let rec = pair(1);
    let (x, y) = (&rec.channels()[1], &rec.channels()[0]);
    let mut sc = SurrogateConfig::new(SurrogateMethod::CircularShift, 1, 0);
    sc.forced_shift = Some(0);
    let plain = cross_map(x, y, &e2(), None, None).unwrap().rho;
    assert_eq!(shuffled_rho(x, y, &e2(), None, &sc).unwrap().mean, plain);
    let model = learn_with(&rec, &LearnConfig::new(2, 0.01)).unwrap().0;
    let dens = model.target_densities(&rec, 0).unwrap();
    let plain = cross_map(x, y, &e2(), Some(&dens), None).unwrap().rho;
    assert_eq!(shuffled_rho(x, y, &e2(), Some(&dens), &sc).unwrap().mean, plain);
}

#[test]
fn permutation_surrogates_of_white_noise_center_on_zero() {
    let a = series("a", white_noise(800, 1));
    let b = series("b", white_noise(800, 2));
    let sc = SurrogateConfig::new(SurrogateMethod::FullPermutation, 100, 7);
    let s = shuffled_rho(&a, &b, &e2(), None, &sc).unwrap();
    assert!(s.mean.abs() <= 0.05, "mean {}", s.mean);
    assert_eq!(s.values.len(), 100);
}

#[test]
fn coupled_skill_stands_far_above_surrogates() {
    let rec = generate(&SyntheticSpec::logistic_pair(0.32, 0.0, 1000, 5)).unwrap();
    let (x, y) = (&rec.channels()[1], &rec.channels()[0]);
    let rho = cross_map(x, y, &e2(), None, None).unwrap().rho;
    let s = shuffled_rho(x, y, &e2(), None, &SurrogateConfig::default()).unwrap();
    assert!(rho >= s.mean + 5.0 * s.std, "rho {rho}, surrogates {} +- {}", s.mean, s.std);
}

#[test]
fn surrogates_equal_one_at_a_time_evaluation() {
    let rec = pair(3);
    let (x, y) = (&rec.channels()[1], &rec.channels()[0]);
    let model = learn_with(&rec, &LearnConfig::new(2, 0.01)).unwrap().0;
    let dens = model.target_densities(&rec, 0).unwrap();
    for method in [SurrogateMethod::CircularShift, SurrogateMethod::FullPermutation] {
        let sc = SurrogateConfig::new(method, 12, 21);
        for d in [None, Some(dens.as_slice())] {
            let batch = shuffled_rho(x, y, &e2(), d, &sc).unwrap();
            assert_eq!(batch, shuffled_rho(x, y, &e2(), d, &sc).unwrap());
            for (i, &v) in batch.values.iter().enumerate() {
                let map = surrogate_index_map(y.len(), &sc, i);
                let ys = y.with_values(map.iter().map(|&j| y.values()[j]).collect()).unwrap();
                let ds: Option<Vec<Option<f64>>> = d.map(|d| map.iter().map(|&j| d[j]).collect());
                let want = cross_map(x, &ys, &e2(), ds.as_deref(), None).unwrap().rho;
                assert_eq!(v, want, "surrogate {i}");
            }
        }
    }
}

#[test]
fn circular_shifts_stay_in_the_middle_half() {
    let n = 1000;
    for i in 0..200 {
        let sc = SurrogateConfig::new(SurrogateMethod::CircularShift, 1, 9);
        let map = surrogate_index_map(n, &sc, i);
        let shift = (n - map[0]) % n;
        assert!((n / 4..=3 * n / 4).contains(&shift));
        assert!(map.iter().enumerate().all(|(t, &j)| j == (t + n - shift) % n));
    }
    let sc = SurrogateConfig::new(SurrogateMethod::FullPermutation, 1, 9);
    let mut map = surrogate_index_map(n, &sc, 0);
    map.sort_unstable();
    assert_eq!(map, (0..n).collect::<Vec<_>>());
}

#[test]
fn impact_reference_values() {
    let ci = causal_impact(&[(0.8, 0.9), (0.5, 0.3)]);
    assert!((ci[0] - 0.40).abs() < 1e-12 && (ci[1] - 0.50).abs() < 1e-12);
    assert_eq!(causal_impact(&[(0.4, 0.4), (0.2, 0.2)]), vec![0.0, 0.0]);
    assert_eq!(pc_norm(0.8, 0.2).unwrap(), 0.75);
    assert_eq!(pc_norm(0.3, 0.3).unwrap(), 0.0);
    assert_eq!(pc_norm(1.0, -0.4).unwrap(), 1.0);
    assert!(pc_norm(0.5, 1.0).is_err());
}

proptest! {
    #[test]
    fn pc_increases_with_skill(a in -1.0f64..1.0, b in -1.0f64..1.0, sh in -1.0f64..0.99) {
        prop_assume!(a != b);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let (p_lo, p_hi) = (pc_norm(lo, sh).unwrap(), pc_norm(hi, sh).unwrap());
        prop_assert!(p_lo < p_hi);
        prop_assert!(p_hi <= 1.0);
    }

    #[test]
    fn impact_properties(pairs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..8)) {
        let ci = causal_impact(&pairs);
        let deltas: Vec<f64> = pairs.iter().map(|(a, b)| (b - a).abs()).collect();
        let max = deltas.iter().cloned().fold(0.0, f64::max);
        if max > 0.0 {
            let k = deltas.iter().position(|&d| d == max).unwrap();
            prop_assert_eq!(ci[k], pairs[k].0);
        }
        let doubled: Vec<(f64, f64)> = pairs.iter().chain(&pairs).cloned().collect();
        prop_assert_eq!(&causal_impact(&doubled)[..pairs.len()], ci.as_slice());
    }
}

#[test]
fn csv_round_trip_is_exact() {
    let rows = (0..5)
        .map(|i| MetricRow {
            pair: format!("c{i}->c{}", i + 1),
            band: if i % 2 == 0 { "alpha".into() } else { "broadband".into() },
            method: "dbn".into(),
            pc_norm: 0.1 * i as f64 + 1.0 / 3.0,
            ci: std::f64::consts::PI / (i + 1) as f64,
            rho_pre: -0.123456789012345,
            rho_post: 1e-17,
            rho_shuffled_mean: 0.0,
            rho_shuffled_std: 2.0f64.sqrt(),
        })
        .collect();
    let report = MetricsReport { rows };
    let text = report.to_csv().unwrap();
    assert_eq!(MetricsReport::from_csv(&text).unwrap(), report);
    assert!(MetricsReport::from_csv("a,b\n1,2\n").is_err());
}
