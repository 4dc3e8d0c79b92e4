mod common;

use dbn_ccm::embedding::{embed, EmbeddingParams};
use dbn_ccm::neighbors::{knn, knn_batch, knn_library, knn_with, SearchOptions};
use proptest::prelude::*;

use common::{brute_knn, delay_row, dist, series, white_noise};

fn manifold(x: &[f64], e: usize, tau: usize) -> dbn_ccm::embedding::ShadowManifold {
    embed(&series("x", x.to_vec()), EmbeddingParams::new(e, tau).unwrap()).unwrap()
}

proptest! {
    #[test]
    fn matches_full_scan(
        // coarse values force plenty of distance ties
        x in prop::collection::vec((-8i32..8).prop_map(|v| v as f64 * 0.5), 15..90),
        e in 1usize..4,
        tau in 1usize..3,
        radius in 0usize..6,
    ) {
        prop_assume!(x.len() > (e - 1) * tau + 2 * radius + e + 2);
        let m = manifold(&x, e, tau);
        let rows: Vec<Vec<f64>> = (0..m.len()).map(|k| delay_row(&x, e, tau, k)).collect();
        for q in 0..m.len() {
            let got = knn(&m, q, radius).ok().map(|ns| (ns.indices, ns.distances));
            prop_assert_eq!(got, brute_knn(&rows, q, radius, e + 1));
        }
    }

    #[test]
    fn neighbor_sets_are_sorted_and_outside_the_window(seed in 0u64..500, radius in 0usize..10) {
        let x = white_noise(120, seed);
        let m = manifold(&x, 3, 2);
        for q in 0..m.len() {
            let ns = knn(&m, q, radius).unwrap();
            prop_assert_eq!(ns.len(), 4);
            prop_assert!(ns.distances.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(ns.indices.iter().all(|&j| j.abs_diff(q) > radius));
            for (&j, &d) in ns.indices.iter().zip(&ns.distances) {
                prop_assert_eq!(d, m.distance(q, j));
            }
        }
    }
}

#[test]
fn distance_is_symmetric_euclidean() {
    let x = white_noise(60, 3);
    let m = manifold(&x, 3, 2);
    for a in 0..m.len() {
        for b in 0..m.len() {
            assert_eq!(m.distance(a, b), m.distance(b, a));
            assert!((m.distance(a, b) - dist(m.row(a), m.row(b))).abs() < 1e-12);
        }
    }
}

#[test]
fn library_restriction_matches_full_scan_on_the_subset() {
    let x = white_noise(200, 11);
    let m = manifold(&x, 2, 1);
    let lib: Vec<usize> = (0..m.len()).filter(|k| k % 3 != 0).collect();
    for q in 0..m.len() {
        let ns = knn_library(&m, &lib, q, 1).unwrap();
        let mut cand: Vec<(f64, usize)> = lib
            .iter()
            .filter(|&&j| j.abs_diff(q) > 1)
            .map(|&j| (m.distance(q, j), j))
            .collect();
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let want: Vec<usize> = cand.iter().take(3).map(|c| c.1).collect();
        assert_eq!(ns.indices, want);
    }
}

#[test]
fn larger_libraries_never_push_neighbors_further_away() {
    let x = white_noise(300, 5);
    let m = manifold(&x, 3, 1);
    let small: Vec<usize> = (0..m.len()).step_by(4).collect();
    let large: Vec<usize> = (0..m.len()).step_by(2).collect();
    for q in 0..m.len() {
        let a = knn_library(&m, &small, q, 2).unwrap();
        let b = knn_library(&m, &large, q, 2).unwrap();
        for (da, db) in a.distances.iter().zip(&b.distances) {
            assert!(db <= da);
        }
    }
}

#[test]
fn batch_equals_one_at_a_time() {
    let x = white_noise(400, 8);
    let m = manifold(&x, 4, 2);
    let queries: Vec<usize> = (0..m.len()).rev().collect();
    let opts = SearchOptions::new(6);
    let batch = knn_batch(&m, None, &queries, opts).unwrap();
    for (q, ns) in queries.iter().zip(&batch) {
        assert_eq!(ns, &knn_with(&m, None, *q, opts).unwrap());
    }
}

#[test]
fn self_match_only_when_allowed() {
    let x = white_noise(50, 2);
    let m = manifold(&x, 2, 1);
    let opts = SearchOptions {
        exclusion_radius: 3,
        allow_self: true,
    };
    for q in 0..m.len() {
        let ns = knn_with(&m, None, q, opts).unwrap();
        assert_eq!(ns.indices[0], q);
        assert_eq!(ns.distances[0], 0.0);
        assert!(!knn(&m, q, 3).unwrap().indices.contains(&q));
    }
}

#[test]
fn too_few_admissible_rows_is_an_error() {
    let m = manifold(&white_noise(10, 1), 3, 1);
    assert!(knn(&m, 4, 4).is_err());
    assert!(knn_library(&m, &[0, 7], 4, 0).is_err());
    assert!(knn_library(&m, &[0, 1, 99], 4, 0).is_err());
}
