//! Exact E+1 nearest-neighbor search on shadow manifolds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{euclidean, ShadowManifold};
use crate::error::{Error, Result};

/// The E+1 nearest rows to a query row, nearest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborSet {
    pub query_index: usize,
    pub indices: Vec<usize>,
    pub distances: Vec<f64>,
}

impl NeighborSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Candidate filter for a query row `q`: row `j` is admissible when
/// `|j - q| > exclusion_radius`, or when `j == q` and `allow_self` is set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SearchOptions {
    pub exclusion_radius: usize,
    pub allow_self: bool,
}

impl SearchOptions {
    pub fn new(exclusion_radius: usize) -> Self {
        Self {
            exclusion_radius,
            allow_self: false,
        }
    }

    #[inline]
    pub fn admits(&self, query: usize, row: usize) -> bool {
        if row == query {
            self.allow_self
        } else {
            row.abs_diff(query) > self.exclusion_radius
        }
    }
}

/// Bounded sorted buffer keeping the `k` smallest `(distance, row)` pairs.
struct TopK {
    k: usize,
    items: Vec<(f64, usize)>,
}

impl TopK {
    fn new(k: usize) -> Self {
        Self {
            k,
            items: Vec::with_capacity(k + 1),
        }
    }

    #[inline]
    fn offer(&mut self, d: f64, row: usize) {
        let full = self.items.len() == self.k;
        if full {
            let &(wd, wr) = self.items.last().expect("k >= 1");
            if d > wd || (d == wd && row > wr) {
                return;
            }
        }
        let pos = self
            .items
            .partition_point(|&(id, ir)| id < d || (id == d && ir < row));
        self.items.insert(pos, (d, row));
        if self.items.len() > self.k {
            self.items.pop();
        }
    }
}

fn search<I>(
    manifold: &ShadowManifold,
    candidates: I,
    query: usize,
    opts: SearchOptions,
    k: usize,
) -> Result<NeighborSet>
where
    I: IntoIterator<Item = usize>,
{
    if query >= manifold.len() {
        return Err(Error::IndexOutOfRange {
            index: query,
            detail: format!("manifold has {} rows", manifold.len()),
        });
    }
    let q = manifold.row(query);
    let mut top = TopK::new(k);
    let mut admissible = 0usize;
    for j in candidates {
        if !opts.admits(query, j) {
            continue;
        }
        admissible += 1;
        top.offer(euclidean(q, manifold.row(j)), j);
    }
    if admissible < k {
        return Err(Error::NotEnoughPoints {
            required: k,
            available: admissible,
        });
    }
    let (distances, indices) = top.items.into_iter().unzip();
    Ok(NeighborSet {
        query_index: query,
        indices,
        distances,
    })
}

/// The E+1 rows nearest to `query_index` among all rows outside the
/// exclusion window. Ties go to the smaller row index.
pub fn knn(
    manifold: &ShadowManifold,
    query_index: usize,
    exclusion_radius: usize,
) -> Result<NeighborSet> {
    knn_with(manifold, None, query_index, SearchOptions::new(exclusion_radius))
}

/// [`knn`] with candidates restricted to `library` rows.
pub fn knn_library(
    manifold: &ShadowManifold,
    library: &[usize],
    query_index: usize,
    exclusion_radius: usize,
) -> Result<NeighborSet> {
    knn_with(
        manifold,
        Some(library),
        query_index,
        SearchOptions::new(exclusion_radius),
    )
}

/// General form: optional library, explicit options, `k = E + 1`.
pub fn knn_with(
    manifold: &ShadowManifold,
    library: Option<&[usize]>,
    query_index: usize,
    opts: SearchOptions,
) -> Result<NeighborSet> {
    let k = manifold.dimension() + 1;
    match library {
        None => search(manifold, 0..manifold.len(), query_index, opts, k),
        Some(lib) => {
            if let Some(&bad) = lib.iter().find(|&&r| r >= manifold.len()) {
                return Err(Error::IndexOutOfRange {
                    index: bad,
                    detail: format!("library row beyond {} manifold rows", manifold.len()),
                });
            }
            search(manifold, lib.iter().copied(), query_index, opts, k)
        }
    }
}

/// Neighbor sets for many queries, computed in parallel. Output order follows
/// `queries` and is independent of scheduling.
pub fn knn_batch(
    manifold: &ShadowManifold,
    library: Option<&[usize]>,
    queries: &[usize],
    opts: SearchOptions,
) -> Result<Vec<NeighborSet>> {
    queries
        .par_iter()
        .map(|&q| knn_with(manifold, library, q, opts))
        .collect()
}
