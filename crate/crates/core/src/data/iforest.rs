//! Isolation forest anomaly scoring.
//!
//! Each tree recursively cuts a random subsample with axis-aligned splits
//! drawn uniformly between the node's minimum and maximum. Points that are
//! isolated after few cuts get short paths and high scores
//! `s = 2^(−E[h]/c(ψ))`.

use rayon::prelude::*;

use super::Dataset;
use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::scalar::Scalar;

pub const DEFAULT_TREES: usize = 100;
pub const DEFAULT_SUBSAMPLE: usize = 256;

/// Average unsuccessful-search path length in a binary search tree of `n`
/// nodes: `2H(n−1) − 2(n−1)/n`, with `c(1) = c(0) = 0`.
pub fn average_path_length(n: usize) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    let m = n - 1;
    let harmonic: f64 = (1..=m).rev().map(|i| 1.0 / i as f64).sum();
    2.0 * harmonic - 2.0 * m as f64 / n as f64
}

/// Score for a mean path length `mean_h` under normalizer `c_psi`.
pub fn score_from_path_length(mean_h: f64, c_psi: f64) -> f64 {
    (-mean_h / c_psi).exp2()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForestParams {
    pub trees: usize,
    /// Subsample size; `None` means `min(256, N)`.
    pub subsample: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            trees: DEFAULT_TREES,
            subsample: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        size: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn grow(x: &[f64], dim: usize, rows: &mut [usize], limit: usize, rng: &mut Rng) -> Tree {
        let mut t = Tree { nodes: Vec::new() };
        t.build(x, dim, rows, 0, limit, rng);
        t
    }

    fn build(&mut self, x: &[f64], dim: usize, rows: &mut [usize], depth: usize, limit: usize, rng: &mut Rng) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { size: rows.len() });
        if rows.len() <= 1 || depth >= limit {
            return id;
        }
        // candidate features: those not constant on this node
        let ranges: Vec<(usize, f64, f64)> = (0..dim)
            .filter_map(|j| {
                let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                    let v = x[r * dim + j];
                    (lo.min(v), hi.max(v))
                });
                (hi > lo).then_some((j, lo, hi))
            })
            .collect();
        if ranges.is_empty() {
            return id;
        }
        let (feature, lo, hi) = ranges[rng.index(ranges.len())];
        let mut threshold = rng.uniform_in(lo, hi);
        if threshold <= lo {
            // keep the left side nonempty
            threshold = lo + (hi - lo) * 0.5;
        }
        let mut split = 0;
        for k in 0..rows.len() {
            if x[rows[k] * dim + feature] < threshold {
                rows.swap(k, split);
                split += 1;
            }
        }
        let (l, r) = rows.split_at_mut(split);
        let left = self.build(x, dim, l, depth + 1, limit, rng);
        let right = self.build(x, dim, r, depth + 1, limit, rng);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    fn path_length(&self, point: &[f64]) -> f64 {
        let mut id = 0;
        let mut depth = 0.0;
        loop {
            match self.nodes[id] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    id = if point[feature] < threshold { left } else { right };
                    depth += 1.0;
                }
                Node::Leaf { size } => return depth + average_path_length(size),
            }
        }
    }

    fn height(&self, id: usize) -> usize {
        match self.nodes[id] {
            Node::Split { left, right, .. } => 1 + self.height(left).max(self.height(right)),
            Node::Leaf { .. } => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsolationForest {
    trees: Vec<Tree>,
    psi: usize,
    c_psi: f64,
    dim: usize,
}

impl IsolationForest {
    /// Fits `params.trees` trees, each on its own subsample drawn without
    /// replacement. Tree `i` uses the child stream `i` of `rng`.
    pub fn fit<T: Scalar>(data: &Dataset<T>, params: ForestParams, rng: &Rng) -> Result<Self> {
        let n = data.len();
        let psi = params.subsample.unwrap_or(DEFAULT_SUBSAMPLE.min(n));
        if params.trees == 0 {
            return Err(Error::InvalidParameter("forest needs at least one tree".into()));
        }
        if psi < 2 || psi > n {
            return Err(Error::InvalidSubsample { psi, rows: n });
        }
        let dim = data.dim();
        let x: Vec<f64> = data.features().iter().map(|v| v.as_f64()).collect();
        let limit = (psi as f64).log2().ceil() as usize;
        let trees = (0..params.trees)
            .into_par_iter()
            .map(|i| {
                let mut r = rng.child(i as u64);
                let mut rows = r.sample_indices(n, psi);
                Tree::grow(&x, dim, &mut rows, limit, &mut r)
            })
            .collect();
        Ok(Self {
            trees,
            psi,
            c_psi: average_path_length(psi),
            dim,
        })
    }

    pub fn subsample_size(&self) -> usize {
        self.psi
    }

    pub fn tree_count(&self) -> usize {
        self.trees.len()
    }

    pub fn max_height(&self) -> usize {
        self.trees.iter().map(|t| t.height(0)).max().unwrap_or(0)
    }

    /// Mean path length `E[h(x)]` over trees.
    pub fn mean_path_length<T: Scalar>(&self, x: &[T]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let p: Vec<f64> = x.iter().map(|v| v.as_f64()).collect();
        let total: f64 = self.trees.iter().map(|t| t.path_length(&p)).sum();
        Ok(total / self.trees.len() as f64)
    }

    /// Anomaly score in `(0, 1)`; higher is more anomalous.
    pub fn score<T: Scalar>(&self, x: &[T]) -> Result<f64> {
        Ok(score_from_path_length(self.mean_path_length(x)?, self.c_psi))
    }

    pub fn score_all<T: Scalar>(&self, data: &Dataset<T>) -> Result<Vec<f64>> {
        data.rows().map(|r| self.score(r)).collect()
    }

    #[cfg(test)]
    pub(crate) fn reversed(&self) -> Self {
        let mut f = self.clone();
        f.trees.reverse();
        f
    }
}
