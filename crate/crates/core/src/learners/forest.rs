//! Bagged CART forests and extra-trees ensembles.

use rayon::prelude::*;
use serde::Serialize;

use super::tree::{grow_best, grow_random, GrowParams, Presorted, Tree};
use crate::data::Matrix;
use crate::rng::rng_from;
use crate::scalar::Scalar;
use rand::Rng as _;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "F: Scalar")]
pub struct Forest<F> {
    pub trees: Vec<Tree<F>>,
    pub mtry: usize,
    pub bootstrap: bool,
}

/// Default candidate-feature count: ⌈√p⌉, at least 1.
pub fn default_mtry(p: usize) -> usize {
    ((p as f64).sqrt().ceil() as usize).max(1)
}

fn bootstrap_sample(n: usize, seed: u64, tree: u64) -> Vec<usize> {
    let mut rng = rng_from(seed, &[tree, 0]);
    (0..n).map(|_| rng.gen_range(0..n)).collect()
}

/// Random forest: per-tree bootstrap and `mtry` candidate features per node.
/// Each tree uses its own seed sub-stream, so trees can be grown in any order.
pub fn fit_random_forest<F: Scalar>(
    x: Matrix<'_, F>,
    y: &[u8],
    n_trees: usize,
    mtry: usize,
    params: GrowParams,
    seed: u64,
) -> Forest<F> {
    let presorted = Presorted::new(x);
    let n = x.n_rows();
    let mtry = mtry.clamp(1, x.n_cols().max(1));
    let trees = (0..n_trees as u64)
        .into_par_iter()
        .map(|b| {
            let sample = bootstrap_sample(n, seed, b);
            let mut rng = rng_from(seed, &[b, 1]);
            grow_best(x, y, &presorted, &sample, params, Some(mtry), &mut rng)
        })
        .collect();
    Forest { trees, mtry, bootstrap: true }
}

pub fn fit_extra_trees<F: Scalar>(
    x: Matrix<'_, F>,
    y: &[u8],
    n_trees: usize,
    mtry: usize,
    bootstrap: bool,
    params: GrowParams,
    seed: u64,
) -> Forest<F> {
    let n = x.n_rows();
    let mtry = mtry.clamp(1, x.n_cols().max(1));
    let all: Vec<usize> = (0..n).collect();
    let trees = (0..n_trees as u64)
        .into_par_iter()
        .map(|b| {
            let sample = if bootstrap { bootstrap_sample(n, seed, b) } else { all.clone() };
            let mut rng = rng_from(seed, &[b, 1]);
            grow_random(x, y, &sample, params, mtry, &mut rng)
        })
        .collect();
    Forest { trees, mtry, bootstrap }
}

impl<F: Scalar> Forest<F> {
    pub fn votes(&self, row: &[F]) -> [usize; 2] {
        let ones = self.trees.iter().filter(|t| t.predict_row(row) == 1).count();
        [self.trees.len() - ones, ones]
    }

    /// Majority vote; a tied vote is label 0.
    pub fn predict_row(&self, row: &[F]) -> u8 {
        let [zeros, ones] = self.votes(row);
        u8::from(ones > zeros)
    }

    pub fn vote_share(&self, row: &[F]) -> f64 {
        let [_, ones] = self.votes(row);
        if self.trees.is_empty() {
            0.0
        } else {
            ones as f64 / self.trees.len() as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mtry_default() {
        assert_eq!(default_mtry(22), 5);
        assert_eq!(default_mtry(16), 4);
        assert_eq!(default_mtry(1), 1);
        assert_eq!(default_mtry(0), 1);
    }

    #[test]
    fn vote_share_counts_trees() {
        let leaf = |l: u8| Tree::<f64>::leaf(if l == 1 { [0.0, 1.0] } else { [1.0, 0.0] });
        let f = Forest { trees: vec![leaf(1), leaf(1), leaf(0)], mtry: 1, bootstrap: true };
        assert!((f.vote_share(&[0.0]) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(f.predict_row(&[0.0]), 1);
        let tie = Forest { trees: vec![leaf(1), leaf(0)], mtry: 1, bootstrap: true };
        assert_eq!(tie.predict_row(&[0.0]), 0);
    }
}
