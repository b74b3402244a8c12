//! Discrete AdaBoost over weighted Gini stumps.

use serde::Serialize;

use super::tree::{fit_stump, Presorted, Tree};
use crate::data::Matrix;
use crate::scalar::Scalar;

/// Weighted error floor used when a stump classifies every training row
/// correctly; the round is kept with `α = ½ ln((1 − 1e-10) / 1e-10)`.
pub const EPSILON_FLOOR: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "F: Scalar")]
pub struct AdaBoostModel<F> {
    pub stumps: Vec<Tree<F>>,
    pub alphas: Vec<f64>,
    pub rounds_run: usize,
}

/// What happened in one boosting round; returned for inspection and tests.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundTrace {
    pub epsilon: f64,
    pub alpha: Option<f64>,
    /// Normalized weights after the round (unchanged if the round was discarded).
    pub weights: Vec<f64>,
}

pub fn alpha_for(epsilon: f64) -> f64 {
    let e = epsilon.max(EPSILON_FLOOR);
    0.5 * ((1.0 - e) / e).ln()
}

pub fn fit_adaboost<F: Scalar>(x: Matrix<'_, F>, y: &[u8], rounds: usize) -> AdaBoostModel<F> {
    fit_adaboost_traced(x, y, rounds).0
}

pub fn fit_adaboost_traced<F: Scalar>(
    x: Matrix<'_, F>,
    y: &[u8],
    rounds: usize,
) -> (AdaBoostModel<F>, Vec<RoundTrace>) {
    let n = x.n_rows();
    let presorted = Presorted::new(x);
    let mut weights = vec![1.0 / n as f64; n];
    let mut model = AdaBoostModel { stumps: Vec::new(), alphas: Vec::new(), rounds_run: 0 };
    let mut trace = Vec::new();

    for _ in 0..rounds {
        let stump = fit_stump(x, y, &presorted, &weights);
        let predictions: Vec<u8> = (0..n).map(|i| stump.predict_row(x.row(i))).collect();
        let epsilon: f64 = predictions
            .iter()
            .zip(y)
            .zip(&weights)
            .filter(|((p, l), _)| p != l)
            .map(|(_, w)| w)
            .sum();

        if epsilon >= 0.5 {
            trace.push(RoundTrace { epsilon, alpha: None, weights: weights.clone() });
            break;
        }
        let alpha = alpha_for(epsilon);
        let perfect = epsilon <= 0.0;
        for ((w, &p), &l) in weights.iter_mut().zip(&predictions).zip(y) {
            let agreement = if p == l { 1.0 } else { -1.0 };
            *w *= (-alpha * agreement).exp();
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);

        model.stumps.push(stump);
        model.alphas.push(alpha);
        model.rounds_run += 1;
        trace.push(RoundTrace { epsilon, alpha: Some(alpha), weights: weights.clone() });
        if perfect {
            break;
        }
    }
    (model, trace)
}

impl<F: Scalar> AdaBoostModel<F> {
    /// α mass voting for label 0 and for label 1.
    pub fn vote_mass(&self, row: &[F]) -> [f64; 2] {
        let mut mass = [0.0; 2];
        for (stump, &alpha) in self.stumps.iter().zip(&self.alphas) {
            mass[stump.predict_row(row) as usize] += alpha;
        }
        mass
    }

    /// `sign(Σ α_t h_t(x))` with labels recoded ±1; a zero score is label 0.
    pub fn predict_row(&self, row: &[F]) -> u8 {
        let [neg, pos] = self.vote_mass(row);
        u8::from(pos > neg)
    }

    pub fn vote_share(&self, row: &[F]) -> f64 {
        let [neg, pos] = self.vote_mass(row);
        if pos + neg > 0.0 {
            pos / (pos + neg)
        } else {
            0.5
        }
    }
}
