//! Feature selection: χ² and |Pearson r| filters, and sequential forward /
//! backward wrappers scored by inner cross-validated accuracy.
//!
//! The wrappers are the plain (non-floating) sequential searches.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{ClassCounts, FeatureKind, Table};
use crate::eval::{stratified_kfold, EvalError};
use crate::learners::{self, LearnerError, LearnerParams, LearnerSpec, TreeParams};
use crate::rng::rng_from;
use crate::scalar::Scalar;

/// Equal-frequency bin count for continuous features in the χ² filter.
pub const CHI2_BINS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectionError {
    #[error("subset size m must be >= 1")]
    ZeroSubset,
    #[error("table holds a single class")]
    SingleClassInput,
    #[error("inner cross-validation: {0}")]
    Folds(Box<EvalError>),
    #[error("inner learner: {0}")]
    Learner(#[from] LearnerError),
    #[error("invalid wrapper specification: {0}")]
    InvalidSpec(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMethod {
    None,
    Chi2,
    Correlation,
    Sfs,
    Sbs,
}

impl SelectionMethod {
    pub const ALL: [SelectionMethod; 5] = [
        SelectionMethod::None,
        SelectionMethod::Chi2,
        SelectionMethod::Correlation,
        SelectionMethod::Sfs,
        SelectionMethod::Sbs,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SelectionMethod::None => "none",
            SelectionMethod::Chi2 => "chi2",
            SelectionMethod::Correlation => "correlation",
            SelectionMethod::Sfs => "sfs",
            SelectionMethod::Sbs => "sbs",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelectionResult {
    pub method: SelectionMethod,
    /// Filters: descending score, then ascending index. Forward: order of
    /// inclusion. Backward: survivors in ascending index.
    pub selected: Vec<usize>,
    /// Filters: one score per feature. Wrappers: the winning inner-CV
    /// accuracy of each step.
    pub scores: Vec<f64>,
    pub m: usize,
}

impl SelectionResult {
    /// Selected indices in ascending order, for projecting a table while
    /// keeping its column order.
    pub fn columns(&self) -> Vec<usize> {
        let mut c = self.selected.clone();
        c.sort_unstable();
        c
    }
}

/// Identity selection: every feature, in order.
pub fn select_all(p: usize) -> SelectionResult {
    SelectionResult { method: SelectionMethod::None, selected: (0..p).collect(), scores: Vec::new(), m: p }
}

/// Bin index of every row for one feature: distinct values for binary and
/// ordinal features, equal-frequency bins (rightmost closed) otherwise.
fn discretize<F: Scalar>(values: &[F], kind: FeatureKind) -> (Vec<usize>, usize) {
    let mut sorted: Vec<F> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let mut edges: Vec<F> = match kind {
        FeatureKind::Binary | FeatureKind::Ordinal => sorted[1.min(n)..].to_vec(),
        FeatureKind::Continuous => (1..CHI2_BINS).filter_map(|j| sorted.get(j * n / CHI2_BINS).copied()).collect(),
    };
    edges.dedup();
    if let Some(&min) = sorted.first() {
        edges.retain(|&e| e > min);
    }
    let bins = values.iter().map(|v| edges.partition_point(|e| e <= v)).collect();
    (bins, edges.len() + 1)
}

fn chi2_from_bins(bins: &[usize], n_bins: usize, labels: &[u8]) -> f64 {
    let mut observed = vec![[0usize; 2]; n_bins];
    for (&b, &l) in bins.iter().zip(labels) {
        observed[b][l as usize] += 1;
    }
    let n = labels.len() as f64;
    let col = ClassCounts::from_labels(labels);
    let col_totals = [col.n_negative as f64, col.n_positive as f64];
    let mut chi2 = 0.0;
    for row in &observed {
        let row_total = (row[0] + row[1]) as f64;
        for c in 0..2 {
            let expected = row_total * col_totals[c] / n;
            if expected > 0.0 {
                let d = row[c] as f64 - expected;
                chi2 += d * d / expected;
            }
        }
    }
    chi2
}

/// χ² statistic of each feature's (discretized) value × label contingency table.
pub fn chi2_scores<F: Scalar>(table: &Table<F>) -> Vec<f64> {
    let kinds = table.schema().feature_kinds();
    (0..table.n_features())
        .into_par_iter()
        .map(|c| {
            let values: Vec<F> = table.column(c).collect();
            let (bins, n_bins) = discretize(&values, kinds[c]);
            chi2_from_bins(&bins, n_bins, table.labels())
        })
        .collect()
}

/// |Pearson r| between each feature and the label; constant columns score 0.
pub fn correlation_scores<F: Scalar>(table: &Table<F>) -> Vec<f64> {
    let n = table.n_rows() as f64;
    let labels: Vec<f64> = table.labels().iter().map(|&l| f64::from(l)).collect();
    let mean_y = labels.iter().sum::<f64>() / n;
    let var_y: f64 = labels.iter().map(|y| (y - mean_y).powi(2)).sum();
    (0..table.n_features())
        .map(|c| {
            let xs: Vec<f64> = table.column(c).map(Scalar::as_f64).collect();
            let mean_x = xs.iter().sum::<f64>() / n;
            let (mut cov, mut var_x) = (0.0, 0.0);
            for (x, y) in xs.iter().zip(&labels) {
                cov += (x - mean_x) * (y - mean_y);
                var_x += (x - mean_x).powi(2);
            }
            if var_x <= 0.0 || var_y <= 0.0 {
                0.0
            } else {
                (cov / (var_x.sqrt() * var_y.sqrt())).abs().min(1.0)
            }
        })
        .collect()
}

/// The `m` best scores (clamped to `p`); ties go to the lower index.
pub fn select_top_m(method: SelectionMethod, scores: &[f64], m: usize) -> Result<SelectionResult, SelectionError> {
    if m == 0 {
        return Err(SelectionError::ZeroSubset);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(m.min(scores.len()));
    Ok(SelectionResult { method, selected: order, scores: scores.to_vec(), m })
}

fn default_inner() -> LearnerSpec {
    LearnerSpec::new(LearnerParams::DecisionTree(TreeParams { max_depth: Some(3), min_samples_split: 2 }), 0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct WrapperSpec {
    pub inner_learner: LearnerSpec,
    pub inner_cv_k: usize,
    /// Stratified row subsample used for the search; `None` uses every row.
    pub row_subsample: Option<usize>,
    pub seed: u64,
}

impl Default for WrapperSpec {
    fn default() -> Self {
        Self { inner_learner: default_inner(), inner_cv_k: 3, row_subsample: Some(20_000), seed: 0 }
    }
}

impl WrapperSpec {
    pub fn validate(&self) -> Result<(), SelectionError> {
        if self.inner_cv_k < 2 {
            return Err(SelectionError::InvalidSpec("inner_cv_k must be >= 2".into()));
        }
        if self.row_subsample == Some(0) {
            return Err(SelectionError::InvalidSpec("row_subsample must be >= 1".into()));
        }
        Ok(())
    }
}

/// Inner-CV scorer shared by all candidate subsets of one search.
struct SubsetScorer<'a, F> {
    table: Table<F>,
    folds: Vec<(Vec<usize>, Vec<usize>)>,
    spec: &'a WrapperSpec,
}

impl<'a, F: Scalar> SubsetScorer<'a, F> {
    fn new(table: &Table<F>, spec: &'a WrapperSpec) -> Result<Self, SelectionError> {
        spec.validate()?;
        let counts = ClassCounts::from_labels(table.labels());
        if counts.n_positive == 0 || counts.n_negative == 0 {
            return Err(SelectionError::SingleClassInput);
        }
        let table = match spec.row_subsample {
            Some(limit) if limit < table.n_rows() => table.select_rows(&stratified_subsample(table, limit, spec)),
            _ => table.clone(),
        };
        let assignment = stratified_kfold(table.labels(), spec.inner_cv_k, spec.seed)
            .map_err(|e| SelectionError::Folds(Box::new(e)))?;
        let folds = (0..spec.inner_cv_k).map(|f| (assignment.train_rows(f), assignment.test_rows(f))).collect();
        Ok(Self { table, folds, spec })
    }

    /// Mean inner-CV accuracy of the inner learner on `columns`.
    fn score(&self, columns: &[usize]) -> Result<f64, SelectionError> {
        let mut cols = columns.to_vec();
        cols.sort_unstable();
        let projected = self.table.select_columns(&cols);
        let mut total = 0.0;
        for (train, test) in &self.folds {
            let tr = projected.select_rows(train);
            let te = projected.select_rows(test);
            let model = learners::fit(&self.spec.inner_learner, tr.matrix(), tr.labels())?;
            let predicted = learners::predict(&model, te.matrix())?;
            let correct = predicted.iter().zip(te.labels()).filter(|(p, l)| p == l).count();
            total += correct as f64 / te.n_rows().max(1) as f64;
        }
        Ok(total / self.folds.len() as f64)
    }
}

fn stratified_subsample<F: Scalar>(table: &Table<F>, limit: usize, spec: &WrapperSpec) -> Vec<usize> {
    let n = table.n_rows();
    let mut rng = rng_from(spec.seed, &[0x5b5]);
    let mut keep = Vec::with_capacity(limit);
    for class in 0..2u8 {
        let mut rows: Vec<usize> = (0..n).filter(|&i| table.labels()[i] == class).collect();
        let share = ((limit as f64) * rows.len() as f64 / n as f64).round() as usize;
        let take = share.max(spec.inner_cv_k).min(rows.len());
        rows.shuffle(&mut rng);
        keep.extend_from_slice(&rows[..take]);
    }
    keep.sort_unstable();
    keep
}

/// Best of the candidate scores; ties resolved by `prefer_low_index`.
fn pick(scored: &[(usize, f64)], prefer_low_index: bool) -> (usize, f64) {
    let mut best = scored[0];
    for &(f, s) in &scored[1..] {
        let better = s > best.1 || (s == best.1 && (f < best.0) == prefer_low_index);
        if better {
            best = (f, s);
        }
    }
    best
}

fn score_all<F: Scalar>(
    scorer: &SubsetScorer<'_, F>,
    candidates: &[usize],
    subset_for: impl Fn(usize) -> Vec<usize> + Sync,
) -> Result<Vec<(usize, f64)>, SelectionError> {
    candidates.par_iter().map(|&f| scorer.score(&subset_for(f)).map(|s| (f, s))).collect()
}

/// Greedy forward selection from the empty set.
pub fn sequential_forward<F: Scalar>(
    table: &Table<F>,
    spec: &WrapperSpec,
    m: usize,
) -> Result<SelectionResult, SelectionError> {
    if m == 0 {
        return Err(SelectionError::ZeroSubset);
    }
    let scorer = SubsetScorer::new(table, spec)?;
    let p = table.n_features();
    let mut selected: Vec<usize> = Vec::new();
    let mut remaining: Vec<usize> = (0..p).collect();
    let mut step_scores = Vec::new();
    while selected.len() < m.min(p) {
        let scored = score_all(&scorer, &remaining, |f| {
            let mut s = selected.clone();
            s.push(f);
            s
        })?;
        let (winner, score) = pick(&scored, true);
        selected.push(winner);
        remaining.retain(|&f| f != winner);
        step_scores.push(score);
    }
    Ok(SelectionResult { method: SelectionMethod::Sfs, selected, scores: step_scores, m })
}

/// Greedy backward elimination from the full set; ties remove the higher index.
pub fn sequential_backward<F: Scalar>(
    table: &Table<F>,
    spec: &WrapperSpec,
    m: usize,
) -> Result<SelectionResult, SelectionError> {
    if m == 0 {
        return Err(SelectionError::ZeroSubset);
    }
    let p = table.n_features();
    let mut current: Vec<usize> = (0..p).collect();
    let mut step_scores = Vec::new();
    if m < p {
        let scorer = SubsetScorer::new(table, spec)?;
        while current.len() > m {
            let scored = score_all(&scorer, &current, |f| current.iter().copied().filter(|&g| g != f).collect())?;
            let (removed, score) = pick(&scored, false);
            current.retain(|&f| f != removed);
            step_scores.push(score);
        }
    }
    Ok(SelectionResult { method: SelectionMethod::Sbs, selected: current, scores: step_scores, m })
}

/// Configured feature-selection step.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionConfig {
    pub method: SelectionMethod,
    pub m: usize,
    pub wrapper: WrapperSpec,
}

pub fn run_selection<F: Scalar>(table: &Table<F>, config: &SelectionConfig) -> Result<SelectionResult, SelectionError> {
    match config.method {
        SelectionMethod::None => Ok(select_all(table.n_features())),
        SelectionMethod::Chi2 => select_top_m(SelectionMethod::Chi2, &chi2_scores(table), config.m),
        SelectionMethod::Correlation => {
            select_top_m(SelectionMethod::Correlation, &correlation_scores(table), config.m)
        }
        SelectionMethod::Sfs => sequential_forward(table, &config.wrapper, config.m),
        SelectionMethod::Sbs => sequential_backward(table, &config.wrapper, config.m),
    }
}
