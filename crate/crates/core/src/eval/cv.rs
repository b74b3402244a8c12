use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{confusion, metrics_with, stratified_kfold, Averaging, EvalError, Metrics, MetricsReport};
use crate::balance::{kmeans_smote, BalancePath, SmoteConfig};
use crate::data::Table;
use crate::featsel::{run_selection, SelectionConfig, SelectionMethod, SelectionResult, WrapperSpec};
use crate::learners::{self, LearnerSpec};
use crate::rng::derive_seed;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Balance and select on the whole table, then cut folds from the result.
    /// Synthetic rows and duplicates can land in test folds.
    PaperFaithful,
    /// Fit balancing and selection on each training portion only.
    #[default]
    LeakageSafe,
}

impl EvalMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalMode::PaperFaithful => "paper_faithful",
            EvalMode::LeakageSafe => "leakage_safe",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum BalanceStep {
    None,
    KmeansSmote(SmoteConfig),
}

impl BalanceStep {
    pub fn tag(&self) -> &'static str {
        match self {
            BalanceStep::None => "none",
            BalanceStep::KmeansSmote(_) => "kmeans_smote",
        }
    }
}

pub type SelectionStep = SelectionConfig;

impl SelectionConfig {
    pub fn none() -> Self {
        SelectionConfig { method: SelectionMethod::None, m: 1, wrapper: WrapperSpec::default() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineOptions {
    pub mode: EvalMode,
    pub balance: BalanceStep,
    pub selection: SelectionStep,
    pub averaging: Averaging,
}

impl PipelineOptions {
    pub fn plain(mode: EvalMode) -> Self {
        PipelineOptions {
            mode,
            balance: BalanceStep::None,
            selection: SelectionConfig::none(),
            averaging: Averaging::Binary,
        }
    }
}

/// A table after balancing and feature selection.
#[derive(Clone, Debug)]
pub struct Prepared<F> {
    pub table: Table<F>,
    /// Rows at or past this index are synthetic.
    pub n_original: usize,
    pub selection: SelectionResult,
    pub balance_path: Option<BalancePath>,
}

/// Balance (if configured), then select features on the balanced table.
pub fn prepare<F: Scalar>(
    table: &Table<F>,
    balance: &BalanceStep,
    selection: &SelectionStep,
    seed: u64,
) -> Result<Prepared<F>, EvalError> {
    let (balanced, n_original, balance_path) = match balance {
        BalanceStep::None => (table.clone(), table.n_rows(), None),
        BalanceStep::KmeansSmote(cfg) => {
            let out = kmeans_smote(table, cfg, derive_seed(seed, &[1]))?;
            (out.table, out.n_original, Some(out.path))
        }
    };
    let mut selection = selection.clone();
    selection.wrapper.seed = derive_seed(selection.wrapper.seed, &[seed]);
    let chosen = run_selection(&balanced, &selection)?;
    let table = if chosen.method == SelectionMethod::None {
        balanced
    } else {
        balanced.select_columns(&chosen.columns())
    };
    Ok(Prepared { table, n_original, selection: chosen, balance_path })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FoldDetail {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub synthetic_in_train: usize,
    pub synthetic_in_test: usize,
    /// Original feature indices used in this fold, ascending.
    pub columns: Vec<usize>,
    pub balance_path: Option<BalancePath>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CvOutcome {
    pub report: MetricsReport,
    pub folds: Vec<FoldDetail>,
}

fn fold_seed(spec: &LearnerSpec, fold: usize) -> LearnerSpec {
    LearnerSpec { seed: derive_seed(spec.seed, &[fold as u64]), ..spec.clone() }
}

fn evaluate<F: Scalar>(
    spec: &LearnerSpec,
    fold: usize,
    train: &Table<F>,
    test: &Table<F>,
    averaging: Averaging,
) -> Result<Metrics, EvalError> {
    let model = learners::fit(&fold_seed(spec, fold), train.matrix(), train.labels())?;
    let predicted = learners::predict(&model, test.matrix())?;
    Ok(metrics_with(&confusion(&predicted, test.labels())?, averaging))
}

struct FoldRun {
    detail: Option<FoldDetail>,
    results: Vec<Result<Metrics, EvalError>>,
}

/// Cross-validate several learners on shared folds and shared per-fold
/// preparation. The outer error covers fold construction (and, in
/// paper-faithful mode, whole-table preparation); each learner then gets its
/// own result, failing with the first failing fold.
pub fn cross_validate_many<F: Scalar>(
    table: &Table<F>,
    specs: &[LearnerSpec],
    options: &PipelineOptions,
    k: usize,
    seed: u64,
) -> Result<Vec<Result<CvOutcome, EvalError>>, EvalError> {
    let runs: Vec<FoldRun> = match options.mode {
        EvalMode::PaperFaithful => {
            let prepared = prepare(table, &options.balance, &options.selection, seed)?;
            let assignment = stratified_kfold(prepared.table.labels(), k, seed)?;
            let columns = prepared.selection.columns();
            (0..k)
                .into_par_iter()
                .map(|fold| {
                    let train_rows = assignment.train_rows(fold);
                    let test_rows = assignment.test_rows(fold);
                    let train = prepared.table.select_rows(&train_rows);
                    let test = prepared.table.select_rows(&test_rows);
                    let synthetic = |rows: &[usize]| rows.iter().filter(|&&r| r >= prepared.n_original).count();
                    let results =
                        specs.iter().map(|s| evaluate(s, fold, &train, &test, options.averaging)).collect();
                    FoldRun {
                        detail: Some(FoldDetail {
                            fold,
                            n_train: train_rows.len(),
                            n_test: test_rows.len(),
                            synthetic_in_train: synthetic(&train_rows),
                            synthetic_in_test: synthetic(&test_rows),
                            columns: columns.clone(),
                            balance_path: prepared.balance_path,
                        }),
                        results,
                    }
                })
                .collect()
        }
        EvalMode::LeakageSafe => {
            let assignment = stratified_kfold(table.labels(), k, seed)?;
            (0..k)
                .into_par_iter()
                .map(|fold| {
                    let train_rows = assignment.train_rows(fold);
                    let test_rows = assignment.test_rows(fold);
                    let train = table.select_rows(&train_rows);
                    let prepared = match prepare(
                        &train,
                        &options.balance,
                        &options.selection,
                        derive_seed(seed, &[fold as u64]),
                    ) {
                        Ok(p) => p,
                        Err(e) => {
                            return FoldRun { detail: None, results: specs.iter().map(|_| Err(e.clone())).collect() }
                        }
                    };
                    let columns = prepared.selection.columns();
                    let test = table.select_rows(&test_rows);
                    let test = if prepared.selection.method == SelectionMethod::None {
                        test
                    } else {
                        test.select_columns(&columns)
                    };
                    let results = specs
                        .iter()
                        .map(|s| evaluate(s, fold, &prepared.table, &test, options.averaging))
                        .collect();
                    FoldRun {
                        detail: Some(FoldDetail {
                            fold,
                            n_train: prepared.table.n_rows(),
                            n_test: test_rows.len(),
                            synthetic_in_train: prepared.table.n_rows() - prepared.n_original,
                            synthetic_in_test: 0,
                            columns,
                            balance_path: prepared.balance_path,
                        }),
                        results,
                    }
                })
                .collect()
        }
    };

    let mut per_spec: Vec<Result<Vec<Metrics>, EvalError>> = vec![Ok(Vec::with_capacity(k)); specs.len()];
    let mut details = Vec::with_capacity(k);
    for (fold, run) in runs.into_iter().enumerate() {
        details.extend(run.detail);
        for (slot, result) in per_spec.iter_mut().zip(run.results) {
            if let Ok(list) = slot {
                match result {
                    Ok(m) => list.push(m),
                    Err(e) => *slot = Err(EvalError::Fold { fold, source: Box::new(e) }),
                }
            }
        }
    }
    Ok(per_spec
        .into_iter()
        .map(|r| r.map(|folds| CvOutcome { report: MetricsReport::from_folds(folds), folds: details.clone() }))
        .collect())
}

pub fn cross_validate<F: Scalar>(
    table: &Table<F>,
    spec: &LearnerSpec,
    options: &PipelineOptions,
    k: usize,
    seed: u64,
) -> Result<CvOutcome, EvalError> {
    cross_validate_many(table, std::slice::from_ref(spec), options, k, seed)?
        .pop()
        .expect("one result per spec")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FeatureKind, Schema};
    use crate::learners::{LearnerKind, LearnerParams, TreeParams};

    fn line_table(n: usize, positives: usize) -> Table<f64> {
        let schema = Schema::new(vec!["x".into()], vec![FeatureKind::Continuous], "y").unwrap();
        let rows = (0..n).map(|i| vec![i as f64]).collect();
        let labels = (0..n).map(|i| u8::from(i < positives)).collect();
        Table::new(rows, labels, schema).unwrap()
    }

    #[test]
    fn majority_predictor_matches_class_ratio() {
        let t = line_table(1000, 93);
        let stump = LearnerSpec::new(LearnerParams::DecisionTree(TreeParams { max_depth: Some(0), min_samples_split: 2 }), 0);
        let out = cross_validate(&t, &stump, &PipelineOptions::plain(EvalMode::LeakageSafe), 10, 3).unwrap();
        assert!((out.report.accuracy - 0.907).abs() < 1e-12);
        assert_eq!(out.report.recall, 0.0);
        assert_eq!(out.report.undefined_folds.precision, 10);
    }

    #[test]
    fn leave_one_out_shape() {
        let schema = Schema::new(vec!["x".into()], vec![FeatureKind::Continuous], "y").unwrap();
        let t = Table::new(
            vec![vec![0.0], vec![1.0], vec![2.0], vec![10.0], vec![11.0], vec![12.0]],
            vec![0, 0, 0, 1, 1, 1],
            schema,
        )
        .unwrap();
        let spec = LearnerSpec::default_for(LearnerKind::Lda, 0);
        let out = cross_validate(&t, &spec, &PipelineOptions::plain(EvalMode::PaperFaithful), 6, 1).unwrap();
        assert_eq!(out.report.per_fold.len(), 6);
        assert_eq!(out.report.accuracy, 1.0);
    }

    #[test]
    fn failing_fold_is_named() {
        // 2 positives over 2 folds: each training fold holds one positive, too few for LDA.
        let t = line_table(10, 2);
        let spec = LearnerSpec::default_for(LearnerKind::Lda, 0);
        let err = cross_validate(&t, &spec, &PipelineOptions::plain(EvalMode::LeakageSafe), 2, 0).unwrap_err();
        assert!(matches!(err, EvalError::Fold { fold: 0, .. }), "{err}");
    }

    #[test]
    fn leakage_safe_keeps_synthetic_rows_out_of_test_folds() {
        let t = line_table(60, 12);
        let mut options = PipelineOptions::plain(EvalMode::LeakageSafe);
        options.balance = BalanceStep::KmeansSmote(SmoteConfig { n_clusters: 2, ..Default::default() });
        let spec = LearnerSpec::default_for(LearnerKind::DecisionTree, 0);
        let safe = cross_validate(&t, &spec, &options, 5, 9).unwrap();
        assert!(safe.folds.iter().all(|f| f.synthetic_in_test == 0 && f.synthetic_in_train > 0));
        assert_eq!(safe.folds.iter().map(|f| f.n_test).sum::<usize>(), 60);

        options.mode = EvalMode::PaperFaithful;
        let leaky = cross_validate(&t, &spec, &options, 5, 9).unwrap();
        assert_eq!(leaky.folds.iter().map(|f| f.synthetic_in_test).sum::<usize>(), 36);
    }

    #[test]
    fn selection_indices_carry_to_test_rows() {
        let schema = Schema::new(
            vec!["noise".into(), "signal".into()],
            vec![FeatureKind::Continuous, FeatureKind::Binary],
            "y",
        )
        .unwrap();
        let rows = (0..40).map(|i| vec![((i * 37) % 11) as f64, f64::from(u8::from(i % 2 == 0))]).collect();
        let labels = (0..40).map(|i| u8::from(i % 2 == 0)).collect();
        let t = Table::new(rows, labels, schema).unwrap();
        let mut options = PipelineOptions::plain(EvalMode::LeakageSafe);
        options.selection = SelectionConfig { method: SelectionMethod::Correlation, m: 1, wrapper: WrapperSpec::default() };
        let spec = LearnerSpec::default_for(LearnerKind::DecisionTree, 0);
        let out = cross_validate(&t, &spec, &options, 4, 2).unwrap();
        assert!(out.folds.iter().all(|f| f.columns == vec![1]));
        assert_eq!(out.report.accuracy, 1.0);
    }

    #[test]
    fn deterministic() {
        let t = line_table(80, 20);
        let spec = LearnerSpec::default_for(LearnerKind::RandomForest, 5);
        let o = PipelineOptions::plain(EvalMode::LeakageSafe);
        assert_eq!(cross_validate(&t, &spec, &o, 4, 1).unwrap(), cross_validate(&t, &spec, &o, 4, 1).unwrap());
    }
}
