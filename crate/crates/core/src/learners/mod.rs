//! The five classifiers behind one fit/predict contract.
//!
//! | kind            | hyperparameters (defaults)                                          |
//! |-----------------|---------------------------------------------------------------------|
//! | `decision_tree` | `max_depth` (unlimited), `min_samples_split` (2)                     |
//! | `random_forest` | `n_trees` (100), `mtry` (⌈√p⌉), `max_depth`, `min_samples_split`     |
//! | `extra_trees`   | `n_trees` (100), `mtry` (⌈√p⌉), `bootstrap` (false), `max_depth`, `min_samples_split` |
//! | `adaboost`      | `rounds` (50)                                                       |
//! | `lda`           | `lambda` (1e-4)                                                     |
//!
//! Every prediction tie (equal votes, equal leaf counts, equal discriminants)
//! resolves to label 0.

pub mod adaboost;
pub mod forest;
pub mod lda;
pub mod tree;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use adaboost::AdaBoostModel;
pub use forest::Forest;
pub use lda::LdaModel;
pub use tree::{Tree, TreeNode};

use crate::data::Matrix;
use crate::scalar::Scalar;

/// Version of the JSON document written by [`Model::to_json_document`].
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnerError {
    #[error("training data holds a single class")]
    SingleClassInput,
    #[error("training data is empty")]
    EmptyInput,
    #[error("class {class} has {count} samples; LDA needs at least 2 per class")]
    LdaDegenerate { class: u8, count: usize },
    #[error("regularized pooled covariance is not positive definite")]
    LdaSingular,
    #[error("model expects {expected} features, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{rows} rows but {labels} labels")]
    LabelMismatch { rows: usize, labels: usize },
    #[error("invalid learner specification: {0}")]
    InvalidSpec(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    DecisionTree,
    RandomForest,
    ExtraTrees,
    Adaboost,
    Lda,
}

impl LearnerKind {
    pub const ALL: [LearnerKind; 5] = [
        LearnerKind::DecisionTree,
        LearnerKind::RandomForest,
        LearnerKind::ExtraTrees,
        LearnerKind::Adaboost,
        LearnerKind::Lda,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LearnerKind::DecisionTree => "decision_tree",
            LearnerKind::RandomForest => "random_forest",
            LearnerKind::ExtraTrees => "extra_trees",
            LearnerKind::Adaboost => "adaboost",
            LearnerKind::Lda => "lda",
        }
    }
}

fn default_min_split() -> usize {
    2
}
fn default_trees() -> usize {
    100
}
fn default_rounds() -> usize {
    50
}
fn default_lambda() -> f64 {
    1e-4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeParams {
    #[serde(default)]
    pub max_depth: Option<usize>,
    #[serde(default = "default_min_split")]
    pub min_samples_split: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self { max_depth: None, min_samples_split: 2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestParams {
    #[serde(default = "default_trees")]
    pub n_trees: usize,
    #[serde(default)]
    pub mtry: Option<usize>,
    #[serde(default)]
    pub max_depth: Option<usize>,
    #[serde(default = "default_min_split")]
    pub min_samples_split: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self { n_trees: 100, mtry: None, max_depth: None, min_samples_split: 2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtraTreesParams {
    #[serde(default = "default_trees")]
    pub n_trees: usize,
    #[serde(default)]
    pub mtry: Option<usize>,
    #[serde(default)]
    pub bootstrap: bool,
    #[serde(default)]
    pub max_depth: Option<usize>,
    #[serde(default = "default_min_split")]
    pub min_samples_split: usize,
}

impl Default for ExtraTreesParams {
    fn default() -> Self {
        Self { n_trees: 100, mtry: None, bootstrap: false, max_depth: None, min_samples_split: 2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaBoostParams {
    #[serde(default = "default_rounds")]
    pub rounds: usize,
}

impl Default for AdaBoostParams {
    fn default() -> Self {
        Self { rounds: 50 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LdaParams {
    #[serde(default = "default_lambda")]
    pub lambda: f64,
}

impl Default for LdaParams {
    fn default() -> Self {
        Self { lambda: 1e-4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerParams {
    DecisionTree(TreeParams),
    RandomForest(ForestParams),
    ExtraTrees(ExtraTreesParams),
    Adaboost(AdaBoostParams),
    Lda(LdaParams),
}

impl LearnerParams {
    pub fn default_for(kind: LearnerKind) -> Self {
        match kind {
            LearnerKind::DecisionTree => LearnerParams::DecisionTree(TreeParams::default()),
            LearnerKind::RandomForest => LearnerParams::RandomForest(ForestParams::default()),
            LearnerKind::ExtraTrees => LearnerParams::ExtraTrees(ExtraTreesParams::default()),
            LearnerKind::Adaboost => LearnerParams::Adaboost(AdaBoostParams::default()),
            LearnerKind::Lda => LearnerParams::Lda(LdaParams::default()),
        }
    }

    pub fn kind(&self) -> LearnerKind {
        match self {
            LearnerParams::DecisionTree(_) => LearnerKind::DecisionTree,
            LearnerParams::RandomForest(_) => LearnerKind::RandomForest,
            LearnerParams::ExtraTrees(_) => LearnerKind::ExtraTrees,
            LearnerParams::Adaboost(_) => LearnerKind::Adaboost,
            LearnerParams::Lda(_) => LearnerKind::Lda,
        }
    }

    fn validate(&self) -> Result<(), LearnerError> {
        let bad = |m: &str| Err(LearnerError::InvalidSpec(m.to_string()));
        match self {
            LearnerParams::DecisionTree(p) if p.min_samples_split < 2 => bad("min_samples_split must be >= 2"),
            LearnerParams::RandomForest(p) if p.n_trees == 0 => bad("n_trees must be >= 1"),
            LearnerParams::RandomForest(p) if p.mtry == Some(0) => bad("mtry must be >= 1"),
            LearnerParams::RandomForest(p) if p.min_samples_split < 2 => bad("min_samples_split must be >= 2"),
            LearnerParams::ExtraTrees(p) if p.n_trees == 0 => bad("n_trees must be >= 1"),
            LearnerParams::ExtraTrees(p) if p.mtry == Some(0) => bad("mtry must be >= 1"),
            LearnerParams::ExtraTrees(p) if p.min_samples_split < 2 => bad("min_samples_split must be >= 2"),
            LearnerParams::Adaboost(p) if p.rounds == 0 => bad("rounds must be >= 1"),
            LearnerParams::Lda(p) if !(p.lambda >= 0.0 && p.lambda.is_finite()) => bad("lambda must be finite and >= 0"),
            _ => Ok(()),
        }
    }
}

/// A learner kind, its hyperparameters and the seed for its random streams.
#[derive(Clone, Debug, PartialEq)]
pub struct LearnerSpec {
    pub params: LearnerParams,
    pub seed: u64,
}

impl LearnerSpec {
    pub fn new(params: LearnerParams, seed: u64) -> Self {
        Self { params, seed }
    }

    pub fn default_for(kind: LearnerKind, seed: u64) -> Self {
        Self::new(LearnerParams::default_for(kind), seed)
    }

    pub fn kind(&self) -> LearnerKind {
        self.params.kind()
    }

    /// Parse `{"kind": ..., <hyperparameters>, "seed"?: u64}`. Unknown keys are
    /// rejected; `default_seed` is used when no seed is given.
    pub fn from_json(value: &Value, default_seed: u64) -> Result<Self, LearnerError> {
        let mut obj = value
            .as_object()
            .cloned()
            .ok_or_else(|| LearnerError::InvalidSpec("learner must be a JSON object".into()))?;
        let seed = match obj.remove("seed") {
            None => default_seed,
            Some(v) => v
                .as_u64()
                .ok_or_else(|| LearnerError::InvalidSpec("seed must be an unsigned integer".into()))?,
        };
        let params: LearnerParams = serde_json::from_value(Value::Object(obj))
            .map_err(|e| LearnerError::InvalidSpec(e.to_string()))?;
        params.validate()?;
        Ok(Self { params, seed })
    }

    pub fn to_json(&self) -> Value {
        let mut v = serde_json::to_value(&self.params).expect("params serialize");
        v.as_object_mut().expect("tagged object").insert("seed".into(), Value::from(self.seed));
        v
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", bound = "F: Scalar")]
pub enum ModelBody<F> {
    DecisionTree(Tree<F>),
    RandomForest(Forest<F>),
    ExtraTrees(Forest<F>),
    Adaboost(AdaBoostModel<F>),
    Lda(LdaModel<F>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model<F> {
    pub n_features: usize,
    pub body: ModelBody<F>,
}

impl<F: Scalar> Model<F> {
    pub fn kind(&self) -> LearnerKind {
        match self.body {
            ModelBody::DecisionTree(_) => LearnerKind::DecisionTree,
            ModelBody::RandomForest(_) => LearnerKind::RandomForest,
            ModelBody::ExtraTrees(_) => LearnerKind::ExtraTrees,
            ModelBody::Adaboost(_) => LearnerKind::Adaboost,
            ModelBody::Lda(_) => LearnerKind::Lda,
        }
    }

    fn predict_row(&self, row: &[F]) -> u8 {
        match &self.body {
            ModelBody::DecisionTree(t) => t.predict_row(row),
            ModelBody::RandomForest(f) | ModelBody::ExtraTrees(f) => f.predict_row(row),
            ModelBody::Adaboost(m) => m.predict_row(row),
            ModelBody::Lda(m) => m.predict_row(row),
        }
    }

    fn vote_share_row(&self, row: &[F]) -> f64 {
        match &self.body {
            ModelBody::DecisionTree(t) => t.positive_share(row),
            ModelBody::RandomForest(f) | ModelBody::ExtraTrees(f) => f.vote_share(row),
            ModelBody::Adaboost(m) => m.vote_share(row),
            ModelBody::Lda(m) => m.vote_share(row),
        }
    }

    /// Versioned JSON document: tree nodes nested, matrices row-major.
    pub fn to_json_document(&self, spec: &LearnerSpec) -> Value {
        serde_json::json!({
            "format_version": MODEL_FORMAT_VERSION,
            "kind": self.kind().as_str(),
            "n_features": self.n_features,
            "spec": spec.to_json(),
            "model": serde_json::to_value(&self.body).expect("model serializes"),
        })
    }
}

pub fn fit<F: Scalar>(spec: &LearnerSpec, features: Matrix<'_, F>, labels: &[u8]) -> Result<Model<F>, LearnerError> {
    if features.n_rows() != labels.len() {
        return Err(LearnerError::LabelMismatch { rows: features.n_rows(), labels: labels.len() });
    }
    if labels.is_empty() {
        return Err(LearnerError::EmptyInput);
    }
    let ones = labels.iter().filter(|&&l| l == 1).count();
    if ones == 0 || ones == labels.len() {
        return Err(LearnerError::SingleClassInput);
    }
    spec.params.validate()?;
    let p = features.n_cols();
    let grow = |max_depth, min_samples_split| tree::GrowParams { max_depth, min_samples_split };

    let body = match &spec.params {
        LearnerParams::DecisionTree(hp) => {
            let all: Vec<usize> = (0..labels.len()).collect();
            let presorted = tree::Presorted::new(features);
            let mut rng = crate::rng::rng_from(spec.seed, &[]);
            ModelBody::DecisionTree(tree::grow_best(
                features,
                labels,
                &presorted,
                &all,
                grow(hp.max_depth, hp.min_samples_split),
                None,
                &mut rng,
            ))
        }
        LearnerParams::RandomForest(hp) => ModelBody::RandomForest(forest::fit_random_forest(
            features,
            labels,
            hp.n_trees,
            hp.mtry.unwrap_or_else(|| forest::default_mtry(p)),
            grow(hp.max_depth, hp.min_samples_split),
            spec.seed,
        )),
        LearnerParams::ExtraTrees(hp) => ModelBody::ExtraTrees(forest::fit_extra_trees(
            features,
            labels,
            hp.n_trees,
            hp.mtry.unwrap_or_else(|| forest::default_mtry(p)),
            hp.bootstrap,
            grow(hp.max_depth, hp.min_samples_split),
            spec.seed,
        )),
        LearnerParams::Adaboost(hp) => ModelBody::Adaboost(adaboost::fit_adaboost(features, labels, hp.rounds)),
        LearnerParams::Lda(hp) => ModelBody::Lda(lda::fit_lda(features, labels, F::from_f64_lossy(hp.lambda))?),
    };
    Ok(Model { n_features: p, body })
}

fn check_dims<F: Scalar>(model: &Model<F>, features: &Matrix<'_, F>) -> Result<(), LearnerError> {
    if features.n_cols() != model.n_features {
        return Err(LearnerError::DimensionMismatch { expected: model.n_features, found: features.n_cols() });
    }
    Ok(())
}

pub fn predict<F: Scalar>(model: &Model<F>, features: Matrix<'_, F>) -> Result<Vec<u8>, LearnerError> {
    check_dims(model, &features)?;
    Ok((0..features.n_rows()).map(|i| model.predict_row(features.row(i))).collect())
}

/// Share of ensemble votes for label 1 (α-weighted for AdaBoost, class-1 leaf
/// share for a single tree, softmax posterior for LDA).
pub fn predict_vote_share<F: Scalar>(model: &Model<F>, features: Matrix<'_, F>) -> Result<Vec<f64>, LearnerError> {
    check_dims(model, &features)?;
    Ok((0..features.n_rows()).map(|i| model.vote_share_row(features.row(i))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn spec_parsing_is_strict() {
        let s = LearnerSpec::from_json(&json!({"kind": "random_forest", "n_trees": 7}), 3).unwrap();
        assert_eq!(s.seed, 3);
        assert_eq!(
            s.params,
            LearnerParams::RandomForest(ForestParams { n_trees: 7, ..ForestParams::default() })
        );
        let s = LearnerSpec::from_json(&json!({"kind": "lda", "seed": 11}), 3).unwrap();
        assert_eq!(s.seed, 11);
        assert_eq!(s.params, LearnerParams::Lda(LdaParams { lambda: 1e-4 }));

        let err = LearnerSpec::from_json(&json!({"kind": "lda", "gamma": 1.0}), 0).unwrap_err();
        assert!(err.to_string().contains("gamma"), "{err}");
        assert!(LearnerSpec::from_json(&json!({"kind": "svm"}), 0).is_err());
        assert!(LearnerSpec::from_json(&json!({"kind": "adaboost", "rounds": 0}), 0).is_err());
    }

    #[test]
    fn spec_json_roundtrip() {
        for kind in LearnerKind::ALL {
            let s = LearnerSpec::default_for(kind, 42);
            assert_eq!(LearnerSpec::from_json(&s.to_json(), 0).unwrap(), s);
        }
    }

    #[test]
    fn fit_rejects_bad_inputs() {
        let xs = [1.0, 2.0];
        let x = Matrix::new(&xs, 2, 1);
        let spec = LearnerSpec::default_for(LearnerKind::DecisionTree, 0);
        assert_eq!(fit(&spec, x, &[1, 1]).unwrap_err(), LearnerError::SingleClassInput);
        assert!(matches!(fit(&spec, x, &[1]), Err(LearnerError::LabelMismatch { .. })));
        let m = fit(&spec, x, &[0, 1]).unwrap();
        let wide = [1.0, 2.0];
        assert_eq!(
            predict(&m, Matrix::new(&wide, 1, 2)).unwrap_err(),
            LearnerError::DimensionMismatch { expected: 1, found: 2 }
        );
    }

    #[test]
    fn model_document_is_versioned() {
        let xs = [0.0, 1.0, 4.0, 5.0];
        let spec = LearnerSpec::default_for(LearnerKind::Lda, 0);
        let m = fit(&spec, Matrix::new(&xs, 4, 1), &[0, 0, 1, 1]).unwrap();
        let doc = m.to_json_document(&spec);
        assert_eq!(doc["format_version"], 1);
        assert_eq!(doc["kind"], "lda");
        assert_eq!(doc["model"]["lda"]["class_means"], json!([0.5, 4.5]));
    }
}
