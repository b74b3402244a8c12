//! Imbalanced binary classification on tabular data: CSV loading, K-Means
//! SMOTE balancing, filter and wrapper feature selection, five tree/linear
//! learners and stratified cross-validation.
//!
//! Everything numeric is generic over [`Scalar`]; the aliases below fix the
//! common `f64` instantiation.

pub mod balance;
pub mod data;
pub mod eval;
pub mod featsel;
pub mod learners;
pub mod rng;
pub mod scalar;

pub use balance::{kmeans_fit, kmeans_smote, BalanceError, BalanceOutcome, BalancePath, SmoteConfig};
pub use data::{load_csv, parse_csv, DataError, FeatureKind, LoadOptions, Matrix, Schema};
pub use eval::{
    cross_validate, cross_validate_many, stratified_kfold, Averaging, BalanceStep, CvOutcome, EvalError, EvalMode,
    Metrics, MetricsReport, PipelineOptions,
};
pub use featsel::{run_selection, SelectionConfig, SelectionError, SelectionMethod, SelectionResult, WrapperSpec};
pub use learners::{fit, predict, LearnerError, LearnerKind, LearnerParams, LearnerSpec};
pub use scalar::Scalar;

pub type Table = data::Table<f64>;
pub type Table32 = data::Table<f32>;
pub type Model = learners::Model<f64>;
pub type Model32 = learners::Model<f32>;
pub type KMeansModel = balance::KMeansModel<f64>;
