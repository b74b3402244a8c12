//! Runs every (balancing, selection, learner) cell of a configured grid.

use std::time::Instant;

use serde_json::{json, Value};

use tabclass::balance::BalancePath;
use tabclass::eval::{cross_validate_many, prepare, BalanceStep, CvOutcome, PipelineOptions};
use tabclass::featsel::{SelectionConfig, SelectionMethod};
use tabclass::learners::{self, LearnerSpec};
use tabclass::rng::{derive_seed, label_id};
use tabclass::Table;

use crate::config::{BalancingChoice, ExperimentConfig};

#[derive(Clone, Debug)]
pub struct CellResult {
    pub balancing: BalancingChoice,
    pub selection: SelectionMethod,
    /// Row label in the report tables.
    pub learner: String,
    pub spec: LearnerSpec,
    pub outcome: Result<CvOutcome, String>,
}

impl CellResult {
    pub fn failed(&self) -> bool {
        self.outcome.is_err()
    }
}

/// Wall time of one (balancing, selection) group; its learners share folds
/// and preparation, so they are timed together.
#[derive(Clone, Debug)]
pub struct GroupTiming {
    pub balancing: BalancingChoice,
    pub selection: SelectionMethod,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct DumpedModel {
    pub file_name: String,
    pub document: Value,
}

#[derive(Clone, Debug, Default)]
pub struct GridRun {
    /// Balancing-major, then selection, then learner, all in config order.
    pub cells: Vec<CellResult>,
    pub timings: Vec<GroupTiming>,
    pub models: Vec<DumpedModel>,
}

impl GridRun {
    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.failed()).count()
    }
}

/// Learner kinds, with a `#n` suffix when a kind is configured more than once.
pub fn learner_labels(specs: &[LearnerSpec]) -> Vec<String> {
    specs
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let kind = s.kind();
            let total = specs.iter().filter(|o| o.kind() == kind).count();
            if total == 1 {
                kind.as_str().to_string()
            } else {
                let nth = specs[..=i].iter().filter(|o| o.kind() == kind).count();
                format!("{}#{nth}", kind.as_str())
            }
        })
        .collect()
}

pub fn pipeline_for(config: &ExperimentConfig, balancing: BalancingChoice, selection: SelectionMethod) -> PipelineOptions {
    PipelineOptions {
        mode: config.mode,
        balance: match balancing {
            BalancingChoice::None => BalanceStep::None,
            BalancingChoice::KmeansSmote => BalanceStep::KmeansSmote(config.smote.clone()),
        },
        selection: SelectionConfig { method: selection, m: config.m, wrapper: config.wrapper.clone() },
        averaging: config.averaging,
    }
}

/// Seed for folds and preparation. Shared by all cells so every column of a
/// report is measured on the same folds and the same synthetic rows.
pub fn cv_seed(config: &ExperimentConfig) -> u64 {
    derive_seed(config.seed, &[label_id("cv")])
}

pub fn run_grid(config: &ExperimentConfig, table: &Table, dump_models: bool) -> GridRun {
    let labels = learner_labels(&config.learners);
    let seed = cv_seed(config);
    let mut run = GridRun::default();
    for &balancing in &config.balancing {
        for &selection in &config.selection {
            let options = pipeline_for(config, balancing, selection);
            let started = Instant::now();
            let results = match cross_validate_many(table, &config.learners, &options, config.cv_k, seed) {
                Ok(r) => r.into_iter().map(|o| o.map_err(|e| e.to_string())).collect(),
                Err(e) => vec![Err(e.to_string()); config.learners.len()],
            };
            if dump_models {
                run.models.extend(fit_full_models(config, table, &options, seed, balancing, selection, &labels));
            }
            run.timings.push(GroupTiming { balancing, selection, seconds: started.elapsed().as_secs_f64() });
            for ((spec, label), outcome) in config.learners.iter().zip(&labels).zip(results) {
                run.cells.push(CellResult {
                    balancing,
                    selection,
                    learner: label.clone(),
                    spec: spec.clone(),
                    outcome,
                });
            }
        }
    }
    run
}

/// Fit every learner on the whole prepared table (the same preparation the
/// paper-faithful folds are cut from).
fn fit_full_models(
    config: &ExperimentConfig,
    table: &Table,
    options: &PipelineOptions,
    seed: u64,
    balancing: BalancingChoice,
    selection: SelectionMethod,
    labels: &[String],
) -> Vec<DumpedModel> {
    let prepared = match prepare(table, &options.balance, &options.selection, seed) {
        Ok(p) => p,
        Err(_) => return Vec::new(),
    };
    let names = prepared.table.schema().feature_names().to_vec();
    config
        .learners
        .iter()
        .zip(labels)
        .filter_map(|(spec, label)| {
            let model = learners::fit(spec, prepared.table.matrix(), prepared.table.labels()).ok()?;
            Some(DumpedModel {
                file_name: format!("{}__{}__{}.json", balancing.as_str(), selection.as_str(), label.replace('#', "-")),
                document: json!({
                    "balancing": balancing.as_str(),
                    "selection": selection.as_str(),
                    "feature_names": names,
                    "balance_path": prepared.balance_path.map(path_tag),
                    "model": model.to_json_document(spec),
                }),
            })
        })
        .collect()
}

pub fn path_tag(path: BalancePath) -> String {
    match path {
        BalancePath::AlreadyBalanced => "already_balanced".into(),
        BalancePath::KmeansSmote => "kmeans_smote".into(),
        BalancePath::RelaxedIrt { irt } => format!("relaxed_irt({irt})"),
        BalancePath::PlainSmote => "plain_smote".into(),
    }
}
