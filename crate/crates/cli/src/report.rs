//! Report tables (CSV and Markdown), provenance and timings.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use tabclass::data::ClassCounts;
use tabclass::eval::{CvOutcome, EvalMode, Metrics, MetricsReport};

use crate::config::ExperimentConfig;
use crate::grid::{path_tag, CellResult, GridRun};

pub const PROVENANCE_VERSION: u32 = 1;
/// Marks a cell where at least one fold evaluated 0/0 for the metric.
pub const UNDEFINED_MARK: &str = "*";
const FAILED: &str = "failed";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Accuracy,
    F1,
    Precision,
    Recall,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Accuracy, Metric::F1, Metric::Precision, Metric::Recall];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::F1 => "f1",
            Metric::Precision => "precision",
            Metric::Recall => "recall",
        }
    }

    fn title(self) -> &'static str {
        match self {
            Metric::Accuracy => "Accuracy",
            Metric::F1 => "F1 score",
            Metric::Precision => "Precision",
            Metric::Recall => "Recall",
        }
    }

    fn headline(self, r: &MetricsReport) -> f64 {
        match self {
            Metric::Accuracy => r.accuracy,
            Metric::F1 => r.f1,
            Metric::Precision => r.precision,
            Metric::Recall => r.recall,
        }
    }

    fn undefined_folds(self, r: &MetricsReport) -> usize {
        match self {
            Metric::Accuracy => 0,
            Metric::F1 => r.undefined_folds.f1,
            Metric::Precision => r.undefined_folds.precision,
            Metric::Recall => r.undefined_folds.recall,
        }
    }
}

/// Percentage with two decimals, rounded half-up.
pub fn percent(value: f64) -> String {
    format!("{:.2}", (value * 10_000.0).round() / 100.0)
}

fn cell_text(metric: Metric, cell: &CellResult) -> String {
    match &cell.outcome {
        Ok(out) => {
            let mark = if metric.undefined_folds(&out.report) > 0 { UNDEFINED_MARK } else { "" };
            format!("{}{mark}", percent(metric.headline(&out.report)))
        }
        Err(_) => FAILED.to_string(),
    }
}

/// Rows are learners, columns (balancing, selection) pairs, both in config order.
struct Layout<'a> {
    columns: Vec<String>,
    rows: Vec<(&'a str, Vec<&'a CellResult>)>,
}

fn layout(run: &GridRun) -> Layout<'_> {
    let mut columns: Vec<String> = Vec::new();
    let mut rows: Vec<(&str, Vec<&CellResult>)> = Vec::new();
    for cell in &run.cells {
        let column = format!("{} / {}", cell.balancing.as_str(), cell.selection.as_str());
        if columns.last() != Some(&column) {
            columns.push(column);
        }
        match rows.iter_mut().find(|(l, _)| *l == cell.learner) {
            Some((_, cells)) => cells.push(cell),
            None => rows.push((&cell.learner, vec![cell])),
        }
    }
    Layout { columns, rows }
}

pub fn render_csv(metric: Metric, run: &GridRun) -> String {
    let layout = layout(run);
    let mut out = String::from("learner");
    for c in &layout.columns {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (learner, cells) in &layout.rows {
        out.push_str(learner);
        for cell in cells {
            out.push(',');
            out.push_str(&cell_text(metric, cell));
        }
        out.push('\n');
    }
    out
}

fn mode_note(mode: EvalMode) -> &'static str {
    match mode {
        EvalMode::PaperFaithful => {
            "**paper_faithful**: balancing and feature selection are fitted on the whole table before the folds are \
             cut, so synthetic and duplicated rows can reach the test folds and scores are optimistic."
        }
        EvalMode::LeakageSafe => {
            "**leakage_safe**: balancing and feature selection are fitted on each training fold only; test folds hold \
             original rows."
        }
    }
}

pub fn render_markdown(metric: Metric, run: &GridRun, config: &ExperimentConfig) -> String {
    let layout = layout(run);
    let mut out = String::new();
    let _ = writeln!(out, "# {} (%)\n", metric.title());
    let _ = writeln!(out, "Mode {}\n", mode_note(config.mode));
    let _ = writeln!(out, "{}-fold stratified cross-validation, seed {}. Columns are balancing / feature selection.\n", config.cv_k, config.seed);
    let _ = write!(out, "| learner |");
    for c in &layout.columns {
        let _ = write!(out, " {c} |");
    }
    out.push_str("\n|---|");
    for _ in &layout.columns {
        out.push_str("---:|");
    }
    out.push('\n');
    let mut marked = false;
    for (learner, cells) in &layout.rows {
        let _ = write!(out, "| {learner} |");
        for cell in cells {
            let text = cell_text(metric, cell);
            marked |= text.ends_with(UNDEFINED_MARK);
            // Escape the marker so it is not read as emphasis.
            let _ = write!(out, " {} |", text.replace(UNDEFINED_MARK, "\\*"));
        }
        out.push('\n');
    }
    if marked {
        let _ = writeln!(out, "\n\\* At least one fold divided 0 by 0 for this metric; such folds count as 0.");
    }
    if run.cells.iter().any(CellResult::failed) {
        let _ = writeln!(out, "\n`failed` cells are explained in provenance.json.");
    }
    out
}

fn metrics_json(m: &Metrics) -> Value {
    json!({
        "accuracy": m.accuracy,
        "precision": m.precision,
        "recall": m.recall,
        "f1": m.f1,
        "undefined": m.undefined,
    })
}

fn outcome_json(out: &CvOutcome, feature_names: &[String]) -> Value {
    let r = &out.report;
    let fallbacks: Vec<String> = out
        .folds
        .iter()
        .filter_map(|f| match f.balance_path {
            Some(p @ (tabclass::BalancePath::RelaxedIrt { .. } | tabclass::BalancePath::PlainSmote)) => {
                Some(format!("fold {}: {}", f.fold, path_tag(p)))
            }
            _ => None,
        })
        .collect();
    json!({
        "accuracy": r.accuracy,
        "precision": r.precision,
        "recall": r.recall,
        "f1": r.f1,
        "undefined_folds": r.undefined_folds,
        "fallbacks": fallbacks,
        "folds": out.folds.iter().zip(&r.per_fold).map(|(f, m)| json!({
            "fold": f.fold,
            "n_train": f.n_train,
            "n_test": f.n_test,
            "synthetic_in_train": f.synthetic_in_train,
            "synthetic_in_test": f.synthetic_in_test,
            "balance_path": f.balance_path.map(path_tag),
            "features": f.columns.iter().map(|&c| feature_names[c].as_str()).collect::<Vec<_>>(),
            "metrics": metrics_json(m),
        })).collect::<Vec<_>>(),
    })
}

/// Everything needed to rerun and audit the grid. Holds no timings, so it is
/// byte-identical across reruns.
pub fn provenance(config: &ExperimentConfig, run: &GridRun, counts: &ClassCounts, feature_names: &[String]) -> Value {
    json!({
        "format_version": PROVENANCE_VERSION,
        "tool": concat!("tabclass ", env!("CARGO_PKG_VERSION")),
        "mode": config.mode.as_str(),
        "seed": config.seed,
        "dataset": {
            "rows": counts.n_total,
            "positives": counts.n_positive,
            "negatives": counts.n_negative,
            "features": feature_names,
        },
        "config": config.to_json(),
        "cells": run.cells.iter().map(|c| {
            let mut v = json!({
                "balancing": c.balancing.as_str(),
                "selection": c.selection.as_str(),
                "learner": c.learner,
                "spec": c.spec.to_json(),
            });
            let obj = v.as_object_mut().expect("object");
            match &c.outcome {
                Ok(out) => {
                    obj.insert("status".into(), "ok".into());
                    obj.insert("result".into(), outcome_json(out, feature_names));
                }
                Err(e) => {
                    obj.insert("status".into(), "failed".into());
                    obj.insert("error".into(), e.clone().into());
                }
            }
            v
        }).collect::<Vec<_>>(),
    })
}

pub fn timings(run: &GridRun) -> Value {
    json!({
        "note": "wall-clock seconds per (balancing, selection) group; the group's learners share folds and preparation",
        "groups": run.timings.iter().map(|t| json!({
            "balancing": t.balancing.as_str(),
            "selection": t.selection.as_str(),
            "seconds": t.seconds,
        })).collect::<Vec<_>>(),
        "total_seconds": run.timings.iter().map(|t| t.seconds).sum::<f64>(),
    })
}

fn write(path: PathBuf, contents: &str, written: &mut Vec<PathBuf>) -> std::io::Result<()> {
    fs::write(&path, contents)?;
    written.push(path);
    Ok(())
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json renders");
    s.push('\n');
    s
}

/// Write the four metric tables (CSV and Markdown), `provenance.json`,
/// `timings.json` and any dumped models. Returns the written paths.
pub fn emit_reports(
    dir: &Path,
    config: &ExperimentConfig,
    run: &GridRun,
    counts: &ClassCounts,
    feature_names: &[String],
) -> std::io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for metric in Metric::ALL {
        write(dir.join(format!("{}.csv", metric.as_str())), &render_csv(metric, run), &mut written)?;
        write(dir.join(format!("{}.md", metric.as_str())), &render_markdown(metric, run, config), &mut written)?;
    }
    write(dir.join("provenance.json"), &pretty(&provenance(config, run, counts, feature_names)), &mut written)?;
    write(dir.join("timings.json"), &pretty(&timings(run)), &mut written)?;
    if !run.models.is_empty() {
        let models = dir.join("models");
        fs::create_dir_all(&models)?;
        for m in &run.models {
            write(models.join(&m.file_name), &pretty(&m.document), &mut written)?;
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percent_rounds_half_up() {
        assert_eq!(percent(0.99834), "99.83");
        assert_eq!(percent(0.99835), "99.84");
        assert_eq!(percent(1.0), "100.00");
        assert_eq!(percent(0.0), "0.00");
        assert_eq!(percent(2.0 / 3.0), "66.67");
    }
}
