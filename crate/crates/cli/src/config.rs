//! Experiment configuration: strict JSON with documented defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};
use thiserror::Error;

use tabclass::balance::SmoteConfig;
use tabclass::data::FeatureKind;
use tabclass::eval::{Averaging, EvalMode};
use tabclass::featsel::{SelectionMethod, WrapperSpec};
use tabclass::learners::{LearnerKind, LearnerSpec};
use tabclass::rng::{derive_seed, label_id};

pub const DEFAULT_CV_K: usize = 10;
pub const DEFAULT_SUBSET_SIZE: usize = 10;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config is not valid JSON: {0}")]
    Json(String),
    #[error("unknown key \"{key}\" in {location}")]
    UnknownKey { key: String, location: String },
    #[error("missing required key \"{key}\" in {location}")]
    MissingKey { key: String, location: String },
    #[error("invalid value at {location}: {message}")]
    Validation { location: String, message: String },
}

fn invalid(location: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Validation { location: location.into(), message: message.into() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BalancingChoice {
    None,
    KmeansSmote,
}

impl BalancingChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            BalancingChoice::None => "none",
            BalancingChoice::KmeansSmote => "kmeans_smote",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(BalancingChoice::None),
            "kmeans_smote" => Some(BalancingChoice::KmeansSmote),
            _ => None,
        }
    }
}

/// Values supplied on the command line; they win over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub mode: Option<EvalMode>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    /// As written in the file.
    pub dataset_path: String,
    /// `dataset_path` resolved against the config file's directory.
    pub dataset_location: PathBuf,
    pub target_name: String,
    pub seed: u64,
    pub mode: EvalMode,
    pub cv_k: usize,
    pub balancing: Vec<BalancingChoice>,
    pub smote: SmoteConfig,
    pub selection: Vec<SelectionMethod>,
    pub m: usize,
    pub wrapper: WrapperSpec,
    pub learners: Vec<LearnerSpec>,
    pub output_dir: PathBuf,
    pub averaging: Averaging,
    pub kind_hints: BTreeMap<String, FeatureKind>,
    pub impute_missing: bool,
}

const TOP_KEYS: &[&str] = &[
    "dataset_path",
    "target_name",
    "seed",
    "mode",
    "cv_k",
    "balancing",
    "smote",
    "selection",
    "m",
    "wrapper",
    "learners",
    "output_dir",
    "averaging",
    "kind_hints",
    "impute_missing",
];
const SMOTE_KEYS: &[&str] = &[
    "n_clusters",
    "irt",
    "k_neighbors",
    "density_exponent",
    "round_discrete",
    "scale_for_clustering",
    "max_iter",
    "tol",
];
const WRAPPER_KEYS: &[&str] = &["inner_learner", "inner_cv_k", "row_subsample"];

fn learner_keys(kind: &str) -> Option<&'static [&'static str]> {
    Some(match kind {
        "decision_tree" => &["kind", "seed", "max_depth", "min_samples_split"],
        "random_forest" => &["kind", "seed", "n_trees", "mtry", "max_depth", "min_samples_split"],
        "extra_trees" => &["kind", "seed", "n_trees", "mtry", "max_depth", "min_samples_split", "bootstrap"],
        "adaboost" => &["kind", "seed", "rounds"],
        "lda" => &["kind", "seed", "lambda"],
        _ => return None,
    })
}

fn as_object<'a>(value: &'a Value, location: &str) -> Result<&'a Map<String, Value>, ConfigError> {
    value.as_object().ok_or_else(|| invalid(location, "expected a JSON object"))
}

fn check_keys(obj: &Map<String, Value>, allowed: &[&str], location: &str) -> Result<(), ConfigError> {
    match obj.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(key) => Err(ConfigError::UnknownKey { key: key.clone(), location: location.to_string() }),
        None => Ok(()),
    }
}

fn required<'a>(obj: &'a Map<String, Value>, key: &str, location: &str) -> Result<&'a Value, ConfigError> {
    obj.get(key).ok_or_else(|| ConfigError::MissingKey { key: key.into(), location: location.into() })
}

fn string(value: &Value, location: &str) -> Result<String, ConfigError> {
    value.as_str().map(str::to_string).ok_or_else(|| invalid(location, "expected a string"))
}

fn count(value: &Value, location: &str) -> Result<usize, ConfigError> {
    value
        .as_u64()
        .and_then(|v| usize::try_from(v).ok())
        .ok_or_else(|| invalid(location, "expected a non-negative integer"))
}

fn string_list(value: &Value, location: &str) -> Result<Vec<String>, ConfigError> {
    let items = value.as_array().ok_or_else(|| invalid(location, "expected a list"))?;
    if items.is_empty() {
        return Err(invalid(location, "list must not be empty"));
    }
    items.iter().enumerate().map(|(i, v)| string(v, &format!("{location}[{i}]"))).collect()
}

fn parse_mode(s: &str, location: &str) -> Result<EvalMode, ConfigError> {
    match s {
        "paper_faithful" => Ok(EvalMode::PaperFaithful),
        "leakage_safe" => Ok(EvalMode::LeakageSafe),
        other => Err(invalid(location, format!("unknown mode \"{other}\" (paper_faithful | leakage_safe)"))),
    }
}

fn parse_selection(s: &str, location: &str) -> Result<SelectionMethod, ConfigError> {
    SelectionMethod::ALL
        .into_iter()
        .find(|m| m.as_str() == s)
        .ok_or_else(|| invalid(location, format!("unknown selection method \"{s}\"")))
}

/// A learner entry: a kind name or an object with `kind` and hyperparameters.
fn parse_learner(value: &Value, default_seed: u64, location: &str) -> Result<LearnerSpec, ConfigError> {
    let object = match value {
        Value::String(kind) => json!({ "kind": kind }),
        Value::Object(_) => value.clone(),
        _ => return Err(invalid(location, "expected a learner name or object")),
    };
    let obj = as_object(&object, location)?;
    let kind = string(required(obj, "kind", location)?, &format!("{location}.kind"))?;
    let allowed = learner_keys(&kind).ok_or_else(|| {
        let known: Vec<&str> = LearnerKind::ALL.iter().map(|k| k.as_str()).collect();
        invalid(format!("{location}.kind"), format!("unknown learner \"{kind}\" (one of {})", known.join(", ")))
    })?;
    check_keys(obj, allowed, location)?;
    LearnerSpec::from_json(&object, default_seed).map_err(|e| invalid(location, e.to_string()))
}

fn parse_wrapper(value: Option<&Value>, seed: u64) -> Result<WrapperSpec, ConfigError> {
    let mut wrapper = WrapperSpec { seed, ..WrapperSpec::default() };
    wrapper.inner_learner.seed = derive_seed(seed, &[label_id("wrapper")]);
    let Some(value) = value else { return Ok(wrapper) };
    let obj = as_object(value, "config.wrapper")?;
    check_keys(obj, WRAPPER_KEYS, "config.wrapper")?;
    if let Some(v) = obj.get("inner_learner") {
        wrapper.inner_learner = parse_learner(v, wrapper.inner_learner.seed, "config.wrapper.inner_learner")?;
    }
    if let Some(v) = obj.get("inner_cv_k") {
        wrapper.inner_cv_k = count(v, "config.wrapper.inner_cv_k")?;
    }
    if let Some(v) = obj.get("row_subsample") {
        wrapper.row_subsample =
            if v.is_null() { None } else { Some(count(v, "config.wrapper.row_subsample")?) };
    }
    wrapper.validate().map_err(|e| invalid("config.wrapper", e.to_string()))?;
    Ok(wrapper)
}

impl ExperimentConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base, overrides)
    }

    /// Parse a config document; relative dataset paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path, overrides: &Overrides) -> Result<Self, ConfigError> {
        let value: Value = serde_json::from_str(text).map_err(|e| ConfigError::Json(e.to_string()))?;
        Self::from_value(&value, base_dir, overrides)
    }

    pub fn from_value(value: &Value, base_dir: &Path, overrides: &Overrides) -> Result<Self, ConfigError> {
        let loc = "config";
        let obj = as_object(value, loc)?;
        check_keys(obj, TOP_KEYS, loc)?;

        let dataset_path = string(required(obj, "dataset_path", loc)?, "config.dataset_path")?;
        let target_name = string(required(obj, "target_name", loc)?, "config.target_name")?;
        let file_seed =
            required(obj, "seed", loc)?.as_u64().ok_or_else(|| invalid("config.seed", "expected an unsigned integer"))?;
        let seed = overrides.seed.unwrap_or(file_seed);

        let mode = match (overrides.mode, obj.get("mode")) {
            (Some(m), _) => m,
            (None, Some(v)) => parse_mode(&string(v, "config.mode")?, "config.mode")?,
            (None, None) => EvalMode::LeakageSafe,
        };
        let cv_k = match obj.get("cv_k") {
            Some(v) => count(v, "config.cv_k")?,
            None => DEFAULT_CV_K,
        };
        if cv_k < 2 {
            return Err(invalid("config.cv_k", format!("must be >= 2 (got {cv_k})")));
        }

        let balancing = match obj.get("balancing") {
            None => vec![BalancingChoice::None],
            Some(v) => string_list(v, "config.balancing")?
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    BalancingChoice::parse(s).ok_or_else(|| {
                        invalid(format!("config.balancing[{i}]"), format!("unknown balancing \"{s}\" (none | kmeans_smote)"))
                    })
                })
                .collect::<Result<_, _>>()?,
        };
        let smote = match obj.get("smote") {
            None => SmoteConfig::default(),
            Some(v) => {
                check_keys(as_object(v, "config.smote")?, SMOTE_KEYS, "config.smote")?;
                let s: SmoteConfig =
                    serde_json::from_value(v.clone()).map_err(|e| invalid("config.smote", e.to_string()))?;
                s.validate().map_err(|e| invalid("config.smote", e.to_string()))?;
                s
            }
        };

        let selection = match obj.get("selection") {
            None => vec![SelectionMethod::None],
            Some(v) => string_list(v, "config.selection")?
                .iter()
                .enumerate()
                .map(|(i, s)| parse_selection(s, &format!("config.selection[{i}]")))
                .collect::<Result<_, _>>()?,
        };
        let m = match obj.get("m") {
            Some(v) => count(v, "config.m")?,
            None => DEFAULT_SUBSET_SIZE,
        };
        if m == 0 {
            return Err(invalid("config.m", "subset size must be >= 1"));
        }
        let wrapper = parse_wrapper(obj.get("wrapper"), seed)?;

        let learners = match obj.get("learners") {
            None => LearnerKind::ALL
                .iter()
                .enumerate()
                .map(|(i, &k)| LearnerSpec::default_for(k, learner_seed(seed, i)))
                .collect(),
            Some(v) => {
                let items = v.as_array().ok_or_else(|| invalid("config.learners", "expected a list"))?;
                if items.is_empty() {
                    return Err(invalid("config.learners", "list must not be empty"));
                }
                items
                    .iter()
                    .enumerate()
                    .map(|(i, item)| parse_learner(item, learner_seed(seed, i), &format!("config.learners[{i}]")))
                    .collect::<Result<_, _>>()?
            }
        };

        let output_dir = match (&overrides.output_dir, obj.get("output_dir")) {
            (Some(dir), _) => dir.clone(),
            (None, Some(v)) => base_dir.join(string(v, "config.output_dir")?),
            (None, None) => PathBuf::from("reports"),
        };
        let averaging = match obj.get("averaging").map(|v| string(v, "config.averaging")).transpose()?.as_deref() {
            None | Some("binary") => Averaging::Binary,
            Some("macro") => Averaging::Macro,
            Some(other) => return Err(invalid("config.averaging", format!("unknown averaging \"{other}\" (binary | macro)"))),
        };
        let kind_hints = match obj.get("kind_hints") {
            None => BTreeMap::new(),
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| invalid("config.kind_hints", e.to_string()))?,
        };
        let impute_missing = match obj.get("impute_missing") {
            None => false,
            Some(v) => v.as_bool().ok_or_else(|| invalid("config.impute_missing", "expected true or false"))?,
        };

        Ok(ExperimentConfig {
            dataset_location: base_dir.join(&dataset_path),
            dataset_path,
            target_name,
            seed,
            mode,
            cv_k,
            balancing,
            smote,
            selection,
            m,
            wrapper,
            learners,
            output_dir,
            averaging,
            kind_hints,
            impute_missing,
        })
    }

    /// Canonical echo with every default and seed spelled out. Parsing it
    /// back (from the same directory) yields an equal config, apart from
    /// `output_dir`, which is left out so reports do not depend on where they
    /// are written.
    pub fn to_json(&self) -> Value {
        json!({
            "dataset_path": self.dataset_path,
            "target_name": self.target_name,
            "seed": self.seed,
            "mode": self.mode.as_str(),
            "cv_k": self.cv_k,
            "balancing": self.balancing.iter().map(|b| b.as_str()).collect::<Vec<_>>(),
            "smote": serde_json::to_value(&self.smote).expect("smote config serializes"),
            "selection": self.selection.iter().map(|s| s.as_str()).collect::<Vec<_>>(),
            "m": self.m,
            "wrapper": {
                "inner_learner": self.wrapper.inner_learner.to_json(),
                "inner_cv_k": self.wrapper.inner_cv_k,
                "row_subsample": self.wrapper.row_subsample,
            },
            "learners": self.learners.iter().map(LearnerSpec::to_json).collect::<Vec<_>>(),
            "averaging": match self.averaging { Averaging::Binary => "binary", Averaging::Macro => "macro" },
            "kind_hints": serde_json::to_value(&self.kind_hints).expect("hints serialize"),
            "impute_missing": self.impute_missing,
        })
    }
}

/// Seed of the `index`-th configured learner when the file gives none.
pub fn learner_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, &[label_id("learner"), index as u64])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
        ExperimentConfig::parse(text, Path::new(""), &Overrides::default())
    }

    const MINIMAL: &str = r#"{"dataset_path": "heart.csv", "target_name": "HeartDisease", "seed": 7}"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse(MINIMAL).unwrap();
        assert_eq!(c.cv_k, 10);
        assert_eq!(c.mode, EvalMode::LeakageSafe);
        assert_eq!(c.balancing, vec![BalancingChoice::None]);
        assert_eq!(c.selection, vec![SelectionMethod::None]);
        let kinds: Vec<LearnerKind> = c.learners.iter().map(LearnerSpec::kind).collect();
        assert_eq!(kinds, LearnerKind::ALL.to_vec());
        assert_eq!(c.m, 10);
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = parse(r#"{"dataset_path": "d", "target_name": "y", "seed": 1, "foo": 2}"#).unwrap_err();
        assert!(matches!(&err, ConfigError::UnknownKey { key, location } if key == "foo" && location == "config"));
        let err = parse(r#"{"dataset_path": "d", "target_name": "y", "seed": 1, "smote": {"clusters": 3}}"#).unwrap_err();
        assert!(matches!(&err, ConfigError::UnknownKey { key, location } if key == "clusters" && location == "config.smote"));
        let err = parse(
            r#"{"dataset_path": "d", "target_name": "y", "seed": 1, "learners": ["lda", {"kind": "lda", "depth": 3}]}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("\"depth\"") && err.to_string().contains("config.learners[1]"), "{err}");
    }

    #[test]
    fn validation_errors() {
        let err = parse(r#"{"dataset_path": "d", "target_name": "y", "seed": 1, "cv_k": 1}"#).unwrap_err();
        assert!(matches!(err, ConfigError::Validation { ref location, .. } if location == "config.cv_k"));
        assert!(matches!(
            parse(r#"{"dataset_path": "d", "target_name": "y"}"#).unwrap_err(),
            ConfigError::MissingKey { ref key, .. } if key == "seed"
        ));
        assert!(parse(r#"{"dataset_path": "d", "target_name": "y", "seed": 1, "balancing": []}"#).is_err());
        assert!(parse(r#"{"dataset_path": "d", "target_name": "y", "seed": 1, "selection": ["lasso"]}"#).is_err());
        assert!(parse(r#"{"dataset_path": "d", "target_name": "y", "seed": 1, "mode": "fast"}"#).is_err());
    }

    #[test]
    fn echo_round_trips() {
        let c = parse(
            r#"{"dataset_path": "d.csv", "target_name": "y", "seed": 3, "mode": "paper_faithful",
                "balancing": ["none", "kmeans_smote"], "smote": {"n_clusters": 4},
                "selection": ["chi2", "sfs"], "m": 5, "wrapper": {"row_subsample": null},
                "learners": ["decision_tree", {"kind": "random_forest", "n_trees": 10, "seed": 99}]}"#,
        )
        .unwrap();
        let again = ExperimentConfig::from_value(&c.to_json(), Path::new(""), &Overrides::default()).unwrap();
        assert_eq!(again, c);
        assert_eq!(c.learners[1].seed, 99);
    }

    #[test]
    fn overrides_win_and_reseed_learners() {
        let a = parse(MINIMAL).unwrap();
        let o = Overrides { seed: Some(8), mode: Some(EvalMode::PaperFaithful), output_dir: None };
        let b = ExperimentConfig::parse(MINIMAL, Path::new(""), &o).unwrap();
        assert_eq!(b.seed, 8);
        assert_eq!(b.mode, EvalMode::PaperFaithful);
        assert_ne!(a.learners[1].seed, b.learners[1].seed);
    }
}
