use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use tabclass::balance::{kmeans_smote, SmoteConfig};
use tabclass::data::{class_counts, summarize, to_csv, LoadOptions};
use tabclass::eval::EvalMode;
use tabclass::featsel::{run_selection, SelectionConfig, SelectionMethod, WrapperSpec};
use tabclass::Table;
use tabclass_cli::grid::path_tag;
use tabclass_cli::{emit_reports, load_dataset, run_grid, ExperimentConfig, Overrides};

const EXIT_FAILED_CELLS: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;

#[derive(Parser)]
#[command(name = "tabclass", version, about = "Imbalanced binary classification experiments on tabular CSV data")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print class counts and per-feature statistics.
    Inspect(DataArgs),
    /// Write a K-Means SMOTE balanced copy of the dataset.
    Balance {
        #[command(flatten)]
        data: DataArgs,
        /// Output CSV.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        clusters: Option<usize>,
        #[arg(long)]
        k_neighbors: Option<usize>,
        #[arg(long)]
        irt: Option<f64>,
    },
    /// Run one feature-selection method and report the chosen features.
    Select {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum)]
        method: MethodArg,
        /// Subset size (default: config `m`, else 10).
        #[arg(long)]
        m: Option<usize>,
        /// Also write the dataset reduced to the chosen features.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the configured experiment grid and write report tables.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Report directory (default: config `output_dir`, else ./reports).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also fit every learner on the full prepared table and save it as JSON.
        #[arg(long)]
        dump_models: bool,
    },
}

#[derive(Args)]
struct DataArgs {
    /// Experiment config supplying dataset, target, seed and step settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV file (overrides the config).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Label column (overrides the config).
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Fill empty cells with their column mean instead of failing.
    #[arg(long)]
    impute_missing: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    PaperFaithful,
    LeakageSafe,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Chi2,
    Correlation,
    Sfs,
    Sbs,
}

struct Failure {
    code: u8,
    message: String,
}

fn config_error(e: impl std::fmt::Display) -> Failure {
    Failure { code: EXIT_CONFIG, message: format!("config error: {e}") }
}

fn data_error(e: impl std::fmt::Display) -> Failure {
    Failure { code: EXIT_DATA, message: format!("error: {e}") }
}

/// Dataset plus the step settings and seed that apply to it.
struct Loaded {
    table: Table,
    seed: u64,
    smote: SmoteConfig,
    wrapper: WrapperSpec,
    m: Option<usize>,
}

fn load(args: &DataArgs) -> Result<Loaded, Failure> {
    let overrides = Overrides { seed: args.seed, ..Overrides::default() };
    let config = args.config.as_deref().map(|p| ExperimentConfig::load(p, &overrides)).transpose().map_err(config_error)?;
    let path = match (&args.data, &config) {
        (Some(p), _) => p.clone(),
        (None, Some(c)) => c.dataset_location.clone(),
        (None, None) => return Err(config_error("give --data or --config")),
    };
    let target = match (&args.target, &config) {
        (Some(t), _) => t.clone(),
        (None, Some(c)) => c.target_name.clone(),
        (None, None) => return Err(config_error("give --target or --config")),
    };
    let options = LoadOptions {
        kind_hints: config.as_ref().map(|c| c.kind_hints.clone()).unwrap_or_default(),
        impute_missing: args.impute_missing || config.as_ref().is_some_and(|c| c.impute_missing),
    };
    let table = tabclass::load_csv(&path, &target, &options).map_err(data_error)?;
    let seed = args.seed.or(config.as_ref().map(|c| c.seed)).unwrap_or(0);
    Ok(match config {
        Some(c) => Loaded { table, seed, smote: c.smote, wrapper: c.wrapper, m: Some(c.m) },
        None => Loaded { table, seed, smote: SmoteConfig::default(), wrapper: WrapperSpec { seed, ..Default::default() }, m: None },
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| data_error(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| data_error(format!("{}: {e}", path.display())))
}

fn inspect(args: &DataArgs) -> Result<(), Failure> {
    let loaded = load(args)?;
    print!("{}", summarize(&loaded.table).render_text());
    Ok(())
}

fn balance(
    args: &DataArgs,
    out: &Path,
    clusters: Option<usize>,
    k_neighbors: Option<usize>,
    irt: Option<f64>,
) -> Result<(), Failure> {
    let loaded = load(args)?;
    let mut smote = loaded.smote;
    smote.n_clusters = clusters.unwrap_or(smote.n_clusters);
    smote.k_neighbors = k_neighbors.unwrap_or(smote.k_neighbors);
    smote.irt = irt.unwrap_or(smote.irt);
    let outcome = kmeans_smote(&loaded.table, &smote, loaded.seed).map_err(data_error)?;
    write_file(out, &to_csv(&outcome.table))?;
    let before = class_counts(&loaded.table);
    let after = class_counts(&outcome.table);
    println!("rows: {} -> {}", before.n_total, after.n_total);
    println!("positive (1): {} -> {}", before.n_positive, after.n_positive);
    println!("negative (0): {} -> {}", before.n_negative, after.n_negative);
    println!("synthetic: {}", outcome.table.n_rows() - outcome.n_original);
    println!("path: {}", path_tag(outcome.path));
    println!("selected clusters: {:?}", outcome.plan.selected_clusters);
    println!("budgets: {:?}", outcome.plan.per_cluster_budget);
    Ok(())
}

fn select(args: &DataArgs, method: MethodArg, m: Option<usize>, out: Option<&Path>) -> Result<(), Failure> {
    let loaded = load(args)?;
    let method = match method {
        MethodArg::Chi2 => SelectionMethod::Chi2,
        MethodArg::Correlation => SelectionMethod::Correlation,
        MethodArg::Sfs => SelectionMethod::Sfs,
        MethodArg::Sbs => SelectionMethod::Sbs,
    };
    let m = m.or(loaded.m).unwrap_or(tabclass_cli::config::DEFAULT_SUBSET_SIZE);
    let config = SelectionConfig { method, m, wrapper: loaded.wrapper };
    let result = run_selection(&loaded.table, &config).map_err(data_error)?;
    let names = loaded.table.schema().feature_names();
    let report = json!({
        "method": method.as_str(),
        "m": m,
        "selected": result.selected.iter().map(|&c| names[c].as_str()).collect::<Vec<_>>(),
        "scores": result.scores,
        "score_kind": if matches!(method, SelectionMethod::Sfs | SelectionMethod::Sbs) {
            "inner-CV accuracy per step"
        } else {
            "per feature, header order"
        },
    });
    println!("{}", serde_json::to_string_pretty(&report).expect("json renders"));
    if let Some(path) = out {
        write_file(path, &to_csv(&loaded.table.select_columns(&result.columns())))?;
    }
    Ok(())
}

fn run(config: &Path, overrides: Overrides, dump_models: bool) -> Result<(), Failure> {
    let config = ExperimentConfig::load(config, &overrides).map_err(config_error)?;
    let table = load_dataset(&config).map_err(data_error)?;
    let run = run_grid(&config, &table, dump_models);
    let counts = class_counts(&table);
    emit_reports(&config.output_dir, &config, &run, &counts, table.schema().feature_names())
        .map_err(|e| data_error(format!("{}: {e}", config.output_dir.display())))?;
    for cell in run.cells.iter().filter(|c| c.failed()) {
        if let Err(e) = &cell.outcome {
            eprintln!("failed: {} / {} / {}: {e}", cell.balancing.as_str(), cell.selection.as_str(), cell.learner);
        }
    }
    let failed = run.failed_cells();
    println!("{} cells, {} failed; reports in {}", run.cells.len(), failed, config.output_dir.display());
    if failed > 0 {
        return Err(Failure { code: EXIT_FAILED_CELLS, message: format!("{failed} cell(s) failed") });
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    let result = match &cli.command {
        Command::Inspect(args) => inspect(args),
        Command::Balance { data, out, clusters, k_neighbors, irt } => balance(data, out, *clusters, *k_neighbors, *irt),
        Command::Select { data, method, m, out } => select(data, *method, *m, out.as_deref()),
        Command::Run { config, seed, mode, out, dump_models } => {
            let overrides = Overrides {
                seed: *seed,
                mode: mode.map(|m| match m {
                    ModeArg::PaperFaithful => EvalMode::PaperFaithful,
                    ModeArg::LeakageSafe => EvalMode::LeakageSafe,
                }),
                output_dir: out.clone(),
            };
            run(config, overrides, *dump_models)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.message);
            ExitCode::from(f.code)
        }
    }
}
