use std::fs;
use std::path::PathBuf;

use clap::Args;
use serde_json::json;

use medfx::audit::{
    collapse_median, run_split_experiment, summarize, AuditError, ExperimentConfig, ForestParams, LabelScheme,
    SplitStrategy,
};
use medfx::data::ingest_cohort_csv;
use medfx::format::{json_num, num};

use crate::config::ConfigFile;
use crate::disentangle::{csv_text, write_file};
use crate::{CliError, CommonArgs};

pub const OUTPUT_HELP: &str = "\
Input: cohort CSV with columns participant_id, label (case/control) and one column per feature.

Output files (in --out-dir):
  auc.csv       columns repeat, strategy, scheme, auc; one row per repeat
  summary.json  settings echo, analysed row and participant counts, and the AUC
                summary (n, mean, sd, min, q1, median, q3, max)

--multiclass classifies participant identity (one-vs-one AUC) and requires
--strategy record with --labels original.

Config keys: strategy, labels, repeats, trees, mtry, min-leaf, seed, train-fraction,
balanced, multiclass";

const KEYS: &[&str] = &[
    "strategy",
    "labels",
    "repeats",
    "trees",
    "mtry",
    "min-leaf",
    "seed",
    "train-fraction",
    "balanced",
    "multiclass",
];

#[derive(Args, Debug)]
pub struct AuditArgs {
    /// Cohort CSV
    #[arg(long)]
    input: PathBuf,
    /// Output directory, created if missing
    #[arg(long)]
    out_dir: PathBuf,
    /// Split strategy: record, subject or collapsed [default: record]
    #[arg(long)]
    strategy: Option<SplitStrategy>,
    /// Labels: original, block-shuffle or full-shuffle [default: original]
    #[arg(long)]
    labels: Option<LabelScheme>,
    /// Number of random train/test splits [default: 100]
    #[arg(long)]
    repeats: Option<usize>,
    /// Trees per forest [default: 500]
    #[arg(long)]
    trees: Option<usize>,
    /// Features tried per split [default: floor(sqrt(p))]
    #[arg(long)]
    mtry: Option<usize>,
    /// Minimum leaf size [default: 1]
    #[arg(long)]
    min_leaf: Option<usize>,
    /// Master seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Share of each class's participants used for training in subject-wise splits [default: 0.5]
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Subsample participants to equal class sizes in every repeat
    #[arg(long)]
    balanced: bool,
    /// Classify participant identity instead of case/control
    #[arg(long)]
    multiclass: bool,
    #[command(flatten)]
    common: CommonArgs,
}

fn audit_error(e: AuditError) -> CliError {
    let code = match e {
        AuditError::TooFewRows(_) => "TooFewRows",
        AuditError::TooFewParticipants => "TooFewParticipants",
        AuditError::SingleClassTraining => "SingleClassTraining",
        AuditError::ShapeMismatch { .. } => "ShapeMismatch",
        AuditError::SingleClass => "SingleClass",
        AuditError::MissingClass(_) => "MissingClass",
        AuditError::InvalidCombination(_) => "InvalidCombination",
    };
    CliError::new(code, e.to_string())
}

fn build_config(a: &AuditArgs, cfg: &ConfigFile) -> Result<ExperimentConfig, CliError> {
    cfg.check_keys(KEYS)?;
    let d = ExperimentConfig::default();
    let exp = ExperimentConfig {
        strategy: cfg.resolve(a.strategy, "strategy", d.strategy)?,
        scheme: cfg.resolve(a.labels, "labels", d.scheme)?,
        repeats: cfg.resolve(a.repeats, "repeats", d.repeats)?,
        forest: ForestParams {
            n_trees: cfg.resolve(a.trees, "trees", d.forest.n_trees)?,
            mtry: cfg.resolve_opt(a.mtry, "mtry")?,
            min_leaf: cfg.resolve(a.min_leaf, "min-leaf", d.forest.min_leaf)?,
            seed: 0,
        },
        train_fraction: cfg.resolve(a.train_fraction, "train-fraction", d.train_fraction)?,
        balanced: cfg.switch(a.balanced, "balanced")?,
        multiclass: cfg.switch(a.multiclass, "multiclass")?,
        seed: cfg.resolve(a.seed, "seed", d.seed)?,
    };
    if exp.forest.mtry == Some(0) || exp.forest.min_leaf == 0 {
        return Err(CliError::new("InvalidArgument", "mtry and min-leaf must be at least 1"));
    }
    exp.validate().map_err(audit_error)?;
    Ok(exp)
}

pub fn run(a: AuditArgs) -> Result<(), CliError> {
    let cfg = ConfigFile::load(a.common.config.as_deref())?;
    let exp = build_config(&a, &cfg)?;
    let (data, rejected) =
        ingest_cohort_csv(&a.input).map_err(|e| CliError::new("DataError", format!("{}: {e}", a.input.display())))?;
    let analysed = if exp.strategy == SplitStrategy::Collapsed { collapse_median(&data) } else { data.clone() };
    let auc = run_split_experiment(&data, &exp).map_err(audit_error)?;
    let summary = summarize(&auc);

    fs::create_dir_all(&a.out_dir).map_err(|e| CliError::io(&a.out_dir, e))?;
    let scheme = if exp.multiclass { "identity" } else { exp.scheme.as_str() };
    let rows = auc.iter().enumerate().map(|(r, &v)| {
        vec![r.to_string(), exp.strategy.as_str().to_string(), scheme.to_string(), num(v)]
    });
    write_file(&a.out_dir, "auc.csv", &csv_text(&["repeat", "strategy", "scheme", "auc"], rows)?)?;
    let doc = json!({
        "strategy": exp.strategy.as_str(),
        "labels": exp.scheme.as_str(),
        "multiclass": exp.multiclass,
        "balanced": exp.balanced,
        "repeats": exp.repeats,
        "trees": exp.forest.n_trees,
        "mtry": exp.forest.mtry,
        "min_leaf": exp.forest.min_leaf,
        "train_fraction": json_num(exp.train_fraction),
        "seed": exp.seed,
        "input_rows": data.n_rows(),
        "rejected_rows": rejected,
        "analysed_rows": analysed.n_rows(),
        "participants": data.participants().len(),
        "features": data.n_features(),
        "auc": {
            "n": summary.n,
            "mean": json_num(summary.mean),
            "sd": json_num(summary.sd),
            "min": json_num(summary.min),
            "q1": json_num(summary.q1),
            "median": json_num(summary.median),
            "q3": json_num(summary.q3),
            "max": json_num(summary.max),
        }
    });
    let mut text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::new("IoError", e.to_string()))?;
    text.push('\n');
    write_file(&a.out_dir, "summary.json", &text)?;
    println!(
        "{} {} over {} repeats: mean AUC {} (sd {}, median {})",
        exp.strategy.as_str(),
        scheme,
        summary.n,
        num(summary.mean),
        num(summary.sd),
        num(summary.median)
    );
    Ok(())
}
