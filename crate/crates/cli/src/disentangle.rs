use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use serde_json::{json, Value};

use medfx::data::{ingest_csv, Activity, ColumnMapping, DataError, LocalTime};
use medfx::format::{json_num, num};
use medfx::pipeline::{analyze, AnalysisConfig, AnalysisReport};
use medfx::preprocess::{LowessConfig, PreprocessConfig};
use medfx::regress::{Backend, OrderSearchConfig};

use crate::config::ConfigFile;
use crate::{CliError, CommonArgs};

pub const OUTPUT_HELP: &str = "\
Output files (in --out-dir):
  feature_report.jsonl      one line per participant, activity and feature: class, effect
                            label, raw p1..p5, BH-adjusted p1..p5 and the five coefficients
  ui_results.jsonl          one line per participant, activity and target (treatment,
                            time_of_day): ui_p, reject and the test chosen per feature
  class_matrix.csv          activity x feature rows, one column per participant; cells are
                            treatment, time_of_day, both, none or missing
  residual_diagnostics.csv  lag-1 autocorrelation and Ljung-Box Q/p of every outcome fit
  parity.csv                per participant and activity: record counts per arm, parity
                            score and eligibility
  skipped.jsonl             groups or features left out, with a reason code

Config keys: backend, alpha, min-per-arm, span, robust-iters, no-detrend,
no-rank-transform, tz-offset, nw-lag, h1-backend, classify-raw, pool-activities,
col-participant, col-activity, col-timestamp, col-med-status";

const KEYS: &[&str] = &[
    "backend",
    "alpha",
    "min-per-arm",
    "span",
    "robust-iters",
    "no-detrend",
    "no-rank-transform",
    "tz-offset",
    "nw-lag",
    "h1-backend",
    "classify-raw",
    "pool-activities",
    "col-participant",
    "col-activity",
    "col-timestamp",
    "col-med-status",
];

#[derive(Args, Debug)]
pub struct DisentangleArgs {
    /// Activity-record CSV (participant_id, activity, timestamp, med_status, features...)
    #[arg(long)]
    input: PathBuf,
    /// Output directory, created if missing
    #[arg(long)]
    out_dir: PathBuf,
    /// Regression backend: ols, newey-west or arima [default: newey-west]
    #[arg(long)]
    backend: Option<Backend>,
    /// Level for pattern decisions and union-intersection tests [default: 0.05]
    #[arg(long)]
    alpha: Option<f64>,
    /// Minimum usable records per arm for a participant and activity [default: 15]
    #[arg(long)]
    min_per_arm: Option<usize>,
    /// Lowess span in (0, 1] [default: 2/3]
    #[arg(long)]
    span: Option<f64>,
    /// Lowess robustifying iterations [default: 3]
    #[arg(long)]
    robust_iters: Option<usize>,
    /// Skip lowess de-trending
    #[arg(long)]
    no_detrend: bool,
    /// Skip the rank-quantile normal transform
    #[arg(long)]
    no_rank_transform: bool,
    /// Local time offset from UTC in hours [default: 0]
    #[arg(long, allow_hyphen_values = true)]
    tz_offset: Option<f64>,
    /// Fixed Newey-West lag instead of the automatic bandwidth
    #[arg(long)]
    nw_lag: Option<usize>,
    /// Use the chosen backend for the treatment vs time-of-day test too (default OLS)
    #[arg(long)]
    h1_backend: bool,
    /// Decide classes on raw instead of BH-adjusted p-values
    #[arg(long)]
    classify_raw: bool,
    /// Pool the BH correction over all activities of a participant
    #[arg(long)]
    pool_activities: bool,
    /// Column holding participant ids [default: participant_id]
    #[arg(long)]
    col_participant: Option<String>,
    /// Column holding the activity [default: activity]
    #[arg(long)]
    col_activity: Option<String>,
    /// Column holding epoch seconds [default: timestamp]
    #[arg(long)]
    col_timestamp: Option<String>,
    /// Column holding before/after/other [default: med_status]
    #[arg(long)]
    col_med_status: Option<String>,
    #[command(flatten)]
    common: CommonArgs,
}

fn data_error(e: DataError) -> CliError {
    let code = match e {
        DataError::MissingColumn(_) => "MissingColumn",
        DataError::EmptyInput => "EmptyInput",
        DataError::Io(_) => "IoError",
        DataError::Csv(_) => "CsvError",
        _ => "DataError",
    };
    CliError::new(code, e.to_string())
}

fn build_config(a: &DisentangleArgs, cfg: &ConfigFile) -> Result<(AnalysisConfig, ColumnMapping), CliError> {
    cfg.check_keys(KEYS)?;
    let d = AnalysisConfig::default();
    let lowess_default = LowessConfig::default();
    let alpha = cfg.resolve(a.alpha, "alpha", d.alpha)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CliError::new("InvalidArgument", format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let min_per_arm = cfg.resolve(a.min_per_arm, "min-per-arm", d.min_per_arm)?;
    if min_per_arm == 0 {
        return Err(CliError::new("InvalidArgument", "min-per-arm must be at least 1"));
    }
    let span = cfg.resolve(a.span, "span", lowess_default.span)?;
    if !(span > 0.0 && span <= 1.0) {
        return Err(CliError::new("InvalidArgument", format!("span must lie in (0, 1], got {span}")));
    }
    let robust_iters = cfg.resolve(a.robust_iters, "robust-iters", lowess_default.robust_iters)?;
    let detrend = !cfg.switch(a.no_detrend, "no-detrend")?;
    let tz = cfg.resolve(a.tz_offset, "tz-offset", 0.0)?;
    if !(-24.0..=24.0).contains(&tz) {
        return Err(CliError::new("InvalidArgument", format!("tz-offset must lie in [-24, 24], got {tz}")));
    }
    let analysis = AnalysisConfig {
        backend: cfg.resolve(a.backend, "backend", d.backend)?,
        alpha,
        min_per_arm,
        preprocess: PreprocessConfig {
            lowess: detrend.then_some(LowessConfig { span, robust_iters }),
            rank_transform: !cfg.switch(a.no_rank_transform, "no-rank-transform")?,
        },
        clock: LocalTime::from_hours(tz),
        h1_uses_backend: cfg.switch(a.h1_backend, "h1-backend")?,
        classify_on_raw: cfg.switch(a.classify_raw, "classify-raw")?,
        pool_across_activities: cfg.switch(a.pool_activities, "pool-activities")?,
        arima: OrderSearchConfig::default(),
        nw_lag: cfg.resolve_opt(a.nw_lag, "nw-lag")?,
        diagnostic_lag: 1,
    };
    let dm = ColumnMapping::default();
    let mapping = ColumnMapping {
        participant_id: cfg.resolve(a.col_participant.clone(), "col-participant", dm.participant_id)?,
        activity: cfg.resolve(a.col_activity.clone(), "col-activity", dm.activity)?,
        timestamp: cfg.resolve(a.col_timestamp.clone(), "col-timestamp", dm.timestamp)?,
        med_status: cfg.resolve(a.col_med_status.clone(), "col-med-status", dm.med_status)?,
    };
    Ok((analysis, mapping))
}

/// Coefficients behind p1..p5.
const BETA_NAMES: [&str; 5] = ["beta_t_x", "beta_y_x", "beta_y_t", "beta_y_x_given_t", "beta_y_t_given_x"];

pub(crate) fn write_file(dir: &Path, name: &str, content: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, content).map_err(|e| CliError::io(&path, e))
}

pub(crate) fn jsonl(values: impl IntoIterator<Item = Value>) -> String {
    let mut out = String::new();
    for v in values {
        out.push_str(&v.to_string());
        out.push('\n');
    }
    out
}

pub(crate) fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| CliError::new("IoError", e.to_string()))?;
    for r in rows {
        w.write_record(&r).map_err(|e| CliError::new("IoError", e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::new("IoError", e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::new("IoError", e.to_string()))
}

fn write_reports(dir: &Path, report: &AnalysisReport, features: &[String]) -> Result<(), CliError> {
    let feature_lines = report.features.iter().map(|f| {
        let mut m = serde_json::Map::new();
        m.insert("participant".into(), json!(f.participant));
        m.insert("activity".into(), json!(f.activity.as_str()));
        m.insert("feature".into(), json!(f.feature));
        m.insert("n".into(), json!(f.n));
        m.insert("class".into(), json!(f.class.as_str()));
        m.insert("label".into(), json!(f.label.as_str()));
        for i in 0..5 {
            m.insert(format!("p{}", i + 1), json_num(f.p[i]));
            m.insert(format!("adjusted_p{}", i + 1), json_num(f.adjusted_p[i]));
            m.insert(BETA_NAMES[i].into(), json_num(f.beta[i]));
        }
        Value::Object(m)
    });
    write_file(dir, "feature_report.jsonl", &jsonl(feature_lines))?;

    let ui_lines = report.ui.iter().flat_map(|g| {
        [&g.treatment, &g.time_of_day].map(|r| {
            let per_feature: Vec<Value> = r
                .per_feature
                .iter()
                .map(|e| {
                    json!({
                        "feature": e.feature,
                        "chosen_test": e.chosen_test.as_str(),
                        "adjusted_for_other": e.chosen_test.is_adjusted(),
                        "adjusted_p": json_num(e.adjusted_p),
                    })
                })
                .collect();
            json!({
                "participant": g.participant,
                "activity": g.activity.as_str(),
                "target": r.target.as_str(),
                "ui_p": json_num(r.ui_p),
                "reject": r.reject,
                "per_feature": per_feature,
            })
        })
    });
    write_file(dir, "ui_results.jsonl", &jsonl(ui_lines))?;

    let participants: BTreeSet<&str> = report.parity.iter().map(|p| p.participant.as_str()).collect();
    let activities: BTreeSet<Activity> = report.parity.iter().map(|p| p.activity).collect();
    let cells: BTreeMap<(Activity, &str, &str), &str> = report
        .features
        .iter()
        .map(|f| ((f.activity, f.feature.as_str(), f.participant.as_str()), f.label.as_str()))
        .collect();
    let mut header = vec!["activity", "feature"];
    header.extend(participants.iter().copied());
    let matrix_rows = activities.iter().flat_map(|&act| {
        let participants = &participants;
        let cells = &cells;
        features.iter().map(move |f| {
            let mut row = vec![act.as_str().to_string(), f.clone()];
            row.extend(participants.iter().map(|p| cells.get(&(act, f.as_str(), p)).copied().unwrap_or("missing").to_string()));
            row
        })
    });
    write_file(dir, "class_matrix.csv", &csv_text(&header, matrix_rows)?)?;

    let diag_rows = report.diagnostics.iter().map(|d| {
        vec![
            d.participant.clone(),
            d.activity.as_str().to_string(),
            d.feature.clone(),
            d.model.to_string(),
            d.n.to_string(),
            num(d.acf1),
            num(d.ljung_box_q),
            num(d.ljung_box_p),
            d.arima_order.map(|o| o.to_string()).unwrap_or_default(),
            d.hac_lag.map(|l| l.to_string()).unwrap_or_default(),
        ]
    });
    let diag_header = [
        "participant",
        "activity",
        "feature",
        "model",
        "n",
        "acf1",
        "ljung_box_q",
        "ljung_box_p",
        "arima_order",
        "hac_lag",
    ];
    write_file(dir, "residual_diagnostics.csv", &csv_text(&diag_header, diag_rows)?)?;

    let parity_rows = report.parity.iter().map(|p| {
        vec![
            p.participant.clone(),
            p.activity.as_str().to_string(),
            p.n_before.to_string(),
            p.n_after.to_string(),
            num(p.parity),
            p.eligible.to_string(),
        ]
    });
    let parity_header = ["participant", "activity", "n_before", "n_after", "parity", "eligible"];
    write_file(dir, "parity.csv", &csv_text(&parity_header, parity_rows)?)?;

    let skipped_lines = report.skipped.iter().map(|s| {
        json!({
            "participant": s.participant,
            "activity": s.activity.as_str(),
            "feature": s.feature,
            "reason": s.reason,
            "message": s.message,
        })
    });
    write_file(dir, "skipped.jsonl", &jsonl(skipped_lines))
}

pub fn run(a: DisentangleArgs) -> Result<(), CliError> {
    let cfg = ConfigFile::load(a.common.config.as_deref())?;
    let (analysis, mapping) = build_config(&a, &cfg)?;
    let ingested = ingest_csv(&a.input, &mapping).map_err(data_error)?;
    let report = analyze(&ingested.records, &ingested.feature_names, &analysis);
    fs::create_dir_all(&a.out_dir).map_err(|e| CliError::io(&a.out_dir, e))?;
    write_reports(&a.out_dir, &report, &ingested.feature_names)?;

    let mut out = std::io::stdout().lock();
    let rejects = ingested.rejected;
    let _ = writeln!(
        out,
        "{} records ({rejects} rejected), {} groups, {} analysed, {} feature reports, {} skipped entries",
        ingested.records.len(),
        report.parity.len(),
        report.ui.len(),
        report.features.len(),
        report.skipped.len()
    );
    for g in &report.ui {
        let _ = writeln!(
            out,
            "{} {}: treatment ui_p={:.4e} reject={}  time_of_day ui_p={:.4e} reject={}",
            g.participant,
            g.activity,
            g.treatment.ui_p,
            g.treatment.reject,
            g.time_of_day.ui_p,
            g.time_of_day.reject
        );
    }
    Ok(())
}
