use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use serde_json::json;

use medfx::data::{write_cohort_csv, Activity};
use medfx::format::json_num;
use medfx::simgen::{
    simulate_cohort, simulate_participant, triplet_records, write_records_csv, CausalModel, CohortSimConfig,
    Scheduling, SimError, TripletSimConfig,
};

use crate::config::ConfigFile;
use crate::{CliError, CommonArgs};

pub const OUTPUT_HELP: &str = "\
Output files:
  --out                      triplet kind: activity-record CSV readable by `medfx disentangle`
                             (participant_id, activity, timestamp, med_status, <feature>);
                             cohort kind: cohort CSV readable by `medfx audit`
                             (participant_id, label, f01..)
  <out>.config.json          sidecar echo of the resolved generator settings

Effect sizes default to 1 on the model's edges and 0 elsewhere; X-T strength
defaults to 3 (hours for M1-M3, logit slope multiplier for M4-M6) and 0 for
M7-M9. Giving a non-zero value to an effect the model lacks is an error.

Config keys: kind, model, n, participants, beta-treatment, beta-tod, beta-xt,
steepness, ar-phi, scheduling, tz-offset, activity, feature, n-cases, n-controls,
samples, p-features, fingerprint-sd, class-effect, noise-sd, effect-features, seed";

const KEYS: &[&str] = &[
    "kind",
    "model",
    "n",
    "participants",
    "beta-treatment",
    "beta-tod",
    "beta-xt",
    "steepness",
    "ar-phi",
    "scheduling",
    "tz-offset",
    "activity",
    "feature",
    "n-cases",
    "n-controls",
    "samples",
    "p-features",
    "fingerprint-sd",
    "class-effect",
    "noise-sd",
    "effect-features",
    "seed",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Triplet,
    Cohort,
}

impl FromStr for Kind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "triplet" => Ok(Kind::Triplet),
            "cohort" => Ok(Kind::Cohort),
            other => Err(format!("unknown kind `{other}` (expected triplet or cohort)")),
        }
    }
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// triplet or cohort [default: triplet]
    #[arg(long)]
    kind: Option<Kind>,
    /// Output CSV path
    #[arg(long)]
    out: PathBuf,
    /// Causal model M1..M9 [default: M3]
    #[arg(long)]
    model: Option<CausalModel>,
    /// Tasks per participant [default: 200]
    #[arg(long)]
    n: Option<usize>,
    /// Number of simulated participants [default: 1]
    #[arg(long)]
    participants: Option<usize>,
    /// Treatment effect in residual-sd units
    #[arg(long, allow_hyphen_values = true)]
    beta_treatment: Option<f64>,
    /// Time-of-day effect in residual-sd units per 6 hours
    #[arg(long, allow_hyphen_values = true)]
    beta_tod: Option<f64>,
    /// Strength of the X-T link
    #[arg(long, allow_hyphen_values = true)]
    beta_xt: Option<f64>,
    /// Logistic slope per hour for M4-M6 [default: 0.25]
    #[arg(long)]
    steepness: Option<f64>,
    /// AR(1) coefficient of the errors [default: 0.3]
    #[arg(long, allow_hyphen_values = true)]
    ar_phi: Option<f64>,
    /// paired or unpaired [default: unpaired]
    #[arg(long)]
    scheduling: Option<Scheduling>,
    /// Local time offset from UTC in hours [default: 0]
    #[arg(long, allow_hyphen_values = true)]
    tz_offset: Option<f64>,
    /// Activity written to the records [default: tapping]
    #[arg(long)]
    activity: Option<Activity>,
    /// Feature column name [default: y]
    #[arg(long)]
    feature: Option<String>,
    /// Case participants [default: 10]
    #[arg(long)]
    n_cases: Option<usize>,
    /// Control participants [default: 10]
    #[arg(long)]
    n_controls: Option<usize>,
    /// Rows per participant [default: 100]
    #[arg(long)]
    samples: Option<usize>,
    /// Number of features [default: 10]
    #[arg(long)]
    p_features: Option<usize>,
    /// Between-participant sd of feature offsets [default: 3]
    #[arg(long)]
    fingerprint_sd: Option<f64>,
    /// Case shift on the effect features [default: 0.3]
    #[arg(long, allow_hyphen_values = true)]
    class_effect: Option<f64>,
    /// Within-participant noise sd [default: 1]
    #[arg(long)]
    noise_sd: Option<f64>,
    /// Number of leading features carrying the case shift [default: half]
    #[arg(long)]
    effect_features: Option<usize>,
    /// Seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    common: CommonArgs,
}

fn sim_error(e: SimError) -> CliError {
    CliError::new("ConfigViolation", e.to_string())
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".config.json");
    PathBuf::from(s)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn write_sidecar(out: &Path, doc: serde_json::Value) -> Result<(), CliError> {
    let path = sidecar_path(out);
    let mut text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::new("IoError", e.to_string()))?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
}

fn run_triplet(a: &SimulateArgs, cfg: &ConfigFile) -> Result<(), CliError> {
    let model = cfg.resolve(a.model, "model", CausalModel::M3)?;
    let d = TripletSimConfig::for_model(model);
    let sim = TripletSimConfig {
        model,
        n: cfg.resolve(a.n, "n", d.n)?,
        beta_treatment: cfg.resolve(a.beta_treatment, "beta-treatment", d.beta_treatment)?,
        beta_tod: cfg.resolve(a.beta_tod, "beta-tod", d.beta_tod)?,
        beta_xt: cfg.resolve(a.beta_xt, "beta-xt", d.beta_xt)?,
        steepness: cfg.resolve(a.steepness, "steepness", d.steepness)?,
        ar_phi: cfg.resolve(a.ar_phi, "ar-phi", d.ar_phi)?,
        scheduling: cfg.resolve(a.scheduling, "scheduling", d.scheduling)?,
        utc_offset_hours: cfg.resolve(a.tz_offset, "tz-offset", d.utc_offset_hours)?,
        seed: cfg.resolve(a.seed, "seed", d.seed)?,
    };
    sim.validate().map_err(sim_error)?;
    let participants = cfg.resolve(a.participants, "participants", 1usize)?;
    if participants == 0 {
        return Err(CliError::new("ConfigViolation", "participants must be at least 1"));
    }
    let activity = cfg.resolve(a.activity, "activity", Activity::Tapping)?;
    let feature = cfg.resolve(a.feature.clone(), "feature", "y".to_string())?;
    let width = participants.to_string().len().max(3);
    let mut records = Vec::with_capacity(participants * sim.n);
    for i in 0..participants {
        let series = simulate_participant(&sim, i as u64).map_err(sim_error)?;
        records.extend(triplet_records(&series, &format!("P{:0width$}", i + 1), activity, &feature));
    }
    let w = create(&a.out)?;
    write_records_csv(&records, w).map_err(|e| CliError::io(&a.out, e))?;
    write_sidecar(
        &a.out,
        json!({
            "kind": "triplet",
            "model": model.as_str(),
            "class": model.class().as_str(),
            "n": sim.n,
            "participants": participants,
            "beta_treatment": json_num(sim.beta_treatment),
            "beta_tod": json_num(sim.beta_tod),
            "beta_xt": json_num(sim.beta_xt),
            "steepness": json_num(sim.steepness),
            "ar_phi": json_num(sim.ar_phi),
            "scheduling": sim.scheduling.as_str(),
            "tz_offset": json_num(sim.utc_offset_hours),
            "activity": activity.as_str(),
            "feature": feature,
            "seed": sim.seed,
        }),
    )?;
    println!("wrote {} records for {participants} participant(s) of {model} to {}", records.len(), a.out.display());
    Ok(())
}

fn run_cohort(a: &SimulateArgs, cfg: &ConfigFile) -> Result<(), CliError> {
    let d = CohortSimConfig::default();
    let sim = CohortSimConfig {
        n_cases: cfg.resolve(a.n_cases, "n-cases", d.n_cases)?,
        n_controls: cfg.resolve(a.n_controls, "n-controls", d.n_controls)?,
        samples_per_participant: cfg.resolve(a.samples, "samples", d.samples_per_participant)?,
        p_features: cfg.resolve(a.p_features, "p-features", d.p_features)?,
        fingerprint_sd: cfg.resolve(a.fingerprint_sd, "fingerprint-sd", d.fingerprint_sd)?,
        class_effect: cfg.resolve(a.class_effect, "class-effect", d.class_effect)?,
        noise_sd: cfg.resolve(a.noise_sd, "noise-sd", d.noise_sd)?,
        effect_features: cfg.resolve_opt(a.effect_features, "effect-features")?,
        seed: cfg.resolve(a.seed, "seed", d.seed)?,
    };
    let data = simulate_cohort(&sim).map_err(sim_error)?;
    let w = create(&a.out)?;
    write_cohort_csv(&data, w).map_err(|e| CliError::io(&a.out, e))?;
    write_sidecar(
        &a.out,
        json!({
            "kind": "cohort",
            "n_cases": sim.n_cases,
            "n_controls": sim.n_controls,
            "samples_per_participant": sim.samples_per_participant,
            "p_features": sim.p_features,
            "fingerprint_sd": json_num(sim.fingerprint_sd),
            "class_effect": json_num(sim.class_effect),
            "noise_sd": json_num(sim.noise_sd),
            "effect_features": sim.effect_feature_count(),
            "seed": sim.seed,
        }),
    )?;
    println!("wrote {} cohort rows to {}", data.n_rows(), a.out.display());
    Ok(())
}

pub fn run(a: SimulateArgs) -> Result<(), CliError> {
    let cfg = ConfigFile::load(a.common.config.as_deref())?;
    cfg.check_keys(KEYS)?;
    match cfg.resolve(a.kind, "kind", Kind::Triplet)? {
        Kind::Triplet => run_triplet(&a, &cfg),
        Kind::Cohort => run_cohort(&a, &cfg),
    }
}
