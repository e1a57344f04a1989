//! End-to-end disentangling analysis over a set of activity records.
//!
//! For every participant and activity: parity score and eligibility, the
//! shared T-on-X test, then per feature the preprocessing, the test battery
//! and residual diagnostics, and finally the pooled BH adjustment with the
//! two union-intersection tests. Output ordering is canonical (participant,
//! activity, feature order of the input) whatever the thread count.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::data::{
    arm_counts, build_triplet, group_records, parity_score, treatment_time_series, Activity, ActivityRecord,
    DataError, GroupKey, LocalTime,
};
use crate::disentangle::{ci_battery_shared, fit_h1, BatteryOptions, CIBattery, EffectLabel, ModelClass};
use crate::preprocess::{preprocess_outcome, PreprocessConfig, PreprocessError};
use crate::regress::{acf, ljung_box, ArimaOrder, Backend, OrderSearchConfig, RegressError};
use crate::uitest::{adjust_pools, ui_from_decisions, FeatureDecision, Target, UIResult, UiError, UiOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub backend: Backend,
    pub alpha: f64,
    pub min_per_arm: usize,
    pub preprocess: PreprocessConfig,
    pub clock: LocalTime,
    /// Use the chosen backend for the T-on-X test instead of OLS.
    pub h1_uses_backend: bool,
    /// Decide classes on raw rather than adjusted p-values.
    pub classify_on_raw: bool,
    /// One BH pool per participant across activities instead of one per activity.
    pub pool_across_activities: bool,
    pub arima: OrderSearchConfig,
    pub nw_lag: Option<usize>,
    /// Ljung-Box lag of the residual diagnostics.
    pub diagnostic_lag: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            backend: Backend::NeweyWest,
            alpha: 0.05,
            min_per_arm: 15,
            preprocess: PreprocessConfig::default(),
            clock: LocalTime::default(),
            h1_uses_backend: false,
            classify_on_raw: false,
            pool_across_activities: false,
            arima: OrderSearchConfig::default(),
            nw_lag: None,
            diagnostic_lag: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureReport {
    pub participant: String,
    pub activity: Activity,
    pub feature: String,
    pub n: usize,
    pub class: ModelClass,
    pub label: EffectLabel,
    pub p: [f64; 5],
    pub adjusted_p: [f64; 5],
    pub beta: [f64; 5],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupUi {
    pub participant: String,
    pub activity: Activity,
    pub treatment: UIResult,
    pub time_of_day: UIResult,
}

impl GroupUi {
    pub fn result(&self, target: Target) -> &UIResult {
        match target {
            Target::Treatment => &self.treatment,
            Target::TimeOfDay => &self.time_of_day,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticRow {
    pub participant: String,
    pub activity: Activity,
    pub feature: String,
    /// `y~x`, `y~t` or `y~x+t`.
    pub model: &'static str,
    pub n: usize,
    pub acf1: f64,
    pub ljung_box_q: f64,
    pub ljung_box_p: f64,
    pub arima_order: Option<ArimaOrder>,
    pub hac_lag: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParityRow {
    pub participant: String,
    pub activity: Activity,
    pub n_before: usize,
    pub n_after: usize,
    pub parity: f64,
    pub eligible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Skipped {
    pub participant: String,
    pub activity: Activity,
    /// `None` when the whole participant and activity was skipped.
    pub feature: Option<String>,
    pub reason: &'static str,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub features: Vec<FeatureReport>,
    pub ui: Vec<GroupUi>,
    pub diagnostics: Vec<DiagnosticRow>,
    pub parity: Vec<ParityRow>,
    pub skipped: Vec<Skipped>,
}

/// Anything that can make a group or feature drop out of the analysis.
#[derive(Debug)]
enum SkipError {
    Data(DataError),
    Preprocess(PreprocessError),
    Regress(RegressError),
    Ui(UiError),
}

impl SkipError {
    fn code(&self) -> &'static str {
        match self {
            SkipError::Data(DataError::NoUsableRecords) => "NoUsableRecords",
            SkipError::Data(_) => "DataError",
            SkipError::Preprocess(PreprocessError::TooFewPoints(_)) => "TooFewPoints",
            SkipError::Preprocess(PreprocessError::InvalidSpan(_)) => "InvalidSpan",
            SkipError::Regress(RegressError::RankDeficient) => "RankDeficient",
            SkipError::Regress(RegressError::TooFewObservations { .. }) => "TooFewObservations",
            SkipError::Regress(RegressError::InsufficientData(_)) => "InsufficientData",
            SkipError::Regress(RegressError::NonConvergence) => "NonConvergence",
            SkipError::Regress(RegressError::ZeroVariance) => "ZeroVariance",
            SkipError::Regress(RegressError::ShapeMismatch { .. }) => "ShapeMismatch",
            SkipError::Ui(_) => "UiError",
        }
    }

    fn message(&self) -> String {
        match self {
            SkipError::Data(e) => e.to_string(),
            SkipError::Preprocess(e) => e.to_string(),
            SkipError::Regress(e) => e.to_string(),
            SkipError::Ui(e) => e.to_string(),
        }
    }
}

fn skipped(key: &GroupKey, feature: Option<&str>, err: &SkipError) -> Skipped {
    Skipped {
        participant: key.participant_id.clone(),
        activity: key.activity,
        feature: feature.map(str::to_string),
        reason: err.code(),
        message: err.message(),
    }
}

struct FeatureOutcome {
    feature: String,
    n: usize,
    battery: CIBattery,
    diagnostics: Vec<DiagnosticRow>,
}

struct GroupOutcome {
    key: GroupKey,
    parity: ParityRow,
    features: Vec<FeatureOutcome>,
    skipped: Vec<Skipped>,
}

fn diagnostics_for(
    key: &GroupKey,
    feature: &str,
    fits: &crate::disentangle::OutcomeFits,
    lag: usize,
) -> Vec<DiagnosticRow> {
    fits.fits()
        .into_iter()
        .map(|(model, fit)| {
            let r = &fit.residuals;
            let acf1 = acf(r, 1).unwrap_or(f64::NAN);
            let (q, p) = ljung_box(r, lag).unwrap_or((f64::NAN, f64::NAN));
            DiagnosticRow {
                participant: key.participant_id.clone(),
                activity: key.activity,
                feature: feature.to_string(),
                model,
                n: r.len(),
                acf1,
                ljung_box_q: q,
                ljung_box_p: p,
                arima_order: fit.arima_order,
                hac_lag: fit.hac_lag,
            }
        })
        .collect()
}

fn analyze_feature(
    key: &GroupKey,
    records: &[ActivityRecord],
    feature: &str,
    h1: crate::disentangle::SharedH1,
    opts: &BatteryOptions,
    cfg: &AnalysisConfig,
) -> Result<FeatureOutcome, SkipError> {
    let mut series = build_triplet(records, feature, cfg.clock).map_err(SkipError::Data)?;
    series.y = preprocess_outcome(&series.y, cfg.preprocess).map_err(SkipError::Preprocess)?;
    let (battery, fits) = ci_battery_shared(&series, h1, opts).map_err(SkipError::Regress)?;
    Ok(FeatureOutcome {
        feature: feature.to_string(),
        n: series.len(),
        battery,
        diagnostics: diagnostics_for(key, feature, &fits, cfg.diagnostic_lag),
    })
}

fn analyze_group(
    key: GroupKey,
    records: &[ActivityRecord],
    feature_names: &[String],
    cfg: &AnalysisConfig,
) -> GroupOutcome {
    let (n_before, n_after) = arm_counts(records);
    let eligible = n_before >= cfg.min_per_arm && n_after >= cfg.min_per_arm;
    let parity = ParityRow {
        participant: key.participant_id.clone(),
        activity: key.activity,
        n_before,
        n_after,
        parity: parity_score(records, cfg.clock).unwrap_or(f64::NAN),
        eligible,
    };
    let mut out = GroupOutcome { key, parity, features: Vec::new(), skipped: Vec::new() };
    if !eligible {
        out.skipped.push(Skipped {
            participant: out.key.participant_id.clone(),
            activity: out.key.activity,
            feature: None,
            reason: "NotEligible",
            message: format!(
                "{n_before} before and {n_after} after records; at least {} per arm required",
                cfg.min_per_arm
            ),
        });
        return out;
    }
    let opts = BatteryOptions {
        backend: cfg.backend,
        h1_uses_backend: cfg.h1_uses_backend,
        arima: cfg.arima.clone(),
        nw_lag: cfg.nw_lag,
    };
    let h1 = treatment_time_series(records, cfg.clock)
        .map_err(SkipError::Data)
        .and_then(|s| fit_h1(&s.x, &s.t, &opts).map_err(SkipError::Regress));
    let h1 = match h1 {
        Ok((h1, _)) => h1,
        Err(e) => {
            out.skipped.push(skipped(&out.key, None, &e));
            return out;
        }
    };
    let results: Vec<_> = feature_names
        .par_iter()
        .map(|f| (f, analyze_feature(&out.key, records, f, h1, &opts, cfg)))
        .collect();
    for (f, r) in results {
        match r {
            Ok(o) => out.features.push(o),
            Err(e) => out.skipped.push(skipped(&out.key, Some(f), &e)),
        }
    }
    out
}

/// Runs the full analysis. Groups or features that cannot be analysed are
/// listed in `skipped` with a reason code.
pub fn analyze(records: &[ActivityRecord], feature_names: &[String], cfg: &AnalysisConfig) -> AnalysisReport {
    let groups: Vec<(GroupKey, Vec<ActivityRecord>)> = group_records(records).into_iter().collect();
    let outcomes: Vec<GroupOutcome> = groups
        .into_par_iter()
        .map(|(key, recs)| analyze_group(key, &recs, feature_names, cfg))
        .collect();

    let mut report = AnalysisReport::default();
    let ui_opts = UiOptions { alpha: cfg.alpha, classify_on_raw: cfg.classify_on_raw };

    // pools: one per group, or one per participant
    let mut pools: BTreeMap<(String, Option<Activity>), Vec<usize>> = BTreeMap::new();
    for (i, o) in outcomes.iter().enumerate() {
        if o.features.is_empty() {
            continue;
        }
        let act = if cfg.pool_across_activities { None } else { Some(o.key.activity) };
        pools.entry((o.key.participant_id.clone(), act)).or_default().push(i);
    }
    let mut decisions: BTreeMap<usize, Vec<FeatureDecision>> = BTreeMap::new();
    let mut pool_errors: BTreeMap<usize, UiError> = BTreeMap::new();
    for members in pools.values() {
        let batteries: Vec<Vec<(String, CIBattery)>> = members
            .iter()
            .map(|&i| outcomes[i].features.iter().map(|f| (f.feature.clone(), f.battery)).collect())
            .collect();
        let slices: Vec<&[(String, CIBattery)]> = batteries.iter().map(Vec::as_slice).collect();
        match adjust_pools(&slices, &ui_opts) {
            Ok(d) => decisions.extend(members.iter().copied().zip(d)),
            Err(e) => pool_errors.extend(members.iter().map(|&i| (i, e.clone()))),
        }
    }

    for (i, o) in outcomes.into_iter().enumerate() {
        report.parity.push(o.parity);
        report.skipped.extend(o.skipped);
        if let Some(e) = pool_errors.remove(&i) {
            report.skipped.push(skipped(&o.key, None, &SkipError::Ui(e)));
            continue;
        }
        let Some(dec) = decisions.remove(&i) else { continue };
        for (f, d) in o.features.iter().zip(&dec) {
            report.features.push(FeatureReport {
                participant: o.key.participant_id.clone(),
                activity: o.key.activity,
                feature: f.feature.clone(),
                n: f.n,
                class: d.class,
                label: d.class.effect_label(),
                p: d.raw_p,
                adjusted_p: d.adjusted_p,
                beta: f.battery.beta,
            });
        }
        for f in o.features {
            report.diagnostics.extend(f.diagnostics);
        }
        let tr = ui_from_decisions(&dec, Target::Treatment, cfg.alpha);
        let tod = ui_from_decisions(&dec, Target::TimeOfDay, cfg.alpha);
        match (tr, tod) {
            (Ok(treatment), Ok(time_of_day)) => report.ui.push(GroupUi {
                participant: o.key.participant_id.clone(),
                activity: o.key.activity,
                treatment,
                time_of_day,
            }),
            (Err(e), _) | (_, Err(e)) => report.skipped.push(skipped(&o.key, None, &SkipError::Ui(e))),
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::{simulate_participant, triplet_records, CausalModel, TripletSimConfig};

    fn records(model: CausalModel, n: usize, participants: u64) -> Vec<ActivityRecord> {
        let cfg = TripletSimConfig { n, seed: 3, ..TripletSimConfig::for_model(model) };
        (0..participants)
            .flat_map(|i| {
                let s = simulate_participant(&cfg, i).unwrap();
                triplet_records(&s, &format!("P{i}"), Activity::Tapping, "y")
            })
            .collect()
    }

    #[test]
    fn report_shapes() {
        let recs = records(CausalModel::M7, 120, 2);
        let rep = analyze(&recs, &["y".to_string()], &AnalysisConfig::default());
        assert_eq!(rep.parity.len(), 2);
        assert_eq!(rep.features.len(), 2);
        assert_eq!(rep.ui.len(), 2);
        assert_eq!(rep.diagnostics.len(), 6);
        assert!(rep.skipped.is_empty());
        assert_eq!(rep.features[0].participant, "P0");
    }

    #[test]
    fn small_groups_are_skipped_with_reason() {
        let recs = records(CausalModel::M7, 10, 1);
        let cfg = AnalysisConfig { backend: Backend::ArimaErrors, min_per_arm: 1, ..Default::default() };
        let rep = analyze(&recs, &["y".to_string()], &cfg);
        assert!(rep.ui.is_empty());
        assert_eq!(rep.skipped.len(), 1);
        assert_eq!(rep.skipped[0].reason, "InsufficientData");

        let rep = analyze(&recs, &["y".to_string()], &AnalysisConfig::default());
        assert_eq!(rep.skipped[0].reason, "NotEligible");
        assert!(!rep.parity[0].eligible);
    }

    #[test]
    fn unknown_feature_is_skipped() {
        let recs = records(CausalModel::M1, 80, 1);
        let rep = analyze(&recs, &["y".to_string(), "zz".to_string()], &AnalysisConfig::default());
        assert_eq!(rep.features.len(), 1);
        assert_eq!(rep.skipped[0].reason, "NoUsableRecords");
        assert_eq!(rep.skipped[0].feature.as_deref(), Some("zz"));
    }
}
