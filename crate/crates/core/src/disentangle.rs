//! Conditional-independence battery and equivalence-class lookup.
//!
//! Four regressions per feature:
//!
//! ```text
//! T = μ + β_{T,X} X + ε                         (H¹: T ⊥ X)
//! Y = μ + β_{Y,X} X + ε                         (H²: Y ⊥ X)
//! Y = μ + β_{Y,T} T + ε                         (H³: Y ⊥ T)
//! Y = μ + β_{Y,X|T} X + β_{Y,T|X} T + ε         (H⁴: Y ⊥ X | T, H⁵: Y ⊥ T | X)
//! ```
//!
//! The pattern of detected dependencies picks one of six Markov equivalence
//! classes of the nine candidate DAGs over `{X, T, Y}`, or none of them.

use serde::{Deserialize, Serialize};

use crate::data::TripletSeries;
use crate::regress::{
    arima_errors_fit, design_with_intercept, newey_west_fit, ols_fit, Backend, OrderSearchConfig,
    RegressError, RegressionFit,
};

/// Equivalence class supported by a dependence pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ModelClass {
    /// {M1, M4}: X and T associated, X → Y.
    TreatmentAssoc,
    /// {M2, M5}: X and T associated, T → Y.
    TodAssoc,
    /// {M3, M6}: X and T associated, both affect Y.
    BothAssoc,
    /// M7: X ⊥ T, X → Y.
    TreatmentIndep,
    /// M8: X ⊥ T, T → Y.
    TodIndep,
    /// M9: X ⊥ T, both affect Y.
    BothIndep,
    Unclassified,
}

impl ModelClass {
    pub const ALL: [ModelClass; 7] = [
        ModelClass::TreatmentAssoc,
        ModelClass::TodAssoc,
        ModelClass::BothAssoc,
        ModelClass::TreatmentIndep,
        ModelClass::TodIndep,
        ModelClass::BothIndep,
        ModelClass::Unclassified,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelClass::TreatmentAssoc => "TREATMENT_ASSOC",
            ModelClass::TodAssoc => "TOD_ASSOC",
            ModelClass::BothAssoc => "BOTH_ASSOC",
            ModelClass::TreatmentIndep => "TREATMENT_INDEP",
            ModelClass::TodIndep => "TOD_INDEP",
            ModelClass::BothIndep => "BOTH_INDEP",
            ModelClass::Unclassified => "UNCLASSIFIED",
        }
    }

    pub fn effect_label(self) -> EffectLabel {
        match self {
            ModelClass::TreatmentAssoc | ModelClass::TreatmentIndep => EffectLabel::Treatment,
            ModelClass::TodAssoc | ModelClass::TodIndep => EffectLabel::TimeOfDay,
            ModelClass::BothAssoc | ModelClass::BothIndep => EffectLabel::Both,
            ModelClass::Unclassified => EffectLabel::None,
        }
    }

    /// The inferred DAG has a T → Y edge.
    pub fn has_tod_edge(self) -> bool {
        matches!(
            self,
            ModelClass::TodAssoc | ModelClass::BothAssoc | ModelClass::TodIndep | ModelClass::BothIndep
        )
    }

    /// The inferred DAG has an X → Y edge.
    pub fn has_treatment_edge(self) -> bool {
        matches!(
            self,
            ModelClass::TreatmentAssoc
                | ModelClass::BothAssoc
                | ModelClass::TreatmentIndep
                | ModelClass::BothIndep
        )
    }
}

impl std::fmt::Display for ModelClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Putative effect carried by a class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectLabel {
    Treatment,
    TimeOfDay,
    Both,
    None,
}

impl EffectLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            EffectLabel::Treatment => "treatment",
            EffectLabel::TimeOfDay => "time_of_day",
            EffectLabel::Both => "both",
            EffectLabel::None => "none",
        }
    }
}

/// Lookup table indexed by the pattern bits `H¹ H² H³ H⁴ H⁵` (H¹ most significant).
const PATTERN_TABLE: [ModelClass; 32] = {
    let mut table = [ModelClass::Unclassified; 32];
    table[0b11110] = ModelClass::TreatmentAssoc;
    table[0b11101] = ModelClass::TodAssoc;
    table[0b11111] = ModelClass::BothAssoc;
    table[0b01010] = ModelClass::TreatmentIndep;
    table[0b00101] = ModelClass::TodIndep;
    table[0b01111] = ModelClass::BothIndep;
    table
};

/// Maps "dependence detected" flags for H¹..H⁵ to an equivalence class.
pub fn classify_pattern(dep: [bool; 5]) -> ModelClass {
    let idx = dep.iter().fold(0usize, |acc, &d| (acc << 1) | usize::from(d));
    PATTERN_TABLE[idx]
}

/// Result of the treatment vs time-of-day regression shared by every feature
/// of one participant and activity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SharedH1 {
    pub beta_t_x: f64,
    pub p1: f64,
}

/// p-values and coefficients of the five tests for one feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CIBattery {
    /// `[p1, p2, p3, p4, p5]` for H¹ (T ⊥ X) through H⁵ (Y ⊥ T | X).
    pub p: [f64; 5],
    /// `[β_{T,X}, β_{Y,X}, β_{Y,T}, β_{Y,X|T}, β_{Y,T|X}]`
    pub beta: [f64; 5],
    pub backend: Backend,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatteryOptions {
    pub backend: Backend,
    /// Also use the serial-robust backend for the T-on-X regression.
    pub h1_uses_backend: bool,
    pub arima: OrderSearchConfig,
    /// Fixed Newey-West lag instead of the plug-in rule.
    pub nw_lag: Option<usize>,
}

impl BatteryOptions {
    pub fn new(backend: Backend) -> Self {
        BatteryOptions { backend, h1_uses_backend: false, arima: OrderSearchConfig::default(), nw_lag: None }
    }
}

fn fit_with(
    backend: Backend,
    opts: &BatteryOptions,
    columns: &[&[f64]],
    y: &[f64],
) -> Result<RegressionFit, RegressError> {
    let design = design_with_intercept(columns);
    match backend {
        Backend::Ols => ols_fit(&design, y),
        Backend::NeweyWest => newey_west_fit(&design, y, opts.nw_lag),
        Backend::ArimaErrors => arima_errors_fit(&design, y, &opts.arima),
    }
}

/// Fits T on X.
pub fn fit_h1(x: &[f64], t: &[f64], opts: &BatteryOptions) -> Result<(SharedH1, RegressionFit), RegressError> {
    let backend = if opts.h1_uses_backend { opts.backend } else { Backend::Ols };
    let fit = fit_with(backend, opts, &[x], t)?;
    Ok((SharedH1 { beta_t_x: fit.coef[1], p1: fit.pvalue[1] }, fit))
}

/// The three outcome regressions of one feature.
#[derive(Debug, Clone)]
pub struct OutcomeFits {
    pub y_on_x: RegressionFit,
    pub y_on_t: RegressionFit,
    pub y_on_xt: RegressionFit,
}

impl OutcomeFits {
    pub fn fits(&self) -> [(&'static str, &RegressionFit); 3] {
        [("y~x", &self.y_on_x), ("y~t", &self.y_on_t), ("y~x+t", &self.y_on_xt)]
    }
}

fn check_size(series: &TripletSeries, backend: Backend, min_obs: usize) -> Result<(), RegressError> {
    let n = series.len();
    let need = match backend {
        Backend::ArimaErrors => min_obs,
        _ => 6, // at least 2k for the widest model
    };
    if n < need {
        return Err(RegressError::InsufficientData(format!(
            "{} backend needs at least {need} observations, got {n}",
            backend.as_str()
        )));
    }
    Ok(())
}

/// Fits the outcome models and assembles the battery around a shared H¹.
pub fn ci_battery_shared(
    series: &TripletSeries,
    h1: SharedH1,
    opts: &BatteryOptions,
) -> Result<(CIBattery, OutcomeFits), RegressError> {
    check_size(series, opts.backend, opts.arima.min_obs)?;
    let (x, t, y) = (&series.x[..], &series.t[..], &series.y[..]);
    let y_on_x = fit_with(opts.backend, opts, &[x], y)?;
    let y_on_t = fit_with(opts.backend, opts, &[t], y)?;
    let y_on_xt = fit_with(opts.backend, opts, &[x, t], y)?;
    let battery = CIBattery {
        p: [h1.p1, y_on_x.pvalue[1], y_on_t.pvalue[1], y_on_xt.pvalue[1], y_on_xt.pvalue[2]],
        beta: [h1.beta_t_x, y_on_x.coef[1], y_on_t.coef[1], y_on_xt.coef[1], y_on_xt.coef[2]],
        backend: opts.backend,
    };
    Ok((battery, OutcomeFits { y_on_x, y_on_t, y_on_xt }))
}

/// All five tests on one series, H¹ included.
pub fn ci_battery(series: &TripletSeries, opts: &BatteryOptions) -> Result<CIBattery, RegressError> {
    check_size(series, opts.backend, opts.arima.min_obs)?;
    let (h1, _) = fit_h1(&series.x, &series.t, opts)?;
    ci_battery_shared(series, h1, opts).map(|(b, _)| b)
}

/// Class and effect label from (adjusted) p-values at level `alpha`.
pub fn disentangle_feature(adjusted_p: [f64; 5], alpha: f64) -> (ModelClass, EffectLabel) {
    let class = classify_pattern(adjusted_p.map(|p| p < alpha));
    (class, class.effect_label())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits(i: usize) -> [bool; 5] {
        [4, 3, 2, 1, 0].map(|s| (i >> s) & 1 == 1)
    }

    #[test]
    fn table_rows() {
        let t = true;
        let f = false;
        assert_eq!(classify_pattern([t, t, t, t, f]), ModelClass::TreatmentAssoc);
        assert_eq!(classify_pattern([t, t, t, f, t]), ModelClass::TodAssoc);
        assert_eq!(classify_pattern([t, t, t, t, t]), ModelClass::BothAssoc);
        assert_eq!(classify_pattern([f, t, f, t, f]), ModelClass::TreatmentIndep);
        assert_eq!(classify_pattern([f, f, t, f, t]), ModelClass::TodIndep);
        assert_eq!(classify_pattern([f, t, t, t, t]), ModelClass::BothIndep);
        assert_eq!(classify_pattern([f; 5]), ModelClass::Unclassified);
    }

    #[test]
    fn exactly_six_patterns_are_classified() {
        let classified = (0..32).filter(|&i| classify_pattern(bits(i)) != ModelClass::Unclassified).count();
        assert_eq!(classified, 6);
    }

    #[test]
    fn feature_decisions() {
        assert_eq!(
            disentangle_feature([0.9, 0.01, 0.33, 0.01, 0.75], 0.05),
            (ModelClass::TreatmentIndep, EffectLabel::Treatment)
        );
        assert_eq!(disentangle_feature([1.0; 5], 0.05), (ModelClass::Unclassified, EffectLabel::None));
        assert_eq!(disentangle_feature([0.001; 5], 0.05), (ModelClass::BothAssoc, EffectLabel::Both));
    }

    #[test]
    fn all_after_is_rank_deficient() {
        let n = 40;
        let series = TripletSeries {
            x: vec![1.0; n],
            t: (0..n).map(|i| (i % 24) as f64).collect(),
            y: (0..n).map(|i| (i as f64).sin()).collect(),
            timestamps: (0..n).map(|i| i as f64).collect(),
        };
        let err = ci_battery(&series, &BatteryOptions::new(Backend::Ols)).unwrap_err();
        assert_eq!(err, RegressError::RankDeficient);
    }
}
