//! Benjamini-Hochberg adjustment and union-intersection tests.
//!
//! The global null for one participant and activity is that no feature
//! carries an effect. For each feature the class decided on the adjusted
//! p-values picks which test speaks for the effect (the conditional test when
//! the other variable also reaches `Y`, the marginal one otherwise); the
//! union-intersection p-value is the minimum over features.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::disentangle::{classify_pattern, CIBattery, ModelClass};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UiError {
    #[error("no features to test")]
    EmptyPool,
    #[error("feature `{0}` has a different T-on-X p-value than the first feature")]
    InconsistentH1(String),
    #[error("p-value {0} is outside [0, 1]")]
    InvalidPValue(f64),
}

/// Step-up BH adjusted p-values, returned in input order.
///
/// `p̃_(i) = min_{j ≥ i} min(1, m p_(j) / j)`. NaN inputs stay NaN and are
/// not counted in `m`.
pub fn bh_adjust(p: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..p.len()).filter(|&i| !p[i].is_nan()).collect();
    idx.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    let m = idx.len() as f64;
    let mut out = vec![f64::NAN; p.len()];
    let mut running = 1.0f64;
    for (rank, &i) in idx.iter().enumerate().rev() {
        let v = (m * p[i] / (rank + 1) as f64).min(1.0);
        running = running.min(v);
        out[i] = running;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Treatment,
    TimeOfDay,
}

impl Target {
    pub fn as_str(self) -> &'static str {
        match self {
            Target::Treatment => "treatment",
            Target::TimeOfDay => "time_of_day",
        }
    }
}

/// One of the five tests, by the hypothesis index 1..=5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TestId {
    H1,
    H2,
    H3,
    H4,
    H5,
}

impl TestId {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        ["H1", "H2", "H3", "H4", "H5"][self.index()]
    }

    /// H⁴ and H⁵ adjust for the other variable.
    pub fn is_adjusted(self) -> bool {
        matches!(self, TestId::H4 | TestId::H5)
    }
}

/// Test that carries the `target` effect for a feature in `class`.
pub fn chosen_test(class: ModelClass, target: Target) -> TestId {
    match target {
        Target::Treatment if class.has_tod_edge() => TestId::H4,
        Target::Treatment => TestId::H2,
        Target::TimeOfDay if class.has_treatment_edge() => TestId::H5,
        Target::TimeOfDay => TestId::H3,
    }
}

/// Per-feature outcome of the pooled adjustment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDecision {
    pub feature: String,
    pub raw_p: [f64; 5],
    pub adjusted_p: [f64; 5],
    pub class: ModelClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UiFeatureEntry {
    pub feature: String,
    pub chosen_test: TestId,
    pub adjusted_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UIResult {
    pub target: Target,
    pub per_feature: Vec<UiFeatureEntry>,
    pub ui_p: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UiOptions {
    pub alpha: f64,
    /// Decide classes on raw instead of adjusted p-values.
    pub classify_on_raw: bool,
}

impl Default for UiOptions {
    fn default() -> Self {
        UiOptions { alpha: 0.05, classify_on_raw: false }
    }
}

/// Adjusts the pooled `4m + 1` p-values (the shared H¹ once) and classifies
/// every feature.
pub fn adjust_pool(features: &[(String, CIBattery)], opts: &UiOptions) -> Result<Vec<FeatureDecision>, UiError> {
    adjust_pools(&[features], opts).map(|mut v| v.remove(0))
}

/// Several groups, each with its own shared H¹, adjusted in one BH pool.
pub fn adjust_pools(
    groups: &[&[(String, CIBattery)]],
    opts: &UiOptions,
) -> Result<Vec<Vec<FeatureDecision>>, UiError> {
    let mut pool = Vec::new();
    let mut h1_slots = Vec::with_capacity(groups.len());
    for features in groups {
        let Some((_, first)) = features.first() else {
            return Err(UiError::EmptyPool);
        };
        let p1 = first.p[0];
        h1_slots.push(pool.len());
        pool.push(p1);
        for (name, b) in features.iter() {
            if b.p[0].to_bits() != p1.to_bits() {
                return Err(UiError::InconsistentH1(name.clone()));
            }
            if let Some(&v) = b.p.iter().find(|v| !(0.0..=1.0).contains(*v) && !v.is_nan()) {
                return Err(UiError::InvalidPValue(v));
            }
            pool.extend_from_slice(&b.p[1..]);
        }
    }
    if groups.is_empty() {
        return Err(UiError::EmptyPool);
    }
    let adj = bh_adjust(&pool);
    Ok(groups
        .iter()
        .zip(h1_slots)
        .map(|(features, h1)| {
            features
                .iter()
                .enumerate()
                .map(|(i, (name, b))| {
                    let o = h1 + 1 + 4 * i;
                    let a = [adj[h1], adj[o], adj[o + 1], adj[o + 2], adj[o + 3]];
                    let basis = if opts.classify_on_raw { b.p } else { a };
                    FeatureDecision {
                        feature: name.clone(),
                        raw_p: b.p,
                        adjusted_p: a,
                        class: classify_pattern(basis.map(|p| p < opts.alpha)),
                    }
                })
                .collect()
        })
        .collect())
}

/// Union-intersection test for one target over already classified features.
pub fn ui_from_decisions(decisions: &[FeatureDecision], target: Target, alpha: f64) -> Result<UIResult, UiError> {
    if decisions.is_empty() {
        return Err(UiError::EmptyPool);
    }
    let per_feature: Vec<UiFeatureEntry> = decisions
        .iter()
        .map(|d| {
            let test = chosen_test(d.class, target);
            UiFeatureEntry { feature: d.feature.clone(), chosen_test: test, adjusted_p: d.adjusted_p[test.index()] }
        })
        .collect();
    let ui_p = per_feature.iter().map(|e| e.adjusted_p).filter(|p| !p.is_nan()).fold(f64::NAN, f64::min);
    Ok(UIResult { target, per_feature, reject: ui_p < alpha, ui_p })
}

/// Both union-intersection tests from raw batteries.
pub fn ui_test(features: &[(String, CIBattery)], opts: &UiOptions) -> Result<(Vec<FeatureDecision>, [UIResult; 2]), UiError> {
    let decisions = adjust_pool(features, opts)?;
    let tr = ui_from_decisions(&decisions, Target::Treatment, opts.alpha)?;
    let tod = ui_from_decisions(&decisions, Target::TimeOfDay, opts.alpha)?;
    Ok((decisions, [tr, tod]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regress::Backend;
    use proptest::prelude::*;

    fn battery(p: [f64; 5]) -> CIBattery {
        CIBattery { p, beta: [0.0; 5], backend: Backend::Ols }
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn single_feature_worked_example() {
        let feats = vec![("f".to_string(), battery([0.9, 0.004, 0.2, 0.003, 0.6]))];
        let (dec, [tr, tod]) = ui_test(&feats, &UiOptions::default()).unwrap();
        let expect = [0.9, 0.01, 1.0 / 3.0, 0.01, 0.75];
        for (a, e) in dec[0].adjusted_p.iter().zip(expect) {
            assert!(close(*a, e), "{a} vs {e}");
        }
        assert_eq!(dec[0].class, ModelClass::TreatmentIndep);
        assert_eq!(tr.per_feature[0].chosen_test, TestId::H2);
        assert!(close(tr.ui_p, 0.01) && tr.reject);
        assert_eq!(tod.per_feature[0].chosen_test, TestId::H5);
        assert!(close(tod.ui_p, 0.75) && !tod.reject);
    }

    #[test]
    fn conditional_test_when_both_paths_open() {
        let feats = vec![("f".to_string(), battery([0.001, 0.0002, 0.001, 0.2, 0.001]))];
        let (dec, [tr, tod]) = ui_test(&feats, &UiOptions::default()).unwrap();
        assert_eq!(dec[0].class, ModelClass::TodAssoc);
        assert_eq!(tr.per_feature[0].chosen_test, TestId::H4);
        assert!(close(tr.ui_p, 0.2) && !tr.reject);
        assert_eq!(tod.per_feature[0].chosen_test, TestId::H3);
        assert!(close(tod.ui_p, 0.00125) && tod.reject);
    }

    #[test]
    fn bh_reference_values() {
        let adj = bh_adjust(&[0.01, 0.04, 0.03, 0.005]);
        let expect = [0.02, 0.04, 0.04, 0.02];
        for (a, e) in adj.iter().zip(expect) {
            assert!(close(*a, e));
        }
        assert!(bh_adjust(&[]).is_empty());
    }

    #[test]
    fn pool_errors() {
        assert_eq!(ui_test(&[], &UiOptions::default()).unwrap_err(), UiError::EmptyPool);
        let feats = vec![
            ("a".to_string(), battery([0.5; 5])),
            ("b".to_string(), battery([0.4, 0.5, 0.5, 0.5, 0.5])),
        ];
        assert_eq!(
            ui_test(&feats, &UiOptions::default()).unwrap_err(),
            UiError::InconsistentH1("b".into())
        );
    }

    #[test]
    fn pooling_across_groups() {
        let a = vec![("f".to_string(), battery([0.9, 0.004, 0.2, 0.003, 0.6]))];
        let b = vec![("f".to_string(), battery([0.5, 0.5, 0.5, 0.5, 0.5]))];
        let out = adjust_pools(&[&a, &b], &UiOptions::default()).unwrap();
        let pooled = bh_adjust(&[0.9, 0.004, 0.2, 0.003, 0.6, 0.5, 0.5, 0.5, 0.5, 0.5]);
        assert_eq!(out[0][0].adjusted_p, [pooled[0], pooled[1], pooled[2], pooled[3], pooled[4]]);
        assert_eq!(out[1][0].adjusted_p[0], pooled[5]);
    }

    #[test]
    fn raw_classification_flag() {
        let feats = vec![
            ("a".to_string(), battery([0.9, 0.04, 0.9, 0.04, 0.9])),
            ("b".to_string(), battery([0.9, 0.9, 0.9, 0.9, 0.9])),
        ];
        let adj = adjust_pool(&feats, &UiOptions::default()).unwrap();
        assert_eq!(adj[0].class, ModelClass::Unclassified);
        let raw = adjust_pool(&feats, &UiOptions { classify_on_raw: true, ..Default::default() }).unwrap();
        assert_eq!(raw[0].class, ModelClass::TreatmentIndep);
    }

    proptest! {
        #[test]
        fn bh_preserves_order_and_dominates(p in prop::collection::vec(0.0f64..=1.0, 1..40)) {
            let adj = bh_adjust(&p);
            for i in 0..p.len() {
                prop_assert!(adj[i] >= p[i] - 1e-15 && adj[i] <= 1.0);
                for j in 0..p.len() {
                    if p[i] <= p[j] {
                        prop_assert!(adj[i] <= adj[j] + 1e-15);
                    }
                }
            }
        }

        #[test]
        fn bh_is_permutation_equivariant(p in prop::collection::vec(0.0f64..=1.0, 1..30), shift in 0usize..30) {
            let n = p.len();
            let rotated: Vec<f64> = (0..n).map(|i| p[(i + shift) % n]).collect();
            let a = bh_adjust(&p);
            let b = bh_adjust(&rotated);
            for i in 0..n {
                prop_assert_eq!(b[i].to_bits(), a[(i + shift) % n].to_bits());
            }
        }

        #[test]
        fn ui_p_is_min_of_chosen(ps in prop::collection::vec(prop::array::uniform4(0.0f64..=1.0), 1..8), p1 in 0.0f64..=1.0) {
            let feats: Vec<(String, CIBattery)> = ps.iter().enumerate()
                .map(|(i, q)| (format!("f{i}"), battery([p1, q[0], q[1], q[2], q[3]]))).collect();
            let (_, [tr, tod]) = ui_test(&feats, &UiOptions::default()).unwrap();
            for r in [tr, tod] {
                let m = r.per_feature.iter().map(|e| e.adjusted_p).fold(f64::INFINITY, f64::min);
                prop_assert_eq!(r.ui_p, m);
                prop_assert_eq!(r.reject, m < 0.05);
            }
        }
    }
}
