//! Leakage audit for case/control classification on longitudinal data.
//!
//! A classifier trained on a record-wise split sees every participant on both
//! sides and can score well by recognising participants rather than disease.
//! The audit compares record-wise, subject-wise and collapsed (one median row
//! per participant) splits under original, block-shuffled and fully shuffled
//! labels over repeated random splits.

mod forest;
mod metrics;

pub use forest::{predict_proba, train_forest, ForestModel, ForestParams};
pub use metrics::{hand_till_auc, roc_auc};

use std::collections::BTreeMap;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{CohortDataset, CohortLabel, CohortRow};
use crate::seed::{derive_seed, unit_rng};
use crate::stats::{mean, median, quantile, variance};

const STREAM_SPLIT: u64 = 0x5911;
const STREAM_SHUFFLE: u64 = 0x5AFF;
const STREAM_FOREST: u64 = 0xF0E5;
const STREAM_BALANCE: u64 = 0xBA1A;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AuditError {
    #[error("participant `{0}` has fewer than 2 rows")]
    TooFewRows(String),
    #[error("need at least 2 participants in each class")]
    TooFewParticipants,
    #[error("training labels contain a single class")]
    SingleClassTraining,
    #[error("expected width {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("AUC needs both classes")]
    SingleClass,
    #[error("class {0} is absent")]
    MissingClass(usize),
    #[error("invalid combination: {0}")]
    InvalidCombination(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitStrategy {
    RecordWise,
    SubjectWise,
    /// Median-collapse each participant, then split subject-wise.
    Collapsed,
}

impl SplitStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitStrategy::RecordWise => "record_wise",
            SplitStrategy::SubjectWise => "subject_wise",
            SplitStrategy::Collapsed => "collapsed",
        }
    }
}

impl FromStr for SplitStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "record" | "record_wise" => Ok(SplitStrategy::RecordWise),
            "subject" | "subject_wise" => Ok(SplitStrategy::SubjectWise),
            "collapsed" => Ok(SplitStrategy::Collapsed),
            other => Err(format!("unknown strategy `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelScheme {
    Original,
    /// One label per participant, permuted across participants.
    BlockShuffle,
    /// Row labels permuted across all rows.
    FullShuffle,
}

impl LabelScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelScheme::Original => "original",
            LabelScheme::BlockShuffle => "block_shuffle",
            LabelScheme::FullShuffle => "full_shuffle",
        }
    }
}

impl FromStr for LabelScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "original" => Ok(LabelScheme::Original),
            "block_shuffle" | "block" => Ok(LabelScheme::BlockShuffle),
            "full_shuffle" | "full" => Ok(LabelScheme::FullShuffle),
            other => Err(format!("unknown label scheme `{other}`")),
        }
    }
}

/// Train and test row indices, both ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub strategy: SplitStrategy,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

impl SplitPlan {
    /// Disjoint and covering `0..n_rows`.
    pub fn is_partition(&self, n_rows: usize) -> bool {
        let mut seen = vec![false; n_rows];
        for &i in self.train.iter().chain(&self.test) {
            if i >= n_rows || seen[i] {
                return false;
            }
            seen[i] = true;
        }
        seen.into_iter().all(|s| s)
    }
}

/// Halves every participant's rows at random; the extra row of an odd count
/// goes to a random side.
pub fn split_record_wise(data: &CohortDataset, seed: u64) -> Result<SplitPlan, AuditError> {
    let mut rng = unit_rng(seed, STREAM_SPLIT, 0);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (pid, mut rows) in data.participant_rows() {
        if rows.len() < 2 {
            return Err(AuditError::TooFewRows(pid));
        }
        rows.shuffle(&mut rng);
        let half = rows.len() / 2;
        let k = if rows.len() % 2 == 1 && rng.random_bool(0.5) { half + 1 } else { half };
        train.extend_from_slice(&rows[..k]);
        test.extend_from_slice(&rows[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitPlan { strategy: SplitStrategy::RecordWise, train, test, seed })
}

/// Assigns whole participants to one side, stratified by label. Each class
/// sends `round(fraction · n_c)` participants to training, at least one and
/// at most `n_c − 1`.
pub fn split_subject_wise(data: &CohortDataset, train_fraction: f64, seed: u64) -> Result<SplitPlan, AuditError> {
    let mut rng = unit_rng(seed, STREAM_SPLIT, 1);
    let mut by_class: BTreeMap<CohortLabel, Vec<String>> = BTreeMap::new();
    for (pid, label) in data.participants() {
        by_class.entry(label).or_default().push(pid);
    }
    if by_class.len() < 2 || by_class.values().any(|v| v.len() < 2) {
        return Err(AuditError::TooFewParticipants);
    }
    let mut in_train = BTreeMap::new();
    for (_, mut pids) in by_class {
        pids.shuffle(&mut rng);
        let n_c = pids.len();
        let k = ((train_fraction * n_c as f64).round() as usize).clamp(1, n_c - 1);
        for (i, pid) in pids.into_iter().enumerate() {
            in_train.insert(pid, i < k);
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, r) in data.rows().iter().enumerate() {
        if in_train[&r.participant_id] {
            train.push(i);
        } else {
            test.push(i);
        }
    }
    Ok(SplitPlan { strategy: SplitStrategy::SubjectWise, train, test, seed })
}

/// One row per participant holding the per-feature median of the observed
/// values; a feature never observed stays missing.
pub fn collapse_median(data: &CohortDataset) -> CohortDataset {
    let rows = data
        .participant_rows()
        .into_iter()
        .map(|(pid, idx)| {
            let label = data.rows()[idx[0]].label;
            let features = (0..data.n_features())
                .map(|j| {
                    let vals: Vec<f64> = idx.iter().filter_map(|&i| data.rows()[i].features[j]).collect();
                    median(&vals)
                })
                .collect();
            CohortRow { participant_id: pid, label, features }
        })
        .collect();
    CohortDataset::from_parts_unchecked(rows, data.feature_names().to_vec())
}

/// Relabels rows under `scheme`.
pub fn shuffle_labels(data: &CohortDataset, scheme: LabelScheme, seed: u64) -> CohortDataset {
    let mut rng = unit_rng(seed, STREAM_SHUFFLE, 0);
    match scheme {
        LabelScheme::Original => data.clone(),
        LabelScheme::BlockShuffle => {
            let participants = data.participants();
            let mut labels: Vec<CohortLabel> = participants.iter().map(|(_, l)| *l).collect();
            labels.shuffle(&mut rng);
            let map: BTreeMap<&str, CohortLabel> =
                participants.iter().map(|(p, _)| p.as_str()).zip(labels).collect();
            let row_labels: Vec<CohortLabel> = data.rows().iter().map(|r| map[r.participant_id.as_str()]).collect();
            data.with_row_labels(&row_labels)
        }
        LabelScheme::FullShuffle => {
            let mut labels: Vec<CohortLabel> = data.rows().iter().map(|r| r.label).collect();
            labels.shuffle(&mut rng);
            data.with_row_labels(&labels)
        }
    }
}

/// Random subset of the larger class's participants so both classes have the
/// same number of participants.
pub fn balance_participants(data: &CohortDataset, seed: u64) -> CohortDataset {
    let mut rng = unit_rng(seed, STREAM_BALANCE, 0);
    let mut by_class: BTreeMap<CohortLabel, Vec<String>> = BTreeMap::new();
    for (pid, label) in data.participants() {
        by_class.entry(label).or_default().push(pid);
    }
    let target = by_class.values().map(Vec::len).min().unwrap_or(0);
    let mut keep = std::collections::BTreeSet::new();
    for (_, mut pids) in by_class {
        pids.shuffle(&mut rng);
        keep.extend(pids.into_iter().take(target));
    }
    let rows = data.rows().iter().filter(|r| keep.contains(&r.participant_id)).cloned().collect();
    CohortDataset::from_parts_unchecked(rows, data.feature_names().to_vec())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub strategy: SplitStrategy,
    pub scheme: LabelScheme,
    pub repeats: usize,
    pub forest: ForestParams,
    pub train_fraction: f64,
    /// Subsample participants to equal class sizes in every repeat.
    pub balanced: bool,
    /// Classify participant identity and score with the one-vs-one AUC.
    pub multiclass: bool,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            strategy: SplitStrategy::RecordWise,
            scheme: LabelScheme::Original,
            repeats: 100,
            forest: ForestParams::default(),
            train_fraction: 0.5,
            balanced: false,
            multiclass: false,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), AuditError> {
        if self.multiclass && self.scheme != LabelScheme::Original {
            return Err(AuditError::InvalidCombination("identity classification uses the original labels".into()));
        }
        if self.multiclass && self.strategy != SplitStrategy::RecordWise {
            return Err(AuditError::InvalidCombination(
                "identity classification needs every participant in training (record-wise split)".into(),
            ));
        }
        if self.repeats == 0 || self.forest.n_trees == 0 {
            return Err(AuditError::InvalidCombination("repeats and trees must be at least 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(AuditError::InvalidCombination("train fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Seeds of repeat `r`. Original and shuffled runs with the same master seed
/// share split and forest seeds.
pub fn repeat_seeds(master: u64, r: usize) -> (u64, u64, u64, u64) {
    let r = r as u64;
    (
        derive_seed(master, STREAM_SPLIT, r),
        derive_seed(master, STREAM_SHUFFLE, r),
        derive_seed(master, STREAM_FOREST, r),
        derive_seed(master, STREAM_BALANCE, r),
    )
}

/// Redraws allowed when a shuffled labelling leaves one side with a single class.
const MAX_SPLIT_DRAWS: u64 = 100;

fn split_once(data: &CohortDataset, cfg: &ExperimentConfig, seed: u64) -> Result<SplitPlan, AuditError> {
    match cfg.strategy {
        SplitStrategy::RecordWise => split_record_wise(data, seed),
        SplitStrategy::SubjectWise | SplitStrategy::Collapsed => {
            let mut p = split_subject_wise(data, cfg.train_fraction, seed)?;
            p.strategy = cfg.strategy;
            Ok(p)
        }
    }
}

/// Splits are drawn on the original labels so every scheme sees the same
/// partitions. If the scheme's labels leave either side with one class, the
/// partition is redrawn from a derived seed.
fn draw_plan(data: &CohortDataset, labelled: &CohortDataset, cfg: &ExperimentConfig, seed: u64) -> Result<SplitPlan, AuditError> {
    let both_classes = |idx: &[usize]| {
        let cases = idx.iter().filter(|&&i| labelled.rows()[i].label == CohortLabel::Case).count();
        cases > 0 && cases < idx.len()
    };
    for attempt in 0..MAX_SPLIT_DRAWS {
        let s = if attempt == 0 { seed } else { derive_seed(seed, STREAM_SPLIT, attempt) };
        let plan = split_once(data, cfg, s)?;
        if cfg.multiclass || (both_classes(&plan.train) && both_classes(&plan.test)) {
            return Ok(plan);
        }
    }
    Err(AuditError::SingleClassTraining)
}

fn one_repeat(data: &CohortDataset, cfg: &ExperimentConfig, r: usize) -> Result<f64, AuditError> {
    let (split_seed, shuffle_seed, forest_seed, balance_seed) = repeat_seeds(cfg.seed, r);
    let balanced;
    let data = if cfg.balanced {
        balanced = balance_participants(data, balance_seed);
        &balanced
    } else {
        data
    };
    let labelled = shuffle_labels(data, cfg.scheme, shuffle_seed);
    let plan = draw_plan(data, &labelled, cfg, split_seed)?;
    debug_assert!(plan.is_partition(data.n_rows()));
    let rows = labelled.rows();
    let (classes, n_classes) = if cfg.multiclass {
        let ids: BTreeMap<String, usize> =
            data.participants().into_iter().enumerate().map(|(i, (p, _))| (p, i)).collect();
        (rows.iter().map(|r| ids[r.participant_id.as_str()]).collect::<Vec<_>>(), ids.len())
    } else {
        (rows.iter().map(|r| usize::from(r.label == CohortLabel::Case)).collect(), 2)
    };
    let pick = |idx: &[usize]| -> (Vec<&[Option<f64>]>, Vec<usize>) {
        (idx.iter().map(|&i| rows[i].features.as_slice()).collect(), idx.iter().map(|&i| classes[i]).collect())
    };
    let (x_train, y_train) = pick(&plan.train);
    let (x_test, y_test) = pick(&plan.test);
    let params = ForestParams { seed: forest_seed, ..cfg.forest };
    let model = train_forest(&x_train, &y_train, n_classes, &params)?;
    let proba = predict_proba(&model, &x_test)?;
    if cfg.multiclass {
        hand_till_auc(&proba, &y_test, n_classes)
    } else {
        let scores: Vec<f64> = proba.iter().map(|p| p[1]).collect();
        let positive: Vec<bool> = y_test.iter().map(|&c| c == 1).collect();
        roc_auc(&scores, &positive)
    }
}

/// Test-set AUC of every repeat, in repeat order.
pub fn run_split_experiment(data: &CohortDataset, cfg: &ExperimentConfig) -> Result<Vec<f64>, AuditError> {
    cfg.validate()?;
    let collapsed;
    let data = if cfg.strategy == SplitStrategy::Collapsed {
        collapsed = collapse_median(data);
        &collapsed
    } else {
        data
    };
    (0..cfg.repeats).into_par_iter().map(|r| one_repeat(data, cfg, r)).collect()
}

/// Boxplot summary of an AUC sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AucSummary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

pub fn summarize(auc: &[f64]) -> AucSummary {
    AucSummary {
        n: auc.len(),
        mean: mean(auc),
        sd: variance(auc).sqrt(),
        min: quantile(auc, 0.0),
        q1: quantile(auc, 0.25),
        median: quantile(auc, 0.5),
        q3: quantile(auc, 0.75),
        max: quantile(auc, 1.0),
    }
}
