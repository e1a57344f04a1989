//! Activity records, CSV ingestion, triplet construction and eligibility.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("no valid rows in input")]
    EmptyInput,
    #[error("no usable records")]
    NoUsableRecords,
    #[error("records span more than one participant/activity")]
    MixedRecords,
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("participant `{0}` carries more than one label")]
    InconsistentLabel(String),
    #[error("dataset has no feature columns")]
    NoFeatures,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activity {
    Tapping,
    Voice,
    Walk,
    Rest,
}

impl Activity {
    pub fn as_str(self) -> &'static str {
        match self {
            Activity::Tapping => "tapping",
            Activity::Voice => "voice",
            Activity::Walk => "walk",
            Activity::Rest => "rest",
        }
    }
}

impl fmt::Display for Activity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Activity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tapping" => Ok(Activity::Tapping),
            "voice" => Ok(Activity::Voice),
            "walk" => Ok(Activity::Walk),
            "rest" => Ok(Activity::Rest),
            other => Err(format!("unknown activity `{other}`")),
        }
    }
}

/// Medication status of a task relative to the participant's medication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MedStatus {
    Before,
    After,
    Other,
}

impl MedStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            MedStatus::Before => "before",
            MedStatus::After => "after",
            MedStatus::Other => "other",
        }
    }

    /// Treatment indicator: 0 before, 1 after, `None` otherwise.
    pub fn treatment(self) -> Option<f64> {
        match self {
            MedStatus::Before => Some(0.0),
            MedStatus::After => Some(1.0),
            MedStatus::Other => None,
        }
    }
}

impl FromStr for MedStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "before" => Ok(MedStatus::Before),
            "after" => Ok(MedStatus::After),
            "other" => Ok(MedStatus::Other),
            other => Err(format!("unknown medication status `{other}`")),
        }
    }
}

/// One performance of an activity task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityRecord {
    pub participant_id: String,
    pub activity: Activity,
    /// Epoch seconds, UTC.
    pub timestamp: f64,
    pub med_status: MedStatus,
    pub features: IndexMap<String, Option<f64>>,
}

impl ActivityRecord {
    pub fn feature(&self, name: &str) -> Option<f64> {
        self.features.get(name).copied().flatten().filter(|v| v.is_finite())
    }

    /// Before/after record with at least one present feature value.
    pub fn is_usable(&self) -> bool {
        self.med_status != MedStatus::Other
            && self.features.values().any(|v| v.is_some_and(f64::is_finite))
    }
}

/// Header names of the four mandatory columns; every other column is a feature.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMapping {
    pub participant_id: String,
    pub activity: String,
    pub timestamp: String,
    pub med_status: String,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        ColumnMapping {
            participant_id: "participant_id".into(),
            activity: "activity".into(),
            timestamp: "timestamp".into(),
            med_status: "med_status".into(),
        }
    }
}

/// Fixed offset from UTC used to derive local hour-of-day and calendar day.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LocalTime {
    pub utc_offset_seconds: f64,
}

impl LocalTime {
    pub fn from_hours(hours: f64) -> Self {
        LocalTime { utc_offset_seconds: hours * 3600.0 }
    }

    /// Local hour of day in `[0, 24)`.
    pub fn hour_of_day(&self, timestamp: f64) -> f64 {
        let local = timestamp + self.utc_offset_seconds;
        let h = local.rem_euclid(SECONDS_PER_DAY) / 3600.0;
        if h >= 24.0 {
            0.0
        } else {
            h
        }
    }

    /// Local calendar day index (days since the epoch, local midnight boundaries).
    pub fn day(&self, timestamp: f64) -> i64 {
        ((timestamp + self.utc_offset_seconds) / SECONDS_PER_DAY).floor() as i64
    }
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub records: Vec<ActivityRecord>,
    pub rejected: usize,
    pub feature_names: Vec<String>,
}

pub fn ingest_csv(path: impl AsRef<Path>, schema: &ColumnMapping) -> Result<Ingested, DataError> {
    let file = std::fs::File::open(path)?;
    ingest_reader(file, schema)
}

/// Parses activity records from CSV text. Rows whose timestamp, activity or
/// medication status do not parse are rejected and counted.
pub fn ingest_reader<R: Read>(reader: R, schema: &ColumnMapping) -> Result<Ingested, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let pid = col(&schema.participant_id)?;
    let act = col(&schema.activity)?;
    let ts = col(&schema.timestamp)?;
    let med = col(&schema.med_status)?;
    let mandatory = [pid, act, ts, med];
    let feature_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| !mandatory.contains(i))
        .map(|(i, h)| (i, h.to_string()))
        .collect();
    if feature_cols.is_empty() {
        return Err(DataError::MissingColumn("<feature>".into()));
    }

    let mut records = Vec::new();
    let mut rejected = 0;
    for row in rdr.records() {
        let row = match row {
            Ok(r) => r,
            Err(_) => {
                rejected += 1;
                continue;
            }
        };
        let get = |i: usize| row.get(i).unwrap_or("");
        let participant_id = get(pid).to_string();
        let timestamp = get(ts).parse::<f64>().ok().filter(|t| t.is_finite() && *t > 0.0);
        let activity = get(act).parse::<Activity>().ok();
        let med_status = get(med).parse::<MedStatus>().ok();
        let (Some(timestamp), Some(activity), Some(med_status)) = (timestamp, activity, med_status)
        else {
            rejected += 1;
            continue;
        };
        if participant_id.is_empty() {
            rejected += 1;
            continue;
        }
        let features = feature_cols
            .iter()
            .map(|(i, name)| {
                let cell = get(*i);
                let v = if cell.is_empty() { None } else { cell.parse::<f64>().ok() };
                (name.clone(), v.filter(|v| v.is_finite()))
            })
            .collect();
        records.push(ActivityRecord { participant_id, activity, timestamp, med_status, features });
    }
    if records.is_empty() {
        return Err(DataError::EmptyInput);
    }
    Ok(Ingested {
        records,
        rejected,
        feature_names: feature_cols.into_iter().map(|(_, n)| n).collect(),
    })
}

/// Canonical JSON-lines export, one record per line.
pub fn write_jsonl<W: std::io::Write>(records: &[ActivityRecord], mut out: W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Stable sort by timestamp; ties keep ingestion order.
pub fn sort_records(records: &mut [ActivityRecord]) {
    records.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
}

/// Time-ordered `{X, T, Y}` series for one participant, activity and feature.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TripletSeries {
    /// Treatment: 0 before medication, 1 after.
    pub x: Vec<f64>,
    /// Local hour of day in `[0, 24)`.
    pub t: Vec<f64>,
    /// Outcome feature.
    pub y: Vec<f64>,
    pub timestamps: Vec<f64>,
}

impl TripletSeries {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn count_arm(&self, after: bool) -> usize {
        let target = if after { 1.0 } else { 0.0 };
        self.x.iter().filter(|&&x| x == target).count()
    }
}

fn check_single_group(records: &[ActivityRecord]) -> Result<(), DataError> {
    if let Some(first) = records.first() {
        if records
            .iter()
            .any(|r| r.participant_id != first.participant_id || r.activity != first.activity)
        {
            return Err(DataError::MixedRecords);
        }
    }
    Ok(())
}

fn ordered_series(mut rows: Vec<(f64, f64, f64)>, clock: LocalTime) -> TripletSeries {
    // content-based tie-break keeps the result independent of input order
    rows.sort_by(|a, b| {
        a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.total_cmp(&b.2))
    });
    let mut s = TripletSeries::default();
    for (ts, x, y) in rows {
        s.timestamps.push(ts);
        s.x.push(x);
        s.t.push(clock.hour_of_day(ts));
        s.y.push(y);
    }
    s
}

/// Builds the triplet series for `feature`. Records with status `other` or a
/// missing value for this feature are dropped.
pub fn build_triplet(
    records: &[ActivityRecord],
    feature: &str,
    clock: LocalTime,
) -> Result<TripletSeries, DataError> {
    check_single_group(records)?;
    let rows: Vec<_> = records
        .iter()
        .filter_map(|r| Some((r.timestamp, r.med_status.treatment()?, r.feature(feature)?)))
        .collect();
    if rows.is_empty() {
        return Err(DataError::NoUsableRecords);
    }
    Ok(ordered_series(rows, clock))
}

/// `{X, T}` pairs of every usable record, for the treatment vs time-of-day test
/// shared by all features of a participant and activity. `y` is left empty.
pub fn treatment_time_series(
    records: &[ActivityRecord],
    clock: LocalTime,
) -> Result<TripletSeries, DataError> {
    check_single_group(records)?;
    let rows: Vec<_> = records
        .iter()
        .filter(|r| r.is_usable())
        .filter_map(|r| Some((r.timestamp, r.med_status.treatment()?, 0.0)))
        .collect();
    if rows.is_empty() {
        return Err(DataError::NoUsableRecords);
    }
    let mut s = ordered_series(rows, clock);
    s.y.clear();
    Ok(s)
}

/// Participant and activity identifying one longitudinal group.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupKey {
    pub participant_id: String,
    pub activity: Activity,
}

/// Groups records by participant and activity, each group time-sorted.
pub fn group_records(records: &[ActivityRecord]) -> BTreeMap<GroupKey, Vec<ActivityRecord>> {
    let mut groups: BTreeMap<GroupKey, Vec<ActivityRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry(GroupKey { participant_id: r.participant_id.clone(), activity: r.activity })
            .or_default()
            .push(r.clone());
    }
    for v in groups.values_mut() {
        sort_records(v);
    }
    groups
}

/// Usable (before, after) record counts.
pub fn arm_counts(records: &[ActivityRecord]) -> (usize, usize) {
    records.iter().filter(|r| r.is_usable()).fold((0, 0), |(b, a), r| match r.med_status {
        MedStatus::Before => (b + 1, a),
        MedStatus::After => (b, a + 1),
        MedStatus::Other => (b, a),
    })
}

/// Keeps the groups with at least `min_per_arm` usable records before and
/// after medication.
pub fn filter_eligible(
    groups: &BTreeMap<GroupKey, Vec<ActivityRecord>>,
    min_per_arm: usize,
) -> BTreeSet<GroupKey> {
    groups
        .iter()
        .filter(|(_, recs)| {
            let (b, a) = arm_counts(recs);
            b >= min_per_arm && a >= min_per_arm
        })
        .map(|(k, _)| k.clone())
        .collect()
}

/// Fraction of active local days on which both a before and an after task
/// were performed.
pub fn parity_score(records: &[ActivityRecord], clock: LocalTime) -> Result<f64, DataError> {
    let mut days: BTreeMap<i64, (bool, bool)> = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_usable()) {
        let e = days.entry(clock.day(r.timestamp)).or_default();
        match r.med_status {
            MedStatus::Before => e.0 = true,
            MedStatus::After => e.1 = true,
            MedStatus::Other => {}
        }
    }
    if days.is_empty() {
        return Err(DataError::NoUsableRecords);
    }
    let both = days.values().filter(|(b, a)| *b && *a).count();
    Ok(both as f64 / days.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CohortLabel {
    Control,
    Case,
}

impl CohortLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            CohortLabel::Control => "control",
            CohortLabel::Case => "case",
        }
    }
}

impl FromStr for CohortLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "case" => Ok(CohortLabel::Case),
            "control" => Ok(CohortLabel::Control),
            other => Err(format!("unknown label `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortRow {
    pub participant_id: String,
    pub label: CohortLabel,
    pub features: Vec<Option<f64>>,
}

/// Stacked case/control feature matrix with participant blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortDataset {
    rows: Vec<CohortRow>,
    feature_names: Vec<String>,
}

impl CohortDataset {
    /// Validates labels and widths; rows whose features are all missing are dropped.
    pub fn new(rows: Vec<CohortRow>, feature_names: Vec<String>) -> Result<Self, DataError> {
        if feature_names.is_empty() {
            return Err(DataError::NoFeatures);
        }
        let mut labels: BTreeMap<&str, CohortLabel> = BTreeMap::new();
        for r in &rows {
            assert_eq!(r.features.len(), feature_names.len(), "row width matches feature names");
            if let Some(prev) = labels.insert(&r.participant_id, r.label) {
                if prev != r.label {
                    return Err(DataError::InconsistentLabel(r.participant_id.clone()));
                }
            }
        }
        let rows: Vec<_> = rows.into_iter().filter(|r| r.features.iter().any(Option::is_some)).collect();
        if rows.is_empty() {
            return Err(DataError::EmptyInput);
        }
        Ok(CohortDataset { rows, feature_names })
    }

    pub fn rows(&self) -> &[CohortRow] {
        &self.rows
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Participants in order of first appearance, with their label.
    pub fn participants(&self) -> Vec<(String, CohortLabel)> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for r in &self.rows {
            if seen.insert(r.participant_id.as_str()) {
                out.push((r.participant_id.clone(), r.label));
            }
        }
        out
    }

    /// Row indices per participant, keyed in order of first appearance.
    pub fn participant_rows(&self) -> IndexMap<String, Vec<usize>> {
        let mut out: IndexMap<String, Vec<usize>> = IndexMap::new();
        for (i, r) in self.rows.iter().enumerate() {
            out.entry(r.participant_id.clone()).or_default().push(i);
        }
        out
    }

    /// Same rows with new per-row labels. Used by the label shuffles, which may
    /// deliberately break the one-label-per-participant invariant.
    pub(crate) fn with_row_labels(&self, labels: &[CohortLabel]) -> CohortDataset {
        let rows = self
            .rows
            .iter()
            .zip(labels)
            .map(|(r, &label)| CohortRow { label, ..r.clone() })
            .collect();
        CohortDataset { rows, feature_names: self.feature_names.clone() }
    }

    pub(crate) fn from_parts_unchecked(rows: Vec<CohortRow>, feature_names: Vec<String>) -> Self {
        CohortDataset { rows, feature_names }
    }
}

/// Reads a cohort CSV with columns `participant_id`, `label` and one column
/// per feature. Returns the dataset and the number of rejected rows.
pub fn ingest_cohort_reader<R: Read>(reader: R) -> Result<(CohortDataset, usize), DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let pid = headers
        .iter()
        .position(|h| h == "participant_id")
        .ok_or_else(|| DataError::MissingColumn("participant_id".into()))?;
    let lab = headers
        .iter()
        .position(|h| h == "label")
        .ok_or_else(|| DataError::MissingColumn("label".into()))?;
    let feature_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != pid && *i != lab)
        .map(|(i, h)| (i, h.to_string()))
        .collect();
    if feature_cols.is_empty() {
        return Err(DataError::NoFeatures);
    }
    let mut rows = Vec::new();
    let mut rejected = 0;
    for row in rdr.records() {
        let Ok(row) = row else {
            rejected += 1;
            continue;
        };
        let participant_id = row.get(pid).unwrap_or("").to_string();
        let Ok(label) = row.get(lab).unwrap_or("").parse::<CohortLabel>() else {
            rejected += 1;
            continue;
        };
        if participant_id.is_empty() {
            rejected += 1;
            continue;
        }
        let features: Vec<Option<f64>> = feature_cols
            .iter()
            .map(|(i, _)| row.get(*i).and_then(|c| c.parse::<f64>().ok()).filter(|v| v.is_finite()))
            .collect();
        if features.iter().all(Option::is_none) {
            rejected += 1;
            continue;
        }
        rows.push(CohortRow { participant_id, label, features });
    }
    if rows.is_empty() {
        return Err(DataError::EmptyInput);
    }
    let names = feature_cols.into_iter().map(|(_, n)| n).collect();
    Ok((CohortDataset::new(rows, names)?, rejected))
}

pub fn ingest_cohort_csv(path: impl AsRef<Path>) -> Result<(CohortDataset, usize), DataError> {
    ingest_cohort_reader(std::fs::File::open(path)?)
}

/// Writes a cohort in the format [`ingest_cohort_reader`] reads.
pub fn write_cohort_csv<W: std::io::Write>(data: &CohortDataset, out: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["participant_id".to_string(), "label".to_string()];
    header.extend(data.feature_names.iter().cloned());
    w.write_record(&header)?;
    for r in &data.rows {
        let mut rec = vec![r.participant_id.clone(), r.label.as_str().to_string()];
        rec.extend(r.features.iter().map(|v| v.map(crate::format::num).unwrap_or_default()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(pid: &str, ts: f64, med: MedStatus, v: Option<f64>) -> ActivityRecord {
        let mut features = IndexMap::new();
        features.insert("f".to_string(), v);
        ActivityRecord {
            participant_id: pid.into(),
            activity: Activity::Tapping,
            timestamp: ts,
            med_status: med,
            features,
        }
    }

    #[test]
    fn ingest_well_formed() {
        let csv = "participant_id,activity,timestamp,med_status,f1,f2\n\
                   p1,tapping,1000,before,1.5,2\n\
                   p1,tapping,2000,after,,3\n\
                   p2,voice,3000,other,0.1,0.2\n";
        let ing = ingest_reader(csv.as_bytes(), &ColumnMapping::default()).unwrap();
        assert_eq!(ing.records.len(), 3);
        assert_eq!(ing.rejected, 0);
        assert_eq!(ing.feature_names, vec!["f1", "f2"]);
        assert_eq!(ing.records[1].features["f1"], None);
        assert_eq!(ing.records[1].features["f2"], Some(3.0));
    }

    #[test]
    fn med_status_is_case_insensitive() {
        let csv = "participant_id,activity,timestamp,med_status,f\np,Tapping,10,BEFORE,1\n";
        let ing = ingest_reader(csv.as_bytes(), &ColumnMapping::default()).unwrap();
        assert_eq!(ing.records[0].med_status, MedStatus::Before);
    }

    #[test]
    fn missing_timestamp_column() {
        let csv = "participant_id,activity,med_status,f\np,tapping,before,1\n";
        let err = ingest_reader(csv.as_bytes(), &ColumnMapping::default()).unwrap_err();
        assert!(matches!(err, DataError::MissingColumn(c) if c == "timestamp"));
    }

    #[test]
    fn bad_rows_are_rejected_and_counted() {
        let csv = "participant_id,activity,timestamp,med_status,f\n\
                   p,tapping,abc,before,1\n\
                   p,tapping,10,sometimes,1\n\
                   p,tapping,-5,after,1\n\
                   p,tapping,10,after,1\n";
        let ing = ingest_reader(csv.as_bytes(), &ColumnMapping::default()).unwrap();
        assert_eq!(ing.records.len(), 1);
        assert_eq!(ing.rejected, 3);
        let only_bad = "participant_id,activity,timestamp,med_status,f\np,tapping,abc,before,1\n";
        assert!(matches!(
            ingest_reader(only_bad.as_bytes(), &ColumnMapping::default()),
            Err(DataError::EmptyInput)
        ));
    }

    #[test]
    fn triplet_from_two_before_two_after() {
        let recs = vec![
            rec("p", 4000.0, MedStatus::After, Some(4.0)),
            rec("p", 1000.0, MedStatus::Before, Some(1.0)),
            rec("p", 3000.0, MedStatus::After, Some(3.0)),
            rec("p", 2000.0, MedStatus::Before, Some(2.0)),
        ];
        let s = build_triplet(&recs, "f", LocalTime::default()).unwrap();
        assert_eq!(s.len(), 4);
        assert_eq!(s.x, vec![0.0, 0.0, 1.0, 1.0]);
        assert_eq!(s.y, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn triplet_all_other_is_unusable() {
        let recs = vec![rec("p", 1.0, MedStatus::Other, Some(1.0))];
        assert!(matches!(
            build_triplet(&recs, "f", LocalTime::default()),
            Err(DataError::NoUsableRecords)
        ));
    }

    #[test]
    fn hour_of_day_uses_offset() {
        // 2021-01-01T13:30:00Z
        let ts = 1_609_507_800.0;
        assert_eq!(LocalTime::default().hour_of_day(ts), 13.5);
        assert_eq!(LocalTime::from_hours(-5.0).hour_of_day(ts), 8.5);
        let recs = vec![rec("p", ts, MedStatus::Before, Some(1.0))];
        let s = build_triplet(&recs, "f", LocalTime::default()).unwrap();
        assert_eq!(s.t, vec![13.5]);
    }

    #[test]
    fn missing_feature_drops_only_that_record() {
        let recs = vec![
            rec("p", 1.0, MedStatus::Before, None),
            rec("p", 2.0, MedStatus::After, Some(1.0)),
        ];
        let s = build_triplet(&recs, "f", LocalTime::default()).unwrap();
        assert_eq!(s.len(), 1);
    }

    fn arms(before: usize, after: usize) -> BTreeMap<GroupKey, Vec<ActivityRecord>> {
        let mut recs = Vec::new();
        for i in 0..before {
            recs.push(rec("p", 1.0 + i as f64, MedStatus::Before, Some(0.0)));
        }
        for i in 0..after {
            recs.push(rec("p", 1e6 + i as f64, MedStatus::After, Some(0.0)));
        }
        group_records(&recs)
    }

    #[test]
    fn eligibility_threshold() {
        assert_eq!(filter_eligible(&arms(15, 15), 15).len(), 1);
        assert_eq!(filter_eligible(&arms(14, 100), 15).len(), 0);
        assert_eq!(filter_eligible(&arms(1, 1), 1).len(), 1);
    }

    #[test]
    fn parity_counts_days() {
        let day = 86_400.0;
        let all_paired = vec![
            rec("p", 10.0, MedStatus::Before, Some(0.0)),
            rec("p", 20.0, MedStatus::After, Some(0.0)),
            rec("p", day + 10.0, MedStatus::Before, Some(0.0)),
            rec("p", day + 20.0, MedStatus::After, Some(0.0)),
        ];
        assert_eq!(parity_score(&all_paired, LocalTime::default()).unwrap(), 1.0);
        let never = vec![
            rec("p", 10.0, MedStatus::Before, Some(0.0)),
            rec("p", day + 20.0, MedStatus::After, Some(0.0)),
        ];
        assert_eq!(parity_score(&never, LocalTime::default()).unwrap(), 0.0);
        let mut half = all_paired.clone();
        half.push(rec("p", 2.0 * day + 5.0, MedStatus::Before, Some(0.0)));
        half.push(rec("p", 3.0 * day + 5.0, MedStatus::After, Some(0.0)));
        assert_eq!(parity_score(&half, LocalTime::default()).unwrap(), 0.5);
        assert!(parity_score(&[], LocalTime::default()).is_err());
    }

    #[test]
    fn cohort_rejects_inconsistent_labels() {
        let rows = vec![
            CohortRow { participant_id: "a".into(), label: CohortLabel::Case, features: vec![Some(1.0)] },
            CohortRow { participant_id: "a".into(), label: CohortLabel::Control, features: vec![Some(1.0)] },
        ];
        assert!(matches!(
            CohortDataset::new(rows, vec!["f".into()]),
            Err(DataError::InconsistentLabel(_))
        ));
    }

    #[test]
    fn jsonl_field_order_is_stable() {
        let mut buf = Vec::new();
        write_jsonl(&[rec("p", 5.0, MedStatus::After, Some(2.5))], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "{\"participant_id\":\"p\",\"activity\":\"tapping\",\"timestamp\":5.0,\"med_status\":\"after\",\"features\":{\"f\":2.5}}\n"
        );
    }
}
