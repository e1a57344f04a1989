use super::AuditError;
use crate::preprocess::midranks;

/// Area under the ROC curve as the Mann-Whitney probability
/// `P(s⁺ > s⁻) + ½ P(s⁺ = s⁻)`, computed from midranks.
pub fn roc_auc(scores: &[f64], positive: &[bool]) -> Result<f64, AuditError> {
    if scores.len() != positive.len() {
        return Err(AuditError::ShapeMismatch { expected: positive.len(), got: scores.len() });
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(AuditError::SingleClass);
    }
    let ranks = midranks(scores);
    let rank_sum: f64 = ranks.iter().zip(positive).filter(|(_, &p)| p).map(|(r, _)| r).sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// One-vs-one multi-class AUC: the mean over class pairs of
/// `½ [Â(i|j) + Â(j|i)]`, where `Â(i|j)` ranks class-`i` probabilities of
/// the rows labelled `i` or `j`.
pub fn hand_till_auc(proba: &[Vec<f64>], labels: &[usize], n_classes: usize) -> Result<f64, AuditError> {
    if proba.len() != labels.len() {
        return Err(AuditError::ShapeMismatch { expected: labels.len(), got: proba.len() });
    }
    if n_classes < 2 {
        return Err(AuditError::SingleClass);
    }
    if let Some(row) = proba.iter().find(|r| r.len() != n_classes) {
        return Err(AuditError::ShapeMismatch { expected: n_classes, got: row.len() });
    }
    for c in 0..n_classes {
        if !labels.contains(&c) {
            return Err(AuditError::MissingClass(c));
        }
    }
    let mut total = 0.0;
    for i in 0..n_classes {
        for j in (i + 1)..n_classes {
            let rows: Vec<usize> = (0..labels.len()).filter(|&r| labels[r] == i || labels[r] == j).collect();
            let is_i: Vec<bool> = rows.iter().map(|&r| labels[r] == i).collect();
            let is_j: Vec<bool> = is_i.iter().map(|b| !b).collect();
            let a_ij = roc_auc(&rows.iter().map(|&r| proba[r][i]).collect::<Vec<_>>(), &is_i)?;
            let a_ji = roc_auc(&rows.iter().map(|&r| proba[r][j]).collect::<Vec<_>>(), &is_j)?;
            total += 0.5 * (a_ij + a_ji);
        }
    }
    Ok(2.0 * total / (n_classes * (n_classes - 1)) as f64)
}
