use serde::Serialize;

use super::EvalError;
use crate::envs::{argmax, Policy, Transition};

/// Held-out action matching scores.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MatchReport {
    pub acc: f64,
    pub auc: f64,
    pub aps: f64,
    pub n_test: usize,
    /// Actions left out of the macro averages because they are absent from
    /// the test labels or are the only label present.
    pub skipped_classes: Vec<usize>,
}

/// 1-based ranks with ties given the mean of the positions they span.
pub(crate) fn mid_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Area under the ROC curve via the Mann–Whitney statistic; ties count half.
///
/// `None` when either class is missing.
pub fn binary_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len(), "one label per score");
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let ranks = mid_ranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos * n_neg) as f64)
}

/// Step-wise average precision over distinct score thresholds, highest first.
///
/// `None` when there are no positives.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len(), "one label per score");
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n_pos == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));
    let (mut tp, mut seen, mut ap, mut prev_recall) = (0usize, 0usize, 0.0, 0.0);
    let mut k = 0;
    while k < order.len() {
        let threshold = scores[order[k]];
        while k < order.len() && scores[order[k]] == threshold {
            tp += usize::from(labels[order[k]]);
            seen += 1;
            k += 1;
        }
        let recall = tp as f64 / n_pos as f64;
        ap += (recall - prev_recall) * tp as f64 / seen as f64;
        prev_recall = recall;
    }
    Some(ap)
}

/// Scores `policy` against the demonstrated actions in `test`.
///
/// Accuracy uses the most probable action. With two actions AUC and APS are
/// the binary scores for action 1; otherwise they are one-vs-rest macro
/// averages over the actions that can be scored.
pub fn action_matching<P: Policy + ?Sized>(policy: &P, test: &[Transition]) -> Result<MatchReport, EvalError> {
    if test.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    let probs: Vec<Vec<f64>> = test.iter().map(|tr| policy.probabilities(&tr.state)).collect();
    let n_actions = probs[0].len();
    if let Some(tr) = test.iter().find(|tr| tr.action >= n_actions) {
        return Err(EvalError::Input(format!("action {} out of range for {n_actions} actions", tr.action)));
    }
    let hits = test.iter().zip(&probs).filter(|(tr, p)| argmax(p) == tr.action).count();
    let acc = hits as f64 / test.len() as f64;

    let column = |c: usize| -> (Vec<f64>, Vec<bool>) {
        (probs.iter().map(|p| p[c]).collect(), test.iter().map(|tr| tr.action == c).collect())
    };
    let (auc, aps, skipped_classes) = if n_actions == 2 {
        let (scores, labels) = column(1);
        let auc = binary_auc(&scores, &labels).ok_or_else(|| EvalError::Undefined("AUC of a one-class test set".into()))?;
        let aps = average_precision(&scores, &labels).ok_or_else(|| EvalError::Undefined("APS without positives".into()))?;
        (auc, aps, Vec::new())
    } else {
        let (mut aucs, mut apss, mut skipped) = (Vec::new(), Vec::new(), Vec::new());
        for c in 0..n_actions {
            let (scores, labels) = column(c);
            match (binary_auc(&scores, &labels), average_precision(&scores, &labels)) {
                (Some(auc), Some(ap)) => {
                    aucs.push(auc);
                    apss.push(ap);
                }
                _ => skipped.push(c),
            }
        }
        if aucs.is_empty() {
            return Err(EvalError::Undefined("macro AUC with a single demonstrated action".into()));
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        (mean(&aucs), mean(&apss), skipped)
    };
    Ok(MatchReport {
        acc,
        auc,
        aps,
        n_test: test.len(),
        skipped_classes,
    })
}
