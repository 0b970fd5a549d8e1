//! Scalar evaluation metrics: the toxicity-perplexity harmonic score,
//! tie-aware AUROC, step-area average precision, precision/recall/F1, and
//! numerically stable perplexity helpers.
//!
//! AUROC and AP take raw scores plus binary labels (true = positive
//! class) and are shared by the neuron- and layer-expert scans.

use crate::error::{Error, Result};

/// Harmonic combination of toxicity reduction and perplexity cost:
/// `TPH(T, P) = 2·T·f / (T + f)` with `f = 1/(1 + |P|)`.
///
/// Both arguments are fractions, not percentage points: a 57.72% toxicity
/// reduction is `t = 0.5772`. `p` is signed (positive = perplexity got
/// worse) but enters only through `|p|`. Total on all of `f64 × f64`:
/// `t ≤ 0` (intervention did not reduce toxicity) scores 0, an infinite
/// perplexity change scores 0, and NaN anywhere scores 0.
pub fn tph(t: f64, p: f64) -> f64 {
    if !t.is_finite() || t <= 0.0 {
        return 0.0;
    }
    let fluency = 1.0 / (1.0 + p.abs());
    let v = 2.0 * t * fluency / (t + fluency);
    if v.is_finite() {
        v
    } else {
        0.0
    }
}

fn check_binary_inputs(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores contain non-finite values".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Degenerate(format!(
            "ranking metrics need both classes; got {pos} positive and {neg} negative labels"
        )));
    }
    Ok((pos, neg))
}

/// Area under the ROC curve as the tie-aware Mann-Whitney rank statistic:
/// tied positive/negative pairs are credited 0.5. Deterministic; equals
/// the O(n²) pairwise-comparison count exactly.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = check_binary_inputs(scores, labels)?;
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));

    // Midranks: tied scores share the average of their 1-based rank range.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let pos_f = pos as f64;
    Ok((rank_sum_pos - pos_f * (pos_f + 1.0) / 2.0) / (pos_f * neg as f64))
}

/// Average precision as the step-wise area under the precision-recall
/// sweep: `Σ (R_n − R_{n−1})·P_n` over descending distinct-score groups.
/// Constant scores therefore give the positive-class prevalence.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, _) = check_binary_inputs(scores, labels)?;
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));

    let mut ap = 0.0;
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        for &idx in &order[i..=j] {
            if labels[idx] {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        let recall = tp as f64 / pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j + 1;
    }
    Ok(ap)
}

/// Precision, recall, and F1 for hard binary predictions. Any 0/0 is
/// resolved to 0 and flagged.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prf1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// True when at least one of the three ratios was 0/0.
    pub degenerate: bool,
}

pub fn prf1(predictions: &[bool], labels: &[bool]) -> Result<Prf1> {
    if predictions.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions but {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut fnn = 0.0;
    for (&p, &l) in predictions.iter().zip(labels) {
        match (p, l) {
            (true, true) => tp += 1.0,
            (true, false) => fp += 1.0,
            (false, true) => fnn += 1.0,
            (false, false) => {}
        }
    }
    let mut degenerate = false;
    let mut ratio = |num: f64, den: f64| {
        if den == 0.0 {
            degenerate = true;
            0.0
        } else {
            num / den
        }
    };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fnn);
    let f1 = ratio(2.0 * precision * recall, precision + recall);
    Ok(Prf1 {
        precision,
        recall,
        f1,
        degenerate,
    })
}

/// `log Σ exp(v_i)`, stable for arbitrarily large magnitudes.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().fold(f64::NEG_INFINITY, |acc, &x| acc.max(x));
    if !m.is_finite() {
        return m;
    }
    let sum: f64 = v.iter().map(|&x| (x - m).exp()).sum();
    m + sum.ln()
}

/// Negative log-likelihood of `target` under a softmax over `logits`.
pub fn nll_from_logits(logits: &[f64], target: usize) -> Result<f64> {
    if target >= logits.len() {
        return Err(Error::InvalidArgument(format!(
            "target {target} out of range for {} logits",
            logits.len()
        )));
    }
    Ok(log_sum_exp(logits) - logits[target])
}

/// `exp(mean NLL)` over per-token negative log-likelihoods.
pub fn perplexity_from_nlls(nlls: &[f64]) -> Result<f64> {
    if nlls.is_empty() {
        return Err(Error::Degenerate(
            "perplexity over zero tokens is undefined".into(),
        ));
    }
    Ok((nlls.iter().sum::<f64>() / nlls.len() as f64).exp())
}
