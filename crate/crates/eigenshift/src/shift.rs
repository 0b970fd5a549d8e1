//! The core spectral intervention: project hidden states onto the
//! right-singular directions of the output head, score each direction by
//! the class-mean activation gap Δ_i, select the top-k, damp the selected
//! singular values by α, and reconstruct the edited head W′ = UΣ′Vᵀ.
//!
//! Scoring has two variants because the source material supports both
//! readings: `UnitV` projects onto unit right-singular vectors
//! (a_i = v_iᵀh, the default), `SigmaScaled` onto the rows of ΣVᵀ
//! (a_i = σ_i·v_iᵀh). The two rankings can differ; the choice is
//! configuration, not a guess.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{dot, frobenius_loss, svd, Matrix, SvdFactors};
use crate::tensor_store::ActivationDataset;

/// How hidden states are projected before scoring.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// a_i = v_iᵀh — projection onto unit right-singular vectors.
    #[default]
    UnitV,
    /// a_i = σ_i·v_iᵀh — projection onto rows of ΣVᵀ.
    SigmaScaled,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::UnitV => "unit-v",
            Variant::SigmaScaled => "sigma-scaled",
        }
    }
}

/// Which directions to damp: an explicit index set, the k best-scoring,
/// or a percentile threshold mapped to k = ceil(d·(1 − p/100)).
#[derive(Clone, Debug, PartialEq)]
pub enum TargetRule {
    Explicit(Vec<usize>),
    TopK(usize),
    Percentile(f64),
}

/// A full intervention: damping coefficient, target rule, scoring variant.
///
/// α is accepted on the whole real line (negative and >1 values are used
/// in ablations); values outside [0,1) produce a warning, not an error.
#[derive(Clone, Debug)]
pub struct Plan {
    pub alpha: f64,
    pub rule: TargetRule,
    pub variant: Variant,
}

impl Plan {
    pub fn new(alpha: f64, rule: TargetRule, variant: Variant) -> Result<Plan> {
        if !alpha.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "alpha must be finite, got {alpha}"
            )));
        }
        match &rule {
            TargetRule::Explicit(targets) => {
                let mut seen = std::collections::BTreeSet::new();
                for &t in targets {
                    if !seen.insert(t) {
                        return Err(Error::InvalidArgument(format!(
                            "duplicate target index {t}"
                        )));
                    }
                }
            }
            TargetRule::TopK(k) => {
                if *k == 0 {
                    return Err(Error::InvalidArgument(
                        "top-k must be at least 1".to_string(),
                    ));
                }
            }
            TargetRule::Percentile(p) => {
                if !(p.is_finite() && *p > 0.0 && *p < 100.0) {
                    return Err(Error::InvalidArgument(format!(
                        "percentile must lie strictly between 0 and 100, got {p}"
                    )));
                }
            }
        }
        Ok(Plan {
            alpha,
            rule,
            variant,
        })
    }
}

/// Per-direction influence scores: Δ_i and the class-conditional means
/// they are built from (Δ = mean_toxic − mean_nontoxic, exact).
#[derive(Clone, Debug)]
pub struct DeltaScores {
    pub delta: Vec<f64>,
    pub mean_toxic: Vec<f64>,
    pub mean_nontoxic: Vec<f64>,
    pub variant: Variant,
}

impl DeltaScores {
    pub fn len(&self) -> usize {
        self.delta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta.is_empty()
    }

    /// All direction indices sorted by Δ descending, ties by lower index.
    pub fn ranked(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.delta.len()).collect();
        order.sort_by(|&a, &b| self.delta[b].total_cmp(&self.delta[a]).then(a.cmp(&b)));
        order
    }
}

/// Project every hidden state onto the singular directions: entry (j, i)
/// is v_iᵀh_j, scaled by σ_i under the `SigmaScaled` variant.
pub fn project_activations(
    factors: &SvdFactors,
    ds: &ActivationDataset,
    variant: Variant,
) -> Result<Matrix> {
    let vt = factors.vt();
    if ds.dim() != vt.cols() {
        return Err(Error::Shape(format!(
            "hidden states have dimension {} but the factors expect {}",
            ds.dim(),
            vt.cols()
        )));
    }
    let n = ds.len();
    let k = factors.sigma().len();
    let mut out = Matrix::zeros(n, k);
    for j in 0..n {
        let h = ds.hidden.row(j);
        let row = out.row_mut(j);
        for (i, slot) in row.iter_mut().enumerate() {
            let a = dot(h, vt.row(i));
            *slot = match variant {
                Variant::UnitV => a,
                Variant::SigmaScaled => factors.sigma()[i] * a,
            };
        }
    }
    Ok(out)
}

/// Δ_i = mean over toxic samples of a_i minus mean over non-toxic samples.
/// Requires both classes to be present.
pub fn delta_scores(
    factors: &SvdFactors,
    ds: &ActivationDataset,
    variant: Variant,
) -> Result<DeltaScores> {
    let pos = ds.positive_count();
    let neg = ds.negative_count();
    if pos == 0 || neg == 0 {
        return Err(Error::Degenerate(format!(
            "delta scores need both classes; dataset has {pos} toxic and {neg} non-toxic samples"
        )));
    }
    let acts = project_activations(factors, ds, variant)?;
    let k = acts.cols();
    let mut sum_pos = vec![0.0; k];
    let mut sum_neg = vec![0.0; k];
    for j in 0..ds.len() {
        let row = acts.row(j);
        let sums = if ds.labels[j] { &mut sum_pos } else { &mut sum_neg };
        for (s, &a) in sums.iter_mut().zip(row) {
            *s += a;
        }
    }
    let mean_toxic: Vec<f64> = sum_pos.iter().map(|s| s / pos as f64).collect();
    let mean_nontoxic: Vec<f64> = sum_neg.iter().map(|s| s / neg as f64).collect();
    let delta: Vec<f64> = mean_toxic
        .iter()
        .zip(&mean_nontoxic)
        .map(|(t, n)| t - n)
        .collect();
    Ok(DeltaScores {
        delta,
        mean_toxic,
        mean_nontoxic,
        variant,
    })
}

/// Resolve the plan's target rule against the scores. Explicit targets
/// pass through unchanged (after a range check); ranked rules return the
/// k highest-Δ indices in descending score order, ties by lower index.
pub fn select_targets(scores: &DeltaScores, plan: &Plan) -> Result<Vec<usize>> {
    let d = scores.len();
    let k = match &plan.rule {
        TargetRule::Explicit(targets) => {
            for &t in targets {
                if t >= d {
                    return Err(Error::InvalidArgument(format!(
                        "target index {t} out of range for {d} directions"
                    )));
                }
            }
            return Ok(targets.clone());
        }
        TargetRule::TopK(k) => *k,
        TargetRule::Percentile(p) => percentile_to_k(d, *p)?,
    };
    if k == 0 {
        return Err(Error::InvalidArgument(
            "top-k must be at least 1".to_string(),
        ));
    }
    if k > d {
        return Err(Error::InvalidArgument(format!(
            "top-k {k} exceeds the {d} available directions"
        )));
    }
    let mut order = scores.ranked();
    order.truncate(k);
    Ok(order)
}

/// Percentile threshold p ∈ (0,100) → number of directions
/// k = ceil(d·(1 − p/100)).
pub fn percentile_to_k(d: usize, p: f64) -> Result<usize> {
    if !(p.is_finite() && p > 0.0 && p < 100.0) {
        return Err(Error::InvalidArgument(format!(
            "percentile must lie strictly between 0 and 100, got {p}"
        )));
    }
    let k = (d as f64 * (1.0 - p / 100.0)).ceil() as usize;
    Ok(k.clamp(1, d.max(1)))
}

/// σ′_i = α·σ_i for targeted i, unchanged otherwise. U and Vᵀ are shared.
/// The result is marked post-intervention: its spectrum may be unsorted or
/// negative (α ≤ 0 or α > 1).
pub fn damp_spectrum(factors: &SvdFactors, targets: &[usize], alpha: f64) -> Result<SvdFactors> {
    let mut sigma = factors.sigma().to_vec();
    for &t in targets {
        if t >= sigma.len() {
            return Err(Error::InvalidArgument(format!(
                "target index {t} out of range for {} singular values",
                sigma.len()
            )));
        }
        sigma[t] = alpha * factors.sigma()[t];
    }
    factors.with_sigma(sigma)
}

/// Everything a caller needs to inspect or persist after an intervention.
#[derive(Clone, Debug)]
pub struct ShiftResult {
    pub w_prime: Matrix,
    pub scores: DeltaScores,
    pub targets: Vec<usize>,
    pub sigma_before: Vec<f64>,
    pub sigma_after: Vec<f64>,
    pub frobenius_delta: f64,
    /// True when no singular value changed bitwise, so `w_prime` is a
    /// byte-exact copy of the input.
    pub identity: bool,
    pub warnings: Vec<String>,
}

/// JSON diagnostics summarizing one intervention.
#[derive(Clone, Debug, Serialize)]
pub struct ShiftDiagnostics {
    pub alpha: f64,
    pub k: usize,
    pub targets: Vec<usize>,
    pub delta_top: Vec<f64>,
    pub frobenius_delta: f64,
}

impl ShiftResult {
    pub fn diagnostics(&self, alpha: f64) -> ShiftDiagnostics {
        ShiftDiagnostics {
            alpha,
            k: self.targets.len(),
            targets: self.targets.clone(),
            delta_top: self.targets.iter().map(|&i| self.scores.delta[i]).collect(),
            frobenius_delta: self.frobenius_delta,
        }
    }
}

/// The full pipeline: svd → delta_scores → select_targets → damp_spectrum
/// → reconstruct. Deterministic: identical input bytes give identical
/// output bytes, and a no-op plan (α = 1 or an empty target set) returns
/// the input matrix byte-exactly.
pub fn eigenshift(w: &Matrix, ds: &ActivationDataset, plan: &Plan) -> Result<ShiftResult> {
    if ds.dim() != w.cols() {
        return Err(Error::Shape(format!(
            "hidden states have dimension {} but the weight matrix has {} columns",
            ds.dim(),
            w.cols()
        )));
    }
    let factors = svd(w)?;
    let scores = delta_scores(&factors, ds, plan.variant)?;
    let targets = select_targets(&scores, plan)?;

    let mut warnings = Vec::new();
    if !(0.0..1.0).contains(&plan.alpha) {
        warnings.push(format!(
            "alpha={} lies outside [0,1): targeted directions are amplified, kept, or flipped rather than damped",
            plan.alpha
        ));
    }
    if targets.is_empty() {
        warnings.push("no directions targeted; output weights equal input weights".to_string());
    }

    let sigma_before = factors.sigma().to_vec();
    let damped = damp_spectrum(&factors, &targets, plan.alpha)?;
    let sigma_after = damped.sigma().to_vec();
    let identity = sigma_before
        .iter()
        .zip(&sigma_after)
        .all(|(a, b)| a.to_bits() == b.to_bits());
    let w_prime = damped.reconstruct();
    let frobenius_delta = frobenius_loss(w, &w_prime)?;

    Ok(ShiftResult {
        w_prime,
        scores,
        targets,
        sigma_before,
        sigma_after,
        frobenius_delta,
        identity,
        warnings,
    })
}
