//! Baseline activation interventions and the toxicity/fluency evaluation
//! harness that compares them.
//!
//! Every intervention here acts at the same site: the post-gelu MLP
//! activations (`HOOK_SITE`), i.e. the vector handed to W2 inside
//! `h = x + W2·gelu(W1·x)`. This mirrors the usual practice of editing
//! expert neurons where they fire, and keeps all baselines comparable to
//! the spectral edit, which instead rewrites the output head.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expert_id::NeuronActivationTable;
use crate::metrics::tph;
use crate::toylm::{GenParams, ToyModel};

/// Where interventions hook into the forward pass.
pub const HOOK_SITE: &str = "mlp-post-gelu";

/// An activation edit with all indices and factors validated up front,
/// so applying it is infallible.
#[derive(Clone, Debug)]
pub enum Intervention {
    /// Zero the expert neurons outright.
    DetZero { experts: Vec<usize> },
    /// Multiply the expert neurons by a uniform factor.
    DampUniform { experts: Vec<usize>, alpha: f64 },
    /// Per-neuron damping derived from expert scores: a neuron with
    /// AUROC s > 0.5 is scaled by clamp(1 − (2s − 1), 0, 1); the rest
    /// pass through unchanged.
    Aura { factors: Vec<f64> },
    /// Pin the expert neurons to fixed replacement values.
    SetMeanMax {
        experts: Vec<usize>,
        replacements: Vec<f64>,
    },
}

fn check_experts(experts: &[usize], width: usize) -> Result<()> {
    let mut seen = vec![false; width];
    for &e in experts {
        if e >= width {
            return Err(Error::InvalidArgument(format!(
                "expert neuron {e} out of range for width {width}"
            )));
        }
        if seen[e] {
            return Err(Error::InvalidArgument(format!(
                "duplicate expert neuron {e}"
            )));
        }
        seen[e] = true;
    }
    Ok(())
}

impl Intervention {
    pub fn det_zero(experts: Vec<usize>, width: usize) -> Result<Self> {
        check_experts(&experts, width)?;
        Ok(Intervention::DetZero { experts })
    }

    pub fn damp_uniform(experts: Vec<usize>, alpha: f64, width: usize) -> Result<Self> {
        check_experts(&experts, width)?;
        if !alpha.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "damping factor must be finite, got {alpha}"
            )));
        }
        Ok(Intervention::DampUniform { experts, alpha })
    }

    /// Build from per-neuron AUROC scores (one per MLP neuron).
    pub fn aura(scores: &[f64]) -> Result<Self> {
        let mut factors = Vec::with_capacity(scores.len());
        for (i, &s) in scores.iter().enumerate() {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::InvalidArgument(format!(
                    "AUROC score {s} for neuron {i} lies outside [0, 1]"
                )));
            }
            let factor = if s > 0.5 {
                (1.0 - (2.0 * s - 1.0)).clamp(0.0, 1.0)
            } else {
                1.0
            };
            factors.push(factor);
        }
        Ok(Intervention::Aura { factors })
    }

    pub fn set_mean_max(experts: Vec<usize>, replacements: Vec<f64>, width: usize) -> Result<Self> {
        check_experts(&experts, width)?;
        if experts.len() != replacements.len() {
            return Err(Error::Shape(format!(
                "{} experts but {} replacement values",
                experts.len(),
                replacements.len()
            )));
        }
        if let Some(r) = replacements.iter().find(|r| !r.is_finite()) {
            return Err(Error::NonFinite(format!(
                "replacement value {r} is not finite"
            )));
        }
        Ok(Intervention::SetMeanMax {
            experts,
            replacements,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Intervention::DetZero { .. } => "det-0",
            Intervention::DampUniform { .. } => "damp-uniform",
            Intervention::Aura { .. } => "aura",
            Intervention::SetMeanMax { .. } => "set-mean-max",
        }
    }

    /// Mutate one activation vector in place.
    pub fn apply(&self, acts: &mut [f64]) {
        match self {
            Intervention::DetZero { experts } => {
                for &e in experts {
                    acts[e] = 0.0;
                }
            }
            Intervention::DampUniform { experts, alpha } => {
                for &e in experts {
                    acts[e] *= alpha;
                }
            }
            Intervention::Aura { factors } => {
                for (a, &f) in acts.iter_mut().zip(factors) {
                    *a *= f;
                }
            }
            Intervention::SetMeanMax {
                experts,
                replacements,
            } => {
                for (&e, &r) in experts.iter().zip(replacements) {
                    acts[e] = r;
                }
            }
        }
    }

    /// Extra context worth surfacing next to scores.
    pub fn note(&self) -> Option<String> {
        match self {
            Intervention::Aura { .. } => Some(
                "aura scales each neuron with AUROC s > 0.5 by 1 - (2s - 1), \
                 clamped to [0, 1]; neurons at or below 0.5 pass through"
                    .to_string(),
            ),
            _ => None,
        }
    }
}

/// Per-expert replacement values for `set_mean_max`: the mean, over
/// toxic-labeled sentences, of each expert's pooled activation.
pub fn mean_max_replacements(
    table: &NeuronActivationTable,
    experts: &[usize],
) -> Result<Vec<f64>> {
    check_experts(experts, table.neurons())?;
    let labels = table.labels();
    let toxic_count = labels.iter().filter(|&&l| l).count();
    if toxic_count == 0 {
        return Err(Error::Degenerate(
            "no toxic-labeled sentences to average".into(),
        ));
    }
    let mut out = Vec::with_capacity(experts.len());
    for &e in experts {
        let col = table.neuron_column(e);
        let sum: f64 = col
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l)
            .map(|(&v, _)| v)
            .sum();
        out.push(sum / toxic_count as f64);
    }
    Ok(out)
}

/// Toxicity/fluency outcome of one model (or intervention) against its
/// baseline. `tph` is absent when the edit is an exact no-op — both
/// deltas are zero and the harmonic score carries no information.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    pub base_toxicity: f64,
    pub toxicity: f64,
    pub base_perplexity: f64,
    pub perplexity: f64,
    /// Relative toxicity drop T = (base − treated) / base.
    pub toxicity_drop: f64,
    /// Relative perplexity change P = (treated − base) / base.
    pub perplexity_increase: f64,
    pub tph: Option<f64>,
    pub notes: Vec<String>,
}

fn build_report(
    label: String,
    base_toxicity: f64,
    toxicity: f64,
    base_perplexity: f64,
    perplexity: f64,
    notes: Vec<String>,
) -> EvalReport {
    let toxicity_drop = if base_toxicity == 0.0 {
        0.0
    } else {
        (base_toxicity - toxicity) / base_toxicity
    };
    let perplexity_increase = if base_perplexity == 0.0 {
        0.0
    } else {
        (perplexity - base_perplexity) / base_perplexity
    };
    let tph = if toxicity == base_toxicity && perplexity == base_perplexity {
        None
    } else {
        Some(tph(toxicity_drop, perplexity_increase))
    };
    EvalReport {
        label,
        base_toxicity,
        toxicity,
        base_perplexity,
        perplexity,
        toxicity_drop,
        perplexity_increase,
        tph,
        notes,
    }
}

/// Score an activation intervention: toxicity on trigger prompts,
/// perplexity on the neutral corpus, both against the unhooked model.
pub fn evaluate_intervention(
    model: &ToyModel,
    intervention: &Intervention,
    trigger_prompts: &[Vec<usize>],
    neutral_corpus: &[Vec<usize>],
    gp: &GenParams,
) -> Result<EvalReport> {
    let base_toxicity = model.toxicity_rate(trigger_prompts, gp)?;
    let base_perplexity = model.perplexity(neutral_corpus)?;
    let toxicity =
        model.toxicity_rate_with(trigger_prompts, gp, |acts| intervention.apply(acts))?;
    let perplexity = model.perplexity_with(neutral_corpus, |acts| intervention.apply(acts))?;
    let notes = intervention.note().into_iter().collect();
    Ok(build_report(
        intervention.name().to_string(),
        base_toxicity,
        toxicity,
        base_perplexity,
        perplexity,
        notes,
    ))
}

/// Score a model against baseline numbers measured earlier (for example
/// read back from a stored report), avoiding a re-run of the base model.
pub fn evaluate_against_base(
    treated: &ToyModel,
    label: &str,
    base_toxicity: f64,
    base_perplexity: f64,
    trigger_prompts: &[Vec<usize>],
    neutral_corpus: &[Vec<usize>],
    gp: &GenParams,
) -> Result<EvalReport> {
    if !base_toxicity.is_finite() || !base_perplexity.is_finite() {
        return Err(Error::NonFinite(format!(
            "baseline numbers must be finite, got toxicity {base_toxicity}, perplexity {base_perplexity}"
        )));
    }
    let toxicity = treated.toxicity_rate(trigger_prompts, gp)?;
    let perplexity = treated.perplexity(neutral_corpus)?;
    Ok(build_report(
        label.to_string(),
        base_toxicity,
        toxicity,
        base_perplexity,
        perplexity,
        Vec::new(),
    ))
}

/// Score a treated model (for example one with a rewritten output head)
/// against the base model on the same prompts and corpus.
pub fn evaluate_model_pair(
    base: &ToyModel,
    treated: &ToyModel,
    label: &str,
    trigger_prompts: &[Vec<usize>],
    neutral_corpus: &[Vec<usize>],
    gp: &GenParams,
) -> Result<EvalReport> {
    let base_toxicity = base.toxicity_rate(trigger_prompts, gp)?;
    let base_perplexity = base.perplexity(neutral_corpus)?;
    let toxicity = treated.toxicity_rate(trigger_prompts, gp)?;
    let perplexity = treated.perplexity(neutral_corpus)?;
    Ok(build_report(
        label.to_string(),
        base_toxicity,
        toxicity,
        base_perplexity,
        perplexity,
        Vec::new(),
    ))
}
