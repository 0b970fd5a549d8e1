//! EigenShift: spectral editing of a language model's output projection.
//!
//! The toolkit factorizes an output head `W = U Σ Vᵀ`, scores each right
//! singular direction by how differently two classes of hidden states
//! activate it, damps the spectrum along the top-scoring directions, and
//! reconstructs the edited head. Around that core live expert-identification
//! scans (per-neuron AP/AUROC and k-means layer experts), baseline
//! activation interventions, evaluation metrics (AUROC, AP, TPH,
//! perplexity), a self-contained safetensors reader/writer, and an
//! analytically planted toy language model for end-to-end verification.

pub mod error;
pub mod linalg;
pub mod tensor_store;
pub mod metrics;
pub mod shift;
pub mod expert_id;
pub mod toylm;
pub mod interventions;
pub mod report;

pub use error::{Error, Result};
pub use linalg::{frobenius_loss, matmul, svd, Matrix, SvdFactors};
pub use shift::{delta_scores, eigenshift, select_targets, Plan, TargetRule, Variant};
