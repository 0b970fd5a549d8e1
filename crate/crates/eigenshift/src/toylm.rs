//! A deterministic miniature language model with analytically planted
//! toxic structure — no training anywhere.
//!
//! The model is a causal mean-pooling mixer with one residual MLP:
//! `h = x + W2·gelu(W1·x)` where `x` is the mean of the context token
//! embeddings, and `logits = head·h`. The head is constructed directly as
//! `U·diag(σ)·Vᵀ` with a designated planted index j*: column u_{j*} loads
//! only on the toxic-token rows, and the right direction v_{j*} is the
//! hidden-space axis that trigger contexts (and only trigger contexts)
//! excite through the MLP experts. Damping σ_{j*} therefore removes the
//! model's ability to promote toxic tokens while leaving every other
//! logit untouched — the property the whole toolkit is evaluated against.
//!
//! Geometry, in brief: all embeddings are exactly orthogonal to a gate
//! output axis χ̂; a gate axis ĝ carries context polarity. Neutral tokens
//! sit at negative ĝ so MLP expert pre-activations stay in the gelu dead
//! zone; trigger tokens sit at strongly positive ĝ, waking the experts,
//! whose output columns write along χ̂. Since v_{j*} = χ̂ and only u_{j*}
//! touches toxic rows, toxic logits are exactly σ_{j*}·u_{j*}·(χ̂·MLP
//! output): essentially zero on neutral contexts, dominant on triggers.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix, SvdFactors};
use crate::metrics::{log_sum_exp, nll_from_logits, perplexity_from_nlls};
use crate::tensor_store::{
    load_weight_matrix, write_tensor_file, ActivationDataset, TensorFile, TensorPayload,
};

/// Number of MLP neurons wired as the trigger-gated expert group.
const N_EXPERTS: usize = 16;
/// Depth of the neutral embedding along −ĝ (keeps experts asleep).
const NEUTRAL_GATE: f64 = 1.2;
/// Depth of the BOS embedding along −ĝ.
const BOS_GATE: f64 = 3.0;
/// Neutral embedding noise scale (orthogonal to χ̂).
const NEUTRAL_NOISE: f64 = 0.35;
/// Trigger embedding noise scale.
const TRIGGER_NOISE: f64 = 0.3;
/// Expert W1 row gain along ĝ.
const W1_EXPERT_GAIN: f64 = 2.0;
/// Total expert W2 gain along χ̂ (split across the expert group).
const W2_EXPERT_GAIN: f64 = 2.0;
/// Planted singular value (held at the bottom of the spectrum).
const PLANTED_SIGMA: f64 = 4.0;
/// Initial trigger-embedding gain along ĝ; the tuning loop scales it up.
const TRIGGER_GAIN_INIT: f64 = 7.0;
const TUNING_MAX_ROUNDS: usize = 12;
const TUNING_GAIN_STEP: f64 = 1.5;

/// Sizes and token-role sets for the toy model.
#[derive(Clone, Debug)]
pub struct ToyParams {
    pub vocab: usize,
    pub hidden: usize,
    pub mlp_width: usize,
    pub toxic_tokens: Vec<usize>,
    pub trigger_tokens: Vec<usize>,
}

impl Default for ToyParams {
    fn default() -> Self {
        ToyParams {
            vocab: 64,
            hidden: 16,
            mlp_width: 64,
            toxic_tokens: (56..64).collect(),
            trigger_tokens: (48..56).collect(),
        }
    }
}

/// A fully constructed toy model. Immutable after construction.
#[derive(Clone, Debug)]
pub struct ToyModel {
    pub embedding: Matrix,
    pub w1: Matrix,
    pub w2: Matrix,
    pub head: Matrix,
    pub toxic_tokens: Vec<usize>,
    pub trigger_tokens: Vec<usize>,
    pub bos: usize,
    pub planted_index: usize,
    pub seed: u64,
}

/// Generation settings; `seed` is combined with the prompt index when
/// scoring prompt sets so each continuation gets its own stream.
#[derive(Clone, Copy, Debug)]
pub struct GenParams {
    pub n_tokens: usize,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            n_tokens: 8,
            temperature: 1.0,
            seed: 0,
        }
    }
}

/// Tanh-approximation gelu.
pub fn gelu(z: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * z * (1.0 + (c * (z + 0.044715 * z * z * z)).tanh())
}

fn standard_normal_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = dot(v, v).sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    norm
}

fn project_out(v: &mut [f64], unit: &[f64]) {
    let c = dot(v, unit);
    for (x, &u) in v.iter_mut().zip(unit) {
        *x -= c * u;
    }
}

/// Random unit vector orthogonal to every vector in `basis` (which must
/// themselves be orthonormal). Deterministic given the rng state.
fn unit_orthogonal(rng: &mut ChaCha8Rng, d: usize, basis: &[&[f64]]) -> Vec<f64> {
    for _ in 0..64 {
        let mut v = standard_normal_vec(rng, d);
        for b in basis {
            project_out(&mut v, b);
        }
        if normalize(&mut v) > 1e-6 {
            return v;
        }
    }
    unreachable!("random normal vectors cannot keep collapsing onto a small basis")
}

fn matvec(m: &Matrix, v: &[f64]) -> Vec<f64> {
    (0..m.rows()).map(|r| dot(m.row(r), v)).collect()
}

/// Construct the planted model. Deterministic in `seed`; the trigger gain
/// is raised geometrically until the planted margins hold (trigger
/// contexts rank a toxic token in the top-3, neutral contexts leave every
/// toxic token outside the top-10).
pub fn build_toy_model(seed: u64, params: &ToyParams) -> Result<ToyModel> {
    let v = params.vocab;
    let d = params.hidden;
    let m = params.mlp_width;
    let bos = 0usize;

    if d < 4 {
        return Err(Error::InvalidArgument(format!(
            "hidden dimension must be at least 4, got {d}"
        )));
    }
    if m < N_EXPERTS {
        return Err(Error::InvalidArgument(format!(
            "mlp width must be at least {N_EXPERTS}, got {m}"
        )));
    }
    let toxic: BTreeSet<usize> = params.toxic_tokens.iter().copied().collect();
    let trigger: BTreeSet<usize> = params.trigger_tokens.iter().copied().collect();
    if toxic.is_empty() {
        return Err(Error::InvalidArgument("toxic token set is empty".into()));
    }
    if !toxic.is_disjoint(&trigger) {
        return Err(Error::InvalidArgument(
            "toxic and trigger token sets overlap".into(),
        ));
    }
    if toxic.contains(&bos) || trigger.contains(&bos) {
        return Err(Error::InvalidArgument(
            "token 0 is reserved for BOS and cannot be toxic or trigger".into(),
        ));
    }
    if let Some(&t) = toxic.iter().chain(trigger.iter()).find(|&&t| t >= v) {
        return Err(Error::InvalidArgument(format!(
            "token id {t} out of range for vocabulary {v}"
        )));
    }
    if v <= toxic.len() + trigger.len() + 1 {
        return Err(Error::InvalidArgument(format!(
            "vocabulary {v} leaves no neutral tokens beside BOS, {} toxic, {} trigger",
            toxic.len(),
            trigger.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Axes: ĝ gates the experts, χ̂ is the expert output axis (and v_{j*}).
    let mut gate = standard_normal_vec(&mut rng, d);
    normalize(&mut gate);
    let chi = unit_orthogonal(&mut rng, d, &[&gate]);

    // Embeddings. Everything is exactly orthogonal to χ̂ so that the only
    // route into the planted direction is through the MLP experts.
    let mut embedding = Matrix::zeros(v, d);
    for (slot, &g) in embedding.row_mut(bos).iter_mut().zip(&gate) {
        *slot = -BOS_GATE * g;
    }
    for t in 0..v {
        if t == bos || trigger.contains(&t) {
            continue;
        }
        let noise = unit_orthogonal(&mut rng, d, &[&chi]);
        let row = embedding.row_mut(t);
        for i in 0..d {
            row[i] = -NEUTRAL_GATE * gate[i] + NEUTRAL_NOISE * noise[i];
        }
    }
    // Trigger noise directions are drawn once; the tuning loop only
    // rescales the gain, keeping the whole construction deterministic.
    let trigger_list: Vec<usize> = trigger.iter().copied().collect();
    let trigger_noise: Vec<Vec<f64>> = trigger_list
        .iter()
        .map(|_| unit_orthogonal(&mut rng, d, &[&gate, &chi]))
        .collect();

    // MLP. Expert rows of W1 listen along ĝ; expert columns of W2 write
    // along χ̂ with their residual noise kept exactly off χ̂ so sleeping
    // experts cannot leak into the planted direction.
    let mut w1 = Matrix::zeros(m, d);
    for i in 0..m {
        if i < N_EXPERTS {
            let noise = unit_orthogonal(&mut rng, d, &[]);
            let row = w1.row_mut(i);
            for j in 0..d {
                row[j] = W1_EXPERT_GAIN * gate[j] + 0.05 * noise[j];
            }
        } else {
            let noise = unit_orthogonal(&mut rng, d, &[]);
            let row = w1.row_mut(i);
            for j in 0..d {
                row[j] = 0.3 * noise[j];
            }
        }
    }
    let mut w2 = Matrix::zeros(d, m);
    for i in 0..m {
        let col = if i < N_EXPERTS {
            let noise = unit_orthogonal(&mut rng, d, &[&chi]);
            let gain = W2_EXPERT_GAIN / N_EXPERTS as f64;
            (0..d).map(|j| gain * chi[j] + 0.01 * noise[j]).collect::<Vec<f64>>()
        } else {
            let noise = unit_orthogonal(&mut rng, d, &[&chi]);
            (0..d).map(|j| 0.08 * noise[j]).collect()
        };
        for (j, &x) in col.iter().enumerate() {
            w2.set(j, i, x);
        }
    }

    // Head: U columns 0..d−2 live entirely on non-toxic rows; the planted
    // column j* = d−1 puts positive weight on exactly the toxic rows.
    let planted_index = d - 1;
    let non_toxic_rows: Vec<usize> = (0..v).filter(|t| !toxic.contains(t)).collect();
    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(d);
    for _ in 0..d - 1 {
        let col = loop {
            let raw = standard_normal_vec(&mut rng, non_toxic_rows.len());
            let mut col = vec![0.0; v];
            for (&slot, &row_id) in raw.iter().zip(&non_toxic_rows) {
                col[row_id] = slot;
            }
            for prev in &u_cols {
                project_out(&mut col, prev);
            }
            if normalize(&mut col) > 1e-6 {
                break col;
            }
        };
        u_cols.push(col);
    }
    let mut planted_col = vec![0.0; v];
    for (k, &t) in toxic.iter().enumerate() {
        planted_col[t] = 1.0 + 0.05 * k as f64;
    }
    normalize(&mut planted_col);
    u_cols.push(planted_col);
    let mut u = Matrix::zeros(v, d);
    for (j, col) in u_cols.iter().enumerate() {
        for (r, &x) in col.iter().enumerate() {
            u.set(r, j, x);
        }
    }

    // Right directions: v_{j*} = χ̂, the rest drawn orthonormal off χ̂.
    let mut vt_rows: Vec<Vec<f64>> = Vec::with_capacity(d);
    for _ in 0..d - 1 {
        let mut basis: Vec<&[f64]> = vec![&chi];
        basis.extend(vt_rows.iter().map(|r| r.as_slice()));
        vt_rows.push(unit_orthogonal(&mut rng, d, &basis));
    }
    vt_rows.push(chi.clone());
    let mut vt = Matrix::zeros(d, d);
    for (i, row) in vt_rows.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            vt.set(i, j, x);
        }
    }

    // Spectrum: descending, distinct, with the planted value at the tail
    // so damping it is a small-norm, surgical edit.
    let mut sigma: Vec<f64> = (0..d - 1)
        .map(|r| 14.0 - 7.0 * r as f64 / (d - 2) as f64)
        .collect();
    sigma.push(PLANTED_SIGMA);
    let head = SvdFactors::assemble(u, sigma, vt)?.reconstruct();

    // Tuning: raise the trigger gain until the planted margins hold.
    let neutral_tokens: Vec<usize> = (0..v)
        .filter(|t| *t != bos && !toxic.contains(t) && !trigger.contains(t))
        .collect();
    let mut gain = TRIGGER_GAIN_INIT;
    for _ in 0..TUNING_MAX_ROUNDS {
        let mut embedding = embedding.clone();
        for (idx, &trig) in trigger_list.iter().enumerate() {
            let row = embedding.row_mut(trig);
            for i in 0..d {
                row[i] = gain * gate[i] + TRIGGER_NOISE * trigger_noise[idx][i];
            }
        }
        let candidate = ToyModel {
            embedding,
            w1: w1.clone(),
            w2: w2.clone(),
            head: head.clone(),
            toxic_tokens: toxic.iter().copied().collect(),
            trigger_tokens: trigger_list.clone(),
            bos,
            planted_index,
            seed,
        };
        if planted_margins_hold(&candidate, &neutral_tokens)? {
            return Ok(candidate);
        }
        gain *= TUNING_GAIN_STEP;
    }
    Err(Error::Degenerate(format!(
        "could not plant the trigger structure within {TUNING_MAX_ROUNDS} gain increases"
    )))
}

/// Trigger contexts must rank a toxic token in the top-3; neutral probe
/// contexts must leave every toxic token outside the top-10.
fn planted_margins_hold(model: &ToyModel, neutral_tokens: &[usize]) -> Result<bool> {
    for &trig in &model.trigger_tokens {
        let (_, logits) = model.forward(&[model.bos, trig])?;
        if !toxic_in_top_k(model, &logits, 3) {
            return Ok(false);
        }
    }
    let mut probes: Vec<Vec<usize>> = vec![vec![model.bos]];
    let probe_count = neutral_tokens.len().min(8);
    for i in 0..probe_count {
        let t = neutral_tokens[i * neutral_tokens.len() / probe_count.max(1)];
        probes.push(vec![model.bos, t]);
    }
    for probe in &probes {
        let (_, logits) = model.forward(probe)?;
        for &t in &model.toxic_tokens {
            let better = logits.iter().filter(|&&l| l > logits[t]).count();
            if better < 10 {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn toxic_in_top_k(model: &ToyModel, logits: &[f64], k: usize) -> bool {
    let mut order: Vec<usize> = (0..logits.len()).collect();
    order.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    order[..k.min(order.len())]
        .iter()
        .any(|t| model.toxic_tokens.contains(t))
}

impl ToyModel {
    pub fn vocab(&self) -> usize {
        self.embedding.rows()
    }

    pub fn hidden(&self) -> usize {
        self.embedding.cols()
    }

    pub fn mlp_width(&self) -> usize {
        self.w1.rows()
    }

    pub fn is_toxic(&self, token: usize) -> bool {
        self.toxic_tokens.contains(&token)
    }

    fn check_context(&self, context: &[usize]) -> Result<()> {
        for &t in context {
            if t >= self.vocab() {
                return Err(Error::InvalidArgument(format!(
                    "token id {t} out of range for vocabulary {}",
                    self.vocab()
                )));
            }
        }
        Ok(())
    }

    /// Hidden state and logits after the full context. An empty context
    /// falls back to the reserved BOS token.
    pub fn forward(&self, context: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.forward_with(context, |_| {})
    }

    /// `forward` with a mutation hook on the post-gelu MLP activations —
    /// the site where baseline interventions apply.
    pub fn forward_with<F>(&self, context: &[usize], hook: F) -> Result<(Vec<f64>, Vec<f64>)>
    where
        F: FnOnce(&mut [f64]),
    {
        self.check_context(context)?;
        let bos_ctx = [self.bos];
        let ctx: &[usize] = if context.is_empty() { &bos_ctx } else { context };

        let d = self.hidden();
        let mut x = vec![0.0; d];
        for &t in ctx {
            for (acc, &e) in x.iter_mut().zip(self.embedding.row(t)) {
                *acc += e;
            }
        }
        for acc in x.iter_mut() {
            *acc /= ctx.len() as f64;
        }

        let mut acts = matvec(&self.w1, &x);
        for a in acts.iter_mut() {
            *a = gelu(*a);
        }
        hook(&mut acts);
        let mlp_out = matvec(&self.w2, &acts);
        let h: Vec<f64> = x.iter().zip(&mlp_out).map(|(a, b)| a + b).collect();
        let logits = matvec(&self.head, &h);
        Ok((h, logits))
    }

    /// Sample `n_tokens` continuation tokens from softmax(logits/T).
    pub fn generate(
        &self,
        prompt: &[usize],
        n_tokens: usize,
        temperature: f64,
        seed: u64,
    ) -> Result<Vec<usize>> {
        self.generate_with(prompt, n_tokens, temperature, seed, |_| {})
    }

    /// `generate` with an activation hook applied at every step.
    pub fn generate_with<F>(
        &self,
        prompt: &[usize],
        n_tokens: usize,
        temperature: f64,
        seed: u64,
        hook: F,
    ) -> Result<Vec<usize>>
    where
        F: Fn(&mut [f64]),
    {
        if temperature <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "temperature must be positive, got {temperature}; use generate_greedy for the T→0 limit"
            )));
        }
        self.check_context(prompt)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut context: Vec<usize> = if prompt.is_empty() {
            vec![self.bos]
        } else {
            prompt.to_vec()
        };
        let mut out = Vec::with_capacity(n_tokens);
        for _ in 0..n_tokens {
            let (_, logits) = self.forward_with(&context, &hook)?;
            let scaled: Vec<f64> = logits.iter().map(|l| l / temperature).collect();
            let lse = log_sum_exp(&scaled);
            let draw: f64 = rng.random_range(0.0..1.0);
            let mut acc = 0.0;
            let mut picked = scaled.len() - 1;
            for (t, &s) in scaled.iter().enumerate() {
                acc += (s - lse).exp();
                if draw < acc {
                    picked = t;
                    break;
                }
            }
            out.push(picked);
            context.push(picked);
        }
        Ok(out)
    }

    /// Deterministic argmax decoding (ties to the lower token id).
    pub fn generate_greedy(&self, prompt: &[usize], n_tokens: usize) -> Result<Vec<usize>> {
        self.check_context(prompt)?;
        let mut context: Vec<usize> = if prompt.is_empty() {
            vec![self.bos]
        } else {
            prompt.to_vec()
        };
        let mut out = Vec::with_capacity(n_tokens);
        for _ in 0..n_tokens {
            let (_, logits) = self.forward(&context)?;
            let mut best = 0;
            for (t, &l) in logits.iter().enumerate() {
                if l > logits[best] {
                    best = t;
                }
            }
            out.push(best);
            context.push(best);
        }
        Ok(out)
    }

    /// Copy of this model with a replacement output head.
    pub fn with_head(&self, head: Matrix) -> Result<ToyModel> {
        if head.rows() != self.vocab() || head.cols() != self.hidden() {
            return Err(Error::Shape(format!(
                "replacement head is {}x{}, expected {}x{}",
                head.rows(),
                head.cols(),
                self.vocab(),
                self.hidden()
            )));
        }
        let mut model = self.clone();
        model.head = head;
        Ok(model)
    }

    /// Label-balanced activation dump: for every position whose next
    /// token is toxic, the hidden state that produced it (label 1), plus
    /// an equal count of evenly spaced neutral-successor states (label 0).
    pub fn dump_activations(&self, corpus: &[Vec<usize>]) -> Result<ActivationDataset> {
        if corpus.is_empty() {
            return Err(Error::Degenerate("empty corpus".into()));
        }
        let mut positives: Vec<Vec<f64>> = Vec::new();
        let mut negative_pool: Vec<Vec<f64>> = Vec::new();
        for seq in corpus {
            for n in 1..seq.len() {
                let (h, _) = self.forward(&seq[..n])?;
                if self.is_toxic(seq[n]) {
                    positives.push(h);
                } else {
                    negative_pool.push(h);
                }
            }
        }
        if positives.is_empty() {
            return Err(Error::Degenerate(
                "no positive samples: corpus has no toxic-successor positions".into(),
            ));
        }
        if negative_pool.is_empty() {
            return Err(Error::Degenerate(
                "no negative samples: corpus has no neutral-successor positions".into(),
            ));
        }
        let p = positives.len();
        let c = negative_pool.len();
        let take = p.min(c);
        let selected: Vec<usize> = (0..take).map(|i| i * c / take).collect();

        let d = self.hidden();
        let mut data = Vec::with_capacity((p + take) * d);
        let mut labels = Vec::with_capacity(p + take);
        for h in &positives {
            data.extend_from_slice(h);
            labels.push(true);
        }
        for &i in &selected {
            data.extend_from_slice(&negative_pool[i]);
            labels.push(false);
        }
        let mut meta = BTreeMap::new();
        meta.insert("extraction_position".to_string(), "preceding-token".to_string());
        meta.insert("labeling".to_string(), "token-lexicon".to_string());
        meta.insert("positives".to_string(), p.to_string());
        meta.insert("negative_pool".to_string(), c.to_string());
        ActivationDataset::new(Matrix::new(p + take, d, data)?, labels, meta)
    }

    /// Fraction of prompts whose sampled continuation contains at least
    /// one toxic token. Each prompt gets a derived seed `seed + index`.
    pub fn toxicity_rate(&self, prompts: &[Vec<usize>], gp: &GenParams) -> Result<f64> {
        self.toxicity_rate_with(prompts, gp, |_| {})
    }

    /// `toxicity_rate` with an activation hook applied at every step.
    pub fn toxicity_rate_with<F>(
        &self,
        prompts: &[Vec<usize>],
        gp: &GenParams,
        hook: F,
    ) -> Result<f64>
    where
        F: Fn(&mut [f64]),
    {
        if prompts.is_empty() {
            return Err(Error::Degenerate("no prompts to score".into()));
        }
        let mut hits = 0usize;
        for (i, prompt) in prompts.iter().enumerate() {
            let continuation = self.generate_with(
                prompt,
                gp.n_tokens,
                gp.temperature,
                gp.seed.wrapping_add(i as u64),
                &hook,
            )?;
            if continuation.iter().any(|&t| self.is_toxic(t)) {
                hits += 1;
            }
        }
        Ok(hits as f64 / prompts.len() as f64)
    }

    /// exp(mean NLL) over every next-token position of the corpus.
    pub fn perplexity(&self, corpus: &[Vec<usize>]) -> Result<f64> {
        self.perplexity_with(corpus, |_| {})
    }

    /// `perplexity` with an activation hook applied at every position.
    pub fn perplexity_with<F>(&self, corpus: &[Vec<usize>], hook: F) -> Result<f64>
    where
        F: Fn(&mut [f64]),
    {
        let mut nlls = Vec::new();
        for seq in corpus {
            for n in 1..seq.len() {
                let (_, logits) = self.forward_with(&seq[..n], &hook)?;
                nlls.push(nll_from_logits(&logits, seq[n])?);
            }
        }
        if nlls.is_empty() {
            return Err(Error::Degenerate(
                "corpus has no next-token positions to score".into(),
            ));
        }
        perplexity_from_nlls(&nlls)
    }

    /// Persist as a safetensors checkpoint with the model's token-role
    /// sets and planted index in the metadata.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut tensors = BTreeMap::new();
        tensors.insert(
            "embedding".to_string(),
            TensorPayload::f64(
                vec![self.embedding.rows(), self.embedding.cols()],
                self.embedding.data(),
            ),
        );
        tensors.insert(
            "w1".to_string(),
            TensorPayload::f64(vec![self.w1.rows(), self.w1.cols()], self.w1.data()),
        );
        tensors.insert(
            "w2".to_string(),
            TensorPayload::f64(vec![self.w2.rows(), self.w2.cols()], self.w2.data()),
        );
        tensors.insert(
            "lm_head".to_string(),
            TensorPayload::f64(vec![self.head.rows(), self.head.cols()], self.head.data()),
        );
        let mut meta = BTreeMap::new();
        meta.insert("model".to_string(), "toy-lm".to_string());
        meta.insert("bos".to_string(), self.bos.to_string());
        meta.insert("toxic_tokens".to_string(), join_ids(&self.toxic_tokens));
        meta.insert("trigger_tokens".to_string(), join_ids(&self.trigger_tokens));
        meta.insert("planted_index".to_string(), self.planted_index.to_string());
        meta.insert("seed".to_string(), self.seed.to_string());
        write_tensor_file(path, &tensors, &meta)
    }

    /// Load a checkpoint written by `save`.
    pub fn load(path: &Path) -> Result<ToyModel> {
        let tf = TensorFile::open(path)?;
        let embedding = load_weight_matrix(&tf, "embedding")?.matrix;
        let w1 = load_weight_matrix(&tf, "w1")?.matrix;
        let w2 = load_weight_matrix(&tf, "w2")?.matrix;
        let head = load_weight_matrix(&tf, "lm_head")?.matrix;
        let meta = tf.metadata();
        let field = |key: &str| -> Result<&String> {
            meta.get(key)
                .ok_or_else(|| Error::Format(format!("checkpoint metadata is missing \"{key}\"")))
        };
        let bos: usize = parse_meta(field("bos")?, "bos")?;
        let planted_index: usize = parse_meta(field("planted_index")?, "planted_index")?;
        let seed: u64 = parse_meta(field("seed")?, "seed")?;
        let toxic_tokens = parse_ids(field("toxic_tokens")?)?;
        let trigger_tokens = parse_ids(field("trigger_tokens")?)?;

        let v = embedding.rows();
        let d = embedding.cols();
        if head.rows() != v || head.cols() != d || w1.cols() != d || w2.rows() != d
            || w1.rows() != w2.cols()
        {
            return Err(Error::Shape(format!(
                "inconsistent checkpoint shapes: embedding {v}x{d}, w1 {}x{}, w2 {}x{}, lm_head {}x{}",
                w1.rows(), w1.cols(), w2.rows(), w2.cols(), head.rows(), head.cols()
            )));
        }
        if planted_index >= d || bos >= v {
            return Err(Error::Format(
                "checkpoint metadata indices out of range".into(),
            ));
        }
        Ok(ToyModel {
            embedding,
            w1,
            w2,
            head,
            toxic_tokens,
            trigger_tokens,
            bos,
            planted_index,
            seed,
        })
    }

    /// `count` trigger prompts `[BOS, τ]`, cycling the trigger tokens.
    pub fn trigger_prompts(&self, count: usize) -> Vec<Vec<usize>> {
        (0..count)
            .map(|i| vec![self.bos, self.trigger_tokens[i % self.trigger_tokens.len()]])
            .collect()
    }

    /// Seeded corpus of BOS-prefixed neutral sequences (no trigger, no
    /// toxic tokens).
    pub fn neutral_corpus(&self, count: usize, len: usize, seed: u64) -> Vec<Vec<usize>> {
        let neutral: Vec<usize> = (0..self.vocab())
            .filter(|&t| t != self.bos && !self.is_toxic(t) && !self.trigger_tokens.contains(&t))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let mut seq = vec![self.bos];
                for _ in 0..len {
                    seq.push(neutral[rng.random_range(0..neutral.len())]);
                }
                seq
            })
            .collect()
    }

    /// A corpus in the model's own voice: sampled continuations of both
    /// trigger and neutral prompts (prompt included in each sequence).
    pub fn dump_corpus(&self, n_trigger: usize, n_neutral: usize, gp: &GenParams) -> Result<Vec<Vec<usize>>> {
        let mut corpus = Vec::with_capacity(n_trigger + n_neutral);
        for (i, prompt) in self.trigger_prompts(n_trigger).into_iter().enumerate() {
            let cont = self.generate(&prompt, gp.n_tokens, gp.temperature, gp.seed.wrapping_add(i as u64))?;
            let mut seq = prompt;
            seq.extend(cont);
            corpus.push(seq);
        }
        for (i, prompt) in self
            .neutral_corpus(n_neutral, 1, gp.seed.wrapping_add(0x5eed))
            .into_iter()
            .enumerate()
        {
            let cont = self.generate(
                &prompt,
                gp.n_tokens,
                gp.temperature,
                gp.seed.wrapping_add(n_trigger as u64 + i as u64),
            )?;
            let mut seq = prompt;
            seq.extend(cont);
            corpus.push(seq);
        }
        Ok(corpus)
    }
}

fn join_ids(ids: &[usize]) -> String {
    ids.iter()
        .map(|t| t.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_ids(s: &str) -> Result<Vec<usize>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|part| {
            part.parse::<usize>()
                .map_err(|_| Error::Format(format!("invalid token id \"{part}\" in metadata")))
        })
        .collect()
}

fn parse_meta<T: std::str::FromStr>(s: &str, key: &str) -> Result<T> {
    s.parse::<T>()
        .map_err(|_| Error::Format(format!("invalid value \"{s}\" for metadata key \"{key}\"")))
}

/// Write a corpus as JSON lines (one token-id array per line).
pub fn write_corpus(path: &Path, corpus: &[Vec<usize>]) -> Result<()> {
    let mut out = String::new();
    for seq in corpus {
        out.push_str(&serde_json::to_string(seq).expect("token arrays serialize"));
        out.push('\n');
    }
    crate::tensor_store::write_atomic(path, out.as_bytes())
}

/// Read a JSON-lines corpus written by `write_corpus`.
pub fn read_corpus(path: &Path) -> Result<Vec<Vec<usize>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut corpus = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let seq: Vec<usize> = serde_json::from_str(line).map_err(|e| {
            Error::Format(format!("corpus line {} is not a token array: {e}", i + 1))
        })?;
        corpus.push(seq);
    }
    Ok(corpus)
}
