//! Expert identification: which neurons (and which whole layers) carry a
//! concept such as toxicity.
//!
//! Neuron experts are found by scoring each neuron's sentence-pooled
//! activation against the sample labels with average precision or AUROC
//! and flagging neurons above a threshold. Layer experts cluster the
//! layer's hidden states with k-means (k = 2) and score the hard cluster
//! memberships against the labels; since cluster ids are arbitrary, the
//! reported expertise is max(AUROC, 1 − AUROC) and therefore sits in
//! [0.5, 1] by construction — comparisons against unoriented scores
//! inherit that bias.

// Lloyd's iterations index points, assignments, and centers by one loop
// variable; iterator forms would obscure the lockstep access.
#![allow(clippy::needless_range_loop)]

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::metrics::{auroc, average_precision};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Sentence-pooled activations: one row per sample, one column per
/// neuron, plus binary labels. Pooling over token positions is max.
#[derive(Clone, Debug)]
pub struct NeuronActivationTable {
    values: Matrix,
    labels: Vec<bool>,
    pooling: &'static str,
}

impl NeuronActivationTable {
    pub fn new(values: Matrix, labels: Vec<bool>) -> Result<NeuronActivationTable> {
        if labels.len() != values.rows() {
            return Err(Error::Shape(format!(
                "{} activation rows but {} labels",
                values.rows(),
                labels.len()
            )));
        }
        if values.rows() == 0 || values.cols() == 0 {
            return Err(Error::Degenerate("empty activation table".into()));
        }
        if !values.is_finite() {
            return Err(Error::NonFinite("activations contain non-finite values".into()));
        }
        Ok(NeuronActivationTable {
            values,
            labels,
            pooling: "pre-pooled",
        })
    }

    /// Pool per-token activations (one matrix per sentence, rows = token
    /// positions) down to a single max-pooled row per sentence.
    pub fn from_token_activations(
        sentences: &[Matrix],
        labels: Vec<bool>,
    ) -> Result<NeuronActivationTable> {
        if sentences.is_empty() {
            return Err(Error::Degenerate("no sentences to pool".into()));
        }
        let neurons = sentences[0].cols();
        let mut pooled = Matrix::zeros(sentences.len(), neurons);
        for (j, sent) in sentences.iter().enumerate() {
            if sent.cols() != neurons {
                return Err(Error::Shape(format!(
                    "sentence {j} has {} neurons, expected {neurons}",
                    sent.cols()
                )));
            }
            if sent.rows() == 0 {
                return Err(Error::Degenerate(format!("sentence {j} has no tokens")));
            }
            let row = pooled.row_mut(j);
            for (m, slot) in row.iter_mut().enumerate() {
                let mut best = f64::NEG_INFINITY;
                for t in 0..sent.rows() {
                    best = best.max(sent.get(t, m));
                }
                *slot = best;
            }
        }
        let mut table = NeuronActivationTable::new(pooled, labels)?;
        table.pooling = "max";
        Ok(table)
    }

    pub fn samples(&self) -> usize {
        self.values.rows()
    }

    pub fn neurons(&self) -> usize {
        self.values.cols()
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn pooling(&self) -> &'static str {
        self.pooling
    }

    pub fn neuron_column(&self, m: usize) -> Vec<f64> {
        self.values.column(m)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreKind {
    AveragePrecision,
    Auroc,
}

impl ScoreKind {
    pub fn name(self) -> &'static str {
        match self {
            ScoreKind::AveragePrecision => "ap",
            ScoreKind::Auroc => "auroc",
        }
    }
}

/// Per-neuron scores of one kind, with the experts flagged at a threshold.
#[derive(Clone, Debug, serde::Serialize)]
pub struct NeuronScores {
    pub kind: ScoreKind,
    pub threshold: f64,
    /// Score of neuron m at index m.
    pub values: Vec<f64>,
    /// True where values[m] > threshold.
    pub expert: Vec<bool>,
}

impl NeuronScores {
    pub fn expert_indices(&self) -> Vec<usize> {
        (0..self.expert.len()).filter(|&m| self.expert[m]).collect()
    }

    pub fn expert_count(&self) -> usize {
        self.expert.iter().filter(|&&e| e).count()
    }
}

fn score_neurons<F>(
    tbl: &NeuronActivationTable,
    threshold: f64,
    kind: ScoreKind,
    score: F,
) -> Result<NeuronScores>
where
    F: Fn(&[f64], &[bool]) -> Result<f64>,
{
    let mut values = Vec::with_capacity(tbl.neurons());
    for m in 0..tbl.neurons() {
        values.push(score(&tbl.neuron_column(m), tbl.labels())?);
    }
    let expert = values.iter().map(|&v| v > threshold).collect();
    Ok(NeuronScores {
        kind,
        threshold,
        values,
        expert,
    })
}

/// Score every neuron by average precision; flag those above `threshold`.
pub fn neuron_experts_ap(tbl: &NeuronActivationTable, threshold: f64) -> Result<NeuronScores> {
    score_neurons(tbl, threshold, ScoreKind::AveragePrecision, average_precision)
}

/// Score every neuron by AUROC; flag those above `threshold`.
pub fn neuron_experts_auroc(tbl: &NeuronActivationTable, threshold: f64) -> Result<NeuronScores> {
    score_neurons(tbl, threshold, ScoreKind::Auroc, auroc)
}

/// The threshold grid used for the neuron-expert prevalence survey.
pub const DEFAULT_SURVEY_THRESHOLDS: [f64; 4] = [0.50, 0.51, 0.52, 0.55];

/// For each threshold t, the percentage of neurons whose score strictly
/// exceeds t: `100·|{m: score_m > t}| / M`.
pub fn auroc_threshold_survey(scores: &NeuronScores, thresholds: &[f64]) -> Result<Vec<f64>> {
    if scores.values.is_empty() {
        return Err(Error::Degenerate("survey over zero neurons".into()));
    }
    let m = scores.values.len() as f64;
    Ok(thresholds
        .iter()
        .map(|&t| 100.0 * scores.values.iter().filter(|&&v| v > t).count() as f64 / m)
        .collect())
}

const KMEANS_RESTARTS: usize = 10;
const KMEANS_MAX_ITERS: usize = 100;
const SILHOUETTE_SAMPLE_CAP: usize = 2000;
const SILHOUETTE_SAMPLE_SEED: u64 = 0x51_1f;

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding for k = 2: first center uniform, second sampled with
/// probability proportional to squared distance from the first.
fn kmeans_pp_centers(points: &Matrix, rng: &mut ChaCha8Rng) -> [Vec<f64>; 2] {
    let n = points.rows();
    let first = rng.random_range(0..n);
    let c0 = points.row(first).to_vec();
    let d2: Vec<f64> = (0..n).map(|i| dist2(points.row(i), &c0)).collect();
    let total: f64 = d2.iter().sum();
    let second = if total > 0.0 {
        let mut draw = rng.random_range(0.0..total);
        let mut pick = n - 1;
        for (i, &d) in d2.iter().enumerate() {
            if draw < d {
                pick = i;
                break;
            }
            draw -= d;
        }
        pick
    } else {
        (first + 1) % n
    };
    [c0, points.row(second).to_vec()]
}

/// Lloyd's iterations from fixed initial centers. Ties in assignment go
/// to the lower cluster index; an emptied cluster is refilled with the
/// point farthest from its own centroid (first index on ties).
fn run_lloyd(points: &Matrix, mut centers: [Vec<f64>; 2]) -> (Vec<Vec<f64>>, Vec<usize>, f64) {
    let n = points.rows();
    let d = points.cols();
    let mut assignment = vec![0usize; n];
    for _ in 0..KMEANS_MAX_ITERS {
        let mut changed = false;
        for i in 0..n {
            let p = points.row(i);
            let pick = if dist2(p, &centers[1]) < dist2(p, &centers[0]) {
                1
            } else {
                0
            };
            if assignment[i] != pick {
                assignment[i] = pick;
                changed = true;
            }
        }
        for c in 0..2 {
            if !assignment.contains(&c) {
                let mut worst = 0;
                let mut worst_d = f64::NEG_INFINITY;
                for i in 0..n {
                    let dd = dist2(points.row(i), &centers[assignment[i]]);
                    if dd > worst_d {
                        worst_d = dd;
                        worst = i;
                    }
                }
                assignment[worst] = c;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; d]; 2];
        let mut counts = [0usize; 2];
        for i in 0..n {
            counts[assignment[i]] += 1;
            for (s, &x) in sums[assignment[i]].iter_mut().zip(points.row(i)) {
                *s += x;
            }
        }
        for c in 0..2 {
            for s in sums[c].iter_mut() {
                *s /= counts[c] as f64;
            }
            centers[c] = std::mem::take(&mut sums[c]);
        }
        if !changed {
            break;
        }
    }
    let inertia = (0..n)
        .map(|i| dist2(points.row(i), &centers[assignment[i]]))
        .sum();
    (centers.to_vec(), assignment, inertia)
}

/// Best of `KMEANS_RESTARTS` seeded k-means++ runs; ties in inertia keep
/// the earlier restart.
fn kmeans2(points: &Matrix, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>, f64) {
    let mut best: Option<(Vec<Vec<f64>>, Vec<usize>, f64)> = None;
    for r in 0..KMEANS_RESTARTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64));
        let centers = kmeans_pp_centers(points, &mut rng);
        let run = run_lloyd(points, centers);
        let better = match &best {
            None => true,
            Some((_, _, inertia)) => run.2 < *inertia,
        };
        if better {
            best = Some(run);
        }
    }
    best.expect("at least one restart ran")
}

/// How expert a whole layer is at separating the two classes.
#[derive(Clone, Debug, serde::Serialize)]
pub struct LayerExpertReport {
    /// Orientation-corrected AUROC of hard cluster memberships against
    /// the labels; in [0.5, 1] by construction.
    pub expertise: f64,
    pub assignments: Vec<usize>,
    pub silhouette: f64,
    /// True when the geometry was degenerate (all points identical) and
    /// the expertise defaulted to 0.5.
    pub degenerate: bool,
}

/// Cluster a layer's hidden states with k-means (k = 2) and score the
/// cluster memberships against the labels.
pub fn layer_expert(points: &Matrix, labels: &[bool], seed: u64) -> Result<LayerExpertReport> {
    if points.rows() < 2 {
        return Err(Error::Degenerate(format!(
            "layer clustering needs at least 2 samples, got {}",
            points.rows()
        )));
    }
    if labels.len() != points.rows() {
        return Err(Error::Shape(format!(
            "{} points but {} labels",
            points.rows(),
            labels.len()
        )));
    }
    if !points.is_finite() {
        return Err(Error::NonFinite("layer points contain non-finite values".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::Degenerate(
            "layer clustering needs both classes present".into(),
        ));
    }

    let first = points.row(0);
    if (1..points.rows()).all(|i| points.row(i) == first) {
        return Ok(LayerExpertReport {
            expertise: 0.5,
            assignments: vec![0; points.rows()],
            silhouette: 0.0,
            degenerate: true,
        });
    }

    let (_, assignments, _) = kmeans2(points, seed);
    let membership: Vec<f64> = assignments.iter().map(|&a| a as f64).collect();
    let raw = auroc(&membership, labels)?;
    let expertise = raw.max(1.0 - raw);
    let silhouette = silhouette(points, &assignments)?;
    Ok(LayerExpertReport {
        expertise,
        assignments,
        silhouette,
        degenerate: false,
    })
}

/// Mean silhouette score `(b − a)/max(a, b)` under Euclidean distance.
/// Singleton clusters contribute 0; datasets larger than 2000 points are
/// subsampled with a fixed seed (keeping every cluster represented).
pub fn silhouette(points: &Matrix, assignment: &[usize]) -> Result<f64> {
    if assignment.len() != points.rows() {
        return Err(Error::Shape(format!(
            "{} points but {} cluster assignments",
            points.rows(),
            assignment.len()
        )));
    }
    let mut cluster_ids: Vec<usize> = assignment.to_vec();
    cluster_ids.sort_unstable();
    cluster_ids.dedup();
    if cluster_ids.len() < 2 {
        return Err(Error::Degenerate(
            "silhouette needs at least two non-empty clusters".into(),
        ));
    }

    let n = points.rows();
    let sample: Vec<usize> = if n <= SILHOUETTE_SAMPLE_CAP {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(SILHOUETTE_SAMPLE_SEED);
        let mut picked: Vec<usize> =
            rand::seq::index::sample(&mut rng, n, SILHOUETTE_SAMPLE_CAP).into_vec();
        picked.sort_unstable();
        for &c in &cluster_ids {
            if !picked.iter().any(|&i| assignment[i] == c) {
                let first_of_c = (0..n).find(|&i| assignment[i] == c).unwrap();
                picked.push(first_of_c);
            }
        }
        picked.sort_unstable();
        picked
    };

    let mut total = 0.0;
    for &i in &sample {
        let mut same_sum = 0.0;
        let mut same_count = 0usize;
        // Mean distance to each other cluster, tracked per cluster id.
        let mut other: Vec<(usize, f64, usize)> = cluster_ids
            .iter()
            .filter(|&&c| c != assignment[i])
            .map(|&c| (c, 0.0, 0usize))
            .collect();
        for &j in &sample {
            if i == j {
                continue;
            }
            let dist = dist2(points.row(i), points.row(j)).sqrt();
            if assignment[j] == assignment[i] {
                same_sum += dist;
                same_count += 1;
            } else if let Some(slot) = other.iter_mut().find(|(c, _, _)| *c == assignment[j]) {
                slot.1 += dist;
                slot.2 += 1;
            }
        }
        if same_count == 0 {
            continue; // singleton: contributes 0
        }
        let a = same_sum / same_count as f64;
        let b = other
            .iter()
            .filter(|(_, _, count)| *count > 0)
            .map(|(_, sum, count)| sum / *count as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / sample.len() as f64)
}

/// Map per-layer scores to tie-averaged ranks scaled into [0, 1]:
/// the lowest score maps to 0, the highest to 1, ties share the mean of
/// their rank range.
pub fn normalize_layer_ranks(per_layer_scores: &[f64]) -> Result<Vec<f64>> {
    let l = per_layer_scores.len();
    if l < 2 {
        return Err(Error::InvalidArgument(format!(
            "rank normalization needs at least 2 layers, got {l}"
        )));
    }
    if per_layer_scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("layer scores contain non-finite values".into()));
    }
    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|&a, &b| per_layer_scores[a].total_cmp(&per_layer_scores[b]).then(a.cmp(&b)));
    let mut out = vec![0.0; l];
    let mut i = 0;
    while i < l {
        let mut j = i;
        while j + 1 < l && per_layer_scores[order[j + 1]] == per_layer_scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0;
        for &idx in &order[i..=j] {
            out[idx] = midrank / (l - 1) as f64;
        }
        i = j + 1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: Vec<Vec<f64>>, labels: Vec<bool>) -> NeuronActivationTable {
        NeuronActivationTable::new(Matrix::from_rows(&rows).unwrap(), labels).unwrap()
    }

    #[test]
    fn perfectly_separating_neuron_has_unit_ap() {
        let tbl = table(
            vec![vec![1.0, 0.3], vec![1.0, 0.1], vec![0.0, 0.2], vec![0.0, 0.4]],
            vec![true, true, false, false],
        );
        let scores = neuron_experts_ap(&tbl, 0.9).unwrap();
        assert_eq!(scores.values[0], 1.0);
        assert!(scores.expert[0]);
        assert_eq!(scores.expert_indices(), vec![0]);
    }

    #[test]
    fn constant_neuron_ap_equals_prevalence() {
        let tbl = table(
            vec![vec![2.0], vec![2.0], vec![2.0], vec![2.0], vec![2.0]],
            vec![true, false, true, false, false],
        );
        let scores = neuron_experts_ap(&tbl, 0.5).unwrap();
        assert!((scores.values[0] - 0.4).abs() < 1e-15);
        assert!(!scores.expert[0]);
    }

    #[test]
    fn four_sample_ap_case() {
        let tbl = table(
            vec![vec![0.9], vec![0.7], vec![0.5], vec![0.3]],
            vec![true, false, true, false],
        );
        let scores = neuron_experts_ap(&tbl, 0.8).unwrap();
        assert!((scores.values[0] - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        assert!(scores.expert[0]);
    }

    #[test]
    fn auroc_scan_flags_separating_neurons_only() {
        let tbl = table(
            vec![
                vec![0.9, 0.5],
                vec![0.8, 0.5],
                vec![0.1, 0.5],
                vec![0.2, 0.5],
            ],
            vec![true, true, false, false],
        );
        let scores = neuron_experts_auroc(&tbl, 0.55).unwrap();
        assert_eq!(scores.values, vec![1.0, 0.5]);
        assert_eq!(scores.expert, vec![true, false]);
        assert_eq!(scores.kind.name(), "auroc");
    }

    #[test]
    fn single_class_table_is_rejected() {
        let tbl = table(vec![vec![1.0], vec![2.0]], vec![true, true]);
        assert!(matches!(
            neuron_experts_auroc(&tbl, 0.5),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn max_pooling_keeps_the_peak_token() {
        let s1 = Matrix::from_rows(&[vec![0.1, -2.0], vec![0.9, -1.0], vec![0.2, -3.0]]).unwrap();
        let s2 = Matrix::from_rows(&[vec![-0.5, 4.0]]).unwrap();
        let tbl =
            NeuronActivationTable::from_token_activations(&[s1, s2], vec![true, false]).unwrap();
        assert_eq!(tbl.pooling(), "max");
        assert_eq!(tbl.neuron_column(0), vec![0.9, -0.5]);
        assert_eq!(tbl.neuron_column(1), vec![-1.0, 4.0]);
    }

    #[test]
    fn survey_counts_strict_exceedance() {
        let scores = NeuronScores {
            kind: ScoreKind::Auroc,
            threshold: 0.5,
            values: vec![0.5, 0.5, 0.5, 0.5],
            expert: vec![false; 4],
        };
        let out = auroc_threshold_survey(&scores, &DEFAULT_SURVEY_THRESHOLDS).unwrap();
        assert_eq!(out, vec![0.0, 0.0, 0.0, 0.0]);

        let scores = NeuronScores {
            kind: ScoreKind::Auroc,
            threshold: 0.5,
            values: vec![0.49, 0.51, 0.53, 0.60],
            expert: vec![false; 4],
        };
        let out = auroc_threshold_survey(&scores, &DEFAULT_SURVEY_THRESHOLDS).unwrap();
        assert_eq!(out, vec![75.0, 50.0, 50.0, 25.0]);
    }

    #[test]
    fn null_survey_rarely_exceeds_the_top_threshold() {
        // Labels independent of activations: AUROC concentrates near 0.5,
        // so almost no neuron clears 0.55 at n = 2000.
        let mut rng = ChaCha8Rng::seed_from_u64(404);
        let n = 2000;
        let m = 1000;
        let mut data = Vec::with_capacity(n * m);
        for _ in 0..n * m {
            data.push(rng.random_range(-1.0..1.0));
        }
        let labels: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        let tbl = NeuronActivationTable::new(Matrix::new(n, m, data).unwrap(), labels).unwrap();
        let scores = neuron_experts_auroc(&tbl, 0.55).unwrap();
        let survey = auroc_threshold_survey(&scores, &[0.55]).unwrap();
        assert!(survey[0] < 5.0, "null survey gave {}%", survey[0]);
    }

    fn two_blobs(n_per: usize, sep: f64, seed: u64) -> (Matrix, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..2 * n_per {
            let toxic = i % 2 == 0;
            let center = if toxic { sep } else { 0.0 };
            rows.push(vec![
                center + rng.random_range(-0.05..0.05),
                center + rng.random_range(-0.05..0.05),
            ]);
            labels.push(toxic);
        }
        (Matrix::from_rows(&rows).unwrap(), labels)
    }

    #[test]
    fn separable_blobs_give_unit_expertise() {
        let (points, labels) = two_blobs(20, 10.0, 7);
        let report = layer_expert(&points, &labels, 7).unwrap();
        assert_eq!(report.expertise, 1.0);
        assert!(report.silhouette > 0.95);
        assert!(!report.degenerate);
    }

    #[test]
    fn shuffled_labels_give_chance_expertise() {
        let (points, _) = two_blobs(200, 6.0, 11);
        // Labels drawn independently of the geometry.
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let labels: Vec<bool> = (0..400).map(|_| rng.random_range(0.0..1.0) < 0.5).collect();
        let report = layer_expert(&points, &labels, 13).unwrap();
        assert!(
            (report.expertise - 0.5).abs() <= 0.05,
            "null expertise {}",
            report.expertise
        );
    }

    #[test]
    fn identical_points_degenerate_to_half() {
        let points = Matrix::from_rows(&vec![vec![1.0, 2.0]; 6]).unwrap();
        let labels = vec![true, false, true, false, true, false];
        let report = layer_expert(&points, &labels, 3).unwrap();
        assert_eq!(report.expertise, 0.5);
        assert!(report.degenerate);
        assert_eq!(report.silhouette, 0.0);
    }

    #[test]
    fn lloyd_matches_independent_oracle_from_same_init() {
        let (points, _) = two_blobs(30, 4.0, 21);
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let init = kmeans_pp_centers(&points, &mut rng);
        let (ours, _, _) = run_lloyd(&points, init.clone());

        // Naive reference Lloyd's loop, written independently.
        let n = points.rows();
        let mut centers = init;
        let mut assign = vec![0usize; n];
        for _ in 0..200 {
            for i in 0..n {
                let d0 = dist2(points.row(i), &centers[0]);
                let d1 = dist2(points.row(i), &centers[1]);
                assign[i] = usize::from(d1 < d0);
            }
            let mut next = [vec![0.0; 2], vec![0.0; 2]];
            let mut counts = [0usize; 2];
            for i in 0..n {
                counts[assign[i]] += 1;
                for c in 0..2 {
                    next[assign[i]][c] += points.get(i, c);
                }
            }
            if counts[0] == 0 || counts[1] == 0 {
                break; // blobs are well-separated; never happens here
            }
            for k in 0..2 {
                for x in next[k].iter_mut() {
                    *x /= counts[k] as f64;
                }
            }
            if next[0] == centers[0] && next[1] == centers[1] {
                break;
            }
            centers = next;
        }
        for k in 0..2 {
            for c in 0..2 {
                assert!((ours[k][c] - centers[k][c]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn distributed_signal_favors_the_layer_view() {
        // Class signal spread across all coordinates with strong
        // per-coordinate noise: any single neuron separates weakly, the
        // joint geometry separates well.
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let d = 8;
        let n = 200;
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let toxic = i % 2 == 0;
            let shift = if toxic { 0.8 } else { 0.0 };
            rows.push(
                (0..d)
                    .map(|_| shift + rng.random_range(-1.5..1.5))
                    .collect::<Vec<f64>>(),
            );
            labels.push(toxic);
        }
        let points = Matrix::from_rows(&rows).unwrap();
        let tbl = NeuronActivationTable::new(points.clone(), labels.clone()).unwrap();
        let neuron = neuron_experts_auroc(&tbl, 0.5).unwrap();
        let best_neuron = neuron.values.iter().cloned().fold(0.0, f64::max);
        let layer = layer_expert(&points, &labels, 32).unwrap();
        assert!(
            layer.expertise > best_neuron,
            "layer {} vs best neuron {best_neuron}",
            layer.expertise
        );
    }

    #[test]
    fn silhouette_hand_case_with_two_pairs() {
        let points = Matrix::from_rows(&[
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![10.0, 0.0],
            vec![10.0, 1.0],
        ])
        .unwrap();
        let s = silhouette(&points, &[0, 0, 1, 1]).unwrap();
        let b = (10.0 + 101.0f64.sqrt()) / 2.0;
        let expect = (b - 1.0) / b;
        assert!((s - expect).abs() < 1e-12);
    }

    #[test]
    fn silhouette_degenerate_conventions() {
        let points = Matrix::from_rows(&[vec![0.0, 0.0], vec![5.0, 5.0]]).unwrap();
        assert_eq!(silhouette(&points, &[0, 1]).unwrap(), 0.0);
        assert!(silhouette(&points, &[0, 0]).is_err());
    }

    #[test]
    fn silhouette_subsamples_deterministically() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let n = 2500;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let c = if i % 2 == 0 { 0.0 } else { 8.0 };
                vec![c + rng.random_range(-0.5..0.5), c + rng.random_range(-0.5..0.5)]
            })
            .collect();
        let points = Matrix::from_rows(&rows).unwrap();
        let assignment: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let a = silhouette(&points, &assignment).unwrap();
        let b = silhouette(&points, &assignment).unwrap();
        assert_eq!(a, b);
        assert!(a > 0.8, "well-separated clusters scored {a}");
    }

    #[test]
    fn rank_normalization_cases() {
        let monotone = normalize_layer_ranks(&[0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
        assert_eq!(monotone, vec![0.0, 0.25, 0.5, 0.75, 1.0]);

        let flat = normalize_layer_ranks(&[0.7, 0.7, 0.7]).unwrap();
        assert_eq!(flat, vec![0.5, 0.5, 0.5]);

        assert!(normalize_layer_ranks(&[1.0]).is_err());
    }

    #[test]
    fn rank_normalization_matches_argsort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let scores: Vec<f64> = (0..12).map(|_| rng.random_range(0.0..1.0)).collect();
        let got = normalize_layer_ranks(&scores).unwrap();
        // Distinct scores: rank = count of strictly smaller scores.
        for (i, &s) in scores.iter().enumerate() {
            let rank = scores.iter().filter(|&&o| o < s).count() as f64;
            assert!((got[i] - rank / 11.0).abs() < 1e-15);
        }
    }
}
