//! Cross-module invariants checked over randomized inputs: analytic
//! identities, symmetries, and byte-level determinism that should hold
//! for arbitrary data, not just fixtures.

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use eigenshift::expert_id::layer_expert;
use eigenshift::linalg::Matrix;
use eigenshift::metrics::{auroc, tph};
use eigenshift::shift::{damp_spectrum, delta_scores, percentile_to_k, select_targets};
use eigenshift::tensor_store::{write_tensor_file, ActivationDataset, TensorFile, TensorPayload};
use eigenshift::{eigenshift as run_eigenshift, svd, Plan, TargetRule, Variant};

fn gaussian_matrix(seed: u64, rows: usize, cols: usize) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| {
            let x: f64 = StandardNormal.sample(&mut rng);
            x
        })
        .collect();
    Matrix::new(rows, cols, data).unwrap()
}

fn gaussian_dataset(seed: u64, n: usize, d: usize) -> ActivationDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..n * d)
        .map(|_| {
            let x: f64 = StandardNormal.sample(&mut rng);
            x
        })
        .collect();
    let mut labels: Vec<bool> = (0..n).map(|_| rng.random_range(0..2) == 1).collect();
    labels[0] = true;
    labels[1] = false;
    ActivationDataset::new(Matrix::new(n, d, data).unwrap(), labels, BTreeMap::new()).unwrap()
}

proptest! {
    #[test]
    fn tph_is_the_harmonic_mean_of_reduction_and_fluency(
        t in 1e-4f64..=1.0,
        p in -0.999f64..1e4,
    ) {
        let f = 1.0 / (1.0 + p.abs());
        let expect = 2.0 * t * f / (t + f);
        prop_assert!((tph(t, p) - expect).abs() <= 1e-15);
    }

    #[test]
    fn tph_vanishes_without_toxicity_reduction(t in -10.0f64..=0.0, p in -5.0f64..100.0) {
        prop_assert_eq!(tph(t, p), 0.0);
    }

    #[test]
    fn tph_stays_between_its_components(t in 1e-4f64..=1.0, p in -0.999f64..1e4) {
        let f = 1.0 / (1.0 + p.abs());
        let v = tph(t, p);
        let (lo, hi) = (t.min(f), t.max(f));
        prop_assert!(v >= lo - 1e-15 && v <= hi + 1e-15);
        // A collapsed component caps the mean at twice that component.
        prop_assert!(v <= 2.0 * lo + 1e-15);
    }

    #[test]
    fn auroc_respects_order_preserving_rescaling(
        raw in prop::collection::vec(0i32..6, 4..80),
        flips in prop::collection::vec(any::<bool>(), 4..80),
    ) {
        let n = raw.len().min(flips.len());
        let mut labels = flips[..n].to_vec();
        labels[0] = true;
        labels[1] = false;
        let scores: Vec<f64> = raw[..n].iter().map(|&x| x as f64).collect();
        // Scaling by a power of two is exact and preserves order and ties.
        let scaled: Vec<f64> = scores.iter().map(|s| 16.0 * s).collect();
        let a = auroc(&scores, &labels).unwrap();
        let b = auroc(&scaled, &labels).unwrap();
        prop_assert_eq!(a.to_bits(), b.to_bits());

        // Negating the scores complements the ranking quality.
        let negated: Vec<f64> = scores.iter().map(|s| -s).collect();
        let c = auroc(&negated, &labels).unwrap();
        prop_assert!((a + c - 1.0).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn container_survives_arbitrary_metadata_and_payload_bits(
        bits in prop::collection::vec(any::<u64>(), 1..48),
        meta_val in "\\PC{0,24}",
    ) {
        let values: Vec<f64> = bits.iter().map(|&b| f64::from_bits(b)).collect();
        let mut tensors = BTreeMap::new();
        tensors.insert(
            "payload".to_string(),
            TensorPayload::f64(vec![values.len()], &values),
        );
        let mut meta = BTreeMap::new();
        meta.insert("note".to_string(), meta_val.clone());
        let dir = tempfile::tempdir().unwrap();
        let first = dir.path().join("a.safetensors");
        let second = dir.path().join("b.safetensors");
        write_tensor_file(&first, &tensors, &meta).unwrap();

        let tf = TensorFile::open(&first).unwrap();
        prop_assert_eq!(tf.metadata().get("note").map(String::as_str), Some(meta_val.as_str()));
        let (shape, read) = tf.read_f64("payload").unwrap();
        prop_assert_eq!(shape, vec![values.len()]);
        let same_bits = read
            .iter()
            .zip(&values)
            .all(|(a, b)| a.to_bits() == b.to_bits());
        prop_assert!(same_bits, "payload bits changed in transit");

        let mut reread = BTreeMap::new();
        for name in tf.names() {
            let entry = tf.entry(name).unwrap();
            reread.insert(
                name.to_string(),
                TensorPayload::raw(entry.dtype, entry.shape.clone(), tf.read_raw(name).unwrap())
                    .unwrap(),
            );
        }
        write_tensor_file(&second, &reread, tf.metadata()).unwrap();
        prop_assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap());
    }
}

#[test]
fn tph_is_total_on_non_finite_input() {
    assert_eq!(tph(0.9, f64::INFINITY), 0.0);
    assert_eq!(tph(0.9, f64::NEG_INFINITY), 0.0);
    assert_eq!(tph(f64::NAN, 1.0), 0.0);
    assert_eq!(tph(0.9, f64::NAN), 0.0);
}

#[test]
fn swapping_class_labels_negates_every_delta_score() {
    for seed in 0..8u64 {
        let w = gaussian_matrix(seed, 40, 12);
        let factors = svd(&w).unwrap();
        let ds = gaussian_dataset(seed ^ 0xFACE, 60, 12);
        let flipped = ActivationDataset::new(
            ds.hidden.clone(),
            ds.labels.iter().map(|l| !l).collect(),
            BTreeMap::new(),
        )
        .unwrap();
        for variant in [Variant::UnitV, Variant::SigmaScaled] {
            let a = delta_scores(&factors, &ds, variant).unwrap();
            let b = delta_scores(&factors, &flipped, variant).unwrap();
            assert!(
                a.delta.iter().zip(&b.delta).all(|(x, y)| *x == -*y),
                "seed {seed}: label swap did not negate deltas exactly"
            );
        }
    }
}

#[test]
fn shifted_weights_differ_by_a_matrix_of_rank_at_most_k() {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37));
        let cols = rng.random_range(2..=12);
        let rows = rng.random_range(cols.max(8)..=48);
        let w = gaussian_matrix(seed, rows, cols);
        let factors = svd(&w).unwrap();
        let n_targets = rng.random_range(1..cols);
        let targets = rand::seq::index::sample(&mut rng, cols, n_targets).into_vec();
        let damped = damp_spectrum(&factors, &targets, 0.25).unwrap();
        let w_prime = damped.reconstruct();
        let mut diff = Vec::with_capacity(rows * cols);
        for (a, b) in w_prime.data().iter().zip(w.data()) {
            diff.push(a - b);
        }
        let diff = Matrix::new(rows, cols, diff).unwrap();
        let spectrum = svd(&diff).unwrap();
        let sigma = spectrum.sigma();
        let top = sigma[0].max(1e-30);
        for &s in &sigma[n_targets..] {
            assert!(
                s <= 1e-8 * top,
                "seed {seed}: rank of the update exceeds {n_targets} (sigma {s:.3e} vs top {top:.3e})"
            );
        }
    }
}

#[test]
fn damping_rescales_exactly_the_targeted_directions() {
    let w = gaussian_matrix(5, 30, 10);
    let factors = svd(&w).unwrap();
    let targets = [0usize, 3, 7];
    let alpha = 0.37;
    let damped = damp_spectrum(&factors, &targets, alpha).unwrap();
    for i in 0..10 {
        let expect = if targets.contains(&i) {
            alpha * factors.sigma()[i]
        } else {
            factors.sigma()[i]
        };
        assert_eq!(damped.sigma()[i].to_bits(), expect.to_bits());
    }
}

#[test]
fn full_shift_is_bitwise_deterministic() {
    let w = gaussian_matrix(11, 48, 16);
    let ds = gaussian_dataset(12, 80, 16);
    let plan = Plan::new(0.2, TargetRule::TopK(3), Variant::SigmaScaled).unwrap();
    let a = run_eigenshift(&w, &ds, &plan).unwrap();
    let b = run_eigenshift(&w, &ds, &plan).unwrap();
    assert_eq!(a.targets, b.targets);
    let bits = |m: &Matrix| m.data().iter().map(|x| x.to_bits()).collect::<Vec<u64>>();
    assert_eq!(bits(&a.w_prime), bits(&b.w_prime));
    assert_eq!(a.frobenius_delta.to_bits(), b.frobenius_delta.to_bits());
}

#[test]
fn percentile_rule_matches_the_equivalent_top_k() {
    let w = gaussian_matrix(21, 64, 16);
    let factors = svd(&w).unwrap();
    let ds = gaussian_dataset(22, 50, 16);
    let scores = delta_scores(&factors, &ds, Variant::UnitV).unwrap();
    for p in [10.0, 50.0, 75.0, 93.75, 99.0] {
        let k = percentile_to_k(16, p).unwrap();
        let via_percentile = select_targets(
            &scores,
            &Plan::new(0.0, TargetRule::Percentile(p), Variant::UnitV).unwrap(),
        )
        .unwrap();
        let via_top_k = select_targets(
            &scores,
            &Plan::new(0.0, TargetRule::TopK(k), Variant::UnitV).unwrap(),
        )
        .unwrap();
        assert_eq!(via_percentile, via_top_k, "p={p} disagrees with k={k}");
    }
}

#[test]
fn layer_expertise_is_stable_under_isometry() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let d = 10;
    let n = 300;
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 2 == 0;
        let offset = if class { 1.0 } else { -1.0 };
        for j in 0..d {
            let center = offset * if j % 3 == 0 { 0.9 } else { -0.5 };
            data.push(center + rng.random_range(-1.0..1.0));
        }
        labels.push(class);
    }
    let points = Matrix::new(n, d, data).unwrap();

    // Householder reflection: an exact isometry of the feature space.
    let mut v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in v.iter_mut() {
        *x /= norm;
    }
    let mut reflected = Vec::with_capacity(n * d);
    for i in 0..n {
        let row = points.row(i);
        let proj: f64 = row.iter().zip(&v).map(|(a, b)| a * b).sum();
        for j in 0..d {
            reflected.push(row[j] - 2.0 * proj * v[j]);
        }
    }
    let reflected = Matrix::new(n, d, reflected).unwrap();

    let a = layer_expert(&points, &labels, 9).unwrap();
    let b = layer_expert(&reflected, &labels, 9).unwrap();
    assert!(
        (a.expertise - b.expertise).abs() <= 0.01,
        "isometry moved expertise {:.4} -> {:.4}",
        a.expertise,
        b.expertise
    );
}
