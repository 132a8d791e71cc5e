use gna_core::model::{GnaModel, ModelConfig};
use gna_core::nn::{log_sum_exp, Tensor};
use gna_core::BitString;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// A randomly initialized model with weights scaled up so its distribution
/// is far from uniform.
fn random_model(n: usize, layers: usize, hidden: usize, scale: f64, seed: u64) -> GnaModel<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut m = GnaModel::new(ModelConfig::new(n, layers, hidden), &mut rng).unwrap();
    for t in m.params.tensors_mut() {
        t.data_mut().iter_mut().for_each(|v| *v *= scale);
    }
    // Give biases and norms some spread too.
    for layer in &mut m.params.layers {
        layer.b1 = Tensor::randn(layer.b1.shape(), 0.3, &mut rng);
    }
    m.params.temp_b = Tensor::randn(m.params.temp_b.shape(), 0.3, &mut rng);
    m
}

fn log_softmax2(l: [f64; 2]) -> [f64; 2] {
    let lse = log_sum_exp(&l);
    [l[0] - lse, l[1] - lse]
}

#[test]
fn zero_model_is_uniform() {
    let m = GnaModel::<f64>::zeros(ModelConfig::new(8, 2, 6)).unwrap();
    assert_eq!(m.forward_logits(&[1, 0, 1], 2.0).unwrap(), [0.0, 0.0]);
    let x: BitString = "01100101".parse().unwrap();
    let lp = m.log_prob(&x, 0.3).unwrap();
    assert!((lp - 8.0 * 0.5f64.ln()).abs() < 1e-12);
}

#[test]
fn rejects_bad_inputs() {
    let m = GnaModel::<f64>::zeros(ModelConfig::new(4, 1, 4)).unwrap();
    assert!(m.forward_logits(&[0, 1], 0.0).is_err());
    assert!(m.forward_logits(&[0, 1], -1.0).is_err());
    assert!(m.forward_logits(&[0, 1, 0, 1], 1.0).is_err());
    assert!(m.log_prob(&BitString::zeros(5), 1.0).is_err());
    let mut bad = ModelConfig::new(4, 1, 4);
    bad.n_heads = 2;
    assert!(GnaModel::<f64>::zeros(bad).is_err());
}

#[test]
fn beta_changes_logits_through_temperature_projection() {
    let m = random_model(6, 2, 8, 1.0, 1);
    let a = m.forward_logits(&[1, 0], 0.5).unwrap();
    let b = m.forward_logits(&[1, 0], 5.0).unwrap();
    assert!((a[0] - b[0]).abs() + (a[1] - b[1]).abs() > 1e-6);
    let p = log_softmax2(a);
    assert!((p[0].exp() + p[1].exp() - 1.0).abs() < 1e-12);
}

#[test]
fn zeroed_temperature_weights_remove_beta_dependence() {
    let mut m = random_model(6, 2, 8, 20.0, 2);
    m.params.temp_w.fill(0.0);
    let xs: Vec<BitString> = BitString::enumerate(6).collect();
    let base = m.log_probs(&xs, 1.0).unwrap();
    for beta in [0.1, 3.7, 42.0] {
        assert_eq!(m.log_probs(&xs, beta).unwrap(), base);
    }
}

#[test]
fn normalizes_over_all_configurations() {
    let m = random_model(10, 2, 8, 25.0, 3);
    let xs: Vec<BitString> = BitString::enumerate(10).collect();
    for beta in [0.1, 1.0, 10.0] {
        let lp = m.log_probs(&xs, beta).unwrap();
        let total: f64 = lp.iter().map(|v| v.exp()).sum();
        assert!((total - 1.0).abs() < 1e-8, "beta {beta}: {total}");
    }
}

#[test]
fn log_prob_equals_sum_of_stepwise_log_softmax() {
    let m = random_model(7, 3, 8, 25.0, 4);
    let x: BitString = "1011001".parse().unwrap();
    let beta = 1.7;
    let mut total = 0.0;
    for t in 0..7 {
        let l = m.forward_logits(&x.bits()[..t], beta).unwrap();
        total += log_softmax2(l)[x.bits()[t] as usize];
    }
    let lp = m.log_prob(&x, beta).unwrap();
    assert!((lp - total).abs() < 1e-12, "{lp} vs {total}");
}

#[test]
fn incremental_decoder_matches_full_forward() {
    let m = random_model(9, 3, 12, 25.0, 5);
    let mut rng = ChaCha20Rng::seed_from_u64(0);
    for _ in 0..5 {
        let x = BitString::random(9, &mut rng);
        let inc = m.incremental_logits(&x, 0.8).unwrap();
        for (t, row) in inc.iter().enumerate() {
            let full = m.forward_logits(&x.bits()[..t], 0.8).unwrap();
            assert!((row[0] - full[0]).abs() < 1e-10 && (row[1] - full[1]).abs() < 1e-10);
        }
    }
}

#[test]
fn changing_a_bit_never_affects_earlier_conditionals() {
    let m = random_model(8, 2, 8, 25.0, 6);
    let x: BitString = "01101001".parse().unwrap();
    for j in 0..8 {
        let y = x.flipped(j);
        for t in 0..=j {
            assert_eq!(
                m.forward_logits(&x.bits()[..t], 2.0).unwrap(),
                m.forward_logits(&y.bits()[..t], 2.0).unwrap(),
                "bit {j} leaked into step {t}"
            );
        }
    }
}

#[test]
fn zero_model_samples_fair_bits() {
    let m = GnaModel::<f64>::zeros(ModelConfig::new(12, 1, 4)).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let samples = m.sample(1.0, 100_000, &mut rng).unwrap();
    for i in 0..12 {
        let mean = samples.iter().filter(|x| x.get(i)).count() as f64 / 1e5;
        // 99.99% binomial interval half-width is ~0.0062; the stated band is 0.006.
        assert!((0.494..=0.506).contains(&mean), "bit {i} mean {mean}");
    }
}

#[test]
fn saturated_head_forces_all_ones() {
    let mut m = GnaModel::<f64>::zeros(ModelConfig::new(10, 2, 4)).unwrap();
    m.params.head_b = Tensor::from_vec(vec![0.0, 30.0]);
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let samples = m.sample(3.0, 2000, &mut rng).unwrap();
    assert!(samples.iter().all(|x| *x == BitString::ones(10)));
    let batch = m.sample_unique_reweighted(3.0, 1_000_000, 1000, &mut rng).unwrap();
    assert_eq!(batch.configs, vec![BitString::ones(10)]);
    assert_eq!(batch.weights, vec![1_000_000]);
}

#[test]
fn empirical_distribution_matches_log_prob() {
    let m = random_model(6, 2, 8, 25.0, 7);
    let beta = 0.9;
    let xs: Vec<BitString> = BitString::enumerate(6).collect();
    let exact: Vec<f64> = m.log_probs(&xs, beta).unwrap().iter().map(|v| v.exp()).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let draws = 1_000_000;
    let mut counts = vec![0u64; 64];
    for x in m.sample(beta, draws, &mut rng).unwrap() {
        counts[x.to_index().unwrap() as usize] += 1;
    }
    let tv: f64 = counts
        .iter()
        .zip(&exact)
        .map(|(&c, &p)| (c as f64 / draws as f64 - p).abs())
        .sum::<f64>()
        / 2.0;
    assert!(tv < 0.02, "total variation {tv}");
}

#[test]
fn exhaustive_reweighted_batch_covers_support() {
    let m = random_model(4, 1, 6, 5.0, 10);
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let batch = m.sample_unique_reweighted(1.0, 1_000_000, 16, &mut rng).unwrap();
    assert_eq!(batch.total_weight(), 1_000_000);
    let mut seen = batch.configs.clone();
    seen.sort();
    seen.dedup();
    assert_eq!(seen.len(), batch.len(), "configs pairwise distinct");
    // With 10^6 draws every configuration of this mild model appears.
    assert_eq!(batch.len(), 16);
    let exact = m.log_probs(&batch.configs, 1.0).unwrap();
    for ((lq, ex), w) in batch.log_q.iter().zip(&exact).zip(&batch.weights) {
        assert!((lq - ex).abs() < 1e-10);
        let freq = *w as f64 / 1e6;
        assert!((freq - ex.exp()).abs() < 5e-3, "freq {freq} vs {}", ex.exp());
    }
}

#[test]
fn reweighted_batch_freezes_after_threshold() {
    let m = random_model(12, 1, 6, 1.0, 11);
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let batch = m.sample_unique_reweighted(1.0, 1_000_000, 50, &mut rng).unwrap();
    assert!(batch.len() > 50 && batch.len() <= 100, "{}", batch.len());
    assert_eq!(batch.total_weight(), 1_000_000);
    assert!(batch.weights.iter().all(|&w| w > 0));
    assert!(m.sample_unique_reweighted(1.0, 10, 50, &mut rng).is_err());
}

#[test]
fn attention_capture_does_not_perturb_sampling() {
    let m = random_model(7, 2, 8, 10.0, 12);
    let plain = m.sample(1.0, 50, &mut ChaCha20Rng::seed_from_u64(4)).unwrap();
    let captured = m
        .sample_with_attention(1.0, 50, &mut ChaCha20Rng::seed_from_u64(4))
        .unwrap();
    let xs: Vec<BitString> = captured.iter().map(|(x, _)| x.clone()).collect();
    assert_eq!(plain, xs);
    for (_, layers) in &captured {
        for mat in layers {
            for t in 0..7 {
                let row = &mat[t * 7..(t + 1) * 7];
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(row[t + 1..].iter().all(|&v| v == 0.0));
            }
        }
    }
}

#[test]
fn reweighted_batch_is_unbiased() {
    let n = 8;
    let m = random_model(n, 2, 8, 15.0, 13);
    let beta = 1.3;
    let xs: Vec<BitString> = BitString::enumerate(n).collect();
    let lp = m.log_probs(&xs, beta).unwrap();
    let stat = |x: &BitString| x.count_ones() as f64 + if x.get(0) && x.get(7) { 3.0 } else { 0.0 };
    let exact: f64 = xs.iter().zip(&lp).map(|(x, l)| l.exp() * stat(x)).sum();
    let seeds = 20;
    let mean = (0..seeds)
        .map(|s| {
            let mut rng = ChaCha20Rng::seed_from_u64(100 + s);
            m.sample_unique_reweighted(beta, 1_000_000, 64, &mut rng)
                .unwrap()
                .weighted_mean(stat)
        })
        .sum::<f64>()
        / seeds as f64;
    assert!(((mean - exact) / exact).abs() < 0.01, "{mean} vs {exact}");
}
