use gna_core::model::{GnaModel, ModelConfig, TabularModel};
use gna_core::nn::{log_sum_exp, OptimizerConfig, Tape, Tensor};
use gna_core::problems::{exact_boltzmann_table, log_partition, Objective, TableObjective, Xorsat3Reg};
use gna_core::training::{
    checkpoint_revert, dedup_entries, free_energy_gradient, local_free_energies, partial_kl_gradient,
    partial_kl_loss, record_partial_kl, run_limited, run_unlimited, select_queries, weighted_moments,
    AnnealSchedule, Learner, ReplayBuffer, RunHistory, Split, TrainError, TrainRunConfig, Variant,
};
use gna_core::BitString;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn random_model(n: usize, layers: usize, hidden: usize, scale: f64, seed: u64) -> GnaModel<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut m = GnaModel::new(ModelConfig::new(n, layers, hidden), &mut rng).unwrap();
    for t in m.params.tensors_mut() {
        t.data_mut().iter_mut().for_each(|v| *v *= scale);
    }
    m
}

fn flat(grads: &[Tensor<f64>]) -> Vec<f64> {
    grads.iter().flat_map(|g| g.data().iter().copied()).collect()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// `F = Σ_x q(x)(f(x) + log q(x)/β)` over every configuration, and its
/// gradient by reverse mode through the full sum.
fn exact_free_energy(model: &GnaModel<f64>, fs: &[f64], beta: f64) -> (f64, Vec<Tensor<f64>>) {
    let n = model.n_vars();
    let xs: Vec<BitString> = BitString::enumerate(n).collect();
    let mut tape = Tape::new();
    let (rec, lq) = model.record_log_probs(&mut tape, &xs, beta).unwrap();
    let q = tape.exp(lq);
    let energy = tape.dot_const(q, fs).unwrap();
    let qlq = tape.mul(q, lq).unwrap();
    let ent = tape.sum(qlq);
    let ent = tape.scale(ent, 1.0 / beta);
    let total = tape.add(energy, ent).unwrap();
    let value = tape.value(total).item().unwrap();
    let mut g = tape.backward(total).unwrap();
    (value, rec.params.gradients(&mut g))
}

#[test]
fn schedule_endpoints_and_log_linear_ramp() {
    let s = AnnealSchedule::limited(Variant::Sa);
    assert_eq!(s.beta_max(0.0), 0.057);
    assert_eq!(s.beta_max(0.33), 69.7);
    assert_eq!(s.beta_max(0.9), 69.7);
    let mid = s.beta_max(0.165);
    assert!((mid - (0.057f64 * 69.7).sqrt()).abs() < 1e-9);
    let mut prev = 0.0;
    for k in 0..=100 {
        let b = s.beta_max(k as f64 / 100.0);
        assert!(b >= prev);
        prev = b;
    }
    let u = AnnealSchedule::unlimited(Variant::Pt);
    assert_eq!(u.beta_max(0.0), 1.0);
    assert_eq!(u.beta_max(2e4), 100.0);
    assert!((u.beta_max(1e4) - 10.0).abs() < 1e-9);
    assert!(AnnealSchedule { ramp_length: 0.0, ..s }.validate().is_err());
    assert!(AnnealSchedule { beta_start: 0.01, ..s }.validate().is_err());
}

#[test]
fn pt_draws_stay_in_window_and_sa_sits_at_the_top() {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let pt = AnnealSchedule::limited(Variant::Pt);
    let sa = AnnealSchedule::limited(Variant::Sa);
    let hi = pt.beta_max(0.2);
    let draws: Vec<f64> = (0..2000).map(|_| pt.training_beta(0.2, &mut rng)).collect();
    assert!(draws.iter().all(|&b| (0.057..=hi).contains(&b)));
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    assert!((mean - (0.057 + hi) / 2.0).abs() < 0.05 * hi);
    assert_eq!(sa.training_beta(0.2, &mut rng), hi);
    assert_eq!(pt.query_beta(0.2), hi);
    assert_eq!(pt.training_beta(0.0, &mut rng), 0.057);
}

#[test]
fn buffer_split_rules() {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let initial: Vec<(BitString, f64)> = (0..20)
        .map(|i| (BitString::from_index(i, 8), (i as f64 - 7.0).abs()))
        .collect();
    let mut buf = ReplayBuffer::seed_initial(initial, 2, &mut rng);
    assert_eq!(buf.count(Split::Train), 18);
    assert_eq!(buf.count(Split::Validation), 2);
    assert_eq!(buf.best().unwrap().x, BitString::from_index(7, 8));
    assert_eq!(buf.best().unwrap().split, Split::Train);

    assert_eq!(buf.insert(BitString::ones(8), -1.0, 0.0, &mut rng), Split::Train);
    assert_eq!(buf.best_f(), Some(-1.0));
    buf.push(BitString::from_index(200, 8), -2.0, Split::Validation);
    assert_eq!(buf.best().unwrap().split, Split::Train);

    let mut n_train = 0;
    for i in 0..4000u64 {
        if buf.insert(BitString::from_index(i % 256, 8), 5.0, 0.9, &mut rng) == Split::Train {
            n_train += 1;
        }
    }
    let frac = n_train as f64 / 4000.0;
    assert!((frac - 0.9).abs() < 0.02, "train fraction {frac}");
    let train = buf.split(Split::Train);
    let mut uniq = train.iter().map(|(x, _)| x.clone()).collect::<Vec<_>>();
    uniq.sort_by_key(|x| x.to_index());
    uniq.dedup();
    assert_eq!(uniq.len(), train.len());
}

#[test]
fn partial_kl_two_entry_value() {
    let m = GnaModel::<f64>::zeros(ModelConfig::new(4, 1, 4)).unwrap();
    let entries = vec![(BitString::zeros(4), 0.0), (BitString::ones(4), 1.0)];
    let v = partial_kl_loss(&m, &entries, std::f64::consts::LN_2).unwrap();
    let p = [2.0 / 3.0, 1.0 / 3.0];
    let expect: f64 = p.iter().map(|&pi: &f64| pi * (pi / 0.5).ln()).sum();
    assert!((v - expect).abs() < 1e-12, "{v} vs {expect}");
    assert!((expect - 0.0566).abs() < 1e-4);
}

#[test]
fn partial_kl_rejects_degenerate_inputs() {
    let m = GnaModel::<f64>::zeros(ModelConfig::new(4, 1, 4)).unwrap();
    let x = BitString::zeros(4);
    let dup = vec![(x.clone(), 0.0), (x.clone(), 0.0)];
    assert!(matches!(partial_kl_loss(&m, &dup, 1.0), Err(TrainError::TooFewEntries(1))));
    let bad = vec![(x, f64::NAN), (BitString::ones(4), 0.0)];
    assert!(matches!(partial_kl_loss(&m, &bad, 1.0), Err(TrainError::NonFinite { .. })));
}

#[test]
fn partial_kl_is_nonnegative_and_shift_invariant() {
    let m = random_model(6, 2, 8, 2.0, 11);
    let mut rng = ChaCha20Rng::seed_from_u64(12);
    for trial in 0..5 {
        let entries: Vec<(BitString, f64)> = (0..15)
            .map(|_| (BitString::random(6, &mut rng), rng.random_range(-2.0..3.0)))
            .collect();
        let beta = 0.3 + trial as f64;
        let (v, g) = partial_kl_gradient(&m, &entries, beta).unwrap();
        assert!(v >= 0.0);
        let shifted: Vec<_> = entries.iter().map(|(x, f)| (x.clone(), f + 17.5)).collect();
        let (vs, gs) = partial_kl_gradient(&m, &shifted, beta).unwrap();
        assert!((v - vs).abs() < 1e-10);
        for (a, b) in flat(&g).iter().zip(flat(&gs)) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}

#[test]
fn partial_kl_vanishes_when_the_model_matches_on_the_subset() {
    // `f = −log q(x)/β` makes p̃ proportional to q on any subset.
    let m = random_model(6, 2, 8, 2.0, 21);
    let beta = 1.7;
    let xs: Vec<BitString> = (0..40u64).map(|i| BitString::from_index(i * 3 % 64, 6)).collect();
    let entries: Vec<(BitString, f64)> = xs
        .iter()
        .map(|x| (x.clone(), -m.log_prob(x, beta).unwrap() / beta))
        .collect();
    let (v, g) = partial_kl_gradient(&m, &entries, beta).unwrap();
    assert!(v < 1e-12);
    assert!(flat(&g).iter().all(|x| x.abs() < 1e-10));
}

#[test]
fn partial_kl_matches_direct_formula_and_dedups() {
    let m = random_model(5, 1, 6, 2.0, 31);
    let beta = 0.8;
    let mut entries: Vec<(BitString, f64)> = (0..10u64)
        .map(|i| (BitString::from_index(i * 3, 5), (i as f64 * 0.37).sin() * 2.0))
        .collect();
    let lq: Vec<f64> = entries.iter().map(|(x, _)| m.log_prob(x, beta).unwrap()).collect();
    let neg: Vec<f64> = entries.iter().map(|(_, f)| -beta * f).collect();
    let (zp, zq) = (log_sum_exp(&neg), log_sum_exp(&lq));
    let expect: f64 = neg
        .iter()
        .zip(&lq)
        .map(|(a, b)| (a - zp).exp() * ((a - zp) - (b - zq)))
        .sum();
    entries.push(entries[3].clone());
    assert_eq!(dedup_entries(&entries).len(), 10);
    let mut tape = Tape::new();
    let rec = record_partial_kl(&m, &mut tape, &entries, beta).unwrap();
    assert_eq!(rec.used, 10);
    assert!((rec.value - expect).abs() < 1e-12);
}

#[test]
fn constant_local_free_energy_gives_zero_gradient() {
    let m = GnaModel::<f64>::zeros(ModelConfig::new(6, 2, 8)).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(41);
    let batch = m.sample_unique_reweighted(1.0, 10_000, 32, &mut rng).unwrap();
    let fs = vec![2.5; batch.len()];
    let est = free_energy_gradient(&m, &batch, &fs, 1.0).unwrap();
    assert_eq!(est.var_f_loc, 0.0);
    assert!(flat(&est.grads).iter().all(|&g| g == 0.0));
    assert!((est.free_energy - (2.5 - 6.0 * 2f64.ln())).abs() < 1e-12);
}

#[test]
fn exact_model_has_zero_variance_local_free_energy() {
    let obj = Xorsat3Reg::generate(9, 4).unwrap();
    for beta in [0.4, 1.0, 3.0] {
        let table = exact_boltzmann_table(&obj, beta).unwrap();
        let tab = TabularModel::from_probs(9, &table);
        let xs: Vec<BitString> = BitString::enumerate(9).collect();
        let fs: Vec<f64> = xs.iter().map(|x| obj.evaluate(x)).collect();
        let floc = local_free_energies(&tab, &xs, &fs, beta);
        let (mean, var) = weighted_moments(&floc, &vec![1; floc.len()]);
        assert!(var < 1e-10);
        let f_exact = -log_partition(&obj, beta).unwrap() / beta;
        assert!((mean - f_exact).abs() < 1e-9);
    }
}

#[test]
fn exact_free_energy_gradient_matches_finite_differences() {
    let obj = Xorsat3Reg::generate(6, 2).unwrap();
    let fs: Vec<f64> = BitString::enumerate(6).map(|x| obj.evaluate(&x)).collect();
    let m = random_model(6, 1, 6, 1.5, 51);
    let beta = 0.9;
    let (_, g) = exact_free_energy(&m, &fs, beta);
    let h = 1e-6;
    for (ti, ei) in [(0usize, 0usize), (3, 2), (7, 5)] {
        let mut plus = m.clone();
        plus.params.tensors_mut()[ti].data_mut()[ei] += h;
        let mut minus = m.clone();
        minus.params.tensors_mut()[ti].data_mut()[ei] -= h;
        let fd = (exact_free_energy(&plus, &fs, beta).0 - exact_free_energy(&minus, &fs, beta).0) / (2.0 * h);
        let an = g[ti].data()[ei];
        assert!((fd - an).abs() < 1e-6 * (1.0 + an.abs()), "tensor {ti}[{ei}]: {fd} vs {an}");
    }
}

#[test]
fn reinforce_estimate_tracks_exact_gradient() {
    let obj = Xorsat3Reg::generate(8, 9).unwrap();
    let fs_all: Vec<f64> = BitString::enumerate(8).map(|x| obj.evaluate(&x)).collect();
    let m = random_model(8, 2, 8, 1.5, 61);
    let mut rng = ChaCha20Rng::seed_from_u64(62);
    for beta in [0.5, 2.0] {
        let (f_exact, g_exact) = exact_free_energy(&m, &fs_all, beta);
        let exact = flat(&g_exact);

        // Every configuration present with near-proportional weights.
        let full = m.sample_unique_reweighted(beta, 100_000_000, 256, &mut rng).unwrap();
        let fs: Vec<f64> = full.configs.iter().map(|x| obj.evaluate(x)).collect();
        let est = free_energy_gradient(&m, &full, &fs, beta).unwrap();
        assert!((est.free_energy - f_exact).abs() < 1e-3);
        assert!(cosine(&flat(&est.grads), &exact) > 0.999);

        // Batches of 10⁵ effective samples truncated below the 256 states.
        let mut mean = vec![0.0; exact.len()];
        let rounds = 200;
        for _ in 0..rounds {
            let b = m.sample_unique_reweighted(beta, 100_000, 128, &mut rng).unwrap();
            let fs: Vec<f64> = b.configs.iter().map(|x| obj.evaluate(x)).collect();
            let e = free_energy_gradient(&m, &b, &fs, beta).unwrap();
            for (acc, g) in mean.iter_mut().zip(flat(&e.grads)) {
                *acc += g / rounds as f64;
            }
        }
        let c = cosine(&mean, &exact);
        assert!(c > 0.99, "beta {beta}: cosine {c}");
    }
}

#[test]
fn checkpoint_revert_picks_lowest_recent_loss() {
    assert_eq!(checkpoint_revert(&[("a", 3.0), ("b", 1.0), ("c", 2.0)], 3), Some("b"));
    assert_eq!(checkpoint_revert(&[("a", 3.0)], 20), Some("a"));
    assert_eq!(checkpoint_revert(&[("a", 3.0), ("b", 2.0), ("c", 1.0)], 3), Some("c"));
    assert_eq!(checkpoint_revert(&[("a", 1.0), ("b", 1.0), ("c", 2.0)], 3), Some("b"));
    assert_eq!(checkpoint_revert(&[("a", 0.1), ("b", 1.0), ("c", 2.0)], 2), Some("b"));
    assert_eq!(checkpoint_revert(&[("a", f64::INFINITY), ("b", f64::NAN)], 2), None);
    assert_eq!(checkpoint_revert::<&str>(&[], 5), None);
}

#[test]
fn query_selection_avoids_the_buffer_until_the_cap() {
    let mut m = GnaModel::<f64>::zeros(ModelConfig::new(5, 1, 4)).unwrap();
    // Saturate the head towards bit 1 so only `11111` is ever drawn.
    m.params.head_b.data_mut()[1] = 60.0;
    let mut rng = ChaCha20Rng::seed_from_u64(71);
    let mut buf = ReplayBuffer::new();
    buf.push(BitString::ones(5), 0.0, Split::Train);
    let xs = select_queries(&m, 1.0, &buf, &mut rng, 1, 8).unwrap();
    assert_eq!(xs, vec![BitString::ones(5)]);

    let fair = GnaModel::<f64>::zeros(ModelConfig::new(5, 1, 4)).unwrap();
    let xs = select_queries(&fair, 1.0, &buf, &mut rng, 20, 64).unwrap();
    let mut uniq = xs.clone();
    uniq.sort_by_key(|x| x.to_index());
    uniq.dedup();
    assert_eq!(uniq.len(), 20);
    assert!(!xs.contains(&BitString::ones(5)));
}

#[test]
fn limited_run_spends_exactly_the_budget() {
    let obj = Xorsat3Reg::generate(8, 3).unwrap();
    let mut cfg = TrainRunConfig::limited(Variant::Sa);
    cfg.budget = 45;
    cfg.steps_per_query = 2;
    let run = |seed| {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        run_limited::<f64, _>(&obj, &cfg, &mut rng).unwrap()
    };
    let (h, model) = run(1);
    assert_eq!(h.records.len(), 45);
    assert_eq!(h.queries, 45);
    assert!(h.records.windows(2).all(|w| w[1].best_f <= w[0].best_f));
    assert!(h.records.iter().all(|r| r.best_f <= r.f));
    assert_eq!(h.records[0].beta, 0.057);
    assert!(model.params.all_finite());
    let (h2, _) = run(1);
    assert_eq!(h, h2);
    let (h3, _) = run(2);
    assert_ne!(h, h3);

    cfg.budget = 20;
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let (h, _) = run_limited::<f64, _>(&obj, &cfg, &mut rng).unwrap();
    assert_eq!(h.records.len(), 20);

    cfg.budget = 10;
    let err = run_limited::<f64, _>(&obj, &cfg, &mut rng).unwrap_err();
    assert!(matches!(err.error, TrainError::Config(_)));
}

#[test]
fn limited_run_reports_non_finite_objective() {
    let obj = TableObjective::from_fn(6, |x| if x.count_ones() == 3 { f64::NAN } else { 1.0 });
    let cfg = TrainRunConfig::limited(Variant::Pt);
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let err = run_limited::<f64, _>(&obj, &cfg, &mut rng).unwrap_err();
    assert!(matches!(err.error, TrainError::NonFinite { .. }));
    assert_eq!(err.history.records.len() as u64, err.history.queries);
}

#[test]
fn unlimited_run_stops_on_first_solving_batch() {
    let target = BitString::from_index(37, 6);
    let t = target.clone();
    let obj = TableObjective::from_fn(6, move |x| if *x == t { 0.0 } else { 1.0 });
    let mut cfg = TrainRunConfig::unlimited(Variant::Sa, 50);
    cfg.n_layers = 1;
    cfg.hidden = 8;
    let mut rng = ChaCha20Rng::seed_from_u64(81);
    let (h, _) = run_unlimited::<f64, _>(&obj, &cfg, &mut rng).unwrap();
    assert_eq!(h.steps_to_solve, Some(1));
    assert_eq!(h.best_x, Some(target));
    assert_eq!(h.records.len(), 1);
    assert_eq!(h.queries, 64);
}

#[test]
fn unlimited_run_can_train_past_the_first_solve() {
    let target = BitString::from_index(37, 6);
    let t = target.clone();
    let obj = TableObjective::from_fn(6, move |x| if *x == t { 0.0 } else { 1.0 });
    let mut cfg = TrainRunConfig::unlimited(Variant::Sa, 5);
    cfg.n_layers = 1;
    cfg.hidden = 8;
    cfg.stop_at_target = false;
    let mut rng = ChaCha20Rng::seed_from_u64(81);
    let (h, _) = run_unlimited::<f64, _>(&obj, &cfg, &mut rng).unwrap();
    assert_eq!(h.steps_to_solve, Some(1));
    assert_eq!(h.records.len(), 5);
    assert_eq!(h.best_x, Some(target));
}

#[test]
fn unlimited_run_solves_small_xorsat() {
    let obj = Xorsat3Reg::generate(10, 5).unwrap();
    let mut cfg = TrainRunConfig::unlimited(Variant::Pt, 400);
    cfg.n_layers = 2;
    cfg.hidden = 16;
    cfg.n_unique = 64;
    cfg.optimizer = OptimizerConfig::adam(3e-3);
    let mut rng = ChaCha20Rng::seed_from_u64(91);
    let (h, _) = run_unlimited::<f64, _>(&obj, &cfg, &mut rng).unwrap();
    assert!(h.steps_to_solve.is_some(), "best {:?}", h.best_f());
    let x = h.best_x.unwrap();
    assert_eq!(obj.evaluate(&x), 0.0);
}

#[test]
fn training_on_a_full_buffer_recovers_the_boltzmann_distribution() {
    let mut rng = ChaCha20Rng::seed_from_u64(101);
    let values: Vec<f64> = (0..64).map(|_| rng.random_range(0.0..3.0)).collect();
    let obj = TableObjective::new(6, values.clone());
    let beta = 1.0;
    let entries: Vec<(BitString, f64)> = BitString::enumerate(6).zip(values).collect();
    let model = GnaModel::<f64>::new(ModelConfig::limited(6), &mut rng).unwrap();
    let mut learner = Learner::new(model, OptimizerConfig::adam(1e-3));
    let mut loss = f64::INFINITY;
    for _ in 0..3000 {
        let (v, g) = partial_kl_gradient(&learner.model, &entries, beta).unwrap();
        loss = v;
        learner.apply(&g);
    }
    assert!(loss < 1e-3, "loss {loss}");
    let p = exact_boltzmann_table(&obj, beta).unwrap();
    let tv: f64 = BitString::enumerate(6)
        .zip(&p)
        .map(|(x, pi)| (learner.model.log_prob(&x, beta).unwrap().exp() - pi).abs())
        .sum::<f64>()
        / 2.0;
    assert!(tv < 0.05, "tv {tv}");
}

#[test]
fn history_csv_round_trip() {
    let mut h = RunHistory::new();
    for (i, f) in [3.0, 1.5, 2.0, 0.25].into_iter().enumerate() {
        h.queries += 1;
        h.push(BitString::from_index(i as u64, 4), f, 0.1 * (i + 1) as f64);
    }
    assert_eq!(h.best_curve(), vec![3.0, 1.5, 1.5, 0.25]);
    let text = h.to_csv();
    assert!(text.starts_with("m,f,best_f,beta,elapsed_s"));
    let back = RunHistory::read_csv(text.as_bytes()).unwrap();
    assert_eq!(back.records.len(), 4);
    for (a, b) in h.records.iter().zip(&back.records) {
        assert_eq!((a.m, a.f, a.best_f, a.beta), (b.m, b.f, b.best_f, b.beta));
        assert_eq!(a.elapsed_s, b.elapsed_s);
        assert!(b.x.is_none());
    }
}
