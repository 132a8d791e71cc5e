#![allow(clippy::needless_range_loop)]

use gna_core::analysis::{
    adjacency_score, attention_structure_correlation, collect_attention, pearson, spectral_radius,
    variable_adjacency, write_matrix_csv, AdjacencyScore, AnalysisError, AttentionRecord,
};
use gna_core::model::{GnaModel, ModelConfig};
use gna_core::problems::{Barthel3Sat, Literal, ProblemInstance, ProblemKind, SatClause};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn walks(a: &[Vec<u8>], i: usize, j: usize, len: usize) -> u64 {
    if len == 0 {
        return u64::from(i == j);
    }
    (0..a.len()).filter(|&k| a[i][k] == 1).map(|k| walks(a, k, j, len - 1)).sum()
}

fn random_graph(n: usize, rng: &mut ChaCha20Rng) -> Vec<Vec<u8>> {
    let mut a = vec![vec![0u8; n]; n];
    for i in 0..n {
        for j in 0..i {
            if rng.random_bool(0.5) {
                a[i][j] = 1;
                a[j][i] = 1;
            }
        }
    }
    a
}

#[test]
fn path_graph_scores() {
    let a = vec![vec![0, 1, 0], vec![1, 0, 1], vec![0, 1, 0]];
    let s = adjacency_score(&a, 0.5, 2).unwrap();
    let expect = [[0.5, 1.0, 0.5], [1.0, 1.0, 1.0], [0.5, 1.0, 0.5]];
    for i in 0..3 {
        for j in 0..3 {
            assert_eq!(s.matrix[i][j], expect[i][j]);
        }
    }
    assert!((s.lambda_max - 2f64.sqrt()).abs() < 1e-12);
    let one = adjacency_score(&a, 0.5, 1).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            assert_eq!(one.matrix[i][j], f64::from(a[i][j]));
        }
    }
}

#[test]
fn alpha_must_stay_below_inverse_spectral_radius() {
    let tri = vec![vec![0, 1, 1], vec![1, 0, 1], vec![1, 1, 0]];
    assert!((spectral_radius(&tri) - 2.0).abs() < 1e-12);
    assert!(matches!(
        adjacency_score(&tri, 0.5 + 1e-9, 3),
        Err(AnalysisError::AlphaOutOfRange { .. })
    ));
    assert!(adjacency_score(&tri, 0.5 - 1e-9, 3).is_ok());
    assert!(adjacency_score(&tri, 0.0, 3).is_err());
    assert!(matches!(adjacency_score(&tri, 0.1, 0), Err(AnalysisError::ZeroLength)));
    let asym = vec![vec![0, 1], vec![0, 0]];
    assert!(matches!(adjacency_score(&asym, 0.1, 2), Err(AnalysisError::BadAdjacency(_))));
}

#[test]
fn scores_equal_weighted_walk_counts() {
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    for trial in 0..20 {
        let n = 2 + trial % 5;
        let a = random_graph(n, &mut rng);
        // Dyadic alpha keeps every partial sum exact.
        let alpha = 0.125;
        let l = 1 + trial % 6;
        let s = adjacency_score(&a, alpha, l).unwrap();
        for i in 0..n {
            for j in 0..n {
                let mut oracle = 0.0;
                let mut w = 1.0;
                for k in 1..=l {
                    oracle += w * walks(&a, i, j, k) as f64;
                    w *= alpha;
                }
                assert_eq!(s.matrix[i][j], oracle, "n {n} l {l} ({i},{j})");
                assert_eq!(s.matrix[i][j], s.matrix[j][i]);
                assert!(s.matrix[i][j] >= 0.0);
            }
        }
    }
}

#[test]
fn clause_graph_adjacency() {
    let lit = |var| Literal { var, negated: false };
    let sat = Barthel3Sat {
        n: 4,
        clauses: vec![SatClause([lit(0), lit(1), lit(2)])],
        planted: None,
    };
    let a = variable_adjacency(&ProblemInstance::Sat3(sat)).unwrap();
    let mut ones = Vec::new();
    for i in 0..4 {
        for j in 0..4 {
            if a[i][j] == 1 {
                ones.push((i, j));
            }
        }
    }
    assert_eq!(ones, vec![(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)]);

    for seed in 0..10 {
        let inst = ProblemInstance::generate(ProblemKind::Xorsat, 20, seed).unwrap();
        let a = variable_adjacency(&inst).unwrap();
        for i in 0..20 {
            assert!(a[i].iter().map(|&v| v as usize).sum::<usize>() <= 6);
            assert_eq!(a[i][i], 0);
            for j in 0..20 {
                assert_eq!(a[i][j], a[j][i]);
            }
        }
    }
    let ising = ProblemInstance::generate(ProblemKind::Ising, 24, 0).unwrap();
    assert!(matches!(variable_adjacency(&ising), Err(AnalysisError::Unsupported(_))));
}

#[test]
fn pearson_properties() {
    let x = [1.0, 2.0, 4.0, 3.0, 7.5];
    let y = [0.3, 0.1, 0.9, 0.4, 2.0];
    let r = pearson(&x, &y).unwrap();
    let scaled: Vec<f64> = x.iter().map(|v| 3.7 * v - 11.0).collect();
    assert!((pearson(&scaled, &y).unwrap() - r).abs() < 1e-12);
    let ys: Vec<f64> = y.iter().map(|v| 0.2 * v + 5.0).collect();
    assert!((pearson(&x, &ys).unwrap() - r).abs() < 1e-12);
    assert!((pearson(&x, &scaled).unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(pearson(&x, &[2.0; 5]), None);
    assert_eq!(pearson(&[1.0], &[2.0]), None);
}

fn check_convex(rec: &AttentionRecord) {
    let n = rec.n;
    for layer in &rec.layers {
        for t in 0..n {
            let row = &layer[t * n..(t + 1) * n];
            assert!(row.iter().all(|&v| v >= 0.0));
            assert!(row[t + 1..].iter().all(|&v| v == 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn uniform_attention_for_zero_model() {
    let m = GnaModel::<f64>::zeros(ModelConfig::new(6, 2, 8)).unwrap();
    let rec = collect_attention(&m, 1.0, 10, &mut ChaCha20Rng::seed_from_u64(1)).unwrap();
    check_convex(&rec);
    for layer in &rec.layers {
        for t in 0..6 {
            for s in 0..=t {
                assert!((layer[t * 6 + s] - 1.0 / (t + 1) as f64).abs() < 1e-12);
            }
        }
    }
    let v = rec.variable_attention();
    assert!((v[3][0] - 0.25).abs() < 1e-12);
    assert_eq!(v[0][0], 0.0);
    assert_eq!(v[2][4], 0.0);
}

#[test]
fn averaged_attention_of_a_random_model() {
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let mut m = GnaModel::<f64>::new(ModelConfig::new(7, 3, 8), &mut rng).unwrap();
    for t in m.params.tensors_mut() {
        t.data_mut().iter_mut().for_each(|v| *v *= 4.0);
    }
    let rec = collect_attention(&m, 1.0, 200, &mut rng).unwrap();
    assert_eq!(rec.layers.len(), 3);
    assert_eq!(rec.n_samples, 200);
    check_convex(&rec);

    let single = collect_attention(&m, 0.7, 1, &mut ChaCha20Rng::seed_from_u64(9)).unwrap();
    let (_, maps) = m
        .sample_with_attention(0.7, 1, &mut ChaCha20Rng::seed_from_u64(9))
        .unwrap()
        .pop()
        .unwrap();
    assert_eq!(single.layers, maps);
    assert!(collect_attention(&m, 1.0, 0, &mut rng).is_err());
}

#[test]
fn correlation_of_proportional_attention_is_one() {
    let a = vec![
        vec![0, 1, 0, 1],
        vec![1, 0, 1, 0],
        vec![0, 1, 0, 0],
        vec![1, 0, 0, 0],
    ];
    let score = adjacency_score(&a, 0.3, 4).unwrap();
    let n = 4;
    // Raw position maps whose variable view is 0.1·S below the diagonal.
    let mut raw = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..i {
            raw[i * n + j + 1] = 0.1 * score.matrix[i][j];
        }
    }
    let rec = AttentionRecord {
        n,
        beta: 1.0,
        n_samples: 1,
        layers: vec![raw.clone(), raw],
    };
    let r = attention_structure_correlation(&rec, &score).unwrap().unwrap();
    assert!((r - 1.0).abs() < 1e-12);

    let flat = AttentionRecord {
        layers: vec![vec![0.5; n * n]],
        ..rec.clone()
    };
    assert_eq!(attention_structure_correlation(&flat, &score).unwrap(), None);
    let small = AdjacencyScore {
        matrix: vec![vec![0.0; 3]; 3],
        ..score
    };
    assert!(matches!(
        attention_structure_correlation(&rec, &small),
        Err(AnalysisError::SizeMismatch { .. })
    ));
}

#[test]
fn matrix_csv_export() {
    let mut out = Vec::new();
    write_matrix_csv(&[vec![1.0, 0.5], vec![0.25, 2.0]], &mut out).unwrap();
    assert_eq!(String::from_utf8(out).unwrap(), "1.0,0.5\n0.25,2.0\n");
}
