//! Attention introspection: averaged attention maps, discounted path-count
//! adjacency scores, and their correlation.
//!
//! Position `t` of the decoder reads the start token (`t = 0`) or `x_{t−1}`
//! and predicts `x_t`. In the variable view, row `i` is the query that
//! decides `x_i` and column `j < i` is the position holding `x_j`, so
//! `V[i][j] = raw[i][j + 1]`; the start-token column is dropped.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use thiserror::Error;

use crate::model::{GnaModel, ModelError};
use crate::nn::Scalar;
use crate::problems::{ProblemInstance, ProblemKind};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("adjacency matrix must be square, symmetric, 0/1 with zero diagonal: {0}")]
    BadAdjacency(String),
    #[error("alpha = {alpha} outside (0, 1/|lambda_max|) with |lambda_max| = {lambda_max}")]
    AlphaOutOfRange { alpha: f64, lambda_max: f64 },
    #[error("path length must be at least 1")]
    ZeroLength,
    #[error("{0} instances have no clause graph")]
    Unsupported(ProblemKind),
    #[error("size mismatch: attention over {attention} variables, scores over {score}")]
    SizeMismatch { attention: usize, score: usize },
    #[error("need at least one sample")]
    NoSamples,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Attention probabilities averaged over sampled sequences at one `β`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionRecord {
    pub n: usize,
    pub beta: f64,
    pub n_samples: usize,
    /// Per layer, `n × n` row-major over decoder positions. Each row is a
    /// convex combination supported on positions `≤` its own.
    pub layers: Vec<Vec<f64>>,
}

impl AttentionRecord {
    /// Layers averaged elementwise.
    pub fn layer_mean(&self) -> Vec<f64> {
        let k = self.layers.len() as f64;
        let mut out = vec![0.0; self.n * self.n];
        for layer in &self.layers {
            for (o, v) in out.iter_mut().zip(layer) {
                *o += v / k;
            }
        }
        out
    }

    /// Layer-averaged attention from the query deciding `x_i` to the
    /// position holding `x_j`, for `j < i`.
    pub fn variable_attention(&self) -> Vec<Vec<f64>> {
        let mean = self.layer_mean();
        let n = self.n;
        (0..n)
            .map(|i| (0..n).map(|j| if j < i { mean[i * n + j + 1] } else { 0.0 }).collect())
            .collect()
    }
}

/// Draws `n_samples` sequences at `beta` and averages the captured maps.
pub fn collect_attention<S: Scalar, R: Rng + ?Sized>(
    model: &GnaModel<S>,
    beta: f64,
    n_samples: usize,
    rng: &mut R,
) -> Result<AttentionRecord, AnalysisError> {
    if n_samples == 0 {
        return Err(AnalysisError::NoSamples);
    }
    let n = model.n_vars();
    let n_layers = model.config.n_layers;
    let mut layers = vec![vec![0.0; n * n]; n_layers];
    for (_, maps) in model.sample_with_attention(beta, n_samples, rng)? {
        for (acc, map) in layers.iter_mut().zip(&maps) {
            for (a, v) in acc.iter_mut().zip(map) {
                *a += v.as_f64();
            }
        }
    }
    let scale = 1.0 / n_samples as f64;
    layers.iter_mut().flatten().for_each(|v| *v *= scale);
    Ok(AttentionRecord {
        n,
        beta,
        n_samples,
        layers,
    })
}

/// `S = Σ_{k=1..l} α^{k−1} A^k`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjacencyScore {
    pub matrix: Vec<Vec<f64>>,
    pub alpha: f64,
    pub l: usize,
    /// Largest eigenvalue magnitude of `A`.
    pub lambda_max: f64,
}

fn check_adjacency(a: &[Vec<u8>]) -> Result<(), AnalysisError> {
    let n = a.len();
    for (i, row) in a.iter().enumerate() {
        if row.len() != n {
            return Err(AnalysisError::BadAdjacency(format!("row {i} has length {}", row.len())));
        }
        if row[i] != 0 {
            return Err(AnalysisError::BadAdjacency(format!("nonzero diagonal at {i}")));
        }
        for (j, &v) in row.iter().enumerate() {
            if v > 1 || v != a[j][i] {
                return Err(AnalysisError::BadAdjacency(format!("entry ({i}, {j})")));
            }
        }
    }
    Ok(())
}

/// Largest eigenvalue magnitude of a symmetric 0/1 matrix.
pub fn spectral_radius(a: &[Vec<u8>]) -> f64 {
    let n = a.len();
    if n == 0 {
        return 0.0;
    }
    let m = DMatrix::from_fn(n, n, |i, j| f64::from(a[i][j]));
    SymmetricEigen::new(m)
        .eigenvalues
        .iter()
        .fold(0.0, |acc: f64, v| acc.max(v.abs()))
}

pub fn adjacency_score(a: &[Vec<u8>], alpha: f64, l: usize) -> Result<AdjacencyScore, AnalysisError> {
    check_adjacency(a)?;
    if l == 0 {
        return Err(AnalysisError::ZeroLength);
    }
    let lambda_max = spectral_radius(a);
    if !(alpha > 0.0 && alpha * lambda_max < 1.0) {
        return Err(AnalysisError::AlphaOutOfRange { alpha, lambda_max });
    }
    let n = a.len();
    let adj = DMatrix::from_fn(n, n, |i, j| f64::from(a[i][j]));
    let mut power = adj.clone();
    let mut sum = adj.clone();
    let mut weight = 1.0;
    for _ in 2..=l {
        power = &power * &adj;
        weight *= alpha;
        sum += &power * weight;
    }
    let matrix = (0..n).map(|i| (0..n).map(|j| sum[(i, j)]).collect()).collect();
    Ok(AdjacencyScore {
        matrix,
        alpha,
        l,
        lambda_max,
    })
}

/// `A_ij = 1` iff `x_i` and `x_j` share a clause.
pub fn variable_adjacency(instance: &ProblemInstance) -> Result<Vec<Vec<u8>>, AnalysisError> {
    let clauses = instance
        .clause_variables()
        .ok_or(AnalysisError::Unsupported(instance.kind()))?;
    let n = crate::problems::Objective::n_vars(instance);
    let mut a = vec![vec![0u8; n]; n];
    for c in clauses {
        for &i in &c {
            for &j in &c {
                if i != j {
                    a[i][j] = 1;
                }
            }
        }
    }
    Ok(a)
}

/// Pearson correlation; `None` when either series has zero variance or
/// fewer than two points.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len(), "series lengths differ");
    let n = x.len();
    if n < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// `(attention, score)` over ordered pairs `i > j` of the variable view.
pub fn attention_score_pairs(
    record: &AttentionRecord,
    score: &AdjacencyScore,
) -> Result<Vec<(f64, f64)>, AnalysisError> {
    if record.n != score.matrix.len() {
        return Err(AnalysisError::SizeMismatch {
            attention: record.n,
            score: score.matrix.len(),
        });
    }
    let v = record.variable_attention();
    Ok((0..record.n)
        .flat_map(|i| (0..i).map(move |j| (i, j)))
        .map(|(i, j)| (v[i][j], score.matrix[i][j]))
        .collect())
}

/// Pearson `r` between layer-averaged attention and adjacency scores over
/// the causal pairs. `Ok(None)` when undefined.
pub fn attention_structure_correlation(
    record: &AttentionRecord,
    score: &AdjacencyScore,
) -> Result<Option<f64>, AnalysisError> {
    let pairs = attention_score_pairs(record, score)?;
    let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Ok(pearson(&x, &y))
}

/// Writes a dense matrix as headerless CSV.
pub fn write_matrix_csv<W: Write>(rows: &[Vec<f64>], out: W) -> Result<(), AnalysisError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
