//! Attention analysis of a trained checkpoint against the clause graph of
//! its instance.

use std::fs;
use std::path::{Path, PathBuf};

use gna_core::analysis::{
    adjacency_score, attention_score_pairs, collect_attention, pearson, variable_adjacency, write_matrix_csv,
};
use gna_core::model::Checkpoint;
use gna_core::problems::{InstanceFile, Objective};
use gna_core::Model;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::plot::{heatmap, scatter_plot};
use crate::{io_err, HarnessError};

pub const SUMMARY_FILE: &str = "analysis.toml";
pub const VARIABLE_FILE: &str = "attention_variables.csv";
pub const ADJACENCY_FILE: &str = "adjacency.csv";
pub const SCORE_FILE: &str = "adjacency_score.csv";
pub const PAIRS_FILE: &str = "scatter.csv";

#[derive(Clone, Debug, PartialEq)]
pub struct AnalyzeOptions {
    pub checkpoint: PathBuf,
    pub instance: PathBuf,
    pub beta: f64,
    pub samples: usize,
    pub alpha: f64,
    pub path_length: usize,
    pub seed: u64,
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub n: usize,
    pub beta: f64,
    pub samples: usize,
    pub alpha: f64,
    pub path_length: usize,
    pub seed: u64,
    pub lambda_max: f64,
    pub pairs: usize,
    /// Absent when either series is constant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
}

/// One row of the pair export.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub i: usize,
    pub j: usize,
    pub attention: f64,
    pub score: f64,
}

fn write_matrix(path: &Path, rows: &[Vec<f64>]) -> Result<(), HarnessError> {
    let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    write_matrix_csv(rows, file)?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn analyze(opts: &AnalyzeOptions) -> Result<AnalysisSummary, HarnessError> {
    let (model, _) = Checkpoint::load(&opts.checkpoint)?.into_model::<f64>()?;
    let model: Model = model;
    let instance = InstanceFile::load(&opts.instance)?.instance;
    if model.n_vars() != instance.n_vars() {
        return Err(HarnessError::Usage(format!(
            "checkpoint has {} variables, instance has {}",
            model.n_vars(),
            instance.n_vars()
        )));
    }
    let adjacency = variable_adjacency(&instance)?;
    let score = adjacency_score(&adjacency, opts.alpha, opts.path_length)?;
    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
    let record = collect_attention(&model, opts.beta, opts.samples, &mut rng)?;
    let pairs = attention_score_pairs(&record, &score)?;

    let out = &opts.out;
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let n = record.n;
    for (l, layer) in record.layers.iter().enumerate() {
        let rows: Vec<Vec<f64>> = layer.chunks(n).map(<[f64]>::to_vec).collect();
        write_matrix(&out.join(format!("attention_layer{l}.csv")), &rows)?;
    }
    let variables = record.variable_attention();
    write_matrix(&out.join(VARIABLE_FILE), &variables)?;
    let adj_f: Vec<Vec<f64>> = adjacency
        .iter()
        .map(|r| r.iter().map(|&v| f64::from(v)).collect())
        .collect();
    write_matrix(&out.join(ADJACENCY_FILE), &adj_f)?;
    write_matrix(&out.join(SCORE_FILE), &score.matrix)?;

    let path = out.join(PAIRS_FILE);
    let mut w = csv::Writer::from_path(&path)?;
    let indices = (0..n).flat_map(|i| (0..i).map(move |j| (i, j)));
    for ((i, j), &(attention, s)) in indices.zip(&pairs) {
        w.serialize(PairRow {
            i,
            j,
            attention,
            score: s,
        })?;
    }
    w.flush().map_err(|e| io_err(&path, e))?;

    let (x, y): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    let summary = AnalysisSummary {
        n,
        beta: opts.beta,
        samples: opts.samples,
        alpha: opts.alpha,
        path_length: opts.path_length,
        seed: opts.seed,
        lambda_max: score.lambda_max,
        pairs: pairs.len(),
        r: pearson(&x, &y),
    };
    let text = toml::to_string_pretty(&summary).map_err(|e| HarnessError::Format(e.to_string()))?;
    write_text(&out.join(SUMMARY_FILE), &text)?;
    write_text(
        &out.join("attention_variables.svg"),
        &heatmap("layer-averaged attention", &variables),
    )?;
    write_text(&out.join("adjacency_score.svg"), &heatmap("adjacency score", &score.matrix))?;
    let title = match summary.r {
        Some(r) => format!("attention vs adjacency score, r = {r:.3}"),
        None => "attention vs adjacency score, r undefined".to_string(),
    };
    write_text(
        &out.join("scatter.svg"),
        &scatter_plot(&title, "adjacency score", "attention", &pairs.iter().map(|&(a, s)| (s, a)).collect::<Vec<_>>()),
    )?;
    Ok(summary)
}
