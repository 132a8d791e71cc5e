//! Free-energy REINFORCE gradients and the partial-distribution KL loss.

use std::collections::HashSet;

use super::TrainError;
use crate::bits::BitString;
use crate::model::{GnaModel, LogProbModel, ParamVars, WeightedSampleBatch};
use crate::nn::{log_sum_exp, Scalar, Tape, Tensor, Var};

/// `F_loc(x, β) = f(x) + log q(x | β) / β`.
pub fn local_free_energy(f: f64, log_q: f64, beta: f64) -> f64 {
    f + log_q / beta
}

/// `F_loc` for each configuration under any normalized model.
pub fn local_free_energies(model: &impl LogProbModel, xs: &[BitString], fs: &[f64], beta: f64) -> Vec<f64> {
    xs.iter()
        .zip(fs)
        .map(|(x, &f)| local_free_energy(f, model.log_prob_f64(x, beta), beta))
        .collect()
}

/// Weighted mean and (population) variance.
pub fn weighted_moments(values: &[f64], weights: &[u64]) -> (f64, f64) {
    let total = weights.iter().sum::<u64>() as f64;
    let mean = if values.iter().all(|&v| v == values[0]) {
        values[0]
    } else {
        values.iter().zip(weights).map(|(v, &w)| w as f64 * v).sum::<f64>() / total
    };
    let var = values
        .iter()
        .zip(weights)
        .map(|(v, &w)| w as f64 * (v - mean) * (v - mean))
        .sum::<f64>()
        / total;
    (mean, var)
}

/// One REINFORCE estimate of `∇F` from a weighted batch.
#[derive(Clone, Debug)]
pub struct FreeEnergyEstimate<S> {
    /// One tensor per parameter, canonical order.
    pub grads: Vec<Tensor<S>>,
    pub mean_f: f64,
    /// `⟨F_loc⟩`, the batch estimate of `F`.
    pub free_energy: f64,
    pub var_f_loc: f64,
    pub min_f: f64,
    /// Batch index of `min_f`.
    pub argmin: usize,
}

/// `⟨(F_loc − ⟨F_loc⟩) ∇log q⟩` with weighted means over the batch.
///
/// Built as the surrogate `Σ_k c_k log q(x_k)` with constant
/// `c_k = w_k (F_loc,k − ⟨F_loc⟩) / W`, whose gradient is the estimator.
pub fn free_energy_gradient<S: Scalar>(
    model: &GnaModel<S>,
    batch: &WeightedSampleBatch<S>,
    fs: &[f64],
    beta: f64,
) -> Result<FreeEnergyEstimate<S>, TrainError> {
    if fs.len() != batch.len() || batch.is_empty() {
        return Err(TrainError::Config(format!(
            "{} objective values for a batch of {}",
            fs.len(),
            batch.len()
        )));
    }
    if let Some(i) = fs.iter().position(|f| !f.is_finite()) {
        return Err(TrainError::NonFinite {
            x: batch.configs[i].clone(),
            f: fs[i],
        });
    }
    let mut tape = Tape::new();
    let (rec, lq) = model.record_log_probs(&mut tape, &batch.configs, beta)?;
    let floc: Vec<f64> = tape
        .value(lq)
        .data()
        .iter()
        .zip(fs)
        .map(|(l, &f)| local_free_energy(f, l.as_f64(), beta))
        .collect();
    let (free_energy, var_f_loc) = weighted_moments(&floc, &batch.weights);
    let total = batch.total_weight() as f64;
    let coef: Vec<S> = floc
        .iter()
        .zip(&batch.weights)
        .map(|(v, &w)| S::lit(w as f64 * (v - free_energy) / total))
        .collect();
    let loss = tape.dot_const(lq, &coef)?;
    let mut g = tape.backward(loss)?;
    let (argmin, min_f) = fs
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("nonempty batch");
    let mean_f = fs.iter().zip(&batch.weights).map(|(f, &w)| w as f64 * f).sum::<f64>() / total;
    Ok(FreeEnergyEstimate {
        grads: rec.params.gradients(&mut g),
        mean_f,
        free_energy,
        var_f_loc,
        min_f,
        argmin,
    })
}

/// A recorded partial-KL loss.
pub struct PartialKl {
    pub loss: Var,
    pub params: ParamVars,
    /// Loss value, clamped at zero against rounding.
    pub value: f64,
    /// Distinct configurations used.
    pub used: usize,
}

/// Drops repeated configurations, keeping the first.
pub fn dedup_entries(entries: &[(BitString, f64)]) -> Vec<(BitString, f64)> {
    let mut seen = HashSet::new();
    entries.iter().filter(|(x, _)| seen.insert(x)).cloned().collect()
}

/// `D_KL(p̃ ‖ q̃)` between the Boltzmann and model distributions restricted
/// to the given configurations, both renormalized by log-sum-exp. Only
/// the `q̃` path is differentiable.
pub fn record_partial_kl<S: Scalar>(
    model: &GnaModel<S>,
    tape: &mut Tape<S>,
    entries: &[(BitString, f64)],
    beta: f64,
) -> Result<PartialKl, TrainError> {
    let entries = dedup_entries(entries);
    if entries.len() < 2 {
        return Err(TrainError::TooFewEntries(entries.len()));
    }
    if let Some((x, f)) = entries.iter().find(|(_, f)| !f.is_finite()) {
        return Err(TrainError::NonFinite { x: x.clone(), f: *f });
    }
    let m = entries.len();
    let neg: Vec<f64> = entries.iter().map(|(_, f)| -beta * f).collect();
    let lz = log_sum_exp(&neg);
    let log_p: Vec<f64> = neg.iter().map(|v| v - lz).collect();
    let p: Vec<f64> = log_p.iter().map(|v| v.exp()).collect();
    let neg_entropy: f64 = p.iter().zip(&log_p).map(|(a, b)| a * b).sum();

    let xs: Vec<BitString> = entries.into_iter().map(|(x, _)| x).collect();
    let (rec, lq) = model.record_log_probs(tape, &xs, beta)?;
    let row = tape.reshape(lq, &[1, m])?;
    let log_q = tape.log_softmax(row);
    let log_q = tape.reshape(log_q, &[m])?;
    let weights: Vec<S> = p.iter().map(|&v| S::lit(-v)).collect();
    let cross = tape.dot_const(log_q, &weights)?;
    let loss = tape.add_scalar(cross, S::lit(neg_entropy));
    let value = tape.value(loss).item().expect("scalar loss").as_f64().max(0.0);
    Ok(PartialKl {
        loss,
        params: rec.params,
        value,
        used: m,
    })
}

/// Value of the partial-KL loss without gradients.
pub fn partial_kl_loss<S: Scalar>(
    model: &GnaModel<S>,
    entries: &[(BitString, f64)],
    beta: f64,
) -> Result<f64, TrainError> {
    let mut tape = Tape::new();
    Ok(record_partial_kl(model, &mut tape, entries, beta)?.value)
}

/// Partial-KL loss and its gradient.
pub fn partial_kl_gradient<S: Scalar>(
    model: &GnaModel<S>,
    entries: &[(BitString, f64)],
    beta: f64,
) -> Result<(f64, Vec<Tensor<S>>), TrainError> {
    let mut tape = Tape::new();
    let rec = record_partial_kl(model, &mut tape, entries, beta)?;
    let mut g = tape.backward(rec.loss)?;
    Ok((rec.value, rec.params.gradients(&mut g)))
}
