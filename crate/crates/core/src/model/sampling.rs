use rand::Rng;
use rand_distr::{Binomial, Distribution};

use super::forward::check_beta;
use super::infer::Decoder;
use super::{GnaModel, ModelError};
use crate::bits::BitString;
use crate::nn::Scalar;

/// Streams decoded together when drawing plain samples.
const SAMPLE_CHUNK: usize = 4096;

/// Distinct configurations with occurrence counts standing in for a much
/// larger i.i.d. batch.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedSampleBatch<S> {
    pub configs: Vec<BitString>,
    pub weights: Vec<u64>,
    /// `log q(x | β)` of each configuration as accumulated while sampling.
    pub log_q: Vec<S>,
}

/// A sample with one dense row-major attention matrix per layer.
pub type AttentionSample<S> = (BitString, Vec<Vec<S>>);

impl<S: Scalar> WeightedSampleBatch<S> {
    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    /// Effective batch size.
    pub fn total_weight(&self) -> u64 {
        self.weights.iter().sum()
    }

    /// Weighted mean of a statistic over the effective batch.
    pub fn weighted_mean(&self, mut stat: impl FnMut(&BitString) -> f64) -> f64 {
        let total = self.total_weight() as f64;
        self.configs
            .iter()
            .zip(&self.weights)
            .map(|(x, &w)| w as f64 * stat(x))
            .sum::<f64>()
            / total
    }
}

/// `(P(bit = 1), log P(0), log P(1))` from a pair of logits.
fn bit_probs<S: Scalar>(logits: [S; 2]) -> (f64, f64, f64) {
    let (l0, l1) = (logits[0].as_f64(), logits[1].as_f64());
    let m = l0.max(l1);
    let lse = m + ((l0 - m).exp() + (l1 - m).exp()).ln();
    let (lp0, lp1) = (l0 - lse, l1 - lse);
    (lp1.exp(), lp0, lp1)
}

impl<S: Scalar> GnaModel<S> {
    /// `count` i.i.d. configurations drawn bit by bit.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        beta: f64,
        count: usize,
        rng: &mut R,
    ) -> Result<Vec<BitString>, ModelError> {
        Ok(self
            .sample_inner(beta, count, false, rng)?
            .into_iter()
            .map(|(x, _)| x)
            .collect())
    }

    /// Like [`GnaModel::sample`], also returning the attention probabilities
    /// seen at every generation step, per layer, as dense `[n, n]` row-major
    /// matrices (row `t` is the query at input position `t`).
    pub fn sample_with_attention<R: Rng + ?Sized>(
        &self,
        beta: f64,
        count: usize,
        rng: &mut R,
    ) -> Result<Vec<AttentionSample<S>>, ModelError> {
        self.sample_inner(beta, count, true, rng)
    }

    fn sample_inner<R: Rng + ?Sized>(
        &self,
        beta: f64,
        count: usize,
        capture: bool,
        rng: &mut R,
    ) -> Result<Vec<AttentionSample<S>>, ModelError> {
        check_beta(beta)?;
        let n = self.config.n_vars;
        let layers = self.config.n_layers;
        let mut out = Vec::with_capacity(count);
        let mut remaining = count;
        while remaining > 0 {
            let streams = remaining.min(SAMPLE_CHUNK);
            remaining -= streams;
            let mut dec = Decoder::new(self, streams, beta, capture);
            let mut bits = vec![vec![0u8; n]; streams];
            let mut att: Vec<Vec<Vec<S>>> = if capture {
                vec![vec![vec![S::zero(); n * n]; layers]; streams]
            } else {
                Vec::new()
            };
            let mut tokens = vec![0u8; streams];
            for t in 0..n {
                let logits = dec.step(&tokens);
                if capture {
                    for (l, rows) in dec.last_attention().iter().enumerate() {
                        for s in 0..streams {
                            att[s][l][t * n..t * n + t + 1]
                                .copy_from_slice(&rows[s * (t + 1)..(s + 1) * (t + 1)]);
                        }
                    }
                }
                for s in 0..streams {
                    let (p1, _, _) = bit_probs(logits[s]);
                    let bit = u8::from(rng.random::<f64>() < p1);
                    bits[s][t] = bit;
                    tokens[s] = bit;
                }
            }
            let mut att = att.into_iter();
            out.extend(
                bits.into_iter()
                    .map(|b| (BitString::from_bits(b), att.next().unwrap_or_default())),
            );
        }
        Ok(out)
    }

    /// Branching sampler: prefixes grow one position at a time, each distinct
    /// prefix carrying how many of the `n_batch` virtual samples reached it
    /// (binomial splits). Once the number of distinct prefixes exceeds
    /// `n_unique`, branching stops and every prefix is completed by a single
    /// autoregressive continuation that inherits its whole count.
    pub fn sample_unique_reweighted<R: Rng + ?Sized>(
        &self,
        beta: f64,
        n_batch: u64,
        n_unique: usize,
        rng: &mut R,
    ) -> Result<WeightedSampleBatch<S>, ModelError> {
        check_beta(beta)?;
        if n_unique == 0 || n_batch < n_unique as u64 {
            return Err(ModelError::Config(format!(
                "need n_batch >= n_unique >= 1, got n_batch={n_batch}, n_unique={n_unique}"
            )));
        }
        let n = self.config.n_vars;
        let mut prefixes: Vec<Vec<u8>> = vec![Vec::with_capacity(n)];
        let mut counts: Vec<u64> = vec![n_batch];
        let mut log_q: Vec<f64> = vec![0.0];
        let mut frozen = false;
        let mut dec = Decoder::new(self, 1, beta, false);
        let mut tokens = vec![0u8];

        for _t in 0..n {
            let logits = dec.step(&tokens);
            if frozen {
                for (s, l) in logits.into_iter().enumerate() {
                    let (p1, lp0, lp1) = bit_probs(l);
                    let bit = u8::from(rng.random::<f64>() < p1);
                    prefixes[s].push(bit);
                    log_q[s] += if bit == 1 { lp1 } else { lp0 };
                    tokens[s] = bit;
                }
                continue;
            }
            let mut next_prefixes = Vec::with_capacity(prefixes.len() * 2);
            let mut next_counts = Vec::with_capacity(prefixes.len() * 2);
            let mut next_logq = Vec::with_capacity(prefixes.len() * 2);
            let mut parents = Vec::with_capacity(prefixes.len() * 2);
            for (s, l) in logits.into_iter().enumerate() {
                let (p1, lp0, lp1) = bit_probs(l);
                let c = counts[s];
                let ones = Binomial::new(c, p1.clamp(0.0, 1.0))
                    .expect("probability in [0, 1]")
                    .sample(rng);
                for (bit, k, lp) in [(0u8, c - ones, lp0), (1u8, ones, lp1)] {
                    if k == 0 {
                        continue;
                    }
                    let mut child = prefixes[s].clone();
                    child.push(bit);
                    next_prefixes.push(child);
                    next_counts.push(k);
                    next_logq.push(log_q[s] + lp);
                    parents.push(s);
                }
            }
            dec.select(&parents);
            tokens = next_prefixes.iter().map(|p| *p.last().unwrap()).collect();
            prefixes = next_prefixes;
            counts = next_counts;
            log_q = next_logq;
            if prefixes.len() > n_unique {
                frozen = true;
            }
        }
        Ok(WeightedSampleBatch {
            configs: prefixes.into_iter().map(BitString::from_bits).collect(),
            weights: counts,
            log_q: log_q.into_iter().map(S::lit).collect(),
        })
    }
}
