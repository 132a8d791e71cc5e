//! Single-flip Metropolis simulated annealing under the same query
//! accounting as the learned solver: every proposal is one fresh
//! black-box evaluation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::problems::Objective;
use crate::training::RunHistory;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaConfig {
    /// Objective evaluations, the initial state included.
    pub budget: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl SaConfig {
    /// Geometric `β` from 0.057 to 69.7, the limited-regime window.
    pub fn limited(budget: usize) -> Self {
        Self {
            budget,
            beta_start: 0.057,
            beta_end: 69.7,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.budget == 0 {
            return Err("SA budget must be positive".into());
        }
        if !(self.beta_start > 0.0 && self.beta_start < self.beta_end && self.beta_end.is_finite()) {
            return Err(format!(
                "SA schedule needs 0 < beta_start < beta_end, got {} and {}",
                self.beta_start, self.beta_end
            ));
        }
        Ok(())
    }

    /// `β` at query `k` of the budget, `k ∈ [0, budget)`.
    pub fn beta_at(&self, k: usize) -> f64 {
        if self.budget <= 1 || k == 0 {
            return self.beta_start;
        }
        if k + 1 >= self.budget {
            return self.beta_end;
        }
        let r = k as f64 / (self.budget - 1) as f64;
        self.beta_start * (self.beta_end / self.beta_start).powf(r)
    }
}

/// Accept with probability `min(1, e^{−βΔf})`.
pub fn metropolis_accept<R: Rng + ?Sized>(delta: f64, beta: f64, rng: &mut R) -> bool {
    delta <= 0.0 || rng.random::<f64>() < (-beta * delta).exp()
}

/// Current state of a single-flip Metropolis chain.
#[derive(Clone, Debug)]
pub struct MetropolisChain {
    pub x: BitString,
    pub f: f64,
}

/// Outcome of one proposal.
#[derive(Clone, Debug)]
pub struct Proposal {
    pub x: BitString,
    pub f: f64,
    pub accepted: bool,
}

impl MetropolisChain {
    pub fn new(obj: &dyn Objective, x: BitString) -> Self {
        let f = obj.evaluate(&x);
        Self { x, f }
    }

    /// Flip one uniformly chosen bit, evaluate, accept or reject.
    pub fn step<R: Rng + ?Sized>(&mut self, obj: &dyn Objective, beta: f64, rng: &mut R) -> Proposal {
        let i = rng.random_range(0..self.x.len());
        let y = self.x.flipped(i);
        let fy = obj.evaluate(&y);
        let accepted = metropolis_accept(fy - self.f, beta, rng);
        if accepted {
            self.x = y.clone();
            self.f = fy;
        }
        Proposal { x: y, f: fy, accepted }
    }
}

/// Simulated annealing from a uniform random start. The start is the first
/// query; each later query is one proposal at the scheduled `β`.
pub fn sa_run<R: Rng + ?Sized>(obj: &dyn Objective, cfg: &SaConfig, rng: &mut R) -> RunHistory {
    let mut history = RunHistory::new();
    let x0 = BitString::random(obj.n_vars(), rng);
    let mut chain = MetropolisChain::new(obj, x0);
    history.queries += 1;
    history.push(chain.x.clone(), chain.f, cfg.beta_at(0));
    for k in 1..cfg.budget {
        let beta = cfg.beta_at(k);
        let p = chain.step(obj, beta, rng);
        history.queries += 1;
        history.push(p.x, p.f, beta);
    }
    history
}
