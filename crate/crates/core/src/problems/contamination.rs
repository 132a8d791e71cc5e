use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use super::Objective;
use crate::bits::BitString;

pub const REPLICAS: usize = 100;

/// Food-supply-chain prevention with frozen random dynamics.
///
/// Per replica `r`: `Z_i = Λ_i(1 − x_i)(1 − Z_{i−1}) + (1 − Γ_i x_i) Z_{i−1}` and
/// `f_r = Σ_i c x_i + ρ(Θ(Z_i − U) − ε)` with `Θ(0) = 1`; `f` is the replica mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContaminationControl {
    pub n: usize,
    pub cost: f64,
    pub threshold: f64,
    pub penalty: f64,
    pub epsilon: f64,
    /// `Z₀` per replica.
    pub z0: Vec<f64>,
    /// `Λ` per replica, `n` stages each.
    pub lambda: Vec<Vec<f64>>,
    /// `Γ` per replica, `n` stages each.
    pub gamma: Vec<Vec<f64>>,
}

impl ContaminationControl {
    pub fn generate(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let z0_dist = Beta::new(1.0, 30.0).expect("valid shape");
        let lambda_dist = Beta::new(1.0, 17.0 / 3.0).expect("valid shape");
        let gamma_dist = Beta::new(1.0, 3.0 / 7.0).expect("valid shape");
        let mut z0 = Vec::with_capacity(REPLICAS);
        let mut lambda = Vec::with_capacity(REPLICAS);
        let mut gamma = Vec::with_capacity(REPLICAS);
        for _ in 0..REPLICAS {
            z0.push(z0_dist.sample(&mut rng));
            lambda.push((0..n).map(|_| lambda_dist.sample(&mut rng)).collect());
            gamma.push((0..n).map(|_| gamma_dist.sample(&mut rng)).collect());
        }
        Self {
            n,
            cost: 1.0,
            threshold: 0.1,
            penalty: 1.0,
            epsilon: 0.05,
            z0,
            lambda,
            gamma,
        }
    }

    /// Contamination trajectory `Z_1..Z_n` of one replica.
    pub fn trajectory(&self, replica: usize, x: &BitString) -> Vec<f64> {
        let (lam, gam) = (&self.lambda[replica], &self.gamma[replica]);
        let mut z = self.z0[replica];
        (0..self.n)
            .map(|i| {
                let xi = f64::from(x.bits()[i]);
                z = lam[i] * (1.0 - xi) * (1.0 - z) + (1.0 - gam[i] * xi) * z;
                z
            })
            .collect()
    }
}

impl Objective for ContaminationControl {
    fn n_vars(&self) -> usize {
        self.n
    }

    fn evaluate(&self, x: &BitString) -> f64 {
        assert_eq!(x.len(), self.n);
        let prevention = self.cost * x.count_ones() as f64;
        let total: f64 = (0..self.z0.len())
            .map(|r| {
                let violations: f64 = self
                    .trajectory(r, x)
                    .into_iter()
                    .map(|z| self.penalty * (f64::from(u8::from(z >= self.threshold)) - self.epsilon))
                    .sum();
                prevention + violations
            })
            .sum();
        total / self.z0.len() as f64
    }
}
