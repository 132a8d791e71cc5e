use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::Objective;
use crate::bits::BitString;
use crate::nn::log_sum_exp;

pub(crate) const SIDE: usize = 4;
pub(crate) const N_SPINS: usize = SIDE * SIDE;
pub(crate) const N_EDGES: usize = 2 * SIDE * (SIDE - 1);
const N_STATES: usize = 1 << N_SPINS;

pub const ISING_LAMBDA: f64 = 0.01;
const J_MIN: f64 = 0.05;
const J_MAX: f64 = 5.0;

/// Edges of the open 4×4 grid: horizontal bonds row-major, then vertical.
pub fn grid_edges() -> Vec<(usize, usize)> {
    let mut edges = Vec::with_capacity(N_EDGES);
    for r in 0..SIDE {
        for c in 0..SIDE - 1 {
            edges.push((r * SIDE + c, r * SIDE + c + 1));
        }
    }
    for r in 0..SIDE - 1 {
        for c in 0..SIDE {
            edges.push((r * SIDE + c, (r + 1) * SIDE + c));
        }
    }
    edges
}

/// Serialized form; the enumeration caches are rebuilt on load.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub(crate) struct IsingSpec {
    pub couplings: Vec<f64>,
    pub lambda: f64,
}

/// Sparsify a 4×4 spin glass: `x_e = 1` keeps coupling `e`.
/// `f(x) = D_KL(p ‖ q_x) + λ‖x‖₁`, computed exactly over all 2¹⁶ spin states.
#[derive(Clone, Debug)]
pub struct IsingSparsification {
    pub couplings: Vec<f64>,
    pub lambda: f64,
    edges: Vec<(usize, usize)>,
    /// Bit `e` set iff the two spins of edge `e` agree in that state.
    agree: Vec<u32>,
    log_z_p: f64,
    /// `⟨z_i z_j⟩_p` per edge.
    moments: Vec<f64>,
    probs: Vec<f64>,
}

impl PartialEq for IsingSparsification {
    fn eq(&self, other: &Self) -> bool {
        self.couplings == other.couplings && self.lambda == other.lambda
    }
}

impl IsingSparsification {
    pub fn generate(seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let couplings = (0..N_EDGES)
            .map(|_| {
                let mag = rng.random_range(J_MIN..=J_MAX);
                if rng.random::<bool>() {
                    mag
                } else {
                    -mag
                }
            })
            .collect();
        Self::new(couplings, ISING_LAMBDA)
    }

    pub fn new(couplings: Vec<f64>, lambda: f64) -> Self {
        assert_eq!(couplings.len(), N_EDGES);
        let edges = grid_edges();
        let agree: Vec<u32> = (0..N_STATES)
            .map(|z| {
                edges.iter().enumerate().fold(0u32, |m, (e, &(a, b))| {
                    let same = ((z >> a) ^ (z >> b)) & 1 == 0;
                    m | (u32::from(same) << e)
                })
            })
            .collect();
        let mut inst = Self {
            couplings,
            lambda,
            edges,
            agree,
            log_z_p: 0.0,
            moments: vec![0.0; N_EDGES],
            probs: Vec::new(),
        };
        let full = (1u32 << N_EDGES) - 1;
        let energies = inst.energies(full);
        inst.log_z_p = log_sum_exp(&energies);
        inst.probs = energies.iter().map(|e| (e - inst.log_z_p).exp()).collect();
        for (z, &p) in inst.probs.iter().enumerate() {
            let mask = inst.agree[z];
            for (e, m) in inst.moments.iter_mut().enumerate() {
                *m += if mask >> e & 1 == 1 { p } else { -p };
            }
        }
        inst
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Exact `p(z)` over all spin states; state bit `k` set means `z_k = +1`.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `Σ_e J_e z_a z_b` over kept edges for every spin state.
    fn energies(&self, kept: u32) -> Vec<f64> {
        let kept_edges: Vec<(u32, f64)> = (0..N_EDGES)
            .filter(|e| kept >> e & 1 == 1)
            .map(|e| (1u32 << e, self.couplings[e]))
            .collect();
        self.agree
            .iter()
            .map(|&mask| {
                kept_edges
                    .iter()
                    .map(|&(bit, j)| if mask & bit != 0 { j } else { -j })
                    .sum()
            })
            .collect()
    }

    /// `D_KL(p ‖ q_x)`, clamped at zero against rounding.
    pub fn kl(&self, x: &BitString) -> f64 {
        assert_eq!(x.len(), N_EDGES);
        let kept = x
            .bits()
            .iter()
            .enumerate()
            .fold(0u32, |m, (e, &b)| m | (u32::from(b) << e));
        let removed: f64 = (0..N_EDGES)
            .filter(|e| kept >> e & 1 == 0)
            .map(|e| self.couplings[e] * self.moments[e])
            .sum();
        let log_z_q = log_sum_exp(&self.energies(kept));
        (removed - self.log_z_p + log_z_q).max(0.0)
    }
}

impl Objective for IsingSparsification {
    fn n_vars(&self) -> usize {
        N_EDGES
    }

    fn evaluate(&self, x: &BitString) -> f64 {
        self.kl(x) + self.lambda * x.count_ones() as f64
    }
}

impl From<IsingSpec> for IsingSparsification {
    fn from(s: IsingSpec) -> Self {
        Self::new(s.couplings, s.lambda)
    }
}

impl From<&IsingSparsification> for IsingSpec {
    fn from(s: &IsingSparsification) -> Self {
        Self {
            couplings: s.couplings.clone(),
            lambda: s.lambda,
        }
    }
}
