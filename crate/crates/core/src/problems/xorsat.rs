use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::{ProblemError, Objective};
use crate::bits::BitString;

/// Configuration-model draws before generation gives up.
pub const MAX_ATTEMPTS: usize = 1000;

/// `x_i ⊕ x_j ⊕ x_k = parity`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct XorClause {
    pub vars: [usize; 3],
    pub parity: u8,
}

impl XorClause {
    pub fn satisfied(&self, x: &BitString) -> bool {
        let [i, j, k] = self.vars;
        (x.bits()[i] ^ x.bits()[j] ^ x.bits()[k]) == self.parity
    }
}

/// 3-regular 3-XORSAT: `n` clauses, every variable in exactly three.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Xorsat3Reg {
    pub n: usize,
    pub clauses: Vec<XorClause>,
    pub planted: BitString,
}

impl Xorsat3Reg {
    /// Attempt `a` draws from ChaCha20 stream `a` of `seed`, rejecting
    /// matchings that put a variable twice in one clause.
    pub fn generate(n: usize, seed: u64) -> Result<Self, ProblemError> {
        assert!(n >= 3);
        for attempt in 0..MAX_ATTEMPTS {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(attempt as u64);
            let planted = BitString::random(n, &mut rng);
            let mut stubs: Vec<usize> = (0..n).flat_map(|v| [v; 3]).collect();
            stubs.shuffle(&mut rng);
            let triples: Vec<[usize; 3]> = stubs.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
            if triples.iter().any(|[a, b, c]| a == b || a == c || b == c) {
                continue;
            }
            let clauses = triples
                .into_iter()
                .map(|vars| XorClause {
                    vars,
                    parity: vars.iter().fold(0, |p, &v| p ^ planted.bits()[v]),
                })
                .collect();
            return Ok(Self { n, clauses, planted });
        }
        Err(ProblemError::GenerationFailed(MAX_ATTEMPTS))
    }

    pub fn unsatisfied(&self, x: &BitString) -> usize {
        self.clauses.iter().filter(|c| !c.satisfied(x)).count()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for c in &self.clauses {
            for v in c.vars {
                deg[v] += 1;
            }
        }
        deg
    }
}

impl Objective for Xorsat3Reg {
    fn n_vars(&self) -> usize {
        self.n
    }

    fn evaluate(&self, x: &BitString) -> f64 {
        assert_eq!(x.len(), self.n);
        self.unsatisfied(x) as f64
    }
}
