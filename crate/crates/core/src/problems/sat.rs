use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::{Objective, ProblemError};
use crate::bits::BitString;

pub const BARTHEL_ALPHA: f64 = 4.3;
/// Probability that a clause has all three literals satisfied by the plant.
pub const BARTHEL_P0: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Literal {
    pub var: usize,
    pub negated: bool,
}

impl Literal {
    pub fn holds(self, x: &BitString) -> bool {
        x.get(self.var) != self.negated
    }

    /// 1-based signed DIMACS form.
    pub fn to_dimacs(self) -> i64 {
        let v = self.var as i64 + 1;
        if self.negated {
            -v
        } else {
            v
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SatClause(pub [Literal; 3]);

impl SatClause {
    pub fn satisfied(&self, x: &BitString) -> bool {
        self.0.iter().any(|l| l.holds(x))
    }

    pub fn vars(&self) -> [usize; 3] {
        self.0.map(|l| l.var)
    }
}

/// Planted 3-SAT whose clause statistics give zero mean local field.
///
/// Each clause picks three distinct variables and a sign pattern with `j`
/// literals violated by the plant, `j ∈ {0,1,2}`. Each specific pattern has
/// probability `p₀`, `p₁ = (1 − 4p₀)/6` or `p₂ = (1 + 2p₀)/6`, so
/// `E[#satisfied − #violated] = 3p₀ + 3p₁ − 3p₂ = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Barthel3Sat {
    pub n: usize,
    pub clauses: Vec<SatClause>,
    pub planted: Option<BitString>,
}

impl Barthel3Sat {
    pub fn generate(n: usize, seed: u64) -> Self {
        Self::generate_with(n, (BARTHEL_ALPHA * n as f64).round() as usize, BARTHEL_P0, seed)
    }

    pub fn generate_with(n: usize, m: usize, p0: f64, seed: u64) -> Self {
        assert!(n >= 3);
        assert!((0.0..=0.25).contains(&p0), "p0 must lie in [0, 1/4]");
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let planted = BitString::random(n, &mut rng);
        // Class probabilities for j = 0, 1, 2 violated literals.
        let class = [p0, (1.0 - 4.0 * p0) / 2.0, (1.0 + 2.0 * p0) / 2.0];
        let clauses = (0..m)
            .map(|_| {
                let vars = sample(&mut rng, n, 3).into_vec();
                let u: f64 = rng.random();
                let j = if u < class[0] {
                    0
                } else if u < class[0] + class[1] {
                    1
                } else {
                    2
                };
                let violated = sample(&mut rng, 3, j).into_vec();
                let lits = [0, 1, 2].map(|k| {
                    let var = vars[k];
                    // A literal holds under the plant iff negated != plant bit.
                    let holds = !violated.contains(&k);
                    Literal {
                        var,
                        negated: planted.get(var) != holds,
                    }
                });
                SatClause(lits)
            })
            .collect();
        Self {
            n,
            clauses,
            planted: Some(planted),
        }
    }

    pub fn unsatisfied(&self, x: &BitString) -> usize {
        self.clauses.iter().filter(|c| !c.satisfied(x)).count()
    }

    /// Number of clauses each variable occurs in.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for c in &self.clauses {
            for v in c.vars() {
                deg[v] += 1;
            }
        }
        deg
    }

    /// DIMACS CNF with the plant recorded in a comment line.
    pub fn to_dimacs(&self, seed: Option<u64>) -> String {
        let mut out = String::from("c barthel 3-sat\n");
        if let Some(seed) = seed {
            writeln!(out, "c seed {seed}").unwrap();
        }
        if let Some(p) = &self.planted {
            writeln!(out, "c planted {p}").unwrap();
        }
        writeln!(out, "p cnf {} {}", self.n, self.clauses.len()).unwrap();
        for c in &self.clauses {
            let [a, b, d] = c.0.map(Literal::to_dimacs);
            writeln!(out, "{a} {b} {d} 0").unwrap();
        }
        out
    }

    /// Parses DIMACS CNF whose clauses all have three distinct variables.
    /// Returns the instance and the seed comment, if any.
    pub fn from_dimacs(text: &str) -> Result<(Self, Option<u64>), ProblemError> {
        let bad = |msg: String| ProblemError::Parse(format!("dimacs: {msg}"));
        let mut header: Option<(usize, usize)> = None;
        let mut planted = None;
        let mut seed = None;
        let mut literals: Vec<i64> = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if let Some(rest) = line.strip_prefix('c') {
                let mut words = rest.split_whitespace();
                match (words.next(), words.next()) {
                    (Some("planted"), Some(bits)) => {
                        planted = Some(bits.parse::<BitString>().map_err(|e| bad(e.to_string()))?)
                    }
                    (Some("seed"), Some(s)) => seed = Some(s.parse().map_err(|_| bad(format!("seed {s:?}")))?),
                    _ => {}
                }
                continue;
            }
            if line.is_empty() || line.starts_with('%') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("p") {
                let w: Vec<&str> = rest.split_whitespace().collect();
                if w.len() != 3 || w[0] != "cnf" {
                    return Err(bad(format!("malformed header {line:?}")));
                }
                let n = w[1].parse().map_err(|_| bad(format!("variable count {:?}", w[1])))?;
                let m = w[2].parse().map_err(|_| bad(format!("clause count {:?}", w[2])))?;
                header = Some((n, m));
                continue;
            }
            for tok in line.split_whitespace() {
                literals.push(tok.parse().map_err(|_| bad(format!("literal {tok:?}")))?);
            }
        }
        let (n, m) = header.ok_or_else(|| bad("missing header".into()))?;
        let mut clauses = Vec::with_capacity(m);
        let mut current = Vec::with_capacity(3);
        for lit in literals {
            if lit == 0 {
                if current.len() != 3 {
                    return Err(bad(format!("clause {} has {} literals", clauses.len() + 1, current.len())));
                }
                let lits: [Literal; 3] = [current[0], current[1], current[2]];
                if lits[0].var == lits[1].var || lits[0].var == lits[2].var || lits[1].var == lits[2].var {
                    return Err(bad(format!("clause {} repeats a variable", clauses.len() + 1)));
                }
                clauses.push(SatClause(lits));
                current.clear();
                continue;
            }
            let var = lit.unsigned_abs() as usize;
            if var > n {
                return Err(bad(format!("variable {var} exceeds {n}")));
            }
            current.push(Literal {
                var: var - 1,
                negated: lit < 0,
            });
        }
        if !current.is_empty() {
            return Err(bad("unterminated final clause".into()));
        }
        if clauses.len() != m {
            return Err(bad(format!("header declares {m} clauses, found {}", clauses.len())));
        }
        if planted.as_ref().is_some_and(|p: &BitString| p.len() != n) {
            return Err(bad("planted assignment has the wrong length".into()));
        }
        Ok((Self { n, clauses, planted }, seed))
    }
}

impl Objective for Barthel3Sat {
    fn n_vars(&self) -> usize {
        self.n
    }

    fn evaluate(&self, x: &BitString) -> f64 {
        assert_eq!(x.len(), self.n);
        self.unsatisfied(x) as f64
    }
}
