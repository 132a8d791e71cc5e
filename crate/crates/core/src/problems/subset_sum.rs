use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::{Objective, ProblemError};
use crate::bits::BitString;

/// Subset sum at the hardness peak `L = n`: `a_i ~ U[1, 2ⁿ]`, target from a
/// planted subset. `f(x) = ln(|Σ a_i x_i − T| + 1)` with exact integer sums.
#[derive(Clone, Debug, PartialEq)]
pub struct SubsetSum {
    pub n: usize,
    pub values: Vec<BigUint>,
    pub target: BigUint,
    pub planted: BitString,
}

/// Uniform integer in `[1, 2^bits]` assembled from random bits.
fn uniform_pow2<R: Rng + ?Sized>(bits: usize, rng: &mut R) -> BigUint {
    let mut words: Vec<u32> = (0..bits.div_ceil(32)).map(|_| rng.random()).collect();
    if !bits.is_multiple_of(32) {
        if let Some(top) = words.last_mut() {
            *top &= (1u32 << (bits % 32)) - 1;
        }
    }
    BigUint::new(words) + 1u32
}

impl SubsetSum {
    pub fn generate(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let values: Vec<BigUint> = (0..n).map(|_| uniform_pow2(n, &mut rng)).collect();
        let planted = BitString::random(n, &mut rng);
        let target = Self::sum_of(&values, &planted);
        Self {
            n,
            values,
            target,
            planted,
        }
    }

    fn sum_of(values: &[BigUint], x: &BitString) -> BigUint {
        values
            .iter()
            .zip(x.bits())
            .filter(|(_, &b)| b == 1)
            .fold(BigUint::zero(), |acc, (a, _)| acc + a)
    }

    /// `|Σ a_i x_i − T|`.
    pub fn difference(&self, x: &BitString) -> BigUint {
        let s = Self::sum_of(&self.values, x);
        if s >= self.target {
            s - &self.target
        } else {
            &self.target - s
        }
    }
}

impl Objective for SubsetSum {
    fn n_vars(&self) -> usize {
        self.n
    }

    fn evaluate(&self, x: &BitString) -> f64 {
        assert_eq!(x.len(), self.n);
        let d = self.difference(x) + BigUint::one();
        d.to_f64().expect("finite for any practical n").ln()
    }
}

/// Decimal-string form, readable and exact at any width.
#[derive(Serialize, Deserialize)]
pub(crate) struct SubsetSumSpec {
    pub values: Vec<String>,
    pub target: String,
    pub planted: BitString,
}

impl From<&SubsetSum> for SubsetSumSpec {
    fn from(s: &SubsetSum) -> Self {
        Self {
            values: s.values.iter().map(|v| v.to_str_radix(10)).collect(),
            target: s.target.to_str_radix(10),
            planted: s.planted.clone(),
        }
    }
}

impl TryFrom<SubsetSumSpec> for SubsetSum {
    type Error = ProblemError;

    fn try_from(s: SubsetSumSpec) -> Result<Self, ProblemError> {
        let parse = |t: &str| {
            BigUint::parse_bytes(t.as_bytes(), 10).ok_or_else(|| ProblemError::Parse(format!("integer {t:?}")))
        };
        let values = s.values.iter().map(|v| parse(v)).collect::<Result<Vec<_>, _>>()?;
        if values.len() != s.planted.len() {
            return Err(ProblemError::Parse("planted length differs from set size".into()));
        }
        Ok(Self {
            n: values.len(),
            values,
            target: parse(&s.target)?,
            planted: s.planted,
        })
    }
}
