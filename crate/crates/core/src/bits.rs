use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A candidate solution `x ∈ {0,1}ⁿ`, one byte (0 or 1) per variable.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct BitString(Vec<u8>);

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid bit character {0:?}; expected '0' or '1'")]
pub struct ParseBitsError(char);

impl BitString {
    /// Builds from 0/1 bytes; any nonzero byte counts as 1.
    pub fn from_bits(bits: impl IntoIterator<Item = u8>) -> Self {
        Self(bits.into_iter().map(|b| u8::from(b != 0)).collect())
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0; n])
    }

    pub fn ones(n: usize) -> Self {
        Self(vec![1; n])
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        Self((0..n).map(|_| u8::from(rng.random::<bool>())).collect())
    }

    /// Configuration number `index` of `n` variables; variable `i` is bit `i`
    /// of `index`.
    pub fn from_index(index: u64, n: usize) -> Self {
        debug_assert!(n <= 64);
        Self((0..n).map(|i| ((index >> i) & 1) as u8).collect())
    }

    /// Inverse of [`BitString::from_index`]; `None` for more than 64 bits.
    pub fn to_index(&self) -> Option<u64> {
        (self.0.len() <= 64).then(|| {
            self.0
                .iter()
                .enumerate()
                .fold(0u64, |acc, (i, &b)| acc | (u64::from(b) << i))
        })
    }

    /// Every configuration of `n` variables in index order.
    pub fn enumerate(n: usize) -> impl Iterator<Item = BitString> {
        assert!(n < 64, "enumeration of {n} variables is not supported");
        (0..1u64 << n).map(move |i| BitString::from_index(i, n))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i] != 0
    }

    pub fn flip(&mut self, i: usize) {
        self.0[i] ^= 1;
    }

    pub fn flipped(&self, i: usize) -> Self {
        let mut out = self.clone();
        out.flip(i);
        out
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&b| b != 0).count()
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b != 0 { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString({self})")
    }
}

impl FromStr for BitString {
    type Err = ParseBitsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(ParseBitsError(other)),
            })
            .collect::<Result<Vec<u8>, _>>()
            .map(BitString)
    }
}

impl TryFrom<String> for BitString {
    type Error = ParseBitsError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<BitString> for String {
    fn from(b: BitString) -> String {
        b.to_string()
    }
}
