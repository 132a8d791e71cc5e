use std::collections::HashSet;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BufferEntry {
    pub x: BitString,
    pub f: f64,
    pub split: Split,
}

/// Every past evaluation, tagged train or validation. Entries are never
/// modified after insertion and the best entry is always in train.
#[derive(Clone, Debug, Default)]
pub struct ReplayBuffer {
    entries: Vec<BufferEntry>,
    best: Option<usize>,
    seen: HashSet<BitString>,
}

impl ReplayBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Initial evaluations: `n_validation` of them, chosen uniformly among
    /// all but the best, go to validation; the rest go to train.
    pub fn seed_initial<R: Rng + ?Sized>(
        initial: Vec<(BitString, f64)>,
        n_validation: usize,
        rng: &mut R,
    ) -> Self {
        let mut buf = Self::new();
        let best = initial
            .iter()
            .enumerate()
            .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
            .map(|(i, _)| i);
        let others: Vec<usize> = (0..initial.len()).filter(|&i| Some(i) != best).collect();
        let k = n_validation.min(others.len());
        let val: HashSet<usize> = sample(rng, others.len(), k).into_iter().map(|j| others[j]).collect();
        for (i, (x, f)) in initial.into_iter().enumerate() {
            let split = if val.contains(&i) { Split::Validation } else { Split::Train };
            buf.push(x, f, split);
        }
        buf
    }

    /// Improving entries always go to train; others with probability
    /// `p_train`.
    pub fn insert<R: Rng + ?Sized>(&mut self, x: BitString, f: f64, p_train: f64, rng: &mut R) -> Split {
        let improving = self.best_f().is_none_or(|b| f < b);
        let split = if improving || rng.random::<f64>() < p_train {
            Split::Train
        } else {
            Split::Validation
        };
        self.push(x, f, split);
        split
    }

    /// Appends with an explicit split. The best entry must stay in train,
    /// so a new best is forced there.
    pub fn push(&mut self, x: BitString, f: f64, split: Split) {
        let improving = self.best_f().is_none_or(|b| f < b);
        let split = if improving { Split::Train } else { split };
        self.seen.insert(x.clone());
        self.entries.push(BufferEntry { x, f, split });
        if improving {
            self.best = Some(self.entries.len() - 1);
        }
    }

    pub fn entries(&self) -> &[BufferEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, x: &BitString) -> bool {
        self.seen.contains(x)
    }

    pub fn best(&self) -> Option<&BufferEntry> {
        self.best.map(|i| &self.entries[i])
    }

    pub fn best_f(&self) -> Option<f64> {
        self.best().map(|e| e.f)
    }

    /// `(x, f)` pairs of one split with repeated configurations dropped
    /// (first occurrence kept).
    pub fn split(&self, split: Split) -> Vec<(BitString, f64)> {
        let mut seen = HashSet::new();
        self.entries
            .iter()
            .filter(|e| e.split == split && seen.insert(&e.x))
            .map(|e| (e.x.clone(), e.f))
            .collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.entries.iter().filter(|e| e.split == split).count()
    }
}
