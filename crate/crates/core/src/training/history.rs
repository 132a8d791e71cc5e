use std::io::{Read, Write};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bits::BitString;

/// One query (limited regime, SA) or one training step (unlimited regime).
#[derive(Clone, Debug, PartialEq)]
pub struct QueryRecord {
    /// 1-based query or step index.
    pub m: u64,
    /// The queried configuration (the batch minimizer for a step). Not
    /// stored in CSV.
    pub x: Option<BitString>,
    pub f: f64,
    pub best_f: f64,
    pub beta: f64,
    pub elapsed_s: f64,
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    m: u64,
    f: f64,
    best_f: f64,
    beta: f64,
    elapsed_s: f64,
}

/// Per-query trace of a run. `best_f` is nonincreasing in `m`.
#[derive(Clone, Debug)]
pub struct RunHistory {
    pub records: Vec<QueryRecord>,
    pub best_x: Option<BitString>,
    /// Objective evaluations spent, including repeats.
    pub queries: u64,
    /// Unlimited regime: the step at which `f = 0` (or the target) was first seen.
    pub steps_to_solve: Option<u64>,
    start: Instant,
}

impl Default for RunHistory {
    fn default() -> Self {
        Self::new()
    }
}

impl PartialEq for RunHistory {
    /// Ignores wall-clock fields.
    fn eq(&self, other: &Self) -> bool {
        self.best_x == other.best_x
            && self.queries == other.queries
            && self.steps_to_solve == other.steps_to_solve
            && self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| {
                a.m == b.m && a.x == b.x && a.f.to_bits() == b.f.to_bits() && a.best_f.to_bits() == b.best_f.to_bits()
                    && a.beta.to_bits() == b.beta.to_bits()
            })
    }
}

impl RunHistory {
    pub fn new() -> Self {
        Self {
            records: Vec::new(),
            best_x: None,
            queries: 0,
            steps_to_solve: None,
            start: Instant::now(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn best_f(&self) -> Option<f64> {
        self.records.last().map(|r| r.best_f)
    }

    /// Appends record `m = len + 1`.
    pub fn push(&mut self, x: BitString, f: f64, beta: f64) {
        let best_f = match self.best_f() {
            Some(b) if b <= f => b,
            _ => {
                self.best_x = Some(x.clone());
                f
            }
        };
        self.records.push(QueryRecord {
            m: self.records.len() as u64 + 1,
            x: Some(x),
            f,
            best_f,
            beta,
            elapsed_s: self.start.elapsed().as_secs_f64(),
        });
    }

    pub fn best_curve(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.best_f).collect()
    }

    /// CSV with columns `m, f, best_f, beta, elapsed_s`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(CsvRow {
                m: r.m,
                f: r.f,
                best_f: r.best_f,
                beta: r.beta,
                elapsed_s: r.elapsed_s,
            })?;
        }
        if self.records.is_empty() {
            w.write_record(["m", "f", "best_f", "beta", "elapsed_s"])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    /// Reads a history written by [`RunHistory::write_csv`]. Configurations
    /// are not stored there, so `x` and `best_x` come back empty and
    /// `queries` equals the record count.
    pub fn read_csv<R: Read>(input: R) -> Result<Self, csv::Error> {
        let mut h = Self::new();
        for row in csv::Reader::from_reader(input).deserialize() {
            let row: CsvRow = row?;
            h.records.push(QueryRecord {
                m: row.m,
                x: None,
                f: row.f,
                best_f: row.best_f,
                beta: row.beta,
                elapsed_s: row.elapsed_s,
            });
        }
        h.queries = h.records.len() as u64;
        Ok(h)
    }
}
