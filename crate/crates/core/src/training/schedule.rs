use rand::Rng;
use serde::{Deserialize, Serialize};

/// How training temperatures are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Train and query at `β_max`.
    Sa,
    /// Train at `β ~ U[β_min, β_max]` per step, query at `β_max`.
    Pt,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Sa => "sa",
            Variant::Pt => "pt",
        }
    }
}

/// Inverse-temperature window `[β_min, β_max(t)]`.
///
/// `log β_max` moves linearly from `log beta_start` to `log beta_upper` as
/// `progress` goes from 0 to `ramp_length`, then stays at `beta_upper`.
/// Progress is a budget fraction in the limited regime and a step count in
/// the unlimited one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub beta_min: f64,
    pub beta_upper: f64,
    pub beta_start: f64,
    pub ramp_length: f64,
    pub variant: Variant,
}

impl AnnealSchedule {
    /// `β_max` starts at `β_min = 0.057` and reaches 69.7 at 33% of the budget.
    pub fn limited(variant: Variant) -> Self {
        Self {
            beta_min: 0.057,
            beta_upper: 69.7,
            beta_start: 0.057,
            ramp_length: 0.33,
            variant,
        }
    }

    /// `β_min = 0.1`; `β_max` ramps from 1 to 100 over 2×10⁴ steps.
    pub fn unlimited(variant: Variant) -> Self {
        Self {
            beta_min: 0.1,
            beta_upper: 100.0,
            beta_start: 1.0,
            ramp_length: 2e4,
            variant,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let ok = self.beta_min > 0.0
            && self.beta_min <= self.beta_start
            && self.beta_start <= self.beta_upper
            && self.beta_upper.is_finite()
            && self.ramp_length > 0.0;
        if ok {
            Ok(())
        } else {
            Err(format!(
                "schedule needs 0 < beta_min <= beta_start <= beta_upper < inf and ramp_length > 0, got {self:?}"
            ))
        }
    }

    pub fn beta_max(&self, progress: f64) -> f64 {
        let r = (progress / self.ramp_length).clamp(0.0, 1.0);
        if r == 0.0 {
            return self.beta_start;
        }
        if r == 1.0 {
            return self.beta_upper;
        }
        let (a, b) = (self.beta_start.ln(), self.beta_upper.ln());
        (a + r * (b - a)).exp()
    }

    /// Temperature for one training step.
    pub fn training_beta<R: Rng + ?Sized>(&self, progress: f64, rng: &mut R) -> f64 {
        let hi = self.beta_max(progress);
        match self.variant {
            Variant::Sa => hi,
            Variant::Pt if hi > self.beta_min => rng.random_range(self.beta_min..=hi),
            Variant::Pt => self.beta_min,
        }
    }

    /// Temperature at which new candidates are drawn.
    pub fn query_beta(&self, progress: f64) -> f64 {
        self.beta_max(progress)
    }
}
