use serde::{Deserialize, Serialize};

use super::{Scalar, Tensor};

/// Adaptive-moment optimizer settings.
///
/// `decoupled = true` gives AdamW (weight decay applied directly to the
/// parameters); `false` gives Adam, where weight decay (if any) is folded
/// into the gradient as an L2 term.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub decoupled: bool,
}

impl OptimizerConfig {
    pub fn adam(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            decoupled: false,
        }
    }

    pub fn adamw(lr: f64, weight_decay: f64) -> Self {
        Self {
            weight_decay,
            decoupled: true,
            ..Self::adam(lr)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    Applied,
    /// A gradient entry was NaN or infinite; parameters and moments untouched.
    SkippedNonFinite,
}

/// First/second moment buffers, one pair per parameter tensor.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdamState<S> {
    pub step: u64,
    pub m: Vec<Tensor<S>>,
    pub v: Vec<Tensor<S>>,
    pub skipped: u64,
}

impl<S: Scalar> AdamState<S> {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor<S>>) -> Self {
        let (m, v): (Vec<_>, Vec<_>) = params
            .into_iter()
            .map(|p| (Tensor::zeros(p.shape()), Tensor::zeros(p.shape())))
            .unzip();
        Self {
            step: 0,
            m,
            v,
            skipped: 0,
        }
    }

    /// One bias-corrected update of every parameter in place.
    pub fn step(
        &mut self,
        params: &mut [&mut Tensor<S>],
        grads: &[Tensor<S>],
        cfg: &OptimizerConfig,
    ) -> StepOutcome {
        assert_eq!(params.len(), grads.len(), "one gradient per parameter");
        assert_eq!(params.len(), self.m.len(), "optimizer state size");
        if grads.iter().any(|g| !g.all_finite()) {
            self.skipped += 1;
            log::warn!(
                "non-finite gradient at optimizer step {}; update skipped",
                self.step + 1
            );
            return StepOutcome::SkippedNonFinite;
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (S::lit(cfg.beta1), S::lit(cfg.beta2));
        let bc1 = S::one() - b1.powi(t);
        let bc2 = S::one() - b2.powi(t);
        let lr = S::lit(cfg.lr);
        let eps = S::lit(cfg.eps);
        let wd = S::lit(cfg.weight_decay);

        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            debug_assert_eq!(p.shape(), g.shape());
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (j, (w, &gj)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                let grad = if cfg.decoupled { gj } else { gj + wd * *w };
                m[j] = b1 * m[j] + (S::one() - b1) * grad;
                v[j] = b2 * v[j] + (S::one() - b2) * grad * grad;
                if cfg.decoupled {
                    *w -= lr * wd * *w;
                }
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        StepOutcome::Applied
    }
}
