//! Policy and critic training: the trust-region update, the adversarial loops
//! and the supervised baseline trainer.

mod cg;
mod config;
mod gail;
mod supervised;
mod trpo;

pub use cg::conjugate_gradient;
pub use config::{SupervisedConfig, TrainConfig, TrustRegionConfig};
pub use gail::{train_gail, train_sagail, write_metrics_csv, IterationState, MetricsRow, TrainData, TrainOutcome, METRICS_HEADER};
pub use supervised::{constant_velocity_predict, supervised_loss, train_supervised, EpochRow, SupervisedOutcome};
pub use trpo::{fisher_vector_product, mean_kl, surrogate, trust_region_step, AdvantageBatch, PolicySample, StepReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// First-order optimizer over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer<T> {
    pub kind: OptimizerKind,
    pub lr: f64,
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(kind: OptimizerKind, lr: f64, n: usize) -> Self {
        let state = if kind == OptimizerKind::Adam { n } else { 0 };
        Self { kind, lr, m: vec![T::zero(); state], v: vec![T::zero(); state], t: 0 }
    }

    /// Descends along `grad`; fails without touching `params` when the
    /// gradient is not finite.
    pub fn step(&mut self, params: &mut [T], grad: &[T]) -> Result<()> {
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient("optimizer update".into()));
        }
        let lr = T::lit(self.lr);
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, &g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2, eps) = (T::lit(0.9), T::lit(0.999), T::lit(1e-8));
                self.t += 1;
                let c1 = T::one() - b1.powi(self.t);
                let c2 = T::one() - b2.powi(self.t);
                for k in 0..params.len() {
                    let g = grad[k];
                    self.m[k] = b1 * self.m[k] + (T::one() - b1) * g;
                    self.v[k] = b2 * self.v[k] + (T::one() - b2) * g * g;
                    let mh = self.m[k] / c1;
                    let vh = self.v[k] / c2;
                    params[k] -= lr * mh / (vh.sqrt() + eps);
                }
            }
        }
        Ok(())
    }
}
