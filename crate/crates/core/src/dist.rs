//! Diagonal-Gaussian and categorical distribution math.
//!
//! Closed-form KL divergences, entropies, and log-densities in nats, plus
//! reparameterized sampling. These plain (non-tape) forms back the metrics;
//! the training objectives rebuild the same formulas on the tape.

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

/// Hard bounds on log-variance. The variational-bottleneck experiments drive
/// the variance toward zero; the clamp keeps exp() finite while leaving
/// delta-like behavior observable (variance can reach e^-10 ~ 4.5e-5).
pub const LOG_VAR_MIN: f64 = -10.0;
pub const LOG_VAR_MAX: f64 = 10.0;

const LOG_2PI: f64 = 1.837877066409345483560659472811; // ln(2*pi)

/// Diagonal Gaussian over R^k: per-dimension mean and log-variance.
/// Log-variance is clamped to [-10, 10] at construction.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalGaussian {
    mean: Tensor,
    log_var: Tensor,
}

impl DiagonalGaussian {
    pub fn new(mean: Tensor, log_var: Tensor) -> Result<Self> {
        if mean.shape() != log_var.shape() {
            return Err(Error::ShapeMismatch {
                op: "DiagonalGaussian::new",
                left: mean.shape().to_vec(),
                right: log_var.shape().to_vec(),
            });
        }
        let log_var = log_var.map(|v| v.clamp(LOG_VAR_MIN, LOG_VAR_MAX));
        Ok(DiagonalGaussian { mean, log_var })
    }

    pub fn standard(dim: usize) -> Self {
        DiagonalGaussian {
            mean: Tensor::zeros(&[dim]),
            log_var: Tensor::zeros(&[dim]),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &Tensor {
        &self.mean
    }

    pub fn log_var(&self) -> &Tensor {
        &self.log_var
    }

    /// Per-dimension variances.
    pub fn variances(&self) -> Vec<f64> {
        self.log_var.data().iter().map(|v| v.exp()).collect()
    }

    /// Mean of the per-dimension variances.
    pub fn mean_variance(&self) -> f64 {
        self.variances().iter().sum::<f64>() / self.dim() as f64
    }

    /// Reparameterized sample: mean + exp(log_var / 2) * eps, eps ~ N(0, I).
    pub fn sample_reparam(&self, rng: &mut SeededRng) -> Tensor {
        let mut out = self.mean.clone();
        for (o, lv) in out.data_mut().iter_mut().zip(self.log_var.data()) {
            *o += (0.5 * lv).exp() * rng.standard_normal();
        }
        out
    }

    /// KL(self || N(0, I)) in nats: 0.5 * sum(mu^2 + var - 1 - log var).
    pub fn kl_to_standard(&self) -> f64 {
        self.mean
            .data()
            .iter()
            .zip(self.log_var.data())
            .map(|(m, lv)| 0.5 * (m * m + lv.exp() - 1.0 - lv))
            .sum()
    }

    /// KL(self || other) for matching dimensions, in nats.
    pub fn kl_between(&self, other: &DiagonalGaussian) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::ShapeMismatch {
                op: "kl_between",
                left: self.mean.shape().to_vec(),
                right: other.mean.shape().to_vec(),
            });
        }
        let mut total = 0.0;
        for i in 0..self.dim() {
            let (ma, lva) = (self.mean.data()[i], self.log_var.data()[i]);
            let (mb, lvb) = (other.mean.data()[i], other.log_var.data()[i]);
            let va = lva.exp();
            let vb = lvb.exp();
            total += 0.5 * (lvb - lva + (va + (ma - mb) * (ma - mb)) / vb - 1.0);
        }
        Ok(total)
    }

    /// Differential entropy in nats: 0.5 * sum(log(2*pi*e) + log var).
    pub fn entropy(&self) -> f64 {
        self.log_var
            .data()
            .iter()
            .map(|lv| 0.5 * (LOG_2PI + 1.0 + lv))
            .sum()
    }

    /// Log-density of x in nats.
    pub fn log_prob(&self, x: &Tensor) -> Result<f64> {
        if x.shape() != self.mean.shape() {
            return Err(Error::ShapeMismatch {
                op: "gaussian_log_prob",
                left: self.mean.shape().to_vec(),
                right: x.shape().to_vec(),
            });
        }
        let mut total = 0.0;
        for i in 0..self.dim() {
            let d = x.data()[i] - self.mean.data()[i];
            let lv = self.log_var.data()[i];
            total += -0.5 * (LOG_2PI + lv + d * d / lv.exp());
        }
        Ok(total)
    }
}

/// Entropy in nats of a standard normal dimension, 0.5 * ln(2*pi*e).
pub fn standard_normal_entropy_per_dim() -> f64 {
    0.5 * (LOG_2PI + 1.0)
}

/// Categorical distribution given by logits; softmax-normalized.
#[derive(Clone, Debug)]
pub struct CategoricalPrior {
    logits: Tensor,
}

impl CategoricalPrior {
    pub fn new(logits: Tensor) -> Result<Self> {
        if logits.rank() != 1 {
            return Err(Error::Contract(format!(
                "categorical logits must be 1-d, got {:?}",
                logits.shape()
            )));
        }
        Ok(CategoricalPrior { logits })
    }

    /// Uniform prior over n classes.
    pub fn uniform(n: usize) -> Self {
        CategoricalPrior {
            logits: Tensor::zeros(&[n]),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.logits.len()
    }

    pub fn probs(&self) -> Vec<f64> {
        let mx = self
            .logits
            .data()
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = self.logits.data().iter().map(|l| (l - mx).exp()).collect();
        let z: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / z).collect()
    }

    /// Inverse-CDF sample from the seeded stream.
    pub fn sample(&self, rng: &mut SeededRng) -> usize {
        let u = rng.next_f64();
        let probs = self.probs();
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        probs.len() - 1
    }
}
