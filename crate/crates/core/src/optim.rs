//! Adam with bias correction and the staged learning-rate schedule.

use crate::error::{shape_err, Error, Result};
use crate::tensor::Scalar;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First/second moment estimates for a list of parameter buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Scalar> AdamState<T> {
    /// Fresh state for buffers of the given lengths.
    pub fn new(lens: impl IntoIterator<Item = usize>) -> Self {
        let (m, v): (Vec<_>, Vec<_>) =
            lens.into_iter().map(|n| (vec![T::zero(); n], vec![T::zero(); n])).unzip();
        AdamState { m, v, t: 0, beta1: BETA1, beta2: BETA2, eps: EPSILON }
    }

    /// Number of completed steps.
    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn first_moments(&self) -> &[Vec<T>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Vec<T>] {
        &self.v
    }

    /// One in-place update. Nothing is modified if validation fails.
    pub fn step(&mut self, params: &mut [&mut [T]], grads: &[&[T]], lr: f64) -> Result<()> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Argument(format!("learning rate must be positive, got {lr}")));
        }
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(shape_err!(
                "{} params / {} grads for {} moment buffers",
                params.len(),
                grads.len(),
                self.m.len()
            ));
        }
        for (i, ((p, g), m)) in params.iter().zip(grads).zip(&self.m).enumerate() {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(shape_err!("buffer {i}: param {} grad {} state {}", p.len(), g.len(), m.len()));
            }
            if let Some(j) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("non-finite gradient at buffer {i}, element {j}")));
            }
        }

        self.t += 1;
        let b1 = T::from_f64(self.beta1);
        let b2 = T::from_f64(self.beta2);
        let c1 = T::from_f64(1.0 - self.beta1);
        let c2 = T::from_f64(1.0 - self.beta2);
        let corr1 = T::from_f64(1.0 - self.beta1.powf(self.t as f64));
        let corr2 = T::from_f64(1.0 - self.beta2.powf(self.t as f64));
        let lr = T::from_f64(lr);
        let eps = T::from_f64(self.eps);

        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((p, &g), m), v) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + c1 * g;
                *v = b2 * *v + c2 * g * g;
                let m_hat = *m / corr1;
                let v_hat = *v / corr2;
                *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Piecewise-constant learning rate over 1-based epochs.
///
/// The default stages split the run 50% / 30% / 20% at rates 1e-3, 1e-4 and
/// 1e-5, which for 100 epochs gives boundaries at 50 and 80.
#[derive(Clone, Debug, PartialEq)]
pub struct LrSchedule {
    total_epochs: usize,
    /// `(last epoch of stage, rate)`, ascending.
    stages: Vec<(usize, f64)>,
}

impl LrSchedule {
    pub fn new(total_epochs: usize, stages: Vec<(usize, f64)>) -> Result<Self> {
        if total_epochs == 0 || stages.is_empty() {
            return Err(Error::Argument("schedule needs at least one epoch and one stage".into()));
        }
        if stages.windows(2).any(|w| w[0].0 > w[1].0) || stages.last().map(|s| s.0) != Some(total_epochs) {
            return Err(Error::Argument(format!("stage boundaries {stages:?} must ascend to {total_epochs}")));
        }
        Ok(LrSchedule { total_epochs, stages })
    }

    pub fn staged(total_epochs: usize) -> Result<Self> {
        let at = |frac: f64| ((total_epochs as f64 * frac).round() as usize).max(1).min(total_epochs);
        Self::new(total_epochs, vec![(at(0.5), 1e-3), (at(0.8), 1e-4), (total_epochs, 1e-5)])
    }

    pub fn total_epochs(&self) -> usize {
        self.total_epochs
    }

    pub fn learning_rate_for_epoch(&self, epoch: usize) -> Result<f64> {
        if epoch == 0 || epoch > self.total_epochs {
            return Err(Error::Argument(format!("epoch {epoch} outside 1..={}", self.total_epochs)));
        }
        Ok(self.stages.iter().find(|(last, _)| epoch <= *last).expect("last stage covers total").1)
    }
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule::staged(100).expect("valid")
    }
}
