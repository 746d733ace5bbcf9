//! Training loop: sample patches, forward, MSE, backward, Adam.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::TrainCorpus;
use crate::error::{Error, Result};
use crate::imaging::ImagePlane;
use crate::model::{Mssrnet, NetConfig};
use crate::nn::mse_loss;
use crate::optim::{AdamState, LrSchedule};
use crate::pipeline::evaluate;
use crate::tensor::Scalar;

/// Bias-corrected exponential moving average of the training loss.
#[derive(Clone, Debug)]
pub struct LossSmoother {
    decay: f64,
    avg: f64,
    steps: i32,
}

impl LossSmoother {
    pub fn new(decay: f64) -> Self {
        LossSmoother { decay, avg: 0.0, steps: 0 }
    }

    pub fn push(&mut self, loss: f64) -> f64 {
        self.steps += 1;
        self.avg = self.decay * self.avg + (1.0 - self.decay) * loss;
        self.value()
    }

    pub fn value(&self) -> f64 {
        self.avg / (1.0 - self.decay.powi(self.steps))
    }
}

impl Default for LossSmoother {
    fn default() -> Self {
        LossSmoother::new(0.98)
    }
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub net: NetConfig,
    pub scale: usize,
    pub epochs: usize,
    pub iters_per_epoch: usize,
    pub batch: usize,
    pub schedule: LrSchedule,
}

impl TrainConfig {
    /// 100 epochs of 2000 batches of 64, with the staged schedule.
    pub fn new(net: NetConfig, scale: usize) -> Self {
        TrainConfig { net, scale, epochs: 100, iters_per_epoch: 2000, batch: 64, schedule: LrSchedule::default() }
    }

    /// Overrides the epoch count and rescales the schedule to match.
    pub fn with_epochs(mut self, epochs: usize) -> Result<Self> {
        self.schedule = LrSchedule::staged(epochs)?;
        self.epochs = epochs;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        if self.epochs == 0 || self.iters_per_epoch == 0 || self.batch == 0 {
            return Err(Error::Argument("epochs, iterations and batch must be >= 1".into()));
        }
        if self.schedule.total_epochs() != self.epochs {
            return Err(Error::Argument("schedule length differs from epoch count".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    /// Smoothed training loss at the end of the epoch.
    pub train_loss: f64,
    /// Mean PSNR on the holdout images, if any.
    pub holdout_psnr: Option<f64>,
}

impl EpochLog {
    /// `epoch<TAB>lr<TAB>train_loss<TAB>holdout_psnr`.
    pub fn line(&self) -> String {
        let psnr = self.holdout_psnr.map_or_else(|| "nan".to_string(), |p| format!("{p:.4}"));
        format!("{}\t{}\t{:.8}\t{}", self.epoch, self.lr, self.train_loss, psnr)
    }
}

pub struct Trainer<T> {
    pub net: Mssrnet<T>,
    adam: AdamState<T>,
    rng: ChaCha8Rng,
    smoother: LossSmoother,
    /// Raw per-iteration losses.
    pub losses: Vec<f64>,
    /// Smoothed loss after each iteration.
    pub smoothed: Vec<f64>,
}

impl<T: Scalar> Trainer<T> {
    /// Fresh network from `cfg.seed`; batch sampling uses a separate
    /// stream of the same seed.
    pub fn new(cfg: &NetConfig) -> Result<Self> {
        let mut net = Mssrnet::build(cfg)?;
        let adam = AdamState::new(net.params_mut().iter().map(|p| p.len()));
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        Ok(Trainer { net, adam, rng, smoother: LossSmoother::default(), losses: Vec::new(), smoothed: Vec::new() })
    }

    /// One batch: returns the raw loss. A non-finite loss aborts before
    /// any parameter changes.
    pub fn step(&mut self, corpus: &TrainCorpus, batch: usize, lr: f64) -> Result<f64> {
        let (x, y) = corpus.sample_batch::<T, _>(batch, &mut self.rng)?;
        let (residual, cache) = self.net.forward(&x)?;
        let (loss, grad) = mse_loss(&residual, &y)?;
        let loss = loss.as_f64();
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite training loss at iteration {}", self.losses.len() + 1)));
        }
        let grads = self.net.backward(&cache, &grad)?;
        drop(cache);
        self.adam.step(&mut self.net.params_mut(), &grads.slices(), lr)?;
        self.losses.push(loss);
        self.smoothed.push(self.smoother.push(loss));
        Ok(loss)
    }

    pub fn smoothed_loss(&self) -> f64 {
        self.smoother.value()
    }

    pub fn adam_steps(&self) -> u64 {
        self.adam.steps()
    }
}

/// Full training run. `on_epoch` sees every epoch's log line and the
/// current network, e.g. for checkpointing.
pub fn train<T: Scalar>(
    corpus: &TrainCorpus,
    holdout: &[(String, ImagePlane)],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog, &Mssrnet<T>) -> Result<()>,
) -> Result<(Trainer<T>, Vec<EpochLog>)> {
    cfg.validate()?;
    let mut trainer = Trainer::new(&cfg.net)?;
    let mut logs = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let lr = cfg.schedule.learning_rate_for_epoch(epoch)?;
        for _ in 0..cfg.iters_per_epoch {
            trainer.step(corpus, cfg.batch, lr)?;
        }
        let holdout_psnr = if holdout.is_empty() {
            None
        } else {
            Some(evaluate(holdout, cfg.scale, Some(&trainer.net))?.mean_psnr())
        };
        let log = EpochLog { epoch, lr, train_loss: trainer.smoothed_loss(), holdout_psnr };
        on_epoch(&log, &trainer.net)?;
        logs.push(log);
    }
    Ok((trainer, logs))
}
