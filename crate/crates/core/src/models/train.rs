use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{init_rng, Trainable};
use crate::data::WindowedSample;
use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor};

/// Epoch-mean loss may grow at most this factor between epochs.
const DIVERGENCE_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            batch_size: 64,
            epochs: 30,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config(format!(
                "moment decays must lie in [0, 1), got {} / {}",
                self.beta1, self.beta2
            )));
        }
        Ok(())
    }
}

/// Adaptive-moment optimizer state.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(cfg: &TrainConfig, sizes: &[usize]) -> Self {
        Self {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: 1e-8,
            step: 0,
            first: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn update(&mut self, params: Vec<&mut Tensor>, grads: &[Tensor]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.first).zip(&mut self.second) {
            for (((w, &g), m), v) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *w -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<M> {
    pub model: M,
    /// Mean training loss per epoch.
    pub history: Vec<f64>,
}

/// Mini-batch training with seeded shuffling; deterministic given
/// `cfg.seed`.
pub fn train<M: Trainable>(model: &M, data: &[WindowedSample], cfg: &TrainConfig) -> Result<TrainOutcome<M>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Contract("training set is empty".into()));
    }
    for s in data {
        model.check_sample(s)?;
    }
    let mut model = model.clone();
    let sizes: Vec<usize> = model.parameters().iter().map(|(_, t)| t.len()).collect();
    let mut optimizer = Adam::new(cfg, &sizes);
    let mut rng = init_rng(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&WindowedSample> = chunk.iter().map(|&i| &data[i]).collect();
            let tape = Tape::new();
            let (loss, leaves) = model.batch_loss(&tape, &batch)?;
            let value = loss.item()?;
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            let grads = tape.gradients(loss, &leaves)?;
            if grads.iter().any(|g| !g.all_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            optimizer.update(model.parameters_mut(), &grads);
            total += value * chunk.len() as f64;
        }
        let mean = total / data.len() as f64;
        if let Some(&previous) = history.last() {
            if mean > DIVERGENCE_FACTOR * previous {
                return Err(Error::Diverged {
                    epoch,
                    loss: mean,
                    previous,
                });
            }
        }
        history.push(mean);
    }
    Ok(TrainOutcome { model, history })
}
