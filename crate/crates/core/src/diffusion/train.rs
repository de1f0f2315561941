use serde::{Deserialize, Serialize};

use super::denoiser::IidmDenoiser;
use super::loss::{pair_loss, TrainingPair};
use super::schedule::NoiseSchedule;
use crate::networks::Iidm;
use crate::numerics::{Optimizer, OptimizerKind, ParamStore, Rng, Tape};
use crate::{Error, Result};

/// Mean loss above which training is declared divergent.
pub const LOSS_LIMIT: f64 = 1e3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 10, batch_size: 8, lr: 2e-4, optimizer: OptimizerKind::Adam }
    }
}

impl TrainConfig {
    pub fn optimizer(&self) -> Result<Optimizer> {
        Optimizer::new(self.optimizer, self.lr)
    }
}

/// Minimises the noise-prediction loss by mini-batch descent, continuing
/// from `opt`'s state. Calls `on_epoch(epoch, mean_loss)` after every
/// epoch and returns the per-epoch mean losses.
#[allow(clippy::too_many_arguments)]
pub fn train(
    model: &Iidm,
    store: &mut ParamStore,
    opt: &mut Optimizer,
    data: &[TrainingPair],
    schedule: &NoiseSchedule,
    cfg: &TrainConfig,
    rng: &mut Rng,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::invalid("batch_size must be positive"));
    }
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        // A fresh permutation per epoch keeps a resumed run identical to an
        // uninterrupted one given the same RNG state.
        let mut order: Vec<usize> = (0..data.len()).collect();
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            store.zero_grads();
            let mut batch_loss = 0.0;
            for &k in batch {
                let mut tape = Tape::new();
                let den = IidmDenoiser { model, store: &*store };
                let l = pair_loss(&mut tape, k, &data[k], &den, schedule, rng)?;
                batch_loss += tape.value(l).item()? as f64;
                let l = tape.scale(l, 1.0 / batch.len() as f32);
                tape.backward(l, store)?;
            }
            let mean = batch_loss / batch.len() as f64;
            if !mean.is_finite() || mean > LOSS_LIMIT {
                return Err(Error::Divergence(format!("epoch {epoch}: batch loss {mean:e}")));
            }
            opt.step(store)?;
            total += batch_loss;
        }
        let mean = total / data.len() as f64;
        log::info!("epoch {epoch}: mean loss {mean:.6}");
        on_epoch(epoch, mean);
        curve.push(mean);
    }
    Ok(curve)
}

pub const LOSS_CURVE_HEADER: &str = "epoch,mean_loss";

/// CSV `epoch,mean_loss` with 0-based epochs.
pub fn loss_curve_csv(curve: &[f64]) -> String {
    let mut out = String::from(LOSS_CURVE_HEADER);
    out.push('\n');
    for (e, l) in curve.iter().enumerate() {
        out.push_str(&format!("{e},{l:.9}\n"));
    }
    out
}
