use super::denoiser::{Denoiser, DenoiserContext};
use super::forward::forward_sample;
use super::schedule::NoiseSchedule;
use crate::numerics::{Rng, Tape, Tensor, Var};
use crate::{Error, Result};

/// Condition imagery and its target density.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingPair {
    /// `bands x H x W`.
    pub x: Tensor,
    /// `1 x H x W`, normalised to `[0, 1]`.
    pub y0: Tensor,
}

impl TrainingPair {
    pub fn new(x: Tensor, y0: Tensor) -> Result<Self> {
        let (_, h, w) = x.dims3()?;
        let (c, hy, wy) = y0.dims3()?;
        if c != 1 || (h, w) != (hy, wy) {
            return Err(Error::shape(format!(
                "target {:?} does not match imagery {:?}",
                y0.shape(),
                x.shape()
            )));
        }
        Ok(Self { x, y0 })
    }
}

/// Mean over the batch of `mean |ε − ε_θ(x, t, ỹ_t, γ_t)|`, with `t`
/// uniform in `1..=T` and fresh `ε` per pair. Returns the scalar loss on
/// `tape`.
pub fn training_loss(
    tape: &mut Tape,
    batch: &[TrainingPair],
    model: &dyn Denoiser,
    schedule: &NoiseSchedule,
    rng: &mut Rng,
) -> Result<Var> {
    if batch.is_empty() {
        return Err(Error::invalid("empty training batch"));
    }
    let mut terms = Vec::with_capacity(batch.len());
    for (i, pair) in batch.iter().enumerate() {
        terms.push(pair_loss(tape, i, pair, model, schedule, rng)?);
    }
    let mut total = terms[0];
    for &t in &terms[1..] {
        total = tape.add(total, t)?;
    }
    Ok(tape.scale(total, 1.0 / batch.len() as f32))
}

/// Loss of one pair (index `i` is used in error messages).
pub(crate) fn pair_loss(
    tape: &mut Tape,
    i: usize,
    pair: &TrainingPair,
    model: &dyn Denoiser,
    schedule: &NoiseSchedule,
    rng: &mut Rng,
) -> Result<Var> {
    let t = 1 + rng.below(schedule.steps() as u64) as usize;
    let gamma = schedule.gamma(t);
    let (y_t, eps) = forward_sample(&pair.y0, gamma, rng)?;
    let ctx = DenoiserContext { x: &pair.x, y_t: &y_t, t, gamma, teacher_noise: Some(&eps) };
    let pred = model.predict(tape, &ctx)?;
    if tape.shape(pred) != eps.shape() {
        return Err(Error::shape(format!(
            "pair {i}: prediction {:?} for noise {:?}",
            tape.shape(pred),
            eps.shape()
        )));
    }
    if !tape.value(pred).is_finite() {
        return Err(Error::NonFinite(format!("model output for pair {i} at t = {t}")));
    }
    let target = tape.constant(eps);
    let diff = tape.sub(target, pred)?;
    Ok(tape.mean_abs(diff))
}

/// Value of [`training_loss`] without keeping the tape.
pub fn training_loss_value(
    batch: &[TrainingPair],
    model: &dyn Denoiser,
    schedule: &NoiseSchedule,
    rng: &mut Rng,
) -> Result<f64> {
    let mut tape = Tape::new();
    let l = training_loss(&mut tape, batch, model, schedule, rng)?;
    Ok(tape.value(l).item()? as f64)
}
