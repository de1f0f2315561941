use serde::{Deserialize, Serialize};

use super::denoiser::{Denoiser, DenoiserContext, SamplerCache};
use super::schedule::NoiseSchedule;
use crate::numerics::{Rng, Tensor};
use crate::{Error, Result};

/// Reverse-process update rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SamplerKind {
    /// Every step `T..1` with variance `β_t`.
    Ancestral,
    /// Deterministic updates at `steps` evenly spaced timesteps.
    Strided { steps: usize },
}

impl SamplerKind {
    /// Timesteps visited, descending.
    pub fn timesteps(&self, schedule: &NoiseSchedule) -> Result<Vec<usize>> {
        let big_t = schedule.steps();
        match *self {
            SamplerKind::Ancestral => Ok((1..=big_t).rev().collect()),
            SamplerKind::Strided { steps } => {
                if steps == 0 || steps > big_t {
                    return Err(Error::invalid(format!("{steps} inference steps for T = {big_t}")));
                }
                let mut ts: Vec<usize> = (1..=steps)
                    .map(|i| ((i * big_t) as f64 / steps as f64).round() as usize)
                    .collect();
                ts.dedup();
                ts.reverse();
                Ok(ts)
            }
        }
    }
}

/// Draws `ŷ_0` for condition `x`, starting from `ŷ_T ~ N(0, I)` of the
/// given shape. The final state is clipped to `[0, 1]`.
pub fn reverse_sample(
    x: &Tensor,
    shape: &[usize],
    model: &dyn Denoiser,
    schedule: &NoiseSchedule,
    kind: SamplerKind,
    rng: &mut Rng,
) -> Result<Tensor> {
    let start = rng.normal_tensor(shape)?;
    reverse_sample_from(x, start, model, schedule, kind, rng)
}

/// [`reverse_sample`] from a given `ŷ_T`.
pub fn reverse_sample_from(
    x: &Tensor,
    start: Tensor,
    model: &dyn Denoiser,
    schedule: &NoiseSchedule,
    kind: SamplerKind,
    rng: &mut Rng,
) -> Result<Tensor> {
    let ts = kind.timesteps(schedule)?;
    let mut cache = SamplerCache::default();
    let mut y: Vec<f64> = start.data().iter().map(|&v| v as f64).collect();
    let shape = start.shape().to_vec();
    for (i, &t) in ts.iter().enumerate() {
        let gamma = schedule.gamma(t);
        let y_t = Tensor::from_f64(&shape, &y)?;
        let ctx = DenoiserContext { x, y_t: &y_t, t, gamma, teacher_noise: None };
        let eps = model.predict_value(&ctx, &mut cache)?;
        if eps.shape() != shape.as_slice() {
            return Err(Error::shape(format!("prediction {:?} for state {shape:?}", eps.shape())));
        }
        match kind {
            SamplerKind::Ancestral => {
                let beta = schedule.beta(t);
                let a = 1.0 / (1.0 - beta).sqrt();
                let b = beta / (1.0 - gamma).sqrt();
                let sigma = if t > 1 { beta.sqrt() } else { 0.0 };
                for (v, &e) in y.iter_mut().zip(eps.data()) {
                    *v = a * (*v - b * e as f64);
                }
                if sigma > 0.0 {
                    for v in y.iter_mut() {
                        *v += sigma * rng.normal();
                    }
                }
            }
            SamplerKind::Strided { .. } => {
                let prev = ts.get(i + 1).map_or(1.0, |&s| schedule.gamma(s));
                let (sg, sn) = (gamma.sqrt(), (1.0 - gamma).sqrt());
                let (pg, pn) = (prev.sqrt(), (1.0 - prev).sqrt());
                for (v, &e) in y.iter_mut().zip(eps.data()) {
                    let y0 = (*v - sn * e as f64) / sg;
                    *v = pg * y0 + pn * e as f64;
                }
            }
        }
        if let Some(bad) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("sampler state at step t = {t} (element {bad})")));
        }
    }
    let clipped: Vec<f64> = y.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    Tensor::from_f64(&shape, &clipped)
}
