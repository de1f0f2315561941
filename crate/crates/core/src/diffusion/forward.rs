use crate::numerics::{Rng, Tensor};
use crate::{Error, Result};

/// One corruption step `x_t = √(1 − β) x_prev + √β ε`.
pub fn forward_step(x_prev: &Tensor, beta: f64, rng: &mut Rng) -> Result<Tensor> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::invalid(format!("beta {beta} outside (0, 1)")));
    }
    let eps = rng.normal_tensor(x_prev.shape())?;
    let (a, b) = ((1.0 - beta).sqrt(), beta.sqrt());
    x_prev.zip_map(&eps, |x, e| (a * x as f64 + b * e as f64) as f32)
}

/// Closed-form marginal `ỹ = √γ y0 + √(1 − γ) ε`; returns `(ỹ, ε)`.
pub fn forward_sample(y0: &Tensor, gamma: f64, rng: &mut Rng) -> Result<(Tensor, Tensor)> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::invalid(format!("gamma {gamma} outside [0, 1]")));
    }
    let eps = rng.normal_tensor(y0.shape())?;
    let y = mix(y0, &eps, gamma)?;
    Ok((y, eps))
}

/// `√γ y0 + √(1 − γ) ε`.
pub fn mix(y0: &Tensor, eps: &Tensor, gamma: f64) -> Result<Tensor> {
    let (a, b) = (gamma.sqrt(), (1.0 - gamma).sqrt());
    y0.zip_map(eps, |y, e| (a * y as f64 + b * e as f64) as f32)
}
