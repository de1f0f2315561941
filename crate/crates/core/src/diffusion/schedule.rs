use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Linear,
}

/// Variances `β_1..β_T` and cumulative signal fractions
/// `γ_t = Π_{s≤t} (1 − β_s)`, with `γ_0 = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    pub kind: ScheduleKind,
    betas: Vec<f64>,
    gammas: Vec<f64>,
}

impl NoiseSchedule {
    /// Linear `β` from `beta_start` to `beta_end` inclusive. With `steps = 1`
    /// the single variance is `beta_start`.
    pub fn new(kind: ScheduleKind, steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::invalid("schedule needs at least one step"));
        }
        if !(0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::invalid(format!(
                "need 0 < beta_start <= beta_end < 1, got {beta_start} and {beta_end}"
            )));
        }
        let betas: Vec<f64> = match kind {
            ScheduleKind::Linear if steps == 1 => vec![beta_start],
            ScheduleKind::Linear => (0..steps)
                .map(|i| beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64)
                .collect(),
        };
        Self::from_betas(kind, betas)
    }

    pub fn from_betas(kind: ScheduleKind, betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::invalid("schedule needs at least one step"));
        }
        if let Some((t, b)) = betas.iter().enumerate().find(|(_, &b)| !(b > 0.0 && b < 1.0)) {
            return Err(Error::invalid(format!("beta_{} = {b} outside (0, 1)", t + 1)));
        }
        if betas.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("betas must be nondecreasing"));
        }
        let mut gammas = Vec::with_capacity(betas.len());
        let mut g = 1.0;
        for b in &betas {
            g *= 1.0 - b;
            gammas.push(g);
        }
        Ok(Self { kind, betas, gammas })
    }

    /// `T`.
    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    /// `β_t` for `1 <= t <= T`.
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    /// `γ_t` for `0 <= t <= T`.
    pub fn gamma(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.gammas[t - 1]
        }
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }
}
