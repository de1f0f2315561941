use serde::{Deserialize, Serialize};

use super::linalg::{orthonormality_error, orthonormalize_rows, symmetric_eigen, transpose};
use super::spectrum::CenteredFeatures;
use crate::numerics::{matmul, Rng, Tensor};
use crate::{Error, Result};

/// Orthonormal-row projection `W` (`C^e x C`) onto a layer's principal
/// feature subspace.
#[derive(Clone, Debug, PartialEq)]
pub struct Eigenbasis {
    pub layer: usize,
    w: Tensor<f64>,
}

/// Largest tolerated `‖W Wᵀ − I‖_F`.
pub const ORTHONORMAL_TOL: f64 = 1e-5;

impl Eigenbasis {
    pub fn new(layer: usize, w: Tensor<f64>) -> Result<Self> {
        let (r, c) = w.dims2()?;
        if r > c {
            return Err(Error::shape(format!("eigenbasis with {r} rows over {c} channels")));
        }
        let err = orthonormality_error(&w);
        if !(err < ORTHONORMAL_TOL) {
            return Err(Error::invalid(format!("eigenbasis rows are not orthonormal ({err:e})")));
        }
        Ok(Self { layer, w })
    }

    pub fn identity(layer: usize, channels: usize) -> Self {
        let mut w = Tensor::zeros(&[channels, channels]);
        for i in 0..channels {
            w.data_mut()[i * channels + i] = 1.0;
        }
        Self { layer, w }
    }

    /// Random orthonormal rows.
    pub fn random(layer: usize, reduced: usize, channels: usize, rng: &mut Rng) -> Result<Self> {
        if reduced == 0 || reduced > channels {
            return Err(Error::invalid(format!(
                "cannot draw a {reduced}-row basis over {channels} channels"
            )));
        }
        let mut w = rng.normal_tensor(&[reduced, channels])?.cast::<f64>();
        orthonormalize_rows(&mut w)?;
        Ok(Self { layer, w })
    }

    pub fn matrix(&self) -> &Tensor<f64> {
        &self.w
    }

    pub fn reduced(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn orthonormality_error(&self) -> f64 {
        orthonormality_error(&self.w)
    }

    /// Mean over images of `‖WᵀW F̄ − F̄‖²`.
    pub fn reconstruction_error(&self, features: &CenteredFeatures) -> Result<f64> {
        check_channels(features, self.channels())?;
        let mut total = 0.0;
        for k in 0..features.maps.len() {
            total += objective(&self.w, &features.gram(k))?;
        }
        Ok(total / features.maps.len() as f64)
    }
}

fn check_channels(features: &CenteredFeatures, channels: usize) -> Result<()> {
    if features.maps.is_empty() {
        return Err(Error::invalid("empty feature corpus"));
    }
    if features.channels() != channels {
        return Err(Error::shape(format!(
            "features have {} channels, basis has {channels}",
            features.channels()
        )));
    }
    Ok(())
}

/// `tr(E S E)` with `E = WᵀW − I`, which equals `‖WᵀW F̄ − F̄‖²` for `S = F̄F̄ᵀ`.
fn objective(w: &Tensor<f64>, s: &Tensor<f64>) -> Result<f64> {
    let e = residual_projector(w)?;
    let es = matmul(&e, s)?;
    let ese = matmul(&es, &e)?;
    let c = s.shape()[0];
    Ok((0..c).map(|i| ese.data()[i * c + i]).sum())
}

fn residual_projector(w: &Tensor<f64>) -> Result<Tensor<f64>> {
    let mut e = matmul(&transpose(w), w)?;
    let c = e.shape()[0];
    for i in 0..c {
        e.data_mut()[i * c + i] -= 1.0;
    }
    Ok(e)
}

/// Gradient `2 W (E S + S E)` of [`objective`].
fn gradient(w: &Tensor<f64>, s: &Tensor<f64>) -> Result<Tensor<f64>> {
    let e = residual_projector(w)?;
    let es = matmul(&e, s)?;
    let m = es.zip_map(&transpose(&es), |a, b| a + b)?;
    Ok(matmul(w, &m)?.map(|v| 2.0 * v))
}

/// Mini-batch settings for eigenbasis training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigenTrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    /// Step size relative to the corpus mean of `tr(F̄F̄ᵀ)`.
    pub lr: f64,
    pub seed: u64,
}

impl Default for EigenTrainConfig {
    fn default() -> Self {
        Self { batch_size: 8, epochs: 200, lr: 0.25, seed: 0 }
    }
}

/// Best achievable reconstruction error with `reduced` components: the
/// sum of the trailing eigenvalues of the mean uncentred second moment.
pub fn pca_optimum(features: &CenteredFeatures, reduced: usize) -> Result<f64> {
    let mean = mean_gram(features, &(0..features.maps.len()).collect::<Vec<_>>())?;
    let (vals, _) = symmetric_eigen(&mean)?;
    Ok(vals[reduced.min(vals.len())..].iter().map(|v| v.max(0.0)).sum())
}

fn mean_gram(features: &CenteredFeatures, idx: &[usize]) -> Result<Tensor<f64>> {
    let c = features.channels();
    let mut acc = Tensor::zeros(&[c, c]);
    for &k in idx {
        acc = acc.zip_map(&features.gram(k), |a, b| a + b)?;
    }
    Ok(acc.map(|v| v / idx.len() as f64))
}

/// Trains one layer's basis from `init` by mini-batch gradient descent on
/// the reconstruction error, re-orthonormalising the rows after each step.
/// The step size decays linearly from `lr` to zero over the run.
pub fn train_eigenbasis(
    features: &CenteredFeatures,
    init: Eigenbasis,
    cfg: &EigenTrainConfig,
) -> Result<Eigenbasis> {
    check_channels(features, init.channels())?;
    if cfg.batch_size == 0 || !(cfg.lr > 0.0) {
        return Err(Error::invalid("eigenbasis training needs batch_size > 0 and lr > 0"));
    }
    let grams: Vec<Tensor<f64>> = (0..features.maps.len()).map(|k| features.gram(k)).collect();
    let c = init.channels();
    let tau = grams
        .iter()
        .map(|g| (0..c).map(|i| g.data()[i * c + i]).sum::<f64>())
        .sum::<f64>()
        / grams.len() as f64;
    if !(tau > 0.0) {
        return Ok(init);
    }
    let total_steps = cfg.epochs * grams.len().div_ceil(cfg.batch_size);
    let mut rng = Rng::new(cfg.seed).derive(init.layer as u64);
    let mut w = init.w;
    let mut order: Vec<usize> = (0..grams.len()).collect();
    let mut step = 0usize;
    for _ in 0..cfg.epochs {
        rng.shuffle(&mut order);
        for batch in order.chunks(cfg.batch_size) {
            let mut s = Tensor::zeros(&[c, c]);
            for &k in batch {
                s = s.zip_map(&grams[k], |a, b| a + b)?;
            }
            let s = s.map(|v| v / batch.len() as f64);
            let loss = objective(&w, &s)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "eigenbasis layer {} loss at step {step}",
                    init.layer
                )));
            }
            // Linear decay to zero damps mini-batch noise near the optimum.
            let step_size = cfg.lr / tau * (1.0 - step as f64 / total_steps as f64);
            let g = gradient(&w, &s)?;
            w = w.zip_map(&g, |a, b| a - step_size * b)?;
            orthonormalize_rows(&mut w).map_err(|e| {
                Error::NonFinite(format!("eigenbasis layer {} step {step}: {e}", init.layer))
            })?;
            step += 1;
        }
    }
    Eigenbasis::new(init.layer, w)
}

/// Trains one basis per layer from random orthonormal starts. A target
/// equal to the channel count yields the identity.
pub fn train_global_eigenbases(
    corpus: &[CenteredFeatures],
    reduced: &[usize],
    cfg: &EigenTrainConfig,
) -> Result<Vec<Eigenbasis>> {
    if corpus.len() != reduced.len() {
        return Err(Error::invalid("one target dimension per layer is required"));
    }
    let rng = Rng::new(cfg.seed);
    corpus
        .iter()
        .zip(reduced)
        .map(|(f, &ce)| {
            let c = f.channels();
            if ce == c {
                return Ok(Eigenbasis::identity(f.layer, c));
            }
            let init = Eigenbasis::random(f.layer, ce, c, &mut rng.derive(1000 + f.layer as u64))?;
            train_eigenbasis(f, init, cfg)
        })
        .collect()
}
