use serde::{Deserialize, Serialize};

use crate::preprocess::{ForestMask, RasterGrid};
use crate::{Error, Result};

/// SSIM window and stabilising constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    /// Dynamic range `L`.
    pub range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self { window: 11, sigma: 1.5, k1: 0.01, k2: 0.03, range: 1.0 }
    }
}

impl SsimParams {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.window % 2 == 0 {
            return Err(Error::invalid(format!("SSIM window must be odd, got {}", self.window)));
        }
        if !(self.sigma > 0.0 && self.k1 > 0.0 && self.k2 > 0.0 && self.range > 0.0) {
            return Err(Error::invalid("SSIM sigma, K1, K2 and range must be positive"));
        }
        Ok(())
    }

    /// Normalised separable Gaussian window, `window²` weights row-major.
    pub fn weights(&self) -> Vec<f64> {
        let r = (self.window / 2) as f64;
        let g: Vec<f64> = (0..self.window)
            .map(|i| (-((i as f64 - r).powi(2)) / (2.0 * self.sigma * self.sigma)).exp())
            .collect();
        let s: f64 = g.iter().sum();
        let mut out = Vec::with_capacity(self.window * self.window);
        for a in &g {
            for b in &g {
                out.push(a * b / (s * s));
            }
        }
        out
    }
}

/// Error statistics over the valid pixels of a prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
    /// `+∞` when `mse == 0`.
    pub psnr: f64,
    pub ssim: f64,
    pub n_valid: usize,
}

/// `10 log10(L² / mse)`, `+∞` for a perfect prediction.
pub fn psnr(mse: f64, range: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (range * range / mse).log10()
    }
}

/// Pools metrics over several raster pairs: pixel errors over all valid
/// pixels, SSIM over all fully valid windows.
#[derive(Clone, Debug)]
pub struct MetricAccumulator {
    params: SsimParams,
    weights: Vec<f64>,
    abs: f64,
    sq: f64,
    n: usize,
    ssim_sum: f64,
    windows: usize,
}

impl MetricAccumulator {
    pub fn new(params: &SsimParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params: params.clone(),
            weights: params.weights(),
            abs: 0.0,
            sq: 0.0,
            n: 0,
            ssim_sum: 0.0,
            windows: 0,
        })
    }

    /// Adds one pair. A pixel is valid where both rasters are finite and
    /// the mask, if any, marks forest.
    pub fn add(&mut self, pred: &RasterGrid, truth: &RasterGrid, mask: Option<&ForestMask>) -> Result<()> {
        if !pred.same_dims(truth) || pred.channels() != truth.channels() {
            return Err(Error::shape(format!(
                "prediction {}x{}x{} vs truth {}x{}x{}",
                pred.channels(),
                pred.height(),
                pred.width(),
                truth.channels(),
                truth.height(),
                truth.width()
            )));
        }
        if let Some(m) = mask {
            if (m.width(), m.height()) != (pred.width(), pred.height()) {
                return Err(Error::shape("mask dims differ from the rasters"));
            }
        }
        let pixels = pred.pixels();
        for c in 0..pred.channels() {
            let (p, t) = (pred.channel(c), truth.channel(c));
            let valid: Vec<bool> = (0..pixels)
                .map(|i| p[i].is_finite() && t[i].is_finite() && mask.is_none_or(|m| m.is_forest(i)))
                .collect();
            for i in (0..pixels).filter(|&i| valid[i]) {
                let e = p[i] as f64 - t[i] as f64;
                self.abs += e.abs();
                self.sq += e * e;
                self.n += 1;
            }
            self.add_ssim(p, t, &valid, pred.width(), pred.height());
        }
        Ok(())
    }

    fn add_ssim(&mut self, p: &[f32], t: &[f32], valid: &[bool], width: usize, height: usize) {
        let k = self.params.window;
        if width < k || height < k {
            return;
        }
        let c1 = (self.params.k1 * self.params.range).powi(2);
        let c2 = (self.params.k2 * self.params.range).powi(2);
        // Invalid-pixel prefix sums make the full-validity test O(1) per window.
        let mut bad = vec![0usize; (width + 1) * (height + 1)];
        for r in 0..height {
            for c in 0..width {
                bad[(r + 1) * (width + 1) + c + 1] = bad[r * (width + 1) + c + 1] + bad[(r + 1) * (width + 1) + c]
                    - bad[r * (width + 1) + c]
                    + usize::from(!valid[r * width + c]);
            }
        }
        let count = |r0: usize, c0: usize| {
            let (r1, c1) = (r0 + k, c0 + k);
            bad[r1 * (width + 1) + c1] + bad[r0 * (width + 1) + c0] - bad[r0 * (width + 1) + c1] - bad[r1 * (width + 1) + c0]
        };
        for r0 in 0..=height - k {
            for c0 in 0..=width - k {
                if count(r0, c0) != 0 {
                    continue;
                }
                let (mut mx, mut my) = (0.0, 0.0);
                for dr in 0..k {
                    for dc in 0..k {
                        let w = self.weights[dr * k + dc];
                        let i = (r0 + dr) * width + c0 + dc;
                        mx += w * p[i] as f64;
                        my += w * t[i] as f64;
                    }
                }
                let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
                for dr in 0..k {
                    for dc in 0..k {
                        let w = self.weights[dr * k + dc];
                        let i = (r0 + dr) * width + c0 + dc;
                        let (a, b) = (p[i] as f64 - mx, t[i] as f64 - my);
                        vx += w * a * a;
                        vy += w * b * b;
                        cxy += w * a * b;
                    }
                }
                let s = ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                self.ssim_sum += s;
                self.windows += 1;
            }
        }
    }

    pub fn finish(&self) -> Result<MetricReport> {
        if self.n == 0 {
            return Err(Error::invalid("no valid pixels to evaluate"));
        }
        if self.windows == 0 {
            return Err(Error::invalid(format!(
                "no fully valid {0}x{0} SSIM window",
                self.params.window
            )));
        }
        let mse = self.sq / self.n as f64;
        Ok(MetricReport {
            mae: self.abs / self.n as f64,
            mse,
            rmse: mse.sqrt(),
            psnr: psnr(mse, self.params.range),
            ssim: self.ssim_sum / self.windows as f64,
            n_valid: self.n,
        })
    }
}

/// Metrics of one prediction against its truth.
pub fn metrics(
    pred: &RasterGrid,
    truth: &RasterGrid,
    mask: Option<&ForestMask>,
    params: &SsimParams,
) -> Result<MetricReport> {
    let mut acc = MetricAccumulator::new(params)?;
    acc.add(pred, truth, mask)?;
    acc.finish()
}
