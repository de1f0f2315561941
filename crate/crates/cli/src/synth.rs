//! Synthetic paired tiles: four smooth "spectral bands" made of random
//! low-frequency cosines, a forest mask from an NDVI-like band ratio, and
//! a density that is a fixed nonlinear function of the bands plus
//! smoothed noise.

use iidm_core::numerics::Rng;
use iidm_core::preprocess::{ForestMask, RasterGrid};
use iidm_core::{Error, Result};
use serde::{Deserialize, Serialize};

pub const BANDS: usize = 4;
/// Cosine terms per band.
pub const WAVES: usize = 4;
/// Band indices of the red and near-infrared stand-ins.
pub const RED: usize = 2;
pub const NIR: usize = 3;

/// Generation parameters, written next to the tiles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthParams {
    pub seed: u64,
    pub count: usize,
    pub size: usize,
    /// Largest spatial frequency, cycles per 64 pixels.
    pub max_cycles: f64,
    /// NDVI above which a pixel is forest.
    pub ndvi_threshold: f64,
    /// Standard deviation of the smoothed density noise.
    pub noise_std: f64,
    /// Box-blur radius of the density noise.
    pub noise_radius: usize,
}

impl SynthParams {
    pub fn new(seed: u64, count: usize, size: usize) -> Self {
        Self { seed, count, size, max_cycles: 2.0, ndvi_threshold: -0.1, noise_std: 0.02, noise_radius: 2 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::InvalidArgument("synth count must be positive".into()));
        }
        if self.size < 16 || self.size % 16 != 0 {
            return Err(Error::InvalidArgument(format!(
                "synth size must be a positive multiple of 16, got {}",
                self.size
            )));
        }
        if !(self.max_cycles > 0.0 && self.noise_std >= 0.0) {
            return Err(Error::InvalidArgument("synth frequencies and noise must be nonnegative".into()));
        }
        Ok(())
    }
}

/// One generated tile.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthTile {
    /// `BANDS`-channel imagery in `[0, 1]`.
    pub x: RasterGrid,
    /// Density in `[0, 1]` everywhere; non-forest pixels are low.
    pub y: RasterGrid,
    pub mask: ForestMask,
}

/// Noise-free density for one pixel's band values.
pub fn density_of(b: &[f64; BANDS]) -> f64 {
    let ndvi = ndvi(b);
    let vigor = 1.0 / (1.0 + (-8.0 * (ndvi - 0.1)).exp());
    let structure = 0.5 + 0.5 * (std::f64::consts::PI * (b[0] + b[1])).cos();
    0.05 + 0.85 * vigor * (0.3 + 0.7 * structure * structure)
}

pub fn ndvi(b: &[f64; BANDS]) -> f64 {
    (b[NIR] - b[RED]) / (b[NIR] + b[RED] + 1e-6)
}

fn field(rng: &mut Rng, size: usize, max_cycles: f64) -> Vec<f64> {
    let mut waves = Vec::with_capacity(WAVES);
    for _ in 0..WAVES {
        let k = max_cycles / 64.0 * std::f64::consts::TAU;
        let (fx, fy) = ((2.0 * rng.uniform() - 1.0) * k, (2.0 * rng.uniform() - 1.0) * k);
        let phase = rng.uniform() * std::f64::consts::TAU;
        let amp = 0.5 + rng.uniform();
        waves.push((fx, fy, phase, amp));
    }
    let total: f64 = waves.iter().map(|w| w.3).sum();
    let mut out = Vec::with_capacity(size * size);
    for r in 0..size {
        for c in 0..size {
            let s: f64 = waves.iter().map(|&(fx, fy, p, a)| a * (fx * c as f64 + fy * r as f64 + p).cos()).sum();
            out.push(0.5 + 0.5 * s / total);
        }
    }
    out
}

fn box_blur(v: &[f64], size: usize, radius: usize) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for r in 0..size {
        for c in 0..size {
            let (r0, r1) = (r.saturating_sub(radius), (r + radius).min(size - 1));
            let (c0, c1) = (c.saturating_sub(radius), (c + radius).min(size - 1));
            let mut s = 0.0;
            for rr in r0..=r1 {
                for cc in c0..=c1 {
                    s += v[rr * size + cc];
                }
            }
            out[r * size + c] = s / ((r1 - r0 + 1) * (c1 - c0 + 1)) as f64;
        }
    }
    out
}

/// Tile `index` of the dataset described by `params`.
pub fn generate_tile(params: &SynthParams, index: usize) -> Result<SynthTile> {
    let size = params.size;
    let mut rng = Rng::new(params.seed).derive(index as u64);
    let bands: Vec<Vec<f64>> = (0..BANDS).map(|_| field(&mut rng, size, params.max_cycles)).collect();
    let white: Vec<f64> = (0..size * size).map(|_| rng.normal()).collect();
    let smooth = box_blur(&white, size, params.noise_radius);
    let sd = (smooth.iter().map(|v| v * v).sum::<f64>() / smooth.len() as f64).sqrt().max(1e-12);
    let n = size * size;
    let mut x = Vec::with_capacity(BANDS * n);
    for b in &bands {
        x.extend(b.iter().map(|&v| v as f32));
    }
    let mut y = Vec::with_capacity(n);
    let mut forest = Vec::with_capacity(n);
    for i in 0..n {
        let b = [bands[0][i], bands[1][i], bands[2][i], bands[3][i]];
        let is_forest = ndvi(&b) > params.ndvi_threshold;
        let d = density_of(&b) + params.noise_std * smooth[i] / sd;
        let d = if is_forest { d } else { 0.1 * d };
        y.push(d.clamp(0.0, 1.0) as f32);
        forest.push(is_forest);
    }
    Ok(SynthTile {
        x: RasterGrid::new(size, size, BANDS, x)?,
        y: RasterGrid::new(size, size, 1, y)?,
        mask: ForestMask::from_fn(size, size, |r, c| forest[r * size + c])?,
    })
}

pub fn generate(params: &SynthParams) -> Result<Vec<SynthTile>> {
    params.validate()?;
    (0..params.count).map(|i| generate_tile(params, i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_bounded() {
        let p = SynthParams::new(3, 2, 16);
        let a = generate(&p).unwrap();
        assert_eq!(a, generate(&p).unwrap());
        for t in &a {
            assert!(t.x.values().iter().chain(t.y.values()).all(|v| (0.0..=1.0).contains(v)));
        }
        assert_ne!(a[0].x, a[1].x);
    }

    #[test]
    fn size_checked() {
        assert!(generate(&SynthParams::new(0, 1, 20)).is_err());
        assert!(generate(&SynthParams::new(0, 0, 16)).is_err());
    }
}
