use crate::numerics::Tensor;
use crate::{Error, Result};

/// Multi-channel `f32` raster, channel-major then row-major. `NaN` is the
/// nodata value.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterGrid {
    width: usize,
    height: usize,
    channels: usize,
    values: Vec<f32>,
}

impl RasterGrid {
    pub fn new(width: usize, height: usize, channels: usize, values: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::invalid(format!(
                "raster dimensions must be positive, got {width}x{height}x{channels}"
            )));
        }
        let n = width
            .checked_mul(height)
            .and_then(|v| v.checked_mul(channels))
            .ok_or_else(|| Error::invalid("raster dimensions overflow"))?;
        if values.len() != n {
            return Err(Error::shape(format!(
                "{width}x{height}x{channels} raster needs {n} values, got {}",
                values.len()
            )));
        }
        Ok(Self { width, height, channels, values })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    pub fn nodata(width: usize, height: usize, channels: usize) -> Result<Self> {
        Self::filled(width, height, channels, f32::NAN)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn index(&self, channel: usize, row: usize, col: usize) -> usize {
        (channel * self.height + row) * self.width + col
    }

    pub fn get(&self, channel: usize, row: usize, col: usize) -> f32 {
        self.values[self.index(channel, row, col)]
    }

    pub fn set(&mut self, channel: usize, row: usize, col: usize, v: f32) {
        let i = self.index(channel, row, col);
        self.values[i] = v;
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.pixels();
        &self.values[c * n..(c + 1) * n]
    }

    pub fn same_dims(&self, other: &RasterGrid) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Number of non-nodata values across all channels.
    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|v| !v.is_nan()).count()
    }

    /// `C x H x W` tensor view; nodata becomes `fill`.
    pub fn to_tensor(&self, fill: f32) -> Tensor {
        let data = self.values.iter().map(|&v| if v.is_nan() { fill } else { v }).collect();
        Tensor::new(vec![self.channels, self.height, self.width], data)
            .expect("raster dims are positive")
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let (c, h, w) = t.dims3()?;
        Self::new(w, h, c, t.data().to_vec())
    }

    /// Bitwise equality, treating all NaN payloads as distinct values.
    pub fn bit_eq(&self, other: &RasterGrid) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.channels == other.channels
            && self.values.iter().zip(&other.values).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Single-channel raster whose values are exactly 0 (non-forest) or 255 (forest).
#[derive(Clone, Debug, PartialEq)]
pub struct ForestMask(RasterGrid);

pub const FOREST: f32 = 255.0;

impl ForestMask {
    pub fn new(raster: RasterGrid) -> Result<Self> {
        if raster.channels() != 1 {
            return Err(Error::invalid(format!(
                "mask must have one channel, got {}",
                raster.channels()
            )));
        }
        if let Some(v) = raster.values().iter().find(|&&v| v != 0.0 && v != FOREST) {
            return Err(Error::invalid(format!("mask value {v} is neither 0 nor 255")));
        }
        Ok(Self(raster))
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Result<Self> {
        let mut values = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                values.push(if f(r, c) { FOREST } else { 0.0 });
            }
        }
        Self::new(RasterGrid::new(width, height, 1, values)?)
    }

    pub fn raster(&self) -> &RasterGrid {
        &self.0
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    /// Forest flag of pixel `row * width + col`.
    pub fn is_forest(&self, pixel: usize) -> bool {
        self.0.values()[pixel] == FOREST
    }

    pub fn forest_count(&self) -> usize {
        self.0.values().iter().filter(|&&v| v == FOREST).count()
    }
}
