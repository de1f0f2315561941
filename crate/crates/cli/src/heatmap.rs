//! 8-bit RGBA heatmaps on a fixed viridis-style ramp; nodata is
//! transparent.

use std::path::Path;

use iidm_core::preprocess::RasterGrid;
use iidm_core::{Error, Result};

/// Bumped whenever [`RAMP`] changes.
pub const RAMP_VERSION: u32 = 1;

/// Control points at evenly spaced positions in `[0, 1]`.
pub const RAMP: [[u8; 3]; 9] = [
    [68, 1, 84],
    [71, 44, 122],
    [59, 81, 139],
    [44, 113, 142],
    [33, 144, 141],
    [39, 173, 129],
    [92, 200, 99],
    [170, 220, 50],
    [253, 231, 37],
];

/// Colour of `v` clamped to `[0, 1]`.
pub fn color(v: f32) -> [u8; 4] {
    let v = v.clamp(0.0, 1.0) as f64 * (RAMP.len() - 1) as f64;
    let i = (v.floor() as usize).min(RAMP.len() - 2);
    let f = v - i as f64;
    let mut out = [0, 0, 0, 255];
    for k in 0..3 {
        let (a, b) = (RAMP[i][k] as f64, RAMP[i + 1][k] as f64);
        out[k] = (a + (b - a) * f).round() as u8;
    }
    out
}

/// RGBA pixels of channel 0, mapping `[lo, hi]` onto the ramp.
pub fn render(raster: &RasterGrid, lo: f32, hi: f32) -> Result<Vec<u8>> {
    if !(hi > lo) {
        return Err(Error::InvalidArgument(format!("heatmap range [{lo}, {hi}] is empty")));
    }
    Ok(raster
        .channel(0)
        .iter()
        .flat_map(|&v| if v.is_finite() { color((v - lo) / (hi - lo)) } else { [0, 0, 0, 0] })
        .collect())
}

pub fn encode_png(raster: &RasterGrid, lo: f32, hi: f32) -> Result<Vec<u8>> {
    let pixels = render(raster, lo, hi)?;
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, raster.width() as u32, raster.height() as u32);
        enc.set_color(png::ColorType::Rgba);
        enc.set_depth(png::BitDepth::Eight);
        let png_err = |e: png::EncodingError| Error::Format(format!("PNG: {e}"));
        let mut w = enc.write_header().map_err(png_err)?;
        w.write_image_data(&pixels).map_err(png_err)?;
    }
    Ok(out)
}

pub fn write_png(path: &Path, raster: &RasterGrid, lo: f32, hi: f32) -> Result<()> {
    std::fs::write(path, encode_png(raster, lo, hi)?)?;
    Ok(())
}
