use super::{ForestMask, RasterGrid};
use crate::{Error, Result};

/// Keeps pixels where the mask is 255 and sets the rest to nodata, in every
/// channel.
pub fn apply_mask(raster: &RasterGrid, mask: &ForestMask) -> Result<RasterGrid> {
    if !raster.same_dims(mask.raster()) {
        return Err(Error::shape(format!(
            "mask is {}x{}, raster is {}x{}",
            mask.width(),
            mask.height(),
            raster.width(),
            raster.height()
        )));
    }
    let mut out = raster.clone();
    let n = raster.pixels();
    for (i, v) in out.values_mut().iter_mut().enumerate() {
        if !mask.is_forest(i % n) {
            *v = f32::NAN;
        }
    }
    Ok(out)
}

/// Reflect index `i` into `0..n` without repeating the edge sample.
fn reflect(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let m = i % period;
    if m < n {
        m
    } else {
        period - m
    }
}

fn tile_starts(dim: usize, size: usize, stride: usize) -> Vec<usize> {
    let count = if dim <= size { 1 } else { (dim - size).div_ceil(stride) + 1 };
    (0..count).map(|i| i * stride).collect()
}

/// Top-left `(row, col)` of each tile, in row-major order.
pub fn tile_origins(
    width: usize,
    height: usize,
    size: usize,
    stride: usize,
) -> Result<Vec<(usize, usize)>> {
    if size == 0 || stride == 0 {
        return Err(Error::invalid("tile size and stride must be positive"));
    }
    let rows = tile_starts(height, size, stride);
    let cols = tile_starts(width, size, stride);
    Ok(rows.iter().flat_map(|&r| cols.iter().map(move |&c| (r, c))).collect())
}

/// Cuts `size x size` tiles every `stride` pixels. Tiles reaching past the
/// right or bottom edge are filled by reflection.
pub fn tile(raster: &RasterGrid, size: usize, stride: usize) -> Result<Vec<RasterGrid>> {
    let origins = tile_origins(raster.width(), raster.height(), size, stride)?;
    let ch = raster.channels();
    let mut tiles = Vec::with_capacity(origins.len());
    for (r0, c0) in origins {
        let mut values = Vec::with_capacity(size * size * ch);
        for c in 0..ch {
            for r in 0..size {
                let rr = reflect(r0 + r, raster.height());
                for col in 0..size {
                    values.push(raster.get(c, rr, reflect(c0 + col, raster.width())));
                }
            }
        }
        tiles.push(RasterGrid::new(size, size, ch, values)?);
    }
    Ok(tiles)
}

/// Reassembles tiles cut by [`tile`] into a `width x height` raster.
/// Overlapping valid values are averaged; padding beyond the edges is
/// dropped.
pub fn mosaic(
    tiles: &[RasterGrid],
    width: usize,
    height: usize,
    size: usize,
    stride: usize,
) -> Result<RasterGrid> {
    let origins = tile_origins(width, height, size, stride)?;
    if tiles.len() != origins.len() {
        return Err(Error::invalid(format!(
            "expected {} tiles for {width}x{height}, got {}",
            origins.len(),
            tiles.len()
        )));
    }
    let ch = tiles[0].channels();
    let mut sum = vec![0.0f64; width * height * ch];
    let mut count = vec![0u32; width * height * ch];
    for (t, &(r0, c0)) in tiles.iter().zip(&origins) {
        if t.width() != size || t.height() != size || t.channels() != ch {
            return Err(Error::shape(format!(
                "tile at {r0}:{c0} is {}x{}x{}",
                t.width(),
                t.height(),
                t.channels()
            )));
        }
        for c in 0..ch {
            for r in 0..size.min(height - r0) {
                for col in 0..size.min(width - c0) {
                    let v = t.get(c, r, col);
                    if !v.is_nan() {
                        let i = (c * height + r0 + r) * width + c0 + col;
                        sum[i] += v as f64;
                        count[i] += 1;
                    }
                }
            }
        }
    }
    let values = sum
        .iter()
        .zip(&count)
        .map(|(&s, &n)| if n == 0 { f32::NAN } else { (s / n as f64) as f32 })
        .collect();
    RasterGrid::new(width, height, ch, values)
}

/// Affine map of valid values onto `[0, 1]`, returning `(normalized, min, max)`.
/// A constant raster maps to 0.
pub fn normalize(raster: &RasterGrid) -> Result<(RasterGrid, f32, f32)> {
    let (lo, hi) = raster
        .values()
        .iter()
        .filter(|v| !v.is_nan())
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if lo > hi {
        return Err(Error::invalid("cannot normalize an all-nodata raster"));
    }
    let span = hi as f64 - lo as f64;
    let mut out = raster.clone();
    for v in out.values_mut().iter_mut().filter(|v| !v.is_nan()) {
        *v = if span > 0.0 { ((*v as f64 - lo as f64) / span) as f32 } else { 0.0 };
    }
    Ok((out, lo, hi))
}

pub fn denormalize(raster: &RasterGrid, min: f32, max: f32) -> RasterGrid {
    let span = max as f64 - min as f64;
    let mut out = raster.clone();
    for v in out.values_mut().iter_mut() {
        *v = (min as f64 + *v as f64 * span) as f32;
    }
    out
}
