use serde::{Deserialize, Serialize};

use crate::preprocess::{ForestMask, RasterGrid};
use crate::{Error, Result};

/// Ridge added to the diagonal of the normal equations.
pub const OLS_RIDGE: f64 = 1e-8;

/// Per-band affine regression `y = w · x + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OlsModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl OlsModel {
    /// Prediction raster; nodata where any band is nodata.
    pub fn predict(&self, x: &RasterGrid) -> Result<RasterGrid> {
        if x.channels() != self.weights.len() {
            return Err(Error::shape(format!(
                "{} bands for a {}-band model",
                x.channels(),
                self.weights.len()
            )));
        }
        let mut out = RasterGrid::nodata(x.width(), x.height(), 1)?;
        for i in 0..x.pixels() {
            let mut v = self.bias;
            let mut ok = true;
            for (c, w) in self.weights.iter().enumerate() {
                let b = x.channel(c)[i];
                ok &= b.is_finite();
                v += w * b as f64;
            }
            if ok {
                out.values_mut()[i] = v as f32;
            }
        }
        Ok(out)
    }
}

/// Normal-equation sums `AᵀA`, `Aᵀy` over valid pixels, with `A = [x 1]`.
#[derive(Clone, Debug)]
pub struct OlsAccumulator {
    bands: usize,
    ata: Vec<f64>,
    aty: Vec<f64>,
    n: usize,
}

impl OlsAccumulator {
    pub fn new(bands: usize) -> Self {
        let d = bands + 1;
        Self { bands, ata: vec![0.0; d * d], aty: vec![0.0; d], n: 0 }
    }

    pub fn add(&mut self, x: &RasterGrid, y: &RasterGrid, mask: Option<&ForestMask>) -> Result<()> {
        if x.channels() != self.bands || y.channels() != 1 || (x.width(), x.height()) != (y.width(), y.height()) {
            return Err(Error::shape(format!(
                "OLS needs {} bands and a 1-band target of equal size",
                self.bands
            )));
        }
        let d = self.bands + 1;
        let mut row = vec![1.0; d];
        for i in 0..x.pixels() {
            let t = y.values()[i];
            if !t.is_finite() || mask.is_some_and(|m| !m.is_forest(i)) {
                continue;
            }
            let mut ok = true;
            for c in 0..self.bands {
                let v = x.channel(c)[i];
                ok &= v.is_finite();
                row[c] = v as f64;
            }
            if !ok {
                continue;
            }
            for a in 0..d {
                self.aty[a] += row[a] * t as f64;
                for b in 0..d {
                    self.ata[a * d + b] += row[a] * row[b];
                }
            }
            self.n += 1;
        }
        Ok(())
    }

    pub fn samples(&self) -> usize {
        self.n
    }

    pub fn solve(&self) -> Result<OlsModel> {
        let d = self.bands + 1;
        if self.n <= self.bands {
            return Err(Error::invalid(format!(
                "{} valid pixels for {} bands",
                self.n, self.bands
            )));
        }
        let mut a = self.ata.clone();
        for i in 0..d {
            a[i * d + i] += OLS_RIDGE;
        }
        let theta = cholesky_solve(&a, &self.aty, d)?;
        Ok(OlsModel { weights: theta[..self.bands].to_vec(), bias: theta[self.bands] })
    }
}

/// Solves `A θ = b` for symmetric positive definite `A`.
fn cholesky_solve(a: &[f64], b: &[f64], d: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let s: f64 = a[i * d + j] - (0..j).map(|k| l[i * d + k] * l[j * d + k]).sum::<f64>();
            if i == j {
                if !(s > 0.0) {
                    return Err(Error::invalid(format!(
                        "regressors are rank deficient (pivot {i} = {s:e})"
                    )));
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    let mut z = vec![0.0; d];
    for i in 0..d {
        z[i] = (b[i] - (0..i).map(|k| l[i * d + k] * z[k]).sum::<f64>()) / l[i * d + i];
    }
    let mut x = vec![0.0; d];
    for i in (0..d).rev() {
        x[i] = (z[i] - (i + 1..d).map(|k| l[k * d + i] * x[k]).sum::<f64>()) / l[i * d + i];
    }
    Ok(x)
}

/// Least-squares fit of `y` on the bands of `x` over valid pixels.
pub fn ols_fit(x: &RasterGrid, y: &RasterGrid, mask: Option<&ForestMask>) -> Result<OlsModel> {
    let mut acc = OlsAccumulator::new(x.channels());
    acc.add(x, y, mask)?;
    acc.solve()
}

/// Coefficient of determination over pixels valid in both rasters.
pub fn r_squared(pred: &RasterGrid, truth: &RasterGrid, mask: Option<&ForestMask>) -> Result<f64> {
    if !pred.same_dims(truth) || pred.channels() != truth.channels() {
        return Err(Error::shape("prediction and truth differ in size"));
    }
    let pairs: Vec<(f64, f64)> = pred
        .values()
        .iter()
        .zip(truth.values())
        .enumerate()
        .filter(|(i, (p, t))| p.is_finite() && t.is_finite() && mask.is_none_or(|m| m.is_forest(i % pred.pixels())))
        .map(|(_, (&p, &t))| (p as f64, t as f64))
        .collect();
    if pairs.len() < 2 {
        return Err(Error::invalid("R² needs at least two valid pixels"));
    }
    let mean = pairs.iter().map(|p| p.1).sum::<f64>() / pairs.len() as f64;
    let ss_tot: f64 = pairs.iter().map(|p| (p.1 - mean).powi(2)).sum();
    let ss_res: f64 = pairs.iter().map(|p| (p.1 - p.0).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::invalid("R² is undefined for a constant target"));
    }
    Ok(1.0 - ss_res / ss_tot)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_small() {
        let x = cholesky_solve(&[4.0, 2.0, 2.0, 3.0], &[2.0, 1.0], 2).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-12 && x[1].abs() < 1e-12);
        assert!(cholesky_solve(&[0.0, 0.0, 0.0, 1.0], &[1.0, 1.0], 2).is_err());
    }

    #[test]
    fn too_few_pixels() {
        let x = RasterGrid::filled(1, 1, 2, 0.5).unwrap();
        let y = RasterGrid::filled(1, 1, 1, 0.5).unwrap();
        assert!(ols_fit(&x, &y, None).is_err());
    }
}
