use super::linalg::symmetric_eigen;
use crate::numerics::Tensor;
use crate::{Error, Result};

/// Per-image features of one layer, each a `C x (H·W)` matrix (or a
/// `C x H x W` map, which is flattened).
#[derive(Clone, Debug)]
pub struct FeatureStack {
    pub layer: usize,
    pub maps: Vec<Tensor>,
}

/// Features with the per-image, per-channel spatial mean removed; every
/// map is `C x n`.
#[derive(Clone, Debug)]
pub struct CenteredFeatures {
    pub layer: usize,
    pub maps: Vec<Tensor<f64>>,
}

impl CenteredFeatures {
    pub fn channels(&self) -> usize {
        self.maps[0].shape()[0]
    }

    /// Uncentred second moment `F̄ F̄ᵀ` of image `k`.
    pub fn gram(&self, k: usize) -> Tensor<f64> {
        gram(&self.maps[k])
    }
}

pub(crate) fn gram(f: &Tensor<f64>) -> Tensor<f64> {
    let (c, n) = f.dims2().expect("feature matrix");
    let d = f.data();
    let mut out = vec![0.0; c * c];
    for i in 0..c {
        for j in 0..=i {
            let s: f64 = d[i * n..(i + 1) * n].iter().zip(&d[j * n..(j + 1) * n]).map(|(a, b)| a * b).sum();
            out[i * c + j] = s;
            out[j * c + i] = s;
        }
    }
    Tensor::new(vec![c, c], out).expect("nonempty")
}

/// Removes the spatial mean of every channel, independently per image.
pub fn center(stack: &FeatureStack) -> Result<CenteredFeatures> {
    let first = stack.maps.first().ok_or_else(|| Error::invalid("empty feature stack"))?;
    let channels = first.shape()[0];
    let mut maps = Vec::with_capacity(stack.maps.len());
    for (k, m) in stack.maps.iter().enumerate() {
        if m.shape()[0] != channels {
            return Err(Error::shape(format!(
                "image {k} has {} channels, expected {channels}",
                m.shape()[0]
            )));
        }
        let n = m.numel() / channels;
        if m.shape().len() < 2 || n == 0 {
            return Err(Error::invalid(format!("image {k} has no spatial extent")));
        }
        let mut out = Vec::with_capacity(m.numel());
        for row in m.data().chunks(n) {
            let mean = row.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
            out.extend(row.iter().map(|&v| v as f64 - mean));
        }
        maps.push(Tensor::new(vec![channels, n], out)?);
    }
    Ok(CenteredFeatures { layer: stack.layer, maps })
}

/// Eigen-spectra of per-image covariances and their corpus means.
#[derive(Clone, Debug)]
pub struct SpectrumStats {
    pub layer: usize,
    /// Descending eigenvalues of `F̄ F̄ᵀ / (H·W)` per image.
    pub eigenvalues: Vec<Vec<f64>>,
    /// Mean explained variance per component.
    pub m_ev: Vec<f64>,
    /// Mean cumulative explained variance; `m_cev[l - 1]` covers `l` components.
    pub m_cev: Vec<f64>,
    /// Images skipped because their features have zero variance.
    pub degenerate: usize,
}

impl SpectrumStats {
    pub fn channels(&self) -> usize {
        self.m_ev.len()
    }

    /// `mCEV(l)` for `1 <= l <= C`.
    pub fn mcev(&self, l: usize) -> f64 {
        self.m_cev[l - 1]
    }
}

/// Explained-variance statistics of a centred corpus. Images whose
/// covariance has zero trace carry no spectrum and are left out of the
/// means.
pub fn spectrum(features: &CenteredFeatures) -> Result<SpectrumStats> {
    let c = features.channels();
    let mut eigenvalues = Vec::with_capacity(features.maps.len());
    let mut m_ev = vec![0.0; c];
    let mut m_cev = vec![0.0; c];
    let mut used = 0usize;
    for (k, f) in features.maps.iter().enumerate() {
        let n = f.shape()[1];
        if n < 2 {
            return Err(Error::invalid(format!("image {k} needs at least 2 positions, has {n}")));
        }
        let cov = gram(f).map(|v| v / n as f64);
        let (vals, _) = symmetric_eigen(&cov)?;
        let vals: Vec<f64> = vals.into_iter().map(|v| v.max(0.0)).collect();
        let total: f64 = vals.iter().sum();
        if total > 0.0 {
            used += 1;
            let mut cum = 0.0;
            for (j, &s) in vals.iter().enumerate() {
                cum += s;
                m_ev[j] += s / total;
                m_cev[j] += cum / total;
            }
        }
        eigenvalues.push(vals);
    }
    if used == 0 {
        return Err(Error::invalid(format!(
            "layer {}: every image has zero feature variance",
            features.layer
        )));
    }
    for v in m_ev.iter_mut().chain(m_cev.iter_mut()) {
        *v /= used as f64;
    }
    Ok(SpectrumStats {
        layer: features.layer,
        eigenvalues,
        m_ev,
        m_cev,
        degenerate: features.maps.len() - used,
    })
}

/// Smallest channel count whose mCEV reaches `threshold`. A threshold of
/// 1 or more keeps every channel.
pub fn select_channel_length(stats: &SpectrumStats, threshold: f64) -> Result<usize> {
    if !(threshold > 0.0) {
        return Err(Error::invalid(format!("mCEV threshold must be positive, got {threshold}")));
    }
    let full = stats.channels();
    if threshold >= 1.0 {
        return Ok(full);
    }
    Ok(stats.m_cev.iter().position(|&v| v >= threshold - 1e-12).map_or(full, |i| i + 1))
}

pub const SPECTRUM_HEADER: &str = "layer,channel_index,mEV,mCEV";

/// CSV rows `layer,channel_index,mEV,mCEV` with 1-based channel index.
pub fn spectrum_csv(stats: &[SpectrumStats]) -> String {
    let mut out = String::from(SPECTRUM_HEADER);
    out.push('\n');
    for s in stats {
        for (j, (ev, cev)) in s.m_ev.iter().zip(&s.m_cev).enumerate() {
            out.push_str(&format!("{},{},{ev:.9},{cev:.9}\n", s.layer, j + 1));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stack(maps: Vec<Tensor>) -> FeatureStack {
        FeatureStack { layer: 1, maps }
    }

    #[test]
    fn centering_cases() {
        let c = center(&stack(vec![Tensor::new(vec![1, 2], vec![1.0, 3.0]).unwrap()])).unwrap();
        assert_eq!(c.maps[0].data(), &[-1.0, 1.0]);
        let k = center(&stack(vec![Tensor::full(&[2, 3, 3], 4.0)])).unwrap();
        assert!(k.maps[0].data().iter().all(|&v| v == 0.0));
        assert!(center(&stack(vec![])).is_err());
    }

    #[test]
    fn diag_three_one_gives_three_quarters() {
        // Columns ±√3·e1 and ±e2 give covariance diag(3, 1) / 1.
        let s3 = 3f32.sqrt();
        let f = Tensor::new(vec![2, 4], vec![s3, -s3, 0.0, 0.0, 0.0, 0.0, 1.0, -1.0]).unwrap();
        let stats = spectrum(&center(&stack(vec![f])).unwrap()).unwrap();
        assert!((stats.mcev(1) - 0.75).abs() < 1e-6);
        assert!((stats.mcev(2) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_one_selects_one() {
        let f = Tensor::new(vec![3, 4], vec![1., -1., 2., -2., 2., -2., 4., -4., 0., 0., 0., 0.]).unwrap();
        let stats = spectrum(&center(&stack(vec![f])).unwrap()).unwrap();
        assert!((stats.m_ev[0] - 1.0).abs() < 1e-12);
        assert_eq!(select_channel_length(&stats, 0.85).unwrap(), 1);
        assert_eq!(select_channel_length(&stats, 1.0).unwrap(), 3);
    }

    #[test]
    fn zero_variance_corpus_rejected() {
        let f = Tensor::full(&[2, 4], 1.0);
        assert!(spectrum(&center(&stack(vec![f])).unwrap()).is_err());
    }

    #[test]
    fn csv_has_one_row_per_channel() {
        let f = Tensor::new(vec![2, 2], vec![1., -1., 0.5, -0.5]).unwrap();
        let stats = spectrum(&center(&stack(vec![f])).unwrap()).unwrap();
        let csv = spectrum_csv(&[stats]);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with("layer,channel_index,mEV,mCEV\n1,1,"));
    }
}
