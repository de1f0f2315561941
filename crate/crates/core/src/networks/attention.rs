use serde::{Deserialize, Serialize};

use super::layers::{Init, Linear};
use crate::numerics::{ParamStore, Rng, Scalar, Tape, Var};
use crate::{Error, Result};

/// Cross-attention + MLP fusion settings.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionSpec {
    pub heads: usize,
    /// Query/key/value width; `0` means the UNet channel width.
    #[serde(default)]
    pub width: usize,
    /// MLP hidden multiple of the UNet channel width.
    pub mlp_ratio: usize,
    /// Shallowest UNet level that fuses (level 0 is full resolution).
    pub min_level: usize,
}

impl Default for FusionSpec {
    fn default() -> Self {
        Self { heads: 1, width: 0, mlp_ratio: 2, min_level: 1 }
    }
}

impl FusionSpec {
    pub fn width_for(&self, channels: usize) -> usize {
        if self.width == 0 {
            channels
        } else {
            self.width
        }
    }

    pub fn validate(&self, channels: usize) -> Result<()> {
        let d = self.width_for(channels);
        if self.heads == 0 || d % self.heads != 0 || self.mlp_ratio == 0 {
            return Err(Error::invalid(format!(
                "fusion width {d} must split evenly into {} heads, with a positive MLP ratio",
                self.heads
            )));
        }
        Ok(())
    }
}

/// Multi-head attention of `d x n` queries over `d x m` keys/values.
/// Returns the `d x n` output and the per-head `n x m` weight matrices,
/// whose rows are probability vectors.
pub fn cross_attention<T: Scalar>(
    tape: &mut Tape<T>,
    q: Var,
    k: Var,
    v: Var,
    heads: usize,
) -> Result<(Var, Vec<Var>)> {
    let (d, _) = tape.value(q).dims2()?;
    let (dk, m) = tape.value(k).dims2()?;
    let (dv, mv) = tape.value(v).dims2()?;
    if dk != d || dv != d || mv != m {
        return Err(Error::shape(format!("attention q {d}, k {dk}x{m}, v {dv}x{mv}")));
    }
    if heads == 0 || d % heads != 0 {
        return Err(Error::invalid(format!("{heads} heads do not divide width {d}")));
    }
    let dh = d / heads;
    let scale = T::from_f64(1.0 / (dh as f64).sqrt());
    let mut outs = Vec::with_capacity(heads);
    let mut weights = Vec::with_capacity(heads);
    for h in 0..heads {
        let (qh, kh, vh) = if heads == 1 {
            (q, k, v)
        } else {
            (tape.narrow(q, h * dh, dh)?, tape.narrow(k, h * dh, dh)?, tape.narrow(v, h * dh, dh)?)
        };
        let qt = tape.transpose(qh)?;
        let logits = tape.matmul(qt, kh)?;
        let logits = tape.scale(logits, scale);
        let a = tape.softmax_rows(logits)?;
        let at = tape.transpose(a)?;
        outs.push(tape.matmul(vh, at)?);
        weights.push(a);
    }
    let out = if heads == 1 { outs[0] } else { tape.concat(&outs)? };
    Ok((out, weights))
}

/// Queries from UNet features, keys and values from condition features,
/// then an MLP over both; residual connections around each stage.
#[derive(Clone, Debug)]
pub struct Fusion {
    pub heads: usize,
    pub channels: usize,
    pub cond_channels: usize,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub mlp1: Linear,
    pub mlp2: Linear,
}

impl Fusion {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        channels: usize,
        cond_channels: usize,
        spec: &FusionSpec,
        rng: &mut Rng,
    ) -> Result<Self> {
        spec.validate(channels)?;
        let d = spec.width_for(channels);
        let hidden = spec.mlp_ratio * channels;
        Ok(Self {
            heads: spec.heads,
            channels,
            cond_channels,
            q: Linear::new(store, &format!("{name}.q"), channels, d, Init::Lecun, rng)?,
            // A key bias shifts every logit of a query equally, so softmax ignores it.
            k: Linear::unbiased(store, &format!("{name}.k"), cond_channels, d, Init::Lecun, rng)?,
            v: Linear::new(store, &format!("{name}.v"), cond_channels, d, Init::Lecun, rng)?,
            o: Linear::new(store, &format!("{name}.o"), d, channels, Init::Lecun, rng)?,
            mlp1: Linear::new(store, &format!("{name}.mlp1"), channels + cond_channels, hidden, Init::He, rng)?,
            mlp2: Linear::new(store, &format!("{name}.mlp2"), hidden, channels, Init::Lecun, rng)?,
        })
    }

    pub fn param_count(channels: usize, cond_channels: usize, spec: &FusionSpec) -> u64 {
        let d = spec.width_for(channels);
        let hidden = spec.mlp_ratio * channels;
        Linear::param_count(channels, d)
            + 2 * Linear::param_count(cond_channels, d)
            - d as u64
            + Linear::param_count(d, channels)
            + Linear::param_count(channels + cond_channels, hidden)
            + Linear::param_count(hidden, channels)
    }

    /// Fuses `C x H x W` features `u` with `C_f x H x W` condition `f`.
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, u: Var, f: Var) -> Result<Var> {
        let (c, h, w) = tape.value(u).dims3()?;
        let (cf, hf, wf) = tape.value(f).dims3()?;
        if c != self.channels || cf != self.cond_channels || (h, w) != (hf, wf) {
            return Err(Error::shape(format!(
                "fusion of {c}x{h}x{w} features with {cf}x{hf}x{wf} condition, expects {} and {} channels",
                self.channels, self.cond_channels
            )));
        }
        let n = h * w;
        let u2 = tape.reshape(u, &[c, n])?;
        let f2 = tape.reshape(f, &[cf, n])?;
        let q = self.q.forward(tape, store, u2)?;
        let k = self.k.forward(tape, store, f2)?;
        let v = self.v.forward(tape, store, f2)?;
        let (att, _) = cross_attention(tape, q, k, v, self.heads)?;
        let att = self.o.forward(tape, store, att)?;
        let h1 = tape.add(u2, att)?;
        let both = tape.concat(&[h1, f2])?;
        let m = self.mlp1.forward(tape, store, both)?;
        let m = tape.relu(m);
        let m = self.mlp2.forward(tape, store, m)?;
        let out = tape.add(h1, m)?;
        tape.reshape(out, &[c, h, w])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    #[test]
    fn rows_are_distributions() {
        let mut rng = Rng::new(4);
        let mut tape = Tape::<f32>::new();
        let q = tape.constant(rng.normal_tensor(&[4, 5]).unwrap());
        let k = tape.constant(rng.normal_tensor(&[4, 7]).unwrap());
        let v = tape.constant(rng.normal_tensor(&[4, 7]).unwrap());
        let (out, w) = cross_attention(&mut tape, q, k, v, 2).unwrap();
        assert_eq!(tape.shape(out), &[4, 5]);
        for a in w {
            for row in tape.value(a).data().chunks(7) {
                assert!(row.iter().all(|&p| p >= 0.0));
                assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn fusion_keeps_shape() {
        let mut store = ParamStore::new();
        let fu = Fusion::new(&mut store, "f", 4, 3, &FusionSpec::default(), &mut Rng::new(1)).unwrap();
        assert_eq!(store.numel() as u64, Fusion::param_count(4, 3, &FusionSpec::default()));
        let mut tape = Tape::new();
        let u = tape.constant(Tensor::full(&[4, 2, 2], 0.5));
        let f = tape.constant(Tensor::full(&[3, 2, 2], 0.1));
        let y = fu.forward(&mut tape, &store, u, f).unwrap();
        assert_eq!(tape.shape(y), &[4, 2, 2]);
        let bad = tape.constant(Tensor::zeros(&[3, 1, 2]));
        assert!(fu.forward(&mut tape, &store, u, bad).is_err());
    }

    #[test]
    fn bad_head_split_rejected() {
        let spec = FusionSpec { heads: 3, ..Default::default() };
        assert!(spec.validate(4).is_err());
    }
}
