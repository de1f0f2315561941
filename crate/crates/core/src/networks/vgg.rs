use serde::{Deserialize, Serialize};

use super::layers::{Conv, Init};
use crate::numerics::{ParamStore, Rng, Scalar, Tape, Var};
use crate::{Error, Result};

/// One 3x3 conv + ReLU layer, optionally preceded by 2x2 max pooling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VggLayer {
    pub channels: usize,
    #[serde(default)]
    pub pool_before: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VggConfig {
    pub in_channels: usize,
    pub layers: Vec<VggLayer>,
}

fn layers_from(spec: &[usize]) -> Vec<VggLayer> {
    // 0 marks a pool in front of the next conv.
    let mut out = Vec::new();
    let mut pool = false;
    for &c in spec {
        if c == 0 {
            pool = true;
        } else {
            out.push(VggLayer { channels: c, pool_before: pool });
            pool = false;
        }
    }
    out
}

impl VggConfig {
    /// Convolutional part of VGG-11, -16 or -19.
    pub fn variant(depth: usize, in_channels: usize) -> Result<Self> {
        let spec: &[usize] = match depth {
            11 => &[64, 0, 128, 0, 256, 256, 0, 512, 512, 0, 512, 512],
            16 => &[64, 64, 0, 128, 128, 0, 256, 256, 256, 0, 512, 512, 512, 0, 512, 512, 512],
            19 => &[
                64, 64, 0, 128, 128, 0, 256, 256, 256, 256, 0, 512, 512, 512, 512, 0, 512, 512,
                512, 512,
            ],
            _ => return Err(Error::invalid(format!("unknown VGG depth {depth}"))),
        };
        Ok(Self { in_channels, layers: layers_from(spec) })
    }

    /// Desk-scale teacher: two layers at full resolution, two after one pool.
    pub fn toy(in_channels: usize) -> Self {
        Self { in_channels, layers: layers_from(&[32, 32, 0, 64, 64]) }
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn channels(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.channels).collect()
    }

    /// Same structure with new per-layer widths, each no larger than before.
    pub fn with_channels(&self, channels: &[usize]) -> Result<Self> {
        if channels.len() != self.layers.len() {
            return Err(Error::invalid(format!(
                "{} widths for {} layers",
                channels.len(),
                self.layers.len()
            )));
        }
        let mut layers = self.layers.clone();
        for (i, (l, &c)) in layers.iter_mut().zip(channels).enumerate() {
            if c == 0 || c > l.channels {
                return Err(Error::invalid(format!(
                    "layer {} width {c} outside 1..={}",
                    i + 1,
                    l.channels
                )));
            }
            l.channels = c;
        }
        Ok(Self { in_channels: self.in_channels, layers })
    }

    /// Layers before the first pooling, which keep full resolution.
    pub fn head_len(&self) -> usize {
        self.layers.iter().position(|l| l.pool_before).unwrap_or(self.layers.len())
    }

    pub fn head_channels(&self) -> usize {
        self.layers[self.head_len() - 1].channels
    }

    fn count(&self, upto: usize) -> u64 {
        let mut cin = self.in_channels;
        let mut total = 0;
        for l in &self.layers[..upto] {
            total += Conv::param_count(cin, l.channels, 3);
            cin = l.channels;
        }
        total
    }

    /// `Σ (9 · C_in · C_out + C_out)` over all layers.
    pub fn param_count(&self) -> u64 {
        self.count(self.layers.len())
    }

    pub fn head_param_count(&self) -> u64 {
        self.count(self.head_len())
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.layers.is_empty() {
            return Err(Error::invalid("VGG config needs input channels and at least one layer"));
        }
        if self.layers[0].pool_before {
            return Err(Error::invalid("the first VGG layer cannot pool"));
        }
        if self.layers.iter().any(|l| l.channels == 0) {
            return Err(Error::invalid("VGG layer widths must be positive"));
        }
        Ok(())
    }
}

/// VGG-style convolutional stack. `upto` limits construction to the first
/// layers (for example only the full-resolution head).
#[derive(Clone, Debug)]
pub struct Vgg {
    pub config: VggConfig,
    pub convs: Vec<Conv>,
}

impl Vgg {
    pub fn new(
        config: &VggConfig,
        upto: usize,
        store: &mut ParamStore,
        prefix: &str,
        rng: &mut Rng,
    ) -> Result<Self> {
        config.validate()?;
        let upto = upto.min(config.depth());
        let mut cin = config.in_channels;
        let mut convs = Vec::with_capacity(upto);
        for (i, l) in config.layers[..upto].iter().enumerate() {
            let name = format!("{prefix}.conv{}", i + 1);
            convs.push(Conv::new(store, &name, cin, l.channels, 3, 1, Init::He, rng)?);
            cin = l.channels;
        }
        Ok(Self { config: config.clone(), convs })
    }

    pub fn built_layers(&self) -> usize {
        self.convs.len()
    }

    /// Layer `n` (0-based): optional pool, conv, ReLU.
    pub fn block<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        x: Var,
        n: usize,
        frozen: bool,
    ) -> Result<Var> {
        let mut h = x;
        if self.config.layers[n].pool_before {
            h = tape.max_pool2(h)?;
        }
        let y = self.convs[n].apply(tape, store, h, frozen)?;
        Ok(tape.relu(y))
    }

    /// Outputs of the first `upto` layers.
    pub fn features<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        x: Var,
        upto: usize,
        frozen: bool,
    ) -> Result<Vec<Var>> {
        let cin = tape.shape(x)[0];
        if cin != self.config.in_channels {
            return Err(Error::shape(format!(
                "image has {cin} channels, extractor expects {}",
                self.config.in_channels
            )));
        }
        if upto > self.convs.len() {
            return Err(Error::invalid(format!("only {} layers are built", self.convs.len())));
        }
        let mut out = Vec::with_capacity(upto);
        let mut h = x;
        for n in 0..upto {
            h = self.block(tape, store, h, n, frozen)?;
            out.push(h);
        }
        Ok(out)
    }

    /// Full-resolution features `f0` from the layers before the first pool.
    pub fn head<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let n = self.config.head_len().min(self.convs.len());
        let f = self.features(tape, store, x, n, false)?;
        Ok(*f.last().expect("at least one layer"))
    }
}
