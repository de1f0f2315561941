use serde::{Deserialize, Serialize};

use super::attention::{Fusion, FusionSpec};
use super::layers::{Conv, Init, Linear};
use super::upsample::{check_doubling, ImplicitUpsampler};
use crate::numerics::{ParamStore, Rng, Scalar, Tape, Tensor, Var};
use crate::{Error, Result};

/// Sinusoidal embedding of the noise level followed by a two-layer MLP.
#[derive(Clone, Debug)]
pub struct TimeEmbedding {
    pub dim: usize,
    pub l1: Linear,
    pub l2: Linear,
}

/// Width of the sinusoidal encoding.
pub const SINUSOID_DIM: usize = 64;

impl TimeEmbedding {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            dim,
            l1: Linear::new(store, &format!("{name}.l1"), SINUSOID_DIM, dim, Init::He, rng)?,
            l2: Linear::new(store, &format!("{name}.l2"), dim, dim, Init::Lecun, rng)?,
        })
    }

    pub fn param_count(dim: usize) -> u64 {
        Linear::param_count(SINUSOID_DIM, dim) + Linear::param_count(dim, dim)
    }

    /// Sinusoids of `1000 · √γ` at geometric frequencies.
    pub fn sinusoid(gamma: f64) -> Vec<f64> {
        let s = 1000.0 * gamma.max(0.0).sqrt();
        let half = SINUSOID_DIM / 2;
        let mut out = Vec::with_capacity(SINUSOID_DIM);
        for i in 0..half {
            let freq = (-(10000f64.ln()) * i as f64 / half as f64).exp();
            out.push((s * freq).sin());
        }
        for i in 0..half {
            let freq = (-(10000f64.ln()) * i as f64 / half as f64).exp();
            out.push((s * freq).cos());
        }
        out
    }

    /// `dim x 1` embedding.
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, gamma: f64) -> Result<Var> {
        let e = Tensor::from_f64(&[SINUSOID_DIM, 1], &Self::sinusoid(gamma))?;
        let e = tape.constant(e);
        let h = self.l1.forward(tape, store, e)?;
        let h = tape.relu(h);
        self.l2.forward(tape, store, h)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UNetConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    /// Two widths per level, shallowest first; the last level is the
    /// bottleneck.
    pub channels: Vec<usize>,
    pub cond_channels: usize,
    pub time_dim: usize,
    pub upsampler_hidden: usize,
    /// Cross-attention fusion with the condition pyramid; `None` disables it.
    pub fusion: Option<FusionSpec>,
}

impl UNetConfig {
    pub fn levels(&self) -> usize {
        self.channels.len() / 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.len() < 2 || self.channels.len() % 2 != 0 {
            return Err(Error::invalid(format!(
                "UNet needs two widths per level, got {}",
                self.channels.len()
            )));
        }
        if self.channels.iter().any(|&c| c == 0)
            || [self.in_channels, self.out_channels, self.time_dim, self.upsampler_hidden, self.cond_channels]
                .contains(&0)
        {
            return Err(Error::invalid("UNet widths must be positive"));
        }
        if let Some(spec) = &self.fusion {
            for i in self.fused_levels() {
                spec.validate(self.level_out(i)).map_err(|e| Error::invalid(format!("level {i}: {e}")))?;
            }
        }
        Ok(())
    }

    fn level_out(&self, i: usize) -> usize {
        self.channels[2 * i + 1]
    }

    fn fused_levels(&self) -> Vec<usize> {
        match &self.fusion {
            Some(spec) => (spec.min_level..self.levels()).collect(),
            None => Vec::new(),
        }
    }

    /// Same layout with a different per-level width tuple.
    pub fn with_channels(&self, channels: &[usize]) -> Self {
        Self { channels: channels.to_vec(), ..self.clone() }
    }

    /// Closed-form parameter count of [`UNet::new`].
    pub fn param_count(&self) -> u64 {
        let l = self.levels();
        let mut total = TimeEmbedding::param_count(self.time_dim);
        let mut cin = self.in_channels;
        for i in 0..l {
            let (a, b) = (self.channels[2 * i], self.channels[2 * i + 1]);
            total += Conv::param_count(cin, a, 3) + Linear::param_count(self.time_dim, a) + Conv::param_count(a, b, 3);
            cin = b;
        }
        for i in (0..l - 1).rev() {
            let below = self.level_out(i + 1);
            let c = self.level_out(i);
            total += ImplicitUpsampler::param_count(below, self.upsampler_hidden, c);
            total += Conv::param_count(2 * c, c, 3) + Linear::param_count(self.time_dim, c) + Conv::param_count(c, c, 3);
        }
        if let Some(spec) = &self.fusion {
            for i in self.fused_levels() {
                total += Fusion::param_count(self.level_out(i), self.cond_channels, spec);
            }
        }
        total + Conv::param_count(self.channels[1], self.out_channels, 1)
    }
}

#[derive(Clone, Debug)]
struct Level {
    conv_a: Conv,
    time: Linear,
    conv_b: Conv,
}

impl Level {
    fn new(store: &mut ParamStore, name: &str, cin: usize, a: usize, b: usize, tdim: usize, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            conv_a: Conv::new(store, &format!("{name}.conv_a"), cin, a, 3, 1, Init::He, rng)?,
            time: Linear::new(store, &format!("{name}.time"), tdim, a, Init::Lecun, rng)?,
            conv_b: Conv::new(store, &format!("{name}.conv_b"), a, b, 3, 1, Init::He, rng)?,
        })
    }

    fn forward<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var, temb: Var) -> Result<Var> {
        let h = self.conv_a.forward(tape, store, x)?;
        let t = self.time.forward(tape, store, temb)?;
        let t = tape.reshape(t, &[self.conv_a.out_channels])?;
        let h = tape.add_channel(h, t)?;
        let h = tape.relu(h);
        let h = self.conv_b.forward(tape, store, h)?;
        Ok(tape.relu(h))
    }
}

/// Noise-prediction UNet with skip connections, implicit upsampling and
/// optional per-level fusion with the condition pyramid.
#[derive(Clone, Debug)]
pub struct UNet {
    pub config: UNetConfig,
    time: TimeEmbedding,
    down: Vec<Level>,
    up: Vec<(ImplicitUpsampler, Level)>,
    fusion: Vec<Option<Fusion>>,
    head: Conv,
}

impl UNet {
    pub fn new(config: &UNetConfig, store: &mut ParamStore, prefix: &str, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let l = config.levels();
        let time = TimeEmbedding::new(store, &format!("{prefix}.time"), config.time_dim, rng)?;
        let mut down = Vec::with_capacity(l);
        let mut cin = config.in_channels;
        for i in 0..l {
            let (a, b) = (config.channels[2 * i], config.channels[2 * i + 1]);
            down.push(Level::new(store, &format!("{prefix}.down{i}"), cin, a, b, config.time_dim, rng)?);
            cin = b;
        }
        let mut up = Vec::with_capacity(l - 1);
        for i in (0..l - 1).rev() {
            let (below, c) = (config.level_out(i + 1), config.level_out(i));
            let d = ImplicitUpsampler::new(store, &format!("{prefix}.up{i}.d"), below, config.upsampler_hidden, c, rng)?;
            let level = Level::new(store, &format!("{prefix}.up{i}"), 2 * c, c, c, config.time_dim, rng)?;
            up.push((d, level));
        }
        let mut fusion = vec![None; l];
        if let Some(spec) = &config.fusion {
            for i in config.fused_levels() {
                let name = format!("{prefix}.fuse{i}");
                fusion[i] = Some(Fusion::new(store, &name, config.level_out(i), config.cond_channels, spec, rng)?);
            }
        }
        let head = Conv::new(store, &format!("{prefix}.head"), config.channels[1], config.out_channels, 1, 1, Init::Lecun, rng)?;
        Ok(Self { config: config.clone(), time, down, up, fusion, head })
    }

    /// Pyramid levels the network reads, beyond full resolution.
    pub fn condition_levels(&self) -> usize {
        self.config.levels() - 1
    }

    /// Predicts noise for input `x` (`in x H x W`) at noise level `gamma`;
    /// `condition[i]` must match level `i`'s resolution where fusion is on.
    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        x: Var,
        gamma: f64,
        condition: &[Var],
    ) -> Result<Var> {
        let (c, h, w) = tape.value(x).dims3()?;
        if c != self.config.in_channels {
            return Err(Error::shape(format!("UNet expects {} input channels, got {c}", self.config.in_channels)));
        }
        let l = self.config.levels();
        let div = 1usize << (l - 1);
        if h % div != 0 || w % div != 0 {
            return Err(Error::shape(format!("{h}x{w} input is not divisible by {div} for {l} levels")));
        }
        let temb = self.time.forward(tape, store, gamma)?;
        let mut skips = Vec::with_capacity(l);
        let mut hcur = x;
        for (i, level) in self.down.iter().enumerate() {
            if i > 0 {
                hcur = tape.max_pool2(hcur)?;
            }
            hcur = level.forward(tape, store, hcur, temb).map_err(|e| at_level("encoder", i, e))?;
            if i + 1 == l {
                hcur = self.fuse(tape, store, hcur, i, condition)?;
            }
            skips.push(hcur);
        }
        for (j, (d, level)) in self.up.iter().enumerate() {
            let i = l - 2 - j;
            let skip = skips[i];
            let (_, sh, sw) = tape.value(skip).dims3()?;
            let (_, ch, cw) = tape.value(hcur).dims3()?;
            check_doubling((ch, cw), (sh, sw)).map_err(|e| at_level("decoder", i, e))?;
            let u = d.forward(tape, store, hcur).map_err(|e| at_level("upsampler", i, e))?;
            let cat = tape.concat(&[u, skip])?;
            hcur = level.forward(tape, store, cat, temb).map_err(|e| at_level("decoder", i, e))?;
            hcur = self.fuse(tape, store, hcur, i, condition)?;
        }
        let y = self.head.forward(tape, store, hcur)?;
        debug_assert_eq!(tape.shape(y), &[self.config.out_channels, h, w]);
        Ok(y)
    }

    fn fuse<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        h: Var,
        level: usize,
        condition: &[Var],
    ) -> Result<Var> {
        match &self.fusion[level] {
            None => Ok(h),
            Some(f) => {
                let cond = condition
                    .get(level)
                    .ok_or_else(|| Error::invalid(format!("no condition features for level {level}")))?;
                f.forward(tape, store, h, *cond).map_err(|e| at_level("fusion", level, e))
            }
        }
    }
}

fn at_level(stage: &str, level: usize, e: Error) -> Error {
    match e {
        Error::Shape(m) => Error::Shape(format!("{stage} level {level}: {m}")),
        other => other,
    }
}
