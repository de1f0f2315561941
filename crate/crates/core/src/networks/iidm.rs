use serde::{Deserialize, Serialize};

use super::attention::FusionSpec;
use super::pyramid::ConditionPyramid;
use super::unet::{UNet, UNetConfig};
use super::vgg::{Vgg, VggConfig};
use crate::numerics::{ParamStore, Rng, Scalar, Tape, Tensor, Var};
use crate::{Error, Result};

/// Source of the initial condition features `f0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtractorKind {
    /// `f0` is the input imagery itself.
    None,
    /// Full-width VGG head.
    Vgg,
    /// VGG head at distilled widths.
    KdVgg,
}

impl ExtractorKind {
    pub const ALL: [ExtractorKind; 3] = [ExtractorKind::None, ExtractorKind::Vgg, ExtractorKind::KdVgg];

    pub fn name(self) -> &'static str {
        match self {
            ExtractorKind::None => "none",
            ExtractorKind::Vgg => "vgg",
            ExtractorKind::KdVgg => "kd-vgg",
        }
    }
}

/// Conditional denoiser settings.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IidmConfig {
    pub bands: usize,
    pub extractor: ExtractorKind,
    pub vgg: VggConfig,
    /// Distilled per-layer widths of `vgg`, used by [`ExtractorKind::KdVgg`].
    #[serde(default)]
    pub kd_channels: Option<Vec<usize>>,
    pub unet_channels: Vec<usize>,
    pub time_dim: usize,
    pub upsampler_hidden: usize,
    #[serde(default)]
    pub fusion: Option<FusionSpec>,
}

impl IidmConfig {
    /// Desk-scale model over `bands` input bands.
    pub fn toy(bands: usize) -> Self {
        Self {
            bands,
            extractor: ExtractorKind::KdVgg,
            vgg: VggConfig::toy(bands),
            kd_channels: Some(vec![8, 8, 16, 16]),
            unet_channels: vec![16, 16, 32, 32, 64, 64],
            time_dim: 32,
            upsampler_hidden: 32,
            fusion: Some(FusionSpec::default()),
        }
    }

    /// Extractor architecture, if any.
    pub fn extractor_config(&self) -> Result<Option<VggConfig>> {
        match self.extractor {
            ExtractorKind::None => Ok(None),
            ExtractorKind::Vgg => Ok(Some(self.vgg.clone())),
            ExtractorKind::KdVgg => {
                let widths = self
                    .kd_channels
                    .as_ref()
                    .ok_or_else(|| Error::invalid("kd-vgg extractor needs kd_channels"))?;
                Ok(Some(self.vgg.with_channels(widths)?))
            }
        }
    }

    pub fn condition_channels(&self) -> Result<usize> {
        Ok(match self.extractor_config()? {
            None => self.bands,
            Some(v) => v.head_channels(),
        })
    }

    pub fn unet_config(&self) -> Result<UNetConfig> {
        Ok(UNetConfig {
            in_channels: 1 + self.condition_channels()?,
            out_channels: 1,
            channels: self.unet_channels.clone(),
            cond_channels: self.condition_channels()?,
            time_dim: self.time_dim,
            upsampler_hidden: self.upsampler_hidden,
            fusion: self.fusion.clone(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.vgg.in_channels != self.bands {
            return Err(Error::invalid(format!(
                "extractor reads {} bands, model has {}",
                self.vgg.in_channels, self.bands
            )));
        }
        self.vgg.validate()?;
        self.extractor_config()?;
        self.unet_config()?.validate()
    }

    /// Closed-form parameter count of [`Iidm::new`].
    pub fn param_count(&self) -> Result<u64> {
        let unet = self.unet_config()?;
        let extractor = self.extractor_config()?.map_or(0, |v| v.head_param_count());
        let pyramid = if self.fusion.is_some() {
            ConditionPyramid::param_count(unet.cond_channels, unet.levels() - 1)
        } else {
            0
        };
        Ok(extractor + pyramid + unet.param_count())
    }

    /// Smallest tile edge the model accepts is a multiple of this.
    pub fn size_multiple(&self) -> usize {
        1 << (self.unet_channels.len() / 2).saturating_sub(1)
    }
}

/// Condition features that do not depend on the noisy target.
#[derive(Clone, Debug)]
pub struct Condition {
    pub levels: Vec<Tensor>,
}

/// Noise predictor `ε_θ(x, ỹ_t, γ_t)`: extractor head for `f0`, condition
/// pyramid, and a UNet over `ỹ_t ⊕ f0`.
#[derive(Clone, Debug)]
pub struct Iidm {
    pub config: IidmConfig,
    pub extractor: Option<Vgg>,
    pub pyramid: Option<ConditionPyramid>,
    pub unet: UNet,
}

impl Iidm {
    pub fn new(config: &IidmConfig, store: &mut ParamStore, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let extractor = match config.extractor_config()? {
            Some(v) => {
                let head = v.head_len();
                Some(Vgg::new(&v, head, store, "extractor", &mut rng.derive(1))?)
            }
            None => None,
        };
        let unet_cfg = config.unet_config()?;
        let pyramid = match config.fusion {
            Some(_) => Some(ConditionPyramid::new(
                store,
                "pyramid",
                unet_cfg.cond_channels,
                unet_cfg.levels() - 1,
                &mut rng.derive(2),
            )?),
            None => None,
        };
        let unet = UNet::new(&unet_cfg, store, "unet", &mut rng.derive(3))?;
        Ok(Self { config: config.clone(), extractor, pyramid, unet })
    }

    /// `f0` followed by the pyramid levels, on the tape.
    pub fn condition_vars<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Vec<Var>> {
        let bands = tape.shape(x)[0];
        if bands != self.config.bands {
            return Err(Error::shape(format!("imagery has {bands} bands, model expects {}", self.config.bands)));
        }
        let f0 = match &self.extractor {
            Some(v) => v.head(tape, store, x)?,
            None => x,
        };
        match &self.pyramid {
            Some(p) => p.forward(tape, store, f0),
            None => Ok(vec![f0]),
        }
    }

    /// Evaluates the condition once for reuse across sampling steps.
    pub fn condition(&self, store: &ParamStore, x: &Tensor) -> Result<Condition> {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let vars = self.condition_vars(&mut tape, store, xv)?;
        Ok(Condition { levels: vars.iter().map(|&v| tape.value(v).clone()).collect() })
    }

    /// Noise prediction from precomputed condition features.
    pub fn predict<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        condition: &[Var],
        y_t: Var,
        gamma: f64,
    ) -> Result<Var> {
        let f0 = condition[0];
        let (cy, hy, wy) = tape.value(y_t).dims3()?;
        let (_, hf, wf) = tape.value(f0).dims3()?;
        if cy != 1 || (hy, wy) != (hf, wf) {
            return Err(Error::shape(format!(
                "target {cy}x{hy}x{wy} does not match condition {hf}x{wf}"
            )));
        }
        let input = tape.concat(&[y_t, f0])?;
        self.unet.forward(tape, store, input, gamma, condition)
    }

    /// `ε_θ` for imagery `x` (`bands x H x W`) and noisy target `y_t` (`1 x H x W`).
    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        x: Var,
        y_t: Var,
        gamma: f64,
    ) -> Result<Var> {
        let cond = self.condition_vars(tape, store, x)?;
        self.predict(tape, store, &cond, y_t, gamma)
    }

    /// Copies extractor weights `(w, b)` per head layer, for example from a
    /// distilled student's encoders or a teacher.
    pub fn load_extractor(&self, store: &mut ParamStore, weights: &[(Tensor, Tensor)]) -> Result<()> {
        let v = self.extractor.as_ref().ok_or_else(|| Error::invalid("model has no extractor"))?;
        if weights.len() < v.convs.len() {
            return Err(Error::invalid(format!(
                "{} weight pairs for {} extractor layers",
                weights.len(),
                v.convs.len()
            )));
        }
        for (conv, (w, b)) in v.convs.iter().zip(weights) {
            let (wn, bn) = (store.get(conv.w).name.clone(), store.get(conv.b).name.clone());
            store.set(&wn, w.clone())?;
            store.set(&bn, b.clone())?;
        }
        Ok(())
    }
}
