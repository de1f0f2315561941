//! TOML run configuration. Every section is optional and falls back to the
//! defaults below; unknown keys are rejected.

use std::path::{Path, PathBuf};

use iidm_core::diffusion::{NoiseSchedule, SamplerKind, ScheduleKind, TrainConfig};
use iidm_core::evalkit::SsimParams;
use iidm_core::kd::{BlockwiseConfig, EigenTrainConfig};
use iidm_core::networks::{ExtractorKind, FusionSpec, IidmConfig, VggConfig};
use iidm_core::preprocess::CarbonCoefficients;
use iidm_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::checkpoint::Fingerprint;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    pub kind: ScheduleKind,
    #[serde(rename = "T")]
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    /// Strided sampler steps; `0` selects the full ancestral sampler.
    pub inference_steps: usize,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self { kind: ScheduleKind::Linear, steps: 200, beta_start: 1e-4, beta_end: 0.02, inference_steps: 20 }
    }
}

impl ScheduleSection {
    pub fn schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::new(self.kind, self.steps, self.beta_start, self.beta_end)
    }

    pub fn sampler(&self) -> SamplerKind {
        if self.inference_steps == 0 {
            SamplerKind::Ancestral
        } else {
            SamplerKind::Strided { steps: self.inference_steps }
        }
    }
}

/// Named teacher architecture for the extractor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VggVariant {
    Toy,
    Vgg11,
    Vgg16,
    Vgg19,
}

impl VggVariant {
    pub fn config(self, bands: usize) -> Result<VggConfig> {
        match self {
            VggVariant::Toy => Ok(VggConfig::toy(bands)),
            VggVariant::Vgg11 => VggConfig::variant(11, bands),
            VggVariant::Vgg16 => VggConfig::variant(16, bands),
            VggVariant::Vgg19 => VggConfig::variant(19, bands),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub bands: usize,
    pub extractor: ExtractorKind,
    pub vgg: VggVariant,
    pub kd_channels: Option<Vec<usize>>,
    pub unet_channels: Vec<usize>,
    pub time_dim: usize,
    pub upsampler_hidden: usize,
    pub fusion: Option<FusionSpec>,
}

impl Default for ModelSection {
    fn default() -> Self {
        let toy = IidmConfig::toy(4);
        Self {
            bands: toy.bands,
            extractor: toy.extractor,
            vgg: VggVariant::Toy,
            kd_channels: toy.kd_channels,
            unet_channels: toy.unet_channels,
            time_dim: toy.time_dim,
            upsampler_hidden: toy.upsampler_hidden,
            fusion: Some(FusionSpec { min_level: 2, ..FusionSpec::default() }),
        }
    }
}

impl ModelSection {
    pub fn iidm(&self) -> Result<IidmConfig> {
        let cfg = IidmConfig {
            bands: self.bands,
            extractor: self.extractor,
            vgg: self.vgg.config(self.bands)?,
            kd_channels: self.kd_channels.clone(),
            unet_channels: self.unet_channels.clone(),
            time_dim: self.time_dim,
            upsampler_hidden: self.upsampler_hidden,
            fusion: self.fusion.clone(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KdSection {
    pub mcev_threshold: f64,
    pub eigen_batch: usize,
    pub eigen_epochs: usize,
    pub eigen_lr: f64,
    pub blockwise_epochs: usize,
    pub blockwise_batch: usize,
    pub blockwise_lr: f64,
    /// Channel granularity of distilled UNet widths.
    pub unet_base_multiple: usize,
    /// Distilled UNet widths used by the ablation grid's KD-UNet rows.
    pub unet_channels: Vec<usize>,
}

impl Default for KdSection {
    fn default() -> Self {
        let e = EigenTrainConfig::default();
        let b = BlockwiseConfig::default();
        Self {
            mcev_threshold: 0.85,
            eigen_batch: e.batch_size,
            eigen_epochs: e.epochs,
            eigen_lr: e.lr,
            blockwise_epochs: b.epochs,
            blockwise_batch: b.batch_size,
            blockwise_lr: b.lr,
            unet_base_multiple: 4,
            unet_channels: IidmConfig::toy(4).unet_channels.iter().map(|c| c / 2).collect(),
        }
    }
}

impl KdSection {
    pub fn eigen(&self, seed: u64) -> EigenTrainConfig {
        EigenTrainConfig { batch_size: self.eigen_batch, epochs: self.eigen_epochs, lr: self.eigen_lr, seed }
    }

    pub fn blockwise(&self, seed: u64) -> BlockwiseConfig {
        BlockwiseConfig {
            epochs: self.blockwise_epochs,
            batch_size: self.blockwise_batch,
            lr: self.blockwise_lr,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessSection {
    pub coefficients: CarbonCoefficients,
    pub tile_size: usize,
    pub tile_stride: usize,
}

impl Default for PreprocessSection {
    fn default() -> Self {
        Self { coefficients: CarbonCoefficients::default(), tile_size: 256, tile_stride: 256 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub teacher: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub ssim: SsimParams,
    /// Sampler draws averaged per tile at inference.
    pub samples: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { ssim: SsimParams::default(), samples: 1 }
    }
}

/// Exponential moving average of the weights, updated after every epoch
/// and used for sampling. A decay of 0 disables it.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmaSection {
    pub decay: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Set non-forest pixels of imagery and target to zero before training
    /// and inference.
    pub masked: bool,
}

impl Default for DataSection {
    fn default() -> Self {
        Self { masked: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub schedule: ScheduleSection,
    pub model: ModelSection,
    pub training: TrainConfig,
    pub ema: EmaSection,
    pub data: DataSection,
    pub kd: KdSection,
    pub preprocess: PreprocessSection,
    pub eval: EvalSection,
    pub paths: PathsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            schedule: ScheduleSection::default(),
            model: ModelSection::default(),
            training: TrainConfig::default(),
            ema: EmaSection::default(),
            data: DataSection::default(),
            kd: KdSection::default(),
            preprocess: PreprocessSection::default(),
            eval: EvalSection::default(),
            paths: PathsSection::default(),
        }
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map_or(0, |s| text[..s.start].matches('\n').count() + 1);
            Error::Parse { line, msg: e.message().to_string() }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Parse { line, msg } => Error::Parse { line, msg: format!("{}: {msg}", path.display()) },
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.schedule()?;
        self.schedule.sampler().timesteps(&self.schedule.schedule()?)?;
        self.model.iidm()?;
        if !(0.0..1.0).contains(&self.ema.decay) {
            return Err(invalid("ema.decay must lie in [0, 1)"));
        }
        if self.training.batch_size == 0 || !(self.training.lr > 0.0) {
            return Err(invalid("training needs batch_size > 0 and lr > 0"));
        }
        if !(self.kd.mcev_threshold > 0.0 && self.kd.mcev_threshold <= 1.0) {
            return Err(invalid(format!("kd.mcev_threshold {} outside (0, 1]", self.kd.mcev_threshold)));
        }
        if self.kd.eigen_batch == 0 || self.kd.blockwise_batch == 0 || self.kd.unet_base_multiple == 0 {
            return Err(invalid("kd batch sizes and unet_base_multiple must be positive"));
        }
        self.preprocess.coefficients.validate()?;
        if self.preprocess.tile_size == 0 || self.preprocess.tile_stride == 0 {
            return Err(invalid("tile size and stride must be positive"));
        }
        self.eval.ssim.validate()?;
        if self.eval.samples == 0 {
            return Err(invalid("eval.samples must be positive"));
        }
        Ok(())
    }

    /// Canonical TOML text; the fingerprint hashes this.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| invalid(format!("cannot serialise configuration: {e}")))
    }

    pub fn fingerprint(&self) -> Result<Fingerprint> {
        Ok(Fingerprint::of(&self.to_toml()?))
    }
}
