//! Denoiser building blocks: VGG-style extractor, condition pyramid,
//! cross-attention fusion, implicit upsampling and the UNet.

mod attention;
mod iidm;
mod layers;
mod pyramid;
mod unet;
mod upsample;
mod vgg;

pub use attention::{cross_attention, Fusion, FusionSpec};
pub use iidm::{Condition, ExtractorKind, Iidm, IidmConfig};
pub use layers::{center_rows, upsample_nearest, Conv, Init, Linear};
pub use pyramid::ConditionPyramid;
pub use unet::{TimeEmbedding, UNet, UNetConfig, SINUSOID_DIM};
pub use upsample::{check_doubling, ImplicitUpsampler, CELL_OFFSET};
pub use vgg::{Vgg, VggConfig, VggLayer};
