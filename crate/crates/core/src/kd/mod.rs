//! PCA-based knowledge distillation: feature spectra and channel selection,
//! global eigenbases, and blockwise encoder/decoder training.

mod blockwise;
mod eigenbasis;
pub mod linalg;
mod select;
mod spectrum;

pub use blockwise::{
    decoder_loss, encoder_distill_loss, train_blockwise, train_pair, BlockwiseConfig, DecoderLoss,
    PairLoss, Student, StudentPair, DIVERGENCE_LIMIT,
};
pub use eigenbasis::{
    pca_optimum, train_eigenbasis, train_global_eigenbases, EigenTrainConfig, Eigenbasis,
    ORTHONORMAL_TOL,
};
pub use select::{kd_ratio, select_unet_channels};
pub use spectrum::{
    center, select_channel_length, spectrum, spectrum_csv, CenteredFeatures, FeatureStack,
    SpectrumStats, SPECTRUM_HEADER,
};
