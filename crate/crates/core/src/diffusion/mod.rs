//! Noise schedules, forward corruption, the noise-prediction objective,
//! training and reverse sampling.

mod check;
mod denoiser;
mod forward;
mod loss;
mod sampler;
mod schedule;
mod train;

pub use check::{check_denoiser, DenoiserObjective};
pub use denoiser::{Denoiser, DenoiserContext, IidmDenoiser, OracleDenoiser, SamplerCache, ZeroDenoiser};
pub use forward::{forward_sample, forward_step, mix};
pub use loss::{training_loss, training_loss_value, TrainingPair};
pub use sampler::{reverse_sample, reverse_sample_from, SamplerKind};
pub use schedule::{NoiseSchedule, ScheduleKind};
pub use train::{loss_curve_csv, train, TrainConfig, LOSS_CURVE_HEADER, LOSS_LIMIT};
