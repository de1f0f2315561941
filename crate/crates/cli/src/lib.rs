//! Command-line surface of the IIDM toolkit: run configuration, the IIDR
//! raster format, checkpoints, synthetic data, heatmaps and the commands.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod heatmap;
pub mod iidr;
pub mod pipeline;
pub mod synth;
