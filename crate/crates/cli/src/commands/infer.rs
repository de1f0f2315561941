use std::path::PathBuf;

use clap::Args;
use iidm_core::preprocess::{apply_mask, mosaic, tile, ForestMask};
use iidm_core::Error;

use super::{required_path, CliResult, Context};
use crate::config::RunConfig;
use crate::pipeline;
use crate::{heatmap, iidr};

#[derive(Debug, Args)]
pub struct InferArgs {
    /// Trained model (overrides `paths.checkpoint`).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Imagery raster (IIDR) with the model's band count.
    #[arg(long)]
    pub input: PathBuf,
    /// Forest mask (IIDR); without it every pixel is estimated.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Tile side (overrides `preprocess.tile_size`; stride follows it).
    #[arg(long)]
    pub tile: Option<usize>,
}

/// Settings for sampling with a trained model: architecture and schedule
/// from the checkpoint, seed, sampler steps and draws from the current run.
pub fn sampling_config(trained: &RunConfig, current: &RunConfig) -> RunConfig {
    let mut cfg = trained.clone();
    cfg.seed = current.seed;
    cfg.schedule.inference_steps = current.schedule.inference_steps;
    cfg.eval = current.eval.clone();
    cfg
}

pub fn run(ctx: &Context, a: &InferArgs) -> CliResult<()> {
    let path = required_path(&a.checkpoint, &ctx.config.paths.checkpoint, "a checkpoint (--checkpoint)")?;
    let loaded = pipeline::load(&path, Some(&ctx.config))?;
    let cfg = sampling_config(&loaded.config, &ctx.config);
    let model = loaded.model.for_inference(&loaded.state);
    let x = iidr::read(&a.input)?;
    if x.channels() != loaded.model.config.bands {
        return Err(Error::Shape(format!(
            "input has {} bands, the model expects {}",
            x.channels(),
            loaded.model.config.bands
        ))
        .into());
    }
    let mask = match &a.mask {
        Some(p) => {
            let r = iidr::read(p)?;
            if (r.width(), r.height()) != (x.width(), x.height()) {
                return Err(Error::Shape(format!(
                    "mask is {}x{} but the input is {}x{}",
                    r.width(),
                    r.height(),
                    x.width(),
                    x.height()
                ))
                .into());
            }
            Some(ForestMask::new(r)?)
        }
        None => None,
    };
    let size = a.tile.unwrap_or(ctx.config.preprocess.tile_size);
    let stride = if a.tile.is_some() { size } else { ctx.config.preprocess.tile_stride };
    let multiple = loaded.model.config.size_multiple();
    if size % multiple != 0 {
        return Err(Error::InvalidArgument(format!("tile size {size} is not a multiple of {multiple}")).into());
    }
    let x_tiles = tile(&x, size, stride)?;
    let m_tiles = mask.as_ref().map(|m| tile(m.raster(), size, stride)).transpose()?;
    let mut preds = Vec::with_capacity(x_tiles.len());
    for (i, xt) in x_tiles.iter().enumerate() {
        let mt = m_tiles.as_ref().map(|t| ForestMask::new(t[i].clone())).transpose()?;
        preds.push(pipeline::predict(&model, xt, mt.as_ref(), &cfg, i as u64)?);
        log::info!("tile {}/{}", i + 1, x_tiles.len());
    }
    let mut estimate = mosaic(&preds, x.width(), x.height(), size, stride)?;
    if let Some(m) = &mask {
        estimate = apply_mask(&estimate, m)?;
    }
    let out = ctx.output("estimate.iidr")?;
    iidr::write(&out, &estimate)?;
    let png = ctx.output("estimate.png")?;
    heatmap::write_png(&png, &estimate, 0.0, 1.0)?;
    println!("infer: {} tiles, estimate {} and {}", x_tiles.len(), out.display(), png.display());
    Ok(())
}
