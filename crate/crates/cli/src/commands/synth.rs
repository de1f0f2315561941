use clap::Args;

use super::{write_text, CliResult, Context};
use crate::dataset::{self, Tile};
use crate::synth::{generate, SynthParams};
use iidm_core::Error;

pub const PARAMS_FILE: &str = "synth.toml";

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Tiles to generate.
    #[arg(long, default_value_t = 16)]
    pub count: usize,
    /// Tile side in pixels, a multiple of 16.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    /// Tiles held out into `test/`; the rest go to `train/`. With 0 all
    /// tiles go to the output directory itself.
    #[arg(long, default_value_t = 0)]
    pub holdout: usize,
}

pub fn run(ctx: &Context, a: &SynthArgs) -> CliResult<()> {
    let params = SynthParams::new(ctx.config.seed, a.count, a.size);
    if a.holdout >= a.count && a.holdout > 0 {
        return Err(Error::InvalidArgument(format!("holdout {} leaves no training tiles of {}", a.holdout, a.count)).into());
    }
    let tiles: Vec<Tile> = generate(&params)?
        .into_iter()
        .enumerate()
        .map(|(i, t)| Tile { id: format!("tile{i:05}"), x: t.x, y: Some(t.y), mask: Some(t.mask) })
        .collect();
    std::fs::create_dir_all(&ctx.out)?;
    if a.holdout == 0 {
        dataset::write(&ctx.out, &tiles)?;
    } else {
        let (train, test) = tiles.split_at(a.count - a.holdout);
        dataset::write(&ctx.out.join("train"), train)?;
        dataset::write(&ctx.out.join("test"), test)?;
    }
    let text = toml::to_string(&params).map_err(|e| Error::Format(e.to_string()))?;
    write_text(&ctx.out.join(PARAMS_FILE), &text)?;
    println!("synth: {} tiles of {}x{} written to {}", a.count, a.size, a.size, ctx.out.display());
    Ok(())
}
