use std::path::PathBuf;

use clap::Args;
use iidm_core::preprocess::{apply_mask, density_map, normalize, parse_survey, tile, ForestMask, RasterGrid};
use iidm_core::Error;

use super::{write_text, CliResult, Context};
use crate::dataset::{self, Tile};
use crate::iidr;

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Survey table `id,v_ha,area_ha,pixels`.
    #[arg(long)]
    pub survey: PathBuf,
    /// Single-band canopy height raster (IIDR).
    #[arg(long)]
    pub canopy: PathBuf,
    /// Forest mask raster (IIDR, 0 or 255). Without it nothing is masked.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Multispectral imagery (IIDR) to pair with the density tiles.
    #[arg(long)]
    pub imagery: Option<PathBuf>,
}

fn check_dims(name: &str, r: &RasterGrid, w: usize, h: usize) -> CliResult<()> {
    if (r.width(), r.height()) != (w, h) {
        return Err(Error::Shape(format!(
            "{name} is {}x{} but the canopy raster is {w}x{h}",
            r.width(),
            r.height()
        ))
        .into());
    }
    Ok(())
}

pub fn run(ctx: &Context, a: &PreprocessArgs) -> CliResult<()> {
    let text = std::fs::read_to_string(&a.survey)
        .map_err(|e| Error::InvalidArgument(format!("{}: {e}", a.survey.display())))?;
    let plaques = parse_survey(&text).map_err(|e| match e {
        Error::Parse { line, msg } => Error::Parse { line, msg: format!("{}: {msg}", a.survey.display()) },
        other => other,
    })?;
    if plaques.is_empty() {
        return Err(Error::InvalidArgument(format!("{}: no plaques", a.survey.display())).into());
    }
    let canopy = iidr::read(&a.canopy)?;
    let (w, h) = (canopy.width(), canopy.height());
    let mask = match &a.mask {
        Some(p) => {
            let r = iidr::read(p)?;
            check_dims("mask", &r, w, h)?;
            Some(ForestMask::new(r)?)
        }
        None => None,
    };
    let imagery = match &a.imagery {
        Some(p) => {
            let r = iidr::read(p)?;
            check_dims("imagery", &r, w, h)?;
            Some(r)
        }
        None => None,
    };
    let pp = &ctx.config.preprocess;
    let density = density_map(&plaques, &canopy, &pp.coefficients)?;
    let masked = match &mask {
        Some(m) => {
            if m.forest_count() == 0 {
                log::warn!("mask marks no forest; the masked density is entirely nodata");
            }
            apply_mask(&density, m)?
        }
        None => density.clone(),
    };
    iidr::write(&ctx.output("density.iidr")?, &density)?;
    iidr::write(&ctx.output("density_masked.iidr")?, &masked)?;

    let (size, stride) = (pp.tile_size, pp.tile_stride);
    let tiles_dir = ctx.out.join("tiles");
    if masked.valid_count() == 0 {
        log::warn!("no valid density pixels; tiles are written without normalisation");
    }
    let (norm, lo, hi) = if masked.valid_count() > 0 { normalize(&masked)? } else { (masked.clone(), 0.0, 0.0) };
    let y_tiles = tile(&norm, size, stride)?;
    let x_tiles = match &imagery {
        Some(x) => Some(tile(x, size, stride)?),
        None => None,
    };
    let m_tiles = match &mask {
        Some(m) => Some(tile(m.raster(), size, stride)?),
        None => None,
    };
    let mut tiles = Vec::with_capacity(y_tiles.len());
    for (i, y) in y_tiles.into_iter().enumerate() {
        let mask = m_tiles.as_ref().map(|t| ForestMask::new(t[i].clone())).transpose()?;
        let tile = match &x_tiles {
            Some(x) => Tile { id: format!("tile{i:05}"), x: x[i].clone(), y: Some(y), mask },
            None => Tile { id: format!("tile{i:05}"), x: y, y: None, mask },
        };
        tiles.push(tile);
    }
    dataset::write(&tiles_dir, &tiles)?;
    write_text(
        &tiles_dir.join("normalization.toml"),
        &format!("# density = min + value * (max - min)\nmin = {lo}\nmax = {hi}\n"),
    )?;
    let total: f64 = density.values().iter().filter(|v| v.is_finite()).map(|&v| v as f64).sum();
    println!(
        "preprocess: {} plaques, total stock {total:.4} Mg, {} tiles of {size}x{size} in {}",
        plaques.len(),
        tiles.len(),
        tiles_dir.display()
    );
    Ok(())
}
