use std::path::PathBuf;

use clap::Args;
use iidm_core::evalkit::{ablation_csv, ablation_grid, metrics, AblationFlags, MetricReport, UNetVariant};
use iidm_core::networks::ExtractorKind;
use iidm_core::preprocess::ForestMask;
use iidm_core::Error;

use super::{write_text, CliResult, Context};
use crate::config::RunConfig;
use crate::dataset;
use crate::iidr;
use crate::pipeline::{self, Model, TrainState};

pub const METRICS_HEADER: &str = "mae,mse,rmse,psnr,ssim,n_valid";

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predicted raster (IIDR).
    #[arg(long, required_unless_present = "ablation")]
    pub pred: Option<PathBuf>,
    /// Reference raster (IIDR).
    #[arg(long, required_unless_present = "ablation")]
    pub truth: Option<PathBuf>,
    /// Forest mask (IIDR); metrics cover forest pixels only.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Train and score one model per ablation row instead.
    #[arg(long, requires_all = ["train", "test"])]
    pub ablation: bool,
    /// Ablation training dataset.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Ablation held-out dataset.
    #[arg(long)]
    pub test: Option<PathBuf>,
}

pub fn format_psnr(p: f64) -> String {
    if p.is_infinite() {
        "inf".into()
    } else {
        format!("{p:.6}")
    }
}

pub fn metrics_csv(r: &MetricReport) -> String {
    format!(
        "{METRICS_HEADER}\n{:.6},{:.6},{:.6},{},{:.6},{}\n",
        r.mae,
        r.mse,
        r.rmse,
        format_psnr(r.psnr),
        r.ssim,
        r.n_valid
    )
}

pub fn run(ctx: &Context, a: &EvalArgs) -> CliResult<()> {
    if a.ablation {
        return ablation(ctx, a);
    }
    let (Some(pred), Some(truth)) = (&a.pred, &a.truth) else {
        return Err(Error::InvalidArgument("--pred and --truth are required".into()).into());
    };
    let (p, t) = (iidr::read(pred)?, iidr::read(truth)?);
    let mask = a.mask.as_ref().map(|m| iidr::read(m).and_then(ForestMask::new)).transpose()?;
    let r = metrics(&p, &t, mask.as_ref(), &ctx.config.eval.ssim)?;
    let text = metrics_csv(&r);
    print!("{text}");
    write_text(&ctx.output("metrics.csv")?, &text)?;
    Ok(())
}

/// Configuration of one ablation row: `kd.unet_channels` for the KD UNet,
/// the configured extractor widths otherwise.
pub fn ablation_config(base: &RunConfig, f: &AblationFlags) -> RunConfig {
    let mut cfg = base.clone();
    cfg.data.masked = f.mask;
    cfg.model.extractor = f.extractor;
    if f.extractor == ExtractorKind::KdVgg && cfg.model.kd_channels.is_none() {
        cfg.model.kd_channels = Some(cfg.model.vgg.config(cfg.model.bands).map(|v| v.channels()).unwrap_or_default());
    }
    if f.unet == UNetVariant::Kd {
        cfg.model.unet_channels = base.kd.unet_channels.clone();
    }
    if !f.fusion {
        cfg.model.fusion = None;
    } else if cfg.model.fusion.is_none() {
        cfg.model.fusion = Some(Default::default());
    }
    cfg
}

fn ablation(ctx: &Context, a: &EvalArgs) -> CliResult<()> {
    let train = dataset::read(a.train.as_ref().expect("required by clap"))?;
    let test = dataset::read(a.test.as_ref().expect("required by clap"))?;
    let rows = ablation_grid(&AblationFlags::grid(), |f| {
        let cfg = ablation_config(&ctx.config, f);
        let data = pipeline::pairs(&train, cfg.data.masked)?;
        let mut model = Model::build(&cfg)?;
        let mut state = TrainState::fresh(&cfg)?;
        pipeline::fit(&mut model, &mut state, &data, &cfg, |_, _| {})?;
        let preds = pipeline::predict_tiles(&model.for_inference(&state), &test, &cfg)?;
        let r = pipeline::score(&test, &preds, &cfg)?;
        println!("{}: rmse {:.4} ssim {:.4}", f.key(), r.rmse, r.ssim);
        Ok(r)
    })?;
    write_text(&ctx.output("ablation.csv")?, &ablation_csv(&rows))?;
    Ok(())
}
