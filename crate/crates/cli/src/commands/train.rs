use std::path::PathBuf;

use clap::Args;
use iidm_core::diffusion::loss_curve_csv;
use iidm_core::Error;

use super::{required_path, write_text, CliResult, Context};
use crate::checkpoint::Checkpoint;
use crate::dataset;
use crate::pipeline::{self, Model, TrainState};

pub const CHECKPOINT_FILE: &str = "model.iidc";
pub const LOSS_FILE: &str = "loss.csv";

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory with a manifest (overrides `paths.data`).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Continue from this checkpoint up to the configured epoch count.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Total epochs (overrides `training.epochs`).
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Distilled extractor checkpoint from `distill` whose encoder weights
    /// initialise the model's extractor.
    #[arg(long)]
    pub extractor: Option<PathBuf>,
}

pub fn run(ctx: &Context, a: &TrainArgs) -> CliResult<()> {
    let mut cfg = ctx.config.clone();
    if let Some(e) = a.epochs {
        cfg.training.epochs = e;
    }
    let data_dir = required_path(&a.data, &cfg.paths.data, "a dataset directory (--data)")?;
    let tiles = dataset::read(&data_dir)?;
    let data = pipeline::pairs(&tiles, cfg.data.masked)?;
    let (mut model, mut state) = match &a.resume {
        Some(p) => {
            let loaded = pipeline::load(p, Some(&cfg))?;
            log::info!("resuming from {} after {} epochs", p.display(), loaded.state.epochs_done());
            (loaded.model, loaded.state)
        }
        None => {
            let mut model = Model::build(&cfg)?;
            if let Some(p) = &a.extractor {
                load_extractor(&mut model, p)?;
            }
            (model, TrainState::fresh(&cfg)?)
        }
    };
    let remaining = cfg.training.epochs.saturating_sub(state.epochs_done());
    let mut run_cfg = cfg.clone();
    run_cfg.training.epochs = remaining;
    pipeline::fit(&mut model, &mut state, &data, &run_cfg, |e, l| println!("epoch {e}: mean loss {l:.6}"))?;
    let ckpt = ctx.output(CHECKPOINT_FILE)?;
    pipeline::save(&ckpt, &cfg, &model, &state)?;
    write_text(&ctx.output(LOSS_FILE)?, &loss_curve_csv(&state.curve))?;
    println!(
        "train: {} pairs, {} epochs total, checkpoint {}",
        data.len(),
        state.epochs_done(),
        ckpt.display()
    );
    Ok(())
}

/// Copies `student.enc{i}` weights from a distilled checkpoint.
fn load_extractor(model: &mut Model, path: &std::path::Path) -> CliResult<()> {
    let (ck, _) = Checkpoint::load(path, None)?;
    let mut weights = Vec::new();
    for i in 1.. {
        match (ck.tensor(&format!("student.enc{i}.w")), ck.tensor(&format!("student.enc{i}.b"))) {
            (Some(w), Some(b)) => weights.push((w.clone(), b.clone())),
            _ => break,
        }
    }
    if weights.is_empty() {
        return Err(Error::Format(format!("{} holds no student encoder weights", path.display())).into());
    }
    model.net.load_extractor(&mut model.store, &weights)?;
    Ok(())
}
