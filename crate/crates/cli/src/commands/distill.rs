use std::path::PathBuf;

use clap::Args;
use iidm_core::kd::{
    center, kd_ratio, select_channel_length, select_unet_channels, spectrum, spectrum_csv, train_blockwise,
    train_global_eigenbases, FeatureStack, Student,
};
use iidm_core::networks::Vgg;
use iidm_core::numerics::{ParamStore, Rng, Tape, Tensor};
use iidm_core::Error;

use super::{required_path, write_text, CliResult, Context};
use crate::checkpoint::Checkpoint;
use crate::dataset;

pub const STREAM_TEACHER: u64 = 4;
pub const STREAM_STUDENT: u64 = 5;
pub const DISTILLED_FILE: &str = "distilled.iidc";

#[derive(Debug, Args)]
pub struct DistillArgs {
    /// Image corpus: a dataset directory whose `x` rasters are used.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Teacher checkpoint with tensors `teacher.conv{i}.w` and `.b`.
    #[arg(long, conflicts_with = "toy_teacher")]
    pub teacher: Option<PathBuf>,
    /// Use a randomly initialised teacher of the configured VGG variant.
    #[arg(long)]
    pub toy_teacher: bool,
    /// mCEV threshold (overrides `kd.mcev_threshold`).
    #[arg(long)]
    pub threshold: Option<f64>,
    /// UNet mode: per-level channel requirements, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub unet_requirements: Option<Vec<usize>>,
    /// UNet mode: channel structure to scale (default `model.unet_channels`).
    #[arg(long, value_delimiter = ',')]
    pub unet_structure: Option<Vec<usize>>,
}

fn tuple(v: &[usize]) -> String {
    format!("({})", v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(","))
}

pub fn run(ctx: &Context, a: &DistillArgs) -> CliResult<()> {
    match &a.unet_requirements {
        Some(req) => unet_mode(ctx, a, req),
        None => corpus_mode(ctx, a),
    }
}

fn unet_mode(ctx: &Context, a: &DistillArgs, req: &[usize]) -> CliResult<()> {
    let cfg = &ctx.config;
    let structure = a.unet_structure.clone().unwrap_or_else(|| cfg.model.unet_channels.clone());
    let selected = select_unet_channels(req, &structure, cfg.kd.unet_base_multiple)?;
    println!("selected UNet channels: {}", tuple(&selected));
    let base = cfg.model.iidm()?.unet_config()?;
    let full = base.with_channels(&structure);
    let small = base.with_channels(&selected);
    if full.validate().is_ok() && small.validate().is_ok() {
        let (n_full, n_small) = (full.param_count(), small.param_count());
        println!("UNet parameters: {n_full} -> {n_small}, kd_ratio {:.2}%", kd_ratio(n_small, n_full)?);
    }
    write_text(
        &ctx.output("unet_plan.csv")?,
        &format!(
            "level,requirement,structure,selected\n{}",
            req.iter()
                .zip(&structure)
                .zip(&selected)
                .enumerate()
                .map(|(i, ((r, s), c))| format!("{},{r},{s},{c}\n", i + 1))
                .collect::<String>()
        ),
    )?;
    Ok(())
}

fn corpus_mode(ctx: &Context, a: &DistillArgs) -> CliResult<()> {
    let cfg = &ctx.config;
    let threshold = a.threshold.unwrap_or(cfg.kd.mcev_threshold);
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidArgument(format!("threshold {threshold} outside (0, 1]")).into());
    }
    let dir = required_path(&a.corpus, &cfg.paths.data, "an image corpus (--corpus)")?;
    let images: Vec<Tensor> = dataset::read(&dir)?.iter().map(|t| t.x.to_tensor(0.0)).collect();

    let vgg_cfg = cfg.model.vgg.config(cfg.model.bands)?;
    let mut tstore = ParamStore::new();
    let mut rng = Rng::new(cfg.seed).derive(STREAM_TEACHER);
    let teacher = Vgg::new(&vgg_cfg, vgg_cfg.depth(), &mut tstore, "teacher", &mut rng)?;
    let teacher_path = a.teacher.clone().or_else(|| cfg.paths.teacher.clone());
    match (&teacher_path, a.toy_teacher) {
        (Some(p), _) => {
            let (ck, _) = Checkpoint::load(p, None)?;
            ck.restore_store("", &mut tstore)?;
        }
        (None, true) => log::info!("using a randomly initialised teacher"),
        (None, false) => {
            return Err(Error::InvalidArgument("a teacher checkpoint (--teacher) or --toy-teacher is required".into()).into())
        }
    }

    let depth = teacher.built_layers();
    let mut stacks: Vec<FeatureStack> = (1..=depth).map(|layer| FeatureStack { layer, maps: Vec::new() }).collect();
    for img in &images {
        let mut tape = Tape::new();
        let x = tape.constant(img.clone());
        for (s, v) in stacks.iter_mut().zip(teacher.features(&mut tape, &tstore, x, depth, true)?) {
            s.maps.push(tape.value(v).clone());
        }
    }
    let centered = stacks.iter().map(center).collect::<Result<Vec<_>, _>>()?;
    let stats = centered.iter().map(spectrum).collect::<Result<Vec<_>, _>>()?;
    write_text(&ctx.output("spectrum.csv")?, &spectrum_csv(&stats))?;
    let plan = stats.iter().map(|s| select_channel_length(s, threshold)).collect::<Result<Vec<_>, _>>()?;
    let mut plan_csv = String::from("layer,teacher_channels,selected,mcev\n");
    for (s, &p) in stats.iter().zip(&plan) {
        plan_csv.push_str(&format!("{},{},{p},{:.6}\n", s.layer, s.channels(), s.mcev(p)));
        if s.degenerate > 0 {
            log::warn!("layer {}: {} images with zero feature variance skipped", s.layer, s.degenerate);
        }
    }
    write_text(&ctx.output("plan.csv")?, &plan_csv)?;
    println!("channel plan: {}", tuple(&plan));

    let bases = train_global_eigenbases(&centered, &plan, &cfg.kd.eigen(cfg.seed))?;
    for b in &bases {
        log::info!("layer {} eigenbasis ‖WWᵀ − I‖_F = {:e}", b.layer, b.orthonormality_error());
    }
    let mut student = Student::new(&teacher, &plan, &mut Rng::new(cfg.seed).derive(STREAM_STUDENT))?;
    let losses = train_blockwise(&mut student, &teacher, &tstore, &bases, &images, &cfg.kd.blockwise(cfg.seed))?;
    for l in &losses {
        log::info!("pair {}: encoder loss {:.6}, decoder loss {:.6}", l.index, l.encoder, l.decoder);
    }

    let mut ck = Checkpoint::new(&cfg.to_toml()?);
    for p in &student.pairs {
        ck.push_store("student.", &p.store);
    }
    for b in &bases {
        ck.tensors.push((format!("eigenbasis.{}", b.layer), b.matrix().cast()));
    }
    ck.meta.push(("plan".into(), plan.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")));
    ck.meta.push(("mcev_threshold".into(), threshold.to_string()));
    let path = ctx.output(DISTILLED_FILE)?;
    ck.save(&path)?;

    let (n_teacher, n_student) = (vgg_cfg.param_count(), vgg_cfg.with_channels(&plan)?.param_count());
    println!(
        "extractor parameters: {n_teacher} -> {n_student}, kd_ratio {:.2}%",
        kd_ratio(n_student, n_teacher)?
    );
    println!("distilled checkpoint: {}", path.display());
    Ok(())
}
