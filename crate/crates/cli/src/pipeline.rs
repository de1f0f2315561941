//! Model construction, training state, checkpoints, and tile-level
//! inference and evaluation shared by the commands.

use std::path::Path;

use iidm_core::diffusion::{reverse_sample, train, IidmDenoiser, TrainConfig, TrainingPair};
use iidm_core::evalkit::{MetricAccumulator, MetricReport, OlsAccumulator, OlsModel};
use iidm_core::networks::{Iidm, IidmConfig};
use iidm_core::numerics::{Optimizer, ParamStore, Rng, Tensor};
use iidm_core::preprocess::{apply_mask, ForestMask, RasterGrid};
use iidm_core::{Error, Result};

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::dataset::Tile;

/// RNG streams derived from the run seed.
pub const STREAM_INIT: u64 = 1;
pub const STREAM_TRAIN: u64 = 2;
pub const STREAM_INFER: u64 = 3;

const PARAM_PREFIX: &str = "param.";
const EMA_PREFIX: &str = "ema.";

/// A network with its parameters.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: IidmConfig,
    pub net: Iidm,
    pub store: ParamStore,
}

impl Model {
    /// Freshly initialised model for `cfg`.
    pub fn build(cfg: &RunConfig) -> Result<Self> {
        let config = cfg.model.iidm()?;
        let mut store = ParamStore::new();
        let mut rng = Rng::new(cfg.seed).derive(STREAM_INIT);
        let net = Iidm::new(&config, &mut store, &mut rng)?;
        Ok(Self { config, net, store })
    }

    pub fn denoiser(&self) -> IidmDenoiser<'_> {
        IidmDenoiser { model: &self.net, store: &self.store }
    }

    /// The weights to sample with: the moving average when one is kept.
    pub fn for_inference(&self, state: &TrainState) -> Model {
        match &state.ema {
            Some(ema) => Model { store: ema.clone(), ..self.clone() },
            None => self.clone(),
        }
    }
}

/// `ema <- decay * ema + (1 - decay) * current`, parameter by parameter.
pub fn ema_update(ema: &mut ParamStore, current: &ParamStore, decay: f64) -> Result<()> {
    for (e, c) in ema.iter_mut().zip(current.iter()) {
        e.value = e.value.zip_map(&c.value, |a, b| (decay * a as f64 + (1.0 - decay) * b as f64) as f32)?;
    }
    Ok(())
}

/// Optimizer, sampling stream and loss history of a training run.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub opt: Optimizer,
    pub rng: Rng,
    /// Mean loss of every completed epoch.
    pub curve: Vec<f64>,
    /// Moving average of the weights when `ema.decay > 0`.
    pub ema: Option<ParamStore>,
}

impl TrainState {
    pub fn fresh(cfg: &RunConfig) -> Result<Self> {
        Ok(Self { opt: cfg.training.optimizer()?, rng: Rng::new(cfg.seed).derive(STREAM_TRAIN), curve: Vec::new(), ema: None })
    }

    pub fn epochs_done(&self) -> usize {
        self.curve.len()
    }
}

/// Writes model weights, optimizer moments, the RNG position and the loss
/// history, with `cfg` embedded.
pub fn save(path: &Path, cfg: &RunConfig, model: &Model, state: &TrainState) -> Result<()> {
    let mut ck = Checkpoint::new(&cfg.to_toml()?);
    ck.push_store(PARAM_PREFIX, &model.store);
    if let Some(ema) = &state.ema {
        ck.push_store(EMA_PREFIX, ema);
    }
    let (m, v) = state.opt.moments();
    for (i, (a, b)) in m.iter().zip(v).enumerate() {
        ck.tensors.push((format!("adam.m.{i}"), a.clone()));
        ck.tensors.push((format!("adam.v.{i}"), b.clone()));
    }
    let curve: Vec<String> = state.curve.iter().map(|l| l.to_string()).collect();
    ck.meta = vec![
        ("optimizer.step".into(), state.opt.steps().to_string()),
        ("adam.moments".into(), m.len().to_string()),
        ("rng.seed".into(), state.rng.seed().to_string()),
        ("rng.counter".into(), state.rng.counter().to_string()),
        ("loss_curve".into(), curve.join(",")),
    ];
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    ck.save(path)
}

/// A restored checkpoint.
#[derive(Clone, Debug)]
pub struct Loaded {
    /// Configuration the checkpoint was written with.
    pub config: RunConfig,
    pub model: Model,
    pub state: TrainState,
    /// True when `current` was given and its fingerprint differs.
    pub mismatch: bool,
}

fn meta_num<T: std::str::FromStr>(ck: &Checkpoint, key: &str) -> Result<T> {
    ck.meta(key)
        .ok_or_else(|| Error::Format(format!("checkpoint has no {key:?} entry")))?
        .parse()
        .map_err(|_| Error::Format(format!("checkpoint entry {key:?} is malformed")))
}

/// Restores a checkpoint. The architecture comes from the embedded
/// configuration; optimizer hyperparameters from `current` when given.
pub fn load(path: &Path, current: Option<&RunConfig>) -> Result<Loaded> {
    let expected = current.map(RunConfig::fingerprint).transpose()?;
    let (ck, mismatch) = Checkpoint::load(path, expected.as_ref())?;
    let config = RunConfig::parse(&ck.config)
        .map_err(|e| Error::Format(format!("{}: embedded configuration: {e}", path.display())))?;
    let mut model = Model::build(&config)?;
    ck.restore_store(PARAM_PREFIX, &mut model.store)?;
    let mut opt = current.unwrap_or(&config).training.optimizer()?;
    let n: usize = meta_num(&ck, "adam.moments")?;
    let take = |kind: &str| -> Result<Vec<Tensor>> {
        (0..n)
            .map(|i| {
                let key = format!("adam.{kind}.{i}");
                ck.tensor(&key).cloned().ok_or_else(|| Error::Format(format!("checkpoint has no tensor {key:?}")))
            })
            .collect()
    };
    opt.restore(meta_num(&ck, "optimizer.step")?, take("m")?, take("v")?)?;
    let rng = Rng::with_counter(meta_num(&ck, "rng.seed")?, meta_num(&ck, "rng.counter")?);
    let curve = match ck.meta("loss_curve") {
        Some("") | None => Vec::new(),
        Some(s) => s
            .split(',')
            .map(|v| v.parse().map_err(|_| Error::Format(format!("bad loss value {v:?} in checkpoint"))))
            .collect::<Result<_>>()?,
    };
    let ema = match ck.tensors.iter().any(|(n, _)| n.starts_with(EMA_PREFIX)) {
        true => {
            let mut store = model.store.clone();
            ck.restore_store(EMA_PREFIX, &mut store)?;
            Some(store)
        }
        false => None,
    };
    Ok(Loaded { config, model, state: TrainState { opt, rng, curve, ema }, mismatch })
}

/// Training pairs of every tile with a target.
pub fn pairs(tiles: &[Tile], masked: bool) -> Result<Vec<TrainingPair>> {
    tiles
        .iter()
        .map(|t| t.pair(masked))
        .collect()
}

/// Runs `cfg.training.epochs` further epochs, updating the weight average
/// after each one when `cfg.ema.decay > 0`.
pub fn fit(
    model: &mut Model,
    state: &mut TrainState,
    data: &[TrainingPair],
    cfg: &RunConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<()> {
    let schedule = cfg.schedule.schedule()?;
    let one = TrainConfig { epochs: 1, ..cfg.training.clone() };
    for _ in 0..cfg.training.epochs {
        let epoch = state.epochs_done();
        let curve = train(&model.net, &mut model.store, &mut state.opt, data, &schedule, &one, &mut state.rng, |_, l| {
            on_epoch(epoch, l)
        })?;
        state.curve.extend(curve);
        let decay = cfg.ema.decay;
        if decay > 0.0 {
            match &mut state.ema {
                Some(ema) => ema_update(ema, &model.store, decay)?,
                None => state.ema = Some(model.store.clone()),
            }
        }
    }
    Ok(())
}

/// Model input for imagery `x`: masked to zero outside the forest when
/// requested, nodata filled with zero.
pub fn model_input(x: &RasterGrid, mask: Option<&ForestMask>, masked: bool) -> Result<Tensor> {
    Ok(match (mask, masked) {
        (Some(m), true) => apply_mask(x, m)?.to_tensor(0.0),
        _ => x.to_tensor(0.0),
    })
}

/// Mean of `cfg.eval.samples` reverse-process draws for one tile; nodata
/// outside the mask when one is given. `stream` selects the tile's noise.
pub fn predict(model: &Model, x: &RasterGrid, mask: Option<&ForestMask>, cfg: &RunConfig, stream: u64) -> Result<RasterGrid> {
    let input = model_input(x, mask, cfg.data.masked)?;
    let schedule = cfg.schedule.schedule()?;
    let sampler = cfg.schedule.sampler();
    let mut rng = Rng::new(cfg.seed).derive(STREAM_INFER).derive(stream);
    let shape = [1, x.height(), x.width()];
    let den = model.denoiser();
    let mut acc = vec![0.0f64; x.pixels()];
    for _ in 0..cfg.eval.samples {
        let y = reverse_sample(&input, &shape, &den, &schedule, sampler, &mut rng)?;
        for (a, &v) in acc.iter_mut().zip(y.data()) {
            *a += v as f64;
        }
    }
    let n = cfg.eval.samples as f64;
    let out = RasterGrid::new(x.width(), x.height(), 1, acc.iter().map(|a| (a / n) as f32).collect())?;
    match mask {
        Some(m) => apply_mask(&out, m),
        None => Ok(out),
    }
}

/// Pooled metrics of `predictions` against the tiles' targets over forest
/// pixels.
pub fn score(tiles: &[Tile], predictions: &[RasterGrid], cfg: &RunConfig) -> Result<MetricReport> {
    let mut acc = MetricAccumulator::new(&cfg.eval.ssim)?;
    for (t, p) in tiles.iter().zip(predictions) {
        let y = t.y.as_ref().ok_or_else(|| Error::InvalidArgument(format!("tile {} has no target", t.id)))?;
        acc.add(p, y, t.mask.as_ref())?;
    }
    acc.finish()
}

/// Model predictions for every tile, each with its own noise stream.
pub fn predict_tiles(model: &Model, tiles: &[Tile], cfg: &RunConfig) -> Result<Vec<RasterGrid>> {
    tiles.iter().enumerate().map(|(i, t)| predict(model, &t.x, t.mask.as_ref(), cfg, i as u64)).collect()
}

/// OLS fitted on forest pixels of `train_tiles`.
pub fn fit_ols(train_tiles: &[Tile]) -> Result<OlsModel> {
    let bands = train_tiles.first().ok_or_else(|| Error::InvalidArgument("no training tiles".into()))?.x.channels();
    let mut acc = OlsAccumulator::new(bands);
    for t in train_tiles {
        if let Some(y) = &t.y {
            acc.add(&t.x, y, t.mask.as_ref())?;
        }
    }
    acc.solve()
}

/// OLS predictions, masked like the model's.
pub fn ols_predictions(ols: &OlsModel, tiles: &[Tile]) -> Result<Vec<RasterGrid>> {
    tiles
        .iter()
        .map(|t| {
            let p = ols.predict(&t.x)?;
            match &t.mask {
                Some(m) => apply_mask(&p, m),
                None => Ok(p),
            }
        })
        .collect()
}
