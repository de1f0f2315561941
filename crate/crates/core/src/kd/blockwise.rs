//! Sequential encoder/decoder distillation against a VGG-style teacher.
//!
//! Pair `N` holds `enc_N` (optional 2x2 max pool, 3x3 conv, ReLU) mapping
//! student features of layer `N - 1` to layer `N`, and `dec_N` (optional
//! nearest 2x upsample, 3x3 conv, ReLU except for `dec_1`) mapping them
//! back. Each pair owns its parameters, so training pair `N` cannot touch
//! earlier pairs.

use serde::{Deserialize, Serialize};

use super::eigenbasis::Eigenbasis;
use crate::networks::{center_rows, upsample_nearest, Conv, Init, Vgg};
use crate::numerics::{Optimizer, ParamStore, Rng, Tape, Tensor, Var};
use crate::{Error, Result};

/// Loss above which pair training is declared divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockwiseConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for BlockwiseConfig {
    fn default() -> Self {
        Self { epochs: 20, batch_size: 8, lr: 3e-3, seed: 0 }
    }
}

/// One encoder/decoder pair and its parameters.
#[derive(Clone, Debug)]
pub struct StudentPair {
    /// 1-based layer index.
    pub index: usize,
    pub store: ParamStore,
    pub enc: Conv,
    pub dec: Conv,
    pub pool: bool,
}

impl StudentPair {
    fn new(index: usize, c_prev: usize, c: usize, pool: bool, rng: &mut Rng) -> Result<Self> {
        let mut store = ParamStore::new();
        let enc = Conv::new(&mut store, &format!("enc{index}"), c_prev, c, 3, 1, Init::He, rng)?;
        let init = if index == 1 { Init::Lecun } else { Init::He };
        let dec = Conv::new(&mut store, &format!("dec{index}"), c, c_prev, 3, 1, init, rng)?;
        Ok(Self { index, store, enc, dec, pool })
    }

    pub fn encode(&self, tape: &mut Tape, x: Var, frozen: bool) -> Result<Var> {
        let h = if self.pool { tape.max_pool2(x)? } else { x };
        let y = self.enc.apply(tape, &self.store, h, frozen)?;
        Ok(tape.relu(y))
    }

    pub fn decode(&self, tape: &mut Tape, x: Var, frozen: bool) -> Result<Var> {
        let h = if self.pool { upsample_nearest(tape, x)? } else { x };
        let y = self.dec.apply(tape, &self.store, h, frozen)?;
        Ok(if self.index == 1 { y } else { tape.relu(y) })
    }
}

/// Final loss of one pair.
#[derive(Clone, Debug, PartialEq)]
pub struct PairLoss {
    pub index: usize,
    pub encoder: f64,
    pub decoder: f64,
}

/// Distilled encoder/decoder chain.
#[derive(Clone, Debug)]
pub struct Student {
    pub pairs: Vec<StudentPair>,
}

impl Student {
    /// Randomly initialised student with widths `channels` over a teacher's
    /// layer structure.
    pub fn new(teacher: &Vgg, channels: &[usize], rng: &mut Rng) -> Result<Self> {
        let cfg = teacher.config.with_channels(channels)?;
        let mut c_prev = cfg.in_channels;
        let mut pairs = Vec::new();
        for (i, l) in cfg.layers.iter().enumerate().take(teacher.built_layers()) {
            pairs.push(StudentPair::new(i + 1, c_prev, l.channels, l.pool_before, &mut rng.derive(i as u64))?);
            c_prev = l.channels;
        }
        Ok(Self { pairs })
    }

    /// Student features `F^e_1..F^e_upto`.
    pub fn encode_all(&self, tape: &mut Tape, x: Var, upto: usize) -> Result<Vec<Var>> {
        let mut out = Vec::with_capacity(upto);
        let mut h = x;
        for p in &self.pairs[..upto] {
            h = p.encode(tape, h, true)?;
            out.push(h);
        }
        Ok(out)
    }

    /// Decoder chain `dec_1 ∘ … ∘ dec_from` applied to layer-`from` features.
    fn decode_chain(&self, tape: &mut Tape, x: Var, from: usize, train_top: bool) -> Result<(Var, Var)> {
        let top = &self.pairs[from - 1];
        let first = top.decode(tape, x, !train_top)?;
        let mut h = first;
        for p in self.pairs[..from - 1].iter().rev() {
            h = p.decode(tape, h, true)?;
        }
        Ok((first, h))
    }

    /// Mean over images of `‖I_rec − I‖²` through the full chain.
    pub fn round_trip_error(&self, images: &[Tensor]) -> Result<f64> {
        let depth = self.pairs.len();
        let mut total = 0.0;
        for img in images {
            let mut tape = Tape::new();
            let x = tape.constant(img.clone());
            let enc = self.encode_all(&mut tape, x, depth)?;
            let (_, rec) = self.decode_chain(&mut tape, enc[depth - 1], depth, false)?;
            let diff = tape.sub(rec, x)?;
            let e = tape.sum_squares(diff);
            total += tape.value(e).item()? as f64;
        }
        Ok(total / images.len() as f64)
    }

    /// Encoder parameters `(weight, bias)` per layer, for building a
    /// distilled extractor.
    pub fn encoder_weights(&self) -> Vec<(Tensor, Tensor)> {
        self.pairs
            .iter()
            .map(|p| (p.store.value(p.enc.w).clone(), p.store.value(p.enc.b).clone()))
            .collect()
    }
}

/// `‖Wᵀ F̄^e − F̄‖²` for centred `C^e x n` student and `C x n` teacher features.
pub fn encoder_distill_loss(student: &Tensor<f64>, teacher: &Tensor<f64>, basis: &Eigenbasis) -> Result<f64> {
    let (ce, n) = student.dims2()?;
    let (c, n2) = teacher.dims2()?;
    if ce != basis.reduced() || c != basis.channels() || n != n2 {
        return Err(Error::shape(format!(
            "student {ce}x{n}, teacher {c}x{n2}, basis {}x{}",
            basis.reduced(),
            basis.channels()
        )));
    }
    let w = basis.matrix().data();
    let (s, t) = (student.data(), teacher.data());
    let mut total = 0.0;
    for i in 0..c {
        for j in 0..n {
            let proj: f64 = (0..ce).map(|r| w[r * c + i] * s[r * n + j]).sum();
            total += (proj - t[i * n + j]).powi(2);
        }
    }
    Ok(total)
}

/// The three decoder terms; `feature` is `None` for the first pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecoderLoss {
    pub feature: Option<f64>,
    pub image: f64,
    pub perceptual: f64,
}

impl DecoderLoss {
    pub fn total(&self) -> f64 {
        self.feature.unwrap_or(0.0) + self.image + self.perceptual
    }

    pub fn terms(&self) -> usize {
        2 + self.feature.is_some() as usize
    }
}

fn sq_dist(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(a.data().iter().zip(b.data()).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum())
}

/// `‖F^d_{N−1} − F^e_{N−1}‖² + ‖I_rec − I‖² + ‖F_{N,rec} − F_N‖²`, where the
/// last term compares teacher layer-`n` features of the reconstruction and
/// of the original image. The first term is dropped for `n = 1`.
#[allow(clippy::too_many_arguments)]
pub fn decoder_loss(
    n: usize,
    decoded_prev: Option<&Tensor>,
    encoded_prev: Option<&Tensor>,
    reconstruction: &Tensor,
    image: &Tensor,
    teacher: &Vgg,
    teacher_store: &ParamStore,
) -> Result<DecoderLoss> {
    if n == 0 || n > teacher.built_layers() {
        return Err(Error::invalid(format!(
            "teacher has {} layers, decoder {n} has no counterpart",
            teacher.built_layers()
        )));
    }
    let feature = if n == 1 {
        None
    } else {
        match (decoded_prev, encoded_prev) {
            (Some(d), Some(e)) => Some(sq_dist(d, e)?),
            _ => return Err(Error::invalid("decoder terms for N > 1 need both feature maps")),
        }
    };
    let mut tape = Tape::new();
    let xr = tape.constant(reconstruction.clone());
    let xi = tape.constant(image.clone());
    let fr = teacher.features(&mut tape, teacher_store, xr, n, true)?[n - 1];
    let fi = teacher.features(&mut tape, teacher_store, xi, n, true)?[n - 1];
    let perceptual = sq_dist(tape.value(fr), tape.value(fi))?;
    Ok(DecoderLoss { feature, image: sq_dist(reconstruction, image)?, perceptual })
}

struct PairTerms {
    encoder: Var,
    decoder: Var,
}

fn pair_terms(
    student: &Student,
    n: usize,
    teacher: &Vgg,
    teacher_store: &ParamStore,
    basis: &Tensor,
    tape: &mut Tape,
    image: &Tensor,
    teacher_feature: &Tensor,
) -> Result<PairTerms> {
    let pair = &student.pairs[n - 1];
    let x = tape.constant(image.clone());
    let prev = if n == 1 { x } else { student.encode_all(tape, x, n - 1)?[n - 2] };
    let fe = pair.encode(tape, prev, false)?;
    let w = tape.constant(basis.clone());
    let wt = tape.transpose(w)?;
    let fe_c = center_rows(tape, fe)?;
    let proj = tape.matmul(wt, fe_c)?;
    let f_const = tape.constant(teacher_feature.clone());
    let f_c = center_rows(tape, f_const)?;
    let enc_diff = tape.sub(proj, f_c)?;
    let encoder = tape.sum_squares(enc_diff);

    let (first, rec) = student.decode_chain(tape, fe, n, true)?;
    let mut dec_terms = Vec::with_capacity(3);
    if n > 1 {
        let d = tape.sub(first, prev)?;
        dec_terms.push(tape.sum_squares(d));
    }
    let d = tape.sub(rec, x)?;
    dec_terms.push(tape.sum_squares(d));
    let f_rec = teacher.features(tape, teacher_store, rec, n, true)?[n - 1];
    let d = tape.sub(f_rec, f_const)?;
    dec_terms.push(tape.sum_squares(d));
    let mut decoder = dec_terms[0];
    for &t in &dec_terms[1..] {
        decoder = tape.add(decoder, t)?;
    }
    Ok(PairTerms { encoder, decoder })
}

/// Trains pairs `1..=depth` in ascending order, each against its layer's
/// eigenbasis with all earlier pairs frozen. Per-image losses are divided
/// by the image's pixel count.
pub fn train_blockwise(
    student: &mut Student,
    teacher: &Vgg,
    teacher_store: &ParamStore,
    bases: &[Eigenbasis],
    images: &[Tensor],
    cfg: &BlockwiseConfig,
) -> Result<Vec<PairLoss>> {
    if images.is_empty() {
        return Err(Error::invalid("distillation corpus is empty"));
    }
    if bases.len() < student.pairs.len() {
        return Err(Error::invalid(format!(
            "{} eigenbases for {} pairs",
            bases.len(),
            student.pairs.len()
        )));
    }
    let mut losses = Vec::with_capacity(student.pairs.len());
    for n in 1..=student.pairs.len() {
        losses.push(train_pair(student, n, teacher, teacher_store, &bases[n - 1], images, cfg)?);
    }
    Ok(losses)
}

/// Trains pair `n` alone; other pairs are left bit-identical.
pub fn train_pair(
    student: &mut Student,
    n: usize,
    teacher: &Vgg,
    teacher_store: &ParamStore,
    basis: &Eigenbasis,
    images: &[Tensor],
    cfg: &BlockwiseConfig,
) -> Result<PairLoss> {
    if n == 0 || n > student.pairs.len() {
        return Err(Error::invalid(format!("no pair {n}")));
    }
    let w = basis.matrix().cast::<f32>();
    let feats: Vec<Tensor> = images
        .iter()
        .map(|img| {
            let mut tape = Tape::new();
            let x = tape.constant(img.clone());
            let f = teacher.features(&mut tape, teacher_store, x, n, true)?[n - 1];
            Ok(tape.value(f).clone())
        })
        .collect::<Result<_>>()?;
    let mut opt = Optimizer::adam(cfg.lr)?;
    let mut rng = Rng::new(cfg.seed).derive(n as u64);
    let mut order: Vec<usize> = (0..images.len()).collect();
    let mut last = PairLoss { index: n, encoder: f64::NAN, decoder: f64::NAN };
    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let (mut enc_sum, mut dec_sum) = (0.0, 0.0);
        for batch in order.chunks(cfg.batch_size.max(1)) {
            student.pairs[n - 1].store.zero_grads();
            for &k in batch {
                let img = &images[k];
                let pixels = (img.numel() / img.shape()[0]) as f32;
                let mut tape = Tape::new();
                let terms = pair_terms(student, n, teacher, teacher_store, &w, &mut tape, img, &feats[k])?;
                let both = tape.add(terms.encoder, terms.decoder)?;
                let loss = tape.scale(both, 1.0 / (pixels * batch.len() as f32));
                let e = tape.value(terms.encoder).item()? as f64 / pixels as f64;
                let d = tape.value(terms.decoder).item()? as f64 / pixels as f64;
                if !(e + d).is_finite() || e + d > DIVERGENCE_LIMIT {
                    return Err(Error::Divergence(format!(
                        "pair {n} at epoch {epoch}: loss {:e}",
                        e + d
                    )));
                }
                enc_sum += e;
                dec_sum += d;
                tape.backward(loss, &mut student.pairs[n - 1].store)?;
            }
            opt.step(&mut student.pairs[n - 1].store)
                .map_err(|e| Error::Divergence(format!("pair {n}: {e}")))?;
        }
        last.encoder = enc_sum / images.len() as f64;
        last.decoder = dec_sum / images.len() as f64;
        log::debug!("pair {n} epoch {epoch}: enc {:.5} dec {:.5}", last.encoder, last.decoder);
    }
    Ok(last)
}
