use crate::networks::Iidm;
use crate::numerics::{ParamStore, Tape, Tensor, Var};
use crate::{Error, Result};

/// Inputs of one noise prediction.
#[derive(Clone, Copy, Debug)]
pub struct DenoiserContext<'a> {
    pub x: &'a Tensor,
    pub y_t: &'a Tensor,
    pub t: usize,
    pub gamma: f64,
    /// The exact noise that formed `y_t`, when known. Only test oracles
    /// read it; real models must ignore it.
    pub teacher_noise: Option<&'a Tensor>,
}

/// Per-image state a denoiser may keep across sampling steps.
#[derive(Clone, Debug, Default)]
pub struct SamplerCache {
    pub condition: Option<Vec<Tensor>>,
}

/// Noise predictor `ε_θ(x, t, ỹ_t, γ_t)`.
pub trait Denoiser {
    /// Prediction on `tape`, so gradients can reach trainable parameters.
    fn predict(&self, tape: &mut Tape, ctx: &DenoiserContext) -> Result<Var>;

    /// Prediction value during sampling; `cache` is reset per image.
    fn predict_value(&self, ctx: &DenoiserContext, _cache: &mut SamplerCache) -> Result<Tensor> {
        let mut tape = Tape::new();
        let v = self.predict(&mut tape, ctx)?;
        Ok(tape.value(v).clone())
    }
}

/// The trained network with its parameters.
#[derive(Clone, Copy, Debug)]
pub struct IidmDenoiser<'a> {
    pub model: &'a Iidm,
    pub store: &'a ParamStore,
}

impl Denoiser for IidmDenoiser<'_> {
    fn predict(&self, tape: &mut Tape, ctx: &DenoiserContext) -> Result<Var> {
        let x = tape.constant(ctx.x.clone());
        let y = tape.constant(ctx.y_t.clone());
        self.model.forward(tape, self.store, x, y, ctx.gamma)
    }

    fn predict_value(&self, ctx: &DenoiserContext, cache: &mut SamplerCache) -> Result<Tensor> {
        if cache.condition.is_none() {
            cache.condition = Some(self.model.condition(self.store, ctx.x)?.levels);
        }
        let levels = cache.condition.as_ref().expect("filled above");
        let mut tape = Tape::new();
        let cond: Vec<Var> = levels.iter().map(|c| tape.constant(c.clone())).collect();
        let y = tape.constant(ctx.y_t.clone());
        let v = self.model.predict(&mut tape, self.store, &cond, y, ctx.gamma)?;
        Ok(tape.value(v).clone())
    }
}

/// Returns the noise that formed `y_t` (test hook).
#[derive(Clone, Copy, Debug, Default)]
pub struct OracleDenoiser;

impl Denoiser for OracleDenoiser {
    fn predict(&self, tape: &mut Tape, ctx: &DenoiserContext) -> Result<Var> {
        let eps = ctx
            .teacher_noise
            .ok_or_else(|| Error::invalid("oracle denoiser needs the teacher noise"))?;
        Ok(tape.constant(eps.clone()))
    }
}

/// Always predicts zero noise.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroDenoiser;

impl Denoiser for ZeroDenoiser {
    fn predict(&self, tape: &mut Tape, ctx: &DenoiserContext) -> Result<Var> {
        Ok(tape.constant(Tensor::zeros(ctx.y_t.shape())))
    }
}
