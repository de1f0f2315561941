use crate::networks::{Iidm, IidmConfig};
use crate::numerics::gradcheck::{GradCheck, GradCheckReport, Objective};
use crate::numerics::{ParamStore, Rng, Scalar, Tape, Tensor, Var};
use crate::Result;

/// `Σ r ⊙ ε_θ(x, ỹ_t, γ)` for fixed inputs and a fixed random probe `r`.
#[derive(Clone, Debug)]
pub struct DenoiserObjective<'a> {
    pub model: &'a Iidm,
    pub x: Tensor,
    pub y_t: Tensor,
    pub gamma: f64,
    pub probe: Tensor,
}

impl Objective for DenoiserObjective<'_> {
    fn eval<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>) -> Result<Var> {
        let x = tape.constant(self.x.cast());
        let y = tape.constant(self.y_t.cast());
        let out = self.model.forward(tape, store, x, y, self.gamma)?;
        let r = tape.constant(self.probe.cast());
        let w = tape.mul(out, r)?;
        Ok(tape.sum(w))
    }
}

/// Finite-difference check of a freshly initialised model on random
/// `size x size` inputs.
pub fn check_denoiser(config: &IidmConfig, size: usize, check: &GradCheck) -> Result<GradCheckReport> {
    let mut rng = Rng::new(check.seed);
    let mut store = ParamStore::new();
    let model = Iidm::new(config, &mut store, &mut rng)?;
    // Fresh biases are zero; random ones keep ReLUs away from ties.
    for p in store.iter_mut() {
        if p.value.shape().len() == 1 {
            p.value = rng.normal_tensor(p.value.shape())?.map(|v| 0.1 * v);
        }
    }
    let obj = DenoiserObjective {
        model: &model,
        x: rng.uniform_tensor(&[config.bands, size, size], 0.0, 1.0)?,
        y_t: rng.normal_tensor(&[1, size, size])?,
        gamma: 0.6,
        probe: rng.normal_tensor(&[1, size, size])?,
    };
    check.run(&obj, &store)
}
