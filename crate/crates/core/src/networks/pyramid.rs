use super::layers::{Conv, Init};
use crate::numerics::{ParamStore, Rng, Scalar, Tape, Var};
use crate::{Error, Result};

/// Condition features `f(1..=levels)`, each a stride-2 3x3 conv + ReLU of
/// the previous level.
#[derive(Clone, Debug)]
pub struct ConditionPyramid {
    pub channels: usize,
    pub convs: Vec<Conv>,
}

impl ConditionPyramid {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize, levels: usize, rng: &mut Rng) -> Result<Self> {
        let convs = (1..=levels)
            .map(|i| Conv::new(store, &format!("{name}.down{i}"), channels, channels, 3, 2, Init::He, rng))
            .collect::<Result<_>>()?;
        Ok(Self { channels, convs })
    }

    pub fn levels(&self) -> usize {
        self.convs.len()
    }

    pub fn param_count(channels: usize, levels: usize) -> u64 {
        levels as u64 * Conv::param_count(channels, channels, 3)
    }

    /// `[f0, f1, …, f_levels]`.
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, f0: Var) -> Result<Vec<Var>> {
        let (c, h, w) = tape.value(f0).dims3()?;
        if c != self.channels {
            return Err(Error::shape(format!("pyramid expects {} channels, got {c}", self.channels)));
        }
        let div = 1usize << self.levels();
        if h % div != 0 || w % div != 0 {
            return Err(Error::shape(format!(
                "{h}x{w} is not divisible by 2^{} for the condition pyramid",
                self.levels()
            )));
        }
        let mut out = vec![f0];
        for conv in &self.convs {
            let y = conv.forward(tape, store, *out.last().expect("nonempty"))?;
            out.push(tape.relu(y));
        }
        Ok(out)
    }
}
