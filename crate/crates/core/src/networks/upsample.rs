use super::layers::{Init, Linear};
use crate::numerics::{ParamStore, Rng, Scalar, Tape, Tensor, Var};
use crate::{Error, Result};

/// 2x upsampling by a two-layer MLP evaluated per fine cell on the offset
/// of the cell centre inside its coarse cell (in `[-1, 1]²`) and the
/// nearest coarse feature vector.
#[derive(Clone, Debug)]
pub struct ImplicitUpsampler {
    pub in_channels: usize,
    pub out_channels: usize,
    pub l1: Linear,
    pub l2: Linear,
}

/// Offset of each fine cell centre within its coarse cell.
pub const CELL_OFFSET: f64 = 0.5;

impl ImplicitUpsampler {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_channels: usize,
        hidden: usize,
        out_channels: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        Ok(Self {
            in_channels,
            out_channels,
            l1: Linear::new(store, &format!("{name}.l1"), in_channels + 2, hidden, Init::He, rng)?,
            l2: Linear::new(store, &format!("{name}.l2"), hidden, out_channels, Init::Lecun, rng)?,
        })
    }

    pub fn param_count(in_channels: usize, hidden: usize, out_channels: usize) -> u64 {
        Linear::param_count(in_channels + 2, hidden) + Linear::param_count(hidden, out_channels)
    }

    /// `C x h x w` to `C' x 2h x 2w`.
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, coarse: Var) -> Result<Var> {
        self.forward_at(tape, store, coarse, CELL_OFFSET)
    }

    /// As [`forward`](Self::forward) with the fine cells placed at
    /// `±offset` inside their coarse cell.
    pub fn forward_at<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        coarse: Var,
        offset: f64,
    ) -> Result<Var> {
        let (c, h, w) = tape.value(coarse).dims3()?;
        if c != self.in_channels {
            return Err(Error::shape(format!("upsampler expects {} channels, got {c}", self.in_channels)));
        }
        let (ho, wo) = (2 * h, 2 * w);
        let mut index = Vec::with_capacity(ho * wo);
        let mut coords = vec![T::zero(); 2 * ho * wo];
        for r in 0..ho {
            for col in 0..wo {
                let i = r * wo + col;
                index.push((r / 2) * w + col / 2);
                let sign = |k: usize| if k % 2 == 0 { -offset } else { offset };
                coords[i] = T::from_f64(sign(r));
                coords[ho * wo + i] = T::from_f64(sign(col));
            }
        }
        let flat = tape.reshape(coarse, &[c, h * w])?;
        let near = tape.gather(flat, index)?;
        let xy = tape.constant(Tensor::new(vec![2, ho * wo], coords)?);
        let input = tape.concat(&[xy, near])?;
        let hidden = self.l1.forward(tape, store, input)?;
        let hidden = tape.relu(hidden);
        let out = self.l2.forward(tape, store, hidden)?;
        tape.reshape(out, &[self.out_channels, ho, wo])
    }
}

/// Checks an upsampling target against a coarse shape.
pub fn check_doubling(coarse: (usize, usize), target: (usize, usize)) -> Result<()> {
    if target != (2 * coarse.0, 2 * coarse.1) {
        return Err(Error::shape(format!(
            "upsampling {}x{} to {}x{} is not a doubling",
            coarse.0, coarse.1, target.0, target.1
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_contract() {
        let mut store = ParamStore::new();
        let up = ImplicitUpsampler::new(&mut store, "u", 3, 8, 5, &mut Rng::new(1)).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[3, 16, 16]));
        let y = up.forward(&mut tape, &store, x).unwrap();
        assert_eq!(tape.shape(y), &[5, 32, 32]);
        assert_eq!(store.numel() as u64, ImplicitUpsampler::param_count(3, 8, 5));
        assert!(check_doubling((16, 16), (32, 30)).is_err());
    }
}
