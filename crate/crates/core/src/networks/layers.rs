use crate::numerics::{ParamId, ParamStore, Rng, Scalar, Tape, Tensor, Var};
use crate::Result;

/// Weight initialisation scheme.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Normal with variance `2 / fan_in`, for layers followed by a ReLU.
    He,
    /// Normal with variance `1 / fan_in`.
    Lecun,
    Zero,
}

fn draw(rng: &mut Rng, shape: &[usize], fan_in: usize, init: Init) -> Result<Tensor> {
    let gain = match init {
        Init::He => 2.0,
        Init::Lecun => 1.0,
        Init::Zero => return Ok(Tensor::zeros(shape)),
    };
    let std = (gain / fan_in as f64).sqrt() as f32;
    Ok(rng.normal_tensor(shape)?.map(|v| v * std))
}

/// Reads a parameter onto the tape; frozen parameters enter as constants so
/// no gradient is recorded for them.
pub(crate) fn load<T: Scalar>(
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    id: ParamId,
    frozen: bool,
) -> Var {
    if frozen {
        tape.constant(store.value(id).clone())
    } else {
        tape.param(store, id)
    }
}

/// Square-kernel convolution with bias and "same"-style padding `k / 2`.
#[derive(Clone, Debug)]
pub struct Conv {
    pub w: ParamId,
    pub b: ParamId,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        init: Init,
        rng: &mut Rng,
    ) -> Result<Self> {
        let fan_in = in_channels * kernel * kernel;
        let w = draw(rng, &[out_channels, in_channels, kernel, kernel], fan_in, init)?;
        let w = store.add(format!("{name}.w"), w)?;
        let b = store.add(format!("{name}.b"), Tensor::zeros(&[out_channels]))?;
        Ok(Self { w, b, in_channels, out_channels, kernel, stride })
    }

    pub fn param_count(in_channels: usize, out_channels: usize, kernel: usize) -> u64 {
        (kernel * kernel * in_channels * out_channels + out_channels) as u64
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        self.apply(tape, store, x, false)
    }

    pub fn apply<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        x: Var,
        frozen: bool,
    ) -> Result<Var> {
        let w = load(tape, store, self.w, frozen);
        let b = load(tape, store, self.b, frozen);
        tape.conv2d(x, w, Some(b), self.stride, self.kernel / 2)
    }
}

/// Affine map over the rows of an `in x N` matrix.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub inputs: usize,
    pub outputs: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        outputs: usize,
        init: Init,
        rng: &mut Rng,
    ) -> Result<Self> {
        let w = store.add(format!("{name}.w"), draw(rng, &[outputs, inputs], inputs, init)?)?;
        let b = store.add(format!("{name}.b"), Tensor::zeros(&[outputs]))?;
        Ok(Self { w, b: Some(b), inputs, outputs })
    }

    /// Linear map without a bias.
    pub fn unbiased(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        outputs: usize,
        init: Init,
        rng: &mut Rng,
    ) -> Result<Self> {
        let w = store.add(format!("{name}.w"), draw(rng, &[outputs, inputs], inputs, init)?)?;
        Ok(Self { w, b: None, inputs, outputs })
    }

    pub fn param_count(inputs: usize, outputs: usize) -> u64 {
        (inputs * outputs + outputs) as u64
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let w = tape.param(store, self.w);
        let b = self.b.map(|b| tape.param(store, b));
        tape.linear(x, w, b)
    }
}

/// Nearest-neighbour 2x upsampling of a `C x H x W` value.
pub fn upsample_nearest<T: Scalar>(tape: &mut Tape<T>, x: Var) -> Result<Var> {
    let (c, h, w) = tape.value(x).dims3()?;
    let flat = tape.reshape(x, &[c, h * w])?;
    let mut index = Vec::with_capacity(4 * h * w);
    for r in 0..2 * h {
        for col in 0..2 * w {
            index.push((r / 2) * w + col / 2);
        }
    }
    let g = tape.gather(flat, index)?;
    tape.reshape(g, &[c, 2 * h, 2 * w])
}

/// Subtracts each row's mean from a `C x N` (or `C x H x W`) value, on the tape.
pub fn center_rows<T: Scalar>(tape: &mut Tape<T>, x: Var) -> Result<Var> {
    let c = tape.shape(x)[0];
    let n = tape.value(x).numel() / c;
    let flat = tape.reshape(x, &[c, n])?;
    let avg = tape.constant(Tensor::full(&[n, 1], T::from_f64(1.0 / n as f64)));
    let ones = tape.constant(Tensor::full(&[1, n], T::one()));
    let mean = tape.matmul(flat, avg)?;
    let spread = tape.matmul(mean, ones)?;
    tape.sub(flat, spread)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_upsample_repeats() {
        let mut t = Tape::<f32>::new();
        let x = t.constant(Tensor::new(vec![1, 1, 2], vec![1.0, 2.0]).unwrap());
        let y = upsample_nearest(&mut t, x).unwrap();
        assert_eq!(t.value(y).shape(), &[1, 2, 4]);
        assert_eq!(t.value(y).data(), &[1., 1., 2., 2., 1., 1., 2., 2.]);
    }

    #[test]
    fn centred_rows_have_zero_mean() {
        let mut t = Tape::<f32>::new();
        let x = t.constant(Tensor::new(vec![2, 3], vec![1., 2., 3., 4., 4., 7.]).unwrap());
        let y = center_rows(&mut t, x).unwrap();
        assert_eq!(t.value(y).data(), &[-1., 0., 1., -1., -1., 2.]);
    }

    #[test]
    fn conv_param_formula() {
        let mut s = ParamStore::new();
        let c = Conv::new(&mut s, "c", 3, 5, 3, 1, Init::He, &mut Rng::new(0)).unwrap();
        assert_eq!(s.numel() as u64, Conv::param_count(3, 5, 3));
        assert_eq!(c.out_channels, 5);
    }
}
