//! One small objective per tape primitive, for the finite-difference suite.

use super::gradcheck::{GradCheck, GradCheckReport, Objective};
use super::{ParamStore, Primitive, Rng, Scalar, Tape, Var};
use crate::Result;

/// Objective exercising a single primitive on parameters named
/// `"{primitive}.*"`, reduced to a scalar against a fixed random probe.
#[derive(Clone, Copy, Debug)]
pub struct PrimitiveCase {
    pub primitive: Primitive,
}

impl PrimitiveCase {
    /// Parameter store for the case, drawn from `seed`.
    pub fn store(&self, seed: u64) -> Result<ParamStore> {
        let mut rng = Rng::new(seed).derive(self.primitive as u64);
        let name = self.primitive.name();
        let mut s = ParamStore::new();
        let shapes: &[(&str, &[usize])] = match self.primitive {
            Primitive::MatMul => &[("a", &[3, 4]), ("b", &[4, 5])],
            Primitive::Conv2d => &[("x", &[2, 5, 6]), ("w", &[3, 2, 3, 3]), ("b", &[3])],
            Primitive::AddChannel => &[("a", &[3, 2, 4]), ("b", &[3])],
            Primitive::MaxPool => &[("a", &[2, 4, 6])],
            Primitive::Softmax => &[("a", &[3, 5])],
            _ => &[("a", &[2, 3, 4]), ("b", &[2, 3, 4])],
        };
        for (p, shape) in shapes {
            s.add(format!("{name}.{p}"), rng.normal_tensor(shape)?)?;
        }
        Ok(s)
    }

    fn probe<T: Scalar>(tape: &mut Tape<T>, like: Var) -> Result<Var> {
        let shape = tape.shape(like).to_vec();
        let r = Rng::new(0x5eed).normal_tensor(&shape)?.cast::<T>();
        Ok(tape.constant(r))
    }
}

impl Objective for PrimitiveCase {
    fn eval<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>) -> Result<Var> {
        let name = self.primitive.name();
        let p = |tape: &mut Tape<T>, k: &str| {
            let id = store.id(&format!("{name}.{k}")).expect("case parameter");
            tape.param(store, id)
        };
        let a = p(tape, if self.primitive == Primitive::Conv2d { "x" } else { "a" });
        let out = match self.primitive {
            Primitive::Add => {
                let b = p(tape, "b");
                tape.add(a, b)?
            }
            Primitive::Sub => {
                let b = p(tape, "b");
                tape.sub(a, b)?
            }
            Primitive::Mul => {
                let b = p(tape, "b");
                tape.mul(a, b)?
            }
            Primitive::Scale => tape.scale(a, T::from_f64(-1.7)),
            Primitive::AddScalar => tape.add_scalar(a, T::from_f64(0.3)),
            Primitive::Relu => tape.relu(a),
            Primitive::Abs => tape.abs(a),
            Primitive::MatMul => {
                let b = p(tape, "b");
                tape.matmul(a, b)?
            }
            Primitive::Transpose => {
                let m = tape.reshape(a, &[6, 4])?;
                tape.transpose(m)?
            }
            Primitive::Softmax => tape.softmax_rows(a)?,
            Primitive::Conv2d => {
                let w = p(tape, "w");
                let b = p(tape, "b");
                tape.conv2d(a, w, Some(b), 1, 1)?
            }
            Primitive::AddChannel => {
                let b = p(tape, "b");
                tape.add_channel(a, b)?
            }
            Primitive::Concat => {
                let b = p(tape, "b");
                tape.concat(&[a, b, a])?
            }
            Primitive::Reshape => tape.reshape(a, &[4, 6])?,
            Primitive::MaxPool => tape.max_pool2(a)?,
            Primitive::Gather => tape.gather(a, vec![11, 0, 3, 3, 7])?,
            Primitive::Narrow => tape.narrow(a, 1, 1)?,
            Primitive::Sum => return Ok(tape.sum(a)),
            Primitive::Mean => return Ok(tape.mean(a)),
            Primitive::SumSquares => return Ok(tape.sum_squares(a)),
        };
        let r = Self::probe(tape, out)?;
        let weighted = tape.mul(out, r)?;
        Ok(tape.sum(weighted))
    }
}

/// Runs `check` on every primitive; one report per primitive.
pub fn primitive_suite(check: &GradCheck) -> Result<Vec<(Primitive, GradCheckReport)>> {
    Primitive::ALL
        .iter()
        .map(|&primitive| {
            let case = PrimitiveCase { primitive };
            let store = case.store(check.seed)?;
            Ok((primitive, check.run(&case, &store)?))
        })
        .collect()
}
