//! Central finite-difference verification of reverse-mode gradients.
//!
//! The analytic gradient is taken from an `f32` tape (or `f64` on request),
//! the numerical one from the identical graph evaluated in `f64`, so the
//! comparison measures the backward rules rather than float32 cancellation
//! in the difference quotient.

use std::collections::BTreeMap;

use super::{ParamStore, Primitive, Rng, Scalar, Tape, Var};
use crate::{Error, Result};

/// A scalar function of the parameters in a store, generic over precision.
pub trait Objective {
    fn eval<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>) -> Result<Var>;
}

/// Settings for a finite-difference check.
#[derive(Clone, Debug)]
pub struct GradCheck {
    /// Step for the central difference.
    pub h: f64,
    /// Maximum tolerated relative error.
    pub tol: f64,
    /// Entries sampled per parameter tensor; smaller tensors are checked in full.
    pub max_entries: usize,
    pub seed: u64,
    /// Break the backward rule of one primitive (negative control).
    pub fault: Option<Primitive>,
    /// Fraction of entries allowed to sit on a non-differentiable point.
    pub max_kink_fraction: f64,
    /// Run the analytic pass in `f64` rather than `f32`.
    pub analytic_f64: bool,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self { h: 1e-6, tol: 1e-4, max_entries: 64, seed: 0, fault: None, max_kink_fraction: 0.02, analytic_f64: false }
    }
}

/// Result for one parameter tensor.
#[derive(Clone, Debug)]
pub struct ParamReport {
    pub name: String,
    pub checked: usize,
    /// Entries skipped because the one-sided slopes disagree (a kink lies
    /// within `h`).
    pub kinks: usize,
    pub max_rel_err: f64,
    pub worst_index: usize,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub params: Vec<ParamReport>,
    pub tol: f64,
    pub max_kink_fraction: f64,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_err).fold(0.0, f64::max)
    }

    pub fn checked(&self) -> usize {
        self.params.iter().map(|p| p.checked).sum()
    }

    pub fn kinks(&self) -> usize {
        self.params.iter().map(|p| p.kinks).sum()
    }

    pub fn passed(&self) -> bool {
        let total = self.checked() + self.kinks();
        let kinks_ok = self.kinks() as f64 <= (self.max_kink_fraction * total as f64).max(1.0);
        self.checked() > 0 && kinks_ok && self.max_rel_err() < self.tol
    }

    /// Worst relative error per block, where a block is the parameter name
    /// up to its first `.`.
    pub fn blocks(&self) -> Vec<(String, f64, usize)> {
        let mut map: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for p in &self.params {
            let block = p.name.split('.').next().unwrap_or(&p.name).to_string();
            let e = map.entry(block).or_insert((0.0, 0));
            e.0 = e.0.max(p.max_rel_err);
            e.1 += p.checked;
        }
        map.into_iter().map(|(k, (e, n))| (k, e, n)).collect()
    }
}

fn eval_f64<O: Objective + ?Sized>(obj: &O, store: &ParamStore<f64>) -> Result<f64> {
    let mut tape = Tape::new();
    let loss = obj.eval(&mut tape, store)?;
    let v = tape.value(loss).item()?;
    if !v.is_finite() {
        return Err(Error::NonFinite("objective value".into()));
    }
    Ok(v)
}

impl GradCheck {
    fn analytic_grads<O: Objective + ?Sized, T: Scalar>(&self, obj: &O, mut store: ParamStore<T>) -> Result<Vec<Vec<f64>>> {
        store.zero_grads();
        let mut tape = match self.fault {
            Some(p) => Tape::with_fault(p),
            None => Tape::new(),
        };
        let loss = obj.eval(&mut tape, &store)?;
        tape.backward(loss, &mut store)?;
        Ok(store.ids().map(|id| store.grad(id).data().iter().map(|&g| Scalar::to_f64(g)).collect()).collect())
    }

    pub fn run<O: Objective + ?Sized>(&self, obj: &O, store: &ParamStore) -> Result<GradCheckReport> {
        if !(self.h > 0.0) || !(self.tol > 0.0) || self.max_entries == 0 {
            return Err(Error::invalid("gradcheck needs h > 0, tol > 0 and max_entries > 0"));
        }
        let analytic = if self.analytic_f64 {
            self.analytic_grads(obj, store.cast::<f64>())?
        } else {
            self.analytic_grads(obj, store.clone())?
        };

        let mut probe: ParamStore<f64> = store.cast();
        let f0 = eval_f64(obj, &probe)?;
        let mut rng = Rng::new(self.seed);
        let mut params = Vec::with_capacity(store.len());
        for id in store.ids() {
            let n = store.value(id).numel();
            let mut idx: Vec<usize> = (0..n).collect();
            if n > self.max_entries {
                rng.shuffle(&mut idx);
                idx.truncate(self.max_entries);
                idx.sort_unstable();
            }
            let mut pairs = Vec::with_capacity(idx.len());
            let mut kinks = 0;
            for &i in &idx {
                let x = probe.value(id).data()[i];
                probe.get_mut(id).value.data_mut()[i] = x + self.h;
                let fp = eval_f64(obj, &probe)?;
                probe.get_mut(id).value.data_mut()[i] = x - self.h;
                let fm = eval_f64(obj, &probe)?;
                probe.get_mut(id).value.data_mut()[i] = x;
                let fwd = (fp - f0) / self.h;
                let bwd = (f0 - fm) / self.h;
                let scale = fwd.abs().max(bwd.abs()).max(1e-6 * f0.abs().max(1.0));
                if (fwd - bwd).abs() > 1e-2 * scale {
                    kinks += 1;
                    continue;
                }
                let a = analytic[id.index()][i];
                pairs.push((i, a, (fp - fm) / (2.0 * self.h)));
            }
            let block_max = pairs.iter().map(|p| p.2.abs()).fold(0.0, f64::max);
            let floor = (1e-3 * block_max).max(1e-8);
            let mut worst = (0.0, 0);
            for &(i, a, num) in &pairs {
                let rel = (a - num).abs() / a.abs().max(num.abs()).max(floor);
                if rel > worst.0 || rel.is_nan() {
                    worst = (rel, i);
                }
            }
            params.push(ParamReport {
                name: store.get(id).name.clone(),
                checked: pairs.len(),
                kinks,
                max_rel_err: worst.0,
                worst_index: worst.1,
            });
        }
        Ok(GradCheckReport { params, tol: self.tol, max_kink_fraction: self.max_kink_fraction })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    struct Product;

    impl Objective for Product {
        fn eval<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>) -> Result<Var> {
            let a = tape.param(store, store.id("a").unwrap());
            let b = tape.param(store, store.id("b").unwrap());
            let p = tape.mul(a, b)?;
            let s = tape.softmax_rows(p)?;
            let q = tape.mul(s, a)?;
            Ok(tape.sum(q))
        }
    }

    fn store() -> ParamStore {
        let mut s = ParamStore::new();
        let mut rng = Rng::new(3);
        s.add("a", rng.normal_tensor(&[2, 3]).unwrap()).unwrap();
        s.add("b", rng.normal_tensor(&[2, 3]).unwrap()).unwrap();
        s
    }

    #[test]
    fn smooth_objective_passes() {
        let r = GradCheck::default().run(&Product, &store()).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.checked(), 12);
    }

    #[test]
    fn broken_rule_is_detected() {
        let cfg = GradCheck { fault: Some(Primitive::Softmax), ..Default::default() };
        let r = cfg.run(&Product, &store()).unwrap();
        assert!(!r.passed());
        assert!(r.max_rel_err() > 1e-2);
    }

    #[test]
    fn blocks_group_by_prefix() {
        let mut s = ParamStore::new();
        s.add("enc.w", Tensor::scalar(1.0)).unwrap();
        s.add("enc.b", Tensor::scalar(1.0)).unwrap();
        struct Sq;
        impl Objective for Sq {
            fn eval<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>) -> Result<Var> {
                let w = tape.param(store, store.id("enc.w").unwrap());
                let b = tape.param(store, store.id("enc.b").unwrap());
                let p = tape.mul(w, b)?;
                Ok(tape.sum_squares(p))
            }
        }
        let r = GradCheck::default().run(&Sq, &s).unwrap();
        let blocks = r.blocks();
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0].0, "enc");
        assert_eq!(blocks[0].2, 2);
    }
}
