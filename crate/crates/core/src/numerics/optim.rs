use serde::{Deserialize, Serialize};

use super::{ParamStore, Tensor};
use crate::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// First-order optimizer over one [`ParamStore`]. Adam moments are kept per
/// parameter in store order.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Result<Self> {
        if !(lr.is_finite() && lr > 0.0) {
            return Err(Error::invalid(format!("learning rate must be positive, got {lr}")));
        }
        Ok(Self { kind, lr, step: 0, m: Vec::new(), v: Vec::new() })
    }

    pub fn sgd(lr: f64) -> Result<Self> {
        Self::new(OptimizerKind::Sgd, lr)
    }

    pub fn adam(lr: f64) -> Result<Self> {
        Self::new(OptimizerKind::Adam, lr)
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Adam moment tensors `(m, v)`, empty before the first step and for SGD.
    pub fn moments(&self) -> (&[Tensor], &[Tensor]) {
        (&self.m, &self.v)
    }

    /// Restores state saved with [`moments`](Self::moments) and [`steps`](Self::steps).
    pub fn restore(&mut self, step: u64, m: Vec<Tensor>, v: Vec<Tensor>) -> Result<()> {
        if m.len() != v.len() {
            return Err(Error::invalid("moment lists differ in length"));
        }
        self.step = step;
        self.m = m;
        self.v = v;
        Ok(())
    }

    /// Applies one update from the accumulated gradients. Gradients are left
    /// in place; the caller zeroes them. A non-finite gradient aborts the step
    /// before anything is modified.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if let Some(p) = store.iter().find(|p| !p.grad.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of parameter {:?}", p.name)));
        }
        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                let lr = self.lr as f32;
                for p in store.iter_mut() {
                    for (w, &g) in p.value.data_mut().iter_mut().zip(p.grad.data()) {
                        *w -= lr * g;
                    }
                }
            }
            OptimizerKind::Adam => {
                if self.m.is_empty() {
                    self.m = store.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
                    self.v = self.m.clone();
                }
                if self.m.len() != store.len()
                    || self.m.iter().zip(store.iter()).any(|(m, p)| m.shape() != p.value.shape())
                {
                    return Err(Error::shape("optimizer state does not match parameters"));
                }
                let t = self.step as i32;
                let bc1 = 1.0 - ADAM_BETA1.powi(t);
                let bc2 = 1.0 - ADAM_BETA2.powi(t);
                let (b1, b2) = (ADAM_BETA1 as f32, ADAM_BETA2 as f32);
                for ((p, m), v) in store.iter_mut().zip(&mut self.m).zip(&mut self.v) {
                    let vals = p.value.data_mut().iter_mut();
                    let moments = m.data_mut().iter_mut().zip(v.data_mut().iter_mut());
                    for ((w, &g), (mi, vi)) in vals.zip(p.grad.data()).zip(moments) {
                        *mi = b1 * *mi + (1.0 - b1) * g;
                        *vi = b2 * *vi + (1.0 - b2) * g * g;
                        let mhat = *mi as f64 / bc1;
                        let vhat = *vi as f64 / bc2;
                        *w -= (self.lr * mhat / (vhat.sqrt() + ADAM_EPS)) as f32;
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tape;

    fn quadratic_step(opt: &mut Optimizer, s: &mut ParamStore) {
        let id = s.id("w").unwrap();
        s.zero_grads();
        let mut t = Tape::new();
        let w = t.param(s, id);
        let l = t.sum_squares(w);
        t.backward(l, s).unwrap();
        opt.step(s).unwrap();
    }

    #[test]
    fn sgd_step_matches_hand_computation() {
        let mut s = ParamStore::new();
        s.add("w", Tensor::new(vec![2], vec![1.0, -2.0]).unwrap()).unwrap();
        let mut opt = Optimizer::sgd(0.1).unwrap();
        quadratic_step(&mut opt, &mut s);
        let w = s.value(s.id("w").unwrap()).data();
        assert!((w[0] - 0.8).abs() < 1e-6 && (w[1] + 1.6).abs() < 1e-6);
    }

    #[test]
    fn sgd_contracts_quadratic() {
        let mut s = ParamStore::new();
        s.add("w", Tensor::scalar(1.0)).unwrap();
        let mut opt = Optimizer::sgd(0.4).unwrap();
        for _ in 0..50 {
            quadratic_step(&mut opt, &mut s);
        }
        assert!(s.value(s.id("w").unwrap()).data()[0].abs() < 1e-4);
        assert_eq!(opt.steps(), 50);
    }

    #[test]
    fn step_leaves_gradients_for_caller() {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::scalar(1.0)).unwrap();
        s.get_mut(id).grad = Tensor::scalar(1.0);
        Optimizer::sgd(0.1).unwrap().step(&mut s).unwrap();
        assert!((s.value(id).data()[0] - 0.9).abs() < 1e-7);
        assert_eq!(s.grad(id).data(), &[1.0]);
    }

    #[test]
    fn first_adam_step_moves_by_lr() {
        let mut s = ParamStore::new();
        s.add("w", Tensor::new(vec![2], vec![1.0, -2.0]).unwrap()).unwrap();
        let mut opt = Optimizer::adam(0.01).unwrap();
        quadratic_step(&mut opt, &mut s);
        let w = s.value(s.id("w").unwrap()).data();
        assert!((w[0] - 0.99).abs() < 1e-5 && (w[1] + 1.99).abs() < 1e-5);
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn non_finite_gradient_is_reported_by_name() {
        let mut s = ParamStore::new();
        let id = s.add("blown", Tensor::scalar(1.0)).unwrap();
        s.get_mut(id).grad = Tensor::scalar(f32::NAN);
        let err = Optimizer::adam(0.1).unwrap().step(&mut s).unwrap_err();
        assert!(err.is_numeric());
        assert!(err.to_string().contains("blown"));
        assert_eq!(s.value(id).data(), &[1.0]);
    }

    #[test]
    fn bad_learning_rate_rejected() {
        assert!(Optimizer::sgd(0.0).is_err());
        assert!(Optimizer::adam(f64::NAN).is_err());
    }
}
