use super::Tensor;
use crate::{Error, Result};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finaliser.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based generator: the `n`-th draw is
/// `mix64(seed + (n + 1) * 0x9E3779B97F4A7C15)` (SplitMix64).
///
/// Each draw depends only on `(seed, counter)`, so a stream can be replayed
/// from any saved position. Normal variates use Box-Muller on two uniforms
/// and always consume exactly two counter steps.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rng {
    seed: u64,
    counter: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self { seed, counter: 0 }
    }

    pub fn with_counter(seed: u64, counter: u64) -> Self {
        Self { seed, counter }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Independent stream keyed by `key`; does not advance `self`.
    pub fn derive(&self, key: u64) -> Rng {
        Rng::new(mix64(self.seed ^ mix64(key.wrapping_add(GOLDEN_GAMMA))))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.seed.wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)))
    }

    /// Uniform in the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "empty range");
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn normal_tensor(&mut self, shape: &[usize]) -> Result<Tensor> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::invalid(format!("cannot draw a tensor of shape {shape:?}")));
        }
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| self.normal() as f32).collect();
        Tensor::new(shape.to_vec(), data)
    }

    pub fn uniform_tensor(&mut self, shape: &[usize], lo: f32, hi: f32) -> Result<Tensor> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::invalid(format!("cannot draw a tensor of shape {shape:?}")));
        }
        let n: usize = shape.iter().product();
        let span = (hi - lo) as f64;
        let data = (0..n).map(|_| (lo as f64 + span * self.uniform()) as f32).collect();
        Tensor::new(shape.to_vec(), data)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
