//! SplitMix64 generator. The stream depends only on the seed, so parameter
//! initialisation is identical on every platform.

use crate::tensor::{Real, Shape, Tensor};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Prng {
    state: u64,
}

impl Prng {
    pub fn new(seed: u64) -> Self {
        Prng { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1) with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Index in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        (self.next_f64() * n as f64) as usize % n.max(1)
    }

    pub fn uniform_tensor<T: Real>(&mut self, shape: Shape, lo: f64, hi: f64) -> Tensor<T> {
        Tensor::from_fn(shape, |_, _, _, _| self.uniform(lo, hi))
    }

    /// uniform(−b, b) with b = 1/√fan_in.
    pub fn init_tensor<T: Real>(&mut self, shape: Shape, fan_in: usize) -> Tensor<T> {
        let b = 1.0 / (fan_in.max(1) as f64).sqrt();
        self.uniform_tensor(shape, -b, b)
    }

    /// Independent child stream; used to give each module its own sequence.
    pub fn fork(&mut self) -> Prng {
        Prng::new(self.next_u64())
    }
}
