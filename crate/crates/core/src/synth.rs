//! Deterministic fixture generation.
//!
//! All random data comes from a single SplitMix64 stream seeded by the caller,
//! with `rand`'s standard uniform `f64` sampling (53-bit mantissa from the top
//! bits of each 64-bit output). The same seed gives the same tensors on every
//! platform.

use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;
use rustfft::num_complex::Complex64;

use crate::tensor::{FeatureMap, Kernel, Shape, Spectrum, WeightField, WeightRole};

pub struct Synth {
    rng: SplitMix64,
}

impl Synth {
    pub fn new(seed: u64) -> Self {
        Synth {
            rng: SplitMix64::seed_from_u64(seed),
        }
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.rng.random::<f64>()
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn values(&mut self, n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n).map(|_| self.uniform(lo, hi)).collect()
    }

    pub fn feature_map(&mut self, shape: Shape, lo: f64, hi: f64) -> FeatureMap {
        FeatureMap::new(shape, self.values(shape.len(), lo, hi)).expect("finite values")
    }

    /// Centered kernel with taps in `[-1, 1]`.
    pub fn kernel(&mut self, channels: usize, kh: usize, kw: usize) -> Kernel {
        Kernel::centered(channels, kh, kw, self.values(channels * kh * kw, -1.0, 1.0))
            .expect("valid kernel")
    }

    pub fn weight_field(
        &mut self,
        shape: Shape,
        lo: f64,
        hi: f64,
        role: WeightRole,
    ) -> WeightField {
        assert!(lo >= 0.0, "weights must be nonnegative");
        WeightField::new(shape, self.values(shape.len(), lo, hi), role).expect("valid weights")
    }

    pub fn spectrum(&mut self, shape: Shape) -> Spectrum {
        let data = (0..shape.len())
            .map(|_| Complex64::new(self.uniform(-1.0, 1.0), self.uniform(-1.0, 1.0)))
            .collect();
        Spectrum::new(shape, data).expect("shape matches")
    }
}
