use ndarray::Array2;
use rand::RngCore;
use rand_core::{impls, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::Scalar;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finaliser.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic random stream.
///
/// The generator is xoshiro256++ whose 256-bit state is expanded from the
/// 64-bit seed with SplitMix64 (the reference seeding procedure). Uniforms
/// take the top 53 bits of a draw; normals use the Box–Muller transform with
/// the sine variate cached for the next call. Child streams are keyed by
/// `mix64(seed + GOLDEN_GAMMA * (index + 1))`, so stream `i` depends only on
/// the parent seed and `i`.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: Xoshiro256PlusPlus,
    spare: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream for work unit `index`.
    pub fn split(&self, index: u64) -> Rng {
        let key = self
            .seed
            .wrapping_add(GOLDEN_GAMMA.wrapping_mul(index.wrapping_add(1)));
        Rng::new(mix64(key))
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on [lo, hi).
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform index in 0..n.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0);
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // 1 - u lies in (0, 1], so the log is finite
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let phi = std::f64::consts::TAU * u2;
        self.spare = Some(r * phi.sin());
        r * phi.cos()
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        impls::fill_bytes_via_next(self, dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.fill_bytes(dest);
        Ok(())
    }
}

/// `rows × cols` matrix of i.i.d. standard normals, filled row-major.
pub fn standard_normal_matrix<T: Scalar>(rng: &mut Rng, rows: usize, cols: usize) -> Array2<T> {
    assert!(rows >= 1 && cols >= 1, "matrix dimensions must be positive");
    Array2::from_shape_simple_fn((rows, cols), || T::of(rng.normal()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_matrix() {
        let a: Array2<f64> = standard_normal_matrix(&mut Rng::new(7), 2, 2);
        let b: Array2<f64> = standard_normal_matrix(&mut Rng::new(7), 2, 2);
        assert_eq!(a, b);
    }

    #[test]
    fn single_entry_is_finite() {
        let a: Array2<f64> = standard_normal_matrix(&mut Rng::new(1), 1, 1);
        assert!(a[[0, 0]].is_finite());
    }

    #[test]
    fn moments_of_normal_stream() {
        let mut rng = Rng::new(2024);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.03, "var {var}");
    }

    #[test]
    fn split_streams_depend_only_on_index() {
        let root = Rng::new(99);
        let mut advanced = root.clone();
        for _ in 0..10 {
            advanced.normal();
        }
        let mut a = root.split(3);
        let mut b = advanced.split(3);
        assert_eq!(a.next_u64(), b.next_u64());
        assert_ne!(root.split(3).next_u64(), root.split(4).next_u64());
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut rng = Rng::new(5);
        for _ in 0..10_000 {
            let u = rng.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }
}
