//! Counter-based noise streams.
//!
//! Particle `i` owns ChaCha stream `i` under the run seed. Step `k` consumes a
//! fixed block of words, so the increment of any `(seed, particle, step)` can
//! be regenerated by seeking, and sequential use never seeks.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Salts separating independent uses of one run seed.
pub mod salt {
    pub const INITIAL: u64 = 0x1111_0000_0000_0001;
    pub const BOOTSTRAP: u64 = 0x2222_0000_0000_0002;
    pub const DIRECTIONS: u64 = 0x3333_0000_0000_0003;
    pub const KERNEL_CHECK: u64 = 0x4444_0000_0000_0004;
    pub const SECOND_LAW: u64 = 0x5555_0000_0000_0005;
}

/// Deterministically derives an independent seed from `seed` and `salt`.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt);
    rng.set_stream(salt);
    rng.next_u64()
}

/// A ChaCha generator on stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform in `(0, 1]` from the top 53 bits.
fn open_unit(bits: u64) -> f64 {
    ((bits >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// One Box-Muller pair of standard normals; consumes exactly two `u64`.
pub fn normal_pair<R: RngCore + ?Sized>(rng: &mut R) -> (f64, f64) {
    let u1 = open_unit(rng.next_u64());
    let u2 = open_unit(rng.next_u64());
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
    (r * c, r * s)
}

/// Fills `out` with standard normals, consuming `4 * ceil(len / 2)` words.
pub fn fill_normals<R: RngCore + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for chunk in out.chunks_mut(2) {
        let (a, b) = normal_pair(rng);
        chunk[0] = a;
        if chunk.len() > 1 {
            chunk[1] = b;
        }
    }
}

/// Brownian increments of one particle.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
    m: usize,
    words_per_step: u128,
    next_step: u64,
}

impl NoiseStream {
    pub fn new(seed: u64, particle: u64, m: usize) -> Self {
        Self {
            rng: stream_rng(seed, particle),
            m,
            words_per_step: 4 * m.div_ceil(2) as u128,
            next_step: 0,
        }
    }

    /// Writes `sqrt(h) * N(0, I_m)` for step `step` into `out`.
    pub fn increments(&mut self, step: u64, h: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.m);
        if step != self.next_step {
            self.rng.set_word_pos(step as u128 * self.words_per_step);
        }
        fill_normals(&mut self.rng, out);
        let scale = h.sqrt();
        out.iter_mut().for_each(|v| *v *= scale);
        self.next_step = step + 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_access_matches_sequential() {
        let mut seq = NoiseStream::new(7, 3, 3);
        let mut all = Vec::new();
        for k in 0..5 {
            let mut dw = [0.0; 3];
            seq.increments(k, 0.01, &mut dw);
            all.push(dw);
        }
        let mut jump = NoiseStream::new(7, 3, 3);
        let mut dw = [0.0; 3];
        jump.increments(3, 0.01, &mut dw);
        assert_eq!(dw, all[3]);
        jump.increments(1, 0.01, &mut dw);
        assert_eq!(dw, all[1]);
    }

    #[test]
    fn particles_get_distinct_streams() {
        let mut a = NoiseStream::new(1, 0, 1);
        let mut b = NoiseStream::new(1, 1, 1);
        let (mut x, mut y) = ([0.0], [0.0]);
        a.increments(0, 1.0, &mut x);
        b.increments(0, 1.0, &mut y);
        assert_ne!(x, y);
    }

    #[test]
    fn normals_have_unit_variance() {
        let mut rng = stream_rng(42, 0);
        let mut v = vec![0.0; 200_000];
        fill_normals(&mut rng, &mut v);
        let m = crate::stats::mean(&v);
        let var = crate::stats::variance(&v);
        assert!(m.abs() < 0.01, "{m}");
        assert!((var - 1.0).abs() < 0.015, "{var}");
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, salt::INITIAL), derive_seed(1, salt::BOOTSTRAP));
        assert_eq!(derive_seed(5, salt::INITIAL), derive_seed(5, salt::INITIAL));
    }
}
