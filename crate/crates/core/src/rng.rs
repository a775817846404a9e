//! Counter-addressed Gaussian streams.
//!
//! A ChaCha8 key is derived from `(master_seed, domain)`, the path index
//! selects the ChaCha stream and the step index fixes the word position. Step
//! `k` of path `i` therefore always sees the same normals no matter how paths
//! are split across workers or chunks.

use core::f64::consts::PI;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Independent randomness domains sharing one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// Brownian drivers of the price model.
    Price,
    /// Orthogonal Brownian motion for composed deflators.
    Orthogonal,
}

impl Domain {
    fn tag(self) -> u64 {
        match self {
            Domain::Price => 0x0050_5249_4345,
            Domain::Orthogonal => 0x004f_5254_484f,
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn derive_key(master_seed: u64, domain: Domain) -> [u8; 32] {
    let mut state = master_seed ^ domain.tag().rotate_left(17);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key
}

/// Standard normals for one path, a fixed number per step.
pub struct NormalStream {
    rng: ChaCha8Rng,
    per_step: usize,
    pairs: usize,
}

impl NormalStream {
    pub fn new(master_seed: u64, domain: Domain, path: u64, per_step: usize) -> Self {
        let mut rng = ChaCha8Rng::from_seed(derive_key(master_seed, domain));
        rng.set_stream(path);
        NormalStream { rng, per_step, pairs: per_step.div_ceil(2) }
    }

    /// Positions the stream at the first draw of `step`.
    pub fn seek(&mut self, step: u64) {
        // two u64 per Box–Muller pair, two 32-bit words per u64
        self.rng.set_word_pos(step as u128 * self.pairs as u128 * 4);
    }

    pub fn per_step(&self) -> usize {
        self.per_step
    }

    /// Fills `out` (length `per_step`) with the next step's normals.
    pub fn fill_step(&mut self, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.per_step);
        let mut i = 0;
        for _ in 0..self.pairs {
            let (z0, z1) = self.pair();
            out[i] = z0;
            if i + 1 < out.len() {
                out[i + 1] = z1;
            }
            i += 2;
        }
    }

    fn pair(&mut self) -> (f64, f64) {
        // u1 in (0, 1], u2 in [0, 1)
        let u1 = ((self.rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        let r = libm::sqrt(-2.0 * libm::log(u1));
        let (s, c) = libm::sincos(2.0 * PI * u2);
        (r * c, r * s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;

    fn draws(seed: u64, path: u64, steps: usize, k: usize) -> Vec<f64> {
        let mut s = NormalStream::new(seed, Domain::Price, path, k);
        let mut out = vec![0.0; steps * k];
        for c in out.chunks_mut(k) {
            s.fill_step(c);
        }
        out
    }

    #[test]
    fn seek_matches_sequential() {
        for k in [1usize, 2, 3] {
            let all = draws(7, 3, 50, k);
            let mut s = NormalStream::new(7, Domain::Price, 3, k);
            s.seek(37);
            let mut out = vec![0.0; k];
            s.fill_step(&mut out);
            assert_eq!(&out[..], &all[37 * k..38 * k]);
        }
    }

    #[test]
    fn paths_and_domains_differ() {
        assert_ne!(draws(1, 0, 4, 1), draws(1, 1, 4, 1));
        let mut o = NormalStream::new(1, Domain::Orthogonal, 0, 1);
        let mut x = [0.0];
        o.fill_step(&mut x);
        assert_ne!(x[0], draws(1, 0, 1, 1)[0]);
    }

    #[test]
    fn moments_are_standard() {
        let d = draws(11, 0, 200_000, 1);
        let n = d.len() as f64;
        let m = d.iter().sum::<f64>() / n;
        let v = d.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
        assert!(m.abs() < 0.01, "mean {m}");
        assert!((v - 1.0).abs() < 0.01, "var {v}");
    }
}
