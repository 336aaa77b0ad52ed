//! Deterministic random streams.
//!
//! Every Monte-Carlo trial, randomization candidate, and sampled support set
//! draws from a substream derived from (master seed, index). Substreams are
//! independent ChaCha streams, so parallel and serial execution see identical
//! data regardless of scheduling.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// A seeded random stream with Gaussian sampling via Box-Muller.
pub struct Stream {
    rng: ChaCha12Rng,
    spare_normal: Option<f64>,
}

impl Stream {
    /// Root stream for a master seed.
    pub fn root(master_seed: u64) -> Self {
        Stream::substream(master_seed, 0)
    }

    /// Independent substream `index` of `master_seed`.
    pub fn substream(master_seed: u64, index: u64) -> Self {
        let mut key = [0u8; 32];
        // Spread the seed over the key with splitmix64 so nearby seeds do not
        // share key bytes.
        let mut s = master_seed ^ 0x9e37_79b9_7f4a_7c15;
        for chunk in key.chunks_mut(8) {
            s = s.wrapping_add(0x9e37_79b9_7f4a_7c15);
            let mut z = s;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
            z ^= z >> 31;
            chunk.copy_from_slice(&z.to_le_bytes());
        }
        let mut rng = ChaCha12Rng::from_seed(key);
        rng.set_stream(index);
        Stream { rng, spare_normal: None }
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform integer in [0, n).
    pub fn uniform_index(&mut self, n: usize) -> usize {
        assert!(n > 0);
        // Rejection sampling keeps the draw exactly uniform.
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.rng.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        loop {
            let u1 = self.uniform();
            if u1 <= 0.0 {
                continue;
            }
            let u2 = self.uniform();
            let r = (-2.0 * u1.ln()).sqrt();
            let theta = 2.0 * std::f64::consts::PI * u2;
            self.spare_normal = Some(r * theta.sin());
            return r * theta.cos();
        }
    }

    /// K distinct indices from [0, n), sorted ascending, uniform over subsets.
    pub fn distinct_sorted(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n);
        // Floyd's algorithm.
        let mut chosen = Vec::with_capacity(k);
        for j in (n - k)..n {
            let t = self.uniform_index(j + 1);
            if chosen.contains(&t) {
                chosen.push(j);
            } else {
                chosen.push(t);
            }
        }
        chosen.sort_unstable();
        chosen
    }
}
