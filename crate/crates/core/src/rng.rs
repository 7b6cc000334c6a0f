//! Named, seeded random streams.
//!
//! Every stream is ChaCha8 keyed by the experiment seed, with the 64-bit
//! ChaCha stream id derived from the stream name by FNV-1a. Two code paths
//! that open the same `(seed, name)` pair observe bit-identical sequences.

use alloc::string::String;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::tensor::Scalar;

/// Seed for the server's model initialization.
pub const SERVER_INIT: &str = "server-init";
/// Seed for the attacker's shadow models.
pub const ATTACKER_INIT: &str = "attacker-init";

pub fn client_batch_stream(user: u32) -> String {
    alloc::format!("client-batch:{user}")
}

pub fn latent_stream(user: u32) -> String {
    alloc::format!("latent:{user}")
}

pub fn server_init_stream(user: u32) -> String {
    alloc::format!("{SERVER_INIT}:{user}")
}

pub fn attacker_init_stream(user: u32) -> String {
    alloc::format!("{ATTACKER_INIT}:{user}")
}

pub fn attacker_latent_stream(user: u32) -> String {
    alloc::format!("attacker-latent:{user}")
}

/// 64-bit FNV-1a.
pub fn stream_id(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// A deterministic random stream identified by `(seed, name)`.
#[derive(Debug, Clone)]
pub struct StreamRng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl StreamRng {
    pub fn new(seed: u64, name: &str) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        let stream = stream_id(name);
        inner.set_stream(stream);
        StreamRng { seed, stream, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Number of 32-bit words consumed so far.
    pub fn word_pos(&self) -> u128 {
        self.inner.get_word_pos()
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn normal<T: Scalar>(&mut self, mean: f64, std: f64) -> T {
        T::from_f64(mean + std * self.standard_normal())
    }

    /// Draw from Gamma(shape, 1).
    pub fn gamma(&mut self, shape: f64) -> f64 {
        Gamma::new(shape, 1.0)
            .expect("gamma shape validated by caller")
            .sample(&mut self.inner)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<X>(&mut self, items: &mut [X]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_and_name_replay() {
        let mut a = StreamRng::new(7, "latent:0");
        let mut b = StreamRng::new(7, "latent:0");
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn names_separate_streams() {
        let mut a = StreamRng::new(7, "latent:0");
        let mut b = StreamRng::new(7, "latent:1");
        let xs: alloc::vec::Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let ys: alloc::vec::Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        assert_ne!(xs, ys);
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(stream_id(""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(stream_id("a"), 0xaf63_dc4c_8601_ec8c);
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut r = StreamRng::new(1, "u");
        for _ in 0..1000 {
            let u = r.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }
}
