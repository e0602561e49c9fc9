//! Counter-based random streams.
//!
//! Every random quantity in the crate is drawn from a ChaCha8 stream keyed by
//! `(master_seed, stream)`. Replicas, Poisson fibres and auxiliary samplers
//! each get their own stream id, so results do not depend on scheduling.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream ids are namespaced by the high bits so that, e.g., replica 3 of the
/// walk and fibre 3 of a Poisson process never share a stream.
pub mod domain {
    pub const REPLICA: u64 = 0;
    pub const POISSON_FIBRE: u64 = 1 << 60;
    pub const AUX: u64 = 2 << 60;
}

fn key(master: u64) -> [u8; 32] {
    let mut seed = [0u8; 32];
    // splitmix64 expansion of the master seed
    let mut s = master;
    for chunk in seed.chunks_mut(8) {
        s = s.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = s;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        chunk.copy_from_slice(&z.to_le_bytes());
    }
    seed
}

/// Generator for `stream` under `master`.
pub fn stream(master: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::from_seed(key(master));
    rng.set_stream(stream);
    rng
}

/// Generator for replica `index`.
pub fn replica(master: u64, index: u64) -> StreamRng {
    stream(master, domain::REPLICA | index)
}

/// A derived master seed, used when a replica needs a whole family of streams
/// (for instance its own Poisson point process).
pub fn derive_seed(master: u64, label: u64) -> u64 {
    let mut rng = stream(master, domain::AUX | label);
    rng.next_u64()
}

/// Random access into stream `stream`: the `word`-th 64-bit output.
pub fn word_at(master_key: &[u8; 32], stream: u64, word: u64) -> u64 {
    let mut rng = ChaCha8Rng::from_seed(*master_key);
    rng.set_stream(stream);
    rng.set_word_pos(2 * word as u128);
    rng.next_u64()
}

pub fn master_key(master: u64) -> [u8; 32] {
    key(master)
}

/// Uniform in (0, 1], from the top 53 bits.
#[inline]
pub fn open_unit(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64)
}

/// Standard exponential variate.
#[inline]
pub fn exp1<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    -open_unit(rng.next_u64()).ln()
}

/// Source of uniform nearest-neighbour directions in `0..2d`.
///
/// Draws are exact: 64-bit words are cut into fixed-width chunks and chunks
/// outside `0..2d` are rejected.
#[derive(Debug, Clone)]
pub struct DirectionSource {
    n_dirs: u64,
    width: u32,
    mask: u64,
    buf: u64,
    left: u32,
}

impl DirectionSource {
    pub fn new(d: usize) -> Self {
        let n_dirs = 2 * d as u64;
        let width = 64 - (n_dirs - 1).leading_zeros();
        DirectionSource { n_dirs, width, mask: (1u64 << width) - 1, buf: 0, left: 0 }
    }

    #[inline]
    pub fn next<R: RngCore + ?Sized>(&mut self, rng: &mut R) -> usize {
        loop {
            if self.left < self.width {
                self.buf = rng.next_u64();
                self.left = 64;
            }
            let v = self.buf & self.mask;
            self.buf >>= self.width;
            self.left -= self.width;
            if v < self.n_dirs {
                return v as usize;
            }
        }
    }
}

/// Draw an index from a discrete distribution given by its cumulative sums.
pub fn sample_cumulative<R: Rng + ?Sized>(rng: &mut R, cumulative: &[f64]) -> usize {
    let total = *cumulative.last().expect("empty distribution");
    let x = rng.random::<f64>() * total;
    let i = cumulative.partition_point(|&c| c <= x);
    i.min(cumulative.len() - 1)
}

/// Cumulative sums of `weights`.
pub fn cumulative(weights: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| replica(7, 1).next_u64()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        assert_ne!(replica(7, 1).next_u64(), replica(7, 2).next_u64());
        assert_ne!(replica(7, 1).next_u64(), replica(8, 1).next_u64());
    }

    #[test]
    fn random_access_matches_sequential_stream() {
        let k = master_key(11);
        let mut rng = ChaCha8Rng::from_seed(k);
        rng.set_stream(5);
        let seq: Vec<u64> = (0..10).map(|_| rng.next_u64()).collect();
        for (i, v) in seq.iter().enumerate() {
            assert_eq!(word_at(&k, 5, i as u64), *v);
        }
    }

    #[test]
    fn directions_are_uniform() {
        let mut rng = replica(1, 0);
        let mut src = DirectionSource::new(3);
        let mut counts = [0usize; 6];
        let n = 600_000;
        for _ in 0..n {
            counts[src.next(&mut rng)] += 1;
        }
        let e = n as f64 / 6.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        // 5 dof, 0.999 quantile is 20.5
        assert!(chi2 < 20.5, "chi2 = {chi2}");
    }
}
