//! Counter-based random stream derivation.
//!
//! Every stochastic component draws from a ChaCha stream keyed by a seed and
//! a path of stream coordinates, so parallel and serial execution of the same
//! configuration produce bit-identical draws.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a seed and a coordinate path into a single 64-bit stream key.
pub fn stream_key(seed: u64, coords: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ 0xd6e8_feb8_6659_fd93);
    for &c in coords {
        h = splitmix64(h ^ splitmix64(c));
    }
    h
}

/// An addressable random stream: a seed plus a path of coordinates.
///
/// `child(i)` extends the path, giving an independent substream for the i-th
/// unit of work regardless of evaluation order.
#[derive(Debug, Clone)]
pub struct StreamId {
    seed: u64,
    path: Vec<u64>,
}

impl StreamId {
    pub fn new(seed: u64) -> Self {
        Self { seed, path: Vec::new() }
    }

    pub fn child(&self, coord: u64) -> Self {
        let mut path = self.path.clone();
        path.push(coord);
        Self { seed: self.seed, path }
    }

    /// Instantiates the stream as a concrete RNG.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(stream_key(self.seed, &self.path))
    }

    pub fn key(&self) -> u64 {
        stream_key(self.seed, &self.path)
    }
}
