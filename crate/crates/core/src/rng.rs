//! Named, counter-addressed random streams.
//!
//! Every random draw in a run is taken from a generator keyed by the master
//! seed, a [`Stream`] tag and an index path (frame, episode, step, link, ...).
//! Two methods that share the master seed therefore see the same mobility,
//! clustering and fading realizations, and draws never depend on the order in
//! which other parts of the simulation consumed randomness.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Attraction = 1,
    Mobility = 2,
    Clustering = 3,
    Fading = 4,
    Exploration = 5,
    Init = 6,
    Replay = 7,
    Benchmark = 8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    master: u64,
}

impl SeedTree {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// Key for `(stream, path)`; distinct paths give unrelated keys.
    pub fn key(&self, stream: Stream, path: &[u64]) -> u64 {
        let mut h = splitmix64(self.master ^ 0x243f_6a88_85a3_08d3);
        h = splitmix64(h ^ stream as u64);
        for (depth, &p) in path.iter().enumerate() {
            h = splitmix64(h ^ p.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(depth as u64));
        }
        h
    }

    pub fn rng(&self, stream: Stream, path: &[u64]) -> StreamRng {
        StreamRng::seed_from_u64(self.key(stream, path))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
