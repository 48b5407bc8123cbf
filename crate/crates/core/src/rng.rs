//! Counter-based random streams.
//!
//! A stream is identified by `(seed, stream, counter)`. The generator is
//! ChaCha8 keyed by the seed, with the stream index selecting the ChaCha
//! nonce and the counter its word position, so any position of any stream
//! can be reached directly without replaying earlier draws. Replicas own
//! the stream whose index is their replica id; lattice sites inside a
//! replica get child streams from [`RngStream::fork`], or the lighter
//! [`RngStream::site`] generators on the simulation hot path.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_xoshiro::Xoshiro256PlusPlus;

/// Small generator owned by one lattice site of one replica.
pub type SiteRng = Xoshiro256PlusPlus;

/// SplitMix64 finaliser, used to expand and mix 64-bit identifiers.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn key_from_seed(seed: u64) -> [u8; 32] {
    let mut key = [0u8; 32];
    let mut state = seed;
    for chunk in key.chunks_exact_mut(8) {
        state = mix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    key
}

/// Deterministic random stream addressed by seed, stream index and counter.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self::at(seed, stream, 0)
    }

    /// Positions the stream at `counter` 32-bit words from its start.
    pub fn at(seed: u64, stream: u64, counter: u128) -> Self {
        let mut inner = ChaCha8Rng::from_seed(key_from_seed(seed));
        inner.set_stream(stream);
        inner.set_word_pos(counter);
        Self {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Number of 32-bit words consumed so far.
    pub fn counter(&self) -> u128 {
        self.inner.get_word_pos()
    }

    /// Child stream for `lane`, independent of this stream's position.
    ///
    /// The child is keyed by a mix of this stream's seed and index, so the
    /// children of different parents never share a key.
    pub fn fork(&self, lane: u64) -> RngStream {
        RngStream::new(self.child_seed(), lane)
    }

    /// Xoshiro256++ generator for `lane`, keyed like [`RngStream::fork`]
    /// but costing a few nanoseconds to create instead of a ChaCha setup.
    pub fn site(&self, lane: u64) -> SiteRng {
        let key = self.child_seed();
        let mut state = [0u8; 32];
        let mut z = mix64(key ^ mix64(lane ^ 0xE703_7ED1_A0B4_28DB));
        for chunk in state.chunks_exact_mut(8) {
            z = mix64(z);
            chunk.copy_from_slice(&z.to_le_bytes());
        }
        SiteRng::from_seed(state)
    }

    fn child_seed(&self) -> u64 {
        mix64(self.seed ^ mix64(self.stream ^ 0xA076_1D64_78BD_642F))
    }
}

impl RngCore for RngStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    #[inline]
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Stable 64-bit lane for a lattice site.
pub fn site_lane(site: &[i64]) -> u64 {
    site.iter().fold(0x5151_7cc1_b727_220a_u64, |acc, &c| {
        // zigzag so that small negative coordinates stay small
        let z = ((c << 1) ^ (c >> 63)) as u64;
        mix64(acc ^ z)
    })
}
