//! Deterministic random streams and the noise distributions used by the
//! matching procedures.
//!
//! A stream is identified by a root seed and a path of 64-bit indices. The
//! key of the underlying ChaCha8 generator is the SHA-256 digest of that
//! identity, so a substream depends only on `(seed, path)` and never on how
//! much of the parent has been consumed. Handing each parallel task its own
//! substream makes every result independent of the thread schedule.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Result};

const STREAM_DOMAIN: &[u8] = b"dp-tost/stream/v1";

/// A seedable random stream addressed by `(seed, stream_path)`.
#[derive(Debug, Clone)]
pub struct RngState {
    seed: u64,
    path: Vec<u64>,
    inner: ChaCha8Rng,
}

impl RngState {
    /// Root stream for `seed` (empty path).
    pub fn new(seed: u64) -> Self {
        Self::with_path(seed, Vec::new())
    }

    fn with_path(seed: u64, path: Vec<u64>) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(STREAM_DOMAIN);
        hasher.update(seed.to_le_bytes());
        hasher.update((path.len() as u64).to_le_bytes());
        for idx in &path {
            hasher.update(idx.to_le_bytes());
        }
        let digest = hasher.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        Self { seed, path, inner: ChaCha8Rng::from_seed(key) }
    }

    /// Child stream whose path is this stream's path extended by `index`.
    pub fn substream(&self, index: u64) -> Self {
        let mut path = Vec::with_capacity(self.path.len() + 1);
        path.extend_from_slice(&self.path);
        path.push(index);
        Self::with_path(self.seed, path)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_path(&self) -> &[u64] {
        &self.path
    }

    /// Uniform draw on the open interval (0, 1) with 53 bits of resolution.
    pub fn uniform_open(&mut self) -> f64 {
        let bits = self.inner.next_u64() >> 11;
        (bits as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn std_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Laplace(0, scale) draw; see [`sample_laplace`].
    pub fn laplace(&mut self, scale: f64) -> Result<f64> {
        if !(scale >= 0.0) || scale.is_infinite() {
            return Err(invalid(format!("Laplace scale must be finite and non-negative, got {scale}")));
        }
        // One uniform is consumed even at scale 0 so stream layouts do not
        // depend on the noise level.
        let u = self.uniform_open() - 0.5;
        if scale == 0.0 || u == 0.0 {
            return Ok(0.0);
        }
        Ok(-scale * u.signum() * (1.0 - 2.0 * u.abs()).ln())
    }
}

impl RngCore for RngState {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

pub fn make_rng(seed: u64) -> RngState {
    RngState::new(seed)
}

pub fn substream(rng: &RngState, index: u64) -> RngState {
    rng.substream(index)
}

pub fn sample_std_normal(rng: &mut RngState) -> f64 {
    rng.std_normal()
}

/// Laplace(0, scale) by inverse CDF on a uniform `u` in (-1/2, 1/2):
/// `x = -scale * sgn(u) * ln(1 - 2|u|)`. Returns exactly 0 when `scale == 0`.
pub fn sample_laplace(rng: &mut RngState, scale: f64) -> Result<f64> {
    rng.laplace(scale)
}
