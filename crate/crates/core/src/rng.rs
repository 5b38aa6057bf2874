//! Reproducible random streams.
//!
//! A stream is identified by `(master seed, purpose, index)`. The purpose
//! selects a ChaCha key derived from the master seed, and the index selects
//! one of ChaCha's 2^64 independent streams under that key, so the
//! increments of path `i` never depend on how paths are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// What a stream is used for. Different purposes never share a key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamPurpose {
    LeaderNoise,
    FollowerNoise,
    PolicyInit,
    Perturbation,
    /// Free-form tag for studies that need additional independent families.
    Custom(u64),
}

impl StreamPurpose {
    fn tag(self) -> u64 {
        match self {
            StreamPurpose::LeaderNoise => 1,
            StreamPurpose::FollowerNoise => 2,
            StreamPurpose::PolicyInit => 3,
            StreamPurpose::Perturbation => 4,
            StreamPurpose::Custom(t) => 0x1000 + t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngContract {
    pub master_seed: u64,
}

impl RngContract {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    pub fn stream(&self, purpose: StreamPurpose, index: u64) -> ChaCha8Rng {
        let mut rng =
            ChaCha8Rng::seed_from_u64(splitmix64(self.master_seed ^ splitmix64(purpose.tag())));
        rng.set_stream(index);
        rng
    }

    /// A contract whose streams are independent of this one's, e.g. for a
    /// held-out evaluation seed.
    pub fn derive(&self, salt: u64) -> Self {
        Self {
            master_seed: splitmix64(self.master_seed.wrapping_add(splitmix64(salt))),
        }
    }

    /// `count` standard normal draws from stream `(purpose, index)`.
    pub fn normals(&self, purpose: StreamPurpose, index: u64, count: usize) -> Vec<f64> {
        let mut rng = self.stream(purpose, index);
        draw_normals(&mut rng, count)
    }
}

pub fn draw_normals<R: rand::Rng + ?Sized>(rng: &mut R, count: usize) -> Vec<f64> {
    (0..count).map(|_| StandardNormal.sample(rng)).collect()
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
