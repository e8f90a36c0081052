//! Counter-based random streams.
//!
//! Every random draw in an episode is keyed by `(seed, episode, step, role)`
//! plus up to three cell indices, so results do not depend on thread
//! scheduling or on which other components consumed randomness.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Which component consumes a stream. Each role gets an independent stream so
/// toggling one feature never perturbs another's draws.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Role {
    LatentInit = 1,
    Environment = 2,
    DynamicsInit = 3,
    DynamicsSample = 4,
    PolicyInit = 5,
    PolicySampling = 6,
    PolicyShift = 7,
    Mppi = 8,
    Test = 99,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub episode: u64,
    pub step: u64,
    pub role: Role,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl StreamKey {
    pub fn new(seed: u64, episode: u64, step: u64, role: Role) -> Self {
        Self {
            seed,
            episode,
            step,
            role,
        }
    }

    /// A key for ad-hoc use outside the control loop (tests, examples).
    pub fn from_seed(seed: u64) -> Self {
        Self::new(seed, 0, 0, Role::Test)
    }

    pub fn with_step(self, step: u64) -> Self {
        Self { step, ..self }
    }

    pub fn with_role(self, role: Role) -> Self {
        Self { role, ..self }
    }

    fn mix(&self, cells: [u64; 3]) -> u64 {
        let mut h = splitmix(self.seed);
        for word in [self.episode, self.step, self.role as u64, cells[0], cells[1], cells[2]] {
            h = splitmix(h ^ word);
        }
        h
    }

    /// Stream for the whole key.
    pub fn rng(&self) -> ChaCha8Rng {
        self.cell_rng(0, 0, 0)
    }

    /// Stream for one cell `(i, n, m)` of a sample tensor.
    pub fn cell_rng(&self, i: usize, n: usize, m: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.mix([i as u64 + 1, n as u64 + 1, m as u64 + 1]))
    }
}
