//! Seed splitting.
//!
//! Every random draw in a Monte Carlo sweep comes from a ChaCha8 generator
//! keyed by `(master_seed, purpose)` and positioned on stream `run_index`.
//! Run `r` therefore sees the same random numbers no matter which worker
//! executes it, and the inter-AP channel drawn for run `r` is shared by all
//! sweep cells that use the same master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random streams used by one Monte Carlo run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    /// Inter-AP channel matrix.
    InterApChannel,
    /// Phase noise, measurement noise and pilot noise of one run.
    Run,
    /// UE channels and pilot noise used by the rate oracle.
    Oracle,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::InterApChannel => 0x6a09_e667_f3bc_c908,
            Purpose::Run => 0xbb67_ae85_84ca_a73b,
            Purpose::Oracle => 0x3c6e_f372_fe94_f82b,
        }
    }
}

pub fn stream(master_seed: u64, run_index: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed ^ purpose.tag());
    rng.set_stream(run_index);
    rng
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
