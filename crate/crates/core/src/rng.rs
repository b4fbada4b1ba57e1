//! Seeded random streams.
//!
//! Every random quantity in the crate comes from a ChaCha8 generator
//! seeded with `seed_from_u64(seed)` and switched to a fixed stream id,
//! so distinct purposes never share draws and results are identical on
//! every platform.
//!
//! | stream | purpose                                   |
//! |--------|-------------------------------------------|
//! | 0      | instance generation                       |
//! | 1      | common random numbers for simulation      |
//! | 2      | rollout offline phase                     |
//! | 3      | rollout online phase (real transitions)   |
//! | 4      | rollout nested simulations                |
//! | 5      | random test policies                      |

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_INSTANCE: u64 = 0;
pub const STREAM_CRN: u64 = 1;
pub const STREAM_OFFLINE: u64 = 2;
pub const STREAM_ONLINE: u64 = 3;
pub const STREAM_NESTED: u64 = 4;
pub const STREAM_POLICY: u64 = 5;

pub type StreamRng = ChaCha8Rng;

pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// List of `len` uniforms in `[0, 1)` drawn from the CRN stream of `seed`.
pub fn crn_list(seed: u64, len: usize) -> Vec<f64> {
    let mut rng = stream_rng(seed, STREAM_CRN);
    (0..len).map(|_| rng.gen::<f64>()).collect()
}
