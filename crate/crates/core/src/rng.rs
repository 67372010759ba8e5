//! Seeded random streams.
//!
//! Every consumer draws from its own ChaCha stream derived from one master
//! seed, so results do not depend on the order in which consumers run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_FIELD: u64 = 1;
pub const STREAM_ENSEMBLE: u64 = 2;
pub const STREAM_TEST: u64 = 99;

pub fn stream(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}
