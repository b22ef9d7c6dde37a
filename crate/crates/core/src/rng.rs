//! Seedable, splittable random streams.
//!
//! Every simulation takes a `&mut R: Rng`. Replicas get independent streams
//! from [`stream`]: the generator is ChaCha8 keyed by the run seed, and the
//! replica index selects the ChaCha stream (nonce), so stream `i` is the same
//! sequence regardless of how replicas are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Generator used for every seeded run.
pub type SimRng = ChaCha8Rng;

/// Name recorded in artifacts so runs are auditable.
pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha 0.9), seed_from_u64(seed), stream = replica index";

/// The root stream for `seed` (stream 0).
pub fn seeded(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Independent stream `index` derived from `seed`.
pub fn stream(seed: u64, index: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Runs `f(i, stream(seed, i))` for `i in 0..count` on the rayon pool.
/// Results come back in replica order, so output does not depend on scheduling.
pub fn par_replicas<T, F>(seed: u64, count: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, &mut SimRng) -> T + Sync + Send,
{
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i);
            f(i, &mut rng)
        })
        .collect()
}
