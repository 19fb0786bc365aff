//! Per-trial random streams and order-preserving parallel trial execution.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub type TrialRng = ChaCha8Rng;

/// Random stream for trial `index` under experiment seed `seed`. Streams for
/// distinct indices are independent ChaCha streams of the same key, so a
/// trial's randomness does not depend on which thread runs it.
pub fn trial_rng(seed: u64, index: u64) -> TrialRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Runs `count` trials (indices `first..first + count`) in parallel and
/// returns their results in index order.
pub fn run_trials<T, F>(seed: u64, first: u64, count: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, &mut TrialRng) -> T + Sync,
{
    (first..first + count)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(seed, i);
            f(i, &mut rng)
        })
        .collect()
}
