//! Parallel dialogue batches. Each dialogue runs on its own `(seed, index)`
//! stream, so the result is the same for any thread count.

use rayon::prelude::*;

use todsim_core::harness::{run_indexed, BatchConfig, HarnessError, Transcript};
use todsim_core::Ontology;

use crate::users::UserFactory;

/// Runs dialogues `0..n` and returns them in index order.
pub fn run_batch(
    o: &Ontology,
    cfg: &BatchConfig,
    users: &UserFactory,
    n: usize,
    threads: usize,
) -> Result<Vec<Transcript>, HarnessError> {
    let one = |i: u64| {
        let mut us = users.make();
        run_indexed(us.as_mut(), o, cfg, i)
    };
    if threads == 1 || !users.is_parallel_safe() {
        return (0..n as u64).map(one).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool");
    pool.install(|| (0..n as u64).into_par_iter().map(one).collect())
}
