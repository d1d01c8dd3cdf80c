use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used for every seeded stream in the simulator.
pub type DialogueRng = ChaCha8Rng;

/// Independent stream for dialogue `index` under `seed`.
///
/// Streams depend only on `(seed, index)`, so batches can be run in any
/// order or in parallel and still reproduce the same transcripts.
pub fn dialogue_rng(seed: u64, index: u64) -> DialogueRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
