use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent, reproducible random stream for `(seed, stream)`.
///
/// Streams never overlap, so work split across threads draws the same
/// numbers as a serial run.
pub(crate) fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Build a stream id from a domain tag and an index within that domain.
pub(crate) const fn stream_id(domain: u32, index: u32) -> u64 {
    ((domain as u64) << 32) | index as u64
}
