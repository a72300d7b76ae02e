use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream offset reserved for detector reads.
pub const DETECTION_STREAM: u64 = 1 << 62;
/// Stream offset reserved for light-shift samples.
pub const LIGHT_SHIFT_STREAM: u64 = 1 << 61;

/// Counter-based generator for `(seed, stream, index)`.
///
/// `stream` selects an independent ChaCha stream (for example a trial number)
/// and `index` jumps to a disjoint block range within it (for example a site).
pub fn substream(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos((index as u128) << 36);
    rng
}
