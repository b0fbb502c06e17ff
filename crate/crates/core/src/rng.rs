//! Counter-based random streams.
//!
//! Every draw in the library comes from `stream(seed, tag, index)`: a ChaCha8
//! generator keyed by the seed with its 64-bit stream word derived from a
//! channel tag and an index. Channels never share a stream, so enabling one
//! noise source leaves the draws of every other source unchanged.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type RngStream = ChaCha8Rng;

/// Noise channels with disjoint streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u16)]
pub enum Channel {
    SlowBrownian = 1,
    FastBrownian = 2,
    JumpCount = 3,
    JumpMark = 4,
    Thinning = 5,
    Initial = 6,
    Probe = 7,
    Pilot = 8,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive the stream for `(seed, channel, index)`.
pub fn stream(seed: u64, channel: Channel, index: u64) -> RngStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let word = splitmix64(splitmix64(channel as u64) ^ index);
    rng.set_stream(word);
    rng
}

/// Derive a child seed, used to give every path or replica its own key.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(0xA5A5_5A5A)))
}

/// The bundle of per-channel streams one simulated path consumes.
#[derive(Debug, Clone)]
pub struct PathStreams {
    pub slow_bm: RngStream,
    pub fast_bm: RngStream,
    pub jump_count: RngStream,
    pub jump_mark: RngStream,
    pub thinning: RngStream,
    pub initial: RngStream,
}

impl PathStreams {
    pub fn new(seed: u64, path_index: u64) -> Self {
        let key = child_seed(seed, path_index);
        Self {
            slow_bm: stream(key, Channel::SlowBrownian, 0),
            fast_bm: stream(key, Channel::FastBrownian, 0),
            jump_count: stream(key, Channel::JumpCount, 0),
            jump_mark: stream(key, Channel::JumpMark, 0),
            thinning: stream(key, Channel::Thinning, 0),
            initial: stream(key, Channel::Initial, 0),
        }
    }
}
