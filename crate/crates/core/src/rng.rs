//! Per-path random streams.
//!
//! Every path owns independent ChaCha8 streams keyed by `(seed, path_index, role, lane)`,
//! so results do not depend on how paths are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Which simulation a stream feeds. The reference role drives the independent
/// Bessel paths of the change-of-measure estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Primary = 0,
    Reference = 1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lane {
    Increments = 0,
    Events = 1,
    Start = 2,
}

pub fn stream(seed: u64, path_index: u64, role: Role, lane: Lane) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index * 16 + role as u64 * 4 + lane as u64);
    rng
}

/// The streams one path consumes.
#[derive(Debug, Clone)]
pub struct PathRng {
    pub increments: ChaCha8Rng,
    pub events: ChaCha8Rng,
    pub start: ChaCha8Rng,
}

impl PathRng {
    pub fn new(seed: u64, path_index: u64, role: Role) -> Self {
        Self {
            increments: stream(seed, path_index, role, Lane::Increments),
            events: stream(seed, path_index, role, Lane::Events),
            start: stream(seed, path_index, role, Lane::Start),
        }
    }

    pub fn primary(seed: u64, path_index: u64) -> Self {
        Self::new(seed, path_index, Role::Primary)
    }
}
