//! Seeded random streams.
//!
//! Every estimate draws from its own ChaCha stream keyed by (element, phase), so
//! results do not depend on the order in which elements are processed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Which sampling campaign of an element a stream feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Phase {
    Magnitude = 0,
    SecondStage = 1,
    Postselection = 2,
    SignTest = 3,
    SignPilot = 4,
    Experiment = 5,
}

pub type StreamRng = ChaCha8Rng;

/// A generator for `(element, phase)` under a base seed.
pub fn stream(seed: u64, element: u64, phase: Phase) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(element.wrapping_mul(16).wrapping_add(phase as u64));
    rng
}
