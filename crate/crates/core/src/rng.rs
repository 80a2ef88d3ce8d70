//! Deterministic random-number substreams.
//!
//! Every random draw in the library flows from a single top-level seed through
//! `substream(seed, domain, index)`. Distinct (domain, index) pairs map to distinct
//! ChaCha streams, so per-row, per-user, and per-trial generators are independent and
//! stable: adding rows, users, or trials never perturbs the draws of existing ones,
//! and parallel execution over indices reproduces the serial results exactly.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Channel matrix rows (index = row).
pub const DOMAIN_CHANNEL: u64 = 0;
/// Desired symbol streams (index = user).
pub const DOMAIN_SYMBOLS: u64 = 1;
/// Monte-Carlo receiver noise (index packs user, grid point, trial).
pub const DOMAIN_SER: u64 = 2;
/// Random waveform initialization.
pub const DOMAIN_INIT: u64 = 3;
/// Per-point seed derivation for sweeps that redraw realizations.
pub const DOMAIN_SWEEP: u64 = 4;

/// Generator for stream (domain, index) of the given seed. `index` must fit in 56 bits.
pub fn substream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    assert!(domain < 256, "domain must fit in 8 bits");
    assert!(index < (1 << 56), "index must fit in 56 bits");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((domain << 56) | index);
    rng
}

/// One draw from the circularly-symmetric complex normal CN(0, variance).
pub fn complex_gaussian<R: Rng>(rng: &mut R, variance: f64) -> Complex64 {
    let scale = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(scale * re, scale * im)
}
