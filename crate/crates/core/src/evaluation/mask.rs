use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Highest accepted missing rate.
pub const MAX_RATE: f64 = 0.9;

/// Positions (into the eligible set) hidden in one repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingMask {
    /// Sorted, distinct.
    pub indices: Vec<usize>,
    pub rate: f64,
    pub seed: u64,
    pub n_eligible: usize,
}

/// Number of hidden entries for `rate` over `n` eligible blocks.
pub fn mask_size(n: usize, rate: f64) -> usize {
    (rate * n as f64).round() as usize
}

/// Uniform sample without replacement of `round(rate · n)` positions.
pub fn generate_mask(n_eligible: usize, rate: f64, seed: u64) -> Result<MissingMask> {
    if !(0.0..=MAX_RATE).contains(&rate) {
        return Err(Error::RateTooHigh { rate, n: n_eligible });
    }
    let m = mask_size(n_eligible, rate);
    if m > 0 && m >= n_eligible {
        return Err(Error::RateTooHigh { rate, n: n_eligible });
    }
    let mut rng = rng_from_seed(seed);
    let mut indices = sample(&mut rng, n_eligible, m).into_vec();
    indices.sort_unstable();
    Ok(MissingMask { indices, rate, seed, n_eligible })
}
