//! Storage and compute accounting for surrogates versus stored trajectories.

use crate::error::{Error, Result};

/// Parameter vectors kept by a quadratic surrogate.
pub const SURROGATE_POINTS: usize = 3;

/// Storage of a `checkpoints`-point trajectory relative to a 3-point surrogate.
pub fn storage_ratio(checkpoints: usize) -> f64 {
    checkpoints as f64 / SURROGATE_POINTS as f64
}

/// Raw payload bytes of `points` parameter vectors of length `n`.
pub fn payload_bytes(points: usize, param_count: usize, bytes_per_value: usize) -> u64 {
    (points as u64) * (param_count as u64) * (bytes_per_value as u64)
}

/// Control-point fitting cost in equivalent training epochs: every iteration
/// evaluates two Monte-Carlo mini-batch gradients of size `batch`.
pub fn equivalent_epochs(max_iters: usize, mc_samples: usize, batch: usize, train_size: usize) -> Result<f64> {
    if train_size == 0 {
        return Err(Error::InvalidArgument("train size must be positive".into()));
    }
    Ok((mc_samples * max_iters * batch) as f64 / train_size as f64)
}
