//! Seeded scene-level train/eval split.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.9;

/// `floor(fraction * n)`, guarded against representation error just below
/// an integer (e.g. `0.9 * 10`).
pub fn train_count(n: usize, fraction: f64) -> usize {
    let raw = fraction * n as f64;
    let nearest = num_traits::Float::round(raw);
    if (raw - nearest).abs() < 1e-9 {
        nearest as usize
    } else {
        raw as usize
    }
}


/// Shuffles `scenes` with a generator seeded by `seed`, then puts the first
/// `floor(fraction * n)` into the training set and the rest into the
/// evaluation set. Splitting whole scenes keeps their tiles together.
pub fn split_dataset<T>(mut scenes: Vec<T>, fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Parameter(format!(
            "train fraction must lie strictly between 0 and 1, got {fraction}"
        )));
    }
    if scenes.len() < 2 {
        return Err(Error::Parameter(format!(
            "need at least 2 scenes to split, got {}",
            scenes.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    scenes.shuffle(&mut rng);
    let n_train = train_count(scenes.len(), fraction);
    let eval = scenes.split_off(n_train);
    Ok((scenes, eval))
}
