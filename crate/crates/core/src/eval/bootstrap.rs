use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const DEFAULT_RESAMPLES: usize = 10_000;

/// Paired bootstrap confidence that `b` beats `a`: the share of resamples
/// (users drawn with replacement) whose mean of `b - a` is positive, with
/// exact ties counted as half.
pub fn paired_bootstrap(a: &[f64], b: &[f64], n_resamples: usize, seed: u64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() || n_resamples == 0 {
        return Err(Error::InvalidArgument("bootstrap needs users and resamples".into()));
    }
    let d: alloc::vec::Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let n = d.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut wins = 0.0;
    for _ in 0..n_resamples {
        let mut s = 0.0;
        for _ in 0..n {
            s += d[rng.random_range(0..n)];
        }
        if s > 0.0 {
            wins += 1.0;
        } else if s == 0.0 {
            wins += 0.5;
        }
    }
    Ok(wins / n_resamples as f64)
}

/// `†` above 0.99, `††` above 0.95, `†††` above 0.90.
pub fn marker(confidence: f64) -> Option<&'static str> {
    if confidence > 0.99 {
        Some("†")
    } else if confidence > 0.95 {
        Some("††")
    } else if confidence > 0.90 {
        Some("†††")
    } else {
        None
    }
}
