//! Monte Carlo estimation of small-ball probabilities.

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Kernel;
use crate::error::{Error, Result};
use crate::group::CayleyBall;
use crate::scalar::{Interval, Scalar};

/// Two-sided 95% normal quantile.
pub const WILSON_Z95: f64 = 1.959_963_984_540_054;

/// Samples per RNG stream. Streams are seeded with `seed ^ block`, so the
/// result does not depend on how blocks are scheduled.
const BLOCK: u64 = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub hits: u64,
    pub samples: u64,
    pub estimate: f64,
    pub ci: Interval<f64>,
}

pub fn wilson_interval(hits: u64, samples: u64, z: f64) -> Interval<f64> {
    let n = samples as f64;
    let p = hits as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    // The exact endpoints are 0 and 1 at the extremes; avoid rounding fuzz.
    let lo = if hits == 0 {
        0.0
    } else {
        (center - half).max(0.0)
    };
    let hi = if hits == samples {
        1.0
    } else {
        (center + half).min(1.0)
    };
    Interval::new(lo, hi)
}

/// Estimate `P(d(X₀, X_k) ≤ r)` by simulating the walk on group states.
///
/// `ball` only serves as a distance oracle and needs radius ≥ r. When the
/// event is certain (`r ≥ k`) no sampling is needed and the interval is
/// `[1, 1]`.
pub fn monte_carlo_small_ball(
    ball: &CayleyBall,
    kernel: &Kernel,
    k: usize,
    r: u32,
    samples: u64,
    seed: u64,
) -> Result<McEstimate> {
    if samples == 0 {
        return Err(Error::InsufficientData { needed: 1, have: 0 });
    }
    if r > ball.radius() {
        return Err(Error::RadiusTooSmall {
            requested: r,
            available: ball.radius(),
        });
    }
    kernel.check_symmetric(ball.inverse())?;
    if r as usize >= k {
        return Ok(McEstimate {
            hits: samples,
            samples,
            estimate: 1.0,
            ci: Interval::new(1.0, 1.0),
        });
    }
    let group = ball.group();
    let degree = group.degree();
    let mut w: Vec<f64> = kernel.weights_as();
    w.push(kernel.hold().as_f64());
    let moves = WeightedIndex::new(&w).map_err(|e| Error::InvalidKernel(e.to_string()))?;
    let blocks = samples.div_ceil(BLOCK);
    let hits: u64 = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ b);
            let count = BLOCK.min(samples - b * BLOCK);
            let mut hits = 0u64;
            for _ in 0..count {
                let mut x = group.identity();
                for _ in 0..k {
                    let s = moves.sample(&mut rng);
                    if s < degree {
                        group.apply_in_place(&mut x, s);
                    }
                }
                if let Some(i) = ball.index_of_state(&x) {
                    if ball.radii()[i as usize] <= r {
                        hits += 1;
                    }
                }
            }
            hits
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    Ok(McEstimate {
        hits,
        samples,
        estimate: hits as f64 / samples as f64,
        ci: wilson_interval(hits, samples, WILSON_Z95),
    })
}
