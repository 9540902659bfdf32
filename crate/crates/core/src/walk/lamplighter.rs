//! Exact return probability of the switch–walk–switch walk on `ℤ₂ ≀ ℤ`.
//!
//! Each step randomizes the lamp under the cursor, moves the cursor by ±1,
//! and randomizes the lamp again. Every site the base walk visits ends up
//! with an independent fair lamp, so
//!
//! `P^n(o, o) = E[2^{-(max - min + 1)}; S_n = 0]`
//!
//! for the simple walk `S` on ℤ. Summing by parts over the extremes turns
//! this into a weighted sum of confined return probabilities
//! `q(a, b) = P(S stays in [-a, b], S_n = 0)`, each of which has a closed
//! spectral form on a path graph.

use crate::error::{Error, Result};

/// Largest supported time.
pub const RANGE_DP_CAP: usize = 2048;

/// `P^n(o, o)` for the switch–walk–switch walk.
pub fn lamplighter_range_dp(n: usize) -> Result<f64> {
    if n > RANGE_DP_CAP {
        return Err(Error::SizeCap {
            requested: n,
            cap: RANGE_DP_CAP,
        });
    }
    if n == 0 {
        return Ok(1.0);
    }
    if n % 2 == 1 {
        return Ok(0.0);
    }
    let cap = n / 2;
    // Summation-by-parts weights for g(x) = 2^{-x} truncated at x = cap.
    let w: Vec<f64> = (0..=cap)
        .map(|x| {
            if x < cap {
                0.5f64.powi(x as i32 + 1)
            } else {
                0.5f64.powi(cap as i32)
            }
        })
        .collect();

    // For an interval of `width` sites, q at start position i (1-based) is
    //   Σ_j 2/(width+1) · sin²(π i j/(width+1)) · cos^n(π j/(width+1)).
    let mut total = 0.0;
    let mut sin2 = Vec::new();
    let mut cosn = Vec::new();
    for width in 1..=(2 * cap + 1) {
        let m = width + 1;
        let theta = std::f64::consts::PI / m as f64;
        sin2.clear();
        sin2.extend((0..m).map(|t| (theta * t as f64).sin().powi(2)));
        cosn.clear();
        cosn.extend((1..=width).map(|j| (theta * j as f64).cos().powi(n as i32)));
        // a + b + 1 = width, 0 ≤ a, b ≤ cap
        let a_lo = width.saturating_sub(1 + cap);
        let a_hi = (width - 1).min(cap);
        for a in a_lo..=a_hi {
            let b = width - 1 - a;
            let i = a + 1;
            let mut q = 0.0;
            let mut idx = 0usize;
            for c in &cosn {
                idx += i;
                if idx >= m {
                    idx -= m * (idx / m);
                }
                q += sin2[idx] * c;
            }
            q *= 2.0 / m as f64;
            total += w[a] * w[b] * q;
        }
    }
    Ok(0.5 * total)
}

/// Brute-force dynamic program over (minimum, maximum, position) of the
/// base walk. Independent of the spectral formula; `O(n⁴)`.
pub fn lamplighter_range_brute(n: usize) -> f64 {
    use std::collections::HashMap;
    let mut cur: HashMap<(i64, i64, i64), f64> = HashMap::from([((0, 0, 0), 1.0)]);
    for _ in 0..n {
        let mut next = HashMap::with_capacity(cur.len() * 2);
        for (&(lo, hi, x), &p) in &cur {
            for y in [x - 1, x + 1] {
                *next.entry((lo.min(y), hi.max(y), y)).or_insert(0.0) += 0.5 * p;
            }
        }
        cur = next;
    }
    cur.iter()
        .filter(|((_, _, x), _)| *x == 0)
        .map(|(&(lo, hi, _), &p)| p * 0.5f64.powi((hi - lo + 1) as i32))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_values() {
        assert_eq!(lamplighter_range_dp(0).unwrap(), 1.0);
        assert!((lamplighter_range_dp(2).unwrap() - 0.125).abs() < 1e-15);
        assert_eq!(lamplighter_range_dp(7).unwrap(), 0.0);
        assert!(matches!(
            lamplighter_range_dp(4096),
            Err(Error::SizeCap { .. })
        ));
    }

    #[test]
    fn spectral_sum_matches_brute_force() {
        for n in (2..=24).step_by(2) {
            let a = lamplighter_range_dp(n).unwrap();
            let b = lamplighter_range_brute(n);
            assert!(
                (a - b).abs() < 1e-13 * b.max(1e-300) + 1e-17,
                "n={n}: {a} vs {b}"
            );
        }
    }

    #[test]
    fn decreasing_along_even_times() {
        let mut last = 1.0;
        for n in (2..=200).step_by(2) {
            let p = lamplighter_range_dp(n).unwrap();
            assert!(p < last && p > 0.0);
            last = p;
        }
    }
}
