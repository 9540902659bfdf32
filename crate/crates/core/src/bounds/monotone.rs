//! Monotone functions on `[1, ∞)` and their generalized inverses.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, RangeSide, Result};
use crate::profiles::{Kind, ProfileTable};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Increasing,
    Decreasing,
}

#[derive(Clone)]
enum Repr {
    /// `a·x^{−p}·(ln x)^{−q}`.
    PowerLog {
        a: f64,
        p: f64,
        q: f64,
    },
    /// Piecewise log-log linear through the nodes.
    Interp {
        xs: Vec<f64>,
        ys: Vec<f64>,
    },
    /// Right-continuous step: `ys[i]` on `[xs[i], xs[i+1])`.
    Step {
        xs: Vec<f64>,
        ys: Vec<f64>,
    },
    Closure(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

/// A monotone function with a declared direction and a certified range.
///
/// Outside the certified range analytic forms keep being evaluated and
/// tables clamp to their end values; [`MonotoneFunction::extrapolated`]
/// reports when that happens.
#[derive(Clone)]
pub struct MonotoneFunction {
    name: String,
    direction: Direction,
    certified: (f64, f64),
    domain_lo: f64,
    repr: Repr,
}

impl fmt::Debug for MonotoneFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MonotoneFunction")
            .field("name", &self.name)
            .field("direction", &self.direction)
            .field("certified", &self.certified)
            .finish()
    }
}

/// Default lower end of the domain.
pub const DOMAIN_LO: f64 = 1.0;

impl MonotoneFunction {
    /// `a·x^{−p}·(ln x)^{−q}` with `p, q ≥ 0` (decreasing).
    pub fn power_log(a: f64, p: f64, q: f64) -> Result<Self> {
        if !(a > 0.0 && p >= 0.0 && q >= 0.0) {
            return Err(Error::Format(format!(
                "power-log model needs a > 0, p, q ≥ 0 (got {a}, {p}, {q})"
            )));
        }
        Ok(Self {
            name: format!("power_log(a={a},p={p},q={q})"),
            direction: Direction::Decreasing,
            certified: (DOMAIN_LO, f64::INFINITY),
            domain_lo: DOMAIN_LO,
            repr: Repr::PowerLog { a, p, q },
        })
    }

    pub fn constant(c: f64) -> Self {
        Self {
            name: format!("constant({c})"),
            direction: Direction::Decreasing,
            certified: (DOMAIN_LO, f64::INFINITY),
            domain_lo: DOMAIN_LO,
            repr: Repr::PowerLog {
                a: c,
                p: 0.0,
                q: 0.0,
            },
        }
    }

    fn check_nodes(xs: &[f64], ys: &[f64], direction: Direction) -> Result<()> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(Error::InsufficientData {
                needed: 1,
                have: xs.len().min(ys.len()),
            });
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) || xs[0] < 0.0 {
            return Err(Error::Format(
                "table abscissae must be nonnegative and increasing".into(),
            ));
        }
        let ok = match direction {
            Direction::Decreasing => ys.windows(2).all(|w| w[1] <= w[0]),
            Direction::Increasing => ys.windows(2).all(|w| w[1] >= w[0]),
        };
        if !ok || ys.iter().any(|y| !(*y > 0.0)) {
            return Err(Error::Format(
                "table values must be positive and monotone".into(),
            ));
        }
        Ok(())
    }

    pub fn interpolated(
        name: &str,
        xs: Vec<f64>,
        ys: Vec<f64>,
        direction: Direction,
    ) -> Result<Self> {
        Self::check_nodes(&xs, &ys, direction)?;
        if xs[0] <= 0.0 {
            return Err(Error::Format(
                "log-log interpolation needs positive abscissae".into(),
            ));
        }
        let certified = (xs[0], *xs.last().unwrap());
        Ok(Self {
            name: name.into(),
            direction,
            certified,
            domain_lo: DOMAIN_LO,
            repr: Repr::Interp { xs, ys },
        })
    }

    pub fn step(name: &str, xs: Vec<f64>, ys: Vec<f64>, direction: Direction) -> Result<Self> {
        Self::check_nodes(&xs, &ys, direction)?;
        let certified = (xs[0], *xs.last().unwrap());
        Ok(Self {
            name: name.into(),
            direction,
            certified,
            domain_lo: DOMAIN_LO.min(certified.0),
            repr: Repr::Step { xs, ys },
        })
    }

    /// Wrap a closure. The caller vouches for monotonicity.
    pub fn from_fn(
        name: &str,
        direction: Direction,
        certified: (f64, f64),
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            direction,
            certified,
            domain_lo: DOMAIN_LO,
            repr: Repr::Closure(Arc::new(f)),
        }
    }

    /// The growth function `r ↦ Gr(r)` of a table, as an increasing step
    /// function on `[0, R]`.
    pub fn growth(growth: &[u64]) -> Result<Self> {
        let xs = (0..growth.len()).map(|r| r as f64).collect();
        let ys = growth.iter().map(|&g| g as f64).collect();
        Self::step("growth", xs, ys, Direction::Increasing)
    }

    /// Points of one kind from a profile table, interpolated log-log.
    pub fn from_table(table: &ProfileTable, kinds: &[Kind]) -> Result<Self> {
        let mut pts: Vec<(f64, f64)> = table
            .points
            .iter()
            .filter(|p| kinds.contains(&p.kind))
            .map(|p| (p.n as f64, p.value))
            .collect();
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        pts.dedup_by(|b, a| {
            if a.0 == b.0 {
                a.1 = a.1.min(b.1);
                true
            } else {
                false
            }
        });
        // Enforce monotonicity by taking the running minimum; for UPPER
        // points this is the envelope closure.
        let mut run = f64::INFINITY;
        for p in pts.iter_mut() {
            run = run.min(p.1);
            p.1 = run;
        }
        let (xs, ys) = pts.into_iter().unzip();
        Self::interpolated(
            &format!("table({:?})", table.quantity),
            xs,
            ys,
            Direction::Decreasing,
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn certified_range(&self) -> (f64, f64) {
        self.certified
    }

    pub fn extrapolated(&self, x: f64) -> bool {
        x < self.certified.0 || x > self.certified.1
    }

    pub fn eval(&self, x: f64) -> f64 {
        match &self.repr {
            Repr::PowerLog { a, p, q } => {
                let mut v = *a;
                if *p != 0.0 {
                    v *= x.powf(-p);
                }
                if *q != 0.0 {
                    v *= x.ln().powf(-q);
                }
                v
            }
            Repr::Interp { xs, ys } => {
                if x <= xs[0] {
                    return ys[0];
                }
                if x >= *xs.last().unwrap() {
                    return *ys.last().unwrap();
                }
                let i = xs.partition_point(|&t| t <= x) - 1;
                let t = (x.ln() - xs[i].ln()) / (xs[i + 1].ln() - xs[i].ln());
                (ys[i].ln() * (1.0 - t) + ys[i + 1].ln() * t).exp()
            }
            Repr::Step { xs, ys } => {
                let i = xs.partition_point(|&t| t <= x);
                ys[i.max(1) - 1]
            }
            Repr::Closure(f) => f(x),
        }
    }

    /// Reciprocal `1/f(x)`, computed without overflow for power-log forms
    /// (used by integrals where `f` may be infinite at `x = 1`).
    pub fn recip(&self, x: f64) -> f64 {
        match &self.repr {
            Repr::PowerLog { a, p, q } => {
                let mut v = 1.0 / a;
                if *p != 0.0 {
                    v *= x.powf(*p);
                }
                if *q != 0.0 {
                    v *= x.ln().max(0.0).powf(*q);
                }
                v
            }
            _ => 1.0 / self.eval(x),
        }
    }

    /// Nodes of a tabulated function, if any.
    fn nodes(&self) -> Option<&[f64]> {
        match &self.repr {
            Repr::Interp { xs, .. } | Repr::Step { xs, .. } => Some(xs),
            _ => None,
        }
    }
}

/// `f⁻¹(x) = inf{t ≥ 1 : f(t) ≤ x}` for decreasing `f`, and
/// `inf{t ≥ 1 : f(t) ≥ x}` for increasing `f`.
///
/// The search is exact on the nodes of step tables and bisects elsewhere;
/// the returned `t` always satisfies the defining inequality, so
/// `f(f⁻¹(x)) ≤ x` (decreasing case) holds at every returned point.
pub fn generalized_inverse(f: &MonotoneFunction, x: f64) -> Result<f64> {
    let hit = |t: f64| match f.direction {
        Direction::Decreasing => f.eval(t) <= x,
        Direction::Increasing => f.eval(t) >= x,
    };
    if hit(f.domain_lo) {
        return Ok(f.domain_lo);
    }
    if let Repr::Step { xs, .. } = &f.repr {
        return xs
            .iter()
            .copied()
            .find(|&t| hit(t))
            .ok_or(Error::OutOfRange {
                x,
                side: if f.direction == Direction::Decreasing {
                    RangeSide::Below
                } else {
                    RangeSide::Above
                },
            });
    }
    let out = Error::OutOfRange {
        x,
        side: if f.direction == Direction::Decreasing {
            RangeSide::Below
        } else {
            RangeSide::Above
        },
    };
    // Bracket by doubling.
    let mut lo = f.domain_lo.max(DOMAIN_LO);
    let mut hi = 2.0 * lo;
    while !hit(hi) {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return Err(out);
        }
        // Tables are constant past their last node.
        if let Some(xs) = f.nodes() {
            if lo > *xs.last().unwrap() {
                return Err(out);
            }
        }
    }
    for _ in 0..200 {
        let mid = if hi / lo > 4.0 {
            (lo * hi).sqrt()
        } else {
            0.5 * (lo + hi)
        };
        if mid <= lo || mid >= hi {
            break;
        }
        if hit(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reciprocal_inverse() {
        let f = MonotoneFunction::power_log(1.0, 1.0, 0.0).unwrap();
        let t = generalized_inverse(&f, 0.1).unwrap();
        assert!((t - 10.0).abs() < 1e-12);
        assert!(f.eval(t) <= 0.1);
    }

    #[test]
    fn growth_step_inverse() {
        let g: Vec<u64> = (0..20).map(|r| 2 * r + 1).collect();
        let f = MonotoneFunction::growth(&g).unwrap();
        let t = generalized_inverse(&f, 8.0).unwrap();
        assert_eq!(t, 4.0);
    }

    #[test]
    fn constant_is_out_of_range_below() {
        let f = MonotoneFunction::constant(0.5);
        assert!(matches!(
            generalized_inverse(&f, 0.4),
            Err(Error::OutOfRange {
                side: RangeSide::Below,
                ..
            })
        ));
        assert_eq!(generalized_inverse(&f, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn rejects_non_monotone_tables() {
        assert!(MonotoneFunction::interpolated(
            "x",
            vec![1.0, 2.0],
            vec![1.0, 2.0],
            Direction::Decreasing
        )
        .is_err());
    }

    #[test]
    fn interpolation_hits_nodes() {
        let f = MonotoneFunction::interpolated(
            "x",
            vec![1.0, 4.0, 16.0],
            vec![1.0, 0.25, 0.0625],
            Direction::Decreasing,
        )
        .unwrap();
        assert!((f.eval(2.0) - 0.5).abs() < 1e-15);
        assert!((f.eval(8.0) - 0.125).abs() < 1e-15);
        assert!(f.extrapolated(20.0) && !f.extrapolated(5.0));
        assert_eq!(f.eval(100.0), 0.0625);
    }

    proptest! {
        #[test]
        fn galois_connection(a in 0.1f64..10.0, p in 0.0f64..3.0, q in 0.0f64..3.0, x in 1e-4f64..0.9) {
            let f = MonotoneFunction::power_log(a, p, q).unwrap();
            match generalized_inverse(&f, x) {
                Ok(t) => {
                    prop_assert!(f.eval(t) <= x);
                    // Infimum: slightly smaller arguments miss.
                    if t > 1.0 {
                        prop_assert!(f.eval(t * (1.0 - 1e-9)) > x * (1.0 - 1e-6));
                    }
                }
                Err(Error::OutOfRange { .. }) => prop_assert!(p == 0.0 && q == 0.0),
                Err(e) => prop_assert!(false, "{e}"),
            }
        }

        #[test]
        fn table_inverse_within_a_cell(x in 0.002f64..1.0) {
            let xs: Vec<f64> = (0..12).map(|i| 2f64.powi(i)).collect();
            let ys: Vec<f64> = xs.iter().map(|t| 1.0 / t).collect();
            let f = MonotoneFunction::interpolated("recip", xs, ys, Direction::Decreasing).unwrap();
            let t = generalized_inverse(&f, x).unwrap();
            prop_assert!(f.eval(t) <= x);
            prop_assert!((t * x - 1.0).abs() < 1e-6 || t == 1.0);
        }
    }
}
