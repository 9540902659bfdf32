//! Occupation-measure moments `Σ_k (k+1)^{p−1} P(d(X₀, X_k) ≤ r)` and the
//! lamp-randomizing walk on `ℤ₂ ≀ ℤ`.
//!
//! Partial sums come from the killed evolution on a ball, with each term an
//! enclosure. Tails past the horizon are never certified: they come from a
//! return model and are labelled `MODEL`, or reported `UNCONTROLLED`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::loglog_slope;
use crate::error::{Error, Result};
use crate::group::{CayleyBall, Family, State};
use crate::walk::{Evolver, Kernel};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum TailModel {
    None,
    /// `P(d ≤ r at step k) ≈ c·k^{−α}` with `c` fitted per parity class on
    /// the second half of the horizon.
    PowerLaw {
        alpha: f64,
    },
    /// Local limit theorem on `ℤ^d`: Gaussian density with the step
    /// covariance, times the period.
    Gaussian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TailStatus {
    Model,
    Uncontrolled,
    Divergent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupationOptions {
    pub horizon: usize,
    /// Budget on the accumulated enclosure width of each partial sum.
    pub leak_budget: f64,
    pub tail: TailModel,
}

impl Default for OccupationOptions {
    fn default() -> Self {
        Self {
            horizon: 1 << 14,
            leak_budget: 1e-6,
            tail: TailModel::None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupationRow {
    pub r: u32,
    pub p: u32,
    /// Last step included in the partial sum.
    pub horizon: usize,
    /// Sum of weighted interval midpoints.
    pub partial: f64,
    /// Sum of weighted interval half-widths.
    pub error: f64,
    pub tail: Option<f64>,
    pub status: TailStatus,
    pub total: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupationReport {
    pub horizon_requested: usize,
    pub horizon_used: usize,
    pub leaked: f64,
    pub rows: Vec<OccupationRow>,
    /// Partial sums are nondecreasing in `r` and in `p`.
    pub monotone: bool,
}

impl OccupationReport {
    pub fn row(&self, r: u32, p: u32) -> Option<&OccupationRow> {
        self.rows.iter().find(|x| x.r == r && x.p == p)
    }
}

fn weight(k: usize, p: u32) -> f64 {
    ((k + 1) as f64).powi(p as i32 - 1)
}

/// Sum `Σ_{k>from, k ≡ class (mod period)} (k+1)^{p−1} f(k)` where
/// `f(k) ≈ amp·k^{−α}` for large `k`. `None` if the series diverges.
fn model_tail(
    from: usize,
    period: usize,
    class: usize,
    p: u32,
    alpha: f64,
    amp: f64,
    f: &dyn Fn(f64) -> f64,
) -> Option<f64> {
    if alpha <= p as f64 {
        return None;
    }
    let k_max = (from * 64).max(200_000);
    let mut k = from + 1;
    while k % period != class % period {
        k += 1;
    }
    let mut s = 0.0;
    while k <= k_max {
        s += weight(k, p) * f(k as f64);
        k += period;
    }
    // Remainder: ∫_{k_max}^∞ x^{p−1−α} dx / period.
    s += amp * (k_max as f64).powf(p as f64 - alpha) / (alpha - p as f64) / period as f64;
    Some(s)
}

/// Gaussian local-limit description of a lattice walk.
struct LatticeModel {
    dim: usize,
    period: usize,
    /// `(quadratic form xᵀΣ⁻¹x, parity of |x|₁, multiplicity)` for points of `B_r`.
    classes: Vec<BTreeMap<(u64, usize), usize>>,
    /// `(2π)^{−d/2} det(Σ)^{−1/2}`.
    norm: f64,
}

impl LatticeModel {
    fn new(ball: &CayleyBall, kernel: &Kernel, rs: &[u32]) -> Result<Self> {
        let g = ball.group();
        let dim = match g.family() {
            Family::Zd(d) => *d as usize,
            _ => {
                return Err(Error::Format(
                    "the Gaussian tail needs a lattice group".into(),
                ))
            }
        };
        let w: Vec<f64> = kernel.weights_as();
        let mut cov = DMatrix::<f64>::zeros(dim, dim);
        let mut all_odd = true;
        for (s, &ws) in w.iter().enumerate() {
            let State::Lattice(v) = g.apply(&g.identity(), s) else {
                unreachable!()
            };
            all_odd &= v.iter().map(|c| c.abs()).sum::<i64>() % 2 == 1;
            for i in 0..dim {
                for j in 0..dim {
                    cov[(i, j)] += ws * (v[i] * v[j]) as f64;
                }
            }
        }
        let period = if kernel.hold() == crate::Rational::from_integer(0) && all_odd {
            2
        } else {
            1
        };
        let det = cov.determinant();
        let inv = cov
            .try_inverse()
            .ok_or_else(|| Error::InvalidKernel("degenerate step covariance".into()))?;
        let norm = (2.0 * std::f64::consts::PI).powf(-(dim as f64) / 2.0) / det.sqrt();
        let mut classes = Vec::new();
        for &r in rs {
            let mut m = BTreeMap::new();
            for i in 0..ball.volume(r) {
                let State::Lattice(v) = ball.state_of(i as u32) else {
                    unreachable!()
                };
                let x = nalgebra::DVector::from_iterator(dim, v.iter().map(|&c| c as f64));
                let q = (x.transpose() * &inv * &x)[(0, 0)];
                let parity = (v.iter().map(|c| c.abs()).sum::<i64>() % 2) as usize;
                *m.entry(((q * 1e9).round() as u64, parity)).or_insert(0) += 1;
            }
            classes.push(m);
        }
        Ok(Self {
            dim,
            period,
            classes,
            norm,
        })
    }

    fn tail(&self, idx: usize, from: usize, p: u32) -> Option<f64> {
        let alpha = self.dim as f64 / 2.0;
        let mut total = 0.0;
        for (&(q, parity), &count) in &self.classes[idx] {
            let q = q as f64 / 1e9;
            let amp = count as f64 * self.norm * self.period as f64;
            let f = move |k: f64| amp * k.powf(-alpha) * (-q / (2.0 * k)).exp();
            total += model_tail(from, self.period, parity, p, alpha, amp, &f)?;
        }
        Some(total)
    }
}

fn power_law_tail(terms: &[f64], from: usize, p: u32, alpha: f64) -> Option<f64> {
    let lo = (from / 2).max(1);
    let mut total = 0.0;
    for class in 0..2 {
        let window: Vec<(usize, f64)> = (lo..=from)
            .filter(|k| k % 2 == class)
            .map(|k| (k, terms[k]))
            .collect();
        if window.is_empty() || window.iter().all(|w| w.1 == 0.0) {
            continue;
        }
        let last = &window[window.len().saturating_sub(5)..];
        let amp = last
            .iter()
            .map(|&(k, v)| v * (k as f64).powf(alpha))
            .sum::<f64>()
            / last.len() as f64;
        let f = move |k: f64| amp * k.powf(-alpha);
        total += model_tail(from, 2, class, p, alpha, amp, &f)?;
    }
    Some(total)
}

/// Occupation moments for every `r` in `rs` and `p` in `ps` from one run.
pub fn occupation_moment(
    ball: &CayleyBall,
    kernel: &Kernel,
    rs: &[u32],
    ps: &[u32],
    opts: &OccupationOptions,
) -> Result<OccupationReport> {
    let graph = ball.graph();
    let big_r = graph.radius();
    if let Some(&r) = rs.iter().find(|&&r| r > big_r) {
        return Err(Error::RadiusTooSmall {
            requested: r,
            available: big_r,
        });
    }
    if ps.iter().any(|&p| p == 0) {
        return Err(Error::Range("p must be at least 1".into()));
    }
    if rs.is_empty() || ps.is_empty() {
        return Err(Error::InsufficientData { needed: 1, have: 0 });
    }
    let vols: Vec<usize> = rs.iter().map(|&r| graph.volume(r)).collect();
    let mut ev = Evolver::<f64>::new(graph, kernel)?;
    // terms[i][k] = midpoint; widths accumulate per (r, p).
    let mut mids = vec![Vec::new(); rs.len()];
    let mut err = vec![vec![0.0; ps.len()]; rs.len()];
    let mut cum_leak = vec![0.0];
    let mut used = 0;
    let mut stopped = false;
    for k in 0..=opts.horizon {
        let d = ev.distribution();
        while cum_leak.len() <= d.leak_history.len() {
            let j = cum_leak.len() - 1;
            cum_leak.push(cum_leak[j] + d.leak_history[j]);
        }
        let mut row = Vec::with_capacity(rs.len());
        for (i, &r) in rs.iter().enumerate() {
            let lo: f64 = d.p[..vols[i]].iter().sum();
            // Mass killed during step j + 1 is back within r no earlier
            // than R + 1 − r steps later.
            let gap = (big_r + 1 - r) as usize;
            let late = if k >= gap + 1 {
                cum_leak[(k - gap).min(cum_leak.len() - 1)]
            } else {
                0.0
            };
            let hi = (lo + late).min(1.0).max(lo);
            row.push((lo, hi));
        }
        let over = rs.iter().enumerate().any(|(i, _)| {
            ps.iter().enumerate().any(|(j, &p)| {
                err[i][j] + weight(k, p) * (row[i].1 - row[i].0) / 2.0 > opts.leak_budget
            })
        });
        if over {
            stopped = true;
            break;
        }
        for (i, &(lo, hi)) in row.iter().enumerate() {
            mids[i].push((lo + hi) / 2.0);
            for (j, &p) in ps.iter().enumerate() {
                err[i][j] += weight(k, p) * (hi - lo) / 2.0;
            }
        }
        used = k;
        if k < opts.horizon {
            ev.step();
        }
    }
    if mids[0].is_empty() {
        return Err(Error::Leakage {
            leaked: ev.distribution().leaked,
            budget: opts.leak_budget,
        });
    }
    if stopped && opts.tail == TailModel::None {
        return Err(Error::Leakage {
            leaked: ev.distribution().leaked,
            budget: opts.leak_budget,
        });
    }
    let lattice = match opts.tail {
        TailModel::Gaussian => Some(LatticeModel::new(ball, kernel, rs)?),
        _ => None,
    };
    let mut rows = Vec::new();
    for (i, &r) in rs.iter().enumerate() {
        for (j, &p) in ps.iter().enumerate() {
            let partial: f64 = mids[i]
                .iter()
                .enumerate()
                .map(|(k, &m)| weight(k, p) * m)
                .sum();
            let tail = match opts.tail {
                TailModel::None => None,
                TailModel::PowerLaw { alpha } => Some(power_law_tail(&mids[i], used, p, alpha)),
                TailModel::Gaussian => Some(lattice.as_ref().unwrap().tail(i, used, p)),
            };
            let (tail, status) = match tail {
                None => (None, TailStatus::Uncontrolled),
                Some(None) => (None, TailStatus::Divergent),
                Some(Some(t)) => (Some(t), TailStatus::Model),
            };
            rows.push(OccupationRow {
                r,
                p,
                horizon: used,
                partial,
                error: err[i][j],
                tail,
                status,
                total: tail.map(|t| partial + t),
            });
        }
    }
    let monotone = {
        let get = |r: u32, p: u32| rows.iter().find(|x| x.r == r && x.p == p).unwrap().partial;
        let mut rs_sorted = rs.to_vec();
        rs_sorted.sort_unstable();
        let mut ps_sorted = ps.to_vec();
        ps_sorted.sort_unstable();
        rs_sorted
            .windows(2)
            .all(|w| ps.iter().all(|&p| get(w[0], p) <= get(w[1], p) + 1e-12))
            && ps_sorted
                .windows(2)
                .all(|w| rs.iter().all(|&r| get(r, w[0]) <= get(r, w[1]) + 1e-12))
    };
    Ok(OccupationReport {
        horizon_requested: opts.horizon,
        horizon_used: used,
        leaked: ev.distribution().leaked,
        rows,
        monotone,
    })
}

/// Cumulative partial sums `S_0, S_1, …` for one `(r, p)` up to `horizon`
/// (stops early if the enclosure widths exceed the budget).
pub fn occupation_series(
    ball: &CayleyBall,
    kernel: &Kernel,
    r: u32,
    p: u32,
    horizon: usize,
    leak_budget: f64,
) -> Result<Vec<f64>> {
    let graph = ball.graph();
    if r > graph.radius() {
        return Err(Error::RadiusTooSmall {
            requested: r,
            available: graph.radius(),
        });
    }
    let mut ev = Evolver::<f64>::new(graph, kernel)?;
    let vol = graph.volume(r);
    let mut out = Vec::with_capacity(horizon + 1);
    let mut acc = 0.0;
    for k in 0..=horizon {
        let d = ev.distribution();
        let iv = d.refined_interval(graph, r);
        if iv.hi - iv.lo > leak_budget {
            break;
        }
        acc += weight(k, p) * d.p[..vol].iter().sum::<f64>();
        out.push(acc);
        if k < horizon {
            ev.step();
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupationFit {
    pub p: u32,
    /// Slope of `log S` against `log r`.
    pub slope: f64,
    /// `slope / p`.
    pub beta_hat: f64,
    pub stderr: f64,
    pub points: Vec<(f64, f64)>,
    /// At least one point had no model tail and used the partial sum.
    pub uses_partial: bool,
}

/// Fit `S(r) ≈ C r^{βp}` over the rows with the given `p`.
pub fn occupation_exponent_fit(report: &OccupationReport, p: u32) -> Result<OccupationFit> {
    let rows: Vec<&OccupationRow> = report
        .rows
        .iter()
        .filter(|x| x.p == p && x.r >= 1)
        .collect();
    let mut uses_partial = false;
    let points: Vec<(f64, f64)> = rows
        .iter()
        .filter(|x| x.status != TailStatus::Divergent)
        .map(|x| {
            uses_partial |= x.total.is_none();
            (x.r as f64, x.total.unwrap_or(x.partial))
        })
        .collect();
    if points.len() < 4 {
        return Err(Error::InsufficientData {
            needed: 4,
            have: points.len(),
        });
    }
    let (slope, _, stderr) = loglog_slope(&points)?;
    Ok(OccupationFit {
        p,
        slope,
        beta_hat: slope / p as f64,
        stderr,
        points,
        uses_partial,
    })
}

/// Law of the lamp window `N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum WindowLaw {
    /// `P(N = j) = weights[j] / Σ weights`.
    Table { weights: Vec<f64> },
    /// `P(N = j) = (1 − q) q^j`.
    Geometric { q: f64 },
}

impl WindowLaw {
    fn validate(&self) -> Result<()> {
        match self {
            WindowLaw::Table { weights } => {
                if weights.is_empty()
                    || weights.iter().any(|w| !(*w >= 0.0))
                    || weights.iter().sum::<f64>() <= 0.0
                {
                    return Err(Error::Format(
                        "window law needs nonnegative weights with positive total".into(),
                    ));
                }
            }
            WindowLaw::Geometric { q } => {
                if !(*q >= 0.0 && *q < 1.0) {
                    return Err(Error::Format(format!(
                        "geometric parameter must lie in [0, 1) (got {q})"
                    )));
                }
            }
        }
        Ok(())
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        match self {
            WindowLaw::Table { weights } => {
                let total: f64 = weights.iter().sum();
                let mut u = rng.gen::<f64>() * total;
                for (j, &w) in weights.iter().enumerate() {
                    if u < w {
                        return j;
                    }
                    u -= w;
                }
                weights.iter().rposition(|&w| w > 0.0).unwrap()
            }
            WindowLaw::Geometric { q } => {
                if *q == 0.0 {
                    return 0;
                }
                let u: f64 = 1.0 - rng.gen::<f64>();
                (u.ln() / q.ln()).floor() as usize
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleStep {
    pub step: usize,
    pub mean_distance: f64,
    pub max_distance: u64,
    pub mean_window: f64,
    /// Mean over paths of `2^{−2M−1}`, `M` the largest window so far.
    pub formula: f64,
    /// Fraction of paths whose lamps are all off.
    pub simulated: f64,
    /// `(hits − Σ formula) / sqrt(Σ formula·(1 − formula))`.
    pub z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleReport {
    pub samples: usize,
    pub seed: u64,
    pub steps: Vec<CounterexampleStep>,
    /// `max d / (2M + 1)` over all paths and steps.
    pub max_distance_ratio: f64,
    pub max_abs_z: f64,
}

/// Word length of a lamp configuration with the cursor at the origin,
/// for generators `t^{±1}` and the lamp toggle.
fn lamp_distance(lamps: &[bool], offset: usize) -> u64 {
    let lit: Vec<i64> = lamps
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(i, _)| i as i64 - offset as i64)
        .collect();
    if lit.is_empty() {
        return 0;
    }
    let a = lit[0].min(0);
    let b = lit[lit.len() - 1].max(0);
    (lit.len() as i64 + 2 * (b - a)) as u64
}

struct PathTrace {
    distance: Vec<u64>,
    window: Vec<usize>,
    at_origin: Vec<bool>,
}

fn simulate_path(law: &WindowLaw, n: usize, seed: u64, index: u64) -> PathTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let mut lamps: Vec<bool> = vec![false; 1];
    let mut offset = 0usize;
    let mut m = 0usize;
    let mut out = PathTrace {
        distance: Vec::with_capacity(n),
        window: Vec::with_capacity(n),
        at_origin: Vec::with_capacity(n),
    };
    for _ in 0..n {
        let w = law.sample(&mut rng);
        if w > offset {
            let grow = w - offset;
            let mut next = vec![false; lamps.len() + 2 * grow];
            next[grow..grow + lamps.len()].copy_from_slice(&lamps);
            lamps = next;
            offset = w;
        }
        for lamp in &mut lamps[offset - w..=offset + w] {
            *lamp = rng.gen::<bool>();
        }
        m = m.max(w);
        let d = lamp_distance(&lamps, offset);
        out.distance.push(d);
        out.window.push(m);
        out.at_origin.push(d == 0);
    }
    out
}

/// Simulate the walk that re-randomizes the lamps on `[−N, N]` each step.
pub fn counterexample_walk(
    law: &WindowLaw,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<CounterexampleReport> {
    law.validate()?;
    if n == 0 || samples == 0 {
        return Err(Error::InsufficientData { needed: 1, have: 0 });
    }
    let traces: Vec<PathTrace> = (0..samples as u64)
        .into_par_iter()
        .map(|i| simulate_path(law, n, seed, i))
        .collect();
    let mut steps = Vec::with_capacity(n);
    let mut max_ratio = 0.0f64;
    let mut max_abs_z = 0.0f64;
    for t in 0..n {
        let (mut dist, mut dmax, mut win, mut form, mut var, mut hits) =
            (0.0, 0u64, 0.0, 0.0, 0.0, 0usize);
        for tr in &traces {
            let m = tr.window[t];
            let f = 2f64.powi(-(2 * m as i32) - 1);
            dist += tr.distance[t] as f64;
            dmax = dmax.max(tr.distance[t]);
            win += m as f64;
            form += f;
            var += f * (1.0 - f);
            hits += tr.at_origin[t] as usize;
            max_ratio = max_ratio.max(tr.distance[t] as f64 / (2 * m + 1) as f64);
        }
        let z = if var > 0.0 {
            (hits as f64 - form) / var.sqrt()
        } else {
            0.0
        };
        max_abs_z = max_abs_z.max(z.abs());
        let s = samples as f64;
        steps.push(CounterexampleStep {
            step: t + 1,
            mean_distance: dist / s,
            max_distance: dmax,
            mean_window: win / s,
            formula: form / s,
            simulated: hits as f64 / s,
            z,
        });
    }
    Ok(CounterexampleReport {
        samples,
        seed,
        steps,
        max_distance_ratio: max_ratio,
        max_abs_z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{enumerate_ball, BallOptions};

    fn ball(name: &str, r: u32) -> CayleyBall {
        enumerate_ball(&name.parse().unwrap(), r, BallOptions::default()).unwrap()
    }

    #[test]
    fn zero_horizon_is_one() {
        let b = ball("zd:3", 4);
        let opts = OccupationOptions {
            horizon: 0,
            ..Default::default()
        };
        let rep = occupation_moment(&b, &Kernel::uniform(6), &[0, 2], &[1, 2], &opts).unwrap();
        for row in &rep.rows {
            assert_eq!(row.partial, 1.0);
            assert_eq!(row.status, TailStatus::Uncontrolled);
        }
    }

    #[test]
    fn green_function_of_z3() {
        let b = ball("zd:3", 40);
        let opts = OccupationOptions {
            tail: TailModel::Gaussian,
            ..Default::default()
        };
        let rep =
            occupation_moment(&b, &Kernel::uniform(6), &[0, 1, 2, 3], &[1, 2], &opts).unwrap();
        let g = rep.row(0, 1).unwrap();
        assert_eq!(g.status, TailStatus::Model);
        assert!(
            (g.total.unwrap() / 1.516386059152153 - 1.0).abs() < 0.005,
            "{g:?}"
        );
        // S(1) = G(0) + 6 G(e₁) and G(e₁) = G(0) − 1.
        let s1 = rep.row(1, 1).unwrap().total.unwrap();
        assert!((s1 / (7.0 * 1.516386059152153 - 6.0) - 1.0).abs() < 0.005);
        assert_eq!(rep.row(0, 2).unwrap().status, TailStatus::Divergent);
        assert!(rep.monotone);
    }

    #[test]
    fn leak_without_model_is_an_error() {
        let b = ball("zd:3", 6);
        let opts = OccupationOptions {
            horizon: 200,
            ..Default::default()
        };
        assert!(matches!(
            occupation_moment(&b, &Kernel::uniform(6), &[0], &[1], &opts),
            Err(Error::Leakage { .. })
        ));
        let pl = OccupationOptions {
            horizon: 200,
            tail: TailModel::PowerLaw { alpha: 1.5 },
            ..Default::default()
        };
        let rep = occupation_moment(&b, &Kernel::uniform(6), &[0], &[1], &pl).unwrap();
        assert!(rep.horizon_used < 200);
        assert!(rep.rows[0].tail.is_some());
    }

    #[test]
    fn line_series_grows_without_bound() {
        let b = ball("z:1", 400);
        let s = occupation_series(&b, &Kernel::uniform(2), 0, 1, 780, 1e-9).unwrap();
        // S_K ≈ sqrt(2K/π) for the simple walk on ℤ.
        let k = s.len() - 1;
        assert!(s[k] > 0.9 * (2.0 * k as f64 / std::f64::consts::PI).sqrt());
        assert!(s[k] - s[k / 4] > 10.0);
    }

    #[test]
    fn counterexample_trivial_window() {
        let law = WindowLaw::Table { weights: vec![1.0] };
        let rep = counterexample_walk(&law, 20, 500, 3).unwrap();
        assert!(rep.steps.iter().all(|s| s.max_distance <= 1));
        assert!(rep.steps.iter().all(|s| (s.formula - 0.5).abs() < 1e-15));
    }

    #[test]
    fn counterexample_formula_matches_simulation() {
        let law = WindowLaw::Table {
            weights: vec![0.0, 0.0, 1.0],
        };
        let rep = counterexample_walk(&law, 8, 20000, 11).unwrap();
        for s in &rep.steps {
            assert!((s.formula - 2f64.powi(-5)).abs() < 1e-15);
            assert!(s.z.abs() < 3.0, "{s:?}");
        }
        assert!(rep.max_distance_ratio <= 3.0);
    }

    #[test]
    fn counterexample_is_deterministic_across_pools() {
        let law = WindowLaw::Geometric { q: 0.5 };
        let a = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| counterexample_walk(&law, 30, 300, 5).unwrap());
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap()
            .install(|| counterexample_walk(&law, 30, 300, 5).unwrap());
        assert_eq!(a, b);
    }
}
