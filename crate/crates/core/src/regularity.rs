//! Regularity diagnostics for profile functions.
//!
//! All checks are finite-range proxies for asymptotic statements: a
//! "doubling" verdict is a minimum over a range of exponents, and a
//! "slowly varying" verdict looks at the top decade of the sampled range
//! only.

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::bounds::{loglog_slope, Direction, MonotoneFunction};
use crate::error::{Error, Result};
use crate::profiles::{growth_inverse, Kind, ProfileTable};

/// Slow-variation bands must lie in `[SLOW_LO, SLOW_HI]` on the top decade.
pub const SLOW_LO: f64 = 0.8;
pub const SLOW_HI: f64 = 1.25;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoublingRow {
    pub n: u32,
    /// `f(2^{2n}) / f(2^n)` for decreasing `f`, the reciprocal for increasing.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoublingReport {
    pub rows: Vec<DoublingRow>,
    pub min_ratio: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Minimum of `f(2^{2n})/f(2^n)` over `range` (oriented so that the ratio
/// is at most one for monotone `f`).
pub fn doubling_diagnostic(
    f: &MonotoneFunction,
    range: RangeInclusive<u32>,
    threshold: f64,
) -> Result<DoublingReport> {
    if range.is_empty() {
        return Err(Error::Range("empty exponent range".into()));
    }
    let (lo, hi) = f.certified_range();
    let (a, b) = (*range.start(), *range.end());
    if 2f64.powi(a as i32) < lo || 2f64.powi(2 * b as i32) > hi {
        return Err(Error::Range(format!(
            "2^{a}..2^{} leaves the certified range [{lo}, {hi}]",
            2 * b
        )));
    }
    let rows: Vec<DoublingRow> = range
        .map(|n| {
            let x = f.eval(2f64.powi(n as i32));
            let y = f.eval(2f64.powi(2 * n as i32));
            let ratio = match f.direction() {
                Direction::Decreasing => y / x,
                Direction::Increasing => x / y,
            };
            DoublingRow { n, ratio }
        })
        .collect();
    let min_ratio = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    Ok(DoublingReport {
        rows,
        min_ratio,
        threshold,
        pass: min_ratio >= threshold,
    })
}

/// Widest exponent range `1..=b` on which [`doubling_diagnostic`] can run.
pub fn doubling_range(f: &MonotoneFunction, cap: u32) -> Result<RangeInclusive<u32>> {
    let (lo, hi) = f.certified_range();
    let b = if hi.is_finite() {
        (hi.log2() / 2.0).floor() as u32
    } else {
        cap
    };
    let a = lo.log2().ceil().max(1.0) as u32;
    let b = b.min(cap);
    if a > b {
        return Err(Error::Range(format!(
            "certified range [{lo}, {hi}] is too short for a doubling check"
        )));
    }
    Ok(a..=b)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandRow {
    pub t: f64,
    pub sup: f64,
    pub inf: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlowVaryReport {
    pub rows: Vec<BandRow>,
    /// Extreme bands over `t` in the top decade `[t_max/10, t_max]`.
    pub top_sup: f64,
    pub top_inf: f64,
    pub pass: bool,
}

const LAMBDA_SAMPLES: usize = 64;
const T_SAMPLES_PER_OCTAVE: usize = 8;

/// Bands `sup/inf_{λ∈[1,2]} f(λt)/f(t)` on a log grid of `t ∈ [t_lo, t_hi]`.
///
/// `f` must be evaluable on `[t_lo, 2·t_hi]`.
pub fn slowly_varying_diagnostic(
    f: &dyn Fn(f64) -> f64,
    t_lo: f64,
    t_hi: f64,
) -> Result<SlowVaryReport> {
    if !(t_lo >= 1.0 && t_hi >= 10.0 * t_lo) {
        return Err(Error::Range(format!(
            "need 1 ≤ t_lo and t_hi ≥ 10·t_lo (got {t_lo}, {t_hi})"
        )));
    }
    let octaves = (t_hi / t_lo).log2();
    let steps = (octaves * T_SAMPLES_PER_OCTAVE as f64).ceil() as usize;
    let mut rows = Vec::with_capacity(steps + 1);
    for i in 0..=steps {
        let t = t_lo * (t_hi / t_lo).powf(i as f64 / steps as f64);
        let base = f(t);
        let (mut sup, mut inf) = (1.0f64, 1.0f64);
        for j in 1..=LAMBDA_SAMPLES {
            let lambda = 1.0 + j as f64 / LAMBDA_SAMPLES as f64;
            let r = f(lambda * t) / base;
            sup = sup.max(r);
            inf = inf.min(r);
        }
        rows.push(BandRow { t, sup, inf });
    }
    let top: Vec<&BandRow> = rows
        .iter()
        .filter(|r| r.t >= t_hi / 10.0 * (1.0 - 1e-12))
        .collect();
    let top_sup = top.iter().map(|r| r.sup).fold(1.0, f64::max);
    let top_inf = top.iter().map(|r| r.inf).fold(1.0, f64::min);
    let pass = top_sup <= SLOW_HI && top_inf >= SLOW_LO;
    Ok(SlowVaryReport {
        rows,
        top_sup,
        top_inf,
        pass,
    })
}

/// Interpolation between dyadic samples `f(2^m)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TildeVariant {
    /// `f(2^m)^θ · f(2^{m+1})^{1−θ}` with `θ = log₂x − m`, exponents as printed.
    Display,
    /// `f(2^m)^{1−θ} · f(2^{m+1})^θ`, which matches `f` at every `2^m`.
    Geometric,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tilde {
    pub variant: TildeVariant,
    /// Exponents `m` and the samples `f(2^m)`.
    pub m_lo: u32,
    pub samples: Vec<f64>,
}

impl Tilde {
    pub fn domain(&self) -> (f64, f64) {
        (
            2f64.powi(self.m_lo as i32),
            2f64.powi((self.m_lo as usize + self.samples.len() - 1) as i32),
        )
    }

    /// `f̃(x)`, clamped to the sampled domain.
    pub fn eval(&self, x: f64) -> f64 {
        let (lo, hi) = self.domain();
        let x = x.clamp(lo, hi);
        let l = x.log2() - self.m_lo as f64;
        let last = self.samples.len() - 1;
        let i = (l.floor() as usize).min(last.saturating_sub(1));
        if last == 0 {
            return self.samples[0];
        }
        let theta = (l - i as f64).clamp(0.0, 1.0);
        let (a, b) = (self.samples[i].ln(), self.samples[i + 1].ln());
        match self.variant {
            TildeVariant::Display => (theta * a + (1.0 - theta) * b).exp(),
            TildeVariant::Geometric => ((1.0 - theta) * a + theta * b).exp(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TildeDiagnostics {
    pub variant: TildeVariant,
    pub slow: SlowVaryReport,
    /// `max_m |f̃(2^m)/f(2^m) − 1|`.
    pub node_error: f64,
    pub nodes_match: bool,
    /// Range of `f̃/f` over a log grid of the domain.
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// `c₁f(c₂x) ≤ f̃(x) ≤ c₃f(c₄x)` held on the grid.
    pub sandwich_holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TildeReport {
    pub tilde: Tilde,
    pub doubling_constant: f64,
    /// Sandwich constants `(c₁, c₂, c₃, c₄) = (c, 1, 1/c, 1)`.
    pub constants: [f64; 4],
    /// The two printed exponents `θ` and `1 − θ` sum to one.
    pub exponents_sum_to_one: bool,
    pub display: TildeDiagnostics,
    pub geometric: TildeDiagnostics,
}

impl TildeReport {
    /// Diagnostics of the returned variant.
    pub fn primary(&self) -> &TildeDiagnostics {
        match self.tilde.variant {
            TildeVariant::Display => &self.display,
            TildeVariant::Geometric => &self.geometric,
        }
    }
}

fn tilde_diagnostics(f: &MonotoneFunction, tilde: &Tilde, c: f64) -> Result<TildeDiagnostics> {
    let (lo, hi) = tilde.domain();
    let slow = slowly_varying_diagnostic(&|x| tilde.eval(x), lo, hi / 2.0)?;
    let node_error = tilde
        .samples
        .iter()
        .enumerate()
        .map(|(i, &v)| (tilde.eval(2f64.powi((tilde.m_lo as usize + i) as i32)) / v - 1.0).abs())
        .fold(0.0, f64::max);
    let steps = 16 * tilde.samples.len();
    let (mut min_ratio, mut max_ratio) = (f64::INFINITY, 0.0f64);
    for i in 0..=steps {
        let x = lo * (hi / lo).powf(i as f64 / steps as f64);
        let r = tilde.eval(x) / f.eval(x);
        min_ratio = min_ratio.min(r);
        max_ratio = max_ratio.max(r);
    }
    let slack = 1e-12;
    Ok(TildeDiagnostics {
        variant: tilde.variant,
        slow,
        node_error,
        nodes_match: node_error <= 1e-12,
        min_ratio,
        max_ratio,
        sandwich_holds: min_ratio >= c * (1.0 - slack) && max_ratio <= (1.0 + slack) / c,
    })
}

/// Lemma-style interpolation of the dyadic samples `f(2^m)`, `m_lo ≤ m ≤ m_hi`.
///
/// Requires `f(2^n)` doubling on `m_lo..=m_hi/2`; returns the requested
/// variant with diagnostics for both.
pub fn tilde_interpolate(
    f: &MonotoneFunction,
    m_lo: u32,
    m_hi: u32,
    variant: TildeVariant,
    threshold: f64,
) -> Result<TildeReport> {
    let m_lo = m_lo.max(1);
    if m_hi < 2 * m_lo || m_hi < m_lo + 4 {
        return Err(Error::Range(format!(
            "dyadic range {m_lo}..={m_hi} too short"
        )));
    }
    let doubling = doubling_diagnostic(f, m_lo..=m_hi / 2, threshold)?;
    if !doubling.pass {
        return Err(Error::NotDoubling {
            ratio: doubling.min_ratio,
            threshold,
        });
    }
    let c = doubling.min_ratio.min(1.0);
    let samples: Vec<f64> = (m_lo..=m_hi).map(|m| f.eval(2f64.powi(m as i32))).collect();
    let make = |v| Tilde {
        variant: v,
        m_lo,
        samples: samples.clone(),
    };
    let display = tilde_diagnostics(f, &make(TildeVariant::Display), c)?;
    let geometric = tilde_diagnostics(f, &make(TildeVariant::Geometric), c)?;
    let theta: f64 = 0.375;
    Ok(TildeReport {
        tilde: make(variant),
        doubling_constant: c,
        constants: [c, 1.0, 1.0 / c, 1.0],
        exponents_sum_to_one: (theta + (1.0 - theta) - 1.0).abs() < f64::EPSILON,
        display,
        geometric,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompressionReport {
    pub c: f64,
    pub c1: f64,
    pub c2: f64,
    /// Points checked for `f(n) ≤ C₁ f(C₂ n^c)`.
    pub hypothesis_points: usize,
    /// Smallest exponent from which `2^n ≥ C₂·2^{2nc}`.
    pub n1: u32,
    /// Exponents `n` with `f(2^{2n}) ≤ C₁ f(2^n)` certified.
    pub certified: Option<(u32, u32)>,
    /// `min f(2^n)/f(2^{2n})` evaluated directly on the certified range.
    pub direct_min_ratio: Option<f64>,
    pub consistent: bool,
}

/// From `f(n) ≤ C₁ f(C₂ n^c)` on `n ∈ [2^{j_lo}, 2^{j_hi}]` (increasing `f`,
/// `c < 1/2`) certify `f(2^{2n}) ≤ C₁ f(2^n)` for `n ≥ n₁`.
pub fn power_compression_doubling(
    f: &MonotoneFunction,
    c: f64,
    c1: f64,
    c2: f64,
    j: RangeInclusive<u32>,
) -> Result<CompressionReport> {
    if f.direction() != Direction::Increasing {
        return Err(Error::Format(
            "power compression needs an increasing function".into(),
        ));
    }
    if !(c > 0.0 && c < 0.5 && c1 > 0.0 && c2 >= 1.0) {
        return Err(Error::Range(format!(
            "need 0 < c < 1/2, C₁ > 0, C₂ ≥ 1 (got {c}, {c1}, {c2})"
        )));
    }
    let (j_lo, j_hi) = (*j.start(), *j.end());
    if j_lo > j_hi {
        return Err(Error::Range("empty exponent range".into()));
    }
    let tol = 1e-12;
    let mut points = 0;
    for q in (4 * j_lo)..=(4 * j_hi) {
        let n = 2f64.powf(q as f64 / 4.0);
        let rhs = c1 * f.eval(c2 * n.powf(c));
        points += 1;
        if f.eval(n) > rhs * (1.0 + tol) {
            return Err(Error::HypothesisFail { witness: n });
        }
    }
    let n1 = (c2.log2() / (1.0 - 2.0 * c)).ceil().max(0.0) as u32;
    let lo = n1.max(j_lo.div_ceil(2)).max(1);
    let hi = j_hi / 2;
    let (certified, direct) = if lo <= hi {
        let ratio = (lo..=hi)
            .map(|n| f.eval(2f64.powi(n as i32)) / f.eval(2f64.powi(2 * n as i32)))
            .fold(f64::INFINITY, f64::min);
        (Some((lo, hi)), Some(ratio))
    } else {
        (None, None)
    };
    let consistent = direct.map_or(true, |r| r * c1 >= 1.0 - 1e-9);
    Ok(CompressionReport {
        c,
        c1,
        c2,
        hypothesis_points: points,
        n1,
        certified,
        direct_min_ratio: direct,
        consistent,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductReport {
    pub m: u32,
    /// `(Φ_G(n^{1/m}), Φ_{G^m}(n))` pairs used in the fit.
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub pass: bool,
}

/// Tolerance on the fitted slope.
pub const PRODUCT_SLOPE_TOL: f64 = 0.2;
/// Bound on `|intercept|` of the log-log fit.
pub const PRODUCT_INTERCEPT_MAX: f64 = 3.0;

fn product_fit(m: u32, points: Vec<(f64, f64)>) -> Result<ProductReport> {
    if points.len() < 4 {
        return Err(Error::InsufficientData {
            needed: 4,
            have: points.len(),
        });
    }
    let (slope, intercept, stderr) = loglog_slope(&points)?;
    let pass = (slope - 1.0).abs() <= PRODUCT_SLOPE_TOL && intercept.abs() <= PRODUCT_INTERCEPT_MAX;
    Ok(ProductReport {
        m,
        points,
        slope,
        intercept,
        stderr,
        pass,
    })
}

/// Log-log regression of `Φ_{G^m}(n)` against `Φ_G(n^{1/m})` on the
/// common range of the two tables (exact and upper points).
pub fn product_profile_check(g: &ProfileTable, gm: &ProfileTable, m: u32) -> Result<ProductReport> {
    if m == 0 {
        return Err(Error::Range("m must be positive".into()));
    }
    let kinds = [Kind::Exact, Kind::Upper];
    let base = MonotoneFunction::from_table(g, &kinds)?;
    let (lo, hi) = base.certified_range();
    let mut points = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for p in gm.points.iter().filter(|p| kinds.contains(&p.kind)) {
        if !seen.insert(p.n) {
            continue;
        }
        let root = (p.n as f64).powf(1.0 / m as f64);
        if root >= lo && root <= hi && root >= 2.0 {
            let v = gm.upper_at(p.n).unwrap_or(p.value);
            points.push((base.eval(root), v));
        }
    }
    product_fit(m, points)
}

/// The same regression for inverse growth: `Gr⁻¹_{G^m}(n)` against
/// `Gr⁻¹_G(n^{1/m})`, on a log grid of `n` with both sides at least `min_radius`.
pub fn growth_product_check(
    g: &[u64],
    gm: &[u64],
    m: u32,
    min_radius: u32,
) -> Result<ProductReport> {
    if m == 0 {
        return Err(Error::Range("m must be positive".into()));
    }
    let g_max = *g
        .last()
        .ok_or(Error::InsufficientData { needed: 1, have: 0 })? as f64;
    let gm_max = *gm
        .last()
        .ok_or(Error::InsufficientData { needed: 1, have: 0 })? as f64;
    let n_max = gm_max.min(g_max.powi(m as i32));
    let mut points = Vec::new();
    let mut n = 2.0f64;
    while n <= n_max {
        let a = growth_inverse(g, n.powf(1.0 / m as f64).ceil() as u64);
        let b = growth_inverse(gm, n.ceil() as u64);
        if let (Some(a), Some(b)) = (a, b) {
            if a >= min_radius && b >= min_radius {
                points.push((a as f64, b as f64));
            }
        }
        n *= 2f64.sqrt();
    }
    product_fit(m, points)
}
