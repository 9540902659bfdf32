//! Small-ball bounds from profile models.
//!
//! The main inequality reads
//!
//! `P(d(X₀, X_k) ≤ r) ≤ 2·exp[−(log 2 / 2)·ℓ*]`,
//! `ℓ* = max{ℓ ≥ 0 : ℓ log 2 / Λ(2^{ℓ+1} Φ⁻¹(c/r)) ≤ k}`.
//!
//! Evaluating it with a smaller Λ or a larger Φ only makes the right-hand
//! side larger, so sound empirical checks feed in a LOWER model for Λ and an
//! UPPER model for Φ.

mod monotone;
mod transforms;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{BallGraph, CayleyBall, GroupSpec};
use crate::profiles::{Kind, ProfileTable};
use crate::walk::{small_ball_from, Evolver, Kernel};
use crate::{Interval, Rational};

pub use monotone::{generalized_inverse, Direction, MonotoneFunction, DOMAIN_LO};
pub use transforms::{
    corollary17_bound, grigoryan_heat_profile, psi_doubling_form, transform_agreement, Cor17Report,
    PsiForm, TransformAgreement, DOUBLING_THRESHOLD,
};

/// Largest ℓ tried by the scan.
pub const ELL_CAP: u32 = 128;

/// `c = min_e |Γe ∩ E→_o| / (2 deg o)` for left translations on a Cayley
/// graph: every orbit of oriented edges meets the edges at `o` exactly once,
/// namely in the edge carrying the same generator label.
pub fn edge_orbit_constant(group: &GroupSpec) -> Rational {
    Rational::new(1, 2 * group.degree() as i64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitAudit {
    /// `|Γe ∩ E→_o|` for the edge `(o, s)`, per generator.
    pub intersections: Vec<usize>,
    pub constant: Rational,
}

/// Recount orbit intersections by brute force on a ball.
///
/// For every generator `s`, the edge `(o, s)` is translated by each `γ` in
/// the ball, and the images `(γ, γs)` that start at `o` are matched against
/// the oriented edges `(o, t)`. Only `γ = o` can start at `o`, but the count
/// is done without using that fact.
pub fn edge_orbit_audit(ball: &CayleyBall) -> OrbitAudit {
    let g = ball.group();
    let o = g.identity();
    let o_key = g.key(&o);
    let gens: Vec<_> = (0..g.degree()).map(|s| g.key(&g.apply(&o, s))).collect();
    let mut counts = vec![0usize; g.degree()];
    for i in 0..ball.len() as u32 {
        let gamma = ball.state_of(i);
        for (s, count) in counts.iter_mut().enumerate() {
            let tail = g.key(&gamma);
            let head = g.key(&g.apply(&gamma, s));
            if tail == o_key && gens.contains(&head) {
                *count += 1;
            }
        }
    }
    let min = counts.iter().copied().min().unwrap_or(0);
    OrbitAudit {
        constant: Rational::new(min as i64, 2 * g.degree() as i64),
        intersections: counts,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub k: u64,
    pub r: u64,
    pub c: f64,
    pub phi: String,
    pub lambda: String,
    /// `Φ⁻¹(c/r)`, or `None` when Φ never drops to `c/r`.
    pub volume: Option<f64>,
    pub ell_star: u32,
    pub rhs: f64,
    /// True when ℓ* reached [`ELL_CAP`].
    pub capped: bool,
    /// True when some evaluation left a certified range.
    pub extrapolated: bool,
    pub regime: String,
}

/// Evaluate the main inequality at `(k, r)`.
pub fn theorem11_bound(
    k: u64,
    r: u64,
    lambda: &MonotoneFunction,
    phi: &MonotoneFunction,
    c: f64,
) -> Result<BoundReport> {
    if k == 0 || r == 0 {
        return Err(Error::Range(format!(
            "k and r must be ≥ 1 (got k={k}, r={r})"
        )));
    }
    let mut report = BoundReport {
        k,
        r,
        c,
        phi: phi.name().into(),
        lambda: lambda.name().into(),
        volume: None,
        ell_star: 0,
        rhs: 2.0,
        capped: false,
        extrapolated: false,
        regime: "vacuous".into(),
    };
    let target = c / r as f64;
    let n0 = match generalized_inverse(phi, target) {
        Ok(n) => n,
        Err(Error::OutOfRange { .. }) => {
            report.extrapolated = true;
            return Ok(report);
        }
        Err(e) => return Err(e),
    };
    report.volume = Some(n0);
    report.extrapolated |= phi.extrapolated(n0);
    let ln2 = std::f64::consts::LN_2;
    let mut best = 0;
    for ell in 1..=ELL_CAP {
        let x = 2f64.powi(ell as i32 + 1) * n0;
        let lam = lambda.eval(x);
        report.extrapolated |= lambda.extrapolated(x);
        if ell as f64 * ln2 / lam <= k as f64 {
            best = ell;
        } else {
            break;
        }
    }
    report.ell_star = best;
    report.capped = best == ELL_CAP;
    report.rhs = 2.0 * (-(ln2 / 2.0) * best as f64).exp();
    report.regime = if best == 0 {
        "vacuous".into()
    } else {
        "theorem".into()
    };
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaturationFit {
    pub alpha: f64,
    pub stderr: f64,
    /// `alpha ± 2·stderr`.
    pub band: (f64, f64),
    pub points: usize,
}

fn best_value(t: &ProfileTable, n: u64) -> Option<f64> {
    t.points
        .iter()
        .filter(|p| p.n == n && p.kind == Kind::Exact)
        .map(|p| p.value)
        .next()
        .or_else(|| t.upper_at(n))
}

/// Least-squares fit `log y ≈ intercept + slope·log x`; returns
/// `(slope, intercept, stderr of slope)`.
pub fn loglog_slope(pts: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    let n = pts.len();
    if n < 3 {
        return Err(Error::InsufficientData { needed: 3, have: n });
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData { needed: 2, have: 1 });
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let stderr = (rss / (n as f64 - 2.0) / sxx).sqrt();
    Ok((slope, intercept, stderr))
}

/// Fit `Λ ≈ C·Φ^α` on the common grid of two tables.
pub fn saturation_exponent_fit(phi: &ProfileTable, lambda: &ProfileTable) -> Result<SaturationFit> {
    let mut ns: Vec<u64> = phi.points.iter().map(|p| p.n).collect();
    ns.sort_unstable();
    ns.dedup();
    let pts: Vec<(f64, f64)> = ns
        .iter()
        .filter_map(|&n| Some((best_value(phi, n)?, best_value(lambda, n)?)))
        .collect();
    if pts.len() < 6 {
        return Err(Error::InsufficientData {
            needed: 6,
            have: pts.len(),
        });
    }
    let (alpha, _, stderr) = loglog_slope(&pts)?;
    Ok(SaturationFit {
        alpha,
        stderr,
        band: (alpha - 2.0 * stderr, alpha + 2.0 * stderr),
        points: pts.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RearrangementRow {
    pub c2: f64,
    /// Smallest `C₃` with `Λ(C₂Φ⁻¹(ε)) ≤ C₃ε²` on the ε grid.
    pub c3_needed: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RearrangementReport {
    pub rows: Vec<RearrangementRow>,
    /// Smallest `C₂` on the grid for which the bound holds with `C₃ ≤ c3_max`.
    pub best: Option<RearrangementRow>,
    pub c3_max: f64,
}

/// Check `Λ(C₂Φ⁻¹(ε)) ≤ C₃ε²` over `eps`, for each `C₂` in `c2_grid`.
pub fn corollary12_rearrangement_check(
    phi: &MonotoneFunction,
    lambda: &MonotoneFunction,
    eps: &[f64],
    c2_grid: &[f64],
    c3_max: f64,
) -> Result<RearrangementReport> {
    if eps.is_empty() {
        return Err(Error::InsufficientData { needed: 1, have: 0 });
    }
    let mut rows = Vec::new();
    for &c2 in c2_grid {
        let mut need: f64 = 0.0;
        for &e in eps {
            let n = generalized_inverse(phi, e)?;
            need = need.max(lambda.eval(c2 * n) / (e * e));
        }
        rows.push(RearrangementRow {
            c2,
            c3_needed: need,
            holds: need <= c3_max,
        });
    }
    let best = rows.iter().find(|r| r.holds).cloned();
    Ok(RearrangementReport { rows, best, c3_max })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominationPoint {
    pub k: u64,
    pub r: u64,
    /// Measured probability interval.
    pub measured: Interval<f64>,
    pub ell_star: u32,
    pub rhs: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominationReport {
    pub c: f64,
    pub phi: String,
    pub lambda: String,
    pub points: Vec<DominationPoint>,
    pub violations: usize,
}

/// Small-ball intervals `P(d(X₀, X_k) ≤ r)` from exact evolution on a ball,
/// for every `k` in `ks` and `r` in `rs`.
pub fn small_ball_grid(
    graph: &BallGraph,
    kernel: &Kernel,
    ks: &[u64],
    rs: &[u64],
) -> Result<Vec<(u64, u64, Interval<f64>)>> {
    if let Some(&r) = rs.iter().find(|&&r| r > graph.radius() as u64) {
        return Err(Error::RadiusTooSmall {
            requested: r as u32,
            available: graph.radius(),
        });
    }
    let mut ks = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let mut ev = Evolver::<f64>::new(graph, kernel)?;
    let mut out = Vec::new();
    let mut t = 0u64;
    for &k in &ks {
        while t < k {
            ev.step();
            t += 1;
        }
        for &r in rs {
            out.push((k, r, small_ball_from(ev.distribution(), graph, r as u32)));
        }
    }
    Ok(out)
}

/// Compare measured upper ends against the bound.
pub fn empirical_domination(
    measured: &[(u64, u64, Interval<f64>)],
    phi_upper: &MonotoneFunction,
    lambda_lower: &MonotoneFunction,
    c: f64,
) -> Result<DominationReport> {
    let mut points = Vec::with_capacity(measured.len());
    for &(k, r, iv) in measured {
        let b = theorem11_bound(k, r, lambda_lower, phi_upper, c)?;
        let ok = iv.hi <= b.rhs;
        points.push(DominationPoint {
            k,
            r,
            measured: iv,
            ell_star: b.ell_star,
            rhs: b.rhs,
            ok,
        });
    }
    let violations = points.iter().filter(|p| !p.ok).count();
    Ok(DominationReport {
        c,
        phi: phi_upper.name().into(),
        lambda: lambda_lower.name().into(),
        points,
        violations,
    })
}

/// Certified models for `ℤ` with the simple walk: `Φ(n) = 1/n` (every
/// finite set has two boundary edges) and `Λ(n) = 1 − cos(π/(n+1))` (the
/// Dirichlet gap is the minimum over components, which are intervals).
pub fn line_models() -> (MonotoneFunction, MonotoneFunction) {
    let phi = MonotoneFunction::from_fn(
        "line_phi",
        Direction::Decreasing,
        (1.0, f64::INFINITY),
        |n| 1.0 / n.floor().max(1.0),
    );
    let lambda = MonotoneFunction::from_fn(
        "line_lambda",
        Direction::Decreasing,
        (1.0, f64::INFINITY),
        |n| {
            let n = n.floor().max(1.0);
            let t = std::f64::consts::PI / (n + 1.0);
            // 1 − cos t = 2 sin²(t/2), without cancellation.
            2.0 * (0.5 * t).sin().powi(2)
        },
    );
    (phi, lambda)
}

/// Certified models for `ℤ₂ ≀ ℤ` with generators `{t, t⁻¹, switch}` and the
/// simple walk.
///
/// Upper Φ: all lamp patterns on an interval of length `L` with the cursor
/// inside have ratio `2/(3L)` at volume `L·2^L`. Lower Λ: `½Φ_low²` with
/// `Φ_low(n) = 1/(2·3·ρ(2n))`, where `ρ(x) ≥ Gr⁻¹(x)` is read from the table
/// where available and otherwise from `Gr(2m) ≥ 2^m` (toggle-and-step words).
pub fn lamplighter_models(growth: &[u64]) -> (MonotoneFunction, MonotoneFunction) {
    let (s, deg) = (2.0f64, 3.0f64);
    let phi = MonotoneFunction::from_fn(
        "lamp_cube_phi",
        Direction::Decreasing,
        (1.0, f64::INFINITY),
        move |n| {
            // Largest L with L·s^L ≤ n.
            let mut l = 1.0f64;
            while (l + 1.0) * s.powf(l + 1.0) <= n {
                l += 1.0;
            }
            if l * s.powf(l) > n {
                return 1.0;
            }
            (2.0 / (deg * l)).min(1.0)
        },
    );
    let table = growth.to_vec();
    let lambda = MonotoneFunction::from_fn(
        "lamp_cheeger_lambda",
        Direction::Decreasing,
        (1.0, f64::INFINITY),
        move |n| {
            let x = 2.0 * n.max(1.0);
            // Gr(2m) ≥ s^m, so Gr⁻¹(x) ≤ 2⌈log_s x⌉.
            let analytic = 2.0 * (x.ln() / s.ln()).ceil();
            let tabulated = table
                .iter()
                .position(|&g| g as f64 >= x)
                .map(|r| r as f64)
                .unwrap_or(f64::INFINITY);
            let rho = analytic.min(tabulated).max(1.0);
            let phi_low = 1.0 / (2.0 * deg * rho);
            0.5 * phi_low * phi_low
        },
    );
    (phi, lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{enumerate_ball, BallOptions};

    fn ball(name: &str, r: u32) -> CayleyBall {
        enumerate_ball(
            &name.parse::<GroupSpec>().unwrap(),
            r,
            BallOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn orbit_constant_matches_enumeration() {
        for (name, expect) in [
            ("z:2", 8),
            ("z:1", 4),
            ("lamplighter:2:1", 6),
            ("heisenberg", 8),
            ("grigorchuk", 8),
            ("free:2", 8),
        ] {
            let b = ball(name, 2);
            let audit = edge_orbit_audit(&b);
            assert!(audit.intersections.iter().all(|&c| c == 1), "{name}");
            assert_eq!(audit.constant, Rational::new(1, expect));
            assert_eq!(edge_orbit_constant(b.group()), audit.constant);
        }
    }

    #[test]
    fn vacuous_for_small_k() {
        let (phi, lam) = line_models();
        let b = theorem11_bound(1, 5, &lam, &phi, 0.25).unwrap();
        assert_eq!((b.ell_star, b.rhs), (0, 2.0));
    }

    #[test]
    fn line_scan_by_hand() {
        // Φ = 1/n, Λ = n⁻², c = 1/4: Φ⁻¹(c/r) = 4r, and the condition is
        // ℓ·log2·(2^{ℓ+1}·4r)² ≤ k.
        let phi = MonotoneFunction::power_log(1.0, 1.0, 0.0).unwrap();
        let lam = MonotoneFunction::power_log(1.0, 2.0, 0.0).unwrap();
        let (k, r) = (1_000_000u64, 10u64);
        let b = theorem11_bound(k, r, &lam, &phi, 0.25).unwrap();
        let mut expect = 0;
        for ell in 1..40 {
            let v = ell as f64 * std::f64::consts::LN_2 * (2f64.powi(ell + 1) * 40.0).powi(2);
            if v <= k as f64 {
                expect = ell as u32;
            }
        }
        assert_eq!(b.ell_star, expect);
        assert!((b.rhs - 2f64.powf(1.0 - expect as f64 / 2.0)).abs() < 1e-15);
    }

    #[test]
    fn rhs_monotone_in_k_and_r() {
        let models = [
            (
                MonotoneFunction::power_log(1.0, 1.0, 0.0).unwrap(),
                MonotoneFunction::power_log(1.0, 2.0, 0.0).unwrap(),
            ),
            (
                MonotoneFunction::power_log(1.0, 0.0, 1.0).unwrap(),
                MonotoneFunction::power_log(1.0, 0.0, 2.0).unwrap(),
            ),
            line_models(),
        ];
        for (phi, lam) in &models {
            for r in [1u64, 3, 10] {
                let mut last = 2.0;
                for k in (0..20).map(|i| 1u64 << i) {
                    let b = theorem11_bound(k, r, lam, phi, 0.25).unwrap();
                    assert!(b.rhs <= last && b.rhs <= 2.0 && b.rhs > 0.0);
                    last = b.rhs;
                    let wider = theorem11_bound(k, r + 1, lam, phi, 0.25).unwrap();
                    assert!(wider.rhs >= b.rhs);
                }
            }
        }
    }

    #[test]
    fn saturation_on_synthetic_tables() {
        use crate::profiles::Quantity;
        let mut phi = ProfileTable::new(Quantity::Phi);
        let mut lam = ProfileTable::new(Quantity::Lambda);
        for i in 0..10 {
            let n = 1u64 << i;
            phi.push(n, 1.0 / n as f64, Kind::Upper, "s");
            lam.push(n, 1.0 / n as f64, Kind::Upper, "s");
        }
        let fit = saturation_exponent_fit(&phi, &lam).unwrap();
        assert!((fit.alpha - 1.0).abs() < 1e-12);
        lam.points.truncate(4);
        assert!(matches!(
            saturation_exponent_fit(&phi, &lam),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn rearrangement_on_line_and_fabrication() {
        let (phi, lam) = line_models();
        let eps: Vec<f64> = (1..12).map(|i| 0.5f64.powi(i)).collect();
        let grid = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0];
        let ok = corollary12_rearrangement_check(&phi, &lam, &eps, &grid, 10.0).unwrap();
        assert_eq!(ok.best.as_ref().unwrap().c2, 1.0);
        let bad = corollary12_rearrangement_check(&phi, &phi, &eps, &grid, 10.0).unwrap();
        assert!(bad.best.is_none());
    }

    #[test]
    fn domination_on_a_small_line_grid() {
        let b = ball("z:1", 300);
        let kern = Kernel::uniform(2);
        let measured = small_ball_grid(b.graph(), &kern, &[16, 64, 256], &[1, 2, 4, 8]).unwrap();
        let (phi, lam) = line_models();
        let rep = empirical_domination(&measured, &phi, &lam, 0.25).unwrap();
        assert_eq!(rep.violations, 0);
        // r ≥ k gives probability one, still below 2.
        let certain = small_ball_grid(b.graph(), &kern, &[4], &[4]).unwrap();
        assert_eq!(certain[0].2.hi, 1.0);
    }

    #[test]
    fn line_models_match_tables() {
        let (phi, lam) = line_models();
        assert_eq!(phi.eval(7.0), 1.0 / 7.0);
        assert!((lam.eval(7.0) - (1.0 - (std::f64::consts::PI / 8.0).cos())).abs() < 1e-15);
    }
}
