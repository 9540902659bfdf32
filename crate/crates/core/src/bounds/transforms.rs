//! Heat-kernel transforms of a spectral profile.
//!
//! `ψ` is defined implicitly by `t = ∫₁^{ψ(t)} dx / (x Λ(x))`, and the
//! doubling form uses `Ψ(x) = x / Λ(2^x)`. Both predict
//! `P^{2n}(o, o) ≈ exp[−Θ(·)]` and should agree up to constants in the
//! exponent.

use serde::{Deserialize, Serialize};

use super::monotone::{generalized_inverse, Direction, MonotoneFunction};
use crate::error::{Error, Result};
use crate::regularity::doubling_diagnostic;

/// Default threshold for the doubling constant `Λ(2^{2n}) ≥ c·Λ(2^n)`.
pub const DOUBLING_THRESHOLD: f64 = 0.05;

/// Adaptive Simpson on `[a, b]` to relative tolerance `rel`.
fn simpson(g: &dyn Fn(f64) -> f64, a: f64, b: f64, rel: f64) -> f64 {
    fn rec(
        g: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (g(lm), g(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(g, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + rec(g, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    if b <= a {
        return 0.0;
    }
    let (fa, fb, fm) = (g(a), g(b), g(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let tol = rel * whole.abs().max(f64::MIN_POSITIVE);
    rec(g, a, b, fa, fm, fb, whole, tol, 30)
}

/// `F(U) = ∫₀^U du / Λ(e^u)`, i.e. the defining integral with `x = e^u`.
fn log_integral(lambda: &MonotoneFunction, u: f64) -> f64 {
    // Split into unit pieces so the tolerance stays relative.
    let g = |s: f64| lambda.recip(s.exp());
    let pieces = u.ceil().max(1.0) as usize;
    let h = u / pieces as f64;
    (0..pieces)
        .map(|i| simpson(&g, i as f64 * h, (i + 1) as f64 * h, 1e-13))
        .sum()
}

/// `ψ(t)`, solved to relative accuracy ~1e-12 in `log ψ`.
pub fn grigoryan_heat_profile(lambda: &MonotoneFunction, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::Range(format!("t must be ≥ 0 (got {t})")));
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while log_integral(lambda, hi) < t {
        lo = hi;
        hi *= 2.0;
        if hi > 700.0 {
            return Err(Error::NoConvergence {
                iterations: 0,
                best: lo.exp(),
                residual: f64::INFINITY,
            });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= 1e-15 * hi.max(1.0) {
            break;
        }
        if log_integral(lambda, mid) < t {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

/// `Ψ(x) = x/Λ(2^x)` together with its generalized inverse.
#[derive(Clone, Debug)]
pub struct PsiForm {
    pub psi: MonotoneFunction,
}

impl PsiForm {
    pub fn eval(&self, x: f64) -> f64 {
        self.psi.eval(x)
    }
    pub fn inverse(&self, n: f64) -> Result<f64> {
        generalized_inverse(&self.psi, n)
    }
}

pub fn psi_doubling_form(lambda: &MonotoneFunction) -> PsiForm {
    let lam = lambda.clone();
    let psi = MonotoneFunction::from_fn(
        &format!("Psi[{}]", lambda.name()),
        Direction::Increasing,
        (1.0, f64::INFINITY),
        move |x| x * lam.recip(2f64.powf(x)),
    );
    PsiForm { psi }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementRow {
    pub n: f64,
    /// `log ψ(2n)`: exponent of the ψ-form prediction `1/ψ(2n)`.
    pub psi_exponent: f64,
    /// `Ψ⁻¹(n)`: exponent of the Ψ-form prediction `exp[−Ψ⁻¹(n)]`.
    pub doubling_exponent: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformAgreement {
    pub rows: Vec<AgreementRow>,
    pub min_ratio: f64,
    pub max_ratio: f64,
}

impl TransformAgreement {
    /// The two exponents agree up to a constant factor in `[1/band, band]`
    /// uniformly on the grid, and the ratio itself varies by at most `band`.
    pub fn within(&self, band: f64) -> bool {
        self.min_ratio >= 1.0 / band
            && self.max_ratio <= band
            && self.max_ratio / self.min_ratio <= band
    }
}

pub fn transform_agreement(lambda: &MonotoneFunction, ns: &[f64]) -> Result<TransformAgreement> {
    let form = psi_doubling_form(lambda);
    let mut rows = Vec::new();
    for &n in ns {
        let a = grigoryan_heat_profile(lambda, 2.0 * n)?.ln();
        let b = form.inverse(n)?;
        rows.push(AgreementRow {
            n,
            psi_exponent: a,
            doubling_exponent: b,
            ratio: a / b,
        });
    }
    let min_ratio = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let max_ratio = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    Ok(TransformAgreement {
        rows,
        min_ratio,
        max_ratio,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cor17Report {
    pub k: f64,
    pub r: f64,
    pub beta: f64,
    pub c: f64,
    /// `k / r^β`.
    pub diffusive: f64,
    /// `Ψ⁻¹(ck)`.
    pub return_exponent: f64,
    pub value: f64,
    pub regime: String,
    /// `k*` with `k*/r^β = Ψ⁻¹(ck*)`, if found below 1e15.
    pub crossover: Option<f64>,
    pub doubling_constant: f64,
}

/// `exp[−c·min{k/r^β, Ψ⁻¹(ck)}]`, valid when `Λ(2^n)` is doubling.
pub fn corollary17_bound(
    k: f64,
    r: f64,
    beta: f64,
    c: f64,
    lambda: &MonotoneFunction,
    threshold: f64,
) -> Result<Cor17Report> {
    if !(beta > 0.0) {
        return Err(Error::Range(format!("beta must be positive (got {beta})")));
    }
    let doubling = doubling_diagnostic(lambda, 1..=30, threshold)?;
    if !doubling.pass {
        return Err(Error::NotDoubling {
            ratio: doubling.min_ratio,
            threshold,
        });
    }
    let form = psi_doubling_form(lambda);
    let diffusive = k / r.powf(beta);
    let ret = form.inverse(c * k)?;
    let value = (-c * diffusive.min(ret)).exp();
    let regime = if diffusive <= ret {
        "diffusive"
    } else {
        "return"
    };
    let h = |kk: f64| -> Result<f64> { Ok(kk / r.powf(beta) - form.inverse(c * kk)?) };
    let crossover = {
        let (mut lo, mut hi) = (1.0f64, 1e15f64);
        if h(lo)? >= 0.0 || h(hi)? < 0.0 {
            None
        } else {
            for _ in 0..200 {
                let mid = (lo * hi).sqrt();
                if hi / lo < 1.0 + 1e-12 {
                    break;
                }
                if h(mid)? < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Some(hi)
        }
    };
    Ok(Cor17Report {
        k,
        r,
        beta,
        c,
        diffusive,
        return_exponent: ret,
        value,
        regime: regime.into(),
        crossover,
        doubling_constant: doubling.min_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn constant_profile_gives_exponential() {
        let lam = MonotoneFunction::constant(1.0);
        for t in [0.5, 1.0, 5.0, 30.0] {
            assert!(rel(grigoryan_heat_profile(&lam, t).unwrap(), t.exp()) < 1e-6);
        }
        let form = psi_doubling_form(&lam);
        assert!(rel(form.eval(7.0), 7.0) < 1e-15);
        assert!(rel(form.inverse(7.0).unwrap(), 7.0) < 1e-12);
    }

    #[test]
    fn polynomial_profile_closed_form() {
        for d in [1.0, 2.0, 3.0] {
            let lam = MonotoneFunction::power_log(1.0, 2.0 / d, 0.0).unwrap();
            for t in [0.1, 1.0, 10.0, 1000.0] {
                let exact = (1.0 + 2.0 * t / d).powf(d / 2.0);
                assert!(
                    rel(grigoryan_heat_profile(&lam, t).unwrap(), exact) < 1e-6,
                    "d={d} t={t}"
                );
            }
        }
    }

    #[test]
    fn log_profile_closed_form() {
        let lam = MonotoneFunction::power_log(1.0, 0.0, 2.0).unwrap();
        for t in [0.5f64, 3.0, 100.0, 1e4] {
            let exact = (3.0 * t).powf(1.0 / 3.0);
            assert!(rel(grigoryan_heat_profile(&lam, t).unwrap().ln(), exact) < 1e-6);
        }
        let form = psi_doubling_form(&lam);
        let ln2 = std::f64::consts::LN_2;
        assert!(rel(form.eval(5.0), 125.0 * ln2 * ln2) < 1e-12);
        let n = 1e6;
        assert!(rel(form.inverse(n).unwrap(), (n / (ln2 * ln2)).powf(1.0 / 3.0)) < 1e-9);
    }

    #[test]
    fn transforms_agree_on_lamplighter_model() {
        let lam = MonotoneFunction::power_log(1.0, 0.0, 2.0).unwrap();
        let ns: Vec<f64> = (6..=16).map(|i| 2f64.powi(i)).collect();
        let agree = transform_agreement(&lam, &ns).unwrap();
        assert!(agree.within(2.0), "{agree:?}");
        let poly = MonotoneFunction::power_log(1.0, 1.0, 0.0).unwrap();
        assert!(transform_agreement(&poly, &ns).unwrap().within(2.0));
    }

    #[test]
    fn corollary17_regimes() {
        let lam = MonotoneFunction::power_log(1.0, 0.0, 2.0).unwrap();
        let small = corollary17_bound(50.0, 10.0, 2.0, 0.5, &lam, DOUBLING_THRESHOLD).unwrap();
        assert_eq!(small.regime, "diffusive");
        assert!(rel(small.value, (-0.5 * 0.5f64).exp()) < 1e-12);
        let large = corollary17_bound(1e9, 10.0, 2.0, 0.5, &lam, DOUBLING_THRESHOLD).unwrap();
        assert_eq!(large.regime, "return");
        let ks = large.crossover.unwrap();
        let form = psi_doubling_form(&lam);
        assert!(rel(ks / 100.0, form.inverse(0.5 * ks).unwrap()) < 1e-6);
        let poly = MonotoneFunction::power_log(1.0, 1.0, 0.0).unwrap();
        assert!(matches!(
            corollary17_bound(10.0, 2.0, 2.0, 0.5, &poly, DOUBLING_THRESHOLD),
            Err(Error::NotDoubling { .. })
        ));
    }
}
