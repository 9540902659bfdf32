//! Exact small-instance versions of the proof objects behind the
//! small-ball bound.
//!
//! [`FiniteChain`] holds a dense symmetric stochastic matrix on at most 16
//! states, on which `χ_Q(n, ℓ)` and `Λ_Q(m)` are computed by exhausting
//! subsets. [`WallMetric`] evaluates the translate-overlap metric
//! `d_W(x, y) = |W| − #{γ : x, y ∈ γW}` on a Cayley graph.

use std::collections::{HashMap, HashSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{CayleyBall, Element, GroupSpec, State};
use crate::linalg::symmetric_eigen;
use crate::walk::{Evolver, Kernel};
use crate::Rational;

/// Largest state space accepted by [`FiniteChain`].
pub const CHAIN_CAP: usize = 16;
/// Largest `n` for [`chi_exact`].
pub const CHI_N_CAP: usize = 6;
/// Default `k_cap` for [`chi_exact`].
pub const K_CAP: u64 = 10_000;

const STOCHASTIC_TOL: f64 = 1e-12;
/// Relative slack when comparing `‖Q^k 1_W‖²` with `2^{−ℓ}|W|`.
const NORM_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteChain {
    size: usize,
    /// Row-major `size × size`.
    q: Vec<f64>,
}

impl FiniteChain {
    pub fn new(size: usize, q: Vec<f64>) -> Result<Self> {
        if size == 0 || size > CHAIN_CAP {
            return Err(Error::SizeCap {
                requested: size,
                cap: CHAIN_CAP,
            });
        }
        if q.len() != size * size {
            return Err(Error::InvalidChain(format!(
                "expected {} entries, got {}",
                size * size,
                q.len()
            )));
        }
        for i in 0..size {
            let mut row = 0.0;
            for j in 0..size {
                let v = q[i * size + j];
                if !(v >= 0.0) {
                    return Err(Error::InvalidChain(format!(
                        "Q[{i}][{j}] = {v} is negative"
                    )));
                }
                if (v - q[j * size + i]).abs() > STOCHASTIC_TOL {
                    return Err(Error::InvalidChain(format!("Q[{i}][{j}] ≠ Q[{j}][{i}]")));
                }
                row += v;
            }
            if (row - 1.0).abs() > STOCHASTIC_TOL * size as f64 {
                return Err(Error::InvalidChain(format!("row {i} sums to {row}")));
            }
        }
        Ok(Self { size, q })
    }

    /// Exact construction: rows must sum to exactly one.
    pub fn from_rational(size: usize, q: &[Rational]) -> Result<Self> {
        if q.len() == size * size {
            for i in 0..size {
                let row: Rational = q[i * size..(i + 1) * size].iter().sum();
                if row != Rational::from_integer(1) {
                    return Err(Error::InvalidChain(format!("row {i} sums to {row}")));
                }
            }
        }
        Self::new(
            size,
            q.iter()
                .map(|r| *r.numer() as f64 / *r.denom() as f64)
                .collect(),
        )
    }

    pub fn identity(size: usize) -> Result<Self> {
        let mut q = vec![0.0; size * size];
        for i in 0..size {
            q[i * size + i] = 1.0;
        }
        Self::new(size, q)
    }

    /// Cycle of length `size` holding with probability `hold`.
    pub fn lazy_cycle(size: usize, hold: f64) -> Result<Self> {
        if size < 3 {
            return Err(Error::InvalidChain("cycle needs at least 3 states".into()));
        }
        let mut q = vec![0.0; size * size];
        for i in 0..size {
            q[i * size + i] = hold;
            q[i * size + (i + 1) % size] += (1.0 - hold) / 2.0;
            q[i * size + (i + size - 1) % size] += (1.0 - hold) / 2.0;
        }
        Self::new(size, q)
    }

    /// Path with reflecting ends: each interior state holds with `hold`.
    pub fn lazy_path(size: usize, hold: f64) -> Result<Self> {
        let mut q = vec![0.0; size * size];
        let step = (1.0 - hold) / 2.0;
        for i in 0..size {
            if i > 0 {
                q[i * size + i - 1] = step;
            }
            if i + 1 < size {
                q[i * size + i + 1] = step;
            }
            let out: f64 = (0..size).filter(|&j| j != i).map(|j| q[i * size + j]).sum();
            q[i * size + i] = 1.0 - out;
        }
        Self::new(size, q)
    }

    /// Random symmetric chain: each pair is joined with probability
    /// `density` and a uniform weight, then rows are padded with holding.
    pub fn random(size: usize, density: f64, seed: u64) -> Result<Self> {
        if size == 0 || size > CHAIN_CAP {
            return Err(Error::SizeCap {
                requested: size,
                cap: CHAIN_CAP,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = vec![0.0; size * size];
        for i in 0..size {
            for j in (i + 1)..size {
                if rng.gen::<f64>() < density {
                    let x: f64 = rng.gen_range(0.05..1.0);
                    w[i * size + j] = x;
                    w[j * size + i] = x;
                }
            }
        }
        let rows: Vec<f64> = (0..size)
            .map(|i| w[i * size..(i + 1) * size].iter().sum())
            .collect();
        let d = rows.iter().cloned().fold(0.0, f64::max) * rng.gen_range(1.0..2.0);
        let d = if d > 0.0 { d } else { 1.0 };
        for i in 0..size {
            for j in 0..size {
                w[i * size + j] /= d;
            }
            w[i * size + i] = 1.0 - rows[i] / d;
        }
        Self::new(size, w)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn matrix(&self) -> &[f64] {
        &self.q
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.q[i * self.size + j]
    }

    /// `y = Q x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.size {
            y[i] = (0..self.size)
                .map(|j| self.q[i * self.size + j] * x[j])
                .sum();
        }
    }

    /// Smallest eigenvalue of `I − Q` restricted to the set `mask`.
    pub fn dirichlet_eigenvalue(&self, mask: u32) -> f64 {
        let idx: Vec<usize> = (0..self.size).filter(|&i| mask >> i & 1 == 1).collect();
        let m = idx.len();
        let mut a = vec![0.0; m * m];
        for (r, &i) in idx.iter().enumerate() {
            for (c, &j) in idx.iter().enumerate() {
                a[r * m + c] = if r == c { 1.0 } else { 0.0 } - self.q[i * self.size + j];
            }
        }
        let (vals, _) = symmetric_eigen(&a, m);
        vals[0].max(0.0)
    }
}

/// `χ_Q(n, ℓ)`: a step count or `INFINITE`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Chi {
    Finite(u64),
    Infinite,
}

impl fmt::Display for Chi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Chi::Finite(k) => write!(f, "{k}"),
            Chi::Infinite => f.write_str("INFINITE"),
        }
    }
}

impl Serialize for Chi {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Chi::Finite(k) => s.serialize_u64(*k),
            Chi::Infinite => s.serialize_str("INFINITE"),
        }
    }
}

impl<'de> Deserialize<'de> for Chi {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Steps(u64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Steps(k) => Ok(Chi::Finite(k)),
            Raw::Word(s) if s == "INFINITE" => Ok(Chi::Infinite),
            Raw::Word(s) => Err(serde::de::Error::custom(format!("bad χ: {s}"))),
        }
    }
}

/// Spectral data of `Q`: `‖Q^k 1_W‖² = Σ λ_i^{2k} ⟨v_i, 1_W⟩²`.
struct Spectrum {
    vals: Vec<f64>,
    vecs: Vec<Vec<f64>>,
}

impl Spectrum {
    fn of(chain: &FiniteChain) -> Self {
        let (vals, vecs) = symmetric_eigen(&chain.q, chain.size);
        Self { vals, vecs }
    }

    fn coefficients(&self, mask: u32) -> Vec<f64> {
        self.vecs
            .iter()
            .map(|v| {
                let c: f64 = v
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask >> i & 1 == 1)
                    .map(|(_, x)| x)
                    .sum();
                c * c
            })
            .collect()
    }

    fn norm2(&self, coef: &[f64], k: u64) -> f64 {
        self.vals
            .iter()
            .zip(coef)
            .map(|(l, c)| (l * l).powf(k as f64) * c)
            .sum()
    }

    /// `lim_k ‖Q^k 1_W‖²`.
    fn limit(&self, coef: &[f64]) -> f64 {
        self.vals
            .iter()
            .zip(coef)
            .filter(|(l, _)| l.abs() >= 1.0 - 1e-12)
            .map(|(_, c)| c)
            .sum()
    }
}

/// Smallest `k` with `‖Q^k 1_W‖² ≤ 2^{−ℓ}|W|` for one set, or `None` if
/// the spectral limit already exceeds the threshold.
fn chi_for_set(spec: &Spectrum, mask: u32, ell: u32, k_cap: u64) -> Result<Option<u64>> {
    let size = mask.count_ones() as f64;
    let tau = size * 2f64.powi(-(ell as i32)) * (1.0 + NORM_TOL);
    let coef = spec.coefficients(mask);
    if spec.norm2(&coef, 0) <= tau {
        return Ok(Some(0));
    }
    if spec.limit(&coef) > tau {
        return Ok(None);
    }
    if spec.norm2(&coef, k_cap) > tau {
        return Err(Error::NoConvergence {
            iterations: k_cap as usize,
            best: spec.norm2(&coef, k_cap),
            residual: tau,
        });
    }
    // The norm is nonincreasing in k, so bisect.
    let (mut lo, mut hi) = (0u64, k_cap);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if spec.norm2(&coef, mid) <= tau {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

/// Nonempty subsets of `0..size` with at most `n` members.
fn subsets(size: usize, n: usize) -> impl Iterator<Item = u32> {
    (1u32..(1u32 << size)).filter(move |m| m.count_ones() as usize <= n)
}

/// `χ_Q(n, ℓ) = inf{k : ‖Q^k 1_W‖² ≤ 2^{−ℓ}|W| for all |W| ≤ n}`.
///
/// `INFINITE` is reported when some `W` has spectral limit above the
/// threshold, so that no `k` works.
pub fn chi_exact(chain: &FiniteChain, n: usize, ell: u32, k_cap: u64) -> Result<Chi> {
    if n > CHI_N_CAP || n > chain.size {
        return Err(Error::SizeCap {
            requested: n,
            cap: CHI_N_CAP.min(chain.size),
        });
    }
    if n == 0 {
        return Ok(Chi::Finite(0));
    }
    let spec = Spectrum::of(chain);
    let mut worst = 0;
    for mask in subsets(chain.size, n) {
        match chi_for_set(&spec, mask, ell, k_cap)? {
            Some(k) => worst = worst.max(k),
            None => return Ok(Chi::Infinite),
        }
    }
    Ok(Chi::Finite(worst))
}

/// `Λ_Q(m)`: the least Dirichlet eigenvalue of `I − Q` over `|Ω| ≤ m`.
///
/// Enlarging `Ω` can only lower the eigenvalue, so only sets of size
/// exactly `min(m, |V|)` are scanned.
pub fn spectral_profile_exact(chain: &FiniteChain, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::EmptySet);
    }
    if m > chain.size {
        return Err(Error::SizeCap {
            requested: m,
            cap: chain.size,
        });
    }
    let best = (1u32..(1u32 << chain.size))
        .filter(|mask| mask.count_ones() as usize == m)
        .map(|mask| chain.dirichlet_eigenvalue(mask))
        .fold(f64::INFINITY, f64::min);
    Ok(best)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
    Vacuous,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prop21Report {
    pub n: usize,
    pub ell: u32,
    /// `n·2^{ℓ+1}`.
    pub m: usize,
    pub chi: Option<Chi>,
    pub lambda: Option<f64>,
    /// `ℓ log 2 / Λ_Q(m)`.
    pub rhs: Option<f64>,
    pub slack: Option<f64>,
    /// `χ_Q(n, 1)·Λ_Q(n)`, the constant in the matching lower bound.
    pub lower_product: Option<f64>,
    pub verdict: Verdict,
}

/// `χ_Q(n, ℓ) ≤ ℓ log 2 / Λ_Q(n·2^{ℓ+1})` on one chain.
pub fn prop21_verify(chain: &FiniteChain, n: usize, ell: u32) -> Result<Prop21Report> {
    if n == 0 || ell == 0 {
        return Err(Error::Range("n and ℓ must be at least 1".into()));
    }
    let m = n.saturating_mul(1usize << (ell + 1).min(40));
    let mut rep = Prop21Report {
        n,
        ell,
        m,
        chi: None,
        lambda: None,
        rhs: None,
        slack: None,
        lower_product: None,
        verdict: Verdict::Vacuous,
    };
    if m >= chain.size {
        return Ok(rep);
    }
    let lambda = spectral_profile_exact(chain, m)?;
    rep.lambda = Some(lambda);
    if lambda <= 1e-12 {
        return Ok(rep);
    }
    let rhs = ell as f64 * std::f64::consts::LN_2 / lambda;
    rep.rhs = Some(rhs);
    let chi = chi_exact(chain, n, ell, K_CAP)?;
    rep.chi = Some(chi);
    if let Chi::Finite(k1) = chi_exact(chain, n, 1, K_CAP)? {
        rep.lower_product = Some(k1 as f64 * spectral_profile_exact(chain, n)?);
    }
    rep.verdict = match chi {
        Chi::Finite(k) if (k as f64) <= rhs => {
            rep.slack = Some(rhs - k as f64);
            Verdict::Pass
        }
        _ => Verdict::Fail,
    };
    Ok(rep)
}

/// `d_W(x, y) = |W| − #{γ : x, y ∈ γW}` on a Cayley graph, with counting
/// Haar measure.
#[derive(Clone, Debug)]
pub struct WallMetric {
    group: GroupSpec,
    members: Vec<State>,
    keys: HashSet<Element>,
}

impl WallMetric {
    pub fn new(group: &GroupSpec, members: Vec<State>) -> Result<Self> {
        let keys: HashSet<Element> = members.iter().map(|x| group.key(x)).collect();
        if keys.is_empty() {
            return Err(Error::EmptySet);
        }
        if keys.len() != members.len() {
            return Err(Error::Format("wall set has repeated elements".into()));
        }
        Ok(Self {
            group: group.clone(),
            members,
            keys,
        })
    }

    /// The set given by ball indices.
    pub fn from_ball(ball: &CayleyBall, members: &[u32]) -> Result<Self> {
        Self::new(
            ball.group(),
            members.iter().map(|&i| ball.state_of(i)).collect(),
        )
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn group(&self) -> &GroupSpec {
        &self.group
    }

    /// `#{w ∈ W : w·z ∈ W}` with `z = x⁻¹y`: translates `γ = x w⁻¹` cover
    /// `x`, and cover `y` iff `w x⁻¹ y ∈ W`.
    fn overlap(&self, z: &State) -> usize {
        self.members
            .iter()
            .filter(|w| self.keys.contains(&self.group.key(&self.group.mul(w, z))))
            .count()
    }

    pub fn distance(&self, x: &State, y: &State) -> usize {
        let z = self.group.mul(&self.group.inv(x), y);
        self.size() - self.overlap(&z)
    }

    /// `d_W(o, y)`.
    pub fn from_identity(&self, y: &State) -> usize {
        self.size() - self.overlap(y)
    }

    /// Oriented edges leaving `W`.
    pub fn boundary_edges(&self) -> usize {
        let deg = self.group.degree();
        self.members
            .iter()
            .map(|w| {
                (0..deg)
                    .filter(|&s| !self.keys.contains(&self.group.key(&self.group.apply(w, s))))
                    .count()
            })
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationReport {
    /// `d_W(o, s)` per generator; by left invariance this is the increment
    /// along every edge labelled `s`.
    pub increments: Vec<usize>,
    pub max_increment: usize,
    pub boundary_edges: usize,
    /// `|∂W| / (deg·|W|)`.
    pub phi_w: f64,
    /// `max_s deg / deg_s`, where `deg_s` counts generators equal to `s`.
    pub degree_ratio: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Exact maximum edge increment of `d_W` against
/// `(max_e deg/deg_e)·Φ_W·|W|`.
pub fn wall_normalization_check(ctx: &WallMetric) -> NormalizationReport {
    let g = &ctx.group;
    let deg = g.degree();
    let gens: Vec<State> = (0..deg).map(|s| g.apply(&g.identity(), s)).collect();
    let gen_keys: Vec<Element> = gens.iter().map(|x| g.key(x)).collect();
    let increments: Vec<usize> = gens.iter().map(|s| ctx.from_identity(s)).collect();
    let max_increment = increments.iter().copied().max().unwrap_or(0);
    let degree_ratio = gen_keys
        .iter()
        .map(|k| deg as f64 / gen_keys.iter().filter(|k2| *k2 == k).count() as f64)
        .fold(0.0, f64::max);
    let boundary_edges = ctx.boundary_edges();
    let phi_w = boundary_edges as f64 / (deg * ctx.size()) as f64;
    let bound = degree_ratio * phi_w * ctx.size() as f64;
    NormalizationReport {
        increments,
        max_increment,
        boundary_edges,
        phi_w,
        degree_ratio,
        bound,
        pass: max_increment as f64 <= bound * (1.0 + 1e-12),
    }
}

/// Leakage budget for the ball-based side of the identity checks.
pub const LEAK_BUDGET: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirstMomentReport {
    pub k: usize,
    /// `E[|W| − d_W(X₀, X_k)]` from the walk distribution on the ball.
    pub lhs: f64,
    /// `Σ_{w∈W} P_w(X_k ∈ W)` from evolution started on `W`.
    pub rhs: f64,
    pub difference: f64,
    pub pass: bool,
}

/// Evolve a measure on the group directly, without a ball.
fn evolve_free(
    group: &GroupSpec,
    kernel: &Kernel,
    start: &[State],
    k: usize,
) -> HashMap<Element, (State, f64)> {
    let weights: Vec<f64> = kernel.weights_as();
    let hold = kernel.hold();
    let hold = *hold.numer() as f64 / *hold.denom() as f64;
    let mut cur: HashMap<Element, (State, f64)> = start
        .iter()
        .map(|x| (group.key(x), (x.clone(), 1.0)))
        .collect();
    for _ in 0..k {
        let mut next: HashMap<Element, (State, f64)> = HashMap::with_capacity(cur.len() * 2);
        for (key, (x, p)) in &cur {
            if hold > 0.0 {
                next.entry(key.clone())
                    .or_insert_with(|| (x.clone(), 0.0))
                    .1 += p * hold;
            }
            for (s, &w) in weights.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let y = group.apply(x, s);
                next.entry(group.key(&y)).or_insert_with(|| (y, 0.0)).1 += p * w;
            }
        }
        cur = next;
    }
    cur
}

/// Walk distribution at step `k` from the identity on the ball, as
/// `(state, probability)` pairs.
fn ball_distribution(ball: &CayleyBall, kernel: &Kernel, k: usize) -> Result<Vec<(State, f64)>> {
    let mut ev = Evolver::<f64>::new(ball.graph(), kernel)?;
    for _ in 0..k {
        ev.step();
    }
    let d = ev.distribution();
    if d.leaked > LEAK_BUDGET {
        return Err(Error::Leakage {
            leaked: d.leaked,
            budget: LEAK_BUDGET,
        });
    }
    Ok(d.p
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(i, &p)| (ball.state_of(i as u32), p))
        .collect())
}

pub fn first_moment_identity_check(
    ctx: &WallMetric,
    ball: &CayleyBall,
    kernel: &Kernel,
    k: usize,
) -> Result<FirstMomentReport> {
    let dist = ball_distribution(ball, kernel, k)?;
    let size = ctx.size() as f64;
    let lhs: f64 = dist
        .iter()
        .map(|(x, p)| p * (size - ctx.from_identity(x) as f64))
        .sum();
    let free = evolve_free(&ctx.group, kernel, &ctx.members, k);
    let rhs: f64 = free
        .iter()
        .filter(|(key, _)| ctx.keys.contains(*key))
        .map(|(_, (_, p))| p)
        .sum();
    let difference = (lhs - rhs).abs();
    Ok(FirstMomentReport {
        k,
        lhs,
        rhs,
        difference,
        pass: difference <= 1e-9,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovReport {
    pub k: usize,
    pub ell: u32,
    /// `P(d_W(X₀, X_k) ≤ |W|/2)`.
    pub measured: f64,
    /// `2^{1−ℓ/2}`.
    pub threshold: f64,
    /// `E[|W| − d_W(X₀, X_k)] / |W|`, at most `2^{−ℓ/2}` once `k ≥ χ`.
    pub mean_overlap: f64,
    /// Upper bound on `χ` used to choose `k`, if any.
    pub chi_bound: Option<f64>,
    /// `k` is at least the supplied bound on `χ`.
    pub certified: bool,
    pub pass: bool,
}

/// Measured `P(d_W(X₀, X_k) ≤ |W|/2)` against `2^{1−ℓ/2}`.
pub fn markov_step_check(
    ctx: &WallMetric,
    ball: &CayleyBall,
    kernel: &Kernel,
    ell: u32,
    k: usize,
    chi_bound: Option<f64>,
) -> Result<MarkovReport> {
    let threshold = 2f64.powf(1.0 - ell as f64 / 2.0);
    let dist = ball_distribution(ball, kernel, k)?;
    let size = ctx.size();
    let mut measured = 0.0;
    let mut overlap = 0.0;
    for (x, p) in &dist {
        let d = ctx.from_identity(x);
        if 2 * d <= size {
            measured += p;
        }
        overlap += p * (size - d) as f64;
    }
    Ok(MarkovReport {
        k,
        ell,
        measured,
        threshold,
        mean_overlap: overlap / size as f64,
        chi_bound,
        certified: chi_bound.map_or(false, |c| k as f64 >= c),
        pass: measured <= threshold,
    })
}

/// `χ` for the single set `W`: the least `k ≤ k_max` with
/// `‖P^k 1_W‖² ≤ 2^{−ℓ}|W|`, or `None` if there is none.
///
/// For a symmetric walk `‖P^k 1_W‖² = ⟨P^{2k} 1_W, 1_W⟩`, which the first
/// moment identity turns into `E[|W| − d_W(X₀, X_{2k})]`.
pub fn wall_chi(
    ctx: &WallMetric,
    ball: &CayleyBall,
    kernel: &Kernel,
    ell: u32,
    k_max: usize,
) -> Result<Option<usize>> {
    let graph = ball.graph();
    let reach = graph.volume((2 * k_max).min(graph.radius() as usize) as u32);
    let overlap: Vec<f64> = (0..reach)
        .map(|i| ctx.overlap(&ball.state_of(i as u32)) as f64)
        .collect();
    let target = 2f64.powi(-(ell as i32)) * ctx.size() as f64;
    let mut ev = Evolver::<f64>::new(graph, kernel)?;
    for t in 0..=2 * k_max {
        let d = ev.distribution();
        if d.leaked > LEAK_BUDGET {
            return Err(Error::Leakage {
                leaked: d.leaked,
                budget: LEAK_BUDGET,
            });
        }
        if t % 2 == 0 {
            let norm_sq: f64 = d.p.iter().zip(&overlap).map(|(p, o)| p * o).sum();
            if norm_sq <= target {
                return Ok(Some(t / 2));
            }
        }
        ev.step();
    }
    Ok(None)
}

/// `⌈ℓ log 2 / Λ⌉`: a step count at which `χ(n, ℓ) ≤ k` is guaranteed
/// when `Λ ≤ Λ(n·2^{ℓ+1})`.
pub fn prop21_steps(ell: u32, lambda: f64) -> f64 {
    (ell as f64 * std::f64::consts::LN_2 / lambda).ceil()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{enumerate_ball, BallOptions};

    /// χ by iterating `Q` directly on each set.
    fn chi_oracle(chain: &FiniteChain, n: usize, ell: u32, k_cap: u64) -> Option<u64> {
        let size = chain.size();
        let mut worst = 0;
        for mask in 1u32..(1 << size) {
            if mask.count_ones() as usize > n {
                continue;
            }
            let mut v: Vec<f64> = (0..size).map(|i| (mask >> i & 1) as f64).collect();
            let tau = mask.count_ones() as f64 * 2f64.powi(-(ell as i32)) * (1.0 + 1e-9);
            let mut w = vec![0.0; size];
            let mut k = 0;
            loop {
                if v.iter().map(|x| x * x).sum::<f64>() <= tau {
                    break;
                }
                if k == k_cap {
                    return None;
                }
                chain.apply(&v, &mut w);
                std::mem::swap(&mut v, &mut w);
                k += 1;
            }
            worst = worst.max(k);
        }
        Some(worst)
    }

    #[test]
    fn chi_examples() {
        let id = FiniteChain::identity(4).unwrap();
        assert_eq!(chi_exact(&id, 2, 1, K_CAP).unwrap(), Chi::Infinite);
        let two = FiniteChain::from_rational(2, &[Rational::new(1, 2); 4]).unwrap();
        assert_eq!(chi_exact(&two, 1, 1, K_CAP).unwrap(), Chi::Finite(1));
        assert!(matches!(
            chi_exact(&FiniteChain::lazy_cycle(10, 0.5).unwrap(), 7, 1, K_CAP),
            Err(Error::SizeCap { .. })
        ));
    }

    #[test]
    fn chi_matches_direct_iteration() {
        for seed in 0..30 {
            let chain = FiniteChain::random(8, 0.5, seed).unwrap();
            for n in 1..=3 {
                for ell in 1..=3 {
                    let fast = chi_exact(&chain, n, ell, 2000);
                    let slow = chi_oracle(&chain, n, ell, 2000);
                    match (fast, slow) {
                        (Ok(Chi::Finite(a)), Some(b)) => {
                            assert_eq!(a, b, "seed {seed} n {n} ℓ {ell}")
                        }
                        (Ok(Chi::Infinite), None) | (Err(_), None) => {}
                        (a, b) => panic!("seed {seed}: {a:?} vs {b:?}"),
                    }
                }
            }
        }
    }

    #[test]
    fn chi_is_monotone() {
        for seed in 0..100 {
            let chain = FiniteChain::random(7, 0.6, 1000 + seed).unwrap();
            let mut prev_row: Option<Vec<Chi>> = None;
            for n in 1..=3 {
                let row: Vec<Chi> = (1..=3)
                    .map(|ell| chi_exact(&chain, n, ell, K_CAP).unwrap_or(Chi::Infinite))
                    .collect();
                assert!(row.windows(2).all(|w| w[0] <= w[1]));
                if let Some(p) = &prev_row {
                    assert!(p.iter().zip(&row).all(|(a, b)| a <= b));
                }
                prev_row = Some(row);
            }
        }
    }

    #[test]
    fn spectral_profile_examples() {
        let c = FiniteChain::lazy_cycle(9, 0.25).unwrap();
        assert!(spectral_profile_exact(&c, 9).unwrap().abs() < 1e-12);
        let p = FiniteChain::lazy_path(3, 0.5).unwrap();
        let max_hold = (0..3).map(|i| p.entry(i, i)).fold(0.0, f64::max);
        assert!((spectral_profile_exact(&p, 1).unwrap() - (1.0 - max_hold)).abs() < 1e-14);
        let r = FiniteChain::random(9, 0.4, 7).unwrap();
        let vals: Vec<f64> = (1..=9)
            .map(|m| spectral_profile_exact(&r, m).unwrap())
            .collect();
        assert!(vals.windows(2).all(|w| w[1] <= w[0] + 1e-14));
        // Against the full scan over all |Ω| ≤ m.
        for m in 1..=9 {
            let full = (1u32..(1 << 9))
                .filter(|s| s.count_ones() as usize <= m)
                .map(|s| r.dirichlet_eigenvalue(s))
                .fold(f64::INFINITY, f64::min);
            assert!((full - vals[m - 1]).abs() < 1e-12);
        }
    }

    #[test]
    fn prop21_on_random_chains() {
        for seed in 0..200 {
            let chain = FiniteChain::random(12, 0.35, seed).unwrap();
            let rep = prop21_verify(&chain, 1, 1).unwrap();
            assert_ne!(rep.verdict, Verdict::Fail, "seed {seed}: {rep:?}");
        }
        let cyc = FiniteChain::lazy_cycle(12, 0.5).unwrap();
        let rep = prop21_verify(&cyc, 2, 1).unwrap();
        assert_eq!(rep.verdict, Verdict::Pass);
        assert!(rep.slack.unwrap() > 0.0);
        assert_eq!(prop21_verify(&cyc, 2, 2).unwrap().verdict, Verdict::Vacuous);
    }

    fn ball(name: &str, r: u32) -> CayleyBall {
        enumerate_ball(&name.parse().unwrap(), r, BallOptions::default()).unwrap()
    }

    fn lattice(xs: &[i64]) -> State {
        State::Lattice(xs.to_vec())
    }

    #[test]
    fn wall_metric_on_the_line() {
        let g: GroupSpec = "z:1".parse().unwrap();
        for m in 1..8i64 {
            let w = WallMetric::new(&g, (0..m).map(|i| lattice(&[i])).collect()).unwrap();
            for j in 0..20i64 {
                assert_eq!(w.distance(&lattice(&[0]), &lattice(&[j])) as i64, j.min(m));
                assert_eq!(w.distance(&lattice(&[j]), &lattice(&[0])) as i64, j.min(m));
            }
            let norm = wall_normalization_check(&w);
            assert_eq!(norm.max_increment, 1);
            assert!((norm.bound - 2.0).abs() < 1e-12);
            assert!(norm.pass);
        }
        let single = WallMetric::new(&g, vec![lattice(&[0])]).unwrap();
        assert!(wall_normalization_check(&single).pass);
    }

    #[test]
    fn first_moment_on_the_line() {
        let b = ball("z:1", 12);
        let g = b.group().clone();
        let w = WallMetric::new(&g, (0..5).map(|i| lattice(&[i])).collect()).unwrap();
        let k = Kernel::uniform(2);
        let zero = first_moment_identity_check(&w, &b, &k, 0).unwrap();
        assert_eq!(zero.lhs, 5.0);
        assert_eq!(zero.rhs, 5.0);
        let four = first_moment_identity_check(&w, &b, &k, 4).unwrap();
        assert!(four.difference < 1e-10, "{four:?}");
        assert!(matches!(
            first_moment_identity_check(&w, &ball("z:1", 3), &k, 6),
            Err(Error::Leakage { .. })
        ));
    }

    #[test]
    fn markov_trivial_threshold() {
        let b = ball("z:1", 6);
        let w = WallMetric::new(b.group(), (0..3).map(|i| lattice(&[i])).collect()).unwrap();
        let rep = markov_step_check(&w, &b, &Kernel::uniform(2), 2, 4, None).unwrap();
        assert_eq!(rep.threshold, 1.0);
        assert!(rep.pass && !rep.certified);
    }

    #[test]
    fn wall_chi_matches_direct_norms() {
        // W = {−2, …, 2} on ℤ; ‖P^k 1_W‖² by explicit convolution.
        let b = ball("z:1", 300);
        let members: Vec<u32> = (0..b.volume(2) as u32).collect();
        let w = WallMetric::from_ball(&b, &members).unwrap();
        let norm_sq = |k: usize| {
            let off = 2 + k;
            let mut f = vec![0.0; 2 * off + 1];
            for x in -2i64..=2 {
                f[(x + off as i64) as usize] = 1.0;
            }
            for _ in 0..k {
                let mut g = vec![0.0; f.len()];
                for i in 1..f.len() - 1 {
                    g[i] = 0.5 * (f[i - 1] + f[i + 1]);
                }
                f = g;
            }
            f.iter().map(|v| v * v).sum::<f64>()
        };
        for ell in 1..=2 {
            let k = wall_chi(&w, &b, &Kernel::uniform(2), ell, 150)
                .unwrap()
                .unwrap();
            let target = 5.0 * 2f64.powi(-(ell as i32));
            assert!(norm_sq(k) <= target + 1e-12);
            assert!(k == 0 || norm_sq(k - 1) > target);
            let rep =
                markov_step_check(&w, &b, &Kernel::uniform(2), ell, k, Some(k as f64)).unwrap();
            assert!(rep.certified && rep.pass, "{rep:?}");
            assert!(rep.mean_overlap <= 2f64.powf(-(ell as f64) / 2.0) + 1e-12);
        }
    }
}
