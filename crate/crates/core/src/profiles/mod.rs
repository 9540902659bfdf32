//! Isoperimetric and spectral profiles.
//!
//! `Φ(n)` is the infimum of the boundary ratio over sets of volume ≤ n and
//! `Λ(n)` the infimum of the Dirichlet gap. Values come in three kinds:
//! exact (exhaustive search), upper (any witness set certifies one) and
//! lower (derived from growth).

mod exhaustive;
mod search;

use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{BallGraph, BOUNDARY};
use crate::linalg::{lanczos_smallest, symmetric_eigen, LanczosOptions, SymOp};
use crate::scalar::{Real, Scalar};
use crate::walk::Kernel;
use crate::Rational;

pub use exhaustive::{disconnected_audit, profile_exact_small, DisconnectedAudit, EXACT_CAP};
pub use search::{profile_upper, structured_candidates, Strategy, UpperOptions, UpperProfiles};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Kind {
    Upper,
    Lower,
    Exact,
}

impl Kind {
    pub fn is_upper(self) -> bool {
        matches!(self, Kind::Upper | Kind::Exact)
    }
    pub fn is_lower(self) -> bool {
        matches!(self, Kind::Lower | Kind::Exact)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantity {
    Phi,
    Lambda,
}

/// A set `Ω` inside a ball, with its certified values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessSet {
    pub id: String,
    /// Sorted ball indices.
    pub members: Vec<u32>,
    pub boundary_ratio: f64,
    pub gap: Option<f64>,
}

impl WitnessSet {
    pub fn new(
        graph: &BallGraph,
        kernel: &Kernel,
        id: String,
        mut members: Vec<u32>,
    ) -> Result<Self> {
        members.sort_unstable();
        members.dedup();
        let ratio: Rational = boundary_ratio(graph, kernel, &members)?;
        Ok(Self {
            id,
            members,
            boundary_ratio: ratio.as_f64(),
            gap: None,
        })
    }

    pub fn volume(&self) -> usize {
        self.members.len()
    }

    /// Attach the Dirichlet gap if the set keeps off the outer shell.
    pub fn with_gap(mut self, graph: &BallGraph, kernel: &Kernel) -> Result<Self> {
        self.gap = Some(dirichlet_gap::<f64>(graph, kernel, &self.members)?.value);
        Ok(self)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub n: u64,
    pub value: f64,
    pub kind: Kind,
    /// Witness id, or a derivation tag for bounds without witnesses.
    pub witness: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileTable {
    pub quantity: Quantity,
    pub points: Vec<ProfilePoint>,
    #[serde(default)]
    pub witnesses: Vec<WitnessSet>,
    /// Free-form notes, e.g. how the exhaustive search was restricted.
    #[serde(default)]
    pub notes: Vec<String>,
}

impl ProfileTable {
    pub fn new(quantity: Quantity) -> Self {
        Self {
            quantity,
            points: Vec::new(),
            witnesses: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn push(&mut self, n: u64, value: f64, kind: Kind, witness: impl Into<String>) {
        self.points.push(ProfilePoint {
            n,
            value,
            kind,
            witness: witness.into(),
        });
    }

    pub fn witness(&self, id: &str) -> Option<&WitnessSet> {
        self.witnesses.iter().find(|w| w.id == id)
    }

    /// Points of a kind, sorted by `n`.
    pub fn of_kind(&self, kind: Kind) -> Vec<&ProfilePoint> {
        let mut v: Vec<&ProfilePoint> = self.points.iter().filter(|p| p.kind == kind).collect();
        v.sort_by_key(|p| p.n);
        v
    }

    /// Value usable as an upper bound at `n` (exact or upper point at `n`).
    pub fn upper_at(&self, n: u64) -> Option<f64> {
        self.points
            .iter()
            .filter(|p| p.n == n && p.kind.is_upper())
            .map(|p| p.value)
            .min_by(|a, b| a.partial_cmp(b).unwrap())
    }

    pub fn lower_at(&self, n: u64) -> Option<f64> {
        self.points
            .iter()
            .filter(|p| p.n == n && p.kind.is_lower())
            .map(|p| p.value)
            .max_by(|a, b| a.partial_cmp(b).unwrap())
    }

    /// Monotone envelope closure.
    ///
    /// Profiles are nonincreasing, so an upper bound at `m` is an upper
    /// bound at every `n ≥ m`, and a lower bound at `m` is a lower bound at
    /// every `n ≤ m`. Closure replaces each value by the best one implied on
    /// the grid.
    pub fn close_envelopes(&mut self) {
        for kind in [Kind::Upper, Kind::Lower] {
            let mut idx: Vec<usize> = (0..self.points.len())
                .filter(|&i| self.points[i].kind == kind)
                .collect();
            idx.sort_by_key(|&i| self.points[i].n);
            match kind {
                Kind::Upper => {
                    let mut best: Option<(f64, String)> = None;
                    for &i in &idx {
                        let p = &mut self.points[i];
                        match &best {
                            Some((v, w)) if *v < p.value => {
                                p.value = *v;
                                p.witness = w.clone();
                            }
                            _ => best = Some((p.value, p.witness.clone())),
                        }
                    }
                }
                _ => {
                    let mut best: Option<(f64, String)> = None;
                    for &i in idx.iter().rev() {
                        let p = &mut self.points[i];
                        match &best {
                            Some((v, w)) if *v > p.value => {
                                p.value = *v;
                                p.witness = w.clone();
                            }
                            _ => best = Some((p.value, p.witness.clone())),
                        }
                    }
                }
            }
        }
    }

    /// Recompute every witnessed value from the adjacency. Returns the ids
    /// whose stored value disagrees by more than `tol` (relative).
    pub fn recertify(&self, graph: &BallGraph, kernel: &Kernel, tol: f64) -> Result<Vec<String>> {
        let mut bad = Vec::new();
        for p in &self.points {
            let Some(w) = self.witness(&p.witness) else {
                continue;
            };
            if w.members.len() as u64 > p.n {
                bad.push(w.id.clone());
                continue;
            }
            let fresh = match self.quantity {
                Quantity::Phi => boundary_ratio::<Rational>(graph, kernel, &w.members)?.as_f64(),
                Quantity::Lambda => dirichlet_gap::<f64>(graph, kernel, &w.members)?.value,
            };
            if p.kind != Kind::Lower && (fresh - p.value).abs() > tol * p.value.abs() {
                bad.push(w.id.clone());
            }
        }
        Ok(bad)
    }
}

fn check_members(graph: &BallGraph, set: &[u32]) -> Result<()> {
    if set.is_empty() {
        return Err(Error::EmptySet);
    }
    if let Some(&bad) = set.iter().find(|&&i| i as usize >= graph.len()) {
        return Err(Error::Format(format!("set member {bad} outside the ball")));
    }
    Ok(())
}

/// Membership bitmap over the ball.
fn bitmap(graph: &BallGraph, set: &[u32]) -> Vec<bool> {
    let mut m = vec![false; graph.len()];
    set.iter().for_each(|&i| m[i as usize] = true);
    m
}

/// `(1/|Ω|) Σ_{x∈Ω, y∉Ω} P(x, y)`, exactly when `S` is rational.
pub fn boundary_ratio<S: Scalar>(graph: &BallGraph, kernel: &Kernel, set: &[u32]) -> Result<S> {
    check_members(graph, set)?;
    let inside = bitmap(graph, set);
    let weights: Vec<S> = kernel.weights_as();
    let mut total = S::zero();
    let mut count = 0usize;
    for (idx, &x) in set.iter().enumerate() {
        if idx > 0 && set[idx - 1] == x {
            continue;
        }
        count += 1;
        for (s, &y) in graph.neighbors(x).iter().enumerate() {
            if y == BOUNDARY || !inside[y as usize] {
                total = total + weights[s].clone();
            }
        }
    }
    Ok(total / S::from_usize(count))
}

/// `I − P` restricted to `Ω`.
pub struct KilledOperator<S> {
    n: usize,
    hold: S,
    /// CSR rows over local indices.
    row_start: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<S>,
}

impl<S: Real> KilledOperator<S> {
    pub fn new(graph: &BallGraph, kernel: &Kernel, set: &[u32]) -> Result<Self> {
        check_members(graph, set)?;
        let mut sorted = set.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        let weights: Vec<S> = kernel.weights_as();
        let mut row_start = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for &x in &sorted {
            if graph.radii()[x as usize] >= graph.radius() && graph.radius() > 0 {
                return Err(Error::InteriorMargin(x));
            }
            for (s, &y) in graph.neighbors(x).iter().enumerate() {
                if y == BOUNDARY {
                    return Err(Error::InteriorMargin(x));
                }
                if let Ok(j) = sorted.binary_search(&y) {
                    if weights[s] != S::zero() {
                        cols.push(j as u32);
                        vals.push(weights[s]);
                    }
                }
            }
            row_start.push(cols.len());
        }
        Ok(Self {
            n: sorted.len(),
            hold: S::from_rational(&kernel.hold()),
            row_start,
            cols,
            vals,
        })
    }

    pub fn dense(&self) -> Vec<S> {
        let n = self.n;
        let mut a = vec![S::zero(); n * n];
        for i in 0..n {
            a[i * n + i] = S::one() - self.hold;
            for k in self.row_start[i]..self.row_start[i + 1] {
                let j = self.cols[k] as usize;
                a[i * n + j] = a[i * n + j] - self.vals[k];
            }
        }
        a
    }
}

impl<S: Real> SymOp<S> for KilledOperator<S> {
    fn dim(&self) -> usize {
        self.n
    }
    fn apply(&self, x: &[S], y: &mut [S]) {
        let d = S::one() - self.hold;
        for i in 0..self.n {
            let mut acc = d * x[i];
            for k in self.row_start[i]..self.row_start[i + 1] {
                acc = acc - self.vals[k] * x[self.cols[k] as usize];
            }
            y[i] = acc;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gap<S> {
    pub value: S,
    /// Residual norm of the returned eigenpair (0 for dense solves).
    pub residual: S,
}

/// Sets up to this size are solved densely.
const DENSE_GAP_MAX: usize = 48;

/// `λ_P(Ω)`: smallest eigenvalue of `I − P` on functions supported in `Ω`.
pub fn dirichlet_gap<S: Real>(graph: &BallGraph, kernel: &Kernel, set: &[u32]) -> Result<Gap<S>> {
    let op = KilledOperator::<S>::new(graph, kernel, set)?;
    gap_of_operator(&op)
}

pub fn gap_of_operator<S: Real>(op: &KilledOperator<S>) -> Result<Gap<S>> {
    if op.n <= DENSE_GAP_MAX {
        let (vals, _) = symmetric_eigen(&op.dense(), op.n);
        return Ok(Gap {
            value: vals[0],
            residual: S::zero(),
        });
    }
    // The Perron vector is positive, so a constant start overlaps it well.
    let start = vec![S::one(); op.n];
    let pair = lanczos_smallest(op, Some(&start), LanczosOptions::default())?;
    Ok(Gap {
        value: pair.value,
        residual: pair.residual,
    })
}

/// Lower bound `Φ(n) ≥ scale / (2·deg·Gr⁻¹(2n))` from the growth table.
///
/// `scale = deg · min_s μ(s)` adapts the bound to non-uniform kernels; it is
/// 1 for the simple random walk.
pub fn csc_lower(growth: &[u64], degree: usize, scale: f64, ns: &[u64]) -> Result<ProfileTable> {
    let mut t = ProfileTable::new(Quantity::Phi);
    for &n in ns {
        let r = growth_inverse(growth, 2 * n).ok_or_else(|| {
            Error::Range(format!(
                "growth table ends at {} < 2n = {}",
                growth.last().unwrap_or(&0),
                2 * n
            ))
        })?;
        let r = r.max(1);
        t.push(
            n,
            scale / (2.0 * degree as f64 * r as f64),
            Kind::Lower,
            format!("csc:Gr^-1({})={r}", 2 * n),
        );
    }
    Ok(t)
}

/// Scale factor `deg · min μ(s)` for [`csc_lower`].
pub fn csc_scale(kernel: &Kernel) -> f64 {
    let min = kernel
        .weights()
        .iter()
        .min()
        .copied()
        .unwrap_or_else(Rational::zero);
    (min * Rational::from_integer(kernel.degree() as i64))
        .to_f64()
        .unwrap_or(0.0)
}

/// `Gr⁻¹(x) = min{r : Gr(r) ≥ x}` on a table, `None` past its end.
pub fn growth_inverse(growth: &[u64], x: u64) -> Option<u32> {
    growth.iter().position(|&g| g >= x).map(|r| r as u32)
}

/// Upper bound `Φ(n) ≤ 2^{1/(b−1−a)} − 1`, `a = Gr⁻¹(n/2)`, `b = Gr⁻¹(n)`.
///
/// From `Gr(r+1) ≥ (1 + Φ(Gr(r)))·Gr(r)` and monotonicity of Φ: for
/// `a ≤ r ≤ b−2` we have `Gr(r) < n`, so `Gr(b−1) ≥ Gr(a)(1+Φ(n))^{b−1−a}`
/// with `Gr(b−1) < n ≤ 2·Gr(a)`.
pub fn growth_isoperimetry_upper(growth: &[u64], n: u64) -> Result<f64> {
    let half = n.div_ceil(2);
    let a = growth_inverse(growth, half)
        .ok_or_else(|| Error::Range(format!("table does not reach {half}")))?;
    let b = growth_inverse(growth, n)
        .ok_or_else(|| Error::Range(format!("table does not reach {n}")))?;
    if b <= a + 1 {
        return Err(Error::Degenerate { n: n as f64 });
    }
    Ok(2f64.powf(1.0 / (b - 1 - a) as f64) - 1.0)
}

pub fn growth_isoperimetry_table(growth: &[u64], ns: &[u64]) -> Result<ProfileTable> {
    let mut t = ProfileTable::new(Quantity::Phi);
    for &n in ns {
        match growth_isoperimetry_upper(growth, n) {
            Ok(v) => t.push(n, v, Kind::Upper, "growth-recursion"),
            Err(Error::Degenerate { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(t)
}

/// LOWER Λ points `½Φ(n)²` from LOWER or EXACT Φ points.
pub fn lambda_lower_from_phi(phi: &ProfileTable) -> ProfileTable {
    let mut t = ProfileTable::new(Quantity::Lambda);
    for p in phi.points.iter().filter(|p| p.kind.is_lower()) {
        t.push(
            p.n,
            0.5 * p.value * p.value,
            Kind::Lower,
            format!("cheeger:{}", p.witness),
        );
    }
    t
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheegerViolation {
    pub n: u64,
    pub inequality: String,
    pub phi: f64,
    pub lambda: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheegerReport {
    pub pairs_checked: usize,
    pub violations: Vec<CheegerViolation>,
}

/// Check `½Φ² ≤ Λ ≤ Φ` on every pair of points at equal `n` whose kinds can
/// certify a violation.
pub fn cheeger_consistency(phi: &ProfileTable, lambda: &ProfileTable, tol: f64) -> CheegerReport {
    let mut pairs = 0;
    let mut violations = Vec::new();
    for p in &phi.points {
        for l in lambda.points.iter().filter(|l| l.n == p.n) {
            // ½Φ² ≤ Λ fails for sure only if a lower Φ beats an upper Λ.
            if p.kind.is_lower() && l.kind.is_upper() {
                pairs += 1;
                if 0.5 * p.value * p.value > l.value * (1.0 + tol) {
                    violations.push(CheegerViolation {
                        n: p.n,
                        inequality: "half_phi_sq_le_lambda".into(),
                        phi: p.value,
                        lambda: l.value,
                    });
                }
            }
            if l.kind.is_lower() && p.kind.is_upper() {
                pairs += 1;
                if l.value > p.value * (1.0 + tol) {
                    violations.push(CheegerViolation {
                        n: p.n,
                        inequality: "lambda_le_phi".into(),
                        phi: p.value,
                        lambda: l.value,
                    });
                }
            }
        }
    }
    CheegerReport {
        pairs_checked: pairs,
        violations,
    }
}
