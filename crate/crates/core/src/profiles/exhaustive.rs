//! Exhaustive profiles at tiny volume.
//!
//! Connected sets containing the identity are enumerated with Redelmeier's
//! algorithm. For Φ this is exact: a disconnected optimizer has a component
//! whose ratio is at most the average. For Λ it is exact as well, because
//! distinct components of `Ω` are not adjacent, so `I − P` restricted to
//! `Ω` is block diagonal and `λ(Ω)` is the minimum over components. The
//! audit below checks this decoupling on explicit disconnected unions.

use serde::{Deserialize, Serialize};

use super::{Kind, ProfileTable, Quantity, WitnessSet};
use crate::error::{Error, Result};
use crate::group::{BallGraph, BOUNDARY};
use crate::linalg::symmetric_eigen;
use crate::walk::Kernel;
use crate::Rational;

/// Largest volume accepted by [`profile_exact_small`].
pub const EXACT_CAP: usize = 12;

/// Kernel weights as integers over a common denominator.
pub(crate) fn integer_weights(kernel: &Kernel) -> (Vec<i64>, i64) {
    let den = kernel
        .weights()
        .iter()
        .fold(1i64, |acc, w| num_integer::lcm(acc, *w.denom()));
    let units = kernel
        .weights()
        .iter()
        .map(|w| w.numer() * (den / w.denom()))
        .collect();
    (units, den)
}

/// Visit every connected set of size ≤ `n_max` containing `root`, each
/// exactly once. The callback sees the set in insertion order together with
/// a membership bitmap, and returns `false` to stop.
///
/// Sets are visited depth first: when a set of size `m` is visited, its
/// prefix of size `m − 1` was the previously visited set of that size.
pub fn for_each_connected(
    graph: &BallGraph,
    root: u32,
    n_max: usize,
    mut f: impl FnMut(&[u32], &[bool]) -> bool,
) {
    struct Walker<'g, F> {
        graph: &'g BallGraph,
        n_max: usize,
        set: Vec<u32>,
        inside: Vec<bool>,
        reached: Vec<bool>,
        f: F,
        stop: bool,
    }
    impl<F: FnMut(&[u32], &[bool]) -> bool> Walker<'_, F> {
        fn rec(&mut self, mut untried: Vec<u32>) {
            while let Some(v) = untried.pop() {
                self.set.push(v);
                self.inside[v as usize] = true;
                if !(self.f)(&self.set, &self.inside) {
                    self.stop = true;
                }
                if !self.stop && self.set.len() < self.n_max {
                    let mut fresh = Vec::new();
                    for &y in self.graph.neighbors(v) {
                        if y != BOUNDARY && !self.reached[y as usize] {
                            self.reached[y as usize] = true;
                            fresh.push(y);
                        }
                    }
                    let mut next = untried.clone();
                    next.extend_from_slice(&fresh);
                    self.rec(next);
                    for y in fresh {
                        self.reached[y as usize] = false;
                    }
                }
                self.set.pop();
                self.inside[v as usize] = false;
                if self.stop {
                    return;
                }
            }
        }
    }
    if n_max == 0 {
        return;
    }
    let mut w = Walker {
        graph,
        n_max,
        set: Vec::new(),
        inside: vec![false; graph.len()],
        reached: vec![false; graph.len()],
        f: &mut f,
        stop: false,
    };
    w.reached[root as usize] = true;
    w.rec(vec![root]);
}

/// Dense `I − P` on `set`, using `pos` as a scratch map from ball index to
/// local index (`u32::MAX` = absent). `pos` is restored before returning.
fn dense_killed(
    graph: &BallGraph,
    weights: &[f64],
    hold: f64,
    set: &[u32],
    pos: &mut [u32],
) -> Vec<f64> {
    let m = set.len();
    for (i, &x) in set.iter().enumerate() {
        pos[x as usize] = i as u32;
    }
    let mut a = vec![0.0; m * m];
    for (i, &x) in set.iter().enumerate() {
        a[i * m + i] = 1.0 - hold;
        for (s, &y) in graph.neighbors(x).iter().enumerate() {
            if y != BOUNDARY && pos[y as usize] != u32::MAX {
                let j = pos[y as usize] as usize;
                a[i * m + j] -= weights[s];
            }
        }
    }
    for &x in set {
        pos[x as usize] = u32::MAX;
    }
    a
}

/// True if `a − shift·I` is positive definite, i.e. `λ_min(a) > shift`.
fn exceeds(a: &[f64], m: usize, shift: f64) -> bool {
    let mut l = a.to_vec();
    for i in 0..m {
        l[i * m + i] -= shift;
    }
    for j in 0..m {
        let mut d = l[j * m + j];
        for k in 0..j {
            d -= l[j * m + k] * l[j * m + k];
        }
        if d <= 0.0 {
            return false;
        }
        let d = d.sqrt();
        l[j * m + j] = d;
        for i in j + 1..m {
            let mut s = l[i * m + j];
            for k in 0..j {
                s -= l[i * m + k] * l[j * m + k];
            }
            l[i * m + j] = s / d;
        }
    }
    true
}

fn smallest_eigenvalue(a: &[f64], m: usize) -> f64 {
    symmetric_eigen(a, m).0[0]
}

struct Best {
    /// Φ numerator in weight units and the set achieving it.
    phi: Option<(i64, Vec<u32>)>,
    lambda: Option<(f64, Vec<u32>)>,
}

/// EXACT Φ and Λ points for `n = 1..=n_max`.
///
/// The ball radius must be at least `n_max` so that every connected set of
/// that size around the identity, together with its neighbours, fits.
pub fn profile_exact_small(
    graph: &BallGraph,
    kernel: &Kernel,
    n_max: usize,
) -> Result<(ProfileTable, ProfileTable)> {
    if n_max > EXACT_CAP {
        return Err(Error::SizeCap {
            requested: n_max,
            cap: EXACT_CAP,
        });
    }
    if n_max == 0 {
        return Err(Error::EmptySet);
    }
    if (graph.radius() as usize) < n_max {
        return Err(Error::RadiusTooSmall {
            requested: n_max as u32,
            available: graph.radius(),
        });
    }
    kernel.check_symmetric(graph.inverse())?;
    let (units, den) = integer_weights(kernel);
    let total_units: i64 = units.iter().sum();
    let weights: Vec<f64> = kernel.weights_as();
    let hold = crate::Scalar::as_f64(&kernel.hold());

    let mut best: Vec<Best> = (0..=n_max)
        .map(|_| Best {
            phi: None,
            lambda: None,
        })
        .collect();
    let mut pos = vec![u32::MAX; graph.len()];
    // Φ numerator of each prefix of the current insertion sequence.
    let mut numer: Vec<i64> = vec![0; n_max + 1];

    for_each_connected(graph, 0, n_max, |set, inside| {
        let m = set.len();
        let v = *set.last().unwrap();
        let mut into = 0i64;
        for (s, &y) in graph.neighbors(v).iter().enumerate() {
            if y != BOUNDARY && inside[y as usize] {
                into += units[s];
            }
        }
        numer[m] = numer[m - 1] + total_units - 2 * into;

        let b = &mut best[m];
        let better = match &b.phi {
            None => true,
            Some((n0, _)) => numer[m] < *n0,
        };
        if better {
            b.phi = Some((numer[m], set.to_vec()));
        }

        let a = dense_killed(graph, &weights, hold, set, &mut pos);
        let candidate = match &b.lambda {
            None => Some(smallest_eigenvalue(&a, m)),
            Some((l0, _)) if !exceeds(&a, m, *l0) => {
                let l = smallest_eigenvalue(&a, m);
                (l < *l0 - 1e-14 * l0.abs()).then_some(l)
            }
            _ => None,
        };
        if let Some(l) = candidate {
            b.lambda = Some((l, set.to_vec()));
        }
        true
    });
    build_tables(graph, kernel, best, den, n_max)
}

fn build_tables(
    graph: &BallGraph,
    kernel: &Kernel,
    best: Vec<Best>,
    den: i64,
    n_max: usize,
) -> Result<(ProfileTable, ProfileTable)> {
    let mut phi = ProfileTable::new(Quantity::Phi);
    let mut lam = ProfileTable::new(Quantity::Lambda);
    lam.notes.push(
        "search over connected sets containing the identity; exact because I-P is block diagonal over \
         non-adjacent components (see disconnected_audit)"
            .into(),
    );
    let mut run_phi: Option<(Rational, String)> = None;
    let mut run_lam: Option<(f64, String)> = None;
    for (m, b) in best.into_iter().enumerate().skip(1).take(n_max) {
        if let Some((num, set)) = b.phi {
            let value = Rational::new(num, den * m as i64);
            let id = format!("exact-phi:{m}");
            let w = WitnessSet::new(graph, kernel, id.clone(), set)?;
            debug_assert_eq!(w.boundary_ratio, crate::Scalar::as_f64(&value));
            phi.witnesses.push(w);
            if run_phi.as_ref().map_or(true, |(v, _)| value < *v) {
                run_phi = Some((value, id));
            }
        }
        if let Some((value, set)) = b.lambda {
            let id = format!("exact-lambda:{m}");
            let mut w = WitnessSet::new(graph, kernel, id.clone(), set)?;
            w.gap = Some(value);
            lam.witnesses.push(w);
            if run_lam.as_ref().map_or(true, |(v, _)| value < *v) {
                run_lam = Some((value, id));
            }
        }
        if let Some((v, id)) = &run_phi {
            phi.push(m as u64, crate::Scalar::as_f64(v), Kind::Exact, id.clone());
        }
        if let Some((v, id)) = &run_lam {
            lam.push(m as u64, *v, Kind::Exact, id.clone());
        }
    }
    Ok((phi, lam))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisconnectedAudit {
    pub unions_checked: usize,
    /// Unions whose gap fell below the exact Λ at their volume.
    pub violations: Vec<Vec<u32>>,
    /// Largest `|λ(A ∪ B) − min(λ(A), λ(B))|` seen.
    pub max_decoupling_error: f64,
}

/// Check Λ against unions of two non-adjacent connected pieces.
///
/// `A` runs over connected sets containing the identity and `B` over
/// connected sets containing a second root taken from the sphere of radius
/// 2 or 3. At most `per_size` sets are drawn for each piece size.
pub fn disconnected_audit(
    graph: &BallGraph,
    kernel: &Kernel,
    lambda: &ProfileTable,
    n_max: usize,
    per_size: usize,
) -> Result<DisconnectedAudit> {
    let weights: Vec<f64> = kernel.weights_as();
    let hold = crate::Scalar::as_f64(&kernel.hold());
    let mut pos = vec![u32::MAX; graph.len()];
    let collect = |root: u32, n: usize| {
        let mut by_size: Vec<Vec<Vec<u32>>> = vec![Vec::new(); n + 1];
        for_each_connected(graph, root, n, |set, _| {
            let bucket = &mut by_size[set.len()];
            if bucket.len() < per_size
                && set
                    .iter()
                    .all(|&x| graph.radii()[x as usize] < graph.radius())
            {
                bucket.push(set.to_vec());
            }
            true
        });
        by_size
    };
    let near = collect(0, n_max.saturating_sub(1));
    let mut roots = Vec::new();
    for r in [2u32, 3] {
        if r < graph.radius() {
            if let Some(i) = (0..graph.len() as u32).find(|&i| graph.radii()[i as usize] == r) {
                roots.push(i);
            }
        }
    }
    let mut audit = DisconnectedAudit {
        unions_checked: 0,
        violations: Vec::new(),
        max_decoupling_error: 0.0,
    };
    for root in roots {
        let far = collect(root, n_max.saturating_sub(1));
        for a_size in 1..n_max {
            for b_size in 1..=(n_max - a_size) {
                for a in &near[a_size] {
                    for b in &far[b_size] {
                        let mut union: Vec<u32> = a.iter().chain(b).copied().collect();
                        union.sort_unstable();
                        if union.windows(2).any(|w| w[0] == w[1]) {
                            continue;
                        }
                        let touches = a
                            .iter()
                            .any(|&x| graph.neighbors(x).iter().any(|y| b.contains(y)));
                        if touches {
                            continue;
                        }
                        let l_union = smallest_eigenvalue(
                            &dense_killed(graph, &weights, hold, &union, &mut pos),
                            union.len(),
                        );
                        let l_a = smallest_eigenvalue(
                            &dense_killed(graph, &weights, hold, a, &mut pos),
                            a.len(),
                        );
                        let l_b = smallest_eigenvalue(
                            &dense_killed(graph, &weights, hold, b, &mut pos),
                            b.len(),
                        );
                        audit.unions_checked += 1;
                        audit.max_decoupling_error = audit
                            .max_decoupling_error
                            .max((l_union - l_a.min(l_b)).abs());
                        if let Some(exact) = lambda.lower_at(union.len() as u64) {
                            if l_union < exact - 1e-12 {
                                audit.violations.push(union);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(audit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{enumerate_ball, BallOptions, GroupSpec};
    use crate::profiles::{boundary_ratio, cheeger_consistency, csc_lower};

    fn graph(name: &str, r: u32) -> BallGraph {
        enumerate_ball(
            &name.parse::<GroupSpec>().unwrap(),
            r,
            BallOptions::default(),
        )
        .unwrap()
        .into_graph()
    }

    #[test]
    fn counts_connected_sets() {
        // Intervals containing 0 on ℤ: n of each size n.
        let g = graph("z:1", 8);
        let mut counts = vec![0usize; 9];
        for_each_connected(&g, 0, 8, |s, _| {
            counts[s.len()] += 1;
            true
        });
        assert_eq!(&counts[1..], &[1, 2, 3, 4, 5, 6, 7, 8]);
        // Fixed polyominoes times size: 1, 4, 18, 76, 315
        let g2 = graph("z:2", 6);
        let mut c2 = vec![0usize; 6];
        for_each_connected(&g2, 0, 5, |s, _| {
            c2[s.len()] += 1;
            true
        });
        assert_eq!(&c2[1..], &[1, 4, 18, 76, 315]);
    }

    #[test]
    fn line_profiles_are_exact() {
        let g = graph("z:1", 10);
        let k = Kernel::uniform(2);
        let (phi, lam) = profile_exact_small(&g, &k, 10).unwrap();
        for n in 1..=10u64 {
            assert_eq!(phi.points[n as usize - 1].value, 1.0 / n as f64);
            let w = phi.witness(&phi.points[n as usize - 1].witness).unwrap();
            assert_eq!(w.members.len() as u64, n);
            let exact = 1.0 - (std::f64::consts::PI / (n + 1) as f64).cos();
            assert!((lam.points[n as usize - 1].value - exact).abs() < 1e-12);
        }
        assert!(cheeger_consistency(&phi, &lam, 1e-12).violations.is_empty());
        let csc = csc_lower(&g.growth(), 2, 1.0, &(1..=5).collect::<Vec<_>>()).unwrap();
        for p in &csc.points {
            assert!(p.value <= phi.upper_at(p.n).unwrap());
        }
    }

    #[test]
    fn square_is_optimal_at_four() {
        let g = graph("z:2", 6);
        let k = Kernel::uniform(4);
        let (phi, _) = profile_exact_small(&g, &k, 6).unwrap();
        let p4 = &phi.points[3];
        assert_eq!(p4.value, 0.5);
        let w = phi.witness("exact-phi:4").unwrap();
        let r: Rational = boundary_ratio(&g, &k, &w.members).unwrap();
        assert_eq!(r, Rational::new(1, 2));
    }

    #[test]
    fn size_cap_and_radius() {
        let g = graph("z:1", 20);
        let k = Kernel::uniform(2);
        assert!(matches!(
            profile_exact_small(&g, &k, 13),
            Err(Error::SizeCap { .. })
        ));
        let small = graph("z:1", 3);
        assert!(matches!(
            profile_exact_small(&small, &k, 5),
            Err(Error::RadiusTooSmall { .. })
        ));
    }

    #[test]
    fn disconnected_unions_decouple() {
        let g = graph("z:2", 10);
        let k = Kernel::uniform(4);
        let (_, lam) = profile_exact_small(&g, &k, 6).unwrap();
        let audit = disconnected_audit(&g, &k, &lam, 6, 20).unwrap();
        assert!(audit.unions_checked > 100);
        assert!(audit.violations.is_empty());
        assert!(audit.max_decoupling_error < 1e-12);
    }
}
