//! Truncated evolution of random walks on Cayley balls.
//!
//! The walk is killed when it leaves the ball. Killed mass is tracked per
//! step, so every probability of an event inside the ball comes with a
//! rigorous enclosure `[killed, killed + leaked]`.

mod lamplighter;
mod monte_carlo;

use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{BallGraph, BOUNDARY};
use crate::scalar::{CompensatedSum, Interval, Real, Scalar};
use crate::Rational;

pub use lamplighter::{lamplighter_range_brute, lamplighter_range_dp, RANGE_DP_CAP};
pub use monte_carlo::{monte_carlo_small_ball, wilson_interval, McEstimate, WILSON_Z95};

const CHUNK: usize = 1 << 13;

/// Step distribution: weight per generator plus holding mass.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Kernel {
    weights: Vec<Rational>,
    hold: Rational,
}

impl Kernel {
    pub fn new(weights: Vec<Rational>, hold: Rational) -> Result<Self> {
        if hold < Rational::zero() || weights.iter().any(|w| *w < Rational::zero()) {
            return Err(Error::InvalidKernel("negative weight".into()));
        }
        let total = weights.iter().fold(hold, |acc, w| acc + w);
        if total != Rational::one() {
            return Err(Error::InvalidKernel(format!(
                "weights sum to {total}, not 1"
            )));
        }
        Ok(Self { weights, hold })
    }

    /// Simple random walk: `1/|S|` on every generator.
    pub fn uniform(degree: usize) -> Self {
        Self {
            weights: vec![Rational::new(1, degree as i64); degree],
            hold: Rational::zero(),
        }
    }

    /// Lazy simple random walk with holding probability `hold`.
    pub fn lazy(degree: usize, hold: Rational) -> Result<Self> {
        let w = (Rational::one() - hold) / Rational::from_integer(degree as i64);
        Self::new(vec![w; degree], hold)
    }

    pub fn degree(&self) -> usize {
        self.weights.len()
    }
    pub fn weights(&self) -> &[Rational] {
        &self.weights
    }
    pub fn hold(&self) -> Rational {
        self.hold
    }

    /// Checks `μ(s) = μ(s⁻¹)` for the given inverse pairing.
    pub fn check_symmetric(&self, inverse: &[usize]) -> Result<()> {
        if inverse.len() != self.weights.len() {
            return Err(Error::InvalidKernel(format!(
                "kernel has {} weights, generating set has {}",
                self.weights.len(),
                inverse.len()
            )));
        }
        for (s, &t) in inverse.iter().enumerate() {
            if self.weights[s] != self.weights[t] {
                return Err(Error::InvalidKernel(format!(
                    "weight of generator {s} differs from its inverse {t}"
                )));
            }
        }
        Ok(())
    }

    pub fn weights_as<S: Scalar>(&self) -> Vec<S> {
        self.weights.iter().map(S::from_rational).collect()
    }
}

/// Parse `"3/8"`, `"0.25"`-free exact strings, or integers.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    let bad = || Error::InvalidKernel(format!("cannot parse weight {s:?}"));
    match s.split_once('/') {
        Some((n, d)) => {
            let n: i64 = n.trim().parse().map_err(|_| bad())?;
            let d: i64 = d.trim().parse().map_err(|_| bad())?;
            if d == 0 {
                return Err(bad());
            }
            Ok(Rational::new(n, d))
        }
        None => Ok(Rational::from_integer(s.parse().map_err(|_| bad())?)),
    }
}

/// Killed distribution after `step` steps.
#[derive(Clone, Debug)]
pub struct WalkDistribution<S> {
    pub step: usize,
    /// Mass on indices below the killing limit.
    pub p: Vec<S>,
    pub leaked: S,
    /// `leak_history[j]` is the mass killed during step `j + 1`.
    pub leak_history: Vec<S>,
}

impl<S: Real> WalkDistribution<S> {
    pub fn total_mass(&self) -> S {
        chunked_sum(&self.p)
    }

    /// Killed mass on the first `volume` indices.
    pub fn prefix_mass(&self, volume: usize) -> S {
        chunked_sum(&self.p[..volume.min(self.p.len())])
    }

    /// Enclosure that also uses when mass was killed: mass killed at step
    /// `j` sits at distance `R + 1` and cannot be back within radius `r`
    /// before `R + 1 − r` further steps.
    pub fn refined_interval(&self, graph: &BallGraph, r: u32) -> Interval<S> {
        let lo = self.prefix_mass(graph.volume(r));
        let gap = (graph.radius() + 1 - r) as usize;
        let mut late = CompensatedSum::new();
        for (j, &m) in self.leak_history.iter().enumerate() {
            if self.step - (j + 1) >= gap {
                late.add(m);
            }
        }
        Interval::new(lo, (lo + late.value()).min(S::one()))
    }
}

fn chunked_sum<S: Real>(xs: &[S]) -> S {
    let partials: Vec<S> = xs
        .par_chunks(CHUNK)
        .map(|c| {
            let mut acc = CompensatedSum::new();
            c.iter().for_each(|&x| acc.add(x));
            acc.value()
        })
        .collect();
    let mut acc = CompensatedSum::new();
    partials.into_iter().for_each(|x| acc.add(x));
    acc.value()
}

/// Step-by-step evolution of the killed walk.
///
/// Vertices with index `≥ limit` (and anything beyond the ball) are killing.
/// Because indices are in BFS order, `limit = Gr(r)` kills on leaving the
/// radius-`r` ball.
pub struct Evolver<'a, S: Real> {
    graph: &'a BallGraph,
    limit: usize,
    limit_radius: u32,
    weights: Vec<S>,
    hold: S,
    exits: Vec<(u32, S)>,
    dist: WalkDistribution<S>,
    next: Vec<S>,
}

impl<'a, S: Real> Evolver<'a, S> {
    pub fn new(graph: &'a BallGraph, kernel: &Kernel) -> Result<Self> {
        Self::with_radius(graph, kernel, graph.radius())
    }

    /// Kill on leaving the ball of radius `r ≤ R`.
    pub fn with_radius(graph: &'a BallGraph, kernel: &Kernel, r: u32) -> Result<Self> {
        if r > graph.radius() {
            return Err(Error::RadiusTooSmall {
                requested: r,
                available: graph.radius(),
            });
        }
        if kernel.degree() != graph.degree() {
            return Err(Error::InvalidKernel(format!(
                "kernel has {} weights, ball has degree {}",
                kernel.degree(),
                graph.degree()
            )));
        }
        kernel.check_symmetric(graph.inverse())?;
        let limit = graph.volume(r);
        let weights: Vec<S> = kernel.weights_as();
        let hold = S::from_rational(&kernel.hold());
        let start = if r == 0 { 0 } else { graph.volume(r - 1) };
        let mut exits = Vec::new();
        for i in start..limit {
            let mut e = S::zero();
            for (s, &j) in graph.neighbors(i as u32).iter().enumerate() {
                if j == BOUNDARY || j as usize >= limit {
                    e = e + weights[s];
                }
            }
            if e > S::zero() {
                exits.push((i as u32, e));
            }
        }
        let mut p = vec![S::zero(); limit];
        p[0] = S::one();
        Ok(Self {
            graph,
            limit,
            limit_radius: r,
            weights,
            hold,
            exits,
            dist: WalkDistribution {
                step: 0,
                p,
                leaked: S::zero(),
                leak_history: Vec::new(),
            },
            next: vec![S::zero(); limit],
        })
    }

    pub fn distribution(&self) -> &WalkDistribution<S> {
        &self.dist
    }

    pub fn into_distribution(self) -> WalkDistribution<S> {
        self.dist
    }

    pub fn step(&mut self) {
        let t = self.dist.step as u32;
        let src_active = self.graph.volume(t.min(self.limit_radius));
        let dst_active = self.graph.volume((t + 1).min(self.limit_radius));
        let leak = {
            let p = &self.dist.p;
            let mut acc = CompensatedSum::new();
            for &(i, e) in &self.exits {
                if (i as usize) < src_active {
                    acc.add(p[i as usize] * e);
                }
            }
            acc.value()
        };
        let graph = self.graph;
        let limit = self.limit;
        let weights = &self.weights;
        let hold = self.hold;
        let p = &self.dist.p;
        let degree = graph.degree();
        let adj = graph.adjacency();
        self.next[..dst_active]
            .par_chunks_mut(CHUNK)
            .enumerate()
            .for_each(|(c, out)| {
                let base = c * CHUNK;
                for (off, slot) in out.iter_mut().enumerate() {
                    let y = base + off;
                    let mut acc = if hold > S::zero() {
                        hold * p[y]
                    } else {
                        S::zero()
                    };
                    let row = &adj[y * degree..(y + 1) * degree];
                    for (s, &x) in row.iter().enumerate() {
                        // μ symmetric, so mass arriving through s comes from y·s
                        if (x as usize) < limit {
                            acc = acc + weights[s] * p[x as usize];
                        }
                    }
                    *slot = acc;
                }
            });
        std::mem::swap(&mut self.dist.p, &mut self.next);
        self.dist.step += 1;
        self.dist.leaked = self.dist.leaked + leak;
        self.dist.leak_history.push(leak);
    }

    pub fn run(&mut self, k: usize) {
        while self.dist.step < k {
            self.step();
        }
    }
}

/// Killed distribution after `k` steps from the identity.
pub fn evolve<S: Real>(
    graph: &BallGraph,
    kernel: &Kernel,
    k: usize,
) -> Result<WalkDistribution<S>> {
    let mut ev = Evolver::new(graph, kernel)?;
    ev.run(k);
    Ok(ev.into_distribution())
}

/// Enclosure of `P(d(X₀, X_k) ≤ r)`: `[killed mass within r, + leaked]`.
pub fn small_ball_probability<S: Real>(
    graph: &BallGraph,
    kernel: &Kernel,
    k: usize,
    r: u32,
) -> Result<Interval<S>> {
    if r > graph.radius() {
        return Err(Error::RadiusTooSmall {
            requested: r,
            available: graph.radius(),
        });
    }
    let d = evolve::<S>(graph, kernel, k)?;
    Ok(small_ball_from(&d, graph, r))
}

pub fn small_ball_from<S: Real>(d: &WalkDistribution<S>, graph: &BallGraph, r: u32) -> Interval<S> {
    let lo = d.prefix_mass(graph.volume(r));
    Interval::new(lo, lo + d.leaked)
}

/// Enclosure of `P^k(o, o)`.
pub fn return_probability<S: Real>(
    graph: &BallGraph,
    kernel: &Kernel,
    k: usize,
) -> Result<Interval<S>> {
    small_ball_probability(graph, kernel, k, 0)
}

/// Probability that the walk stays within distance `r` through step `k`.
pub fn exit_time_tail<S: Real>(graph: &BallGraph, kernel: &Kernel, r: u32, k: usize) -> Result<S> {
    let mut ev = Evolver::<S>::with_radius(graph, kernel, r)?;
    ev.run(k);
    Ok(ev.distribution().total_mass())
}

/// Killed-walk survival for every step `0..=k`.
pub fn exit_time_series<S: Real>(
    graph: &BallGraph,
    kernel: &Kernel,
    r: u32,
    k: usize,
) -> Result<Vec<S>> {
    let mut ev = Evolver::<S>::with_radius(graph, kernel, r)?;
    let mut out = vec![S::one()];
    for _ in 0..k {
        ev.step();
        out.push(ev.distribution().total_mass());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{enumerate_ball, BallOptions, GroupSpec};

    fn graph(name: &str, r: u32) -> BallGraph {
        enumerate_ball(
            &name.parse::<GroupSpec>().unwrap(),
            r,
            BallOptions::default(),
        )
        .unwrap()
        .into_graph()
    }

    fn binom(n: u64, k: u64) -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    }

    #[test]
    fn kernel_validation() {
        assert!(Kernel::new(vec![Rational::new(1, 2); 2], Rational::new(1, 2)).is_err());
        let k = Kernel::new(
            vec![Rational::new(1, 2), Rational::new(1, 4)],
            Rational::new(1, 4),
        )
        .unwrap();
        assert!(k.check_symmetric(&[1, 0]).is_err());
        assert!(k.check_symmetric(&[0, 1]).is_ok());
        assert_eq!(parse_rational("3/8").unwrap(), Rational::new(3, 8));
        assert!(parse_rational("x").is_err());
    }

    #[test]
    fn zero_steps_is_point_mass() {
        let g = graph("z:2", 3);
        let d = evolve::<f64>(&g, &Kernel::uniform(4), 0).unwrap();
        assert_eq!(d.p[0], 1.0);
        assert_eq!(d.leaked, 0.0);
    }

    #[test]
    fn line_binomial_values() {
        let g = graph("z:1", 40);
        let k = Kernel::uniform(2);
        let d = evolve::<f64>(&g, &k, 2).unwrap();
        assert!((d.p[0] - 0.5).abs() < 1e-15);
        let sb = small_ball_probability::<f64>(&g, &k, 2, 0).unwrap();
        assert_eq!((sb.lo, sb.hi), (0.5, 0.5));
        for n in [1u64, 5, 10, 19] {
            let rp = return_probability::<f64>(&g, &k, 2 * n as usize).unwrap();
            let exact = binom(2 * n, n) / 4f64.powi(n as i32);
            assert!((rp.lo - exact).abs() < 1e-14 * exact.max(1e-300), "n={n}");
            let odd = return_probability::<f64>(&g, &k, 2 * n as usize + 1).unwrap();
            assert_eq!(odd.lo, 0.0);
        }
    }

    #[test]
    fn plane_two_steps() {
        // Exhaustive: 16 two-step paths, 4 of which return.
        let g = graph("z:2", 3);
        let rp = return_probability::<f64>(&g, &Kernel::uniform(4), 2).unwrap();
        assert!((rp.lo - 0.25).abs() < 1e-15);
    }

    #[test]
    fn mass_is_conserved_and_leak_monotone() {
        for name in ["z:2", "lamplighter:2:1", "grigorchuk"] {
            let g = graph(name, 5);
            let kern = Kernel::uniform(g.degree());
            let mut ev = Evolver::<f64>::new(&g, &kern).unwrap();
            let mut last = 0.0;
            for _ in 0..20 {
                ev.step();
                let d = ev.distribution();
                assert!((d.total_mass() + d.leaked - 1.0).abs() < 1e-12);
                assert!(d.leaked >= last);
                last = d.leaked;
            }
        }
    }

    #[test]
    fn smaller_ball_leaks_more() {
        let kern = Kernel::uniform(4);
        for k in [3usize, 6, 9] {
            let big = evolve::<f64>(&graph("z:2", k as u32), &kern, k).unwrap();
            let small = evolve::<f64>(&graph("z:2", k as u32 - 1), &kern, k).unwrap();
            assert!(small.leaked >= big.leaked);
            assert_eq!(big.leaked, 0.0);
        }
    }

    #[test]
    fn speed_bound_gives_certainty() {
        let g = graph("lamplighter:2:1", 6);
        let kern = Kernel::uniform(3);
        for k in 0..=6 {
            let sb = small_ball_probability::<f64>(&g, &kern, k, k as u32).unwrap();
            assert!((sb.lo - 1.0).abs() < 1e-12 && (sb.hi - 1.0).abs() < 1e-12);
        }
        assert!(matches!(
            small_ball_probability::<f64>(&g, &kern, 3, 7),
            Err(Error::RadiusTooSmall { .. })
        ));
    }

    #[test]
    fn small_ball_monotone_in_radius_and_width_is_leak() {
        let g = graph("lamplighter:2:1", 7);
        let kern = Kernel::uniform(3);
        let d = evolve::<f64>(&g, &kern, 12).unwrap();
        let mut last = 0.0;
        for r in 0..=7 {
            let iv = small_ball_from(&d, &g, r);
            assert!(iv.lo >= last);
            assert!((iv.width() - d.leaked).abs() < 1e-15);
            let refined = d.refined_interval(&g, r);
            assert!(refined.lo == iv.lo && refined.hi <= iv.hi + 1e-15);
            last = iv.lo;
        }
    }

    #[test]
    fn refined_interval_contains_truth() {
        let kern = Kernel::uniform(3);
        let truth = evolve::<f64>(&graph("lamplighter:2:1", 14), &kern, 14).unwrap();
        let g = graph("lamplighter:2:1", 6);
        let d = evolve::<f64>(&g, &kern, 14).unwrap();
        let big = graph("lamplighter:2:1", 14);
        for r in 0..=6 {
            let exact = truth.prefix_mass(big.volume(r));
            let iv = d.refined_interval(&g, r);
            assert!(iv.lo <= exact + 1e-14 && exact <= iv.hi + 1e-14, "r={r}");
        }
    }

    #[test]
    fn symmetric_walk_is_inverse_invariant() {
        let b = enumerate_ball(
            &"lamplighter:2:1".parse().unwrap(),
            8,
            BallOptions::default(),
        )
        .unwrap();
        let d = evolve::<f64>(b.graph(), &Kernel::uniform(3), 8).unwrap();
        for i in 0..b.len() as u32 {
            let x = b.state_of(i);
            let j = b.index_of_state(&b.group().inv(&x)).unwrap();
            assert!((d.p[i as usize] - d.p[j as usize]).abs() < 1e-15);
        }
    }

    #[test]
    fn cauchy_schwarz_relation() {
        let g = graph("z:2", 24);
        let kern = Kernel::uniform(4);
        let mut ev = Evolver::<f64>::new(&g, &kern).unwrap();
        let mut sb = Vec::new();
        let mut ret = Vec::new();
        for _ in 0..=24 {
            sb.push(
                (0..=6)
                    .map(|r| small_ball_from(ev.distribution(), &g, r).lo)
                    .collect::<Vec<_>>(),
            );
            ret.push(ev.distribution().p[0]);
            ev.step();
        }
        for k in 0..=12 {
            for r in 0..=6u32 {
                let lhs = ret[2 * k];
                let rhs = sb[k][r as usize].powi(2) / g.volume(r) as f64;
                assert!(lhs >= rhs - 1e-15, "k={k} r={r}");
            }
        }
    }

    #[test]
    fn exit_time_small_cases() {
        let g = graph("z:1", 10);
        let kern = Kernel::uniform(2);
        assert_eq!(exit_time_tail::<f64>(&g, &kern, 1, 0).unwrap(), 1.0);
        assert!((exit_time_tail::<f64>(&g, &kern, 1, 2).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(
            exit_time_tail::<f64>(&g, &kern, 11, 2),
            Err(Error::RadiusTooSmall { .. })
        ));
    }

    #[test]
    fn exit_time_rate_matches_killed_eigenvalue() {
        let g = graph("z:1", 8);
        let kern = Kernel::uniform(2);
        let s = exit_time_series::<f64>(&g, &kern, 8, 4000).unwrap();
        let lam = (std::f64::consts::PI / 18.0).cos();
        // Ratio of survivals two steps apart converges to λ² (period-2 walk).
        let ratio = s[4000] / s[3998];
        assert!((ratio - lam * lam).abs() < 1e-10);
    }

    #[test]
    fn f32_matches_f64() {
        let g = graph("z:2", 10);
        let kern = Kernel::uniform(4);
        let a = return_probability::<f32>(&g, &kern, 10).unwrap();
        let b = return_probability::<f64>(&g, &kern, 10).unwrap();
        assert!((a.lo as f64 - b.lo).abs() < 1e-6);
    }
}
