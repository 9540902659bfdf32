//! Upper bounds from explicit witness sets.
//!
//! Every candidate set is scored exactly (integer weight units), so the
//! search heuristics only decide which sets are looked at.

use std::collections::BTreeMap;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::exhaustive::integer_weights;
use super::{dirichlet_gap, Kind, ProfileTable, Quantity, WitnessSet};
use crate::error::{Error, Result};
use crate::group::{BallGraph, CayleyBall, Family, LampState, State, BOUNDARY};
use crate::walk::Kernel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Structured,
    Greedy,
    Anneal,
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "structured" => Ok(Strategy::Structured),
            "greedy" => Ok(Strategy::Greedy),
            "anneal" => Ok(Strategy::Anneal),
            _ => Err(Error::Format(format!("unknown strategy {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpperOptions {
    pub iterations: usize,
    pub restarts: usize,
    pub t0: f64,
    pub cooling: f64,
    pub seed: u64,
    /// Gaps are only computed for witnesses up to this volume.
    pub gap_cap: usize,
}

impl Default for UpperOptions {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            restarts: 8,
            t0: 0.05,
            cooling: 0.995,
            seed: 0,
            gap_cap: 4096,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpperProfiles {
    pub phi: ProfileTable,
    pub lambda: ProfileTable,
}

/// Exact score of a set: Φ numerator in weight units and volume.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Score {
    units: i64,
    volume: usize,
}

impl Score {
    fn less_than(self, other: Score) -> bool {
        (self.units as i128) * (other.volume as i128)
            < (other.units as i128) * (self.volume as i128)
    }
    fn value(self, den: i64) -> f64 {
        self.units as f64 / (den as f64 * self.volume as f64)
    }
}

fn score(graph: &BallGraph, units: &[i64], set: &[u32]) -> Score {
    let mut inside = vec![false; graph.len()];
    set.iter().for_each(|&x| inside[x as usize] = true);
    let mut total = 0;
    for &x in set {
        for (s, &y) in graph.neighbors(x).iter().enumerate() {
            if y == BOUNDARY || !inside[y as usize] {
                total += units[s];
            }
        }
    }
    Score {
        units: total,
        volume: set.len(),
    }
}

/// Family-specific Følner-type sets up to volume `max_n`.
///
/// ℤ^d gets quasi-cubes with sides in `{m, m+1}`; lamplighters get all lamp
/// patterns over a cube of side `L` with the cursor inside it. Sets that
/// leave the ball are skipped.
pub fn structured_candidates(ball: &CayleyBall, max_n: usize) -> Vec<(String, Vec<u32>)> {
    let mut out = Vec::new();
    match ball.group().family() {
        Family::Zd(d) => {
            let d = *d as usize;
            let mut m = 1usize;
            while m.pow(d as u32) <= max_n {
                for big in 0..=d {
                    let sides: Vec<usize> =
                        (0..d).map(|i| if i < big { m + 1 } else { m }).collect();
                    let vol: usize = sides.iter().product();
                    if vol > max_n || (big == d && d > 0) {
                        continue;
                    }
                    if let Some(set) = lattice_box(ball, &sides) {
                        let name = sides
                            .iter()
                            .map(|s| s.to_string())
                            .collect::<Vec<_>>()
                            .join("x");
                        out.push((format!("box:{name}"), set));
                    }
                }
                m += 1;
            }
        }
        Family::Lamplighter { lamps, dim, .. } => {
            let (s, d) = (*lamps as usize, *dim as usize);
            let mut side = 1usize;
            loop {
                let cells = side.pow(d as u32);
                let vol = cells as f64 * (s as f64).powi(cells as i32);
                if vol > max_n as f64 {
                    break;
                }
                match lamp_cube(ball, s as u32, d, side) {
                    Some(set) => out.push((format!("lamp-cube:{side}"), set)),
                    None => break,
                }
                side += 1;
            }
        }
        _ => {}
    }
    out
}

fn cube_points(d: usize, sides: &[usize]) -> Vec<Vec<i64>> {
    let mut pts = vec![Vec::new()];
    for axis in 0..d {
        let off = (sides[axis] / 2) as i64;
        pts = pts
            .into_iter()
            .flat_map(|p| {
                (0..sides[axis] as i64).map(move |x| {
                    let mut q = p.clone();
                    q.push(x - off);
                    q
                })
            })
            .collect();
    }
    pts
}

fn lattice_box(ball: &CayleyBall, sides: &[usize]) -> Option<Vec<u32>> {
    cube_points(sides.len(), sides)
        .into_iter()
        .map(|p| ball.index_of_state(&State::Lattice(p)))
        .collect()
}

fn lamp_cube(ball: &CayleyBall, s: u32, d: usize, side: usize) -> Option<Vec<u32>> {
    let cells = cube_points(d, &vec![side; d]);
    let patterns = (s as u64).checked_pow(cells.len() as u32)?;
    let mut out = Vec::new();
    for code in 0..patterns {
        let mut lamps = BTreeMap::new();
        let mut c = code;
        for cell in &cells {
            let v = (c % s as u64) as u32;
            c /= s as u64;
            if v != 0 {
                lamps.insert(cell.clone(), v);
            }
        }
        for cursor in &cells {
            let x = State::Lamp(LampState {
                cursor: cursor.clone(),
                lamps: lamps.clone(),
            });
            out.push(ball.index_of_state(&x)?);
        }
    }
    Some(out)
}

/// Balls `B(r)` and BFS-order prefixes; available for any graph.
fn generic_candidates(graph: &BallGraph, grid: &[u64]) -> Vec<(String, Vec<u32>)> {
    let mut out = Vec::new();
    for r in 0..=graph.radius() {
        let v = graph.volume(r);
        out.push((format!("ball:{r}"), (0..v as u32).collect()));
    }
    for &n in grid {
        let n = (n as usize).min(graph.len());
        out.push((format!("prefix:{n}"), (0..n as u32).collect()));
    }
    out
}

/// Grow from the identity, always adding the frontier vertex that keeps the
/// numerator smallest (ties to the lowest index). Returns the insertion order.
fn greedy_order(graph: &BallGraph, units: &[i64], n_max: usize) -> Vec<u32> {
    let total: i64 = units.iter().sum();
    let mut inside = vec![false; graph.len()];
    // Weight from each frontier vertex into the set.
    let mut into: BTreeMap<u32, i64> = BTreeMap::new();
    let mut order = vec![0u32];
    inside[0] = true;
    let bump = |into: &mut BTreeMap<u32, i64>, inside: &[bool], v: u32| {
        for (s, &y) in graph.neighbors(v).iter().enumerate() {
            if y != BOUNDARY && !inside[y as usize] {
                *into.entry(y).or_insert(0) += units[s];
            }
        }
    };
    bump(&mut into, &inside, 0);
    while order.len() < n_max.min(graph.len()) {
        // Adding v changes the numerator by total − 2·into(v).
        let Some((&v, _)) = into.iter().min_by_key(|(&v, &w)| (total - 2 * w, v)) else {
            break;
        };
        into.remove(&v);
        inside[v as usize] = true;
        order.push(v);
        bump(&mut into, &inside, v);
    }
    order
}

/// Mutable set with O(1) membership, removal and frontier sampling.
struct SetState<'g> {
    graph: &'g BallGraph,
    units: &'g [i64],
    total: i64,
    members: Vec<u32>,
    /// Position in `members`, `u32::MAX` if absent.
    member_pos: Vec<u32>,
    frontier: Vec<u32>,
    frontier_pos: Vec<u32>,
    /// Number of member neighbours of each vertex.
    touching: Vec<u32>,
    numer: i64,
}

impl<'g> SetState<'g> {
    fn new(graph: &'g BallGraph, units: &'g [i64], init: &[u32]) -> Self {
        let n = graph.len();
        let mut st = Self {
            graph,
            units,
            total: units.iter().sum(),
            members: Vec::new(),
            member_pos: vec![u32::MAX; n],
            frontier: Vec::new(),
            frontier_pos: vec![u32::MAX; n],
            touching: vec![0; n],
            numer: 0,
        };
        for &x in init {
            st.add(x);
        }
        st
    }

    fn contains(&self, v: u32) -> bool {
        self.member_pos[v as usize] != u32::MAX
    }

    fn weight_into(&self, v: u32) -> i64 {
        let mut w = 0;
        for (s, &y) in self.graph.neighbors(v).iter().enumerate() {
            if y != BOUNDARY && self.contains(y) {
                w += self.units[s];
            }
        }
        w
    }

    fn delta_add(&self, v: u32) -> i64 {
        self.total - 2 * self.weight_into(v)
    }

    fn delta_remove(&self, v: u32) -> i64 {
        2 * self.weight_into(v) - self.total
    }

    fn frontier_insert(&mut self, v: u32) {
        if self.frontier_pos[v as usize] == u32::MAX {
            self.frontier_pos[v as usize] = self.frontier.len() as u32;
            self.frontier.push(v);
        }
    }

    fn frontier_remove(&mut self, v: u32) {
        let p = self.frontier_pos[v as usize];
        if p != u32::MAX {
            let last = *self.frontier.last().unwrap();
            self.frontier.swap_remove(p as usize);
            if last != v {
                self.frontier_pos[last as usize] = p;
            }
            self.frontier_pos[v as usize] = u32::MAX;
        }
    }

    fn add(&mut self, v: u32) {
        if self.contains(v) {
            return;
        }
        self.numer += self.delta_add(v);
        self.member_pos[v as usize] = self.members.len() as u32;
        self.members.push(v);
        self.frontier_remove(v);
        for &y in self.graph.neighbors(v) {
            if y != BOUNDARY {
                self.touching[y as usize] += 1;
                if !self.contains(y) {
                    self.frontier_insert(y);
                }
            }
        }
    }

    fn remove(&mut self, v: u32) {
        self.numer += self.delta_remove(v);
        let p = self.member_pos[v as usize];
        let last = *self.members.last().unwrap();
        self.members.swap_remove(p as usize);
        if last != v {
            self.member_pos[last as usize] = p;
        }
        self.member_pos[v as usize] = u32::MAX;
        for &y in self.graph.neighbors(v) {
            if y != BOUNDARY {
                self.touching[y as usize] -= 1;
                if self.touching[y as usize] == 0 {
                    self.frontier_remove(y);
                }
            }
        }
        if self.touching[v as usize] > 0 {
            self.frontier_insert(v);
        }
    }

    fn score(&self) -> Score {
        Score {
            units: self.numer,
            volume: self.members.len(),
        }
    }
}

/// Simulated annealing on sets of volume ≤ n, starting from `init`.
fn anneal(
    graph: &BallGraph,
    units: &[i64],
    den: i64,
    n: usize,
    init: &[u32],
    opts: &UpperOptions,
    stream: u64,
) -> (Score, Vec<u32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut st = SetState::new(graph, units, init);
    let mut best = (st.score(), st.members.clone());
    let mut temp = opts.t0;
    for _ in 0..opts.iterations {
        let old = st.score().value(den);
        let grow = st.members.len() < n
            && !st.frontier.is_empty()
            && (st.members.len() == 1 || rng.gen_bool(0.5));
        if grow {
            let v = st.frontier[rng.gen_range(0..st.frontier.len())];
            let after = Score {
                units: st.numer + st.delta_add(v),
                volume: st.members.len() + 1,
            };
            let d = after.value(den) - old;
            if d <= 0.0 || rng.gen::<f64>() < (-d / temp).exp() {
                st.add(v);
            }
        } else if st.members.len() > 1 {
            let v = st.members[rng.gen_range(0..st.members.len())];
            let after = Score {
                units: st.numer + st.delta_remove(v),
                volume: st.members.len() - 1,
            };
            let d = after.value(den) - old;
            if d <= 0.0 || rng.gen::<f64>() < (-d / temp).exp() {
                st.remove(v);
            }
        }
        if st.score().less_than(best.0) {
            best = (st.score(), st.members.clone());
        }
        temp *= opts.cooling;
    }
    best.1.sort_unstable();
    best
}

/// UPPER Φ and Λ points on `grid`.
///
/// Candidates are balls, BFS prefixes and `extra` (usually from
/// [`structured_candidates`]); `Greedy` adds greedy growth prefixes and
/// `Anneal` additionally anneals from the best candidate at each grid point.
/// Every reported value is recomputed from the adjacency.
pub fn profile_upper(
    graph: &BallGraph,
    kernel: &Kernel,
    grid: &[u64],
    strategy: Strategy,
    opts: &UpperOptions,
    extra: &[(String, Vec<u32>)],
) -> Result<UpperProfiles> {
    kernel.check_symmetric(graph.inverse())?;
    let (units, den) = integer_weights(kernel);
    let mut grid: Vec<u64> = grid.iter().copied().filter(|&n| n >= 1).collect();
    grid.sort_unstable();
    grid.dedup();
    let max_n = grid.last().copied().unwrap_or(1) as usize;

    let mut pool: Vec<(String, Vec<u32>)> = generic_candidates(graph, &grid);
    pool.extend(
        extra
            .iter()
            .filter(|(_, s)| !s.is_empty() && s.len() <= max_n)
            .cloned(),
    );
    if strategy >= Strategy::Greedy {
        let order = greedy_order(graph, &units, max_n);
        for &n in &grid {
            let n = (n as usize).min(order.len());
            pool.push((format!("greedy:{n}"), order[..n].to_vec()));
        }
    }
    for (_, s) in pool.iter_mut() {
        s.sort_unstable();
        s.dedup();
    }
    let scores: Vec<Score> = pool
        .par_iter()
        .map(|(_, s)| score(graph, &units, s))
        .collect();

    let best_at = |pool: &[(String, Vec<u32>)], scores: &[Score], n: usize| -> Option<usize> {
        let mut best: Option<usize> = None;
        for i in 0..pool.len() {
            if scores[i].volume > n {
                continue;
            }
            if best.map_or(true, |b| scores[i].less_than(scores[b])) {
                best = Some(i);
            }
        }
        best
    };

    let mut pool = pool;
    let mut scores = scores;
    if strategy == Strategy::Anneal {
        let annealed: Vec<(String, Vec<u32>)> = grid
            .par_iter()
            .map(|&n| {
                let n = n as usize;
                let start = best_at(&pool, &scores, n)
                    .map(|i| pool[i].1.clone())
                    .unwrap_or_else(|| vec![0]);
                let mut best: Option<(Score, Vec<u32>)> = None;
                for r in 0..opts.restarts {
                    let init: &[u32] = if r % 2 == 0 { &start } else { &[0] };
                    let cand = anneal(
                        graph,
                        &units,
                        den,
                        n,
                        init,
                        opts,
                        (n as u64) << 8 | r as u64,
                    );
                    if best.as_ref().map_or(true, |b| cand.0.less_than(b.0)) {
                        best = Some(cand);
                    }
                }
                (format!("anneal:{n}"), best.unwrap().1)
            })
            .collect();
        for (id, set) in annealed {
            scores.push(score(graph, &units, &set));
            pool.push((id, set));
        }
    }

    let mut phi = ProfileTable::new(Quantity::Phi);
    let mut lam = ProfileTable::new(Quantity::Lambda);
    let mut used: BTreeMap<usize, ()> = BTreeMap::new();
    for &n in &grid {
        if let Some(i) = best_at(&pool, &scores, n as usize) {
            used.insert(i, ());
            phi.push(n, scores[i].value(den), Kind::Upper, pool[i].0.clone());
        }
    }
    for &i in used.keys() {
        phi.witnesses.push(WitnessSet::new(
            graph,
            kernel,
            pool[i].0.clone(),
            pool[i].1.clone(),
        )?);
    }
    // Re-derive each value from the stored witness.
    for p in phi.points.iter_mut() {
        p.value = phi
            .witnesses
            .iter()
            .find(|w| w.id == p.witness)
            .unwrap()
            .boundary_ratio;
    }

    let interior = |s: &[u32]| {
        s.iter()
            .all(|&x| graph.radii()[x as usize] < graph.radius())
    };
    let gaps: Vec<Option<f64>> = pool
        .par_iter()
        .map(|(_, s)| {
            if s.len() > opts.gap_cap || !interior(s) {
                return None;
            }
            dirichlet_gap::<f64>(graph, kernel, s).ok().map(|g| g.value)
        })
        .collect();
    let mut used_gap: BTreeMap<usize, ()> = BTreeMap::new();
    for &n in &grid {
        let best = (0..pool.len())
            .filter(|&i| scores[i].volume <= n as usize && gaps[i].is_some())
            .min_by(|&a, &b| {
                gaps[a]
                    .unwrap()
                    .partial_cmp(&gaps[b].unwrap())
                    .unwrap()
                    .then(a.cmp(&b))
            });
        if let Some(i) = best {
            used_gap.insert(i, ());
            lam.push(n, gaps[i].unwrap(), Kind::Upper, pool[i].0.clone());
        }
    }
    for &i in used_gap.keys() {
        let mut w = WitnessSet::new(graph, kernel, pool[i].0.clone(), pool[i].1.clone())?;
        w.gap = gaps[i];
        lam.witnesses.push(w);
    }
    Ok(UpperProfiles { phi, lambda: lam })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{enumerate_ball, BallOptions, GroupSpec};
    use crate::profiles::profile_exact_small;

    fn ball(name: &str, r: u32) -> CayleyBall {
        enumerate_ball(
            &name.parse::<GroupSpec>().unwrap(),
            r,
            BallOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn structured_boxes_on_the_plane() {
        let b = ball("z:2", 40);
        let k = Kernel::uniform(4);
        let cands = structured_candidates(&b, 900);
        assert!(cands
            .iter()
            .any(|(id, s)| id == "box:30x30" && s.len() == 900));
        let up = profile_upper(
            &b,
            &k,
            &[100, 400, 900],
            Strategy::Structured,
            &UpperOptions::default(),
            &cands,
        )
        .unwrap();
        assert_eq!(up.phi.upper_at(900), Some(1.0 / 30.0));
        assert_eq!(up.phi.upper_at(100), Some(0.1));
        let lam = up.lambda.upper_at(100).unwrap();
        assert!((lam - (1.0 - (std::f64::consts::PI / 11.0).cos())).abs() < 1e-10);
    }

    #[test]
    fn lamp_cubes_on_the_lamplighter() {
        let b = ball("lamplighter:2:1", 16);
        let k = Kernel::uniform(3);
        let cands = structured_candidates(&b, 200);
        for (id, set) in &cands {
            let side: usize = id.trim_start_matches("lamp-cube:").parse().unwrap();
            assert_eq!(set.len(), side << side);
            let r: crate::Rational = crate::profiles::boundary_ratio(&b, &k, set).unwrap();
            assert_eq!(r, crate::Rational::new(2, 3 * side as i64));
        }
        assert!(cands.len() >= 4);
    }

    #[test]
    fn heuristics_never_beat_exhaustion() {
        for (name, deg, r) in [("z:2", 4, 12u32), ("lamplighter:2:1", 3, 12)] {
            let b = ball(name, r);
            let k = Kernel::uniform(deg);
            let (phi, _) = profile_exact_small(&b, &k, 8).unwrap();
            let grid: Vec<u64> = (1..=8).collect();
            let opts = UpperOptions {
                iterations: 2000,
                restarts: 4,
                ..Default::default()
            };
            let up = profile_upper(
                &b,
                &k,
                &grid,
                Strategy::Anneal,
                &opts,
                &structured_candidates(&b, 8),
            )
            .unwrap();
            for p in &up.phi.points {
                assert!(
                    p.value >= phi.upper_at(p.n).unwrap() - 1e-15,
                    "{name} n={}",
                    p.n
                );
                let w = up.phi.witness(&p.witness).unwrap();
                assert!(w.members.len() as u64 <= p.n);
            }
            assert!(up.phi.recertify(&b, &k, 1e-12).unwrap().is_empty());
        }
    }

    #[test]
    fn anneal_is_deterministic_and_finds_squares() {
        let b = ball("z:2", 20);
        let k = Kernel::uniform(4);
        let opts = UpperOptions {
            iterations: 4000,
            ..Default::default()
        };
        let a = profile_upper(&b, &k, &[16, 36], Strategy::Anneal, &opts, &[]).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap();
        let c = pool
            .install(|| profile_upper(&b, &k, &[16, 36], Strategy::Anneal, &opts, &[]).unwrap());
        assert_eq!(a, c);
        assert!(a.phi.upper_at(16).unwrap() <= 0.25 + 1e-12);
    }

    #[test]
    fn greedy_grows_connected_sets() {
        let b = ball("z:1", 30);
        let k = Kernel::uniform(2);
        let up = profile_upper(
            &b,
            &k,
            &[5, 10, 20],
            Strategy::Greedy,
            &UpperOptions::default(),
            &[],
        )
        .unwrap();
        assert_eq!(up.phi.upper_at(20), Some(0.05));
    }
}
