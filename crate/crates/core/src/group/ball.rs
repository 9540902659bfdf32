//! BFS enumeration of Cayley balls.

use std::collections::HashMap;

use rayon::prelude::*;

use super::{Element, GroupSpec, State};
use crate::error::{Error, Result};

/// Adjacency entry for a neighbor outside the ball.
pub const BOUNDARY: u32 = u32::MAX;

const DEFAULT_MEMORY_CAP: u64 = 2 << 30;
const EXPAND_CHUNK: usize = 4096;

#[derive(Clone, Copy, Debug)]
pub struct BallOptions {
    pub memory_cap: u64,
}

impl Default for BallOptions {
    fn default() -> Self {
        Self {
            memory_cap: DEFAULT_MEMORY_CAP,
        }
    }
}

/// The index structure of a ball: what the numerics need, and what a ball
/// segment file stores.
#[derive(Clone, Debug, PartialEq)]
pub struct BallGraph {
    radius: u32,
    degree: usize,
    /// Row-major `N × degree`; entry is the index of `x · s` or [`BOUNDARY`].
    adjacency: Vec<u32>,
    radii: Vec<u32>,
    /// `level_end[r]` = number of vertices at radius ≤ r, i.e. Gr(r).
    level_end: Vec<usize>,
    inverse: Vec<usize>,
}

impl BallGraph {
    pub(crate) fn from_parts(
        radius: u32,
        degree: usize,
        adjacency: Vec<u32>,
        radii: Vec<u32>,
        inverse: Option<Vec<usize>>,
    ) -> Result<Self> {
        let n = radii.len();
        if adjacency.len() != n * degree {
            return Err(Error::Format(
                "adjacency length does not match N·|S|".into(),
            ));
        }
        if n == 0 || radii[0] != 0 {
            return Err(Error::Format("index 0 must be the identity".into()));
        }
        let mut level_end = vec![0usize; radius as usize + 1];
        for (i, w) in radii.windows(2).enumerate() {
            if w[1] < w[0] || w[1] > w[0] + 1 {
                return Err(Error::Format(format!(
                    "radii not in BFS order at index {}",
                    i + 1
                )));
            }
        }
        if *radii.last().unwrap() > radius {
            return Err(Error::Format("radius array exceeds declared radius".into()));
        }
        for &r in &radii {
            level_end[r as usize] += 1;
        }
        for r in 1..level_end.len() {
            level_end[r] += level_end[r - 1];
        }
        if adjacency.iter().any(|&a| a != BOUNDARY && a as usize >= n) {
            return Err(Error::Format("adjacency entry out of range".into()));
        }
        let inverse = match inverse {
            Some(inv) => inv,
            None => infer_inverse(&adjacency, degree),
        };
        Ok(Self {
            radius,
            degree,
            adjacency,
            radii,
            level_end,
            inverse,
        })
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }
    pub fn len(&self) -> usize {
        self.radii.len()
    }
    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }
    pub fn degree(&self) -> usize {
        self.degree
    }
    pub fn adjacency(&self) -> &[u32] {
        &self.adjacency
    }
    pub fn radii(&self) -> &[u32] {
        &self.radii
    }
    /// Inverse generator id for each generator id.
    pub fn inverse(&self) -> &[usize] {
        &self.inverse
    }

    #[inline]
    pub fn neighbor(&self, i: u32, s: usize) -> u32 {
        self.adjacency[i as usize * self.degree + s]
    }

    #[inline]
    pub fn neighbors(&self, i: u32) -> &[u32] {
        let d = self.degree;
        &self.adjacency[i as usize * d..(i as usize + 1) * d]
    }

    /// Gr(r): number of vertices at distance ≤ r.
    pub fn volume(&self, r: u32) -> usize {
        self.level_end[r.min(self.radius) as usize]
    }

    /// Growth table Gr(0), …, Gr(R).
    pub fn growth(&self) -> Vec<u64> {
        self.level_end.iter().map(|&x| x as u64).collect()
    }

    /// Geodesic word from the identity to vertex `i`.
    pub fn geodesic(&self, mut i: u32) -> Vec<usize> {
        let mut back = Vec::new();
        while self.radii[i as usize] > 0 {
            let r = self.radii[i as usize];
            let (s, j) = self
                .neighbors(i)
                .iter()
                .enumerate()
                .find(|(_, &j)| j != BOUNDARY && self.radii[j as usize] + 1 == r)
                .map(|(s, &j)| (s, j))
                .expect("every non-identity vertex has a parent");
            // i · s = j, so j · s⁻¹ = i
            back.push(self.inverse[s]);
            i = j;
        }
        back.reverse();
        back
    }

    /// BFS distances recomputed from the adjacency alone.
    pub fn bfs_distances(&self) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.len()];
        let mut queue = std::collections::VecDeque::from([0u32]);
        dist[0] = 0;
        while let Some(i) = queue.pop_front() {
            for &j in self.neighbors(i) {
                if j != BOUNDARY && dist[j as usize] == u32::MAX {
                    dist[j as usize] = dist[i as usize] + 1;
                    queue.push_back(j);
                }
            }
        }
        dist
    }
}

fn infer_inverse(adjacency: &[u32], degree: usize) -> Vec<usize> {
    (0..degree)
        .map(|s| {
            let j = adjacency.get(s).copied().unwrap_or(BOUNDARY);
            if j == BOUNDARY {
                return s;
            }
            (0..degree)
                .find(|&t| adjacency[j as usize * degree + t] == 0)
                .unwrap_or(s)
        })
        .collect()
}

/// A Cayley ball together with the group and the canonical keys.
#[derive(Clone, Debug)]
pub struct CayleyBall {
    group: GroupSpec,
    graph: BallGraph,
    keys: Vec<Element>,
    index: HashMap<Element, u32>,
}

impl std::ops::Deref for CayleyBall {
    type Target = BallGraph;
    fn deref(&self) -> &BallGraph {
        &self.graph
    }
}

impl CayleyBall {
    pub fn group(&self) -> &GroupSpec {
        &self.group
    }
    pub fn graph(&self) -> &BallGraph {
        &self.graph
    }
    pub fn key_of(&self, i: u32) -> &Element {
        &self.keys[i as usize]
    }
    pub fn index_of(&self, key: &Element) -> Option<u32> {
        self.index.get(key).copied()
    }
    pub fn index_of_state(&self, x: &State) -> Option<u32> {
        self.index_of(&self.group.key(x))
    }
    /// A state representing vertex `i`, rebuilt along a geodesic.
    pub fn state_of(&self, i: u32) -> State {
        self.group
            .evaluate(&self.graph.geodesic(i))
            .expect("geodesic uses valid generators")
    }
    pub fn into_graph(self) -> BallGraph {
        self.graph
    }
}

fn bytes_per_vertex(degree: usize, key_len: usize) -> u64 {
    // adjacency + radius + key stored twice (vector and map) + map overhead
    (4 * degree + 4 + 2 * (16 + key_len) + 16) as u64
}

/// Enumerate the ball of radius `radius` around the identity.
///
/// Vertices are numbered level by level; inside a level they are sorted by
/// canonical key, so the numbering does not depend on the thread schedule.
pub fn enumerate_ball(group: &GroupSpec, radius: u32, opts: BallOptions) -> Result<CayleyBall> {
    let degree = group.degree();
    let mut keys: Vec<Element> = vec![Element::identity()];
    let mut index: HashMap<Element, u32> = HashMap::from([(Element::identity(), 0)]);
    let mut radii: Vec<u32> = vec![0];
    let mut adjacency: Vec<u32> = vec![BOUNDARY; degree];
    let mut frontier: Vec<State> = vec![group.identity()];
    let mut frontier_start = 0usize;
    let mut prev_level = 1usize;
    let mut total_key_bytes = 0usize;

    for r in 0..radius {
        let level = frontier.len();
        let ratio = if r == 0 {
            degree as f64
        } else {
            level as f64 / prev_level as f64
        };
        let predicted = keys.len() as f64 + level as f64 * ratio.max(1.0);
        let avg_key = total_key_bytes / keys.len().max(1) + 8;
        let bytes = (predicted * bytes_per_vertex(degree, avg_key) as f64) as u64;
        if bytes > opts.memory_cap {
            return Err(Error::MemoryCap {
                predicted: predicted as u64,
                bytes,
                cap: opts.memory_cap,
            });
        }

        let expanded: Vec<Vec<(Element, State)>> = frontier
            .par_chunks(EXPAND_CHUNK)
            .map(|chunk| {
                let mut out = Vec::with_capacity(chunk.len() * degree);
                for x in chunk {
                    for s in 0..degree {
                        let y = group.apply(x, s);
                        out.push((group.key(&y), y));
                    }
                }
                out
            })
            .collect();

        let mut candidates: Vec<(Element, State)> = Vec::new();
        let mut candidate_pos: HashMap<Element, usize> = HashMap::new();
        let mut pending: Vec<(usize, usize)> = Vec::new();
        let mut flat = expanded.into_iter().flatten();
        for local in 0..level {
            let i = frontier_start + local;
            for s in 0..degree {
                let (key, state) = flat.next().expect("one entry per (vertex, generator)");
                if let Some(&j) = index.get(&key) {
                    adjacency[i * degree + s] = j;
                } else {
                    let pos = *candidate_pos.entry(key.clone()).or_insert_with(|| {
                        candidates.push((key, state));
                        candidates.len() - 1
                    });
                    pending.push((i * degree + s, pos));
                }
            }
        }
        drop(candidate_pos);

        let mut order: Vec<usize> = (0..candidates.len()).collect();
        order.sort_by(|&a, &b| candidates[a].0.cmp(&candidates[b].0));
        let base = keys.len();
        let mut new_index = vec![0u32; candidates.len()];
        for (rank, &pos) in order.iter().enumerate() {
            new_index[pos] = (base + rank) as u32;
        }
        for (slot, pos) in pending {
            adjacency[slot] = new_index[pos];
        }
        let mut slots: Vec<Option<(Element, State)>> = candidates.into_iter().map(Some).collect();
        let mut next_frontier = Vec::with_capacity(order.len());
        for &pos in &order {
            let (key, state) = slots[pos].take().unwrap();
            total_key_bytes += key.0.len();
            index.insert(key.clone(), keys.len() as u32);
            keys.push(key);
            radii.push(r + 1);
            next_frontier.push(state);
        }
        adjacency.resize(keys.len() * degree, BOUNDARY);

        // Edges inside the new level or back to the previous one.
        let new_level_adj: Vec<Vec<u32>> = next_frontier
            .par_chunks(EXPAND_CHUNK)
            .map(|chunk| {
                let mut out = Vec::with_capacity(chunk.len() * degree);
                for x in chunk {
                    for s in 0..degree {
                        let key = group.key(&group.apply(x, s));
                        out.push(index.get(&key).copied().unwrap_or(BOUNDARY));
                    }
                }
                out
            })
            .collect();
        adjacency[base * degree..].copy_from_slice(&new_level_adj.concat());

        prev_level = level;
        frontier_start = base;
        frontier = next_frontier;
        if frontier.is_empty() {
            break;
        }
    }

    let inverse = (0..degree).map(|s| group.inverse_of(s)).collect();
    let graph = BallGraph::from_parts(radius, degree, adjacency, radii, Some(inverse))?;
    Ok(CayleyBall {
        group: group.clone(),
        graph,
        keys,
        index,
    })
}

/// Gr(0), …, Gr(r_max).
pub fn growth_table(group: &GroupSpec, r_max: u32, opts: BallOptions) -> Result<Vec<u64>> {
    Ok(enumerate_ball(group, r_max, opts)?.growth())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ball(name: &str, r: u32) -> CayleyBall {
        enumerate_ball(&name.parse().unwrap(), r, BallOptions::default()).unwrap()
    }

    #[test]
    fn small_lattice_balls() {
        assert_eq!(ball("z:1", 3).len(), 7);
        assert_eq!(ball("z:2", 2).len(), 13);
        assert_eq!(ball("z:1", 0).len(), 1);
        assert_eq!(ball("z:1", 5).growth(), vec![1, 3, 5, 7, 9, 11]);
    }

    #[test]
    fn adjacency_invariants() {
        for name in [
            "z:2",
            "lamplighter:2:1",
            "lamplighter-sws:2:1",
            "heisenberg",
            "grigorchuk",
            "free:2",
        ] {
            let b = ball(name, 4);
            assert_eq!(b.key_of(0), &Element::identity());
            assert_eq!(b.radii()[0], 0);
            assert_eq!(b.bfs_distances(), b.radii().to_vec(), "{name}");
            for i in 0..b.len() as u32 {
                for s in 0..b.degree() {
                    let j = b.neighbor(i, s);
                    if j == BOUNDARY {
                        assert_eq!(b.radii()[i as usize], b.radius());
                        continue;
                    }
                    assert!(b.radii()[i as usize].abs_diff(b.radii()[j as usize]) <= 1);
                    assert_eq!(b.neighbor(j, b.inverse()[s]), i, "{name}");
                }
            }
        }
    }

    #[test]
    fn keys_are_distinct_and_match_states() {
        let b = ball("grigorchuk", 6);
        let mut keys: Vec<&Element> = (0..b.len() as u32).map(|i| b.key_of(i)).collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), b.len());
        for i in (0..b.len() as u32).step_by(7) {
            assert_eq!(b.index_of_state(&b.state_of(i)), Some(i));
        }
    }

    #[test]
    fn lamplighter_growth_matches_brute_force() {
        // Brute force over (lamp set, cursor) states without canonical keys.
        use std::collections::{BTreeSet, HashSet};
        type St = (BTreeSet<i64>, i64);
        let mut seen: HashSet<St> = HashSet::from([(BTreeSet::new(), 0)]);
        let mut frontier: Vec<St> = vec![(BTreeSet::new(), 0)];
        let mut gr = vec![1u64];
        for _ in 0..8 {
            let mut next = Vec::new();
            for (lamps, c) in &frontier {
                let mut toggled = lamps.clone();
                if !toggled.remove(c) {
                    toggled.insert(*c);
                }
                for st in [
                    (lamps.clone(), c + 1),
                    (lamps.clone(), c - 1),
                    (toggled, *c),
                ] {
                    if seen.insert(st.clone()) {
                        next.push(st);
                    }
                }
            }
            gr.push(seen.len() as u64);
            frontier = next;
        }
        assert_eq!(ball("lamplighter:2:1", 8).growth(), gr);
        assert_eq!(gr[3], 22);
    }

    #[test]
    fn growth_is_submultiplicative() {
        for name in ["z:2", "grigorchuk", "heisenberg", "lamplighter:2:1"] {
            let g = ball(name, 8).growth();
            for a in 0..g.len() {
                for b in 0..g.len() - a {
                    assert!(g[a + b] <= g[a] * g[b]);
                }
            }
            let deg = ball(name, 0).degree() as u64;
            for r in 0..g.len() - 1 {
                assert!(g[r] < g[r + 1] && g[r + 1] <= (1 + deg) * g[r]);
            }
        }
    }

    #[test]
    fn numbering_is_schedule_independent() {
        let g: GroupSpec = "lamplighter:2:1".parse().unwrap();
        let a = enumerate_ball(&g, 7, BallOptions::default()).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap();
        let b = pool.install(|| enumerate_ball(&g, 7, BallOptions::default()).unwrap());
        assert_eq!(a.graph(), b.graph());
    }

    #[test]
    fn memory_cap_is_enforced() {
        let g: GroupSpec = "free:2".parse().unwrap();
        let err = enumerate_ball(
            &g,
            30,
            BallOptions {
                memory_cap: 1 << 20,
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::MemoryCap { .. }));
    }
}
