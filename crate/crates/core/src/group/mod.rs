//! Finitely generated groups with a solvable word problem.
//!
//! A [`GroupSpec`] fixes a family and a symmetric generating set. Group
//! elements are manipulated as [`State`]s and compared through their
//! canonical [`Element`] key.

mod ball;
pub mod grigorchuk;
mod segment;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ball::{enumerate_ball, growth_table, BallGraph, BallOptions, CayleyBall, BOUNDARY};
pub use segment::{load as load_segment, read_segment, save as save_segment, write_segment};

/// Generating set used for lamplighter groups.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LampGenerators {
    /// Moves `t_i^{±1}` plus lamp increments at the cursor.
    WalkSwitch,
    /// Products `σ^a t_i^{±1} σ^b` over all lamp values `a, b`.
    SwitchWalkSwitch,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    Zd(u32),
    Free(u32),
    Lamplighter {
        lamps: u32,
        dim: u32,
        gens: LampGenerators,
    },
    Heisenberg,
    Grigorchuk,
}

/// One right-multiplication move. Generators are words in these.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Atom {
    Step { axis: usize, sign: i64 },
    Letter(u32),
    Toggle(u32),
    Grig(u8),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Generator {
    pub name: String,
    pub inverse: usize,
    atoms: Vec<Atom>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupSpec {
    family: Family,
    generators: Vec<Generator>,
}

/// Lamplighter element: lamp configuration and cursor.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LampState {
    pub cursor: Vec<i64>,
    pub lamps: BTreeMap<Vec<i64>, u32>,
}

/// A group element in a family-specific normal-ish form.
///
/// Only the Grigorchuk representation (a reduced word) is not unique; use
/// [`GroupSpec::key`] for equality.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum State {
    Lattice(Vec<i64>),
    Free(Vec<u32>),
    Lamp(LampState),
    Heisenberg([i64; 3]),
    Grigorchuk(Vec<u8>),
}

/// Canonical key of a group element. The identity has the empty key.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Element(pub Box<[u8]>);

impl Element {
    pub fn identity() -> Self {
        Element(Box::new([]))
    }
    pub fn is_identity(&self) -> bool {
        self.0.is_empty()
    }
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Element(")?;
        for b in self.0.iter() {
            write!(f, "{b:02x}")?;
        }
        write!(f, ")")
    }
}

fn push_varint(out: &mut Vec<u8>, x: i64) {
    let mut z = ((x << 1) ^ (x >> 63)) as u64;
    loop {
        let byte = (z & 0x7f) as u8;
        z >>= 7;
        if z == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

/// Every encoder below is prefix-free, so dropping trailing zero bytes stays
/// injective and sends the identity to the empty key.
fn strip_zeros(mut v: Vec<u8>) -> Element {
    while v.last() == Some(&0) {
        v.pop();
    }
    Element(v.into_boxed_slice())
}

impl GroupSpec {
    pub fn new(family: Family) -> Result<Self> {
        let generators = match &family {
            Family::Zd(d) => {
                if *d == 0 {
                    return Err(Error::Range("dimension must be positive".into()));
                }
                let mut g = Vec::new();
                for axis in 0..*d as usize {
                    g.push(Generator {
                        name: format!("e{}", axis + 1),
                        inverse: 2 * axis + 1,
                        atoms: vec![Atom::Step { axis, sign: 1 }],
                    });
                    g.push(Generator {
                        name: format!("E{}", axis + 1),
                        inverse: 2 * axis,
                        atoms: vec![Atom::Step { axis, sign: -1 }],
                    });
                }
                g
            }
            Family::Free(rank) => {
                if *rank == 0 || *rank > 26 {
                    return Err(Error::Range("free group rank must be in 1..=26".into()));
                }
                let mut g = Vec::new();
                for i in 0..*rank {
                    let c = (b'a' + i as u8) as char;
                    g.push(Generator {
                        name: c.to_string(),
                        inverse: 2 * i as usize + 1,
                        atoms: vec![Atom::Letter(2 * i)],
                    });
                    g.push(Generator {
                        name: c.to_ascii_uppercase().to_string(),
                        inverse: 2 * i as usize,
                        atoms: vec![Atom::Letter(2 * i + 1)],
                    });
                }
                g
            }
            Family::Lamplighter { lamps, dim, gens } => {
                lamplighter_generators(*lamps, *dim, *gens)?
            }
            Family::Heisenberg => vec![
                Generator {
                    name: "x".into(),
                    inverse: 1,
                    atoms: vec![Atom::Step { axis: 0, sign: 1 }],
                },
                Generator {
                    name: "X".into(),
                    inverse: 0,
                    atoms: vec![Atom::Step { axis: 0, sign: -1 }],
                },
                Generator {
                    name: "y".into(),
                    inverse: 3,
                    atoms: vec![Atom::Step { axis: 1, sign: 1 }],
                },
                Generator {
                    name: "Y".into(),
                    inverse: 2,
                    atoms: vec![Atom::Step { axis: 1, sign: -1 }],
                },
            ],
            Family::Grigorchuk => grigorchuk::LETTERS
                .iter()
                .enumerate()
                .map(|(i, &l)| Generator {
                    name: ["a", "b", "c", "d"][i].into(),
                    inverse: i,
                    atoms: vec![Atom::Grig(l)],
                })
                .collect(),
        };
        Ok(Self { family, generators })
    }

    pub fn zd(d: u32) -> Self {
        Self::new(Family::Zd(d)).expect("valid dimension")
    }

    pub fn lamplighter(lamps: u32, dim: u32) -> Self {
        Self::new(Family::Lamplighter {
            lamps,
            dim,
            gens: LampGenerators::WalkSwitch,
        })
        .expect("valid lamplighter")
    }

    pub fn lamplighter_sws(lamps: u32, dim: u32) -> Self {
        Self::new(Family::Lamplighter {
            lamps,
            dim,
            gens: LampGenerators::SwitchWalkSwitch,
        })
        .expect("valid lamplighter")
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn degree(&self) -> usize {
        self.generators.len()
    }

    pub fn inverse_of(&self, id: usize) -> usize {
        self.generators[id].inverse
    }

    pub fn generator_id(&self, name: &str) -> Option<usize> {
        self.generators.iter().position(|g| g.name == name)
    }

    /// Short name, parseable by [`FromStr`].
    pub fn name(&self) -> String {
        match &self.family {
            Family::Zd(d) => format!("zd:{d}"),
            Family::Free(r) => format!("free:{r}"),
            Family::Lamplighter {
                lamps,
                dim,
                gens: LampGenerators::WalkSwitch,
            } => {
                format!("lamplighter:{lamps}:{dim}")
            }
            Family::Lamplighter {
                lamps,
                dim,
                gens: LampGenerators::SwitchWalkSwitch,
            } => {
                format!("lamplighter-sws:{lamps}:{dim}")
            }
            Family::Heisenberg => "heisenberg".into(),
            Family::Grigorchuk => "grigorchuk".into(),
        }
    }

    pub fn identity(&self) -> State {
        match &self.family {
            Family::Zd(d) => State::Lattice(vec![0; *d as usize]),
            Family::Free(_) => State::Free(Vec::new()),
            Family::Lamplighter { dim, .. } => State::Lamp(LampState {
                cursor: vec![0; *dim as usize],
                lamps: BTreeMap::new(),
            }),
            Family::Heisenberg => State::Heisenberg([0; 3]),
            Family::Grigorchuk => State::Grigorchuk(Vec::new()),
        }
    }

    fn lamp_order(&self) -> u32 {
        match self.family {
            Family::Lamplighter { lamps, .. } => lamps,
            _ => 0,
        }
    }

    fn apply_atom(&self, x: &mut State, atom: Atom) {
        match (x, atom) {
            (State::Lattice(v), Atom::Step { axis, sign }) => v[axis] += sign,
            (State::Free(w), Atom::Letter(l)) => {
                if w.last() == Some(&(l ^ 1)) {
                    w.pop();
                } else {
                    w.push(l);
                }
            }
            (State::Lamp(st), Atom::Step { axis, sign }) => st.cursor[axis] += sign,
            (State::Lamp(st), Atom::Toggle(a)) => {
                let s = self.lamp_order();
                let v = st.lamps.get(&st.cursor).copied().unwrap_or(0);
                let nv = (v + a) % s;
                if nv == 0 {
                    st.lamps.remove(&st.cursor);
                } else {
                    st.lamps.insert(st.cursor.clone(), nv);
                }
            }
            (State::Heisenberg(h), Atom::Step { axis, sign }) => {
                // (a,b,c)(a',b',c') = (a+a', b+b', c+c'+ab')
                if axis == 0 {
                    h[0] += sign;
                } else {
                    h[2] += h[0] * sign;
                    h[1] += sign;
                }
            }
            (State::Grigorchuk(w), Atom::Grig(l)) => grigorchuk::push_reduced(w, l),
            (x, a) => panic!("atom {a:?} does not act on {x:?}"),
        }
    }

    /// Right multiplication by generator `id`, in place.
    pub fn apply_in_place(&self, x: &mut State, id: usize) {
        for &atom in &self.generators[id].atoms {
            self.apply_atom(x, atom);
        }
    }

    /// `x · s` for generator `s = id`.
    pub fn apply(&self, x: &State, id: usize) -> State {
        let mut y = x.clone();
        self.apply_in_place(&mut y, id);
        y
    }

    pub fn evaluate(&self, word: &[usize]) -> Result<State> {
        let mut x = self.identity();
        for &id in word {
            if id >= self.degree() {
                return Err(Error::InvalidGenerator(id));
            }
            self.apply_in_place(&mut x, id);
        }
        Ok(x)
    }

    pub fn generator(&self, id: usize) -> Result<State> {
        self.evaluate(&[id])
    }

    pub fn canonical_key(&self, word: &[usize]) -> Result<Element> {
        Ok(self.key(&self.evaluate(word)?))
    }

    pub fn key(&self, x: &State) -> Element {
        let mut out = Vec::new();
        match x {
            State::Lattice(v) => {
                v.iter().for_each(|&c| push_varint(&mut out, c));
                strip_zeros(out)
            }
            State::Heisenberg(h) => {
                h.iter().for_each(|&c| push_varint(&mut out, c));
                strip_zeros(out)
            }
            State::Free(w) => {
                // Letters shifted by one so no byte is zero.
                w.iter().for_each(|&l| push_varint(&mut out, l as i64 + 1));
                Element(out.into_boxed_slice())
            }
            State::Lamp(st) => {
                let binary = self.lamp_order() == 2;
                push_varint(&mut out, st.lamps.len() as i64);
                for (pos, &val) in &st.lamps {
                    pos.iter().for_each(|&c| push_varint(&mut out, c));
                    if !binary {
                        push_varint(&mut out, val as i64);
                    }
                }
                st.cursor.iter().for_each(|&c| push_varint(&mut out, c));
                strip_zeros(out)
            }
            State::Grigorchuk(w) => Element(grigorchuk::canonical_key(w).into_boxed_slice()),
        }
    }

    /// Group product `x · y`.
    pub fn mul(&self, x: &State, y: &State) -> State {
        match (x, y) {
            (State::Lattice(a), State::Lattice(b)) => {
                State::Lattice(a.iter().zip(b).map(|(p, q)| p + q).collect())
            }
            (State::Free(_), State::Free(w)) => {
                let mut out = x.clone();
                for &l in w {
                    self.apply_atom(&mut out, Atom::Letter(l));
                }
                out
            }
            (State::Lamp(f), State::Lamp(g)) => {
                // (f, x)(g, y) = (f + τ_x g, x + y)
                let s = self.lamp_order();
                let mut lamps = f.lamps.clone();
                for (pos, &v) in &g.lamps {
                    let p: Vec<i64> = pos.iter().zip(&f.cursor).map(|(a, b)| a + b).collect();
                    let nv = (lamps.get(&p).copied().unwrap_or(0) + v) % s;
                    if nv == 0 {
                        lamps.remove(&p);
                    } else {
                        lamps.insert(p, nv);
                    }
                }
                let cursor = f.cursor.iter().zip(&g.cursor).map(|(a, b)| a + b).collect();
                State::Lamp(LampState { cursor, lamps })
            }
            (State::Heisenberg(a), State::Heisenberg(b)) => {
                State::Heisenberg([a[0] + b[0], a[1] + b[1], a[2] + b[2] + a[0] * b[1]])
            }
            (State::Grigorchuk(a), State::Grigorchuk(b)) => {
                State::Grigorchuk(grigorchuk::multiply(a, b))
            }
            _ => panic!("mismatched group states"),
        }
    }

    pub fn inv(&self, x: &State) -> State {
        match x {
            State::Lattice(a) => State::Lattice(a.iter().map(|c| -c).collect()),
            State::Free(w) => State::Free(w.iter().rev().map(|l| l ^ 1).collect()),
            State::Lamp(f) => {
                // (f, x)^{-1} = (-τ_{-x} f, -x)
                let s = self.lamp_order();
                let lamps = f
                    .lamps
                    .iter()
                    .map(|(pos, &v)| {
                        (
                            pos.iter().zip(&f.cursor).map(|(p, c)| p - c).collect(),
                            (s - v) % s,
                        )
                    })
                    .collect();
                State::Lamp(LampState {
                    cursor: f.cursor.iter().map(|c| -c).collect(),
                    lamps,
                })
            }
            State::Heisenberg(h) => State::Heisenberg([-h[0], -h[1], -h[2] + h[0] * h[1]]),
            State::Grigorchuk(w) => State::Grigorchuk(grigorchuk::inverse(w)),
        }
    }
}

fn lamplighter_generators(lamps: u32, dim: u32, gens: LampGenerators) -> Result<Vec<Generator>> {
    if lamps < 2 || dim == 0 {
        return Err(Error::Range(
            "lamplighter needs lamp order >= 2 and dimension >= 1".into(),
        ));
    }
    let axis_name = |axis: usize, sign: i64| {
        let base = if sign > 0 { "t" } else { "T" };
        if dim == 1 {
            base.to_string()
        } else {
            format!("{base}{}", axis + 1)
        }
    };
    let lamp_name = |a: u32| match (lamps, a) {
        (_, 0) => String::new(),
        (2, _) => "s".to_string(),
        _ => format!("s{a}"),
    };
    let mut g = Vec::new();
    match gens {
        LampGenerators::WalkSwitch => {
            for axis in 0..dim as usize {
                for (j, sign) in [1i64, -1].into_iter().enumerate() {
                    g.push(Generator {
                        name: axis_name(axis, sign),
                        inverse: 2 * axis + 1 - j,
                        atoms: vec![Atom::Step { axis, sign }],
                    });
                }
            }
            let base = g.len();
            for a in 1..lamps {
                g.push(Generator {
                    name: lamp_name(a),
                    inverse: base + ((lamps - a) % lamps) as usize - 1,
                    atoms: vec![Atom::Toggle(a)],
                });
            }
        }
        LampGenerators::SwitchWalkSwitch => {
            let mut index = std::collections::HashMap::new();
            let mut specs = Vec::new();
            for a in 0..lamps {
                for axis in 0..dim as usize {
                    for sign in [1i64, -1] {
                        for b in 0..lamps {
                            index.insert((a, axis, sign, b), specs.len());
                            specs.push((a, axis, sign, b));
                        }
                    }
                }
            }
            for &(a, axis, sign, b) in &specs {
                // (σ^a t σ^b)^{-1} = σ^{-b} t^{-1} σ^{-a}
                let inv = index[&((lamps - b) % lamps, axis, -sign, (lamps - a) % lamps)];
                let mut atoms = Vec::new();
                if a != 0 {
                    atoms.push(Atom::Toggle(a));
                }
                atoms.push(Atom::Step { axis, sign });
                if b != 0 {
                    atoms.push(Atom::Toggle(b));
                }
                g.push(Generator {
                    name: format!("{}{}{}", lamp_name(a), axis_name(axis, sign), lamp_name(b)),
                    inverse: inv,
                    atoms,
                });
            }
        }
    }
    Ok(g)
}

impl FromStr for GroupSpec {
    type Err = Error;

    /// Accepts `z:d`, `zd:d`, `free:r`, `lamplighter:s:d`,
    /// `lamplighter-sws:s:d`, `heisenberg`, `grigorchuk`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |i: usize| -> Result<u32> {
            parts
                .get(i)
                .ok_or_else(|| Error::Range(format!("group name {s:?} is missing a parameter")))?
                .parse::<u32>()
                .map_err(|_| Error::Range(format!("bad integer in group name {s:?}")))
        };
        let fam = match (parts[0], parts.len()) {
            ("z" | "zd", 2) => Family::Zd(num(1)?),
            ("free", 2) => Family::Free(num(1)?),
            ("lamplighter", 3) => Family::Lamplighter {
                lamps: num(1)?,
                dim: num(2)?,
                gens: LampGenerators::WalkSwitch,
            },
            ("lamplighter-sws", 3) => Family::Lamplighter {
                lamps: num(1)?,
                dim: num(2)?,
                gens: LampGenerators::SwitchWalkSwitch,
            },
            ("heisenberg", 1) => Family::Heisenberg,
            ("grigorchuk", 1) => Family::Grigorchuk,
            _ => return Err(Error::Range(format!("unknown group {s:?}"))),
        };
        GroupSpec::new(fam)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_groups() -> Vec<GroupSpec> {
        [
            "z:1",
            "z:2",
            "zd:3",
            "free:2",
            "lamplighter:2:1",
            "lamplighter:3:1",
            "lamplighter:2:2",
            "lamplighter-sws:2:1",
            "heisenberg",
            "grigorchuk",
        ]
        .iter()
        .map(|n| n.parse().unwrap())
        .collect()
    }

    #[test]
    fn generator_sets_are_symmetric() {
        for g in all_groups() {
            for (i, gen) in g.generators().iter().enumerate() {
                assert_eq!(g.generators()[gen.inverse].inverse, i, "{}", g.name());
                let w = g.canonical_key(&[i, gen.inverse]).unwrap();
                assert!(w.is_identity(), "{} {}", g.name(), gen.name);
            }
            assert!(g.key(&g.identity()).is_identity());
        }
    }

    #[test]
    fn names_roundtrip() {
        for g in all_groups() {
            let back: GroupSpec = g.name().parse().unwrap();
            assert_eq!(back, g);
        }
        assert!("klein".parse::<GroupSpec>().is_err());
        assert!("z:x".parse::<GroupSpec>().is_err());
    }

    #[test]
    fn mul_and_inv_agree_with_words() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for g in all_groups() {
            for _ in 0..50 {
                let u: Vec<usize> = (0..rng.gen_range(0..8))
                    .map(|_| rng.gen_range(0..g.degree()))
                    .collect();
                let v: Vec<usize> = (0..rng.gen_range(0..8))
                    .map(|_| rng.gen_range(0..g.degree()))
                    .collect();
                let uv: Vec<usize> = u.iter().chain(&v).copied().collect();
                let x = g.evaluate(&u).unwrap();
                let y = g.evaluate(&v).unwrap();
                assert_eq!(
                    g.key(&g.mul(&x, &y)),
                    g.canonical_key(&uv).unwrap(),
                    "{}",
                    g.name()
                );
                let inv_word: Vec<usize> = u.iter().rev().map(|&s| g.inverse_of(s)).collect();
                assert_eq!(g.key(&g.inv(&x)), g.canonical_key(&inv_word).unwrap());
                assert!(g.key(&g.mul(&x, &g.inv(&x))).is_identity());
            }
        }
    }

    #[test]
    fn abelian_words_commute() {
        let g = GroupSpec::zd(2);
        assert_eq!(
            g.canonical_key(&[0, 2]).unwrap(),
            g.canonical_key(&[2, 0]).unwrap()
        );
    }

    #[test]
    fn lamplighter_switch_conjugate_is_not_identity() {
        let g = GroupSpec::lamplighter(2, 1);
        let (t, tinv, s) = (0, 1, 2);
        let k = g.canonical_key(&[s, t, s, tinv]).unwrap();
        assert!(!k.is_identity());
        // Direct evaluation: lamps at 0 and 1 lit, cursor back at 0.
        let State::Lamp(st) = g.evaluate(&[s, t, s, tinv]).unwrap() else {
            panic!()
        };
        assert_eq!(st.cursor, vec![0]);
        assert_eq!(
            st.lamps.keys().cloned().collect::<Vec<_>>(),
            vec![vec![0], vec![1]]
        );
    }

    #[test]
    fn heisenberg_commutator_is_central() {
        let g: GroupSpec = "heisenberg".parse().unwrap();
        // [x, y] = x y X Y = (0, 0, 1)
        let c = g.evaluate(&[0, 2, 1, 3]).unwrap();
        assert_eq!(c, State::Heisenberg([0, 0, 1]));
        for s in 0..4 {
            let left = g.mul(&c, &g.generator(s).unwrap());
            let right = g.mul(&g.generator(s).unwrap(), &c);
            assert_eq!(g.key(&left), g.key(&right));
        }
    }

    #[test]
    fn free_group_has_no_relations_on_short_words() {
        let g: GroupSpec = "free:2".parse().unwrap();
        assert!(!g.canonical_key(&[0, 2, 1, 3]).unwrap().is_identity());
        assert!(g.canonical_key(&[0, 2, 3, 1]).unwrap().is_identity());
    }

    #[test]
    fn sws_generators_are_distinct() {
        let g = GroupSpec::lamplighter_sws(2, 1);
        assert_eq!(g.degree(), 8);
        let mut keys: Vec<Element> = (0..8).map(|i| g.canonical_key(&[i]).unwrap()).collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), 8);
    }

    #[test]
    fn grigorchuk_relations_on_random_elements() {
        use rand::{Rng, SeedableRng};
        let g: GroupSpec = "grigorchuk".parse().unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let w: Vec<usize> = (0..rng.gen_range(0..=20))
                .map(|_| rng.gen_range(0..4))
                .collect();
            let base = g.canonical_key(&w).unwrap();
            for rel in [[0, 0].as_slice(), &[1, 1], &[2, 2], &[3, 3], &[1, 2, 3]] {
                let ext: Vec<usize> = w.iter().chain(rel).copied().collect();
                assert_eq!(g.canonical_key(&ext).unwrap(), base);
            }
        }
    }
}
