use std::sync::OnceLock;

use proptest::prelude::*;
use walklab_core::bounds::{line_models, theorem11_bound};
use walklab_core::group::{enumerate_ball, BallOptions, CayleyBall, GroupSpec};
use walklab_core::profiles::{boundary_ratio, dirichlet_gap};
use walklab_core::prooflab::WallMetric;
use walklab_core::walk::{Evolver, Kernel};

const GROUPS: [&str; 5] = [
    "zd:2",
    "lamplighter:2:1",
    "heisenberg",
    "free:2",
    "grigorchuk",
];

fn spec(i: usize) -> GroupSpec {
    GROUPS[i].parse().unwrap()
}

fn plane_ball() -> &'static CayleyBall {
    static B: OnceLock<CayleyBall> = OnceLock::new();
    B.get_or_init(|| enumerate_ball(&"zd:2".parse().unwrap(), 12, BallOptions::default()).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, ..ProptestConfig::default() })]

    #[test]
    fn group_laws_hold(g in 0..GROUPS.len(), x in prop::collection::vec(0usize..64, 0..10),
                       y in prop::collection::vec(0usize..64, 0..10), z in prop::collection::vec(0usize..64, 0..10)) {
        let g = spec(g);
        let word = |w: &[usize]| g.evaluate(&w.iter().map(|s| s % g.degree()).collect::<Vec<_>>()).unwrap();
        let (x, y, z) = (word(&x), word(&y), word(&z));
        let e = g.identity();
        prop_assert!(g.key(&g.mul(&x, &g.inv(&x))) == g.key(&e));
        prop_assert!(g.key(&g.mul(&g.mul(&x, &y), &z)) == g.key(&g.mul(&x, &g.mul(&y, &z))));
        prop_assert!(g.key(&g.mul(&x, &e)) == g.key(&x));
    }

    #[test]
    fn wall_distance_is_a_bounded_pseudometric(lamp in any::<bool>(), set in prop::collection::vec(prop::collection::vec(0usize..8, 0..4), 1..6),
                                               ws in prop::collection::vec(prop::collection::vec(0usize..8, 0..10), 3)) {
        let g = if lamp { spec(1) } else { spec(0) };
        let word = |w: &[usize]| g.evaluate(&w.iter().map(|s| s % g.degree()).collect::<Vec<_>>()).unwrap();
        let mut seen = std::collections::HashSet::new();
        let members = set.iter().map(|w| word(w)).filter(|x| seen.insert(g.key(x))).collect();
        let w = WallMetric::new(&g, members).unwrap();
        let (x, y, z) = (word(&ws[0]), word(&ws[1]), word(&ws[2]));
        prop_assert_eq!(w.distance(&x, &x), 0);
        prop_assert_eq!(w.distance(&x, &y), w.distance(&y, &x));
        prop_assert!(w.distance(&x, &z) <= w.distance(&x, &y) + w.distance(&y, &z));
        prop_assert!(w.distance(&x, &y) <= w.size());
        // Left invariance.
        prop_assert_eq!(w.distance(&g.mul(&z, &x), &g.mul(&z, &y)), w.distance(&x, &y));
    }

    #[test]
    fn dirichlet_gap_is_below_boundary_ratio(picks in prop::collection::btree_set(0u32..85, 1..12)) {
        // Indices below volume(6) = 85 keep every set well inside the radius-12 ball.
        let b = plane_ball();
        let set: Vec<u32> = picks.into_iter().collect();
        let k = Kernel::uniform(4);
        let ratio: f64 = boundary_ratio(b.graph(), &k, &set).unwrap();
        let gap = dirichlet_gap::<f64>(b.graph(), &k, &set).unwrap().value;
        prop_assert!(gap <= ratio * (1.0 + 1e-12) && gap > 0.0);
    }

    #[test]
    fn evolution_conserves_mass(steps in 0usize..40, hold in 0u8..4) {
        let b = plane_ball();
        let kernel = Kernel::lazy(4, walklab_core::Rational::new(hold as i64, 4)).unwrap();
        let mut ev = Evolver::<f64>::new(b.graph(), &kernel).unwrap();
        ev.run(steps);
        let d = ev.distribution();
        prop_assert!((d.total_mass() + d.leaked - 1.0).abs() < 1e-12);
        let mut last = 0.0;
        for r in 0..=12 {
            let iv = d.refined_interval(b.graph(), r);
            prop_assert!(iv.lo <= iv.hi && iv.lo >= last - 1e-15);
            last = iv.lo;
        }
    }

    #[test]
    fn line_bound_is_monotone(k in 16u64..100_000, r in 1u64..64) {
        let (phi, lam) = line_models();
        let a = theorem11_bound(k, r, &lam, &phi, 1.0).unwrap();
        let later = theorem11_bound(2 * k, r, &lam, &phi, 1.0).unwrap();
        let wider = theorem11_bound(k, r + 1, &lam, &phi, 1.0).unwrap();
        prop_assert!(later.rhs <= a.rhs * (1.0 + 1e-12));
        prop_assert!(wider.rhs >= a.rhs * (1.0 - 1e-12));
    }
}
