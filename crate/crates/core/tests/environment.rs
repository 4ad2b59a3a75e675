use std::collections::VecDeque;

use proptest::prelude::*;

use zrperc::environment::{cluster_diameter_stats, generate_field, label_clusters, BondLaw, ConductanceField};
use zrperc::lattice::{Boundary, Lattice};

fn boundary() -> impl Strategy<Value = Boundary> {
    prop_oneof![Just(Boundary::Periodic), Just(Boundary::Free)]
}

fn law() -> impl Strategy<Value = BondLaw> {
    prop_oneof![
        (0.0..=1.0f64).prop_map(|p| BondLaw::Bernoulli { p, c: 1.0 }),
        Just(BondLaw::Uniform),
        (0.0..=1.0f64).prop_map(|p_high| BondLaw::TwoPoint { low: 0.0, high: 0.5, p_high }),
    ]
}

/// Components by breadth-first search over a full bond scan.
fn bfs_components(field: &ConductanceField) -> Vec<Option<usize>> {
    let lat = field.lattice();
    let n = lat.num_sites();
    let mut adj = vec![Vec::new(); n];
    for (x, y, _, w) in field.bonds() {
        if w > 0.0 {
            adj[x].push(y);
            adj[y].push(x);
        }
    }
    let mut comp = vec![None; n];
    let mut next = 0;
    for s in 0..n {
        if comp[s].is_some() || adj[s].is_empty() {
            continue;
        }
        comp[s] = Some(next);
        let mut queue = VecDeque::from([s]);
        while let Some(x) = queue.pop_front() {
            for &y in &adj[x] {
                if comp[y].is_none() {
                    comp[y] = Some(next);
                    queue.push_back(y);
                }
            }
        }
        next += 1;
    }
    comp
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn values_bounded_and_symmetric(law in law(), b in boundary(), nx in 2usize..9, ny in 2usize..9, seed: u64) {
        let lat = Lattice::new(&[nx, ny], b).unwrap();
        let field = ConductanceField::generate(law, 1.0, lat.clone(), seed).unwrap();
        prop_assert!(field.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
        for x in 0..lat.num_sites() {
            for axis in 0..2 {
                if let Some(y) = lat.step(x, axis, true) {
                    prop_assert_eq!(field.conductance(x, y), field.conductance(y, x));
                }
            }
        }
        let again = ConductanceField::generate(law, 1.0, lat, seed).unwrap();
        prop_assert_eq!(field.values(), again.values());
    }

    #[test]
    fn labels_match_breadth_first_search(p in 0.0..=1.0f64, b in boundary(), nx in 2usize..12, ny in 2usize..12, seed: u64) {
        let lat = Lattice::new(&[nx, ny], b).unwrap();
        let (field, labeling) = generate_field(BondLaw::Bernoulli { p, c: 1.0 }, 1.0, lat, seed).unwrap();
        let comp = bfs_components(&field);
        // Same partition: labels agree pairwise with the BFS components.
        for x in 0..comp.len() {
            prop_assert_eq!(labeling.label(x).is_some(), comp[x].is_some());
            for y in 0..x {
                if comp[x].is_some() && comp[y].is_some() {
                    prop_assert_eq!(labeling.label(x) == labeling.label(y), comp[x] == comp[y]);
                }
            }
        }
        let touched = comp.iter().filter(|c| c.is_some()).count();
        prop_assert_eq!(labeling.sizes().iter().sum::<usize>(), touched);
        if let Some(g) = labeling.giant_id() {
            let best = *labeling.sizes().iter().max().unwrap();
            prop_assert_eq!(labeling.sizes()[g as usize], best);
            prop_assert!(labeling.sizes()[..g as usize].iter().all(|&s| s < best));
        } else {
            prop_assert_eq!(touched, 0);
        }
    }

    #[test]
    fn thresholding_is_monotone(nx in 2usize..9, seed: u64, c in 0.0..1.0f64, dc in 0.0..1.0f64) {
        let lat = Lattice::new(&[nx, nx], Boundary::Periodic).unwrap();
        let field = ConductanceField::generate(BondLaw::Uniform, 1.0, lat, seed).unwrap();
        let lo = field.threshold(c).unwrap();
        let hi = field.threshold(c + dc).unwrap();
        for (a, b) in hi.open_flags().iter().zip(lo.open_flags()) {
            prop_assert!(!a || *b);
        }
    }

    #[test]
    fn giant_fraction_monotone_in_p(seed: u64, p in 0.0..1.0f64, dp in 0.0..0.5f64) {
        // Same seed means the same uniforms, so bonds open at p stay open at p + dp
        // and clusters can only merge.
        let lat = Lattice::new(&[24, 24], Boundary::Periodic).unwrap();
        let m = |p: f64| {
            let (_, l) = generate_field(BondLaw::Bernoulli { p: p.min(1.0), c: 1.0 }, 1.0, lat.clone(), seed).unwrap();
            l.giant_fraction()
        };
        prop_assert!(m(p) <= m(p + dp));
    }
}

#[test]
fn supercritical_giant_fraction() {
    let mut fractions = Vec::new();
    for seed in 0..4 {
        let lat = Lattice::new(&[128, 128], Boundary::Periodic).unwrap();
        let (_, l) = generate_field(BondLaw::Bernoulli { p: 0.7, c: 1.0 }, 1.0, lat, seed).unwrap();
        fractions.push(l.giant_fraction());
    }
    // An isolated site alone has probability 0.3⁴, so m < 1 − 0.0081 on average.
    let mean = fractions.iter().sum::<f64>() / 4.0;
    assert!(mean > 0.95 && mean < 1.0 - 0.0081, "{fractions:?}");
    let spread = fractions.iter().fold(0.0f64, |a, &f| a.max((f - mean).abs()));
    assert!(spread < 0.01);
}

#[test]
fn subcritical_largest_cluster_is_a_vanishing_fraction() {
    let mut last = 1.0;
    for n in [32, 64, 128, 256] {
        let lat = Lattice::new(&[n, n], Boundary::Periodic).unwrap();
        let (_, l) = generate_field(BondLaw::Bernoulli { p: 0.3, c: 1.0 }, 1.0, lat, 5).unwrap();
        let frac = l.giant_fraction();
        assert!(frac < last, "n = {n}: {frac}");
        last = frac;
    }
    assert!(last < 0.002);
}

#[test]
fn finite_cluster_diameters_grow_slowly() {
    let mut maxima = Vec::new();
    for n in [32, 64, 128, 256] {
        let lat = Lattice::new(&[n, n], Boundary::Periodic).unwrap();
        let (_, l) = generate_field(BondLaw::Bernoulli { p: 0.7, c: 1.0 }, 1.0, lat, 9).unwrap();
        let stats = cluster_diameter_stats(&l, true);
        maxima.push(stats.max);
        assert_eq!(stats.histogram.iter().sum::<usize>(), l.num_clusters() - 1);
    }
    // Logarithmic growth: an eightfold window keeps the largest trap tiny.
    assert!(maxima.iter().all(|&m| m <= 12), "{maxima:?}");
}

#[test]
fn labeling_from_binary_field_is_stable() {
    let lat = Lattice::new(&[16, 16], Boundary::Free).unwrap();
    let field = ConductanceField::generate(BondLaw::Bernoulli { p: 0.5, c: 1.0 }, 1.0, lat, 3).unwrap();
    let a = label_clusters(&field.threshold(0.0).unwrap());
    let b = label_clusters(&field.threshold(0.0).unwrap());
    assert_eq!(a.labels(), b.labels());
}
