use proptest::prelude::*;

use zrperc::environment::{generate_field, BondLaw};
use zrperc::homogenization::ClusterGraph;
use zrperc::lattice::{Boundary, Lattice};
use zrperc::macroscopic::TestFunction;
use zrperc::zrp::{
    empirical_measure, empirical_measure_values, simulate_coupled, FugacityTable, JumpRateFn, Kmc, Tail,
};

fn builtin() -> impl Strategy<Value = JumpRateFn> {
    prop_oneof![
        Just(JumpRateFn::Linear),
        Just(JumpRateFn::Indicator),
        (1u32..6).prop_map(|cap| JumpRateFn::Capped { cap }),
        Just(JumpRateFn::Table {
            values: vec![0.5, 1.0, 1.2],
            tail: Tail::Linear { slope: 0.25 },
        }),
    ]
}

fn small_graph(n: usize, p: f64, seed: u64) -> ClusterGraph {
    let lat = Lattice::new(&[n, n], Boundary::Periodic).unwrap();
    let (field, lab) = generate_field(BondLaw::Bernoulli { p, c: 1.0 }, 1.0, lat, seed).unwrap();
    ClusterGraph::giant(&field, &lab, n).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn partition_function_and_density_increase(g in builtin(), a in 0.0..0.9f64, b in 0.0..0.9f64) {
        let table = FugacityTable::new(g).unwrap();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(hi - lo > 1e-6);
        let phi_hi = hi * table.phi_c().min(4.0);
        let phi_lo = lo * table.phi_c().min(4.0);
        prop_assert!(table.partition_function(phi_lo).unwrap() < table.partition_function(phi_hi).unwrap());
        prop_assert!(table.density_of_fugacity(phi_lo).unwrap() < table.density_of_fugacity(phi_hi).unwrap());
        prop_assert_eq!(table.partition_function(0.0).unwrap(), 1.0);
        prop_assert_eq!(table.density_of_fugacity(0.0).unwrap(), 0.0);
    }

    #[test]
    fn mean_jump_rate_equals_fugacity(g in builtin(), rho in 0.0..6.0f64) {
        let table = FugacityTable::new(g).unwrap();
        let phi = table.fugacity_of_density(rho).unwrap();
        prop_assert!((table.mean_jump_rate(rho).unwrap() - phi).abs() < 1e-9);
    }

    #[test]
    fn mean_jump_rate_is_lipschitz_with_gstar(g in builtin(), a in 0.0..6.0f64, b in 0.0..6.0f64) {
        let table = FugacityTable::new(g.clone()).unwrap();
        let fa = table.mean_jump_rate(a).unwrap();
        let fb = table.mean_jump_rate(b).unwrap();
        prop_assert!((fa - fb).abs() <= g.gstar() * (a - b).abs() + 1e-9);
    }

    #[test]
    fn kmc_conserves_particles_and_rate_tree(seed: u64, init in prop::collection::vec(0u32..4, 1..=1)) {
        let g = small_graph(6, 0.8, seed % 16);
        let occ: Vec<u32> = (0..g.len()).map(|i| (i as u32 * 7 + init[0]) % 4).collect();
        let total: u64 = occ.iter().map(|&k| k as u64).sum();
        for rate in [JumpRateFn::Indicator, JumpRateFn::Linear] {
            let mut kmc = Kmc::new(&g, &rate, occ.clone(), seed).unwrap();
            let mut last = 0.0;
            for _ in 0..20 {
                kmc.run_events(50).unwrap();
                prop_assert!(kmc.clock().time >= last);
                last = kmc.clock().time;
            }
            prop_assert_eq!(kmc.config().total(), total);
            prop_assert!(kmc.config().verify(&g, &rate));
        }
    }

    #[test]
    fn basic_coupling_preserves_order(seed: u64, extra in prop::collection::vec(0u32..3, 64)) {
        let g = small_graph(5, 0.85, seed % 8);
        let lower: Vec<u32> = (0..g.len()).map(|i| extra[i % 64] % 2).collect();
        let upper: Vec<u32> = lower.iter().zip(extra.iter().cycle().skip(7)).map(|(&l, &e)| l + e).collect();
        for rate in [JumpRateFn::Indicator, JumpRateFn::Capped { cap: 2 }, JumpRateFn::Linear] {
            let (lo, up) = simulate_coupled(&g, &rate, lower.clone(), upper.clone(), 2_000, seed).unwrap();
            prop_assert!(lo.iter().zip(&up).all(|(a, b)| a <= b));
            prop_assert_eq!(lo.iter().sum::<u32>(), lower.iter().sum::<u32>());
        }
    }

    #[test]
    fn empirical_measure_is_linear_and_additive(
        a in prop::collection::vec(0u32..5, 36),
        b in prop::collection::vec(0u32..5, 36),
        s in 0u32..4,
    ) {
        let g = small_graph(6, 1.0, 0);
        let test = TestFunction::cosine(vec![1, 2], 0.4);
        let combo: Vec<u32> = a.iter().zip(&b).map(|(x, y)| s * x + y).collect();
        let lhs = empirical_measure(&g, &combo, &test);
        let rhs = s as f64 * empirical_measure(&g, &a, &test) + empirical_measure(&g, &b, &test);
        prop_assert!((lhs - rhs).abs() < 1e-12);
        // Split G into its restrictions to two disjoint halves of the sites.
        let values = g.sample(|x| test.value(x));
        let left: Vec<f64> = values.iter().enumerate().map(|(i, &v)| if i % 2 == 0 { v } else { 0.0 }).collect();
        let right: Vec<f64> = values.iter().enumerate().map(|(i, &v)| if i % 2 == 1 { v } else { 0.0 }).collect();
        let whole = empirical_measure_values(&g, &a, &values);
        let parts = empirical_measure_values(&g, &a, &left) + empirical_measure_values(&g, &a, &right);
        prop_assert!((whole - parts).abs() < 1e-12);
    }
}
