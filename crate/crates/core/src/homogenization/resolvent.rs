//! Resolvent equation λu − L_N u = h on the cluster graph.

use serde::{Deserialize, Serialize};

use super::cg::{conjugate_gradient_from, CgOptions};
use super::graph::ClusterGraph;
use crate::error::{Error, Result};
use crate::macroscopic::TestFunction;

/// Right-hand side of the resolvent equation.
#[derive(Debug, Clone, Copy)]
pub enum ResolventRhs<'a> {
    /// h = λG − ∇·(D∇G) evaluated at x/N, with D row-major d×d.
    Test { g: &'a TestFunction, diffusivity: &'a [f64] },
    /// h given per graph node.
    Raw(&'a [f64]),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrectorSolution {
    pub lambda: f64,
    pub values: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
}

pub fn resolvent_rhs(graph: &ClusterGraph, lambda: f64, rhs: ResolventRhs<'_>) -> Result<Vec<f64>> {
    match rhs {
        ResolventRhs::Raw(h) => {
            if h.len() != graph.len() {
                return Err(Error::Shape {
                    expected: vec![graph.len()],
                    got: vec![h.len()],
                });
            }
            Ok(h.to_vec())
        }
        ResolventRhs::Test { g, diffusivity } => {
            let d = graph.dim();
            if diffusivity.len() != d * d {
                return Err(Error::Shape {
                    expected: vec![d, d],
                    got: vec![diffusivity.len()],
                });
            }
            g.validate(d)?;
            Ok(graph.sample(|x| lambda * g.value(x) - g.div_grad(diffusivity, x)))
        }
    }
}

pub fn solve_resolvent(graph: &ClusterGraph, lambda: f64, rhs: ResolventRhs<'_>) -> Result<CorrectorSolution> {
    solve_resolvent_with(graph, lambda, rhs, CgOptions::default())
}

pub fn solve_resolvent_with(
    graph: &ClusterGraph,
    lambda: f64,
    rhs: ResolventRhs<'_>,
    opts: CgOptions,
) -> Result<CorrectorSolution> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Parameter(format!("lambda must be positive (got {lambda})")));
    }
    let h = resolvent_rhs(graph, lambda, rhs)?;
    let n2 = (graph.scale() * graph.scale()) as f64;
    let diag: Vec<f64> = graph.exit_rates().iter().map(|w| lambda + n2 * w).collect();
    // Start from the leading Neumann term h/λ; constants are then exact.
    let x0: Vec<f64> = h.iter().map(|v| v / lambda).collect();
    let sol = conjugate_gradient_from(
        |x, out| {
            graph.apply_generator_into(x, out);
            for (o, xi) in out.iter_mut().zip(x) {
                *o = lambda * xi - *o;
            }
        },
        &h,
        &diag,
        Some(&x0),
        CgOptions {
            project_mean: false,
            ..opts
        },
    )?;
    Ok(CorrectorSolution {
        lambda,
        values: sol.x,
        residual_norm: sol.residual,
        iterations: sol.iterations,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrectorGap {
    pub scale: usize,
    /// ‖G^λ_N − G‖ in L¹(ν^N_ω).
    pub l1: f64,
    /// ‖G^λ_N − G‖ in L²(ν^N_ω).
    pub l2: f64,
    /// ν^N_ω mass of the cluster, N^{-d}|𝒞_N|.
    pub volume: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Gap between the corrected function and G on each graph of a ladder.
pub fn corrected_function_convergence(
    graphs: &[ClusterGraph],
    lambda: f64,
    g: &TestFunction,
    diffusivity: &[f64],
) -> Result<Vec<CorrectorGap>> {
    graphs
        .iter()
        .map(|graph| {
            let sol = solve_resolvent(graph, lambda, ResolventRhs::Test { g, diffusivity })?;
            Ok(corrector_gap(graph, g, &sol))
        })
        .collect()
}

pub fn corrector_gap(graph: &ClusterGraph, g: &TestFunction, sol: &CorrectorSolution) -> CorrectorGap {
    let target = graph.sample(|x| g.value(x));
    let w = graph.measure_weight();
    let (mut l1, mut l2) = (0.0, 0.0);
    for (u, v) in sol.values.iter().zip(&target) {
        let e = (u - v).abs();
        l1 += e;
        l2 += e * e;
    }
    CorrectorGap {
        scale: graph.scale(),
        l1: l1 * w,
        l2: (l2 * w).sqrt(),
        volume: graph.len() as f64 * w,
        residual: sol.residual_norm,
        iterations: sol.iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{generate_field, BondLaw, ConductanceField};
    use crate::lattice::{Boundary, Lattice};
    use nalgebra::{DMatrix, DVector};
    use rand::Rng as _;

    fn dense_generator(g: &ClusterGraph) -> DMatrix<f64> {
        let n2 = (g.scale() * g.scale()) as f64;
        let mut m = DMatrix::zeros(g.len(), g.len());
        for e in g.edges() {
            let (a, b) = (e.a as usize, e.b as usize);
            m[(a, b)] += n2 * e.weight;
            m[(b, a)] += n2 * e.weight;
            m[(a, a)] -= n2 * e.weight;
            m[(b, b)] -= n2 * e.weight;
        }
        m
    }

    fn perc_graph(n: usize, p: f64, seed: u64) -> ClusterGraph {
        let lat = Lattice::new(&[n, n], Boundary::Periodic).unwrap();
        let (f, lab) = generate_field(BondLaw::Bernoulli { p, c: 1.0 }, 1.0, lat, seed).unwrap();
        ClusterGraph::giant(&f, &lab, n).unwrap()
    }

    fn random_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = crate::rng::stream_rng(seed, 9);
        (0..n).map(|_| rng.random::<f64>() - 0.5).collect()
    }

    #[test]
    fn generator_matches_dense_matrix() {
        let g = perc_graph(6, 0.7, 8);
        let f = random_vec(g.len(), 1);
        let dense = dense_generator(&g) * DVector::from_column_slice(&f);
        let fast = g.apply_generator(&f);
        for i in 0..g.len() {
            assert!((dense[i] - fast[i]).abs() <= 1e-12 * (1.0 + dense[i].abs()));
        }
        let h = random_vec(g.len(), 2);
        let lf = g.apply_generator(&h);
        let two_route = -g.inner(&f, &lf);
        assert!((g.dirichlet_form(&f, &h) - two_route).abs() < 1e-12 * (1.0 + two_route.abs()));
    }

    #[test]
    fn path_graph_matches_dense_solve() {
        let lat = Lattice::new(&[5, 2], Boundary::Free).unwrap();
        let sites = vec![0, 2, 4, 6, 8];
        let edges = [(0, 1, 0.3), (1, 2, 1.7), (2, 3, 0.05), (3, 4, 2.2)];
        let g = ClusterGraph::from_edges(lat, sites, &edges, 3).unwrap();
        let h = [1.0, -2.0, 0.5, 4.0, 0.0];
        let sol = solve_resolvent(&g, 1.0, ResolventRhs::Raw(&h)).unwrap();
        let a = DMatrix::identity(5, 5) - dense_generator(&g);
        let exact = a.lu().solve(&DVector::from_column_slice(&h)).unwrap();
        for i in 0..5 {
            assert!((sol.values[i] - exact[i]).abs() < 1e-8 * (1.0 + exact[i].abs()));
        }
        assert!(sol.residual_norm <= 1e-10);
    }

    #[test]
    fn percolation_cluster_matches_dense_solve() {
        let g = perc_graph(10, 0.7, 3);
        assert!(g.len() <= 100);
        let h = random_vec(g.len(), 5);
        for lambda in [1.0, 0.25] {
            let sol = solve_resolvent(&g, lambda, ResolventRhs::Raw(&h)).unwrap();
            let a = DMatrix::identity(g.len(), g.len()) * lambda - dense_generator(&g);
            let exact = a.lu().solve(&DVector::from_column_slice(&h)).unwrap();
            for i in 0..g.len() {
                assert!((sol.values[i] - exact[i]).abs() < 1e-8 * (1.0 + exact[i].abs()));
            }
        }
    }

    #[test]
    fn constants_are_fixed_points_and_zero_maps_to_zero() {
        let g = perc_graph(16, 0.7, 4);
        let lambda = 0.5;
        let h = vec![lambda * 3.0; g.len()];
        let sol = solve_resolvent(&g, lambda, ResolventRhs::Raw(&h)).unwrap();
        assert!(sol.values.iter().all(|&v| (v - 3.0).abs() < 1e-12));
        let zero = solve_resolvent(&g, lambda, ResolventRhs::Raw(&vec![0.0; g.len()])).unwrap();
        assert!(zero.values.iter().all(|&v| v == 0.0));
        let bump = TestFunction::Bump { center: vec![0.5, 0.5], radius: 0.3, amp: 1.0 };
        let gap = corrector_gap(&g, &bump, &zero);
        let norm = g.inner(&g.sample(|x| bump.value(x)), &g.sample(|x| bump.value(x))).sqrt();
        assert!((gap.l2 - norm).abs() < 1e-12);
        assert!(solve_resolvent(&g, 0.0, ResolventRhs::Raw(&h)).is_err());
        assert!(solve_resolvent(&g, -1.0, ResolventRhs::Raw(&h)).is_err());
    }

    #[test]
    fn large_lambda_neumann_limit() {
        let g = perc_graph(12, 0.8, 6);
        let h = random_vec(g.len(), 7);
        let lh = g.apply_generator(&h);
        let lh_norm = lh.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut prev = f64::INFINITY;
        for lambda in [1e5, 2e5, 4e5, 8e5] {
            let sol = solve_resolvent(&g, lambda, ResolventRhs::Raw(&h)).unwrap();
            let err = sol
                .values
                .iter()
                .zip(&h)
                .map(|(u, v)| (u - v / lambda).powi(2))
                .sum::<f64>()
                .sqrt();
            // ‖(λ−L)⁻¹ L h / λ‖ ≤ ‖Lh‖/λ² since −L ≥ 0.
            assert!(err <= lh_norm / (lambda * lambda) * (1.0 + 1e-6));
            if prev.is_finite() {
                let ratio = prev / err;
                assert!((ratio - 4.0).abs() < 0.2, "ratio {ratio}");
            }
            prev = err;
        }
    }

    #[test]
    fn resolvent_is_symmetric() {
        let g = perc_graph(20, 0.7, 9);
        for seed in 0..5 {
            let h1 = random_vec(g.len(), 100 + seed);
            let h2 = random_vec(g.len(), 200 + seed);
            let r1 = solve_resolvent(&g, 0.7, ResolventRhs::Raw(&h1)).unwrap();
            let r2 = solve_resolvent(&g, 0.7, ResolventRhs::Raw(&h2)).unwrap();
            let a = g.inner(&h1, &r2.values);
            let b = g.inner(&h2, &r1.values);
            assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn homogeneous_ladder_gap_decreases() {
        let g = TestFunction::cosine(vec![1, 1], 0.3);
        let id = [1.0, 0.0, 0.0, 1.0];
        let graphs: Vec<_> = [16, 32, 64]
            .iter()
            .map(|&n| {
                let lat = Lattice::new(&[n, n], Boundary::Periodic).unwrap();
                ClusterGraph::full(&ConductanceField::constant(lat, 1.0).unwrap(), n).unwrap()
            })
            .collect();
        let gaps = corrected_function_convergence(&graphs, 1.0, &g, &id).unwrap();
        for w in gaps.windows(2) {
            assert!(w[1].l2 < w[0].l2);
            // Second-order consistency of the discrete Laplacian.
            assert!(w[0].l2 / w[1].l2 > 3.5);
        }
        for gap in &gaps {
            assert!(gap.l1 <= gap.volume.sqrt() * gap.l2 * (1.0 + 1e-12));
        }
    }
}
