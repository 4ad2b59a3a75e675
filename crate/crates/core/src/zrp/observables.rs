//! Empirical measures, block densities and the replacement statistic.

use super::measure::JumpRateCurve;
use super::rate::JumpRateFn;
use crate::error::{Error, Result};
use crate::homogenization::ClusterGraph;
use crate::lattice::{Boundary, Lattice};
use crate::macroscopic::TestFunction;

/// π^N[G] = N^{-d} Σ_x G(x/N) η(x) over the graph nodes.
pub fn empirical_measure(graph: &ClusterGraph, occupancy: &[u32], test: &TestFunction) -> f64 {
    let d = graph.dim();
    let pos = graph.positions();
    let sum: f64 = occupancy
        .iter()
        .enumerate()
        .filter(|(_, &k)| k > 0)
        .map(|(i, &k)| test.value(&pos[i * d..(i + 1) * d]) * k as f64)
        .sum();
    sum * graph.measure_weight()
}

/// π^N[f] for a function already sampled at the graph nodes.
pub fn empirical_measure_values(graph: &ClusterGraph, occupancy: &[u32], values: &[f64]) -> f64 {
    occupancy
        .iter()
        .zip(values)
        .map(|(&k, v)| k as f64 * v)
        .sum::<f64>()
        * graph.measure_weight()
}

/// Spreads node values onto the full lattice (zero off the graph).
pub fn lattice_field(graph: &ClusterGraph, node_values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut out = vec![0.0; graph.lattice().num_sites()];
    for (i, v) in node_values.enumerate() {
        out[graph.site(i)] = v;
    }
    out
}

/// Σ_{y ∈ Λ_{x,ℓ}} f(y) for every site x, by separable sliding windows.
/// Periodic axes wrap; free axes truncate the box at the window edge.
pub fn box_sums(lattice: &Lattice, values: &[f64], ell: usize) -> Vec<f64> {
    let dims = lattice.dims();
    let mut cur = values.to_vec();
    let mut next = vec![0.0; cur.len()];
    let mut stride = lattice.num_sites();
    for &n in dims {
        stride /= n;
        let outer = cur.len() / (n * stride);
        for o in 0..outer {
            for inner in 0..stride {
                let base = o * n * stride + inner;
                let at = |c: usize| base + c * stride;
                for c in 0..n {
                    let mut acc = 0.0;
                    if lattice.boundary() == Boundary::Periodic {
                        // Boxes wider than the axis count each site once per wrap.
                        for off in -(ell as i64)..=(ell as i64) {
                            let cc = (c as i64 + off).rem_euclid(n as i64) as usize;
                            acc += cur[at(cc)];
                        }
                    } else {
                        let lo = c.saturating_sub(ell);
                        let hi = (c + ell).min(n - 1);
                        for cc in lo..=hi {
                            acc += cur[at(cc)];
                        }
                    }
                    next[at(c)] = acc;
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    cur
}

/// η^ℓ(x) = (2ℓ+1)^{-d} Σ_{y ∈ Λ_{x,ℓ} ∩ 𝒞} η(y) at every lattice site.
pub fn block_densities(graph: &ClusterGraph, occupancy: &[u32], ell: usize) -> Vec<f64> {
    let field = lattice_field(graph, occupancy.iter().map(|&k| k as f64));
    let vol = ((2 * ell + 1) as f64).powi(graph.dim() as i32);
    let mut sums = box_sums(graph.lattice(), &field, ell);
    sums.iter_mut().for_each(|s| *s /= vol);
    sums
}

/// η^ℓ at a single lattice site by direct summation.
pub fn block_density(graph: &ClusterGraph, occupancy: &[u32], site: usize, ell: usize) -> f64 {
    let lat = graph.lattice();
    let d = lat.dim();
    let center = lat.coords(site);
    let side = 2 * ell + 1;
    let mut sum = 0.0;
    let mut c = vec![0usize; d];
    'boxes: for idx in 0..side.pow(d as u32) {
        let mut rem = idx;
        for k in 0..d {
            let off = (rem % side) as i64 - ell as i64;
            rem /= side;
            let n = lat.dims()[k] as i64;
            let v = center[k] as i64 + off;
            c[k] = match lat.boundary() {
                Boundary::Periodic => v.rem_euclid(n) as usize,
                Boundary::Free if (0..n).contains(&v) => v as usize,
                Boundary::Free => continue 'boxes,
            };
        }
        if let Some(i) = graph.node_of(lat.index(&c)) {
            sum += occupancy[i] as f64;
        }
    }
    sum / (side as f64).powi(d as i32)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplacementValue {
    /// (1/|box|) Σ_x V_ℓ(τ_x η, τ_x ω).
    pub mean: f64,
    /// Sites whose block density fell outside the jump-rate curve and were clamped.
    pub clamped: usize,
}

/// Spatial average over the window of
/// V_ℓ = |(2ℓ+1)^{-d} Σ_{y∈Λ_ℓ∩𝒞} g(η(y)) − m φ(η^ℓ/m)|.
pub fn replacement_statistic(
    graph: &ClusterGraph,
    occupancy: &[u32],
    rate_fn: &JumpRateFn,
    ell: usize,
    m: f64,
    curve: &JumpRateCurve,
) -> Result<ReplacementValue> {
    if ell == 0 {
        return Err(Error::Parameter("block radius must be >= 1".into()));
    }
    if !(m > 0.0) {
        return Err(Error::Parameter(format!("m must be positive (got {m})")));
    }
    let lat = graph.lattice();
    if lat.dims().iter().any(|&n| n < 2 * ell + 1) {
        return Err(Error::Config(format!(
            "window {:?} is smaller than the block side {}",
            lat.dims(),
            2 * ell + 1
        )));
    }
    let vol = ((2 * ell + 1) as f64).powi(graph.dim() as i32);
    let eta = box_sums(lat, &lattice_field(graph, occupancy.iter().map(|&k| k as f64)), ell);
    let rates = box_sums(lat, &lattice_field(graph, occupancy.iter().map(|&k| rate_fn.eval(k))), ell);
    let mut clamped = 0;
    let total: f64 = eta
        .iter()
        .zip(&rates)
        .map(|(&s_eta, &s_g)| {
            let rho = s_eta / vol / m;
            if !curve.contains(rho) {
                clamped += 1;
            }
            (s_g / vol - m * curve.eval(rho)).abs()
        })
        .sum();
    if clamped > 0 {
        log::warn!("replacement statistic: {clamped} block densities clamped to the table range");
    }
    Ok(ReplacementValue {
        mean: total / eta.len() as f64,
        clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{generate_field, BondLaw, ConductanceField};
    use crate::lattice::Lattice;
    use crate::zrp::measure::FugacityTable;
    use rand::Rng as _;

    fn random_graph(n: usize, seed: u64) -> ClusterGraph {
        let lat = Lattice::new(&[n, n], Boundary::Periodic).unwrap();
        let (f, lab) = generate_field(BondLaw::Bernoulli { p: 0.7, c: 1.0 }, 1.0, lat, seed).unwrap();
        ClusterGraph::giant(&f, &lab, n).unwrap()
    }

    #[test]
    fn block_density_sweeps_match_direct_sums() {
        for boundary in [Boundary::Periodic, Boundary::Free] {
            let lat = Lattice::new(&[5, 5], boundary).unwrap();
            let (f, lab) = generate_field(BondLaw::Bernoulli { p: 0.7, c: 1.0 }, 1.0, lat, 3).unwrap();
            let g = ClusterGraph::giant(&f, &lab, 5).unwrap();
            let mut rng = crate::rng::stream_rng(1, 0);
            let eta: Vec<u32> = (0..g.len()).map(|_| rng.random_range(0..5)).collect();
            for ell in [1, 2] {
                let sweep = block_densities(&g, &eta, ell);
                for site in 0..25 {
                    // Brute force: enumerate all sites within ℓ∞ distance ℓ.
                    let cx = g.lattice().coords(site);
                    let mut sum = 0.0;
                    for y in 0..25 {
                        let cy = g.lattice().coords(y);
                        let near = (0..2).all(|k| {
                            let dlt = (cx[k] as i64 - cy[k] as i64).abs();
                            match boundary {
                                Boundary::Periodic => dlt.min(5 - dlt) <= ell as i64,
                                Boundary::Free => dlt <= ell as i64,
                            }
                        });
                        if near {
                            if let Some(i) = g.node_of(y) {
                                sum += eta[i] as f64;
                            }
                        }
                    }
                    let expect = sum / ((2 * ell + 1) * (2 * ell + 1)) as f64;
                    assert!((sweep[site] - expect).abs() < 1e-12);
                    assert!((block_density(&g, &eta, site, ell) - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn block_density_counting_identity() {
        let g = random_graph(32, 5);
        let ones = vec![1u32; g.len()];
        let ell = 3;
        let site = g.lattice().index(&[16, 16]);
        let vol = 49.0;
        let count = (0..g.lattice().num_sites())
            .filter(|&y| {
                let d = g.lattice().displacement(site, y);
                d.iter().all(|v| v.abs() <= 3) && g.node_of(y).is_some()
            })
            .count();
        assert_eq!(block_density(&g, &ones, site, ell), count as f64 / vol);
        assert_eq!(block_density(&g, &vec![0; g.len()], site, ell), 0.0);
    }

    #[test]
    fn empirical_measure_identities() {
        let g = random_graph(16, 2);
        let mut eta = vec![0u32; g.len()];
        eta[7] = 1;
        let bump = TestFunction::Bump { center: vec![0.3, 0.6], radius: 0.3, amp: 1.0 };
        let x0 = g.position(7);
        assert!((empirical_measure(&g, &eta, &bump) - bump.value(&x0) / 256.0).abs() < 1e-15);
        let mut rng = crate::rng::stream_rng(3, 0);
        let eta: Vec<u32> = (0..g.len()).map(|_| rng.random_range(0..6)).collect();
        let total: u32 = eta.iter().sum();
        let one = TestFunction::Constant { value: 1.0 };
        assert!((empirical_measure(&g, &eta, &one) - total as f64 / 256.0).abs() < 1e-13);
        let direct: f64 = (0..g.len()).map(|i| bump.value(&g.position(i)) * eta[i] as f64).sum::<f64>() / 256.0;
        assert!((empirical_measure(&g, &eta, &bump) - direct).abs() < 1e-14);
    }

    #[test]
    fn replacement_statistic_hand_computation() {
        // 4x4 torus fully connected with linear rates; ℓ = 1 boxes of 9 sites.
        let lat = Lattice::new(&[4, 4], Boundary::Periodic).unwrap();
        let f = ConductanceField::constant(lat, 1.0).unwrap();
        let g = ClusterGraph::full(&f, 4).unwrap();
        let table = FugacityTable::new(JumpRateFn::Linear).unwrap();
        let curve = JumpRateCurve::build(&table, 20.0, 64).unwrap();
        let zero = replacement_statistic(&g, &[0; 16], &JumpRateFn::Linear, 1, 1.0, &curve).unwrap();
        assert_eq!(zero.mean, 0.0);
        // Linear g: Σ g(η) = Σ η, and φ = identity, so V vanishes for any η when m = 1.
        let eta: Vec<u32> = (0..16).map(|i| (i * 7 % 5) as u32).collect();
        let v = replacement_statistic(&g, &eta, &JumpRateFn::Linear, 1, 1.0, &curve).unwrap();
        assert!(v.mean.abs() < 1e-12);
        // Indicator g with m = 1: V(x) = |#occupied/9 − φ(η^1/1)| with φ(ρ) = ρ/(1+ρ).
        let ind = FugacityTable::new(JumpRateFn::Indicator).unwrap();
        let icurve = JumpRateCurve::build(&ind, 20.0, 4001).unwrap();
        let v = replacement_statistic(&g, &eta, &JumpRateFn::Indicator, 1, 1.0, &icurve).unwrap();
        let mut expect = 0.0;
        for site in 0..16 {
            let cx = g.lattice().coords(site);
            let (mut occ, mut mass) = (0.0, 0.0);
            for y in 0..16 {
                let cy = g.lattice().coords(y);
                if (0..2).all(|k| {
                    let dlt = (cx[k] as i64 - cy[k] as i64).rem_euclid(4);
                    dlt <= 1 || dlt == 3
                }) {
                    mass += eta[y] as f64;
                    occ += if eta[y] > 0 { 1.0 } else { 0.0 };
                }
            }
            let rho = mass / 9.0;
            expect += (occ / 9.0 - rho / (1.0 + rho)).abs();
        }
        assert!((v.mean - expect / 16.0).abs() < 1e-8);
        assert!(replacement_statistic(&g, &eta, &JumpRateFn::Linear, 2, 1.0, &curve).is_err());
    }
}
