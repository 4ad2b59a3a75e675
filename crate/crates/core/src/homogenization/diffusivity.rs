//! Effective diffusion matrix of the cluster walk: periodic corrector
//! (variational) and mean-square displacement of simulated walkers.

use rand::Rng as _;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cg::{conjugate_gradient, CgOptions};
use super::graph::ClusterGraph;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream_rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiffusivityMethod {
    Variational,
    Msd,
}

impl std::str::FromStr for DiffusivityMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "variational" => Ok(DiffusivityMethod::Variational),
            "msd" => Ok(DiffusivityMethod::Msd),
            _ => Err(Error::Parameter(format!("unknown method {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiffusivityMeta {
    pub window: Vec<usize>,
    /// |𝒞| / |box|.
    pub m_hat: f64,
    pub seed: Option<u64>,
    /// Largest relative CG residual among the corrector solves.
    pub residual: Option<f64>,
    pub iterations: Vec<usize>,
    pub walkers: Option<usize>,
    pub t_end: Option<f64>,
    /// Standard errors of the matrix entries (MSD only), row-major.
    pub stderr: Option<Vec<f64>>,
    /// Axes along which the cluster does not wind around the torus.
    pub non_wrapping: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveDiffusivity {
    pub dim: usize,
    /// Row-major d×d.
    pub matrix: Vec<f64>,
    pub method: DiffusivityMethod,
    pub meta: DiffusivityMeta,
}

impl EffectiveDiffusivity {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.dim + j]
    }

    /// Mean of the diagonal: σ when 𝒟 = σ·Id.
    pub fn sigma(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum::<f64>() / self.dim as f64
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.matrix.chunks(self.dim).map(|r| r.to_vec()).collect()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.dim).all(|i| (0..self.dim).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }

    /// Positive semi-definiteness via Sylvester-type check on the
    /// symmetrised matrix (d ≤ 3 in practice, so Cholesky by hand).
    pub fn is_psd(&self, tol: f64) -> bool {
        let d = self.dim;
        let mut a: Vec<f64> = (0..d * d)
            .map(|k| 0.5 * (self.matrix[k] + self.matrix[(k % d) * d + k / d]))
            .collect();
        for j in 0..d {
            let mut pivot = a[j * d + j];
            for k in 0..j {
                pivot -= a[j * d + k] * a[j * d + k];
            }
            if pivot < -tol {
                return false;
            }
            let root = pivot.max(0.0).sqrt();
            a[j * d + j] = root;
            for i in j + 1..d {
                let mut v = a[i * d + j];
                for k in 0..j {
                    v -= a[i * d + k] * a[j * d + k];
                }
                a[i * d + j] = if root > tol { v / root } else { 0.0 };
            }
        }
        true
    }

    pub fn record(&self, p: Option<f64>) -> DiffusivityRecord {
        DiffusivityRecord {
            matrix: self.rows(),
            method: self.method,
            l: self.meta.window.first().copied().unwrap_or(0),
            p,
            seed: self.meta.seed,
            residual: self.meta.residual,
        }
    }
}

/// Flat JSON record written by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusivityRecord {
    pub matrix: Vec<Vec<f64>>,
    pub method: DiffusivityMethod,
    #[serde(rename = "L")]
    pub l: usize,
    pub p: Option<f64>,
    pub seed: Option<u64>,
    pub residual: Option<f64>,
}

/// Periodic corrector χ_j for the direction e_j: the minimiser of
/// Σ_edges ω (δ_{axis,j} + χ(b) − χ(a))², mean zero.
#[derive(Debug, Clone)]
pub struct Corrector {
    pub axis: usize,
    pub chi: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Source term of the corrector equation Kχ = b: each edge on the axis
/// pushes +ω at its tail and −ω at its head.
pub fn corrector_source(graph: &ClusterGraph, axis: usize) -> Vec<f64> {
    let mut b = vec![0.0; graph.len()];
    for e in graph.edges().iter().filter(|e| e.axis as usize == axis) {
        b[e.a as usize] += e.weight;
        b[e.b as usize] -= e.weight;
    }
    b
}

/// Unscaled weighted Laplacian (Kχ)(x) = Σ_y ω(x,y)(χ(x) − χ(y)).
pub fn apply_laplacian(graph: &ClusterGraph, x: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        let xi = x[i];
        *o = graph.neighbors(i).map(|(j, w)| w * (xi - x[j])).sum();
    }
}

pub fn solve_corrector(graph: &ClusterGraph, axis: usize, opts: CgOptions) -> Result<Corrector> {
    let b = corrector_source(graph, axis);
    let sol = conjugate_gradient(
        |x, out| apply_laplacian(graph, x, out),
        &b,
        graph.exit_rates(),
        CgOptions {
            project_mean: true,
            ..opts
        },
    )?;
    Ok(Corrector {
        axis,
        chi: sol.x,
        residual: sol.residual,
        iterations: sol.iterations,
    })
}

/// (1/|𝒞|) Σ_edges ω (a_e + Δψ)(b_e + Δφ) with a_e = δ_{axis,i}, b_e = δ_{axis,j}.
pub fn corrected_bilinear(graph: &ClusterGraph, i: usize, chi_i: &[f64], j: usize, chi_j: &[f64]) -> f64 {
    let sum: f64 = graph
        .edges()
        .iter()
        .map(|e| {
            let (a, b, ax) = (e.a as usize, e.b as usize, e.axis as usize);
            let u = if ax == i { 1.0 } else { 0.0 } + chi_i[b] - chi_i[a];
            let v = if ax == j { 1.0 } else { 0.0 } + chi_j[b] - chi_j[a];
            e.weight * u * v
        })
        .sum();
    sum / graph.len() as f64
}

/// The χ ≡ 0 value (1/|𝒞|) Σ_{edges on axis j} ω, an upper bound for 𝒟_jj.
pub fn uncorrected_bound(graph: &ClusterGraph, axis: usize) -> f64 {
    graph
        .edges()
        .iter()
        .filter(|e| e.axis as usize == axis)
        .map(|e| e.weight)
        .sum::<f64>()
        / graph.len() as f64
}

/// 𝒟 from the periodic variational problem on the graph's window.
pub fn estimate_d_variational(graph: &ClusterGraph) -> Result<EffectiveDiffusivity> {
    estimate_d_variational_with(graph, CgOptions::default())
}

pub fn estimate_d_variational_with(graph: &ClusterGraph, opts: CgOptions) -> Result<EffectiveDiffusivity> {
    let d = graph.dim();
    let wraps = graph.wraps();
    let non_wrapping: Vec<usize> = (0..d).filter(|&k| !wraps[k]).collect();
    if !non_wrapping.is_empty() {
        log::warn!("cluster does not wind around axes {non_wrapping:?}; corrector absorbs the drift there");
    }
    let correctors = (0..d)
        .map(|axis| solve_corrector(graph, axis, opts))
        .collect::<Result<Vec<_>>>()?;
    let mut matrix = vec![0.0; d * d];
    for i in 0..d {
        for j in i..d {
            let v = corrected_bilinear(graph, i, &correctors[i].chi, j, &correctors[j].chi);
            matrix[i * d + j] = v;
            matrix[j * d + i] = v;
        }
    }
    Ok(EffectiveDiffusivity {
        dim: d,
        matrix,
        method: DiffusivityMethod::Variational,
        meta: DiffusivityMeta {
            window: graph.lattice().dims().to_vec(),
            m_hat: graph.len() as f64 / graph.lattice().num_sites() as f64,
            residual: correctors.iter().map(|c| c.residual).reduce(f64::max),
            iterations: correctors.iter().map(|c| c.iterations).collect(),
            non_wrapping,
            ..Default::default()
        },
    })
}

const WALKER_CHUNK: usize = 256;

/// 𝒟 from continuous-time walks jumping along each bond at rate ω,
/// started uniformly on the graph. Uses the displacement increment
/// between t/2 and t: 𝒟 ≈ (E[X_t X_tᵀ] − E[X_{t/2} X_{t/2}ᵀ]) / t,
/// which is calibrated so the simple random walk gives the identity.
pub fn estimate_d_msd(graph: &ClusterGraph, n_walkers: usize, t_end: f64, seed: u64) -> Result<EffectiveDiffusivity> {
    if n_walkers < 2 {
        return Err(Error::Parameter("need at least two walkers".into()));
    }
    if !(t_end > 0.0) {
        return Err(Error::Parameter(format!("t_end must be positive (got {t_end})")));
    }
    let d = graph.dim();
    let half = 0.5 * t_end;
    let n_chunks = n_walkers.div_ceil(WALKER_CHUNK);
    // Per chunk: Σ y, Σ y² over walkers for every matrix entry, and Σ|X_t|².
    let partials: Vec<(Vec<f64>, Vec<f64>, f64)> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(derive_seed(seed, &[c as u64]), 4);
            let count = WALKER_CHUNK.min(n_walkers - c * WALKER_CHUNK);
            let mut s1 = vec![0.0; d * d];
            let mut s2 = vec![0.0; d * d];
            let mut msd = 0.0;
            let mut x = vec![0i64; d];
            let mut x_half = vec![0i64; d];
            for _ in 0..count {
                let mut node = rng.random_range(0..graph.len());
                x.iter_mut().for_each(|v| *v = 0);
                let mut t = 0.0;
                let mut halfway = false;
                loop {
                    let w = graph.exit_rate(node);
                    let dt = if w > 0.0 {
                        let e: f64 = Exp1.sample(&mut rng);
                        e / w
                    } else {
                        f64::INFINITY
                    };
                    if !halfway && t + dt > half {
                        x_half.copy_from_slice(&x);
                        halfway = true;
                    }
                    if t + dt > t_end {
                        break;
                    }
                    t += dt;
                    let (next, step) = graph.pick_neighbor(node, rng.random::<f64>() * w);
                    x[(step.unsigned_abs() - 1) as usize] += step.signum() as i64;
                    node = next;
                }
                for i in 0..d {
                    for j in 0..d {
                        let y = ((x[i] * x[j]) as f64 - (x_half[i] * x_half[j]) as f64) / t_end;
                        s1[i * d + j] += y;
                        s2[i * d + j] += y * y;
                    }
                }
                msd += x.iter().map(|v| (v * v) as f64).sum::<f64>();
            }
            (s1, s2, msd)
        })
        .collect();
    let mut s1 = vec![0.0; d * d];
    let mut s2 = vec![0.0; d * d];
    let mut msd = 0.0;
    for (a, b, m) in partials {
        for k in 0..d * d {
            s1[k] += a[k];
            s2[k] += b[k];
        }
        msd += m;
    }
    let n = n_walkers as f64;
    let matrix: Vec<f64> = s1.iter().map(|s| s / n).collect();
    let stderr: Vec<f64> = s1
        .iter()
        .zip(&s2)
        .map(|(a, b)| ((b / n - (a / n).powi(2)).max(0.0) / (n - 1.0)).sqrt())
        .collect();
    if (msd / n).sqrt() < 10.0 {
        log::warn!("root mean-square displacement {:.2} is below 10 lattice units", (msd / n).sqrt());
    }
    Ok(EffectiveDiffusivity {
        dim: d,
        matrix,
        method: DiffusivityMethod::Msd,
        meta: DiffusivityMeta {
            window: graph.lattice().dims().to_vec(),
            m_hat: graph.len() as f64 / graph.lattice().num_sites() as f64,
            seed: Some(seed),
            walkers: Some(n_walkers),
            t_end: Some(t_end),
            stderr: Some(stderr),
            ..Default::default()
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{generate_field, BondLaw, ConductanceField};
    use crate::lattice::{Boundary, Lattice};
    use nalgebra::{DMatrix, DVector};

    fn torus(n: usize) -> Lattice {
        Lattice::new(&[n, n], Boundary::Periodic).unwrap()
    }

    #[test]
    fn homogeneous_lattice_gives_identity() {
        let g = ClusterGraph::full(&ConductanceField::constant(torus(16), 1.0).unwrap(), 16).unwrap();
        let dv = estimate_d_variational(&g).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dv.get(i, j) - expect).abs() < 1e-12);
            }
        }
        let dm = estimate_d_msd(&g, 4000, 40.0, 1).unwrap();
        let se = dm.meta.stderr.clone().unwrap();
        for k in 0..4 {
            let expect = if k % 3 == 0 { 1.0 } else { 0.0 };
            assert!((dm.matrix[k] - expect).abs() < 4.0 * se[k], "{k}: {} ± {}", dm.matrix[k], se[k]);
        }
    }

    #[test]
    fn variational_matches_dense_minimisation() {
        let lat = torus(4);
        let field = ConductanceField::generate(BondLaw::Uniform, 1.0, lat, 17).unwrap();
        let g = ClusterGraph::full(&field, 4).unwrap();
        let dv = estimate_d_variational(&g).unwrap();
        // Dense least squares: minimise ‖W^{1/2}(a + Bχ)‖² over χ where B is
        // the edge-node incidence matrix.
        let m = g.edges().len();
        let n = g.len();
        let mut bmat = DMatrix::zeros(m, n);
        let mut w = DVector::zeros(m);
        for (k, e) in g.edges().iter().enumerate() {
            let s = e.weight.sqrt();
            bmat[(k, e.b as usize)] = s;
            bmat[(k, e.a as usize)] = -s;
            w[k] = s;
        }
        for axis in 0..2 {
            let target = DVector::from_fn(m, |k, _| {
                if g.edges()[k].axis as usize == axis {
                    -w[k]
                } else {
                    0.0
                }
            });
            let chi = bmat.clone().svd(true, true).solve(&target, 1e-12).unwrap();
            let resid = &bmat * &chi - &target;
            let min = resid.norm_squared() / n as f64;
            assert!((dv.get(axis, axis) - min).abs() < 1e-9, "{} vs {min}", dv.get(axis, axis));
        }
    }

    #[test]
    fn polarization_energy_identity_and_upper_bound() {
        let (field, lab) =
            generate_field(BondLaw::Bernoulli { p: 0.75, c: 1.0 }, 1.0, torus(32), 5).unwrap();
        let g = ClusterGraph::giant(&field, &lab, 32).unwrap();
        let dv = estimate_d_variational(&g).unwrap();
        assert!(dv.is_symmetric(1e-15) && dv.is_psd(1e-12));
        let c: Vec<_> = (0..2).map(|a| solve_corrector(&g, a, CgOptions::default()).unwrap()).collect();
        // Polarization: (e0+e1)·D(e0+e1) from the summed corrector.
        let sum_chi: Vec<f64> = c[0].chi.iter().zip(&c[1].chi).map(|(a, b)| a + b).collect();
        let q: f64 = g
            .edges()
            .iter()
            .map(|e| {
                let v = 1.0 + sum_chi[e.b as usize] - sum_chi[e.a as usize];
                e.weight * v * v
            })
            .sum::<f64>()
            / g.len() as f64;
        let polar = 0.5 * (q - dv.get(0, 0) - dv.get(1, 1));
        assert!((polar - dv.get(0, 1)).abs() < 1e-12);
        for axis in 0..2 {
            // Minimum = χ≡0 value minus the Dirichlet energy of χ.
            let chi = &c[axis].chi;
            let n = g.scale() as f64;
            let raw_energy = g.dirichlet_form(chi, chi) * n.powi(g.dim() as i32 - 2);
            let energy = raw_energy / g.len() as f64;
            let bound = uncorrected_bound(&g, axis);
            assert!((dv.get(axis, axis) - (bound - energy)).abs() < 1e-9);
            assert!(dv.get(axis, axis) <= bound + 1e-12);
            // Any other χ, here a scaled corrector, does not go lower.
            let half: Vec<f64> = chi.iter().map(|v| 0.5 * v).collect();
            assert!(corrected_bilinear(&g, axis, &half, axis, &half) >= dv.get(axis, axis));
        }
    }

    #[test]
    fn msd_seeds_agree_and_conductance_monotone() {
        let (field, lab) =
            generate_field(BondLaw::Bernoulli { p: 0.95, c: 1.0 }, 1.0, torus(48), 3).unwrap();
        let g = ClusterGraph::giant(&field, &lab, 48).unwrap();
        let a = estimate_d_msd(&g, 3000, 100.0, 1).unwrap();
        let b = estimate_d_msd(&g, 3000, 100.0, 2).unwrap();
        let (sa, sb) = (a.meta.stderr.clone().unwrap(), b.meta.stderr.clone().unwrap());
        for k in 0..4 {
            assert!((a.matrix[k] - b.matrix[k]).abs() < 4.0 * (sa[k].powi(2) + sb[k].powi(2)).sqrt());
        }
        let (f7, l7) = generate_field(BondLaw::Bernoulli { p: 0.7, c: 1.0 }, 1.0, torus(48), 3).unwrap();
        let g7 = ClusterGraph::giant(&f7, &l7, 48).unwrap();
        let v95 = estimate_d_variational(&g).unwrap().sigma();
        let v7 = estimate_d_variational(&g7).unwrap().sigma();
        assert!(v95 > v7);
    }
}
