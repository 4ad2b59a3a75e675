//! End-to-end runs: environment → initial measure → dynamics → comparison
//! with the PDE. Replicas run in parallel; results are assembled in
//! (N, replica) order so reports are byte-identical across runs.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::*;
use super::spec::{CoefficientSource, ExperimentSpec};
use crate::environment::{cluster_diameter_stats, fit_log_growth, generate_field, ClusterLabeling, ConductanceField};
use crate::error::{Error, Result};
use crate::homogenization::{corrector_gap, estimate_d_variational, solve_resolvent, ClusterGraph, ResolventRhs};
use crate::lattice::Lattice;
use crate::macroscopic::{Profile, TestFunction};
use crate::pde::{bulk_profile, DensityGrid, NonlinearHeat};
use crate::rng::derive_seed;
use crate::zrp::{
    block_densities, empirical_measure, empirical_measure_values, replacement_statistic, sample_product_measure,
    simulate_kmc, FugacityTable, JumpRateCurve, Snapshot,
};

const TAG_ENV: u64 = 0xE1;
const TAG_SAMPLE: u64 = 0x5A;
const TAG_KMC: u64 = 0xD7;

/// σ and m̂ as written by `effective-d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientCache {
    pub sigma: f64,
    pub m_hat: f64,
}

impl CoefficientCache {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|_| {
            Error::Config(format!(
                "no cached coefficients at {}; run `zrperc effective-d --out {}` first",
                path.display(),
                path.display()
            ))
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn env_seed(spec: &ExperimentSpec, n: usize, replica: usize) -> u64 {
    derive_seed(spec.ladder.seed, &[TAG_ENV, n as u64, replica as u64])
}

fn run_seed(spec: &ExperimentSpec, tag: u64, n: usize, replica: usize) -> u64 {
    derive_seed(spec.ladder.seed, &[tag, n as u64, replica as u64])
}

/// The environment of replica `replica` at scale `n` (window side `n`).
pub fn replica_environment(spec: &ExperimentSpec, n: usize, replica: usize) -> Result<(ConductanceField, ClusterLabeling)> {
    let e = &spec.environment;
    let lattice = Lattice::new(&vec![n; e.dim], e.boundary)?;
    generate_field(e.law, e.c0, lattice, env_seed(spec, n, replica))
}

struct Coefficients {
    m_hat: f64,
    sigma: f64,
}

fn coefficients(spec: &ExperimentSpec, giant: &ClusterGraph, cache: Option<&CoefficientCache>) -> Result<Coefficients> {
    let m_window = giant.len() as f64 / giant.lattice().num_sites() as f64;
    Ok(match spec.homogenization.source {
        CoefficientSource::Window => Coefficients {
            m_hat: m_window,
            sigma: estimate_d_variational(giant)?.sigma(),
        },
        CoefficientSource::Fixed => Coefficients {
            m_hat: m_window,
            sigma: spec.homogenization.sigma.expect("validated"),
        },
        CoefficientSource::Cache => {
            let c = cache.expect("loaded");
            Coefficients {
                m_hat: c.m_hat,
                sigma: c.sigma,
            }
        }
    })
}

fn load_cache(spec: &ExperimentSpec) -> Result<Option<CoefficientCache>> {
    match (&spec.homogenization.source, &spec.homogenization.cache) {
        (CoefficientSource::Cache, Some(path)) => Ok(Some(CoefficientCache::load(path)?)),
        _ => Ok(None),
    }
}

fn sorted_times(spec: &ExperimentSpec) -> (Vec<f64>, f64) {
    let times = spec.ladder.times.clone();
    let t_max = times.iter().copied().fold(0.0, f64::max);
    (times, t_max)
}

fn jobs(spec: &ExperimentSpec) -> Vec<(usize, usize)> {
    spec.ladder
        .scales
        .iter()
        .flat_map(|&n| (0..spec.ladder.replicas).map(move |r| (n, r)))
        .collect()
}

fn pde_snapshots(
    spec: &ExperimentSpec,
    table: &FugacityTable,
    profile: &Profile,
    m: f64,
    sigma: f64,
    times: &[f64],
) -> Result<(DensityGrid, Vec<DensityGrid>)> {
    let grid0 = DensityGrid::from_profile(profile, spec.pde.grid, spec.environment.dim, spec.environment.boundary)?;
    let heat = NonlinearHeat::new(table, m, sigma, profile.sup())?;
    let t_max = times.iter().copied().fold(0.0, f64::max);
    let (_, snaps) = heat.solve_to_time(&grid0, t_max, times, None)?;
    Ok((grid0, snaps))
}

/// ∫|G|·ρ̄ for every test function, ρ̄ the mean of ρ₀.
fn reference_scales(spec: &ExperimentSpec, model: &str, grid0: &DensityGrid) -> Vec<(String, usize, usize, f64)> {
    let rho_bar = grid0.mass();
    let d = spec.environment.dim;
    spec.ladder
        .scales
        .iter()
        .flat_map(|&n| {
            spec.test_functions
                .iter()
                .enumerate()
                .map(move |(i, g)| (model.to_string(), n, i, g.abs_integral(d) * rho_bar))
        })
        .collect()
}

struct HydroOut {
    info: ReplicaInfo,
    rows: Vec<GapRow>,
    l1: Vec<L1Row>,
    grid0: DensityGrid,
}

/// π^N_t[G] on the giant cluster from ν_{ρ₀(x/N)/m̂} against ∫Gρ(·,t) with
/// ρ solving ∂ₜρ = m∇·(σ∇φ(ρ/m)).
pub fn run_hydrodynamic_experiment(spec: &ExperimentSpec) -> Result<ComparisonReport> {
    spec.validate()?;
    let cache = load_cache(spec)?;
    let rate = spec.rate_fn()?;
    let table = FugacityTable::new(rate.clone())?;
    let profile = spec.profile()?;
    let (times, t_max) = sorted_times(spec);
    let outs: Vec<HydroOut> = jobs(spec)
        .into_par_iter()
        .map(|(n, r)| -> Result<HydroOut> {
            let (field, labeling) = replica_environment(spec, n, r)?;
            let graph = ClusterGraph::giant(&field, &labeling, n)?;
            let coef = coefficients(spec, &graph, cache.as_ref())?;
            let eta0 = sample_product_measure(&table, &profile, &graph, coef.m_hat, run_seed(spec, TAG_SAMPLE, n, r))?;
            let particles = eta0.iter().map(|&k| k as u64).sum();
            let snaps = simulate_kmc(&graph, &rate, eta0, t_max, &times, run_seed(spec, TAG_KMC, n, r))?;
            let (grid0, pde) = pde_snapshots(spec, &table, &profile, coef.m_hat, coef.sigma, &times)?;
            let mut rows = Vec::new();
            let mut l1 = Vec::new();
            let ell = ((spec.diagnostics.smoothing_eps * n as f64).floor() as usize).max(1);
            // Snapshots come back in sorted time order.
            let mut order: Vec<usize> = (0..times.len()).collect();
            order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
            for (k, &ti) in order.iter().enumerate() {
                let snap: &Snapshot = &snaps[k];
                for (gi, g) in spec.test_functions.iter().enumerate() {
                    let emp = empirical_measure(&graph, &snap.occupancy, g);
                    rows.push(GapRow::new("hydrodynamic", n, times[ti], gi, r, emp, pde[ti].integrate(g)));
                }
                l1.push(L1Row {
                    n,
                    t: times[ti],
                    replica: r,
                    ell,
                    distance: smoothed_l1(&graph, &snap.occupancy, ell, &pde[ti]),
                });
            }
            Ok(HydroOut {
                info: ReplicaInfo {
                    n,
                    replica: r,
                    env_seed: env_seed(spec, n, r),
                    m_hat: coef.m_hat,
                    sigma: coef.sigma,
                    sites: graph.len(),
                    particles,
                    events: snaps.last().map_or(0, |s| s.event_count),
                },
                rows,
                l1,
                grid0,
            })
        })
        .collect::<Result<_>>()?;
    let mut report = ComparisonReport::new(ExperimentKind::Hydrodynamic, spec.clone());
    let scales = reference_scales(spec, "hydrodynamic", &outs[0].grid0);
    for o in outs {
        report.replicas.push(o.info);
        report.rows.extend(o.rows);
        report.smoothed_l1.extend(o.l1);
    }
    report.summarize(&scales);
    Ok(report)
}

/// N^{-d} Σ_x |η^ℓ(x) − ρ(x/N)| over all lattice sites.
fn smoothed_l1(graph: &ClusterGraph, occupancy: &[u32], ell: usize, pde: &DensityGrid) -> f64 {
    let lat = graph.lattice();
    let n = graph.scale() as f64;
    let blocks = block_densities(graph, occupancy, ell);
    let mut x = vec![0.0; lat.dim()];
    let mut c = vec![0; lat.dim()];
    let sum: f64 = blocks
        .iter()
        .enumerate()
        .map(|(site, b)| {
            lat.coords_into(site, &mut c);
            for k in 0..c.len() {
                x[k] = c[k] as f64 / n;
            }
            (b - pde.interpolate(&x)).abs()
        })
        .sum();
    sum / lat.num_sites() as f64
}

struct BulkOut {
    info: ReplicaInfo,
    rows: Vec<GapRow>,
    conservation: ConservationRow,
    /// (t, test, |N^{-d} Σ_off G(η₀ − η_t)|).
    trap_lhs: Vec<(f64, usize, f64)>,
    grid0: DensityGrid,
}

/// Full-lattice start ν_{ρ₀(x/N)} on every site, dynamics on every
/// cluster, compared with m̂ρ̃ + (1 − m̂)ρ₀ ("composite"), with ρ̃ alone
/// ("naive") and, on the giant cluster only, with m̂ρ̃ ("giant").
pub fn run_bulk_experiment(spec: &ExperimentSpec) -> Result<ComparisonReport> {
    spec.validate()?;
    let cache = load_cache(spec)?;
    let rate = spec.rate_fn()?;
    let table = FugacityTable::new(rate.clone())?;
    let profile = spec.profile()?;
    let (times, t_max) = sorted_times(spec);
    let d = spec.environment.dim;
    let outs: Vec<BulkOut> = jobs(spec)
        .into_par_iter()
        .map(|(n, r)| -> Result<BulkOut> {
            let (field, labeling) = replica_environment(spec, n, r)?;
            let giant = ClusterGraph::giant(&field, &labeling, n)?;
            let full = ClusterGraph::full(&field, n)?;
            let coef = coefficients(spec, &giant, cache.as_ref())?;
            let eta0 = sample_product_measure(&table, &profile, &full, 1.0, run_seed(spec, TAG_SAMPLE, n, r))?;
            let particles = eta0.iter().map(|&k| k as u64).sum();
            let snaps = simulate_kmc(&full, &rate, eta0.clone(), t_max, &times, run_seed(spec, TAG_KMC, n, r))?;
            // ρ̃ solves the m = 1 equation with the cluster's σ.
            let (grid0, tilde) = pde_snapshots(spec, &table, &profile, 1.0, coef.sigma, &times)?;
            let in_giant: Vec<bool> = (0..full.len()).map(|i| labeling.in_giant(full.site(i))).collect();
            let giant_values = |g: &TestFunction| -> Vec<f64> {
                full.sample(|x| g.value(x))
                    .into_iter()
                    .zip(&in_giant)
                    .map(|(v, &inside)| if inside { v } else { 0.0 })
                    .collect()
            };
            let off_values = |g: &TestFunction| -> Vec<f64> {
                full.sample(|x| g.value(x))
                    .into_iter()
                    .zip(&in_giant)
                    .map(|(v, &inside)| if inside { 0.0 } else { v })
                    .collect()
            };
            let mut order: Vec<usize> = (0..times.len()).collect();
            order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
            let mut rows = Vec::new();
            let mut trap_lhs = Vec::new();
            let gv: Vec<(Vec<f64>, Vec<f64>)> = spec.test_functions.iter().map(|g| (giant_values(g), off_values(g))).collect();
            let w = full.measure_weight();
            for (k, &ti) in order.iter().enumerate() {
                let t = times[ti];
                let occ = &snaps[k].occupancy;
                let composite = bulk_profile(&tilde[ti], &grid0, coef.m_hat)?;
                for (gi, g) in spec.test_functions.iter().enumerate() {
                    let emp = empirical_measure(&full, occ, g);
                    let tilde_int = tilde[ti].integrate(g);
                    rows.push(GapRow::new("composite", n, t, gi, r, emp, composite.integrate(g)));
                    rows.push(GapRow::new("naive", n, t, gi, r, emp, tilde_int));
                    let emp_giant = empirical_measure_values(&full, occ, &gv[gi].0);
                    rows.push(GapRow::new("giant", n, t, gi, r, emp_giant, coef.m_hat * tilde_int));
                    let off = &gv[gi].1;
                    let diff: f64 = off
                        .iter()
                        .zip(eta0.iter().zip(occ))
                        .map(|(v, (&a, &b))| v * (a as f64 - b as f64))
                        .sum();
                    trap_lhs.push((t, gi, (diff * w).abs()));
                }
            }
            let conservation = trap_conservation(&full, &labeling, &eta0, &snaps, n, r);
            Ok(BulkOut {
                info: ReplicaInfo {
                    n,
                    replica: r,
                    env_seed: env_seed(spec, n, r),
                    m_hat: coef.m_hat,
                    sigma: coef.sigma,
                    sites: full.len(),
                    particles,
                    events: snaps.last().map_or(0, |s| s.event_count),
                },
                rows,
                conservation,
                trap_lhs,
                grid0,
            })
        })
        .collect::<Result<_>>()?;

    // γ from the largest finite-cluster diameter per scale, over replicas.
    let mut points: Vec<(usize, usize)> = Vec::new();
    for &n in &spec.ladder.scales {
        let max = outs
            .iter()
            .filter(|o| o.info.n == n)
            .map(|o| o.conservation.max_finite_diameter)
            .max()
            .unwrap_or(0);
        points.push((n, max));
    }
    let fit = fit_log_growth(&points);
    let mut report = ComparisonReport::new(ExperimentKind::Bulk, spec.clone());
    let mut scales = reference_scales(spec, "composite", &outs[0].grid0);
    scales.extend(reference_scales(spec, "naive", &outs[0].grid0));
    scales.extend(reference_scales(spec, "giant", &outs[0].grid0));
    let mut bulk = BulkSection {
        conservation: Vec::new(),
        traps: Vec::new(),
        diameter_points: points,
        diameter_fit: fit,
    };
    for o in outs {
        let n = o.info.n;
        let nf = n as f64;
        for &(t, gi, lhs) in &o.trap_lhs {
            let lip = spec.test_functions[gi].lipschitz_inf(d);
            let rhs = lip * fit.gamma * (1.0 + nf).ln() / nf.powi(d as i32 + 1) * o.conservation.off_cluster_particles as f64;
            bulk.traps.push(TrapRow {
                n,
                replica: o.info.replica,
                t,
                test: gi,
                lhs,
                rhs,
                holds: lhs <= rhs,
            });
        }
        bulk.conservation.push(o.conservation);
        report.replicas.push(o.info);
        report.rows.extend(o.rows);
    }
    report.bulk = Some(bulk);
    report.summarize(&scales);
    Ok(report)
}

fn trap_conservation(
    full: &ClusterGraph,
    labeling: &ClusterLabeling,
    eta0: &[u32],
    snaps: &[Snapshot],
    n: usize,
    replica: usize,
) -> ConservationRow {
    let num = labeling.num_clusters();
    let giant = labeling.giant_id();
    // Isolated sites get their own slot after the cluster ids.
    let slot = |i: usize| -> Option<usize> {
        match labeling.label(full.site(i)) {
            Some(id) if Some(id) == giant => None,
            Some(id) => Some(id as usize),
            None => Some(num + i),
        }
    };
    let count = |occ: &[u32]| -> std::collections::BTreeMap<usize, u64> {
        let mut m = std::collections::BTreeMap::new();
        for (i, &k) in occ.iter().enumerate() {
            if let Some(s) = slot(i) {
                *m.entry(s).or_insert(0) += k as u64;
            }
        }
        m
    };
    let c0 = count(eta0);
    let mut bad = std::collections::BTreeSet::new();
    for s in snaps {
        let ct = count(&s.occupancy);
        for (k, v) in &c0 {
            if ct.get(k) != Some(v) {
                bad.insert(*k);
            }
        }
    }
    let stats = cluster_diameter_stats(labeling, true);
    ConservationRow {
        n,
        replica,
        finite_clusters: c0.len(),
        off_cluster_particles: c0.values().sum(),
        violations: bad.len(),
        max_finite_diameter: stats.max,
    }
}

/// Time-averaged V_ℓ along a stationary trajectory started from ν_ρ on
/// the giant cluster, for every radius in the ladder.
pub fn run_replacement_diagnostic(spec: &ExperimentSpec) -> Result<ComparisonReport> {
    spec.validate()?;
    let dg = &spec.diagnostics;
    let n = dg.replacement_scale;
    if let Some(&ell) = dg.block_radii.iter().find(|&&l| 2 * l + 1 > n) {
        return Err(Error::Config(format!(
            "window side {n} is smaller than the block side {} for radius {ell}",
            2 * ell + 1
        )));
    }
    let rate = spec.rate_fn()?;
    let table = FugacityTable::new(rate.clone())?;
    let profile = Profile::Constant {
        rho: dg.replacement_density,
    };
    let times: Vec<f64> = (0..=dg.replacement_samples)
        .map(|k| dg.replacement_t_end * k as f64 / dg.replacement_samples as f64)
        .collect();
    let outs: Vec<(ReplicaInfo, Vec<LadderRow>)> = (0..spec.ladder.replicas)
        .into_par_iter()
        .map(|r| -> Result<_> {
            let (field, labeling) = replica_environment(spec, n, r)?;
            let graph = ClusterGraph::giant(&field, &labeling, n)?;
            let m_hat = graph.len() as f64 / graph.lattice().num_sites() as f64;
            let eta0 = sample_product_measure(&table, &profile, &graph, m_hat, run_seed(spec, TAG_SAMPLE, n, r))?;
            let particles = eta0.iter().map(|&k| k as u64).sum();
            let snaps = simulate_kmc(&graph, &rate, eta0, dg.replacement_t_end, &times, run_seed(spec, TAG_KMC, n, r))?;
            let rho_top = snaps
                .iter()
                .flat_map(|s| s.occupancy.iter())
                .copied()
                .max()
                .unwrap_or(0) as f64
                / m_hat
                + 1.0;
            let nodes = ((rho_top * 1024.0) as usize).max(257);
            let curve = JumpRateCurve::build(&table, rho_top, nodes)?;
            let mut rows = Vec::new();
            for &ell in &dg.block_radii {
                let mut acc = 0.0;
                let mut clamped = 0;
                for s in &snaps {
                    let v = replacement_statistic(&graph, &s.occupancy, &rate, ell, m_hat, &curve)?;
                    acc += v.mean;
                    clamped += v.clamped;
                }
                rows.push(LadderRow {
                    n,
                    replica: r,
                    ell,
                    value: acc / snaps.len() as f64,
                    clamped,
                });
            }
            let info = ReplicaInfo {
                n,
                replica: r,
                env_seed: env_seed(spec, n, r),
                m_hat,
                sigma: 0.0,
                sites: graph.len(),
                particles,
                events: snaps.last().map_or(0, |s| s.event_count),
            };
            Ok((info, rows))
        })
        .collect::<Result<_>>()?;
    let mut report = ComparisonReport::new(ExperimentKind::Replacement, spec.clone());
    for (info, rows) in outs {
        report.replicas.push(info);
        report.ladder.extend(rows);
    }
    report.ladder_summary = dg
        .block_radii
        .iter()
        .map(|&ell| {
            let vals: Vec<f64> = report.ladder.iter().filter(|r| r.ell == ell).map(|r| r.value).collect();
            let (mean, stderr) = mean_stderr(&vals);
            LadderSummary { ell, mean, stderr }
        })
        .collect();
    Ok(report)
}

/// sup over observation times (and t = 0) of |π^N_t[G^λ_N] − π^N_t[G]|
/// for the hydrodynamic start, per N and replica.
pub fn run_corrected_measure_diagnostic(spec: &ExperimentSpec, lambda: f64, g: &TestFunction) -> Result<ComparisonReport> {
    spec.validate()?;
    g.validate(spec.environment.dim)?;
    let cache = load_cache(spec)?;
    let rate = spec.rate_fn()?;
    let table = FugacityTable::new(rate.clone())?;
    let profile = spec.profile()?;
    let (mut times, t_max) = sorted_times(spec);
    if !times.contains(&0.0) {
        times.push(0.0);
    }
    let d = spec.environment.dim;
    let outs: Vec<(ReplicaInfo, CorrectedRow)> = jobs(spec)
        .into_par_iter()
        .map(|(n, r)| -> Result<_> {
            let (field, labeling) = replica_environment(spec, n, r)?;
            let graph = ClusterGraph::giant(&field, &labeling, n)?;
            let coef = coefficients(spec, &graph, cache.as_ref())?;
            let mut diffusivity = vec![0.0; d * d];
            for k in 0..d {
                diffusivity[k * d + k] = coef.sigma;
            }
            let sol = solve_resolvent(&graph, lambda, ResolventRhs::Test { g, diffusivity: &diffusivity })?;
            let plain = graph.sample(|x| g.value(x));
            let eta0 = sample_product_measure(&table, &profile, &graph, coef.m_hat, run_seed(spec, TAG_SAMPLE, n, r))?;
            let particles = eta0.iter().map(|&k| k as u64).sum();
            let snaps = simulate_kmc(&graph, &rate, eta0, t_max, &times, run_seed(spec, TAG_KMC, n, r))?;
            let sup_gap = snaps
                .iter()
                .map(|s| {
                    (empirical_measure_values(&graph, &s.occupancy, &sol.values)
                        - empirical_measure_values(&graph, &s.occupancy, &plain))
                    .abs()
                })
                .fold(0.0, f64::max);
            let gap = corrector_gap(&graph, g, &sol);
            Ok((
                ReplicaInfo {
                    n,
                    replica: r,
                    env_seed: env_seed(spec, n, r),
                    m_hat: coef.m_hat,
                    sigma: coef.sigma,
                    sites: graph.len(),
                    particles,
                    events: snaps.last().map_or(0, |s| s.event_count),
                },
                CorrectedRow {
                    n,
                    replica: r,
                    sup_gap,
                    l2_gap: gap.l2,
                    residual: sol.residual_norm,
                },
            ))
        })
        .collect::<Result<_>>()?;
    let mut report = ComparisonReport::new(ExperimentKind::CorrectedMeasure, spec.clone());
    for (info, row) in outs {
        report.replicas.push(info);
        report.corrected.push(row);
    }
    report.corrected_summary = spec
        .ladder
        .scales
        .iter()
        .map(|&n| {
            let rows: Vec<&CorrectedRow> = report.corrected.iter().filter(|r| r.n == n).collect();
            let (sup_gap_mean, sup_gap_stderr) = mean_stderr(&rows.iter().map(|r| r.sup_gap).collect::<Vec<_>>());
            let l2_gap_mean = mean_stderr(&rows.iter().map(|r| r.l2_gap).collect::<Vec<_>>()).0;
            CorrectedSummary {
                n,
                sup_gap_mean,
                sup_gap_stderr,
                l2_gap_mean,
            }
        })
        .collect();
    Ok(report)
}
