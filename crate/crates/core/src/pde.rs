//! Explicit conservative finite volumes for ∂ₜρ = m σ Δφ(ρ/m) on the unit
//! torus (or a box with zero-flux walls), the bulk composite
//! m·ρ̃ + (1 − m)·ρ₀, and closed-form references for linear φ.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Boundary;
use crate::macroscopic::{Profile, TestFunction};
use crate::zrp::{FugacityTable, JumpRateCurve};

/// Fraction of the CFL limit used by automatic stepping.
pub const CFL_SAFETY: f64 = 0.9;
const CURVE_NODES_PER_UNIT: f64 = 4096.0;

/// Densities at the nodes x = i·h, i ∈ {0..n−1}^d, row-major with the
/// first coordinate slowest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub n: usize,
    pub dim: usize,
    pub boundary: Boundary,
    pub time: f64,
    pub values: Vec<f64>,
}

impl DensityGrid {
    pub fn from_profile(profile: &Profile, n: usize, dim: usize, boundary: Boundary) -> Result<Self> {
        profile.validate(dim)?;
        if n < 3 {
            return Err(Error::Parameter(format!("grid needs at least 3 nodes per axis (got {n})")));
        }
        let mut grid = DensityGrid {
            n,
            dim,
            boundary,
            time: 0.0,
            values: vec![0.0; n.pow(dim as u32)],
        };
        let mut x = vec![0.0; dim];
        for i in 0..grid.values.len() {
            grid.position_into(i, &mut x);
            grid.values[i] = profile.eval(&x);
        }
        Ok(grid)
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn coords(&self, i: usize) -> Vec<usize> {
        let mut c = vec![0; self.dim];
        let mut rem = i;
        for k in (0..self.dim).rev() {
            c[k] = rem % self.n;
            rem /= self.n;
        }
        c
    }

    pub fn position_into(&self, i: usize, x: &mut [f64]) {
        let mut rem = i;
        for k in (0..self.dim).rev() {
            x[k] = (rem % self.n) as f64 * self.h();
            rem /= self.n;
        }
    }

    /// Σ ρ h^d.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.h().powi(self.dim as i32)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Multilinear interpolation at x (periodic wrap, or clamped in a box).
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let n = self.n;
        let mut base = vec![0usize; self.dim];
        let mut frac = vec![0.0; self.dim];
        for k in 0..self.dim {
            let u = x[k] * n as f64;
            let (i, f) = match self.boundary {
                Boundary::Periodic => {
                    let u = u.rem_euclid(n as f64);
                    let i = (u.floor() as usize).min(n - 1);
                    (i, u - i as f64)
                }
                Boundary::Free => {
                    let u = u.clamp(0.0, (n - 1) as f64);
                    let i = (u.floor() as usize).min(n - 2);
                    (i, u - i as f64)
                }
            };
            base[k] = i;
            frac[k] = f;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << self.dim) {
            let mut w = 1.0;
            let mut idx = 0;
            for k in 0..self.dim {
                let up = (corner >> k) & 1 == 1;
                let c = if up { (base[k] + 1) % n } else { base[k] };
                w *= if up { frac[k] } else { 1.0 - frac[k] };
                idx = idx * n + c;
            }
            if w != 0.0 {
                acc += w * self.values[idx];
            }
        }
        acc
    }

    /// Node quadrature of ∫ G ρ.
    pub fn integrate(&self, g: &TestFunction) -> f64 {
        let mut x = vec![0.0; self.dim];
        let mut sum = 0.0;
        for (i, &r) in self.values.iter().enumerate() {
            self.position_into(i, &mut x);
            sum += g.value(&x) * r;
        }
        sum * self.h().powi(self.dim as i32)
    }

    fn same_shape(&self, other: &DensityGrid) -> Result<()> {
        if self.n != other.n || self.dim != other.dim {
            return Err(Error::Shape {
                expected: vec![self.n; self.dim],
                got: vec![other.n; other.dim],
            });
        }
        Ok(())
    }

    pub fn linf_distance(&self, other: &DensityGrid) -> Result<f64> {
        self.same_shape(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn l1_distance(&self, other: &DensityGrid) -> Result<f64> {
        self.same_shape(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * self.h().powi(self.dim as i32))
    }

    /// Rows of `(x-index…, value)` for CSV export.
    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        (0..self.len())
            .map(|i| {
                let mut row: Vec<String> = self.coords(i).iter().map(|c| c.to_string()).collect();
                row.push(format!("{:.17e}", self.values[i]));
                row
            })
            .collect()
    }
}

/// ∂ₜρ = m σ Δφ(ρ/m) with φ the jump-rate curve of the rate function.
#[derive(Debug, Clone)]
pub struct NonlinearHeat {
    pub m: f64,
    pub sigma: f64,
    curve: JumpRateCurve,
}

impl NonlinearHeat {
    /// `rho_max` bounds the densities that will be seen (the maximum
    /// principle keeps ρ within the range of ρ₀).
    pub fn new(table: &FugacityTable, m: f64, sigma: f64, rho_max: f64) -> Result<Self> {
        if !(m > 0.0 && m <= 1.0) {
            return Err(Error::Parameter(format!("m must lie in (0, 1] (got {m})")));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::Parameter(format!("sigma must be positive (got {sigma})")));
        }
        let top = (rho_max / m).max(1e-3) * 1.05;
        let nodes = ((top * CURVE_NODES_PER_UNIT).ceil() as usize).clamp(257, 1 << 20);
        let curve = JumpRateCurve::build(table, top, nodes)?;
        Ok(NonlinearHeat { m, sigma, curve })
    }

    pub fn curve(&self) -> &JumpRateCurve {
        &self.curve
    }

    pub fn phi(&self, rho: f64) -> f64 {
        self.curve.eval(rho / self.m)
    }

    /// h²/(2dσ sup φ′) over the grid's current density range.
    pub fn max_dt(&self, grid: &DensityGrid) -> f64 {
        let lip = self.curve.lipschitz_on(grid.min() / self.m, grid.max() / self.m);
        let h = grid.h();
        if lip <= 0.0 {
            return f64::INFINITY;
        }
        h * h / (2.0 * grid.dim as f64 * self.sigma * lip)
    }

    /// One forward-Euler step of the conservative scheme.
    pub fn step(&self, grid: &mut DensityGrid, dt: f64) -> Result<()> {
        let max_dt = self.max_dt(grid);
        if !(dt > 0.0) || dt > max_dt * (1.0 + 1e-12) {
            return Err(Error::Cfl { dt, max_dt });
        }
        if !self.curve.contains(grid.max() / self.m) {
            return Err(Error::Range(format!(
                "density {} exceeds the tabulated range {}",
                grid.max(),
                self.curve.rho_max() * self.m
            )));
        }
        let phi: Vec<f64> = grid.values.par_iter().map(|&r| self.phi(r)).collect();
        let (n, d) = (grid.n, grid.dim);
        let coef = dt * self.m * self.sigma / (grid.h() * grid.h());
        let periodic = grid.boundary == Boundary::Periodic;
        let mut stride = grid.len();
        let mut update = vec![0.0; grid.len()];
        for _axis in 0..d {
            stride /= n;
            let block = n * stride;
            update
                .par_chunks_mut(block)
                .zip(phi.par_chunks(block))
                .for_each(|(upd, ph)| {
                    for inner in 0..stride {
                        // Face fluxes F_{c+1/2} = φ_{c+1} − φ_c, each used twice.
                        for c in 0..n {
                            let here = c * stride + inner;
                            let next = if c + 1 < n {
                                Some((c + 1) * stride + inner)
                            } else if periodic {
                                Some(inner)
                            } else {
                                None
                            };
                            if let Some(j) = next {
                                let flux = ph[j] - ph[here];
                                upd[here] += flux;
                                upd[j] -= flux;
                            }
                        }
                    }
                });
        }
        for (r, u) in grid.values.iter_mut().zip(&update) {
            *r += coef * u;
        }
        grid.time += dt;
        Ok(())
    }

    /// Steps to `t_end` (automatic dt unless `dt` is given) and returns
    /// snapshots at `times`, linearly interpolated within the step that
    /// crosses each time. The last step is shortened to land on `t_end`.
    pub fn solve_to_time(
        &self,
        grid: &DensityGrid,
        t_end: f64,
        times: &[f64],
        dt: Option<f64>,
    ) -> Result<(DensityGrid, Vec<DensityGrid>)> {
        if !(t_end >= 0.0) {
            return Err(Error::Parameter(format!("t_end must be nonnegative (got {t_end})")));
        }
        let mut pending: Vec<(usize, f64)> = times.iter().copied().enumerate().collect();
        if let Some(&(_, bad)) = pending.iter().find(|(_, t)| !(*t >= grid.time && *t <= t_end)) {
            return Err(Error::Parameter(format!("snapshot time {bad} outside [{}, {t_end}]", grid.time)));
        }
        pending.sort_by(|a, b| a.1.total_cmp(&b.1));
        let mut out: Vec<Option<DensityGrid>> = vec![None; times.len()];
        let mut cur = grid.clone();
        let mut pi = 0;
        let emit = |pi: &mut usize, out: &mut Vec<Option<DensityGrid>>, prev: &DensityGrid, next: &DensityGrid| {
            while *pi < pending.len() && pending[*pi].1 <= next.time {
                let (slot, t) = pending[*pi];
                let mut snap = next.clone();
                if next.time > prev.time {
                    let w = (t - prev.time) / (next.time - prev.time);
                    for (s, (a, b)) in snap.values.iter_mut().zip(prev.values.iter().zip(&next.values)) {
                        *s = a + w * (b - a);
                    }
                }
                snap.time = t;
                out[slot] = Some(snap);
                *pi += 1;
            }
        };
        emit(&mut pi, &mut out, &cur, &cur);
        let fixed = dt;
        let auto = CFL_SAFETY * self.max_dt(&cur);
        while cur.time < t_end {
            let step = fixed.unwrap_or(auto).min(t_end - cur.time);
            let prev = cur.clone();
            self.step(&mut cur, step)?;
            if t_end - cur.time < 1e-14 * t_end.max(1.0) {
                cur.time = t_end;
            }
            emit(&mut pi, &mut out, &prev, &cur);
        }
        Ok((cur, out.into_iter().map(|s| s.expect("every snapshot emitted")).collect()))
    }
}

/// m·ρ̃ + (1 − m)·ρ₀ nodewise.
pub fn bulk_profile(tilde: &DensityGrid, rho0: &DensityGrid, m: f64) -> Result<DensityGrid> {
    tilde.same_shape(rho0)?;
    if !(0.0..=1.0).contains(&m) {
        return Err(Error::Parameter(format!("m must lie in [0, 1] (got {m})")));
    }
    let mut out = tilde.clone();
    for (o, r0) in out.values.iter_mut().zip(&rho0.values) {
        *o = m * *o + (1.0 - m) * r0;
    }
    Ok(out)
}

/// Exact solution at time t of ∂ₜρ = σΔρ on the torus from a constant,
/// cosine or wrapped-Gaussian profile.
pub fn heat_reference(profile: &Profile, sigma: f64, t: f64) -> Option<Profile> {
    match profile {
        Profile::Constant { .. } => Some(profile.clone()),
        Profile::Cosine { mean, amp, k } => {
            let k2: f64 = k.iter().map(|&v| (v * v) as f64).sum();
            let decay = (-4.0 * std::f64::consts::PI.powi(2) * k2 * sigma * t).exp();
            Some(Profile::Cosine {
                mean: *mean,
                amp: amp * decay,
                k: k.clone(),
            })
        }
        Profile::Gaussian { base, amp, center, std } => {
            let std_t = (std * std + 2.0 * sigma * t).sqrt();
            Some(Profile::Gaussian {
                base: *base,
                amp: amp * (std / std_t).powi(center.len() as i32),
                center: center.clone(),
                std: std_t,
            })
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zrp::JumpRateFn;
    use proptest::prelude::*;

    fn linear(m: f64, sigma: f64, rho_max: f64) -> NonlinearHeat {
        NonlinearHeat::new(&FugacityTable::new(JumpRateFn::Linear).unwrap(), m, sigma, rho_max).unwrap()
    }

    fn gaussian() -> Profile {
        Profile::Gaussian {
            base: 0.2,
            amp: 1.0,
            center: vec![0.5, 0.5],
            std: 0.08,
        }
    }

    #[test]
    fn constant_profile_is_stationary() {
        let eq = NonlinearHeat::new(&FugacityTable::new(JumpRateFn::Indicator).unwrap(), 0.7, 0.5, 2.0).unwrap();
        let g = DensityGrid::from_profile(&Profile::Constant { rho: 0.9 }, 16, 2, Boundary::Periodic).unwrap();
        let (end, _) = eq.solve_to_time(&g, 0.01, &[], None).unwrap();
        assert!(end.values.iter().all(|&v| v == 0.9));
    }

    #[test]
    fn cfl_violation_names_admissible_step() {
        let eq = linear(1.0, 1.0, 2.0);
        let mut g = DensityGrid::from_profile(&gaussian(), 32, 2, Boundary::Periodic).unwrap();
        let max = eq.max_dt(&g);
        assert!((max - 1.0 / (32.0 * 32.0 * 4.0)).abs() < 1e-12);
        match eq.step(&mut g, 2.0 * max) {
            Err(Error::Cfl { max_dt, .. }) => assert_eq!(max_dt, max),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mass_conserved_over_ten_thousand_steps() {
        let eq = NonlinearHeat::new(&FugacityTable::new(JumpRateFn::Indicator).unwrap(), 0.8, 0.6, 2.0).unwrap();
        let profile = Profile::SmoothStep { low: 0.3, high: 1.2, width: 0.2 };
        let mut g = DensityGrid::from_profile(&profile, 32, 2, Boundary::Periodic).unwrap();
        let m0 = g.mass();
        let dt = 0.9 * eq.max_dt(&g);
        for _ in 0..10_000 {
            eq.step(&mut g, dt).unwrap();
        }
        assert!(((g.mass() - m0) / m0).abs() < 1e-12, "{}", (g.mass() - m0) / m0);
        assert!(g.min() >= 0.0);
        // Zero-flux box conserves mass too.
        let mut b = DensityGrid::from_profile(&profile, 24, 2, Boundary::Free).unwrap();
        let b0 = b.mass();
        for _ in 0..2000 {
            eq.step(&mut b, dt).unwrap();
        }
        assert!(((b.mass() - b0) / b0).abs() < 1e-12);
    }

    #[test]
    fn linear_case_matches_heat_kernel_at_second_order() {
        let eq = linear(1.0, 1.0, 1.5);
        let p = gaussian();
        let exact = heat_reference(&p, 1.0, 0.05).unwrap();
        let mut errs = Vec::new();
        for n in [32, 64, 128] {
            let g = DensityGrid::from_profile(&p, n, 2, Boundary::Periodic).unwrap();
            let (end, _) = eq.solve_to_time(&g, 0.05, &[], None).unwrap();
            let r = DensityGrid::from_profile(&exact, n, 2, Boundary::Periodic).unwrap();
            errs.push(end.linf_distance(&r).unwrap());
        }
        for w in errs.windows(2) {
            let slope = (w[0] / w[1]).log2();
            assert!((slope - 2.0).abs() < 0.3, "{errs:?}");
        }
    }

    #[test]
    fn cosine_mode_decays_at_the_exact_rate() {
        let eq = linear(0.5, 0.7, 2.0);
        let p = Profile::Cosine { mean: 1.0, amp: 0.4, k: vec![1, 0] };
        let g = DensityGrid::from_profile(&p, 64, 2, Boundary::Periodic).unwrap();
        let (end, _) = eq.solve_to_time(&g, 0.02, &[], None).unwrap();
        // m σ Δ(ρ/m) = σ Δρ for linear φ.
        let r = DensityGrid::from_profile(&heat_reference(&p, 0.7, 0.02).unwrap(), 64, 2, Boundary::Periodic).unwrap();
        assert!(end.linf_distance(&r).unwrap() < 2e-3);
    }

    #[test]
    fn snapshots_and_richardson_pair() {
        let eq = NonlinearHeat::new(&FugacityTable::new(JumpRateFn::Indicator).unwrap(), 1.0, 1.0, 1.5).unwrap();
        let g = DensityGrid::from_profile(&gaussian(), 32, 2, Boundary::Periodic).unwrap();
        let (same, snaps) = eq.solve_to_time(&g, 0.0, &[0.0], None).unwrap();
        assert_eq!(same, g);
        assert_eq!(snaps[0], g);
        let dt = 0.5 * eq.max_dt(&g);
        let t = 0.01;
        let run = |dt: f64| eq.solve_to_time(&g, t, &[], Some(dt)).unwrap().0;
        let (a, b, c) = (run(dt), run(dt / 2.0), run(dt / 4.0));
        let e1 = a.l1_distance(&b).unwrap();
        let e2 = b.l1_distance(&c).unwrap();
        assert!((e1 / e2 - 2.0).abs() < 0.3, "{e1} {e2}");
        // Maximum principle along the snapshots (linear φ).
        let lin = linear(1.0, 1.0, 1.5);
        let times: Vec<f64> = (0..=10).map(|k| k as f64 * 0.002).collect();
        let (_, snaps) = lin.solve_to_time(&g, 0.02, &times, None).unwrap();
        for w in snaps.windows(2) {
            assert!(w[1].max() <= w[0].max() + 1e-15);
            assert!(w[1].min() >= w[0].min() - 1e-15);
        }
        assert!(snaps.iter().zip(&times).all(|(s, &t)| s.time == t));
    }

    #[test]
    fn bulk_profile_identities() {
        let eq = NonlinearHeat::new(&FugacityTable::new(JumpRateFn::Indicator).unwrap(), 1.0, 0.8, 2.0).unwrap();
        let p = Profile::Step { left: 1.0, right: 0.2 };
        let r0 = DensityGrid::from_profile(&p, 32, 2, Boundary::Periodic).unwrap();
        let (tilde, _) = eq.solve_to_time(&r0, 0.02, &[], None).unwrap();
        assert_eq!(bulk_profile(&tilde, &r0, 1.0).unwrap().values, tilde.values);
        assert_eq!(bulk_profile(&r0, &r0, 0.7).unwrap().values, r0.values);
        let b = bulk_profile(&tilde, &r0, 0.7).unwrap();
        for i in 0..b.len() {
            assert!((b.values[i] - (0.7 * tilde.values[i] + 0.3 * r0.values[i])).abs() < 1e-15);
        }
        let other = DensityGrid::from_profile(&p, 16, 2, Boundary::Periodic).unwrap();
        assert!(bulk_profile(&tilde, &other, 0.7).is_err());
    }

    #[test]
    fn interpolation_is_exact_at_nodes_and_linear_between() {
        let p = Profile::Cosine { mean: 1.0, amp: 0.5, k: vec![1, 2] };
        let g = DensityGrid::from_profile(&p, 16, 2, Boundary::Periodic).unwrap();
        let mut x = vec![0.0; 2];
        for i in 0..g.len() {
            g.position_into(i, &mut x);
            assert!((g.interpolate(&x) - g.values[i]).abs() < 1e-15);
        }
        let mid = g.interpolate(&[0.5 / 16.0, 0.0]);
        assert!((mid - 0.5 * (g.values[0] + g.values[16])).abs() < 1e-15);
        let wrap = g.interpolate(&[15.5 / 16.0, 0.0]);
        assert!((wrap - 0.5 * (g.values[15 * 16] + g.values[0])).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn scheme_is_monotone_and_nonnegative(
            base in proptest::collection::vec(0.0f64..1.5, 64),
            bump in proptest::collection::vec(0.0f64..0.5, 64),
        ) {
            let eq = NonlinearHeat::new(&FugacityTable::new(JumpRateFn::Capped { cap: 2 }).unwrap(), 0.8, 1.0, 2.5).unwrap();
            let mk = |v: Vec<f64>| DensityGrid { n: 8, dim: 2, boundary: Boundary::Periodic, time: 0.0, values: v };
            let lo = mk(base.clone());
            let hi = mk(base.iter().zip(&bump).map(|(a, b)| a + b).collect());
            let (a, _) = eq.solve_to_time(&lo, 0.05, &[], None).unwrap();
            let (b, _) = eq.solve_to_time(&hi, 0.05, &[], None).unwrap();
            prop_assert!(a.values.iter().zip(&b.values).all(|(x, y)| x <= y));
            prop_assert!(a.min() >= 0.0);
        }
    }
}
