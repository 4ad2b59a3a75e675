//! Grand-canonical single-site measures ν̄_φ(η = k) = φ^k / (g(k)! Z(φ)).
//!
//! All series are summed term by term with t_k = t_{k-1}·φ/g(k). Once
//! r = φ/g(k+1) < 1, monotonicity of g bounds every remaining ratio by r,
//! so the tails are dominated by geometric series and the truncation error
//! is certified rather than estimated.

use serde::{Deserialize, Serialize};

use super::rate::JumpRateFn;
use crate::error::{Error, Result};

/// Relative truncation tolerance certified for every series.
pub const SERIES_TOL: f64 = 1e-12;
/// Target accuracy |R(φ) − ρ| of the density inversion.
pub const INVERSION_TOL: f64 = 1e-10;
/// Agreement required between ν_ρ(g) and φ(ρ).
pub const IDENTITY_TOL: f64 = 1e-9;
const MAX_TERMS: usize = 50_000_000;

/// Raw (unnormalized) series sums at one fugacity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    /// Σ φ^k/g(k)!
    pub z: f64,
    /// Σ k φ^k/g(k)!
    pub first: f64,
    /// Σ k² φ^k/g(k)!
    pub second: f64,
    /// Σ g(k) φ^k/g(k)!
    pub rate: f64,
}

impl Moments {
    pub fn mean(&self) -> f64 {
        self.first / self.z
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        (self.second / self.z - m * m).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FugacityTable {
    rate_fn: JumpRateFn,
    phi_c: f64,
}

impl FugacityTable {
    pub fn new(rate_fn: JumpRateFn) -> Result<Self> {
        rate_fn.validate()?;
        let phi_c = rate_fn.natural_phi_c();
        Ok(FugacityTable { rate_fn, phi_c })
    }

    /// Overrides the radius of convergence. Only values at or below the
    /// natural radius make sense; larger ones are rejected.
    pub fn with_phi_c(mut self, phi_c: f64) -> Result<Self> {
        if !(phi_c > 0.0) || phi_c > self.rate_fn.natural_phi_c() {
            return Err(Error::Parameter(format!(
                "phi_c override {phi_c} must lie in (0, {}]",
                self.rate_fn.natural_phi_c()
            )));
        }
        self.phi_c = phi_c;
        Ok(self)
    }

    pub fn rate_fn(&self) -> &JumpRateFn {
        &self.rate_fn
    }

    pub fn phi_c(&self) -> f64 {
        self.phi_c
    }

    fn check_fugacity(&self, phi: f64) -> Result<()> {
        if !(phi >= 0.0) {
            return Err(Error::Parameter(format!("fugacity must be >= 0 (got {phi})")));
        }
        if phi >= self.phi_c {
            return Err(Error::Divergence {
                phi,
                phi_c: self.phi_c,
            });
        }
        Ok(())
    }

    pub fn moments(&self, phi: f64) -> Result<Moments> {
        self.check_fugacity(phi)?;
        let g = &self.rate_fn;
        let gstar = g.gstar();
        let (mut z, mut first, mut second, mut rate) = (1.0, 0.0, 0.0, 0.0);
        if phi == 0.0 {
            return Ok(Moments { z, first, second, rate });
        }
        let mut term = 1.0;
        let mut k: usize = 0;
        loop {
            if k >= MAX_TERMS {
                return Err(Error::Range(format!(
                    "series at fugacity {phi} needs more than {MAX_TERMS} terms"
                )));
            }
            let g_next = g.eval(k as u32 + 1);
            let r = phi / g_next;
            if r < 1.0 && k > 0 {
                let kf = k as f64;
                let s0 = r / (1.0 - r);
                let s1 = r / ((1.0 - r) * (1.0 - r));
                let s2 = r * (1.0 + r) / ((1.0 - r) * (1.0 - r) * (1.0 - r));
                let tail_z = term * s0;
                let tail_first = term * (kf * s0 + s1);
                let tail_second = term * (kf * kf * s0 + 2.0 * kf * s1 + s2);
                let tail_rate = term * (g.eval(k as u32) * s0 + gstar * s1);
                if tail_z <= SERIES_TOL * z
                    && tail_first <= SERIES_TOL * first
                    && tail_second <= SERIES_TOL * second
                    && tail_rate <= SERIES_TOL * rate
                {
                    break;
                }
            }
            k += 1;
            term *= r;
            let kf = k as f64;
            z += term;
            first += kf * term;
            second += kf * kf * term;
            rate += g_next * term;
            if !z.is_finite() || !second.is_finite() {
                return Err(Error::Range(format!("series overflow at fugacity {phi}")));
            }
        }
        Ok(Moments { z, first, second, rate })
    }

    /// Z(φ) = Σ φ^k / g(k)!.
    pub fn partition_function(&self, phi: f64) -> Result<f64> {
        Ok(self.moments(phi)?.z)
    }

    /// R(φ) = ν̄_φ(η(0)).
    pub fn density_of_fugacity(&self, phi: f64) -> Result<f64> {
        Ok(self.moments(phi)?.mean())
    }

    /// Largest density reachable below phi_c, or ∞.
    fn density_limit(&self) -> Result<f64> {
        if self.phi_c < self.rate_fn.natural_phi_c() {
            // Overridden radius: R stays bounded by its value at phi_c.
            return self.density_of_fugacity(self.phi_c * (1.0 - 1e-12));
        }
        // Z(φ) → ∞ as φ ↑ lim g(k), so R is onto [0, ∞).
        Ok(f64::INFINITY)
    }

    /// φ(ρ): the unique fugacity with R(φ) = ρ.
    pub fn fugacity_of_density(&self, rho: f64) -> Result<f64> {
        if !(rho >= 0.0) || !rho.is_finite() {
            return Err(Error::Parameter(format!("density must be finite and >= 0 (got {rho})")));
        }
        if rho == 0.0 {
            return Ok(0.0);
        }
        let limit = self.density_limit()?;
        if rho >= limit {
            return Err(Error::Range(format!(
                "density {rho} exceeds the largest density {limit} reachable below phi_c"
            )));
        }
        // Bracket [lo, hi] with R(lo) < ρ ≤ R(hi).
        let mut lo = 0.0;
        let mut hi = if self.phi_c.is_finite() {
            self.phi_c
        } else {
            let mut h = rho.max(1.0) * self.rate_fn.eval(1);
            while self.density_of_fugacity(h)? < rho {
                lo = h;
                h *= 2.0;
            }
            h
        };
        // Safeguarded Newton on R(φ) − ρ with R'(φ) = Var/φ.
        let mut phi = if hi.is_finite() && self.phi_c.is_infinite() {
            0.5 * (lo + hi)
        } else {
            (rho / (1.0 + rho)) * hi
        };
        for _ in 0..400 {
            let m = self.moments(phi)?;
            let r = m.mean();
            let err = r - rho;
            if err.abs() < INVERSION_TOL {
                return Ok(phi);
            }
            if err < 0.0 {
                lo = phi;
            } else {
                hi = phi;
            }
            let slope = m.variance() / phi;
            let newton = phi - err / slope;
            phi = if slope > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= f64::EPSILON * hi {
                return Ok(phi);
            }
        }
        Err(Error::Range(format!("density inversion did not converge at rho = {rho}")))
    }

    /// ν_ρ(g), summed directly and checked against the identity ν̄_φ(g) = φ.
    pub fn mean_jump_rate(&self, rho: f64) -> Result<f64> {
        let phi = self.fugacity_of_density(rho)?;
        let direct = self.moments(phi)?;
        let value = direct.rate / direct.z;
        if (value - phi).abs() > IDENTITY_TOL * phi.max(1.0) {
            return Err(Error::Range(format!(
                "mean jump rate {value} disagrees with fugacity {phi} at rho = {rho}"
            )));
        }
        Ok(value)
    }

    /// dφ/dρ = φ / Var_φ(η), with the small-φ limit g(1).
    pub fn fugacity_derivative(&self, phi: f64) -> Result<f64> {
        if phi == 0.0 {
            return Ok(self.rate_fn.eval(1));
        }
        let m = self.moments(phi)?;
        Ok(phi / m.variance())
    }

    /// Single-site pmf of ν̄_φ, truncated once the remaining mass is below
    /// `SERIES_TOL`.
    pub fn pmf(&self, phi: f64) -> Result<Vec<f64>> {
        let z = self.partition_function(phi)?;
        let mut out = vec![1.0 / z];
        if phi == 0.0 {
            return Ok(out);
        }
        let mut mass = out[0];
        let mut term = out[0];
        let mut k = 0u32;
        while 1.0 - mass > SERIES_TOL {
            k += 1;
            term *= phi / self.rate_fn.eval(k);
            let r = phi / self.rate_fn.eval(k + 1);
            out.push(term);
            mass += term;
            // Certified tail of the normalized series.
            if r < 1.0 && term * r / (1.0 - r) <= SERIES_TOL {
                break;
            }
            if out.len() > MAX_TERMS {
                return Err(Error::Range(format!("pmf at fugacity {phi} too long")));
            }
        }
        Ok(out)
    }
}

/// Cubic Hermite table of ρ ↦ ν_ρ(g) on [0, rho_max], built from exact
/// values and derivatives at the nodes.
#[derive(Debug, Clone)]
pub struct JumpRateCurve {
    step: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
    lipschitz: f64,
}

impl JumpRateCurve {
    pub fn build(table: &FugacityTable, rho_max: f64, nodes: usize) -> Result<Self> {
        if !(rho_max > 0.0) || nodes < 2 {
            return Err(Error::Parameter("curve needs rho_max > 0 and >= 2 nodes".into()));
        }
        let step = rho_max / (nodes - 1) as f64;
        let mut values = Vec::with_capacity(nodes);
        let mut slopes = Vec::with_capacity(nodes);
        for i in 0..nodes {
            let rho = step * i as f64;
            let phi = table.fugacity_of_density(rho)?;
            values.push(phi);
            slopes.push(table.fugacity_derivative(phi)?);
        }
        let lipschitz = slopes.iter().copied().fold(0.0, f64::max).min(table.rate_fn().gstar());
        Ok(JumpRateCurve {
            step,
            values,
            slopes,
            lipschitz,
        })
    }

    pub fn rho_max(&self) -> f64 {
        self.step * (self.values.len() - 1) as f64
    }

    pub fn contains(&self, rho: f64) -> bool {
        (0.0..=self.rho_max()).contains(&rho)
    }

    /// Largest nodal slope over the whole table (an upper bound on the
    /// Lipschitz constant used for stability limits).
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Largest nodal slope over the nodes bracketing [lo, hi].
    pub fn lipschitz_on(&self, lo: f64, hi: f64) -> f64 {
        let last = self.values.len() - 1;
        let a = ((lo.max(0.0) / self.step).floor() as usize).min(last);
        let b = ((hi.max(0.0) / self.step).ceil() as usize).min(last);
        self.slopes[a..=b].iter().copied().fold(0.0, f64::max)
    }

    #[inline]
    pub fn eval(&self, rho: f64) -> f64 {
        let last = self.values.len() - 1;
        let x = (rho / self.step).clamp(0.0, last as f64);
        let i = (x.floor() as usize).min(last - 1);
        let t = x - i as f64;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.slopes[i] * self.step, self.slopes[i + 1] * self.step);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * m1
    }
}

/// ln Π_z φ^{η(z)}/g(η(z))!, the unnormalized product weight of a configuration.
pub fn log_product_weight(rate_fn: &JumpRateFn, phi: f64, occupancy: &[u32]) -> f64 {
    occupancy
        .iter()
        .map(|&k| {
            let mut w = k as f64 * phi.ln();
            for j in 1..=k {
                w -= rate_fn.eval(j).ln();
            }
            w
        })
        .sum()
}
