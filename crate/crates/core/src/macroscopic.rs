//! Macroscopic functions on the unit torus [0,1)^d: initial density
//! profiles and test functions. Coordinates are macroscopic (x/N).

use std::f64::consts::PI;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wraps a coordinate into [-1/2, 1/2).
#[inline]
fn centered(x: f64) -> f64 {
    x - (x + 0.5).floor()
}

/// Initial macroscopic density ρ₀.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    Constant { rho: f64 },
    /// `left` where the first coordinate (centred on the torus) is negative,
    /// `right` elsewhere.
    Step { left: f64, right: f64 },
    /// low + (high − low)·½(1 + tanh(sin(2πx₁)/width)).
    SmoothStep { low: f64, high: f64, width: f64 },
    /// mean + amp·cos(2π k·x).
    Cosine { mean: f64, amp: f64, k: Vec<i32> },
    /// base + amp·Σ_images exp(−|x − c − n|²/(2 std²)).
    Gaussian { base: f64, amp: f64, center: Vec<f64>, std: f64 },
}

impl Profile {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Profile::Constant { rho } => *rho,
            Profile::Step { left, right } => {
                if centered(x[0]) < 0.0 {
                    *left
                } else {
                    *right
                }
            }
            Profile::SmoothStep { low, high, width } => {
                low + (high - low) * 0.5 * (1.0 + ((2.0 * PI * x[0]).sin() / width).tanh())
            }
            Profile::Cosine { mean, amp, k } => {
                let phase: f64 = x.iter().zip(k).map(|(xi, &ki)| xi * ki as f64).sum();
                mean + amp * (2.0 * PI * phase).cos()
            }
            Profile::Gaussian { base, amp, center, std } => base + amp * wrapped_gaussian(x, center, *std),
        }
    }

    /// Upper bound of the profile.
    pub fn sup(&self) -> f64 {
        match self {
            Profile::Constant { rho } => *rho,
            Profile::Step { left, right } => left.max(*right),
            Profile::SmoothStep { low, high, .. } => low.max(*high),
            Profile::Cosine { mean, amp, .. } => mean + amp.abs(),
            Profile::Gaussian { base, amp, center, std } => {
                let peak = wrapped_gaussian(&[0.0], &[0.0], *std);
                base + amp.max(0.0) * peak.powi(center.len() as i32)
            }
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        let bad = |m: &str| Err(Error::Parameter(format!("profile: {m}")));
        match self {
            Profile::Cosine { k, .. } if k.len() != d => return bad("wave vector length != d"),
            Profile::Gaussian { center, std, .. } if center.len() != d || !(*std > 0.0) => {
                return bad("gaussian needs a d-dimensional centre and std > 0")
            }
            Profile::SmoothStep { width, .. } if !(*width > 0.0) => return bad("width must be > 0"),
            _ => {}
        }
        Ok(())
    }
}

fn wrapped_gaussian(x: &[f64], center: &[f64], std: f64) -> f64 {
    // Product over axes of 1-d wrapped Gaussians; images beyond ±3 are negligible
    // for std ≤ 0.5.
    x.iter()
        .zip(center)
        .map(|(&xi, &ci)| {
            let base = centered(xi - ci);
            (-3..=3)
                .map(|n| {
                    let y = base + n as f64;
                    (-y * y / (2.0 * std * std)).exp()
                })
                .sum::<f64>()
        })
        .product()
}

/// Parses `const:r`, `step:left,right`, `smooth-step:low,high,width`,
/// `cos:mean,amp,k1,...,kd` and `gauss:base,amp,std` (centred at ½).
impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parameter(format!("cannot parse profile '{s}'"));
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        let nums = rest
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| bad())?;
        let need = |n: usize| if nums.len() == n { Ok(()) } else { Err(bad()) };
        Ok(match kind {
            "const" => {
                need(1)?;
                Profile::Constant { rho: nums[0] }
            }
            "step" => {
                need(2)?;
                Profile::Step { left: nums[0], right: nums[1] }
            }
            "smooth-step" => {
                need(3)?;
                Profile::SmoothStep { low: nums[0], high: nums[1], width: nums[2] }
            }
            "cos" if nums.len() >= 3 => Profile::Cosine {
                mean: nums[0],
                amp: nums[1],
                k: nums[2..].iter().map(|&v| v as i32).collect(),
            },
            "gauss" => {
                need(3)?;
                Profile::Gaussian { base: nums[0], amp: nums[1], center: Vec::new(), std: nums[2] }
            }
            _ => return Err(bad()),
        })
    }
}

impl Profile {
    /// Fills in dimension-dependent defaults left open by the string form.
    pub fn for_dim(mut self, d: usize) -> Self {
        if let Profile::Gaussian { center, .. } = &mut self {
            if center.is_empty() {
                *center = vec![0.5; d];
            }
        }
        self
    }
}

/// One Fourier term amp·cos(2π k·x + phase).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub amp: f64,
    pub k: Vec<i32>,
    #[serde(default)]
    pub phase: f64,
}

/// Smooth test functions G on the torus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    Constant { value: f64 },
    Trig { terms: Vec<TrigTerm> },
    /// amp·exp(1 − 1/(1 − r²/R²)) for minimum-image distance r < R = radius.
    Bump { center: Vec<f64>, radius: f64, amp: f64 },
}

impl TestFunction {
    pub fn cosine(k: Vec<i32>, phase: f64) -> Self {
        TestFunction::Trig {
            terms: vec![TrigTerm { amp: 1.0, k, phase }],
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        match self {
            TestFunction::Trig { terms } if terms.iter().any(|t| t.k.len() != d) => {
                Err(Error::Parameter("trig term wave vector length != d".into()))
            }
            TestFunction::Bump { center, radius, .. }
                if center.len() != d || !(*radius > 0.0 && *radius < 0.5) =>
            {
                Err(Error::Parameter("bump needs a d-dimensional centre and radius in (0, 1/2)".into()))
            }
            _ => Ok(()),
        }
    }

    fn bump_parts(center: &[f64], radius: f64, x: &[f64]) -> (Vec<f64>, f64) {
        let delta: Vec<f64> = x.iter().zip(center).map(|(&a, &c)| centered(a - c)).collect();
        let s = delta.iter().map(|v| v * v).sum::<f64>() / (radius * radius);
        (delta, s)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            TestFunction::Constant { value } => *value,
            TestFunction::Trig { terms } => terms
                .iter()
                .map(|t| t.amp * (2.0 * PI * dot(&t.k, x) + t.phase).cos())
                .sum(),
            TestFunction::Bump { center, radius, amp } => {
                let (_, s) = Self::bump_parts(center, *radius, x);
                if s >= 1.0 {
                    0.0
                } else {
                    amp * (1.0 - 1.0 / (1.0 - s)).exp()
                }
            }
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            TestFunction::Constant { .. } => vec![0.0; x.len()],
            TestFunction::Trig { terms } => {
                let mut g = vec![0.0; x.len()];
                for t in terms {
                    let s = (2.0 * PI * dot(&t.k, x) + t.phase).sin();
                    for (gi, &ki) in g.iter_mut().zip(&t.k) {
                        *gi -= t.amp * 2.0 * PI * ki as f64 * s;
                    }
                }
                g
            }
            TestFunction::Bump { center, radius, .. } => {
                let (delta, s) = Self::bump_parts(center, *radius, x);
                if s >= 1.0 {
                    return vec![0.0; x.len()];
                }
                let v = self.value(x);
                let fp = -1.0 / ((1.0 - s) * (1.0 - s));
                delta.iter().map(|di| v * fp * 2.0 * di / (radius * radius)).collect()
            }
        }
    }

    /// Row-major d×d Hessian.
    pub fn hessian(&self, x: &[f64]) -> Vec<f64> {
        let d = x.len();
        let mut h = vec![0.0; d * d];
        match self {
            TestFunction::Constant { .. } => {}
            TestFunction::Trig { terms } => {
                for t in terms {
                    let c = -t.amp * 4.0 * PI * PI * (2.0 * PI * dot(&t.k, x) + t.phase).cos();
                    for i in 0..d {
                        for j in 0..d {
                            h[i * d + j] += c * (t.k[i] * t.k[j]) as f64;
                        }
                    }
                }
            }
            TestFunction::Bump { center, radius, .. } => {
                let (delta, s) = Self::bump_parts(center, *radius, x);
                if s < 1.0 {
                    let v = self.value(x);
                    let u = 1.0 - s;
                    let fp = -1.0 / (u * u);
                    let fpp = -2.0 / (u * u * u);
                    let r2 = radius * radius;
                    for i in 0..d {
                        for j in 0..d {
                            let diag = if i == j { fp * 2.0 / r2 } else { 0.0 };
                            h[i * d + j] = v * ((fp * fp + fpp) * 4.0 * delta[i] * delta[j] / (r2 * r2) + diag);
                        }
                    }
                }
            }
        }
        h
    }

    /// ∇·(D∇G) for a constant row-major matrix D.
    pub fn div_grad(&self, matrix: &[f64], x: &[f64]) -> f64 {
        self.hessian(x).iter().zip(matrix).map(|(h, m)| h * m).sum()
    }

    pub fn laplacian(&self, x: &[f64]) -> f64 {
        match self {
            TestFunction::Constant { .. } => 0.0,
            TestFunction::Trig { terms } => terms
                .iter()
                .map(|t| {
                    let k2: f64 = t.k.iter().map(|&k| (k * k) as f64).sum();
                    -t.amp * 4.0 * PI * PI * k2 * (2.0 * PI * dot(&t.k, x) + t.phase).cos()
                })
                .sum(),
            TestFunction::Bump { center, radius, .. } => {
                let (_, s) = Self::bump_parts(center, *radius, x);
                if s >= 1.0 {
                    return 0.0;
                }
                let v = self.value(x);
                let u = 1.0 - s;
                let fp = -1.0 / (u * u);
                let fpp = -2.0 / (u * u * u);
                let r2 = radius * radius;
                let d = x.len() as f64;
                v * ((fp * fp + fpp) * 4.0 * s / r2 + fp * 2.0 * d / r2)
            }
        }
    }

    /// Upper bound on sup ‖∇G‖₁, so |G(x) − G(y)| ≤ L·‖x − y‖∞.
    pub fn lipschitz_inf(&self, d: usize) -> f64 {
        match self {
            TestFunction::Constant { .. } => 0.0,
            TestFunction::Trig { terms } => terms
                .iter()
                .map(|t| t.amp.abs() * 2.0 * PI * t.k.iter().map(|k| k.abs() as f64).sum::<f64>())
                .sum(),
            TestFunction::Bump { radius, amp, .. } => {
                // |∇G| = |amp| e^{1-1/u} · 2r/(R² u²), u = 1 − r²/R²; maximise over r.
                let n = 20_000;
                let sup = (1..n)
                    .map(|i| {
                        let rr = i as f64 / n as f64;
                        let u = 1.0 - rr * rr;
                        amp.abs() * (1.0 - 1.0 / u).exp() * 2.0 * rr / (radius * u * u)
                    })
                    .fold(0.0, f64::max);
                sup * 1.001 * (d as f64).sqrt()
            }
        }
    }

    /// ∫ G·f over the unit torus by the midpoint rule with `n` points per axis.
    pub fn integrate_against<F: Fn(&[f64]) -> f64>(&self, d: usize, n: usize, f: F) -> f64 {
        torus_midpoint(d, n, |x| self.value(x) * f(x))
    }

    pub fn abs_integral(&self, d: usize) -> f64 {
        let n = if d <= 2 { 512 } else { 64 };
        torus_midpoint(d, n, |x| self.value(x).abs())
    }
}

/// Midpoint rule on [0,1)^d with `n` points per axis.
pub fn torus_midpoint<F: Fn(&[f64]) -> f64>(d: usize, n: usize, f: F) -> f64 {
    let total = n.pow(d as u32);
    let mut x = vec![0.0; d];
    let mut sum = 0.0;
    for idx in 0..total {
        let mut rem = idx;
        for xi in x.iter_mut().rev() {
            *xi = ((rem % n) as f64 + 0.5) / n as f64;
            rem /= n;
        }
        sum += f(&x);
    }
    sum / total as f64
}

#[inline]
fn dot(k: &[i32], x: &[f64]) -> f64 {
    k.iter().zip(x).map(|(&ki, &xi)| ki as f64 * xi).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(g: &TestFunction, x: &[f64]) {
        let h = 1e-4;
        let d = x.len();
        let grad = g.gradient(x);
        let mut lap = 0.0;
        for i in 0..d {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            let (fp, fm, f0) = (g.value(&xp), g.value(&xm), g.value(x));
            assert!((grad[i] - (fp - fm) / (2.0 * h)).abs() < 1e-5 * (1.0 + grad[i].abs()));
            lap += (fp - 2.0 * f0 + fm) / (h * h);
        }
        assert!((g.laplacian(x) - lap).abs() < 1e-3 * (1.0 + lap.abs()), "{} vs {lap}", g.laplacian(x));
        // Hessian rows against differences of the gradient.
        let hess = g.hessian(x);
        for j in 0..d {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[j] += h;
            xm[j] -= h;
            let (gp, gm) = (g.gradient(&xp), g.gradient(&xm));
            for i in 0..d {
                let fd = (gp[i] - gm[i]) / (2.0 * h);
                assert!((hess[i * d + j] - fd).abs() < 1e-3 * (1.0 + fd.abs()));
            }
        }
        let trace: f64 = (0..d).map(|i| hess[i * d + i]).sum();
        assert!((trace - g.laplacian(x)).abs() < 1e-9 * (1.0 + trace.abs()));
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let trig = TestFunction::Trig {
            terms: vec![
                TrigTerm { amp: 1.0, k: vec![1, 0], phase: 0.3 },
                TrigTerm { amp: -0.5, k: vec![2, 1], phase: 0.0 },
            ],
        };
        let bump = TestFunction::Bump { center: vec![0.4, 0.5], radius: 0.25, amp: 2.0 };
        for x in [[0.1, 0.2], [0.45, 0.55], [0.3, 0.6]] {
            fd_check(&trig, &x);
            fd_check(&bump, &x);
        }
    }

    #[test]
    fn lipschitz_bounds_hold_on_samples() {
        let bump = TestFunction::Bump { center: vec![0.5, 0.5], radius: 0.2, amp: 1.0 };
        let trig = TestFunction::cosine(vec![1, 2], 0.0);
        for g in [&bump, &trig] {
            let l = g.lipschitz_inf(2);
            for i in 0..400 {
                let x = [(i as f64 * 0.618) % 1.0, (i as f64 * 0.377) % 1.0];
                let grad = g.gradient(&x);
                assert!(grad.iter().map(|v| v.abs()).sum::<f64>() <= l);
            }
        }
    }

    #[test]
    fn profiles_evaluate_and_parse() {
        let step: Profile = "step:0.2,1.0".parse().unwrap();
        assert_eq!(step.eval(&[0.9, 0.1]), 0.2);
        assert_eq!(step.eval(&[0.1, 0.1]), 1.0);
        let s: Profile = "smooth-step:0.3,1.2,0.2".parse().unwrap();
        assert!((s.eval(&[0.25, 0.0]) - 1.2).abs() < 1e-3);
        assert!((s.eval(&[0.75, 0.0]) - 0.3).abs() < 1e-3);
        assert_eq!(s.sup(), 1.2);
        let g = "gauss:1,0.5,0.1".parse::<Profile>().unwrap().for_dim(2);
        assert!(g.validate(2).is_ok());
        assert!(g.eval(&[0.5, 0.5]) > g.eval(&[0.1, 0.1]));
        assert!("wave:1".parse::<Profile>().is_err());
    }

    #[test]
    fn integrals() {
        let c = TestFunction::cosine(vec![1, 0], 0.0);
        assert!(c.integrate_against(2, 64, |_| 1.0).abs() < 1e-12);
        assert!((c.abs_integral(2) - 2.0 / PI).abs() < 1e-4);
        let half = c.integrate_against(2, 64, |x| (2.0 * PI * x[0]).cos());
        assert!((half - 0.5).abs() < 1e-12);
    }
}
