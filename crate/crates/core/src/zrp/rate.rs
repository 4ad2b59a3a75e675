//! Jump rate functions g: ℕ → [0, ∞).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a user table continues past its last entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Tail {
    /// g(k) = g(n) for k > n.
    Constant,
    /// g(k) = g(n) + slope·(k − n) for k > n.
    Linear { slope: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JumpRateFn {
    /// g(k) = k (independent walkers).
    Linear,
    /// g(k) = 1{k ≥ 1}.
    Indicator,
    /// g(k) = min(k, cap).
    Capped { cap: u32 },
    /// `values[k - 1] = g(k)` for k = 1..=n, continued by `tail`.
    Table { values: Vec<f64>, tail: Tail },
}

impl JumpRateFn {
    pub fn validate(&self) -> Result<()> {
        match self {
            JumpRateFn::Capped { cap } if *cap == 0 => {
                Err(Error::Parameter("capped rate needs cap >= 1".into()))
            }
            JumpRateFn::Table { values, tail } => {
                if values.is_empty() {
                    return Err(Error::Parameter("rate table is empty".into()));
                }
                if !(values[0] > 0.0) {
                    return Err(Error::Parameter("g(1) must be positive".into()));
                }
                if values.iter().any(|v| !v.is_finite())
                    || values.windows(2).any(|w| w[1] < w[0])
                {
                    return Err(Error::Parameter("rate table must be finite and nondecreasing".into()));
                }
                if let Tail::Linear { slope } = tail {
                    if !(slope.is_finite() && *slope >= 0.0) {
                        return Err(Error::Parameter("tail slope must be finite and >= 0".into()));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    #[inline]
    pub fn eval(&self, k: u32) -> f64 {
        if k == 0 {
            return 0.0;
        }
        match self {
            JumpRateFn::Linear => k as f64,
            JumpRateFn::Indicator => 1.0,
            JumpRateFn::Capped { cap } => k.min(*cap) as f64,
            JumpRateFn::Table { values, tail } => {
                let n = values.len();
                let k = k as usize;
                if k <= n {
                    values[k - 1]
                } else {
                    match tail {
                        Tail::Constant => values[n - 1],
                        Tail::Linear { slope } => values[n - 1] + slope * (k - n) as f64,
                    }
                }
            }
        }
    }

    /// g* = sup_k |g(k+1) − g(k)|.
    pub fn gstar(&self) -> f64 {
        match self {
            JumpRateFn::Linear | JumpRateFn::Indicator | JumpRateFn::Capped { .. } => 1.0,
            JumpRateFn::Table { values, tail } => {
                let steps = std::iter::once(values[0])
                    .chain(values.windows(2).map(|w| w[1] - w[0]))
                    .fold(0.0, f64::max);
                match tail {
                    Tail::Constant => steps,
                    Tail::Linear { slope } => steps.max(*slope),
                }
            }
        }
    }

    /// Radius of convergence of Σ φ^k / g(k)!, i.e. lim g(k) for nondecreasing g.
    pub fn natural_phi_c(&self) -> f64 {
        match self {
            JumpRateFn::Linear => f64::INFINITY,
            JumpRateFn::Indicator => 1.0,
            JumpRateFn::Capped { cap } => *cap as f64,
            JumpRateFn::Table { values, tail } => match tail {
                Tail::Linear { slope } if *slope > 0.0 => f64::INFINITY,
                _ => values[values.len() - 1],
            },
        }
    }
}

impl fmt::Display for JumpRateFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JumpRateFn::Linear => write!(f, "linear"),
            JumpRateFn::Indicator => write!(f, "indicator"),
            JumpRateFn::Capped { cap } => write!(f, "capped:{cap}"),
            JumpRateFn::Table { values, tail } => {
                let vals: Vec<String> = values.iter().map(|v| v.to_string()).collect();
                write!(f, "table:{}", vals.join(","))?;
                if let Tail::Linear { slope } = tail {
                    write!(f, ";slope={slope}")?;
                }
                Ok(())
            }
        }
    }
}

/// Parses `linear`, `indicator`, `capped:K`, `table:g1,g2,...` (constant
/// tail) or `table:g1,g2,...;slope=s` (linear tail).
impl FromStr for JumpRateFn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parameter(format!("cannot parse rate function '{s}'"));
        let g = match s.split_once(':') {
            None if s == "linear" => JumpRateFn::Linear,
            None if s == "indicator" => JumpRateFn::Indicator,
            Some(("capped", k)) => JumpRateFn::Capped {
                cap: k.trim().parse().map_err(|_| bad())?,
            },
            Some(("table", rest)) => {
                let (vals, tail) = match rest.split_once(';') {
                    Some((v, t)) => {
                        let slope = t
                            .trim()
                            .strip_prefix("slope=")
                            .ok_or_else(bad)?
                            .parse()
                            .map_err(|_| bad())?;
                        (v, Tail::Linear { slope })
                    }
                    None => (rest, Tail::Constant),
                };
                let values = vals
                    .split(',')
                    .map(|v| v.trim().parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| bad())?;
                JumpRateFn::Table { values, tail }
            }
            _ => return Err(bad()),
        };
        g.validate()?;
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_evaluate() {
        let lin = JumpRateFn::Linear;
        let ind = JumpRateFn::Indicator;
        let cap = JumpRateFn::Capped { cap: 3 };
        assert_eq!((0..6).map(|k| lin.eval(k)).collect::<Vec<_>>(), [0., 1., 2., 3., 4., 5.]);
        assert_eq!((0..4).map(|k| ind.eval(k)).collect::<Vec<_>>(), [0., 1., 1., 1.]);
        assert_eq!((0..6).map(|k| cap.eval(k)).collect::<Vec<_>>(), [0., 1., 2., 3., 3., 3.]);
        assert_eq!(cap.natural_phi_c(), 3.0);
        assert_eq!(ind.natural_phi_c(), 1.0);
        assert!(lin.natural_phi_c().is_infinite());
    }

    #[test]
    fn table_parsing_and_tail() {
        let g: JumpRateFn = "table:1,1.5,2;slope=0.25".parse().unwrap();
        assert_eq!(g.eval(3), 2.0);
        assert_eq!(g.eval(5), 2.5);
        assert_eq!(g.gstar(), 1.0);
        assert!(g.natural_phi_c().is_infinite());
        let h: JumpRateFn = "table:0.5,2".parse().unwrap();
        assert_eq!(h.eval(9), 2.0);
        assert_eq!(h.gstar(), 1.5);
        assert_eq!(h.natural_phi_c(), 2.0);
        assert_eq!(h.to_string().parse::<JumpRateFn>().unwrap(), h);
    }

    #[test]
    fn invalid_tables_rejected() {
        for s in ["table:0,1", "table:2,1", "capped:0", "cubic", "table:1;slope=-1"] {
            assert!(s.parse::<JumpRateFn>().is_err(), "{s}");
        }
    }
}
