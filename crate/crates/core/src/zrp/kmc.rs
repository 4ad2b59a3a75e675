//! Exact event-driven simulation of the zero range process with generator
//! N²ℒ: a particle leaves x toward y at rate N²·g(η(x))·ω(x, y).

use rand::Rng as _;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use super::rate::JumpRateFn;
use super::sumtree::SumTree;
use crate::error::{Error, Result};
use crate::homogenization::ClusterGraph;
use crate::rng::{stream_rng, Rng};

/// Occupation numbers on the graph nodes together with the rate index
/// keyed by g(η(x))·W(x).
#[derive(Debug, Clone)]
pub struct ParticleConfig {
    occupancy: Vec<u32>,
    total: u64,
    rates: SumTree,
}

impl ParticleConfig {
    pub fn new(graph: &ClusterGraph, rate_fn: &JumpRateFn, occupancy: Vec<u32>) -> Result<Self> {
        if occupancy.len() != graph.len() {
            return Err(Error::Parameter(format!(
                "configuration has {} sites, graph has {}",
                occupancy.len(),
                graph.len()
            )));
        }
        let leaves: Vec<f64> = occupancy
            .iter()
            .enumerate()
            .map(|(i, &k)| rate_fn.eval(k) * graph.exit_rate(i))
            .collect();
        let total = occupancy.iter().map(|&k| k as u64).sum();
        Ok(ParticleConfig {
            occupancy,
            total,
            rates: SumTree::from_leaves(&leaves),
        })
    }

    pub fn occupancy(&self) -> &[u32] {
        &self.occupancy
    }

    pub fn into_occupancy(self) -> Vec<u32> {
        self.occupancy
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn rate_index(&self) -> &SumTree {
        &self.rates
    }

    /// Checks that the conserved count, every leaf and every internal node
    /// agree exactly with a rebuild from the occupancies.
    pub fn verify(&self, graph: &ClusterGraph, rate_fn: &JumpRateFn) -> bool {
        let fresh = match ParticleConfig::new(graph, rate_fn, self.occupancy.clone()) {
            Ok(c) => c,
            Err(_) => return false,
        };
        fresh.total == self.total && fresh.rates.nodes() == self.rates.nodes()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimClock {
    /// Macroscopic time t.
    pub time: f64,
    /// N².
    pub speedup: f64,
    pub events: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    pub event_count: u64,
    pub occupancy: Vec<u32>,
}

/// One replica of the dynamics. The next event time is drawn ahead and
/// kept until the clock reaches it, which is exact for a jump process.
pub struct Kmc<'g> {
    graph: &'g ClusterGraph,
    rate_fn: JumpRateFn,
    config: ParticleConfig,
    clock: SimClock,
    rng: Rng,
    next_event: Option<f64>,
}

impl<'g> Kmc<'g> {
    pub fn new(graph: &'g ClusterGraph, rate_fn: &JumpRateFn, occupancy: Vec<u32>, seed: u64) -> Result<Self> {
        let config = ParticleConfig::new(graph, rate_fn, occupancy)?;
        let n = graph.scale() as f64;
        Ok(Kmc {
            graph,
            rate_fn: rate_fn.clone(),
            config,
            clock: SimClock {
                time: 0.0,
                speedup: n * n,
                events: 0,
            },
            rng: stream_rng(seed, 2),
            next_event: None,
        })
    }

    pub fn config(&self) -> &ParticleConfig {
        &self.config
    }

    pub fn occupancy(&self) -> &[u32] {
        self.config.occupancy()
    }

    pub fn clock(&self) -> SimClock {
        self.clock
    }

    pub fn graph(&self) -> &ClusterGraph {
        self.graph
    }

    fn draw_next(&mut self) -> f64 {
        let total = self.config.rates.total();
        if total <= 0.0 {
            return f64::INFINITY;
        }
        let e: f64 = Exp1.sample(&mut self.rng);
        self.clock.time + e / (self.clock.speedup * total)
    }

    /// Applies one jump chosen from the current rates.
    fn fire(&mut self) -> Result<()> {
        let total = self.config.rates.total();
        let u: f64 = self.rng.random();
        let x = self.config.rates.find(u * total);
        let w = self.graph.exit_rate(x);
        let v: f64 = self.rng.random();
        let (y, _) = self.graph.pick_neighbor(x, v * w);
        let occ = &mut self.config.occupancy;
        if occ[y] == u32::MAX {
            return Err(Error::Overflow { site: self.graph.site(y) });
        }
        occ[x] -= 1;
        occ[y] += 1;
        let (ex, ey) = (occ[x], occ[y]);
        self.config.rates.set(x, self.rate_fn.eval(ex) * w);
        self.config.rates.set(y, self.rate_fn.eval(ey) * self.graph.exit_rate(y));
        self.clock.events += 1;
        Ok(())
    }

    /// Runs every event up to macroscopic time `t` and sets the clock to `t`.
    pub fn advance_to(&mut self, t: f64) -> Result<()> {
        if t < self.clock.time {
            return Err(Error::Parameter(format!(
                "cannot move the clock back from {} to {t}",
                self.clock.time
            )));
        }
        loop {
            let next = match self.next_event {
                Some(s) => s,
                None => {
                    let s = self.draw_next();
                    self.next_event = Some(s);
                    s
                }
            };
            if next > t {
                break;
            }
            self.clock.time = next;
            self.fire()?;
            self.next_event = None;
        }
        self.clock.time = t;
        Ok(())
    }

    /// Runs exactly `n` events (or until no event is possible).
    pub fn run_events(&mut self, n: u64) -> Result<u64> {
        let mut done = 0;
        while done < n {
            let next = self.next_event.take().unwrap_or_else(|| self.draw_next());
            if !next.is_finite() {
                break;
            }
            self.clock.time = next;
            self.fire()?;
            done += 1;
        }
        Ok(done)
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            time: self.clock.time,
            event_count: self.clock.events,
            occupancy: self.config.occupancy.clone(),
        }
    }
}

/// Simulates to `t_end` and returns the configurations at the requested
/// observation times (sorted; times beyond `t_end` are rejected).
pub fn simulate_kmc(
    graph: &ClusterGraph,
    rate_fn: &JumpRateFn,
    occupancy: Vec<u32>,
    t_end: f64,
    observation_times: &[f64],
    seed: u64,
) -> Result<Vec<Snapshot>> {
    let mut times = observation_times.to_vec();
    times.sort_by(f64::total_cmp);
    if let Some(&bad) = times.iter().find(|&&t| !(0.0..=t_end).contains(&t)) {
        return Err(Error::Parameter(format!("observation time {bad} outside [0, {t_end}]")));
    }
    let mut kmc = Kmc::new(graph, rate_fn, occupancy, seed)?;
    let mut out = Vec::with_capacity(times.len());
    for t in times {
        kmc.advance_to(t)?;
        out.push(kmc.snapshot());
    }
    kmc.advance_to(t_end)?;
    Ok(out)
}

/// Basic coupling of two copies started from `lower ≤ upper`: site and
/// direction are drawn from the larger rate and each copy jumps when a
/// shared uniform falls below its own rate fraction.
pub fn simulate_coupled(
    graph: &ClusterGraph,
    rate_fn: &JumpRateFn,
    mut lower: Vec<u32>,
    mut upper: Vec<u32>,
    n_events: u64,
    seed: u64,
) -> Result<(Vec<u32>, Vec<u32>)> {
    if lower.len() != graph.len() || upper.len() != graph.len() {
        return Err(Error::Parameter("coupled configurations must match the graph".into()));
    }
    let dominating = |l: u32, u: u32, i: usize| rate_fn.eval(l).max(rate_fn.eval(u)) * graph.exit_rate(i);
    let leaves: Vec<f64> = (0..graph.len()).map(|i| dominating(lower[i], upper[i], i)).collect();
    let mut tree = SumTree::from_leaves(&leaves);
    let mut rng = stream_rng(seed, 3);
    for _ in 0..n_events {
        let total = tree.total();
        if total <= 0.0 {
            break;
        }
        let x = tree.find(rng.random::<f64>() * total);
        let (y, _) = graph.pick_neighbor(x, rng.random::<f64>() * graph.exit_rate(x));
        let (gl, gu) = (rate_fn.eval(lower[x]), rate_fn.eval(upper[x]));
        let top = gl.max(gu);
        let u: f64 = rng.random::<f64>() * top;
        for (occ, g) in [(&mut lower, gl), (&mut upper, gu)] {
            if u < g {
                occ[x] -= 1;
                occ[y] += 1;
            }
        }
        tree.set(x, dominating(lower[x], upper[x], x));
        tree.set(y, dominating(lower[y], upper[y], y));
    }
    Ok((lower, upper))
}
