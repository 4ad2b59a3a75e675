//! Product measures with slowly varying parameter.

use std::collections::hash_map::Entry;
use std::collections::HashMap;

use rand::Rng as _;

use super::measure::FugacityTable;
use crate::error::{Error, Result};
use crate::homogenization::ClusterGraph;
use crate::macroscopic::Profile;
use crate::rng::stream_rng;

/// Cache of single-site cumulative distributions keyed by density.
#[derive(Debug, Default)]
pub struct MarginalCache {
    cdfs: HashMap<u64, Vec<f64>>,
}

impl MarginalCache {
    pub fn cdf(&mut self, table: &FugacityTable, rho: f64) -> Result<&[f64]> {
        if let Entry::Vacant(slot) = self.cdfs.entry(rho.to_bits()) {
            let phi = table.fugacity_of_density(rho)?;
            let pmf = table.pmf(phi)?;
            let mut acc = 0.0;
            let cdf: Vec<f64> = pmf
                .iter()
                .map(|p| {
                    acc += p;
                    acc
                })
                .collect();
            slot.insert(cdf);
        }
        Ok(&self.cdfs[&rho.to_bits()])
    }
}

/// Inverse-CDF draw; mass beyond the truncated support falls on the last
/// retained value.
#[inline]
pub fn draw_from_cdf(cdf: &[f64], u: f64) -> u32 {
    let total = cdf[cdf.len() - 1];
    let target = u * total;
    cdf.partition_point(|&c| c <= target).min(cdf.len() - 1) as u32
}

/// Samples μ^N with marginal ν_{ρ₀(x/N)/divisor} at every graph node.
///
/// On the giant cluster the divisor is m̂ (profile ρ₀/m); for the full-lattice
/// measure it is 1.
pub fn sample_product_measure(
    table: &FugacityTable,
    profile: &Profile,
    graph: &ClusterGraph,
    divisor: f64,
    seed: u64,
) -> Result<Vec<u32>> {
    if !(divisor > 0.0) {
        return Err(Error::Parameter(format!("density divisor must be > 0 (got {divisor})")));
    }
    profile.validate(graph.dim())?;
    let mut rng = stream_rng(seed, 1);
    let mut cache = MarginalCache::default();
    let densities = graph.sample(|x| profile.eval(x) / divisor);
    let mut out = Vec::with_capacity(graph.len());
    for (i, &rho) in densities.iter().enumerate() {
        if !(rho >= 0.0 && rho.is_finite()) {
            return Err(Error::Range(format!(
                "density {rho} at lattice site {} is not a valid parameter",
                graph.site(i)
            )));
        }
        let cdf = cache.cdf(table, rho).map_err(|e| match e {
            Error::Range(msg) => Error::Range(format!("lattice site {}: {msg}", graph.site(i))),
            other => other,
        })?;
        let u: f64 = rng.random();
        out.push(draw_from_cdf(cdf, u));
    }
    Ok(out)
}
