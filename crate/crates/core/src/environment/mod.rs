//! Random conductance environments and percolation clusters.

mod cluster;
mod field;

pub use cluster::{
    cluster_diameter_stats, estimate_m, fit_log_growth, label_clusters, ClusterLabeling,
    DiameterStats, LogGrowthFit, UnionFind,
};
pub use field::{BinaryField, BondLaw, ConductanceField};

use crate::error::Result;
use crate::lattice::Lattice;

/// Draws a field and labels the components of its positive bonds.
pub fn generate_field(
    law: BondLaw,
    c0: f64,
    lattice: Lattice,
    seed: u64,
) -> Result<(ConductanceField, ClusterLabeling)> {
    let field = ConductanceField::generate(law, c0, lattice, seed)?;
    let labeling = label_clusters(&field.threshold(0.0)?);
    Ok((field, labeling))
}
