//! Zero range process on the conductance graph.

mod kmc;
mod measure;
mod observables;
mod rate;
mod sampling;
mod snapshot;
mod sumtree;

pub use kmc::{simulate_coupled, simulate_kmc, Kmc, ParticleConfig, SimClock, Snapshot};
pub use measure::{
    log_product_weight, FugacityTable, JumpRateCurve, Moments, IDENTITY_TOL, INVERSION_TOL, SERIES_TOL,
};
pub use observables::{
    block_densities, block_density, box_sums, empirical_measure, empirical_measure_values, lattice_field,
    replacement_statistic, ReplacementValue,
};
pub use rate::{JumpRateFn, Tail};
pub use sampling::{draw_from_cdf, sample_product_measure, MarginalCache};
pub use snapshot::{Trajectory, TrajectoryHeader};
pub use sumtree::SumTree;
