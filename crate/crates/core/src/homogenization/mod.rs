//! Cluster walk generator, resolvent correctors and the effective
//! diffusion matrix.

mod cg;
mod diffusivity;
mod graph;
mod resolvent;

pub use cg::{conjugate_gradient, conjugate_gradient_from, CgOptions, CgSolution};
pub use diffusivity::{
    apply_laplacian, corrected_bilinear, corrector_source, estimate_d_msd, estimate_d_variational,
    estimate_d_variational_with, solve_corrector, uncorrected_bound, Corrector, DiffusivityMeta,
    DiffusivityMethod, DiffusivityRecord, EffectiveDiffusivity,
};
pub use graph::{ClusterGraph, Edge};
pub use resolvent::{
    corrected_function_convergence, corrector_gap, resolvent_rhs, solve_resolvent, solve_resolvent_with,
    CorrectorGap, CorrectorSolution, ResolventRhs,
};
