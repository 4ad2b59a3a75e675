//! Experiment specs, runners and reports.

mod checks;
mod experiments;
mod report;
mod spec;

pub use checks::{check_ladder_coherence, check_report_consistency};
pub use experiments::{
    env_seed, replica_environment, run_bulk_experiment, run_corrected_measure_diagnostic,
    run_hydrodynamic_experiment, run_replacement_diagnostic, CoefficientCache,
};
pub use report::*;
pub use spec::{
    default_test_functions, sine_x1, CoefficientSource, DiagnosticsSpec, DynamicsSpec, EnvironmentSpec,
    ExperimentSpec, HomogenizationSpec, LadderSpec, PdeSpec,
};
