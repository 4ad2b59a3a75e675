//! Structural audits of a finished report.

use std::collections::{BTreeMap, BTreeSet};

use super::report::{ComparisonReport, ExperimentKind};
use crate::error::{Error, Result};

/// Every gap equals |empirical − prediction| of its own row, and every
/// (model, N, t, G) group has one row per replica.
pub fn check_report_consistency(report: &ComparisonReport) -> Result<()> {
    for r in &report.rows {
        let gap = (r.empirical - r.prediction).abs();
        if !(r.gap >= 0.0) || r.gap != gap {
            return Err(Error::Format(format!(
                "row {} N={} t={} G{} replica {}: gap {} != {}",
                r.model, r.n, r.t, r.test, r.replica, r.gap, gap
            )));
        }
    }
    let replicas = report.spec.ladder.replicas;
    let mut counts: BTreeMap<(&str, usize, u64, usize), usize> = BTreeMap::new();
    for r in &report.rows {
        *counts.entry((r.model.as_str(), r.n, r.t.to_bits(), r.test)).or_default() += 1;
    }
    if let Some(((model, n, t, g), c)) = counts.iter().find(|(_, &c)| c != replicas) {
        return Err(Error::Format(format!(
            "{model} N={n} t={} G{g} has {c} rows, spec asks for {replicas}",
            f64::from_bits(*t)
        )));
    }
    if let Some(s) = report.summary.iter().find(|s| s.replicas != replicas) {
        return Err(Error::Format(format!(
            "{} N={} t={} G{} has {} replicas, spec asks for {replicas}",
            s.model, s.n, s.t, s.test, s.replicas
        )));
    }
    Ok(())
}

/// The (N, t, G) triples of every model equal the spec's cross product.
pub fn check_ladder_coherence(report: &ComparisonReport) -> Result<()> {
    if !matches!(report.kind, ExperimentKind::Hydrodynamic | ExperimentKind::Bulk) {
        return Ok(());
    }
    let spec = &report.spec;
    let expected: BTreeSet<(usize, u64, usize)> = spec
        .ladder
        .scales
        .iter()
        .flat_map(|&n| {
            spec.ladder
                .times
                .iter()
                .flat_map(move |&t| (0..spec.test_functions.len()).map(move |g| (n, t.to_bits(), g)))
        })
        .collect();
    let models: BTreeSet<&str> = report.summary.iter().map(|s| s.model.as_str()).collect();
    for model in models {
        let got: BTreeSet<(usize, u64, usize)> = report
            .summary
            .iter()
            .filter(|s| s.model == model)
            .map(|s| (s.n, s.t.to_bits(), s.test))
            .collect();
        let rows: BTreeSet<(usize, u64, usize)> = report
            .rows
            .iter()
            .filter(|r| r.model == model)
            .map(|r| (r.n, r.t.to_bits(), r.test))
            .collect();
        if got != expected || rows != expected {
            return Err(Error::Format(format!("model {model}: ladder does not match the spec")));
        }
    }
    Ok(())
}
