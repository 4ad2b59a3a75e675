//! Experiment reports: one JSON document plus flat CSV tables.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::spec::ExperimentSpec;
use crate::environment::LogGrowthFit;
use crate::error::Result;
use crate::io::{write_csv, write_json};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Hydrodynamic,
    Bulk,
    Replacement,
    CorrectedMeasure,
}

/// Per (N, replica) environment and run facts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaInfo {
    pub n: usize,
    pub replica: usize,
    pub env_seed: u64,
    pub m_hat: f64,
    pub sigma: f64,
    pub sites: usize,
    pub particles: u64,
    pub events: u64,
}

/// One replica's comparison of π^N_t[G] with a prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub model: String,
    pub n: usize,
    pub t: f64,
    pub test: usize,
    pub replica: usize,
    pub empirical: f64,
    pub prediction: f64,
    pub gap: f64,
}

impl GapRow {
    pub fn new(model: &str, n: usize, t: f64, test: usize, replica: usize, empirical: f64, prediction: f64) -> Self {
        GapRow {
            model: model.into(),
            n,
            t,
            test,
            replica,
            empirical,
            prediction,
            gap: (empirical - prediction).abs(),
        }
    }
}

/// Replica aggregate of the gap rows for one (model, N, t, G).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSummary {
    pub model: String,
    pub n: usize,
    pub t: f64,
    pub test: usize,
    pub replicas: usize,
    pub empirical_mean: f64,
    pub empirical_stderr: f64,
    pub prediction_mean: f64,
    pub gap_mean: f64,
    pub gap_stderr: f64,
    /// ∫|G| ρ̄ with ρ̄ the mean initial density.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L1Row {
    pub n: usize,
    pub t: f64,
    pub replica: usize,
    pub ell: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderRow {
    pub n: usize,
    pub replica: usize,
    pub ell: usize,
    /// Time average of the spatially averaged V_ℓ.
    pub value: f64,
    pub clamped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderSummary {
    pub ell: usize,
    pub mean: f64,
    pub stderr: f64,
}

/// Off-cluster displacement check for one replica, time and G:
/// |N^{-d} Σ_{x∉𝒞} G(x/N)(η₀ − η_t)(x)| ≤ Lip(G)·γ ln(1+N)/N^{d+1}·Σ_{x∉𝒞} η₀(x).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapRow {
    pub n: usize,
    pub replica: usize,
    pub t: f64,
    pub test: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConservationRow {
    pub n: usize,
    pub replica: usize,
    pub finite_clusters: usize,
    pub off_cluster_particles: u64,
    /// Finite clusters whose particle count changed at some snapshot.
    pub violations: usize,
    pub max_finite_diameter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BulkSection {
    pub conservation: Vec<ConservationRow>,
    pub traps: Vec<TrapRow>,
    /// (N, largest finite-cluster diameter over replicas).
    pub diameter_points: Vec<(usize, usize)>,
    pub diameter_fit: LogGrowthFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectedRow {
    pub n: usize,
    pub replica: usize,
    /// sup_t |π^N_t[G^λ_N] − π^N_t[G]|.
    pub sup_gap: f64,
    /// ‖G^λ_N − G‖ in L²(ν^N_ω).
    pub l2_gap: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectedSummary {
    pub n: usize,
    pub sup_gap_mean: f64,
    pub sup_gap_stderr: f64,
    pub l2_gap_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub kind: ExperimentKind,
    pub spec: ExperimentSpec,
    pub replicas: Vec<ReplicaInfo>,
    pub rows: Vec<GapRow>,
    pub summary: Vec<GapSummary>,
    pub smoothed_l1: Vec<L1Row>,
    pub ladder: Vec<LadderRow>,
    pub ladder_summary: Vec<LadderSummary>,
    pub bulk: Option<BulkSection>,
    pub corrected: Vec<CorrectedRow>,
    pub corrected_summary: Vec<CorrectedSummary>,
}

/// Mean and standard error of the mean (0 for a single value).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

impl ComparisonReport {
    pub fn new(kind: ExperimentKind, spec: ExperimentSpec) -> Self {
        ComparisonReport {
            kind,
            spec,
            replicas: Vec::new(),
            rows: Vec::new(),
            summary: Vec::new(),
            smoothed_l1: Vec::new(),
            ladder: Vec::new(),
            ladder_summary: Vec::new(),
            bulk: None,
            corrected: Vec::new(),
            corrected_summary: Vec::new(),
        }
    }

    /// Aggregates `rows` over replicas, keeping first-appearance order.
    pub fn summarize(&mut self, scales: &[(String, usize, usize, f64)]) {
        let mut keys: Vec<(String, usize, u64, usize)> = Vec::new();
        for r in &self.rows {
            let k = (r.model.clone(), r.n, r.t.to_bits(), r.test);
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
        self.summary = keys
            .into_iter()
            .map(|(model, n, tb, test)| {
                let group: Vec<&GapRow> = self
                    .rows
                    .iter()
                    .filter(|r| r.model == model && r.n == n && r.t.to_bits() == tb && r.test == test)
                    .collect();
                let emp: Vec<f64> = group.iter().map(|r| r.empirical).collect();
                let pred: Vec<f64> = group.iter().map(|r| r.prediction).collect();
                let gaps: Vec<f64> = group.iter().map(|r| r.gap).collect();
                let (empirical_mean, empirical_stderr) = mean_stderr(&emp);
                let (gap_mean, gap_stderr) = mean_stderr(&gaps);
                let scale = scales
                    .iter()
                    .find(|s| s.0 == model && s.1 == n && s.2 == test)
                    .map_or(f64::NAN, |s| s.3);
                GapSummary {
                    model,
                    n,
                    t: f64::from_bits(tb),
                    test,
                    replicas: group.len(),
                    empirical_mean,
                    empirical_stderr,
                    prediction_mean: mean_stderr(&pred).0,
                    gap_mean,
                    gap_stderr,
                    scale,
                }
            })
            .collect();
    }

    pub fn summary_for(&self, model: &str, n: usize, t: f64, test: usize) -> Option<&GapSummary> {
        self.summary
            .iter()
            .find(|s| s.model == model && s.n == n && s.t == t && s.test == test)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes `report.json` and the CSV tables into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_json(&dir.join("report.json"), self)?;
        let f = |v: f64| format!("{v:.12e}");
        if !self.rows.is_empty() {
            let rows: Vec<Vec<String>> = self
                .rows
                .iter()
                .map(|r| {
                    vec![
                        r.model.clone(),
                        r.n.to_string(),
                        f(r.t),
                        r.test.to_string(),
                        r.replica.to_string(),
                        f(r.empirical),
                        f(r.prediction),
                        f(r.gap),
                    ]
                })
                .collect();
            write_csv(
                &dir.join("gaps.csv"),
                &["model", "n", "t", "test", "replica", "empirical", "prediction", "gap"],
                &rows,
            )?;
            let rows: Vec<Vec<String>> = self
                .summary
                .iter()
                .map(|s| {
                    vec![
                        s.model.clone(),
                        s.n.to_string(),
                        f(s.t),
                        s.test.to_string(),
                        s.replicas.to_string(),
                        f(s.empirical_mean),
                        f(s.empirical_stderr),
                        f(s.prediction_mean),
                        f(s.gap_mean),
                        f(s.gap_stderr),
                        f(s.scale),
                    ]
                })
                .collect();
            write_csv(
                &dir.join("summary.csv"),
                &[
                    "model", "n", "t", "test", "replicas", "empirical_mean", "empirical_stderr",
                    "prediction_mean", "gap_mean", "gap_stderr", "scale",
                ],
                &rows,
            )?;
        }
        if !self.smoothed_l1.is_empty() {
            let rows: Vec<Vec<String>> = self
                .smoothed_l1
                .iter()
                .map(|r| vec![r.n.to_string(), f(r.t), r.replica.to_string(), r.ell.to_string(), f(r.distance)])
                .collect();
            write_csv(&dir.join("smoothed_l1.csv"), &["n", "t", "replica", "ell", "distance"], &rows)?;
        }
        if !self.ladder.is_empty() {
            let rows: Vec<Vec<String>> = self
                .ladder
                .iter()
                .map(|r| vec![r.n.to_string(), r.replica.to_string(), r.ell.to_string(), f(r.value), r.clamped.to_string()])
                .collect();
            write_csv(&dir.join("replacement.csv"), &["n", "replica", "ell", "value", "clamped"], &rows)?;
        }
        if let Some(b) = &self.bulk {
            let rows: Vec<Vec<String>> = b
                .traps
                .iter()
                .map(|r| {
                    vec![
                        r.n.to_string(),
                        r.replica.to_string(),
                        f(r.t),
                        r.test.to_string(),
                        f(r.lhs),
                        f(r.rhs),
                        r.holds.to_string(),
                    ]
                })
                .collect();
            write_csv(&dir.join("traps.csv"), &["n", "replica", "t", "test", "lhs", "rhs", "holds"], &rows)?;
        }
        if !self.corrected.is_empty() {
            let rows: Vec<Vec<String>> = self
                .corrected
                .iter()
                .map(|r| vec![r.n.to_string(), r.replica.to_string(), f(r.sup_gap), f(r.l2_gap), f(r.residual)])
                .collect();
            write_csv(&dir.join("corrected.csv"), &["n", "replica", "sup_gap", "l2_gap", "residual"], &rows)?;
        }
        Ok(())
    }
}
