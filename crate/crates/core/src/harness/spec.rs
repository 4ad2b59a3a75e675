//! Experiment configuration. Every field has a default so a spec file
//! only lists what it changes; the resolved spec is echoed into reports.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::environment::BondLaw;
use crate::error::{Error, Result};
use crate::lattice::Boundary;
use crate::macroscopic::{Profile, TestFunction, TrigTerm};
use crate::zrp::JumpRateFn;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvironmentSpec {
    pub law: BondLaw,
    pub c0: f64,
    pub dim: usize,
    pub boundary: Boundary,
}

impl Default for EnvironmentSpec {
    fn default() -> Self {
        EnvironmentSpec {
            law: BondLaw::Bernoulli { p: 0.7, c: 1.0 },
            c0: 1.0,
            dim: 2,
            boundary: Boundary::Periodic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsSpec {
    /// Jump rate g, e.g. "indicator", "linear", "capped:3".
    pub rate: String,
    /// Initial macroscopic profile ρ₀, e.g. "smooth-step:0.3,1.2,0.2".
    pub profile: String,
}

impl Default for DynamicsSpec {
    fn default() -> Self {
        DynamicsSpec {
            rate: "indicator".into(),
            profile: "smooth-step:0.3,1.2,0.2".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LadderSpec {
    /// Diffusive scales N; the lattice window has side N.
    pub scales: Vec<usize>,
    /// Macroscopic observation times.
    pub times: Vec<f64>,
    pub replicas: usize,
    pub seed: u64,
}

impl Default for LadderSpec {
    fn default() -> Self {
        LadderSpec {
            scales: vec![32, 64, 128],
            times: vec![0.01, 0.05],
            replicas: 8,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoefficientSource {
    /// σ and m̂ estimated on every replica's own window.
    Window,
    /// σ fixed by `sigma`, m̂ from the window.
    Fixed,
    /// σ and m̂ read from an `effective-d` output file.
    Cache,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HomogenizationSpec {
    pub source: CoefficientSource,
    pub sigma: Option<f64>,
    pub cache: Option<PathBuf>,
    /// Resolvent parameter for the corrected-measure diagnostic.
    pub lambda: f64,
}

impl Default for HomogenizationSpec {
    fn default() -> Self {
        HomogenizationSpec {
            source: CoefficientSource::Window,
            sigma: None,
            cache: None,
            lambda: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdeSpec {
    /// Nodes per axis of the PDE mesh.
    pub grid: usize,
}

impl Default for PdeSpec {
    fn default() -> Self {
        PdeSpec { grid: 256 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsSpec {
    pub block_radii: Vec<usize>,
    /// Smoothing radius ℓ = ⌊εN⌋ for the L¹ density comparison.
    pub smoothing_eps: f64,
    pub replacement_scale: usize,
    /// Constant density of the stationary start for the replacement run.
    pub replacement_density: f64,
    pub replacement_t_end: f64,
    pub replacement_samples: usize,
}

impl Default for DiagnosticsSpec {
    fn default() -> Self {
        DiagnosticsSpec {
            block_radii: vec![2, 4, 8, 16],
            smoothing_eps: 0.1,
            replacement_scale: 64,
            replacement_density: 0.8,
            replacement_t_end: 0.02,
            replacement_samples: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub environment: EnvironmentSpec,
    pub dynamics: DynamicsSpec,
    pub ladder: LadderSpec,
    pub test_functions: Vec<TestFunction>,
    pub homogenization: HomogenizationSpec,
    pub pde: PdeSpec,
    pub diagnostics: DiagnosticsSpec,
    pub output: Option<PathBuf>,
}

/// sin(2πk x₁) as a single trig term.
pub fn sine_x1(k: i32, d: usize) -> TestFunction {
    let mut kv = vec![0; d];
    kv[0] = k;
    TestFunction::Trig {
        terms: vec![TrigTerm {
            amp: 1.0,
            k: kv,
            phase: -std::f64::consts::FRAC_PI_2,
        }],
    }
}

pub fn default_test_functions(d: usize) -> Vec<TestFunction> {
    let mut center = vec![0.5; d];
    center[0] = 0.4;
    vec![
        sine_x1(1, d),
        sine_x1(3, d),
        TestFunction::Bump {
            center,
            radius: 0.3,
            amp: 1.0,
        },
    ]
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            environment: EnvironmentSpec::default(),
            dynamics: DynamicsSpec::default(),
            ladder: LadderSpec::default(),
            test_functions: default_test_functions(2),
            homogenization: HomogenizationSpec::default(),
            pde: PdeSpec::default(),
            diagnostics: DiagnosticsSpec::default(),
            output: None,
        }
    }
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut spec: ExperimentSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        // Test functions default to the dimension actually configured.
        if !text.contains("test_functions") {
            spec.test_functions = default_test_functions(spec.environment.dim);
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn rate_fn(&self) -> Result<JumpRateFn> {
        self.dynamics.rate.parse()
    }

    pub fn profile(&self) -> Result<Profile> {
        Ok(self.dynamics.profile.parse::<Profile>()?.for_dim(self.environment.dim))
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.environment.dim;
        self.environment.law.validate(self.environment.c0)?;
        if d < 2 {
            return Err(Error::Dimension(d));
        }
        self.rate_fn()?.validate()?;
        self.profile()?.validate(d)?;
        let l = &self.ladder;
        if l.scales.is_empty() || l.scales.iter().any(|&n| n < 8) {
            return Err(Error::Config("every scale N must be at least 8".into()));
        }
        if l.scales.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("scales must be strictly increasing".into()));
        }
        if l.times.is_empty() || l.times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::Config("observation times must be finite and nonnegative".into()));
        }
        if l.replicas == 0 {
            return Err(Error::Config("at least one replica is required".into()));
        }
        if self.test_functions.is_empty() {
            return Err(Error::Config("no test functions".into()));
        }
        for g in &self.test_functions {
            g.validate(d)?;
        }
        let h = &self.homogenization;
        if !(h.lambda > 0.0) {
            return Err(Error::Config(format!("lambda must be positive (got {})", h.lambda)));
        }
        match h.source {
            CoefficientSource::Fixed if !h.sigma.is_some_and(|s| s > 0.0) => {
                return Err(Error::Config("source = \"fixed\" needs a positive sigma".into()));
            }
            CoefficientSource::Cache if h.cache.is_none() => {
                return Err(Error::Config("source = \"cache\" needs a cache path".into()));
            }
            _ => {}
        }
        if self.pde.grid < 8 {
            return Err(Error::Config("PDE grid must have at least 8 nodes per axis".into()));
        }
        let dg = &self.diagnostics;
        if dg.block_radii.contains(&0) {
            return Err(Error::Config("block radii must be positive".into()));
        }
        if !(dg.smoothing_eps > 0.0 && dg.smoothing_eps < 0.5) {
            return Err(Error::Config("smoothing_eps must lie in (0, 1/2)".into()));
        }
        if !(dg.replacement_density >= 0.0) || !(dg.replacement_t_end >= 0.0) || dg.replacement_samples == 0 {
            return Err(Error::Config("invalid replacement diagnostic settings".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let spec = ExperimentSpec::default();
        spec.validate().unwrap();
        let text = spec.to_toml().unwrap();
        assert_eq!(ExperimentSpec::from_toml(&text).unwrap(), spec);
        assert_eq!(ExperimentSpec::from_toml("").unwrap(), spec);
    }

    #[test]
    fn partial_specs_and_validation() {
        let spec = ExperimentSpec::from_toml(
            "[ladder]\nscales = [16, 32]\nreplicas = 2\n[environment]\nlaw = { kind = \"bernoulli\", p = 0.9, c = 1.0 }\n",
        )
        .unwrap();
        assert_eq!(spec.ladder.scales, vec![16, 32]);
        assert_eq!(spec.ladder.times, LadderSpec::default().times);
        for bad in [
            "[ladder]\nscales = [64, 32]\n",
            "[ladder]\nscales = [4]\n",
            "[dynamics]\nrate = \"nope\"\n",
            "[homogenization]\nsource = \"fixed\"\n",
            "[homogenization]\nsource = \"cache\"\n",
            "[ladder]\nbogus = 1\n",
            "[environment]\ndim = 3\n[[test_functions]]\nkind = \"constant\"\nvalue = 1.0\n[[test_functions]]\nkind = \"bump\"\ncenter = [0.5, 0.5]\nradius = 0.2\namp = 1.0\n",
        ] {
            assert!(ExperimentSpec::from_toml(bad).is_err(), "{bad}");
        }
        let three = ExperimentSpec::from_toml("[environment]\ndim = 3\n").unwrap();
        assert!(three.test_functions.iter().all(|g| g.validate(3).is_ok()));
    }
}
