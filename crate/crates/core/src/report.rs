//! Run reports shared by both samplers, serialised as TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Smc,
    Remc,
}

impl std::fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SamplerKind::Smc => "smc",
            SamplerKind::Remc => "remc",
        })
    }
}

/// Outcome of one sampler run.
///
/// Per-level fields are filled by SMC, per-replica fields by REMC. Posterior
/// draws are equally weighted samples at β = 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub sampler: SamplerKind,
    /// Bayesian free energy `F = -log Z`; NaN when the estimate failed.
    pub free_energy: f64,
    pub non_finite: bool,
    #[serde(default)]
    pub diagnostics: Vec<String>,
    pub seed: u64,
    pub workers: usize,
    pub n_points: usize,
    /// Sampler wall-clock time in seconds (excludes I/O).
    pub wall_time_s: f64,
    /// Inverse-temperature ladder actually used.
    pub betas: Vec<f64>,
    #[serde(default)]
    pub level_ess: Vec<f64>,
    #[serde(default)]
    pub level_log_mean_weight: Vec<f64>,
    /// Component sweeps executed while moving to each level.
    #[serde(default)]
    pub level_sweeps: Vec<u64>,
    #[serde(default)]
    pub level_ensemble_size: Vec<usize>,
    #[serde(default)]
    pub swap_rates: Vec<f64>,
    /// Per-level (SMC) or per-replica (REMC) acceptance rate of each component.
    #[serde(default)]
    pub acceptance: Vec<Vec<f64>>,
    pub parameter_names: Vec<String>,
    #[serde(default)]
    pub posterior: Vec<Vec<f64>>,
    /// Configuration text the run was started from, verbatim.
    #[serde(default)]
    pub config: String,
}

impl RunReport {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("report", e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config("report", e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Posterior draws of one named parameter.
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let j = self
            .parameter_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))?;
        Ok(self.posterior.iter().map(|row| row[j]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_keeps_nan_and_arrays() {
        let r = RunReport {
            sampler: SamplerKind::Remc,
            free_energy: f64::NAN,
            non_finite: true,
            diagnostics: vec!["pair 3 accumulator is -inf".into()],
            seed: 5,
            workers: 1,
            n_points: 10,
            wall_time_s: 0.25,
            betas: vec![0.0, 0.5, 1.0],
            level_ess: vec![],
            level_log_mean_weight: vec![],
            level_sweeps: vec![],
            level_ensemble_size: vec![],
            swap_rates: vec![0.3, 0.1],
            acceptance: vec![vec![0.5], vec![0.4], vec![0.2]],
            parameter_names: vec!["theta".into()],
            posterior: vec![vec![0.1], vec![0.2]],
            config: "seed = 5\n".into(),
        };
        let back = RunReport::from_toml(&r.to_toml().unwrap()).unwrap();
        assert!(back.free_energy.is_nan());
        assert_eq!(back.posterior, r.posterior);
        assert_eq!(back.config, r.config);
        assert_eq!(back.column("theta").unwrap(), vec![0.1, 0.2]);
        assert!(back.column("mu_1").is_err());
    }
}
