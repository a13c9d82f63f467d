//! Run configuration files.
//!
//! A configuration is a TOML document; dotted keys such as `smc.T = 1000`
//! and tables such as `[smc]` are equivalent. Example:
//!
//! ```toml
//! family = "gaussian_mixture"
//! K = 3
//! seed = 7
//! noise.sigma = 0.1
//! prior.mu = "normal(1.5, 0.2)"
//! smc.T = 10000
//! smc.n = 10
//! ```
//!
//! `prior.<group>` overrides the prior of every parameter in a group (`A`,
//! `mu`, `b`, …); `prior.<name>` (`mu_2`, `shift_rutile`) overrides one.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::bench::{Condition, SamplerConfig};
use crate::defaults::{gaussian_mixture_priors, xps_priors, xrd_priors};
use crate::error::{Error, Result};
use crate::model::{ModelFamily, ModelSpec, NoiseSpec, PhaseRef};
use crate::prior::Prior;
use crate::remc::{RemcConfig, DEFAULT_BETA_MIN, DEFAULT_BURN_IN};
use crate::smc::{SmcConfig, DEFAULT_ESS_TARGET, DEFAULT_MAX_LEVELS, DEFAULT_STEPS};
use crate::spectrum::AxisKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    Location,
    GaussianMixture,
    Xrd,
    Xps,
}

impl FamilyName {
    pub fn axis(self) -> AxisKind {
        match self {
            FamilyName::Xrd => AxisKind::TwoTheta,
            FamilyName::Xps => AxisKind::BindingEnergy,
            _ => AxisKind::Generic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Gaussian,
    Poisson,
    GaussianApproxPoisson,
    XpsHetero,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub kind: Option<NoiseKind>,
    pub sigma: Option<f64>,
    pub sigma0: Option<f64>,
    pub sigma1: Option<f64>,
    pub sigma2: Option<f64>,
    /// Drop the ½ on the quadratic term of variance-modelled Gaussian energies.
    #[serde(default)]
    pub unhalved_quadratic: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmcSection {
    #[serde(rename = "T")]
    pub particles: Option<usize>,
    pub n: Option<usize>,
    pub ess_target: Option<f64>,
    pub max_levels: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemcSection {
    #[serde(rename = "L")]
    pub temperatures: Option<usize>,
    pub sweeps: Option<usize>,
    pub burn_in: Option<f64>,
    pub beta_min: Option<f64>,
    pub swap_period: Option<usize>,
}

/// Benchmark grid: one SMC condition per `smc_T` entry and one REMC condition
/// per `remc_sweeps` entry, other settings from `[smc]` / `[remc]`.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    #[serde(default, rename = "smc_T")]
    pub smc_particles: Vec<usize>,
    #[serde(default)]
    pub remc_sweeps: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    family: Option<FamilyName>,
    #[serde(rename = "K")]
    k: Option<usize>,
    phase_ref: Option<PathBuf>,
    phases: Option<Vec<String>>,
    seed: Option<u64>,
    workers: Option<usize>,
    #[serde(default)]
    noise: NoiseSection,
    #[serde(default)]
    prior: BTreeMap<String, String>,
    #[serde(default)]
    smc: SmcSection,
    #[serde(default)]
    remc: RemcSection,
    #[serde(default)]
    bench: BenchSection,
}

/// A parsed and checked configuration, with the original text kept for
/// echoing into reports.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub family: FamilyName,
    pub k: Option<usize>,
    pub phase_ref: Option<PathBuf>,
    pub phases: Option<Vec<String>>,
    pub seed: u64,
    pub workers: usize,
    pub noise: NoiseSection,
    pub prior: BTreeMap<String, String>,
    pub smc: SmcSection,
    pub remc: RemcSection,
    pub bench: BenchSection,
    pub text: String,
    /// Directory relative paths are resolved against.
    pub base_dir: PathBuf,
}

fn toml_error(e: toml::de::Error) -> Error {
    let msg = e.message().to_string();
    let key = msg
        .split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| "config".to_string());
    Error::config(key, msg)
}

impl FitConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(toml_error)?;
        let family = raw.family.ok_or_else(|| Error::config("family", "missing required key"))?;
        if matches!(family, FamilyName::GaussianMixture | FamilyName::Xps) {
            match raw.k {
                None => return Err(Error::config("K", "missing required key (number of peaks)")),
                Some(0) => return Err(Error::config("K", "must be at least 1")),
                _ => {}
            }
        }
        if family == FamilyName::Xrd && raw.phase_ref.is_none() {
            return Err(Error::config("phase_ref", "missing required key (reference reflection file)"));
        }
        let cfg = Self {
            family,
            k: raw.k,
            phase_ref: raw.phase_ref,
            phases: raw.phases,
            seed: raw.seed.unwrap_or(0),
            workers: raw.workers.unwrap_or(1),
            noise: raw.noise,
            prior: raw.prior,
            smc: raw.smc,
            remc: raw.remc,
            bench: raw.bench,
            text: text.to_string(),
            base_dir: PathBuf::from("."),
        };
        if let (Some(t), n) = (cfg.smc.particles, cfg.smc.n.unwrap_or(DEFAULT_STEPS)) {
            if n == 0 {
                return Err(Error::config("smc.n", "must be at least 1"));
            }
            if t % n != 0 {
                return Err(Error::config("smc.T", format!("T = {t} is not divisible by n = {n}; S = T/n must be an integer")));
            }
        }
        for (key, value) in &cfg.prior {
            value
                .parse::<Prior<f64>>()
                .map_err(|e| Error::config(format!("prior.{key}"), e.to_string()))?;
        }
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        Ok(cfg)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn noise(&self) -> Result<NoiseSpec<f64>> {
        let n = &self.noise;
        let kind = n.kind.unwrap_or(match self.family {
            FamilyName::Location | FamilyName::GaussianMixture => NoiseKind::Gaussian,
            FamilyName::Xrd => NoiseKind::Poisson,
            FamilyName::Xps => NoiseKind::XpsHetero,
        });
        let spec = match kind {
            NoiseKind::Gaussian => NoiseSpec::GaussianFixed {
                sigma: n
                    .sigma
                    .or((self.family == FamilyName::Location).then_some(1.0))
                    .ok_or_else(|| Error::config("noise.sigma", "missing required key for Gaussian noise"))?,
            },
            NoiseKind::Poisson => NoiseSpec::Poisson,
            NoiseKind::GaussianApproxPoisson => NoiseSpec::GaussianApproxPoisson,
            NoiseKind::XpsHetero => NoiseSpec::XpsHetero {
                sigma0: n.sigma0.unwrap_or(1.0),
                sigma1: n.sigma1.unwrap_or(0.01),
                sigma2: n.sigma2.unwrap_or(0.0),
            },
        };
        spec.validate().map_err(|e| Error::config("noise", e.to_string()))?;
        Ok(spec)
    }

    fn phase_refs(&self) -> Result<Vec<PhaseRef<f64>>> {
        let path = self.resolve(self.phase_ref.as_ref().expect("checked at parse"));
        let text = std::fs::read_to_string(&path)?;
        let all = PhaseRef::parse_list(&text)?;
        match &self.phases {
            None => Ok(all),
            Some(names) => names
                .iter()
                .map(|n| all.iter().find(|p| &p.name == n).cloned().ok_or_else(|| Error::MissingReference(n.clone())))
                .collect(),
        }
    }

    /// Model for `data`: family, default priors with overrides applied, noise.
    pub fn build_spec(&self, data: &crate::spectrum::Spectrum<f64>) -> Result<ModelSpec<f64>> {
        let noise = self.noise()?;
        let (family, priors) = match self.family {
            FamilyName::Location => (ModelFamily::Location, vec![Prior::normal(0.0, 1.0)?]),
            FamilyName::GaussianMixture => {
                let k = self.k.expect("checked at parse");
                (ModelFamily::GaussianMixture { peaks: k }, gaussian_mixture_priors(k, data)?)
            }
            FamilyName::Xps => {
                let k = self.k.expect("checked at parse");
                (ModelFamily::XpsShirley { peaks: k }, xps_priors(k, data)?)
            }
            FamilyName::Xrd => {
                let phases = self.phase_refs()?;
                let (lo, hi) = data.x_range();
                for p in &phases {
                    if p.out_of_range(lo, hi).len() == p.reflections.len() {
                        return Err(Error::EmptyReflections(format!("{} has no reflection inside the scan range", p.name)));
                    }
                }
                let priors = xrd_priors(&phases, data)?;
                (ModelFamily::XrdPseudoVoigt { phases }, priors)
            }
        };
        let mut spec = ModelSpec::new(family, priors, noise)?;
        spec.unhalved_quadratic = self.noise.unhalved_quadratic;
        self.apply_priors(&mut spec)?;
        Ok(spec)
    }

    fn apply_priors(&self, spec: &mut ModelSpec<f64>) -> Result<()> {
        let names = spec.names().to_vec();
        // Group overrides first so per-parameter entries win.
        let mut ordered: Vec<(&String, &String)> = self.prior.iter().collect();
        ordered.sort_by_key(|(k, _)| names.contains(k));
        for (key, value) in ordered {
            let prior: Prior<f64> = value.parse()?;
            let targets: Vec<usize> = if let Some(i) = spec.index_of(key) {
                vec![i]
            } else {
                let prefix = format!("{key}_");
                names
                    .iter()
                    .enumerate()
                    .filter(|(_, n)| n.starts_with(&prefix))
                    .map(|(i, _)| i)
                    .collect()
            };
            if targets.is_empty() {
                return Err(Error::config(format!("prior.{key}"), "matches no model parameter"));
            }
            for i in targets {
                spec.priors[i] = prior;
            }
        }
        Ok(())
    }

    pub fn smc_config(&self) -> Result<SmcConfig> {
        let particles = self.smc.particles.ok_or_else(|| Error::config("smc.T", "missing required key"))?;
        let cfg = SmcConfig {
            particles,
            steps: self.smc.n.unwrap_or(DEFAULT_STEPS),
            ess_target: self.smc.ess_target.unwrap_or(DEFAULT_ESS_TARGET),
            max_levels: self.smc.max_levels.unwrap_or(DEFAULT_MAX_LEVELS),
            seed: self.seed,
            workers: self.workers,
            schedule: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn remc_config(&self) -> Result<RemcConfig> {
        let temperatures = self.remc.temperatures.ok_or_else(|| Error::config("remc.L", "missing required key"))?;
        let sweeps = self.remc.sweeps.ok_or_else(|| Error::config("remc.sweeps", "missing required key"))?;
        let cfg = RemcConfig {
            temperatures,
            sweeps,
            burn_in: self.remc.burn_in.unwrap_or(DEFAULT_BURN_IN),
            beta_min: self.remc.beta_min.unwrap_or(DEFAULT_BETA_MIN),
            swap_period: self.remc.swap_period.unwrap_or(1),
            seed: self.seed,
            workers: self.workers,
            ladder: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Benchmark conditions from the `[bench]` grid.
    pub fn bench_conditions(&self) -> Result<Vec<Condition>> {
        let mut out = Vec::new();
        for &t in &self.bench.smc_particles {
            let mut c = self.smc_config_or_default()?;
            c.particles = t;
            c.validate()?;
            out.push(Condition::new(SamplerConfig::Smc(c)));
        }
        for &s in &self.bench.remc_sweeps {
            let mut c = self.remc_config_with_sweeps(s)?;
            c.sweeps = s;
            c.validate()?;
            out.push(Condition::new(SamplerConfig::Remc(c)));
        }
        if out.is_empty() {
            return Err(Error::config("bench", "grid is empty; set bench.smc_T and/or bench.remc_sweeps"));
        }
        Ok(out)
    }

    fn smc_config_or_default(&self) -> Result<SmcConfig> {
        let mut raw = self.clone();
        raw.smc.particles.get_or_insert(2 * raw.smc.n.unwrap_or(DEFAULT_STEPS));
        raw.smc_config()
    }

    fn remc_config_with_sweeps(&self, sweeps: usize) -> Result<RemcConfig> {
        let mut raw = self.clone();
        raw.remc.sweeps = Some(sweeps);
        raw.remc_config()
    }
}
