//! Synthetic datasets with known ground truth.
//!
//! True parameter values and generation conditions are read from the TOML
//! files bundled in `data/`, so the numbers can be audited in one place.

use std::collections::BTreeMap;
use std::path::Path;

use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::defaults::{gaussian_mixture_priors_with, xps_priors, xrd_priors};
use crate::error::{Error, Result};
use crate::model::{ModelFamily, ModelSpec, NoiseSpec, PhaseRef};
use crate::prior::Prior;
use crate::real::Real;
use crate::rng::{Purpose, RngStream};
use crate::spectrum::{linspace, AxisKind, Spectrum};

const GM_K3: &str = include_str!("../data/gm_k3.toml");
const GM_K10: &str = include_str!("../data/gm_k10.toml");
const GM_K30: &str = include_str!("../data/gm_k30.toml");
const XRD_TRUTH: &str = include_str!("../data/xrd_truth.toml");
const XPS_SURROGATE: &str = include_str!("../data/xps_surrogate.toml");

/// Reference reflections bundled for the synthetic diffraction data.
pub const TIO2_REFLECTIONS: &str = include_str!("../data/tio2_synthetic_reflections.csv");

/// Ground truth of a generated dataset, written next to it as a sidecar file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthTable {
    /// Dataset identifier (`gm3`, `gm10`, `gm30`, `xrd`, `xps`).
    pub family: String,
    pub n_points: usize,
    pub x_min: f64,
    pub x_max: f64,
    /// Noise model used for generation, e.g. `gaussian(sigma = 0.1)`.
    pub noise: String,
    pub seed: u64,
    /// True parameter values keyed by layout name.
    pub parameters: BTreeMap<String, f64>,
}

impl TruthTable {
    fn new(family: &str, n_points: usize, range: (f64, f64), noise: String, seed: u64, names: &[String], values: &[f64]) -> Self {
        Self {
            family: family.into(),
            n_points,
            x_min: range.0,
            x_max: range.1,
            noise,
            seed,
            parameters: names.iter().cloned().zip(values.iter().copied()).collect(),
        }
    }

    /// True values in the parameter order of `spec`.
    pub fn theta_for<S: Real>(&self, spec: &ModelSpec<S>) -> Result<Vec<S>> {
        spec.names()
            .iter()
            .map(|n| {
                self.parameters
                    .get(n)
                    .map(|&v| S::lit(v))
                    .ok_or_else(|| Error::UnknownParameter(n.clone()))
            })
            .collect()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.parameters.get(name).copied()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("truth", e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config("truth", e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }
}

/// A generated spectrum with the model it was drawn from.
#[derive(Debug, Clone)]
pub struct Dataset<S> {
    pub spectrum: Spectrum<S>,
    pub spec: ModelSpec<S>,
    pub truth: TruthTable,
}

fn parse_table<'de, T: Deserialize<'de>>(text: &'de str, what: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Generation(format!("bundled {what} table: {e}")))
}

#[derive(Deserialize)]
struct GmTable {
    peaks: usize,
    n_points: usize,
    x_min: f64,
    x_max: f64,
    sigma: f64,
    mu_prior: String,
    truth: Vec<[f64; 3]>,
}

fn rng(seed: u64) -> RngStream {
    RngStream::new(seed, Purpose::Synthetic, 0, 0)
}

/// Gaussian-mixture dataset with `k ∈ {3, 10, 30}` peaks.
pub fn gen_gaussian_mixture<S: Real>(k: usize, seed: u64) -> Result<Dataset<S>> {
    gen_gaussian_mixture_with(k, seed, None)
}

/// As [`gen_gaussian_mixture`], with the generating noise level overridden.
/// The returned model keeps the tabulated `σ`; `Some(0.0)` yields the
/// noiseless forward curve.
pub fn gen_gaussian_mixture_with<S: Real>(k: usize, seed: u64, noise_sigma: Option<f64>) -> Result<Dataset<S>> {
    let text = match k {
        3 => GM_K3,
        10 => GM_K10,
        30 => GM_K30,
        _ => return Err(Error::Generation(format!("no Gaussian-mixture table for K = {k} (use 3, 10 or 30)"))),
    };
    let table: GmTable = parse_table(text, "Gaussian-mixture")?;
    debug_assert_eq!(table.truth.len(), table.peaks);
    let mu_prior: Prior<S> = table.mu_prior.parse()?;
    let spec = ModelSpec::new(
        ModelFamily::GaussianMixture { peaks: table.peaks },
        gaussian_mixture_priors_with(table.peaks, mu_prior)?,
        NoiseSpec::GaussianFixed { sigma: S::lit(table.sigma) },
    )?;
    let values: Vec<f64> = table.truth.iter().flatten().copied().collect();
    let theta: Vec<S> = values.iter().map(|&v| S::lit(v)).collect();
    let xs = linspace(S::lit(table.x_min), S::lit(table.x_max), table.n_points);
    let mean = crate::model::forward(&spec, &theta, &xs)?;
    let sigma = S::lit(noise_sigma.unwrap_or(table.sigma));
    let mut r = rng(seed);
    let ys = mean.iter().map(|&m| m + sigma * S::standard_normal(&mut r)).collect();
    let spectrum = Spectrum::new(xs, ys, AxisKind::Generic)?;
    let truth = TruthTable::new(
        &format!("gm{k}"),
        table.n_points,
        (table.x_min, table.x_max),
        format!("gaussian(sigma = {})", sigma.f64()),
        seed,
        spec.names(),
        &values,
    );
    Ok(Dataset { spectrum, spec, truth })
}

#[derive(Deserialize)]
struct XrdPhaseRow {
    name: String,
    #[serde(rename = "A")]
    a: f64,
    shift: f64,
    alpha: f64,
    r: f64,
    u: f64,
    v: f64,
    w: f64,
    s: f64,
    t: f64,
}

#[derive(Deserialize)]
struct XrdBackground {
    a: f64,
    sigma: f64,
    r: f64,
    b: f64,
}

#[derive(Deserialize)]
struct XrdTable {
    x_min: f64,
    x_max: f64,
    phase: Vec<XrdPhaseRow>,
    background: XrdBackground,
}

/// Options for [`gen_xrd_with`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct XrdOptions {
    /// Set every phase amplitude to zero.
    pub background_only: bool,
    /// Return the mean curve instead of Poisson counts.
    pub noiseless: bool,
}

/// Three-phase diffraction pattern on `n_points` angles with Poisson counts.
pub fn gen_xrd<S: Real>(n_points: usize, seed: u64) -> Result<Dataset<S>> {
    gen_xrd_with(n_points, seed, XrdOptions::default())
}

pub fn gen_xrd_with<S: Real>(n_points: usize, seed: u64, opts: XrdOptions) -> Result<Dataset<S>> {
    if n_points < 2 {
        return Err(Error::Generation("need at least two angles".into()));
    }
    let table: XrdTable = parse_table(XRD_TRUTH, "diffraction")?;
    let all_refs = PhaseRef::<S>::parse_list(TIO2_REFLECTIONS)?;
    let phases: Vec<PhaseRef<S>> = table
        .phase
        .iter()
        .map(|row| {
            all_refs
                .iter()
                .find(|p| p.name == row.name)
                .cloned()
                .ok_or_else(|| Error::MissingReference(row.name.clone()))
        })
        .collect::<Result<_>>()?;
    let mut values = Vec::with_capacity(9 * phases.len() + 4);
    for row in &table.phase {
        let amp = if opts.background_only { 0.0 } else { row.a };
        values.extend([amp, row.shift, row.r, row.alpha, row.u, row.v, row.w, row.s, row.t]);
    }
    let bg = &table.background;
    values.extend([bg.a, bg.sigma, bg.r, bg.b]);
    let theta: Vec<S> = values.iter().map(|&v| S::lit(v)).collect();

    let xs = linspace(S::lit(table.x_min), S::lit(table.x_max), n_points);
    let family = ModelFamily::XrdPseudoVoigt { phases };
    // Placeholder priors for evaluating the truth; replaced once data exist.
    let placeholder = vec![Prior::uniform(0.0, 1.0)?; family.dim()];
    let mean_spec = ModelSpec::new(family.clone(), placeholder, NoiseSpec::Poisson)?;
    let mean = crate::model::forward(&mean_spec, &theta, &xs)?;
    if let Some(i) = mean.iter().position(|&m| !(m > S::zero())) {
        return Err(Error::Generation(format!("non-positive mean intensity at 2θ = {}", xs[i])));
    }
    let ys: Vec<S> = if opts.noiseless {
        mean
    } else {
        let mut r = rng(seed);
        mean.iter()
            .map(|&m| {
                let d = Poisson::new(m.f64()).map_err(|e| Error::Generation(e.to_string()))?;
                Ok(S::lit(d.sample(&mut r)))
            })
            .collect::<Result<_>>()?
    };
    let spectrum = Spectrum::new(xs, ys, AxisKind::TwoTheta)?;
    let ModelFamily::XrdPseudoVoigt { phases } = &family else { unreachable!() };
    let priors = xrd_priors(phases, &spectrum)?;
    let spec = ModelSpec::new(family.clone(), priors, NoiseSpec::Poisson)?;
    let truth = TruthTable::new(
        "xrd",
        n_points,
        (table.x_min, table.x_max),
        if opts.noiseless { "none".into() } else { "poisson".into() },
        seed,
        spec.names(),
        &values,
    );
    Ok(Dataset { spectrum, spec, truth })
}

#[derive(Deserialize)]
struct XpsTable {
    n_points: usize,
    x_min: f64,
    x_max: f64,
    sigma0: f64,
    sigma1: f64,
    sigma2: f64,
    a: f64,
    b: f64,
    peaks: Vec<[f64; 4]>,
}

/// Number of peaks available in the bundled XPS surrogate table.
pub fn xps_surrogate_max_peaks() -> usize {
    parse_table::<XpsTable>(XPS_SURROGATE, "XPS").map(|t| t.peaks.len()).unwrap_or(0)
}

/// Surrogate XPS spectrum with `k_true` peaks on a Shirley background and
/// heteroscedastic Gaussian noise.
pub fn gen_xps<S: Real>(k_true: usize, seed: u64) -> Result<Dataset<S>> {
    gen_xps_with(k_true, seed, None)
}

/// As [`gen_xps`], with `(σ0, σ1, σ2)` overridden for both generation and the
/// returned model.
pub fn gen_xps_with<S: Real>(k_true: usize, seed: u64, sigmas: Option<(f64, f64, f64)>) -> Result<Dataset<S>> {
    let table: XpsTable = parse_table(XPS_SURROGATE, "XPS")?;
    if k_true == 0 || k_true > table.peaks.len() {
        return Err(Error::Generation(format!(
            "k_true must lie in 1..={} for the bundled surrogate",
            table.peaks.len()
        )));
    }
    let (s0, s1, s2) = sigmas.unwrap_or((table.sigma0, table.sigma1, table.sigma2));
    let noise = NoiseSpec::XpsHetero { sigma0: S::lit(s0), sigma1: S::lit(s1), sigma2: S::lit(s2) };
    noise.validate()?;
    let mut values: Vec<f64> = table.peaks[..k_true].iter().flatten().copied().collect();
    values.extend([table.a, table.b]);
    let theta: Vec<S> = values.iter().map(|&v| S::lit(v)).collect();
    let family = ModelFamily::XpsShirley { peaks: k_true };
    let xs = linspace(S::lit(table.x_min), S::lit(table.x_max), table.n_points);
    let placeholder = vec![Prior::uniform(0.0, 1.0)?; family.dim()];
    let mean = crate::model::forward(&ModelSpec::new(family.clone(), placeholder, noise)?, &theta, &xs)?;
    let mut r = rng(seed);
    let (v0, v1, v2) = (S::lit(s0 * s0), S::lit(s1 * s1), S::lit(s2 * s2));
    let ys = mean
        .iter()
        .map(|&f| {
            let var = (v0 * f + v1 * f * f + v2).max(S::zero());
            f + var.sqrt() * S::standard_normal(&mut r)
        })
        .collect();
    let spectrum = Spectrum::new(xs, ys, AxisKind::BindingEnergy)?;
    let spec = ModelSpec::new(family, xps_priors(k_true, &spectrum)?, noise)?;
    let truth = TruthTable::new(
        "xps",
        table.n_points,
        (table.x_min, table.x_max),
        format!("xps_hetero(sigma0 = {s0}, sigma1 = {s1}, sigma2 = {s2})"),
        seed,
        spec.names(),
        &values,
    );
    Ok(Dataset { spectrum, spec, truth })
}

/// Model for fitting a surrogate XPS spectrum with `peaks` peaks (default
/// priors from the data, surrogate noise levels).
pub fn xps_fit_spec<S: Real>(peaks: usize, data: &Spectrum<S>) -> Result<ModelSpec<S>> {
    let table: XpsTable = parse_table(XPS_SURROGATE, "XPS")?;
    ModelSpec::new(
        ModelFamily::XpsShirley { peaks },
        xps_priors(peaks, data)?,
        NoiseSpec::XpsHetero { sigma0: S::lit(table.sigma0), sigma1: S::lit(table.sigma1), sigma2: S::lit(table.sigma2) },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gm_tables_load() {
        for (k, n, hi, sigma) in [(3, 300, 3.0, 0.1), (10, 1000, 10.0, 0.1), (30, 3000, 30.0, 0.05)] {
            let d = gen_gaussian_mixture::<f64>(k, 1).unwrap();
            assert_eq!(d.spectrum.len(), n);
            assert_eq!(d.spectrum.x_range(), (0.0, hi));
            assert_eq!(d.spec.noise, NoiseSpec::GaussianFixed { sigma });
            assert_eq!(d.truth.parameters.len(), 3 * k);
        }
        assert!(gen_gaussian_mixture::<f64>(4, 1).is_err());
    }

    #[test]
    fn gm3_truth_transcribed() {
        let d = gen_gaussian_mixture::<f64>(3, 0).unwrap();
        assert_eq!(d.truth.get("A_1"), Some(0.587));
        assert_eq!(d.truth.get("mu_2"), Some(1.455));
        assert_eq!(d.truth.get("b_3"), Some(164.469));
        assert_eq!(d.spec.priors[1], Prior::Normal { mean: 1.5, var: 0.2 });
    }

    #[test]
    fn zero_noise_reproduces_forward() {
        let d = gen_gaussian_mixture_with::<f64>(10, 5, Some(0.0)).unwrap();
        let theta = d.truth.theta_for(&d.spec).unwrap();
        let f = crate::model::forward(&d.spec, &theta, d.spectrum.xs()).unwrap();
        assert_eq!(f, d.spectrum.ys());
    }

    #[test]
    fn same_seed_same_data() {
        let a = gen_xps::<f64>(3, 9).unwrap();
        let b = gen_xps::<f64>(3, 9).unwrap();
        assert_eq!(a.spectrum, b.spectrum);
        let c = gen_xps::<f64>(3, 10).unwrap();
        assert_ne!(a.spectrum, c.spectrum);
    }

    #[test]
    fn xrd_background_only_matches_background_formula() {
        let d = gen_xrd_with::<f64>(1000, 0, XrdOptions { background_only: true, noiseless: true }).unwrap();
        for (&x, &y) in d.spectrum.xs().iter().zip(d.spectrum.ys()) {
            let z = x / 10.0;
            let expected = 60000.0 * (-4.0 * std::f64::consts::LN_2 * z * z).exp() + 100.0;
            assert!((y - expected).abs() <= 1e-12 * expected, "{x}: {y} vs {expected}");
        }
    }

    #[test]
    fn xrd_grid_and_counts() {
        let d = gen_xrd::<f64>(5000, 3).unwrap();
        assert_eq!(d.spectrum.len(), 5000);
        assert!(d.spectrum.xs().windows(2).all(|w| w[1] > w[0]));
        assert!(d.spectrum.check_counts().is_ok());
        assert_eq!(d.spec.dim(), 31);
    }

    #[test]
    fn poisson_draws_concentrate_at_large_means() {
        let mut r = rng(0);
        let p = Poisson::new(1e6).unwrap();
        let mean: f64 = (0..1000).map(|_| p.sample(&mut r)).sum::<f64>() / 1000.0;
        assert!((mean / 1e6 - 1.0).abs() < 0.005);
    }

    #[test]
    fn xps_surrogate_size_and_truth_in_prior() {
        let d = gen_xps::<f64>(7, 2).unwrap();
        assert_eq!(d.spectrum.len(), 840);
        let theta = d.truth.theta_for(&d.spec).unwrap();
        // Peak parameters lie inside their priors.
        for ((prior, &v), name) in d.spec.priors.iter().zip(&theta).zip(d.spec.names()).take(28) {
            assert!(prior.logpdf(v).is_finite(), "{name}");
        }
        assert!(gen_xps::<f64>(0, 2).is_err());
    }

    #[test]
    fn xps_homoscedastic_mode() {
        let d = gen_xps_with::<f64>(2, 4, Some((0.0, 0.0, 1.0))).unwrap();
        let theta = d.truth.theta_for(&d.spec).unwrap();
        let f = crate::model::forward(&d.spec, &theta, d.spectrum.xs()).unwrap();
        let resid: Vec<f64> = d.spectrum.ys().iter().zip(&f).map(|(y, m)| y - m).collect();
        let var = resid.iter().map(|r| r * r).sum::<f64>() / resid.len() as f64;
        assert!((var - 1.0).abs() < 0.15, "{var}");
    }

    #[test]
    fn truth_round_trips_through_layout_and_toml() {
        for d in [gen_gaussian_mixture::<f64>(3, 1).unwrap(), gen_xrd::<f64>(1000, 1).unwrap()] {
            let theta = d.truth.theta_for(&d.spec).unwrap();
            let repacked: BTreeMap<String, f64> = d.spec.names().iter().cloned().zip(theta).collect();
            assert_eq!(repacked, d.truth.parameters);
            let back = TruthTable::from_toml(&d.truth.to_toml().unwrap()).unwrap();
            assert_eq!(back, d.truth);
        }
    }
}
