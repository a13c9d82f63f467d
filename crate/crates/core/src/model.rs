//! Forward-model families and their parameter layouts.
//!
//! Each family is evaluated as a sum of *blocks*: a block is a unit-height
//! profile scaled by one amplitude parameter. Samplers update one parameter at
//! a time, so only the block owning that parameter is recomputed; the total is
//! always re-summed in block order, which keeps cached and fresh evaluations
//! bit-identical.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::lineshape::{pseudo_voigt_unchecked, shirley_into, xps_peak};
use crate::prior::Prior;
use crate::real::Real;

/// Reference reflections of one crystalline phase: `(position in degrees 2θ,
/// relative intensity)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseRef<S> {
    pub name: String,
    pub reflections: Vec<(S, S)>,
}

impl<S: Real> PhaseRef<S> {
    pub fn new(name: impl Into<String>, reflections: Vec<(S, S)>) -> Result<Self> {
        let name = name.into();
        let total = reflections.iter().fold(S::zero(), |acc, r| acc + r.1);
        if reflections.is_empty()
            || reflections.iter().any(|r| r.1 < S::zero() || !r.0.is_finite())
            || !(total > S::zero())
        {
            return Err(Error::EmptyReflections(name));
        }
        Ok(Self { name, reflections })
    }

    /// Indices of reflections lying outside `[lo, hi]`.
    pub fn out_of_range(&self, lo: S, hi: S) -> Vec<usize> {
        self.reflections
            .iter()
            .enumerate()
            .filter(|(_, r)| r.0 < lo || r.0 > hi)
            .map(|(i, _)| i)
            .collect()
    }

    /// Parses `phase_name, mu_ref_deg, rel_intensity` lines, grouping by name
    /// in order of first appearance.
    pub fn parse_list(text: &str) -> Result<Vec<Self>> {
        let mut order: Vec<String> = Vec::new();
        let mut rows: Vec<Vec<(S, S)>> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let parse_err = |m: &str| Error::Parse { line: lineno + 1, message: m.to_string() };
            if fields.len() != 3 {
                return Err(parse_err("expected `phase_name, mu_ref_deg, rel_intensity`"));
            }
            let (Ok(mu), Ok(inten)) = (fields[1].parse::<f64>(), fields[2].parse::<f64>()) else {
                if order.is_empty() && rows.is_empty() {
                    continue; // header
                }
                return Err(parse_err("non-numeric reflection"));
            };
            let idx = match order.iter().position(|n| n == fields[0]) {
                Some(i) => i,
                None => {
                    order.push(fields[0].to_string());
                    rows.push(Vec::new());
                    order.len() - 1
                }
            };
            rows[idx].push((S::lit(mu), S::lit(inten)));
        }
        order.into_iter().zip(rows).map(|(n, r)| PhaseRef::new(n, r)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSpec<S> {
    GaussianFixed { sigma: S },
    Poisson,
    GaussianApproxPoisson,
    XpsHetero { sigma0: S, sigma1: S, sigma2: S },
}

impl<S: Real> NoiseSpec<S> {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseSpec::GaussianFixed { sigma } if !(sigma > S::zero()) => {
                Err(Error::Domain(format!("noise sigma must be positive, got {sigma}")))
            }
            NoiseSpec::XpsHetero { sigma0, sigma1, sigma2 } => {
                let all = [sigma0, sigma1, sigma2];
                if all.iter().any(|&s| s < S::zero()) || all.iter().all(|&s| s == S::zero()) {
                    Err(Error::Domain("heteroscedastic noise needs non-negative sigmas, not all zero".into()))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelFamily<S> {
    /// `f(x) = θ`; a one-parameter location model with closed-form evidence.
    Location,
    /// Sum of `A·exp(-(b/2)(x-μ)²)`, per-peak layout `(A, μ, b)`.
    GaussianMixture { peaks: usize },
    /// Pseudo-Voigt reference-pattern model, per-phase layout
    /// `(A, Δ2θ, r, α, u, v, w, s, t)` then background `(a, σ_bg, r_bg, b)`.
    XrdPseudoVoigt { phases: Vec<PhaseRef<S>> },
    /// Pseudo-Voigt peaks on a Shirley background, per-peak layout
    /// `(A, μ, σ, η)` then `(a, b)`.
    XpsShirley { peaks: usize },
}

pub const XRD_PHASE_PARAMS: [&str; 9] = ["A", "shift", "r", "alpha", "u", "v", "w", "s", "t"];
pub const XRD_BACKGROUND_PARAMS: [&str; 4] = ["bg_a", "bg_sigma", "bg_r", "bg_b"];
pub const GM_PEAK_PARAMS: [&str; 3] = ["A", "mu", "b"];
pub const XPS_PEAK_PARAMS: [&str; 4] = ["A", "mu", "sigma", "eta"];

impl<S: Real> ModelFamily<S> {
    pub fn dim(&self) -> usize {
        match self {
            ModelFamily::Location => 1,
            ModelFamily::GaussianMixture { peaks } => 3 * peaks,
            ModelFamily::XrdPseudoVoigt { phases } => 9 * phases.len() + 4,
            ModelFamily::XpsShirley { peaks } => 4 * peaks + 2,
        }
    }

    /// Parameter names in layout order. Peak indices are 1-based.
    pub fn layout(&self) -> Vec<String> {
        match self {
            ModelFamily::Location => vec!["theta".into()],
            ModelFamily::GaussianMixture { peaks } => (1..=*peaks)
                .flat_map(|k| GM_PEAK_PARAMS.iter().map(move |p| format!("{p}_{k}")))
                .collect(),
            ModelFamily::XrdPseudoVoigt { phases } => phases
                .iter()
                .flat_map(|ph| XRD_PHASE_PARAMS.iter().map(move |p| format!("{p}_{}", ph.name)))
                .chain(XRD_BACKGROUND_PARAMS.iter().map(|s| s.to_string()))
                .collect(),
            ModelFamily::XpsShirley { peaks } => (1..=*peaks)
                .flat_map(|k| XPS_PEAK_PARAMS.iter().map(move |p| format!("{p}_{k}")))
                .chain(["a".to_string(), "b".to_string()])
                .collect(),
        }
    }

    /// Number of exchangeable peaks and parameters per peak, for relabelling.
    /// `None` for families whose blocks are not exchangeable.
    pub fn exchangeable_peaks(&self) -> Option<(usize, usize, usize)> {
        match self {
            ModelFamily::GaussianMixture { peaks } => Some((*peaks, 3, 1)),
            ModelFamily::XpsShirley { peaks } => Some((*peaks, 4, 1)),
            _ => None,
        }
    }
}

/// Complete description of a model: family, one prior per scalar parameter,
/// and the noise model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec<S> {
    pub family: ModelFamily<S>,
    pub priors: Vec<Prior<S>>,
    pub noise: NoiseSpec<S>,
    names: Vec<String>,
    /// Use `(y-f)²/σ²` instead of `(y-f)²/(2σ²)` in the variance-modelled
    /// Gaussian energies (XPS and Gaussian-approximated Poisson).
    pub unhalved_quadratic: bool,
}

impl<S: Real> ModelSpec<S> {
    pub fn new(family: ModelFamily<S>, priors: Vec<Prior<S>>, noise: NoiseSpec<S>) -> Result<Self> {
        let names = family.layout();
        if priors.len() != names.len() {
            return Err(Error::Layout { expected: names.len(), got: priors.len() });
        }
        let mut seen = HashSet::new();
        if let Some(dup) = names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(Error::config(dup.clone(), "duplicate parameter name"));
        }
        noise.validate()?;
        for p in &priors {
            p.validated()?;
        }
        Ok(Self { family, priors, noise, names, unhalved_quadratic: false })
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn check_theta(&self, theta: &[S]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::Layout { expected: self.dim(), got: theta.len() });
        }
        Ok(())
    }
}

/// How a parameter enters the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Role {
    /// Scales the unit profile of a block.
    Amplitude,
    /// Changes the unit profile of a block.
    Shape(usize),
    /// Enters only at assembly (offsets, Shirley endpoints, location).
    Assembly,
}

/// A width that made a block non-evaluable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Fault {
    pub x: f64,
}

/// Precomputed evaluation context for one x-grid.
#[derive(Debug, Clone)]
pub(crate) struct Evaluator<'a, S> {
    pub spec: &'a ModelSpec<S>,
    pub xs: &'a [S],
    tan_half: Vec<S>,
    sec_half: Vec<S>,
}

impl<'a, S: Real> Evaluator<'a, S> {
    pub fn new(spec: &'a ModelSpec<S>, xs: &'a [S]) -> Self {
        let (tan_half, sec_half) = match spec.family {
            ModelFamily::XrdPseudoVoigt { .. } => {
                let to_rad = S::PI() / S::lit(360.0);
                xs.iter().map(|&x| ((x * to_rad).tan(), S::one() / (x * to_rad).cos())).unzip()
            }
            _ => (Vec::new(), Vec::new()),
        };
        Self { spec, xs, tan_half, sec_half }
    }

    pub fn n_blocks(&self) -> usize {
        match &self.spec.family {
            ModelFamily::Location => 0,
            ModelFamily::GaussianMixture { peaks } | ModelFamily::XpsShirley { peaks } => *peaks,
            ModelFamily::XrdPseudoVoigt { phases } => phases.len() + 1,
        }
    }

    /// Index of the amplitude parameter of `block`.
    #[inline]
    fn amplitude_index(&self, block: usize) -> usize {
        match &self.spec.family {
            ModelFamily::Location => unreachable!("location model has no blocks"),
            ModelFamily::GaussianMixture { .. } => 3 * block,
            ModelFamily::XrdPseudoVoigt { .. } => 9 * block,
            ModelFamily::XpsShirley { .. } => 4 * block,
        }
    }

    pub fn role(&self, component: usize) -> Role {
        match &self.spec.family {
            ModelFamily::Location => Role::Assembly,
            ModelFamily::GaussianMixture { .. } => {
                if component.is_multiple_of(3) {
                    Role::Amplitude
                } else {
                    Role::Shape(component / 3)
                }
            }
            ModelFamily::XrdPseudoVoigt { phases } => {
                let bg = 9 * phases.len();
                if component < bg {
                    if component.is_multiple_of(9) {
                        Role::Amplitude
                    } else {
                        Role::Shape(component / 9)
                    }
                } else {
                    match component - bg {
                        0 => Role::Amplitude,
                        1 | 2 => Role::Shape(phases.len()),
                        _ => Role::Assembly,
                    }
                }
            }
            ModelFamily::XpsShirley { peaks } => {
                if component >= 4 * peaks {
                    Role::Assembly
                } else if component.is_multiple_of(4) {
                    Role::Amplitude
                } else {
                    Role::Shape(component / 4)
                }
            }
        }
    }

    /// Writes the unit-amplitude profile of `block` into `out`.
    pub fn unit(&self, block: usize, theta: &[S], out: &mut [S]) -> Result<(), Fault> {
        let xs = self.xs;
        match &self.spec.family {
            ModelFamily::Location => Ok(()),
            ModelFamily::GaussianMixture { .. } => {
                let (mu, b) = (theta[3 * block + 1], theta[3 * block + 2]);
                let half_b = S::lit(0.5) * b;
                for (o, &x) in out.iter_mut().zip(xs) {
                    let d = x - mu;
                    *o = (-half_b * d * d).exp();
                }
                Ok(())
            }
            ModelFamily::XpsShirley { .. } => {
                let p = &theta[4 * block..4 * block + 4];
                let (mu, sigma, eta) = (p[1], p[2], p[3]);
                if !(sigma > S::zero()) {
                    return Err(Fault { x: xs[0].f64() });
                }
                for (o, &x) in out.iter_mut().zip(xs) {
                    *o = xps_peak(x, mu, sigma, eta);
                }
                Ok(())
            }
            ModelFamily::XrdPseudoVoigt { phases } => {
                if block == phases.len() {
                    let p = &theta[9 * block..9 * block + 4];
                    let (sigma, r) = (p[1], p[2]);
                    if !(sigma > S::zero()) {
                        return Err(Fault { x: xs[0].f64() });
                    }
                    for (o, &x) in out.iter_mut().zip(xs) {
                        *o = pseudo_voigt_unchecked(x, S::zero(), sigma, sigma, r);
                    }
                    return Ok(());
                }
                let p = &theta[9 * block..9 * block + 9];
                let (shift, r, alpha) = (p[1], p[2], p[3]);
                let (u, v, w, s, t) = (p[4], p[5], p[6], p[7], p[8]);
                let refl = &phases[block].reflections;
                for (i, o) in out.iter_mut().enumerate() {
                    let x = xs[i];
                    let th = self.tan_half[i];
                    let disc = u * th * th - v * th + w;
                    let lor = s * self.sec_half[i] + t * th;
                    if !(disc > S::zero()) || !(lor > S::zero()) {
                        return Err(Fault { x: x.f64() });
                    }
                    let cag = disc.sqrt();
                    let mut acc = S::zero();
                    for &(mu_ref, inten) in refl {
                        let centre = mu_ref + shift;
                        let asym = if x >= centre { alpha } else { S::one() };
                        acc = acc + inten * pseudo_voigt_unchecked(x, centre, asym * cag, asym * lor, r);
                    }
                    *o = acc;
                }
                Ok(())
            }
        }
    }

    /// Writes `f(x)` into `f`. `replace` substitutes the unit profile of one
    /// block; `tmp` is scratch space of the grid length.
    pub fn assemble(
        &self,
        theta: &[S],
        units: &[Vec<S>],
        replace: Option<(usize, &[S])>,
        f: &mut [S],
        tmp: &mut [S],
    ) {
        if let ModelFamily::Location = self.spec.family {
            f.fill(theta[0]);
            return;
        }
        f.fill(S::zero());
        for (block, unit) in units.iter().enumerate() {
            let src: &[S] = match replace {
                Some((b, r)) if b == block => r,
                _ => unit,
            };
            let amp = theta[self.amplitude_index(block)];
            for (fi, &ui) in f.iter_mut().zip(src) {
                *fi = *fi + amp * ui;
            }
        }
        match &self.spec.family {
            ModelFamily::XrdPseudoVoigt { phases } => {
                let offset = theta[9 * phases.len() + 3];
                for fi in f.iter_mut() {
                    *fi = *fi + offset;
                }
            }
            ModelFamily::XpsShirley { peaks } => {
                let (a, b) = (theta[4 * peaks], theta[4 * peaks + 1]);
                shirley_into(self.xs, f, a, b, tmp);
                for (fi, &bi) in f.iter_mut().zip(tmp.iter()) {
                    *fi = *fi + bi;
                }
            }
            _ => {}
        }
    }

    /// Evaluates all blocks from scratch.
    pub fn evaluate(&self, theta: &[S]) -> Result<Vec<S>, Fault> {
        let n = self.xs.len();
        let mut units = vec![vec![S::zero(); n]; self.n_blocks()];
        for (b, u) in units.iter_mut().enumerate() {
            self.unit(b, theta, u)?;
        }
        let mut f = vec![S::zero(); n];
        let mut tmp = vec![S::zero(); n];
        self.assemble(theta, &units, None, &mut f, &mut tmp);
        Ok(f)
    }
}

fn fault_error<S: Real>(spec: &ModelSpec<S>, theta: &[S], fault: Fault) -> Error {
    match &spec.family {
        ModelFamily::XrdPseudoVoigt { phases } => {
            // Identify the phase from the widths, for the message only.
            let phase = phases
                .iter()
                .enumerate()
                .find(|(k, _)| {
                    let p = &theta[9 * k..9 * k + 9];
                    let to_rad = std::f64::consts::PI / 360.0;
                    let th = (fault.x * to_rad).tan();
                    let disc = p[4].f64() * th * th - p[5].f64() * th + p[6].f64();
                    !(disc > 0.0)
                })
                .map(|(_, ph)| ph.name.clone())
                .unwrap_or_else(|| "background".into());
            Error::Caglioti { x: fault.x, phase }
        }
        _ => Error::Domain(format!("non-positive width (first grid point x = {})", fault.x)),
    }
}

/// Evaluates the forward model of any family on `xs`.
pub fn forward<S: Real>(spec: &ModelSpec<S>, theta: &[S], xs: &[S]) -> Result<Vec<S>> {
    spec.check_theta(theta)?;
    Evaluator::new(spec, xs).evaluate(theta).map_err(|f| fault_error(spec, theta, f))
}

fn expect_family(ok: bool, want: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config("family", format!("expected a {want} model")))
    }
}

pub fn gaussian_mixture_forward<S: Real>(spec: &ModelSpec<S>, theta: &[S], xs: &[S]) -> Result<Vec<S>> {
    expect_family(matches!(spec.family, ModelFamily::GaussianMixture { .. }), "Gaussian-mixture")?;
    forward(spec, theta, xs)
}

pub fn xrd_forward<S: Real>(spec: &ModelSpec<S>, theta: &[S], xs: &[S]) -> Result<Vec<S>> {
    expect_family(matches!(spec.family, ModelFamily::XrdPseudoVoigt { .. }), "XRD pseudo-Voigt")?;
    forward(spec, theta, xs)
}

pub fn xps_forward<S: Real>(spec: &ModelSpec<S>, theta: &[S], xs: &[S]) -> Result<Vec<S>> {
    expect_family(matches!(spec.family, ModelFamily::XpsShirley { .. }), "XPS Shirley")?;
    forward(spec, theta, xs)
}

/// Peak-only part of an XPS model (no Shirley background).
pub fn xps_peak_sum<S: Real>(spec: &ModelSpec<S>, theta: &[S], xs: &[S]) -> Result<Vec<S>> {
    let ModelFamily::XpsShirley { peaks } = spec.family else {
        return Err(Error::config("family", "expected an XPS Shirley model"));
    };
    spec.check_theta(theta)?;
    let mut out = vec![S::zero(); xs.len()];
    for k in 0..peaks {
        let p = &theta[4 * k..4 * k + 4];
        for (o, &x) in out.iter_mut().zip(xs) {
            *o = *o + p[0] * xps_peak(x, p[1], p[2], p[3]);
        }
    }
    Ok(out)
}
