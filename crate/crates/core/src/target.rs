//! Energies, tempered targets and the interface the samplers run against.
//!
//! Energies are per-point means `E = -(1/N) log p(D|θ)`; the tempered log
//! target is `-β·N·E(θ) + log p(θ)`. An energy of `+inf` marks a parameter
//! vector the forward model cannot evaluate, and such proposals are rejected.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Evaluator, ModelSpec, NoiseSpec, Role};
use crate::prior::{prior_logpdf, Prior};
use crate::real::Real;
use crate::spectrum::Spectrum;

/// A posterior the samplers can explore with component-wise updates.
///
/// `Scratch` caches whatever makes a single-component change cheap. The
/// protocol per chain is: [`load`](Target::load) once, then any number of
/// [`trial`](Target::trial) calls, each optionally followed by
/// [`commit`](Target::commit) for the same component before the next trial.
pub trait Target<S: Real>: Sync {
    type Scratch: Send;

    fn priors(&self) -> &[Prior<S>];

    /// Number of data points `N`.
    fn n_points(&self) -> usize;

    fn new_scratch(&self) -> Self::Scratch;

    /// Caches `theta` in `scratch` and returns its energy.
    fn load(&self, theta: &[S], scratch: &mut Self::Scratch) -> S;

    /// Energy of `theta` with `theta[component]` replaced by `value`.
    fn trial(&self, theta: &[S], component: usize, value: S, scratch: &mut Self::Scratch) -> S;

    /// Makes the last trial the cached state.
    fn commit(&self, component: usize, scratch: &mut Self::Scratch);

    fn dim(&self) -> usize {
        self.priors().len()
    }

    fn energy(&self, theta: &[S]) -> S {
        let mut scratch = self.new_scratch();
        self.load(theta, &mut scratch)
    }

    /// Energies of many parameter vectors, evaluated in parallel on the
    /// current rayon pool. Each value is computed independently, so the result
    /// does not depend on the number of workers.
    fn energy_batch(&self, thetas: &[Vec<S>]) -> Vec<S> {
        thetas.par_iter().map(|t| self.energy(t)).collect()
    }

    fn log_prior(&self, theta: &[S]) -> S {
        prior_logpdf(self.priors(), theta)
    }
}

/// `β·log p(D|θ)` with the convention `p^0 = 1` even where `p = 0`.
#[inline]
pub fn tempered_loglik<S: Real>(beta: S, n_points: usize, energy: S) -> S {
    if beta == S::zero() {
        S::zero()
    } else {
        -beta * S::from_usize(n_points).unwrap() * energy
    }
}

/// Tempered log target `-β·N·E(θ) + log p(θ)`.
pub fn log_target<S: Real, T: Target<S>>(target: &T, theta: &[S], beta: S) -> S {
    let lp = target.log_prior(theta);
    if lp == S::neg_infinity() {
        return lp;
    }
    lp + tempered_loglik(beta, target.n_points(), target.energy(theta))
}

/// Per-point energy together with the number of points it averages over.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyValue<S> {
    pub e: S,
    pub n: usize,
}

impl<S: Real> EnergyValue<S> {
    /// `-log p(D|θ) = N·E`.
    pub fn total(&self) -> S {
        self.e * S::from_usize(self.n).unwrap()
    }
}

/// Per-point energy of a model prediction `f` under `noise`.
pub fn noise_energy<S: Real>(noise: &NoiseSpec<S>, ys: &[S], f: &[S], unhalved_quadratic: bool) -> S {
    let n = S::from_usize(ys.len()).unwrap();
    let half = S::lit(0.5);
    let quad = if unhalved_quadratic { S::one() } else { half };
    let log_2pi = S::TAU().ln();
    match *noise {
        NoiseSpec::GaussianFixed { sigma } => {
            let mut ss = S::zero();
            for (&y, &fi) in ys.iter().zip(f) {
                let r = y - fi;
                ss = ss + r * r;
            }
            let var = sigma * sigma;
            half * (log_2pi + var.ln()) + ss / (S::lit(2.0) * n * var)
        }
        NoiseSpec::Poisson => {
            let mut acc = S::zero();
            for (&y, &fi) in ys.iter().zip(f) {
                if !(fi > S::zero()) {
                    return S::infinity();
                }
                acc = acc + (fi - y * fi.ln());
            }
            acc / n
        }
        NoiseSpec::GaussianApproxPoisson => {
            let mut acc = S::zero();
            for (&y, &fi) in ys.iter().zip(f) {
                if !(fi > S::zero()) {
                    return S::infinity();
                }
                let r = y - fi;
                acc = acc + half * (log_2pi + fi.ln()) + quad * r * r / fi;
            }
            acc / n
        }
        NoiseSpec::XpsHetero { sigma0, sigma1, sigma2 } => {
            let (s0, s1, s2) = (sigma0 * sigma0, sigma1 * sigma1, sigma2 * sigma2);
            let mut acc = S::zero();
            for (&y, &fi) in ys.iter().zip(f) {
                let var = s0 * fi + s1 * fi * fi + s2;
                if !(var > S::zero()) {
                    return S::infinity();
                }
                let r = y - fi;
                acc = acc + half * (log_2pi + var.ln()) + quad * r * r / var;
            }
            acc / n
        }
    }
}

/// Posterior of a [`ModelSpec`] given a [`Spectrum`].
#[derive(Debug, Clone)]
pub struct SpectralTarget<'a, S> {
    eval: Evaluator<'a, S>,
    ys: &'a [S],
}

impl<'a, S: Real> SpectralTarget<'a, S> {
    pub fn new(spec: &'a ModelSpec<S>, data: &'a Spectrum<S>) -> Result<Self> {
        if let NoiseSpec::Poisson = spec.noise {
            data.check_counts()?;
        }
        Ok(Self { eval: Evaluator::new(spec, data.xs()), ys: data.ys() })
    }

    pub fn spec(&self) -> &'a ModelSpec<S> {
        self.eval.spec
    }

    fn energy_of(&self, f: &[S]) -> S {
        let spec = self.eval.spec;
        let e = noise_energy(&spec.noise, self.ys, f, spec.unhalved_quadratic);
        if e.is_nan() {
            S::infinity()
        } else {
            e
        }
    }
}

/// Cached block profiles for one chain.
#[derive(Debug, Clone)]
pub struct SpectralScratch<S> {
    units: Vec<Vec<S>>,
    faults: Vec<bool>,
    trial_unit: Vec<S>,
    trial_fault: bool,
    trial_block: Option<usize>,
    theta_buf: Vec<S>,
    f: Vec<S>,
    tmp: Vec<S>,
}

impl<'a, S: Real> Target<S> for SpectralTarget<'a, S> {
    type Scratch = SpectralScratch<S>;

    fn priors(&self) -> &[Prior<S>] {
        &self.eval.spec.priors
    }

    fn n_points(&self) -> usize {
        self.ys.len()
    }

    fn new_scratch(&self) -> SpectralScratch<S> {
        let n = self.ys.len();
        let blocks = self.eval.n_blocks();
        SpectralScratch {
            units: vec![vec![S::zero(); n]; blocks],
            faults: vec![false; blocks],
            trial_unit: vec![S::zero(); n],
            trial_fault: false,
            trial_block: None,
            theta_buf: Vec::with_capacity(self.dim()),
            f: vec![S::zero(); n],
            tmp: vec![S::zero(); n],
        }
    }

    fn load(&self, theta: &[S], sc: &mut SpectralScratch<S>) -> S {
        for b in 0..sc.units.len() {
            sc.faults[b] = self.eval.unit(b, theta, &mut sc.units[b]).is_err();
        }
        sc.trial_block = None;
        if sc.faults.iter().any(|&f| f) {
            return S::infinity();
        }
        self.eval.assemble(theta, &sc.units, None, &mut sc.f, &mut sc.tmp);
        self.energy_of(&sc.f)
    }

    fn trial(&self, theta: &[S], component: usize, value: S, sc: &mut SpectralScratch<S>) -> S {
        sc.theta_buf.clear();
        sc.theta_buf.extend_from_slice(theta);
        sc.theta_buf[component] = value;
        let replace = match self.eval.role(component) {
            Role::Shape(b) => {
                sc.trial_fault = self.eval.unit(b, &sc.theta_buf, &mut sc.trial_unit).is_err();
                sc.trial_block = Some(b);
                if sc.trial_fault {
                    return S::infinity();
                }
                Some(b)
            }
            Role::Amplitude | Role::Assembly => {
                sc.trial_block = None;
                None
            }
        };
        let other_fault = sc.faults.iter().enumerate().any(|(b, &f)| f && Some(b) != replace);
        if other_fault {
            return S::infinity();
        }
        let rep = replace.map(|b| (b, sc.trial_unit.as_slice()));
        self.eval.assemble(&sc.theta_buf, &sc.units, rep, &mut sc.f, &mut sc.tmp);
        self.energy_of(&sc.f)
    }

    fn commit(&self, _component: usize, sc: &mut SpectralScratch<S>) {
        if let Some(b) = sc.trial_block.take() {
            std::mem::swap(&mut sc.units[b], &mut sc.trial_unit);
            sc.faults[b] = sc.trial_fault;
        }
    }
}

/// Energy of `theta` for `spec` on `data`. Model faults give `e = +inf`.
pub fn energy<S: Real>(spec: &ModelSpec<S>, theta: &[S], data: &Spectrum<S>) -> Result<EnergyValue<S>> {
    spec.check_theta(theta)?;
    let target = SpectralTarget::new(spec, data)?;
    Ok(EnergyValue { e: target.energy(theta), n: data.len() })
}

/// Energies of several parameter vectors on the current rayon pool.
pub fn energy_batch<S: Real>(spec: &ModelSpec<S>, thetas: &[Vec<S>], data: &Spectrum<S>) -> Result<Vec<S>> {
    for t in thetas {
        spec.check_theta(t)?;
    }
    Ok(SpectralTarget::new(spec, data)?.energy_batch(thetas))
}

/// `-β·N·E(θ) + log p(θ)` for a spectral model.
pub fn spectral_log_target<S: Real>(spec: &ModelSpec<S>, theta: &[S], data: &Spectrum<S>, beta: S) -> Result<S> {
    if !(beta >= S::zero() && beta <= S::one()) {
        return Err(Error::Domain(format!("inverse temperature {beta} outside [0, 1]")));
    }
    spec.check_theta(theta)?;
    Ok(log_target(&SpectralTarget::new(spec, data)?, theta, beta))
}

/// A target defined by a plain energy function, without incremental caching.
pub struct FnTarget<S, F> {
    priors: Vec<Prior<S>>,
    n_points: usize,
    energy: F,
}

impl<S: Real, F: Fn(&[S]) -> S + Sync> FnTarget<S, F> {
    pub fn new(priors: Vec<Prior<S>>, n_points: usize, energy: F) -> Self {
        Self { priors, n_points, energy }
    }
}

impl<S: Real, F: Fn(&[S]) -> S + Sync> Target<S> for FnTarget<S, F> {
    type Scratch = Vec<S>;

    fn priors(&self) -> &[Prior<S>] {
        &self.priors
    }

    fn n_points(&self) -> usize {
        self.n_points
    }

    fn new_scratch(&self) -> Vec<S> {
        Vec::with_capacity(self.priors.len())
    }

    fn load(&self, theta: &[S], _scratch: &mut Vec<S>) -> S {
        (self.energy)(theta)
    }

    fn trial(&self, theta: &[S], component: usize, value: S, scratch: &mut Vec<S>) -> S {
        scratch.clear();
        scratch.extend_from_slice(theta);
        scratch[component] = value;
        (self.energy)(scratch)
    }

    fn commit(&self, _component: usize, _scratch: &mut Vec<S>) {}
}
