//! Waste-free sequential Monte Carlo over a tempered sequence
//! `p(D|θ)^β p(θ)`, `β: 0 → 1`.
//!
//! Each level reweights the ensemble by the likelihood increment, records the
//! mean weight (its log-sum is the log evidence), resamples `S = T/n`
//! ancestors and runs an `n`-sweep MCMC chain from each. All `S·n = T` visited
//! states form the next ensemble.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{cw_mh_sweep, predict_step_size, HistoryEntry, StepState};
use crate::model::ModelSpec;
use crate::parallel::{pool, resolve_workers};
use crate::real::{log_sum_exp, Real};
use crate::report::{RunReport, SamplerKind};
use crate::rng::{Purpose, RngStream};
use crate::spectrum::Spectrum;
use crate::target::{SpectralTarget, Target};

pub const DEFAULT_STEPS: usize = 10;
pub const DEFAULT_ESS_TARGET: f64 = 0.5;
pub const DEFAULT_MAX_LEVELS: usize = 1000;
/// Tolerance on `ESS/T` when solving for the next inverse temperature.
pub const ESS_TOLERANCE: f64 = 1e-6;
pub const MAX_BISECTIONS: usize = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct SmcConfig {
    /// Ensemble size `T`.
    pub particles: usize,
    /// MCMC sweeps per resampled ancestor, `n`.
    pub steps: usize,
    pub ess_target: f64,
    pub max_levels: usize,
    pub seed: u64,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    /// Fixed inverse-temperature ladder replacing the adaptive one. Must start
    /// at 0, end at 1 and increase strictly.
    pub schedule: Option<Vec<f64>>,
}

impl SmcConfig {
    pub fn new(particles: usize, steps: usize, seed: u64) -> Self {
        Self {
            particles,
            steps,
            ess_target: DEFAULT_ESS_TARGET,
            max_levels: DEFAULT_MAX_LEVELS,
            seed,
            workers: 1,
            schedule: None,
        }
    }

    /// Number of resampled ancestors `S = T/n`.
    pub fn chains(&self) -> usize {
        self.particles / self.steps.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::config("smc.n", "must be at least 1"));
        }
        if !self.particles.is_multiple_of(self.steps) {
            return Err(Error::config(
                "smc.T",
                format!("T = {} is not divisible by n = {}", self.particles, self.steps),
            ));
        }
        if self.chains() < 2 {
            return Err(Error::config("smc.T", "T/n must be at least 2"));
        }
        if !(self.ess_target > 0.0 && self.ess_target < 1.0) {
            return Err(Error::config("smc.ess_target", "must lie in (0, 1)"));
        }
        if self.max_levels == 0 {
            return Err(Error::config("smc.max_levels", "must be at least 1"));
        }
        if let Some(s) = &self.schedule {
            let ok = s.len() >= 2
                && s[0] == 0.0
                && *s.last().unwrap() == 1.0
                && s.windows(2).all(|w| w[1] > w[0]);
            if !ok {
                return Err(Error::config("smc.schedule", "must increase strictly from 0 to 1"));
            }
        }
        Ok(())
    }
}

/// `T` parameter vectors with cached energies and log weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble<S> {
    pub thetas: Vec<Vec<S>>,
    pub energies: Vec<S>,
    pub log_weights: Vec<S>,
}

impl<S: Real> ParticleEnsemble<S> {
    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    /// Draws `particles` vectors from the prior, slot `i` using its own stream.
    pub fn from_prior<T: Target<S>>(target: &T, particles: usize, seed: u64) -> Self {
        let draws: Vec<(Vec<S>, S)> = (0..particles)
            .into_par_iter()
            .map(|i| {
                let mut rng = RngStream::new(seed, Purpose::PriorInit, 0, i as u64);
                let theta: Vec<S> = target.priors().iter().map(|p| p.sample(&mut rng)).collect();
                let e = target.energy(&theta);
                (theta, e)
            })
            .collect();
        let (thetas, energies) = draws.into_iter().unzip();
        Self { thetas, energies, log_weights: vec![S::zero(); particles] }
    }
}

/// Log incremental weights `-Δβ·N·E_i`; infinite energies give `-inf`.
pub fn incremental_log_weights<S: Real>(energies: &[S], n_points: usize, delta_beta: S) -> Vec<S> {
    let scale = delta_beta * S::from_usize(n_points).unwrap();
    energies
        .iter()
        .map(|&e| {
            if e == S::infinity() {
                if delta_beta > S::zero() {
                    S::neg_infinity()
                } else {
                    S::zero()
                }
            } else {
                -scale * e
            }
        })
        .collect()
}

/// Effective sample size `(Σw)²/Σw²` of log weights.
pub fn ess<S: Real>(log_weights: &[S]) -> Result<S> {
    let max = log_weights.iter().copied().fold(S::neg_infinity(), S::max);
    if !max.is_finite() {
        return Err(Error::ZeroWeight);
    }
    let (mut s1, mut s2) = (S::zero(), S::zero());
    for &lw in log_weights {
        let w = (lw - max).exp();
        s1 = s1 + w;
        s2 = s2 + w * w;
    }
    Ok(s1 * s1 / s2)
}

/// Next inverse temperature: the largest step whose incremental weights keep
/// `ESS/T` at `ess_target` (solved by bisection), or 1 if the full step
/// already does.
pub fn next_beta<S: Real>(energies: &[S], n_points: usize, beta_prev: S, ess_target: S) -> Result<S> {
    let t = S::from_usize(energies.len()).unwrap();
    let ratio = |delta: S| -> Result<S> { Ok(ess(&incremental_log_weights(energies, n_points, delta))? / t) };
    let full = S::one() - beta_prev;
    if ratio(full)? >= ess_target {
        return Ok(S::one());
    }
    let (mut lo, mut hi) = (S::zero(), full);
    for _ in 0..MAX_BISECTIONS {
        let mid = S::lit(0.5) * (lo + hi);
        let r = ratio(mid)?;
        if (r - ess_target).abs() < S::lit(ESS_TOLERANCE) {
            return Ok((beta_prev + mid).min(S::one()));
        }
        if r > ess_target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((beta_prev + hi).min(S::one()))
}

/// Systematic resampling: one uniform offset, `count` evenly spaced positions
/// over the normalised-weight CDF. Returned indices are sorted.
pub fn systematic_resample<S: Real, R: Rng + ?Sized>(log_weights: &[S], count: usize, rng: &mut R) -> Result<Vec<usize>> {
    let max = log_weights.iter().copied().fold(S::neg_infinity(), S::max);
    if !max.is_finite() {
        return Err(Error::ZeroWeight);
    }
    let w: Vec<f64> = log_weights.iter().map(|&lw| (lw - max).exp().f64()).collect();
    let total: f64 = w.iter().sum();
    let last_positive = w.iter().rposition(|&x| x > 0.0).unwrap();
    let offset: f64 = rng.random::<f64>();
    let mut out = Vec::with_capacity(count);
    let mut i = 0;
    let mut cum = w[0] / total;
    for j in 0..count {
        let pos = (offset + j as f64) / count as f64;
        while pos >= cum && i < last_positive {
            i += 1;
            cum += w[i] / total;
        }
        out.push(i);
    }
    Ok(out)
}

/// Diagnostics of one tempering level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelDiag<S> {
    pub beta: S,
    /// ESS of the incremental weights before resampling.
    pub ess: S,
    /// `log((1/T) Σ w_i)`, this level's contribution to `log Z`.
    pub log_mean_weight: S,
    pub acceptance: Vec<S>,
    pub sweeps: u64,
    pub ensemble_size: usize,
}

struct ChainOutput<S> {
    thetas: Vec<Vec<S>>,
    energies: Vec<S>,
    accepts: Vec<u64>,
    proposals: Vec<u64>,
    final_steps: Vec<S>,
}

/// Moves the ensemble from `beta_prev` to `beta_next`.
///
/// `history` supplies step-size predictions and receives this level's entry.
/// Chain `j` uses the `(Move, level, j)` stream; resampling uses
/// `(Resample, level, 0)`.
pub fn wastefree_level<S: Real, T: Target<S>>(
    target: &T,
    ensemble: &ParticleEnsemble<S>,
    beta_prev: S,
    beta_next: S,
    cfg: &SmcConfig,
    level: u64,
    history: &mut Vec<HistoryEntry<S>>,
) -> Result<(ParticleEnsemble<S>, LevelDiag<S>)> {
    let t = ensemble.len();
    let n = cfg.steps;
    let chains = t / n;
    let log_weights = incremental_log_weights(&ensemble.energies, target.n_points(), beta_next - beta_prev);
    let log_mean_weight = log_sum_exp(&log_weights) - S::from_usize(t).unwrap().ln();
    if log_mean_weight == S::neg_infinity() {
        return Err(Error::ZeroWeight);
    }
    let level_ess = ess(&log_weights)?;
    let mut rs_rng = RngStream::new(cfg.seed, Purpose::Resample, level, 0);
    let ancestors = systematic_resample(&log_weights, chains, &mut rs_rng)?;
    let predicted = predict_step_size(history, beta_next, target.priors());
    let adapt_sweeps = n.div_ceil(2);

    let outputs: Vec<ChainOutput<S>> = ancestors
        .par_iter()
        .enumerate()
        .map(|(j, &a)| {
            let mut rng = RngStream::new(cfg.seed, Purpose::Move, level, j as u64);
            let mut theta = ensemble.thetas[a].clone();
            let mut scratch = target.new_scratch();
            let mut energy = target.load(&theta, &mut scratch);
            let mut steps = StepState::new(predicted.clone());
            let mut out = ChainOutput {
                thetas: Vec::with_capacity(n),
                energies: Vec::with_capacity(n),
                accepts: Vec::new(),
                proposals: Vec::new(),
                final_steps: Vec::new(),
            };
            for s in 0..n {
                let adapt = (s < adapt_sweeps).then_some(s as u64 + 1);
                cw_mh_sweep(target, &mut theta, &mut energy, &mut scratch, beta_next, &mut steps, adapt, &mut rng);
                out.thetas.push(theta.clone());
                out.energies.push(energy);
            }
            out.accepts = steps.accept_counts;
            out.proposals = steps.propose_counts;
            out.final_steps = steps.step_sizes;
            out
        })
        .collect();

    let d = target.dim();
    let mut accepts = vec![0u64; d];
    let mut proposals = vec![0u64; d];
    let mut log_step_sum = vec![0.0f64; d];
    let mut thetas = Vec::with_capacity(t);
    let mut energies = Vec::with_capacity(t);
    for out in outputs {
        for i in 0..d {
            accepts[i] += out.accepts[i];
            proposals[i] += out.proposals[i];
            log_step_sum[i] += out.final_steps[i].f64().ln();
        }
        thetas.extend(out.thetas);
        energies.extend(out.energies);
    }
    let acceptance: Vec<S> = accepts
        .iter()
        .zip(&proposals)
        .map(|(&a, &p)| S::from_u64(a).unwrap() / S::from_u64(p.max(1)).unwrap())
        .collect();
    history.push(HistoryEntry {
        beta: beta_next,
        acceptance: acceptance.clone(),
        step_sizes: log_step_sum.iter().map(|&l| S::lit((l / chains as f64).exp())).collect(),
    });
    let size = thetas.len();
    let next = ParticleEnsemble { thetas, energies, log_weights: vec![S::zero(); size] };
    let diag = LevelDiag {
        beta: beta_next,
        ess: level_ess,
        log_mean_weight,
        acceptance,
        sweeps: (chains * n) as u64,
        ensemble_size: size,
    };
    Ok((next, diag))
}

/// Result of an SMC run before conversion to a [`RunReport`].
#[derive(Debug, Clone)]
pub struct SmcOutcome<S> {
    pub free_energy: S,
    pub betas: Vec<S>,
    pub levels: Vec<LevelDiag<S>>,
    pub ensemble: ParticleEnsemble<S>,
    pub wall_time_s: f64,
}

/// Runs the sampler from the prior to the posterior.
pub fn smc_run<S: Real, T: Target<S>>(target: &T, cfg: &SmcConfig) -> Result<SmcOutcome<S>> {
    cfg.validate()?;
    let start = Instant::now();
    let workers = pool(cfg.workers);
    workers.install(|| {
        let mut ensemble = ParticleEnsemble::from_prior(target, cfg.particles, cfg.seed);
        let mut beta = S::zero();
        let mut betas = vec![beta];
        let mut levels = Vec::new();
        let mut history = Vec::new();
        let ess_target = S::lit(cfg.ess_target);
        while beta < S::one() {
            let level = levels.len();
            if level >= cfg.max_levels {
                return Err(Error::MaxLevels(cfg.max_levels));
            }
            let next = match &cfg.schedule {
                Some(s) => S::lit(s[level + 1]),
                None => next_beta(&ensemble.energies, target.n_points(), beta, ess_target)?,
            };
            let (moved, diag) =
                wastefree_level(target, &ensemble, beta, next, cfg, level as u64 + 1, &mut history)?;
            ensemble = moved;
            beta = next;
            betas.push(beta);
            levels.push(diag);
        }
        let log_z = levels.iter().fold(S::zero(), |acc, l| acc + l.log_mean_weight);
        Ok(SmcOutcome { free_energy: -log_z, betas, levels, ensemble, wall_time_s: 0.0 })
    })
    .map(|mut out| {
        out.wall_time_s = start.elapsed().as_secs_f64();
        out
    })
}

impl<S: Real> SmcOutcome<S> {
    pub fn into_report(self, cfg: &SmcConfig, n_points: usize, names: Vec<String>) -> RunReport {
        let f = self.free_energy.f64();
        let non_finite = !f.is_finite();
        RunReport {
            sampler: SamplerKind::Smc,
            free_energy: if non_finite { f64::NAN } else { f },
            non_finite,
            diagnostics: if non_finite { vec![format!("free energy estimate is {f}")] } else { vec![] },
            seed: cfg.seed,
            workers: resolve_workers(cfg.workers),
            n_points,
            wall_time_s: self.wall_time_s,
            betas: self.betas.iter().map(|b| b.f64()).collect(),
            level_ess: self.levels.iter().map(|l| l.ess.f64()).collect(),
            level_log_mean_weight: self.levels.iter().map(|l| l.log_mean_weight.f64()).collect(),
            level_sweeps: self.levels.iter().map(|l| l.sweeps).collect(),
            level_ensemble_size: self.levels.iter().map(|l| l.ensemble_size).collect(),
            swap_rates: Vec::new(),
            acceptance: self.levels.iter().map(|l| l.acceptance.iter().map(|a| a.f64()).collect()).collect(),
            parameter_names: names,
            posterior: self.ensemble.thetas.iter().map(|t| t.iter().map(|v| v.f64()).collect()).collect(),
            config: String::new(),
        }
    }
}

/// Runs SMC on a spectral model and packages the result.
pub fn smc_fit<S: Real>(spec: &ModelSpec<S>, data: &Spectrum<S>, cfg: &SmcConfig) -> Result<RunReport> {
    let target = SpectralTarget::new(spec, data)?;
    let out = smc_run(&target, cfg)?;
    Ok(out.into_report(cfg, data.len(), spec.names().to_vec()))
}
