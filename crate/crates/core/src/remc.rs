//! Replica-exchange Monte Carlo on a fixed inverse-temperature ladder.
//!
//! Replicas run component-wise Metropolis sweeps at their temperature and
//! periodically exchange states with a neighbour. The evidence comes from
//! bridge ratios between adjacent temperatures:
//! `log Z = Σ_ℓ log ⟨exp(-(β_{ℓ+1} − β_ℓ)·N·E)⟩_{β_ℓ}`.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{cw_mh_sweep, StepState};
use crate::model::ModelSpec;
use crate::parallel::{pool, resolve_workers};
use crate::real::Real;
use crate::report::{RunReport, SamplerKind};
use crate::rng::{Purpose, RngStream};
use crate::spectrum::Spectrum;
use crate::target::{SpectralTarget, Target};

pub const DEFAULT_BETA_MIN: f64 = 1e-5;
pub const DEFAULT_BURN_IN: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct RemcConfig {
    /// Number of positive inverse temperatures `L`; the ladder also holds β = 0.
    pub temperatures: usize,
    /// Total sweeps per replica, burn-in included.
    pub sweeps: usize,
    /// Fraction of `sweeps` discarded as burn-in (step sizes adapt there).
    pub burn_in: f64,
    pub beta_min: f64,
    /// Sweeps between exchange attempts.
    pub swap_period: usize,
    pub seed: u64,
    pub workers: usize,
    /// Explicit ladder replacing the geometric one.
    pub ladder: Option<Vec<f64>>,
}

impl RemcConfig {
    pub fn new(temperatures: usize, sweeps: usize, seed: u64) -> Self {
        Self {
            temperatures,
            sweeps,
            burn_in: DEFAULT_BURN_IN,
            beta_min: DEFAULT_BETA_MIN,
            swap_period: 1,
            seed,
            workers: 1,
            ladder: None,
        }
    }

    pub fn burn_in_sweeps(&self) -> usize {
        (self.sweeps as f64 * self.burn_in).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.temperatures == 0 && self.ladder.is_none() {
            return Err(Error::config("remc.L", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.burn_in) {
            return Err(Error::config("remc.burn_in", "must lie in [0, 1)"));
        }
        if self.sweeps <= self.burn_in_sweeps() {
            return Err(Error::config("remc.sweeps", "no sweeps left after burn-in"));
        }
        if !(self.beta_min > 0.0 && self.beta_min <= 1.0) {
            return Err(Error::config("remc.beta_min", "must lie in (0, 1]"));
        }
        if self.swap_period == 0 {
            return Err(Error::config("remc.swap_period", "must be at least 1"));
        }
        if let Some(l) = &self.ladder {
            let ok = l.len() >= 2
                && l[0] == 0.0
                && *l.last().unwrap() == 1.0
                && l.windows(2).all(|w| w[1] > w[0]);
            if !ok {
                return Err(Error::config("remc.ladder", "must increase strictly from 0 to 1"));
            }
        }
        Ok(())
    }

    pub fn ladder<S: Real>(&self) -> Vec<S> {
        match &self.ladder {
            Some(l) => l.iter().map(|&b| S::lit(b)).collect(),
            None => geometric_ladder(self.temperatures, S::lit(self.beta_min)),
        }
    }
}

/// `[0, β_min, …, 1]` with `levels` geometrically spaced positive values.
pub fn geometric_ladder<S: Real>(levels: usize, beta_min: S) -> Vec<S> {
    let mut out = vec![S::zero()];
    if levels == 1 {
        out.push(S::one());
        return out;
    }
    let ratio = (-beta_min.ln()) / S::from_usize(levels - 1).unwrap();
    for k in 0..levels - 1 {
        out.push((beta_min.ln() + ratio * S::from_usize(k).unwrap()).exp());
    }
    out.push(S::one());
    out
}

/// Streaming `log((1/n) Σ exp(x_i))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogMeanExp<S> {
    max: S,
    sum: S,
    count: u64,
}

impl<S: Real> Default for LogMeanExp<S> {
    fn default() -> Self {
        Self { max: S::neg_infinity(), sum: S::zero(), count: 0 }
    }
}

impl<S: Real> LogMeanExp<S> {
    pub fn push(&mut self, x: S) {
        self.count += 1;
        if x.is_nan() {
            self.max = S::nan();
            return;
        }
        if x == S::neg_infinity() {
            return;
        }
        if x > self.max {
            self.sum = self.sum * (self.max - x).exp() + S::one();
            self.max = x;
        } else {
            self.sum = self.sum + (x - self.max).exp();
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// `None` before the first value.
    pub fn value(&self) -> Option<S> {
        if self.count == 0 {
            return None;
        }
        if self.max.is_nan() {
            return Some(S::nan());
        }
        if self.max == S::neg_infinity() {
            return Some(S::neg_infinity());
        }
        Some(self.max + self.sum.ln() - S::from_u64(self.count).unwrap().ln())
    }
}

/// `F = -Σ_ℓ log ⟨exp(-Δβ_ℓ·N·E)⟩` from per-pair accumulators.
pub fn free_energy_remc<S: Real>(accumulators: &[LogMeanExp<S>]) -> Result<S> {
    let mut total = S::zero();
    for (pair, acc) in accumulators.iter().enumerate() {
        total = total + acc.value().ok_or(Error::EmptyAccumulator { pair })?;
    }
    Ok(-total)
}

/// `log` of the exchange acceptance for replicas at `β_lo < β_hi` holding
/// energies `e_lo`, `e_hi`: `(β_hi − β_lo)·N·(e_hi − e_lo)`.
pub fn swap_log_alpha<S: Real>(beta_lo: S, beta_hi: S, n_points: usize, e_lo: S, e_hi: S) -> S {
    let n = S::from_usize(n_points).unwrap();
    (beta_hi - beta_lo) * n * (e_hi - e_lo)
}

/// A replica's state. Step sizes and the random stream stay with the
/// temperature slot; `theta`, `energy` and `scratch` move on an exchange.
pub struct Replica<S, C> {
    pub theta: Vec<S>,
    pub energy: S,
    pub scratch: C,
}

struct Slot<S> {
    steps: StepState<S>,
    rng: RngStream,
}

/// Attempts exchanges between pairs `(ℓ, ℓ+1)` with `ℓ ≡ parity (mod 2)`.
/// One uniform is drawn per pair. Returns the accepted flags by pair index.
pub fn swap_step<S: Real, C, R: Rng + ?Sized>(
    ladder: &[S],
    replicas: &mut [Replica<S, C>],
    n_points: usize,
    parity: usize,
    rng: &mut R,
) -> Vec<Option<bool>> {
    let mut out = vec![None; ladder.len() - 1];
    let mut l = parity;
    while l + 1 < ladder.len() {
        let log_u = S::open01(rng).ln();
        let log_alpha = swap_log_alpha(ladder[l], ladder[l + 1], n_points, replicas[l].energy, replicas[l + 1].energy);
        let accept = log_u < log_alpha;
        if accept {
            replicas.swap(l, l + 1);
        }
        out[l] = Some(accept);
        l += 2;
    }
    out
}

#[derive(Debug, Clone)]
pub struct RemcOutcome<S> {
    pub free_energy: S,
    pub non_finite: bool,
    pub ladder: Vec<S>,
    pub log_ratios: Vec<S>,
    pub swap_rates: Vec<f64>,
    /// Post-burn-in acceptance rate per temperature and component.
    pub acceptance: Vec<Vec<S>>,
    /// States of the β = 1 replica after each post-burn-in sweep.
    pub posterior: Vec<Vec<S>>,
    pub sweeps: usize,
    pub wall_time_s: f64,
}

pub fn remc_run<S: Real, T: Target<S>>(target: &T, cfg: &RemcConfig) -> Result<RemcOutcome<S>> {
    cfg.validate()?;
    let start = Instant::now();
    let ladder: Vec<S> = cfg.ladder();
    let m = ladder.len();
    let n_points = target.n_points();
    let burn = cfg.burn_in_sweeps();

    let mut slots: Vec<Slot<S>> = (0..m)
        .map(|k| Slot {
            steps: StepState::from_priors(target.priors()),
            rng: RngStream::new(cfg.seed, Purpose::Replica, 0, k as u64),
        })
        .collect();
    let mut replicas: Vec<Replica<S, T::Scratch>> = slots
        .iter_mut()
        .map(|slot| {
            let theta: Vec<S> = target.priors().iter().map(|p| p.sample(&mut slot.rng)).collect();
            let mut scratch = target.new_scratch();
            let energy = target.load(&theta, &mut scratch);
            Replica { theta, energy, scratch }
        })
        .collect();
    let mut swap_rng = RngStream::new(cfg.seed, Purpose::Swap, 0, 0);
    let mut accumulators = vec![LogMeanExp::default(); m - 1];
    let mut swap_accepts = vec![0u64; m - 1];
    let mut swap_attempts = vec![0u64; m - 1];
    let mut posterior = Vec::with_capacity(cfg.sweeps - burn);
    let mut swap_events = 0usize;

    let workers = pool(cfg.workers);
    for sweep in 0..cfg.sweeps {
        if sweep == burn {
            for slot in &mut slots {
                slot.steps.reset_counts();
            }
        }
        let adapt = (sweep < burn).then_some(sweep as u64 + 1);
        workers.install(|| {
            replicas.par_iter_mut().zip(slots.par_iter_mut()).zip(ladder.par_iter()).for_each(|((rep, slot), &beta)| {
                cw_mh_sweep(target, &mut rep.theta, &mut rep.energy, &mut rep.scratch, beta, &mut slot.steps, adapt, &mut slot.rng);
            });
        });
        if (sweep + 1) % cfg.swap_period == 0 {
            let flags = swap_step(&ladder, &mut replicas, n_points, swap_events % 2, &mut swap_rng);
            swap_events += 1;
            for (l, f) in flags.iter().enumerate() {
                if let Some(acc) = f {
                    swap_attempts[l] += 1;
                    swap_accepts[l] += *acc as u64;
                }
            }
        }
        if sweep >= burn {
            let n = S::from_usize(n_points).unwrap();
            for l in 0..m - 1 {
                let e = replicas[l].energy;
                let x = if e == S::infinity() { S::neg_infinity() } else { -(ladder[l + 1] - ladder[l]) * n * e };
                accumulators[l].push(x);
            }
            posterior.push(replicas[m - 1].theta.clone());
        }
    }

    let log_ratios: Vec<S> = accumulators.iter().map(|a| a.value().unwrap()).collect();
    let f = free_energy_remc(&accumulators)?;
    let non_finite = !f.is_finite();
    Ok(RemcOutcome {
        free_energy: if non_finite { S::nan() } else { f },
        non_finite,
        ladder,
        log_ratios,
        swap_rates: swap_accepts
            .iter()
            .zip(&swap_attempts)
            .map(|(&a, &t)| if t == 0 { 0.0 } else { a as f64 / t as f64 })
            .collect(),
        acceptance: slots.iter().map(|s| s.steps.acceptance_rates()).collect(),
        posterior,
        sweeps: cfg.sweeps,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

impl<S: Real> RemcOutcome<S> {
    pub fn into_report(self, cfg: &RemcConfig, n_points: usize, names: Vec<String>) -> RunReport {
        let mut diagnostics = Vec::new();
        if self.non_finite {
            for (l, r) in self.log_ratios.iter().enumerate() {
                if !r.is_finite() {
                    diagnostics.push(format!("bridge ratio between temperatures {l} and {} is {r}", l + 1));
                }
            }
        }
        let m = self.ladder.len();
        RunReport {
            sampler: SamplerKind::Remc,
            free_energy: self.free_energy.f64(),
            non_finite: self.non_finite,
            diagnostics,
            seed: cfg.seed,
            workers: resolve_workers(cfg.workers),
            n_points,
            wall_time_s: self.wall_time_s,
            betas: self.ladder.iter().map(|b| b.f64()).collect(),
            level_ess: Vec::new(),
            level_log_mean_weight: self.log_ratios.iter().map(|r| r.f64()).collect(),
            level_sweeps: vec![self.sweeps as u64; m],
            level_ensemble_size: Vec::new(),
            swap_rates: self.swap_rates,
            acceptance: self.acceptance.iter().map(|a| a.iter().map(|v| v.f64()).collect()).collect(),
            parameter_names: names,
            posterior: self.posterior.iter().map(|t| t.iter().map(|v| v.f64()).collect()).collect(),
            config: String::new(),
        }
    }
}

/// Runs REMC on a spectral model and packages the result.
pub fn remc_fit<S: Real>(spec: &ModelSpec<S>, data: &Spectrum<S>, cfg: &RemcConfig) -> Result<RunReport> {
    let target = SpectralTarget::new(spec, data)?;
    let out = remc_run(&target, cfg)?;
    Ok(out.into_report(cfg, data.len(), spec.names().to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::Prior;
    use crate::target::FnTarget;

    #[test]
    fn ladder_shape() {
        let l: Vec<f64> = geometric_ladder(5, 1e-4);
        assert_eq!(l.len(), 6);
        assert_eq!(l[0], 0.0);
        assert!((l[1] - 1e-4).abs() < 1e-18);
        assert_eq!(l[5], 1.0);
        for w in l[1..].windows(2) {
            assert!((w[1] / w[0] - 10.0).abs() < 1e-9);
        }
        assert_eq!(geometric_ladder::<f64>(1, 1e-5), vec![0.0, 1.0]);
    }

    #[test]
    fn log_mean_exp_matches_direct() {
        let xs = [-3.0f64, 1.5, 0.2, -700.0, 2.0];
        let mut acc = LogMeanExp::default();
        for &x in &xs {
            acc.push(x);
        }
        let direct = (xs.iter().map(|x| x.exp()).sum::<f64>() / 5.0).ln();
        assert!((acc.value().unwrap() - direct).abs() < 1e-13);
        assert_eq!(LogMeanExp::<f64>::default().value(), None);
    }

    #[test]
    fn free_energy_sums_ratios() {
        let mut a = LogMeanExp::default();
        a.push(-1.0f64);
        let mut b = LogMeanExp::default();
        b.push(-2.5f64);
        assert_eq!(free_energy_remc(&[a, b]).unwrap(), 3.5);
        assert!(matches!(free_energy_remc(&[a, LogMeanExp::default()]), Err(Error::EmptyAccumulator { pair: 1 })));
    }

    #[test]
    fn swap_acceptance_formula() {
        // A colder replica that already holds the lower energy is unlikely to swap.
        assert!((swap_log_alpha(0.1f64, 0.5, 10, 2.0, 1.0) + 4.0).abs() < 1e-12);
        assert!(swap_log_alpha(0.1f64, 0.5, 10, 1.0, 2.0) > 0.0);
    }

    #[test]
    fn swap_step_moves_states_not_slots() {
        let ladder = [0.0f64, 0.5, 1.0];
        let mut reps: Vec<Replica<f64, ()>> = [1.0, 5.0, 0.0]
            .iter()
            .map(|&e| Replica { theta: vec![e], energy: e, scratch: () })
            .collect();
        let mut rng = RngStream::from_seed(0);
        // Pair (0,1) has log α = 0.5·(5 − 1) > 0; pair (1,2) is skipped at parity 0.
        let flags = swap_step(&ladder, &mut reps, 1, 0, &mut rng);
        assert_eq!(flags[0], Some(true));
        assert_eq!(flags[1], None);
        assert_eq!(reps[0].energy, 5.0);
        assert_eq!(reps[1].theta, vec![1.0]);
    }

    #[test]
    fn flat_likelihood_gives_zero_free_energy() {
        let target = FnTarget::new(vec![Prior::uniform(0.0, 1.0).unwrap()], 4, |_: &[f64]| 0.0);
        let out = remc_run(&target, &RemcConfig::new(4, 50, 1)).unwrap();
        assert_eq!(out.free_energy, 0.0);
        assert_eq!(out.posterior.len(), 25);
        assert!(out.swap_rates.iter().all(|&r| r == 1.0));
    }

    #[test]
    fn config_validation() {
        assert!(RemcConfig::new(8, 100, 0).validate().is_ok());
        assert!(RemcConfig::new(0, 100, 0).validate().is_err());
        let mut c = RemcConfig::new(8, 0, 0);
        assert!(c.validate().is_err());
        c.sweeps = 10;
        c.swap_period = 0;
        assert!(c.validate().is_err());
    }
}
