//! Component-wise random-walk Metropolis–Hastings with per-component step sizes.

use rand::Rng;

use crate::prior::Prior;
use crate::real::Real;
use crate::target::{tempered_loglik, Target};

/// Acceptance rate the step-size adaptation aims for.
pub const TARGET_ACCEPTANCE: f64 = 0.5;
/// Robbins–Monro gain `c0 / t^RM_EXPONENT`.
pub const RM_GAIN: f64 = 1.0;
pub const RM_EXPONENT: f64 = 0.6;
pub const STEP_MIN: f64 = 1e-12;
pub const STEP_MAX: f64 = 1e12;
/// Weight of the acceptance correction applied to historical step sizes.
pub const HISTORY_KAPPA: f64 = 2.0;
/// Number of most recent levels used by the step-size regression.
pub const HISTORY_WINDOW: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry<S> {
    pub beta: S,
    pub acceptance: Vec<S>,
    pub step_sizes: Vec<S>,
}

/// Per-component proposal scales and acceptance bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct StepState<S> {
    pub step_sizes: Vec<S>,
    pub accept_counts: Vec<u64>,
    pub propose_counts: Vec<u64>,
    pub history: Vec<HistoryEntry<S>>,
}

fn clamp_step<S: Real>(s: S) -> S {
    if s.is_nan() {
        return S::one();
    }
    s.max(S::lit(STEP_MIN)).min(S::lit(STEP_MAX))
}

impl<S: Real> StepState<S> {
    pub fn new(step_sizes: Vec<S>) -> Self {
        let d = step_sizes.len();
        Self {
            step_sizes: step_sizes.into_iter().map(clamp_step).collect(),
            accept_counts: vec![0; d],
            propose_counts: vec![0; d],
            history: Vec::new(),
        }
    }

    /// Step sizes equal to the prior standard deviations.
    pub fn from_priors(priors: &[Prior<S>]) -> Self {
        Self::new(priors.iter().map(Prior::scale).collect())
    }

    pub fn reset_counts(&mut self) {
        self.accept_counts.fill(0);
        self.propose_counts.fill(0);
    }

    /// Per-component acceptance rates (0 where nothing was proposed).
    pub fn acceptance_rates(&self) -> Vec<S> {
        self.accept_counts
            .iter()
            .zip(&self.propose_counts)
            .map(|(&a, &p)| if p == 0 { S::zero() } else { S::from_u64(a).unwrap() / S::from_u64(p).unwrap() })
            .collect()
    }
}

/// One sweep: each component in layout order gets a Gaussian random-walk
/// proposal accepted with probability `min(1, exp(Δ log target))`.
///
/// `energy` must hold the energy of `theta` on entry (or `+inf`) and holds
/// that of the returned `theta` on exit. When `adapt_t` is `Some(t)` every
/// component's step size is updated by Robbins–Monro with index `t`.
#[allow(clippy::too_many_arguments)]
pub fn cw_mh_sweep<S: Real, T: Target<S>, R: Rng + ?Sized>(
    target: &T,
    theta: &mut [S],
    energy: &mut S,
    scratch: &mut T::Scratch,
    beta: S,
    steps: &mut StepState<S>,
    adapt_t: Option<u64>,
    rng: &mut R,
) -> Vec<bool> {
    let n = target.n_points();
    let priors = target.priors();
    let mut flags = vec![false; theta.len()];
    for i in 0..theta.len() {
        let current = theta[i];
        let proposal = current + steps.step_sizes[i] * S::standard_normal(rng);
        let log_u = S::open01(rng).ln();
        let prior_ratio = priors[i].log_ratio(proposal, current);
        let mut accepted = false;
        if prior_ratio > S::neg_infinity() {
            let e_new = target.trial(theta, i, proposal, scratch);
            let log_alpha =
                prior_ratio + tempered_loglik(beta, n, e_new) - tempered_loglik(beta, n, *energy);
            // NaN (both energies infinite) compares false and rejects.
            if log_u < log_alpha {
                theta[i] = proposal;
                *energy = e_new;
                target.commit(i, scratch);
                accepted = true;
            }
        }
        flags[i] = accepted;
        steps.propose_counts[i] += 1;
        if accepted {
            steps.accept_counts[i] += 1;
        }
        if let Some(t) = adapt_t {
            robbins_monro_update(steps, i, accepted, t);
        }
    }
    flags
}

/// `log s ← log s + c0/t^0.6 · (1{accepted} − p*)`, clamped.
pub fn robbins_monro_update<S: Real>(steps: &mut StepState<S>, component: usize, accepted: bool, t: u64) {
    let t = t.max(1) as f64;
    let gain = RM_GAIN / t.powf(RM_EXPONENT);
    let indicator = if accepted { 1.0 } else { 0.0 };
    let s = steps.step_sizes[component].f64();
    let updated = (s.ln() + gain * (indicator - TARGET_ACCEPTANCE)).exp();
    steps.step_sizes[component] = clamp_step(S::lit(updated.clamp(STEP_MIN, STEP_MAX)));
}

/// Step sizes for the next inverse temperature, extrapolated from the level
/// history.
///
/// Each recorded step size is corrected by `exp(κ(acc − p*))` (too-high
/// acceptance means the step could have been larger), then a least-squares
/// line in `(log β, log s)` over the most recent levels is evaluated at
/// `beta_next`. With one usable level its corrected step is returned; with
/// none, the prior scale.
pub fn predict_step_size<S: Real>(history: &[HistoryEntry<S>], beta_next: S, priors: &[Prior<S>]) -> Vec<S> {
    let usable: Vec<&HistoryEntry<S>> = history.iter().filter(|h| h.beta > S::zero()).collect();
    let window = &usable[usable.len().saturating_sub(HISTORY_WINDOW)..];
    let x_next = beta_next.f64().ln();
    (0..priors.len())
        .map(|i| {
            if window.is_empty() {
                return clamp_step(priors[i].scale());
            }
            let pts: Vec<(f64, f64)> = window
                .iter()
                .map(|h| {
                    let acc = h.acceptance[i].f64();
                    (h.beta.f64().ln(), h.step_sizes[i].f64().ln() + HISTORY_KAPPA * (acc - TARGET_ACCEPTANCE))
                })
                .collect();
            let m = pts.len() as f64;
            let x_bar = pts.iter().map(|p| p.0).sum::<f64>() / m;
            let y_bar = pts.iter().map(|p| p.1).sum::<f64>() / m;
            let sxx: f64 = pts.iter().map(|p| (p.0 - x_bar) * (p.0 - x_bar)).sum();
            let sxy: f64 = pts.iter().map(|p| (p.0 - x_bar) * (p.1 - y_bar)).sum();
            let log_s = if sxx > 1e-24 { y_bar + sxy / sxx * (x_next - x_bar) } else { y_bar };
            clamp_step(S::lit(log_s.clamp(STEP_MIN.ln(), STEP_MAX.ln()).exp()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use crate::target::FnTarget;

    fn entry(beta: f64, s: f64, acc: f64) -> HistoryEntry<f64> {
        HistoryEntry { beta, acceptance: vec![acc], step_sizes: vec![s] }
    }

    #[test]
    fn empty_history_uses_prior_scale() {
        let priors = [Prior::<f64>::uniform(0.0, 1.0).unwrap()];
        let s = predict_step_size(&[], 0.3, &priors);
        assert!((s[0] - 1.0 / 12f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn constant_history_predicts_constant() {
        let priors = [Prior::<f64>::uniform(0.0, 1.0).unwrap()];
        let h = [entry(0.01, 0.2, 0.5), entry(0.1, 0.2, 0.5), entry(0.5, 0.2, 0.5)];
        let s = predict_step_size(&h, 1.0, &priors);
        assert!((s[0] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn log_log_interpolation() {
        let priors = [Prior::<f64>::uniform(0.0, 1.0).unwrap()];
        let h = [entry(0.01, 1.0, 0.5), entry(1.0, 0.1, 0.5)];
        let s = predict_step_size(&h, 0.1, &priors);
        assert!((s[0] - 10f64.powf(-0.5)).abs() < 1e-12, "{}", s[0]);
    }

    #[test]
    fn history_ignores_beta_zero_entries() {
        let priors = [Prior::<f64>::uniform(0.0, 1.0).unwrap()];
        let h = [entry(0.0, 5.0, 0.5), entry(0.2, 0.3, 0.5)];
        let s = predict_step_size(&h, 0.5, &priors);
        assert!((s[0] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn robbins_monro_direction() {
        let mut up = StepState::new(vec![1.0f64]);
        let mut down = StepState::new(vec![1.0f64]);
        let mut prev = (1.0, 1.0);
        for t in 1..=100 {
            robbins_monro_update(&mut up, 0, true, t);
            robbins_monro_update(&mut down, 0, false, t);
            assert!(up.step_sizes[0] > prev.0);
            assert!(down.step_sizes[0] < prev.1);
            prev = (up.step_sizes[0], down.step_sizes[0]);
        }
    }

    #[test]
    fn robbins_monro_bernoulli_half_stays_bounded() {
        use rand::Rng;
        let mut st = StepState::new(vec![0.7f64]);
        let mut rng = RngStream::from_seed(99);
        for t in 1..=10_000 {
            let acc = rng.random::<f64>() < 0.5;
            robbins_monro_update(&mut st, 0, acc, t);
        }
        assert!((st.step_sizes[0].ln() - 0.7f64.ln()).abs() < 0.5, "{}", st.step_sizes[0]);
    }

    #[test]
    fn robbins_monro_clamps() {
        let mut st = StepState::new(vec![1e-12f64]);
        for t in 1..=10 {
            robbins_monro_update(&mut st, 0, false, t);
        }
        assert_eq!(st.step_sizes[0], 1e-12);
    }

    #[test]
    fn tiny_steps_inside_support_accept() {
        let target = FnTarget::new(vec![Prior::uniform(0.0, 1.0).unwrap()], 1, |_: &[f64]| 0.0);
        let mut theta = vec![0.5];
        let mut e = 0.0;
        let mut st = StepState::new(vec![1e-6]);
        let mut sc = target.new_scratch();
        let mut rng = RngStream::from_seed(3);
        for _ in 0..10_000 {
            cw_mh_sweep(&target, &mut theta, &mut e, &mut sc, 0.0, &mut st, None, &mut rng);
        }
        assert!(st.acceptance_rates()[0] > 0.999);
    }

    #[test]
    fn proposals_outside_support_rejected() {
        let target = FnTarget::new(vec![Prior::uniform(0.0, 1.0).unwrap()], 1, |_: &[f64]| 0.0);
        let mut theta = vec![0.5];
        let mut e = 0.0;
        // Steps so large that essentially every proposal leaves [0, 1].
        let mut st = StepState::new(vec![1e9]);
        let mut sc = target.new_scratch();
        let mut rng = RngStream::from_seed(4);
        for _ in 0..1000 {
            cw_mh_sweep(&target, &mut theta, &mut e, &mut sc, 1.0, &mut st, None, &mut rng);
        }
        assert_eq!(st.accept_counts[0], 0);
        assert_eq!(theta[0], 0.5);
    }

    #[test]
    fn standard_normal_target_moments() {
        // Flat prior far wider than the target; energy gives N(0, 1).
        let target = FnTarget::new(vec![Prior::uniform(-1e3, 1e3).unwrap()], 1, |t: &[f64]| 0.5 * t[0] * t[0]);
        let mut theta = vec![0.0];
        let mut e = 0.0;
        let mut st = StepState::new(vec![2.4]);
        let mut sc = target.new_scratch();
        let mut rng = RngStream::from_seed(5);
        let n = 1_000_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            cw_mh_sweep(&target, &mut theta, &mut e, &mut sc, 1.0, &mut st, None, &mut rng);
            s1 += theta[0];
            s2 += theta[0] * theta[0];
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!((var - 1.0).abs() < 0.05, "var {var}");
        assert!(mean.abs() < 0.05, "mean {mean}");
    }
}
