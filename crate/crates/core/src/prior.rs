//! Independent per-parameter priors.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::real::Real;

/// Prior of a single scalar parameter. `Normal` is parameterised by its
/// variance and `Gamma` by shape and rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prior<S> {
    Gamma { shape: S, rate: S },
    Normal { mean: S, var: S },
    Uniform { lo: S, hi: S },
}

impl<S: Real> Prior<S> {
    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        Self::Gamma { shape: S::lit(shape), rate: S::lit(rate) }.validated()
    }

    pub fn normal(mean: f64, var: f64) -> Result<Self> {
        Self::Normal { mean: S::lit(mean), var: S::lit(var) }.validated()
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        Self::Uniform { lo: S::lit(lo), hi: S::lit(hi) }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        let ok = match self {
            Prior::Gamma { shape, rate } => shape > S::zero() && rate > S::zero() && shape.is_finite() && rate.is_finite(),
            Prior::Normal { mean, var } => var > S::zero() && var.is_finite() && mean.is_finite(),
            Prior::Uniform { lo, hi } => lo < hi && lo.is_finite() && hi.is_finite(),
        };
        if ok {
            Ok(self)
        } else {
            Err(Error::Domain(format!("invalid prior {self}")))
        }
    }

    /// Log density; `-inf` outside the support.
    pub fn logpdf(&self, x: S) -> S {
        match *self {
            Prior::Gamma { shape, rate } => {
                if !(x > S::zero()) {
                    return S::neg_infinity();
                }
                let norm = S::lit(ln_gamma(shape.f64()));
                shape * rate.ln() - norm + (shape - S::one()) * x.ln() - rate * x
            }
            Prior::Normal { mean, var } => {
                let d = x - mean;
                -S::lit(0.5) * (S::TAU() * var).ln() - d * d / (S::lit(2.0) * var)
            }
            Prior::Uniform { lo, hi } => {
                if x >= lo && x <= hi {
                    -(hi - lo).ln()
                } else {
                    S::neg_infinity()
                }
            }
        }
    }

    /// `logpdf(new) - logpdf(old)` without evaluating normalising constants.
    /// `old` must lie in the support.
    pub fn log_ratio(&self, new: S, old: S) -> S {
        match *self {
            Prior::Gamma { shape, rate } => {
                if !(new > S::zero()) {
                    return S::neg_infinity();
                }
                (shape - S::one()) * (new / old).ln() - rate * (new - old)
            }
            Prior::Normal { mean, var } => {
                let (a, b) = (new - mean, old - mean);
                (b * b - a * a) / (S::lit(2.0) * var)
            }
            Prior::Uniform { lo, hi } => {
                if new >= lo && new <= hi {
                    S::zero()
                } else {
                    S::neg_infinity()
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> S {
        match *self {
            Prior::Gamma { shape, rate } => loop {
                // Guard against an underflowed zero for very small shapes.
                let v = S::unit_gamma(shape, rng) / rate;
                if v > S::zero() {
                    break v;
                }
            },
            Prior::Normal { mean, var } => mean + var.sqrt() * S::standard_normal(rng),
            Prior::Uniform { lo, hi } => lo + (hi - lo) * S::open01(rng),
        }
    }

    /// Standard deviation of the prior, the natural initial proposal scale.
    pub fn scale(&self) -> S {
        match *self {
            Prior::Gamma { shape, rate } => shape.sqrt() / rate,
            Prior::Normal { var, .. } => var.sqrt(),
            Prior::Uniform { lo, hi } => (hi - lo) / S::lit(12f64.sqrt()),
        }
    }

    pub fn mean(&self) -> S {
        match *self {
            Prior::Gamma { shape, rate } => shape / rate,
            Prior::Normal { mean, .. } => mean,
            Prior::Uniform { lo, hi } => S::lit(0.5) * (lo + hi),
        }
    }
}

impl<S: Real> fmt::Display for Prior<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Prior::Gamma { shape, rate } => write!(f, "gamma({shape}, {rate})"),
            Prior::Normal { mean, var } => write!(f, "normal({mean}, {var})"),
            Prior::Uniform { lo, hi } => write!(f, "uniform({lo}, {hi})"),
        }
    }
}

/// Parses `gamma(shape, rate)`, `normal(mean, variance)` or `uniform(lo, hi)`.
impl<S: Real> FromStr for Prior<S> {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Domain(format!("cannot parse prior `{s}`"));
        let s = s.trim();
        let open = s.find('(').ok_or_else(bad)?;
        let body = s[open + 1..].strip_suffix(')').ok_or_else(bad)?;
        let args: Vec<f64> = body
            .split(',')
            .map(|a| a.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad())?;
        let [p, q] = args[..] else { return Err(bad()) };
        match s[..open].trim().to_ascii_lowercase().as_str() {
            "gamma" | "ga" => Self::gamma(p, q),
            "normal" | "n" => Self::normal(p, q),
            "uniform" | "u" => Self::uniform(p, q),
            _ => Err(bad()),
        }
    }
}

/// Sum of component log densities.
pub fn prior_logpdf<S: Real>(priors: &[Prior<S>], theta: &[S]) -> S {
    let mut acc = S::zero();
    for (p, &v) in priors.iter().zip(theta) {
        acc = acc + p.logpdf(v);
        if acc == S::neg_infinity() {
            break;
        }
    }
    acc
}

pub fn prior_sample<S: Real, R: Rng + ?Sized>(priors: &[Prior<S>], rng: &mut R) -> Vec<S> {
    priors.iter().map(|p| p.sample(rng)).collect()
}
