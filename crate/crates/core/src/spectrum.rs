//! Observed spectra and their text format.
//!
//! The on-disk format is two numeric columns (comma or whitespace separated).
//! Lines starting with `#` are comments and a single non-numeric header line
//! is skipped.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisKind {
    #[default]
    Generic,
    TwoTheta,
    BindingEnergy,
}

/// Observation arrays `(x_i, y_i)`, `x` strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum<S> {
    xs: Vec<S>,
    ys: Vec<S>,
    axis: AxisKind,
}

impl<S: Real> Spectrum<S> {
    pub fn new(xs: Vec<S>, ys: Vec<S>, axis: AxisKind) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::InvalidSpectrum(format!(
                "{} x values but {} y values",
                xs.len(),
                ys.len()
            )));
        }
        if xs.len() < 2 {
            return Err(Error::InvalidSpectrum("need at least two points".into()));
        }
        if let Some(i) = xs.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidSpectrum(format!(
                "x not strictly increasing at index {}",
                i + 1
            )));
        }
        if let Some(i) = xs.iter().chain(ys.iter()).position(|v| !v.is_finite()) {
            return Err(Error::InvalidSpectrum(format!("non-finite value at index {}", i % xs.len())));
        }
        Ok(Self { xs, ys, axis })
    }

    pub fn xs(&self) -> &[S] {
        &self.xs
    }

    pub fn ys(&self) -> &[S] {
        &self.ys
    }

    pub fn axis(&self) -> AxisKind {
        self.axis
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Required before using a Poisson likelihood.
    pub fn check_counts(&self) -> Result<()> {
        match self.ys.iter().position(|&y| y < S::zero()) {
            Some(i) => Err(Error::InvalidSpectrum(format!(
                "negative count {} at index {i}",
                self.ys[i]
            ))),
            None => Ok(()),
        }
    }

    pub fn y_min(&self) -> S {
        self.ys.iter().copied().fold(S::infinity(), S::min)
    }

    pub fn y_max(&self) -> S {
        self.ys.iter().copied().fold(S::neg_infinity(), S::max)
    }

    pub fn x_range(&self) -> (S, S) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }

    pub fn parse(text: &str, axis: AxisKind) -> Result<Self> {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut seen_data = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|f| !f.is_empty());
            let (Some(a), Some(b), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(Error::Parse {
                    line: lineno + 1,
                    message: "expected exactly two columns".into(),
                });
            };
            match (a.parse::<f64>(), b.parse::<f64>()) {
                (Ok(x), Ok(y)) => {
                    seen_data = true;
                    xs.push(S::lit(x));
                    ys.push(S::lit(y));
                }
                _ if !seen_data => continue, // header line
                _ => {
                    return Err(Error::Parse {
                        line: lineno + 1,
                        message: format!("non-numeric field in `{line}`"),
                    })
                }
            }
        }
        Self::new(xs, ys, axis)
    }

    pub fn read(path: &Path, axis: AxisKind) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, axis)
    }

    /// One `x,y` line per point, full round-trip precision.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.len() * 40);
        for (x, y) in self.xs.iter().zip(&self.ys) {
            let _ = writeln!(out, "{:?},{:?}", x.f64(), y.f64());
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// `n` equally spaced points on `[lo, hi]`, both endpoints included.
pub fn linspace<S: Real>(lo: S, hi: S, n: usize) -> Vec<S> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / S::from_usize(n - 1).unwrap();
            (0..n)
                .map(|i| if i == n - 1 { hi } else { lo + step * S::from_usize(i).unwrap() })
                .collect()
        }
    }
}
