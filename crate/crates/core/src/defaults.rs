//! Default priors for each model family. Some depend on the observed data
//! (intensity range, first and last points).

use crate::error::Result;
use crate::model::PhaseRef;
use crate::prior::Prior;
use crate::real::Real;
use crate::spectrum::Spectrum;

/// Per-peak `(A, μ, b)` priors: `A ~ Ga(5, 5)`, `b ~ Ga(5, 0.04)` and `μ`
/// uniform over the data range.
pub fn gaussian_mixture_priors<S: Real>(peaks: usize, data: &Spectrum<S>) -> Result<Vec<Prior<S>>> {
    let (lo, hi) = data.x_range();
    let mu = Prior::uniform(lo.f64(), hi.f64())?;
    gaussian_mixture_priors_with(peaks, mu)
}

/// Per-peak `(A, μ, b)` priors with an explicit centre prior.
pub fn gaussian_mixture_priors_with<S: Real>(peaks: usize, mu: Prior<S>) -> Result<Vec<Prior<S>>> {
    let a = Prior::gamma(5.0, 5.0)?;
    let b = Prior::gamma(5.0, 0.04)?;
    Ok((0..peaks).flat_map(|_| [a, mu, b]).collect())
}

/// Phase and background priors for the XRD model, scaled by the observed
/// intensity range.
pub fn xrd_priors<S: Real>(phases: &[PhaseRef<S>], data: &Spectrum<S>) -> Result<Vec<Prior<S>>> {
    let (y_min, y_max) = (data.y_min().f64(), data.y_max().f64());
    let span = (y_max - y_min).max(f64::MIN_POSITIVE);
    let per_phase = [
        Prior::gamma(4.0, 4.0 / span)?,
        Prior::normal(0.0, 0.05 * 0.05)?,
        Prior::uniform(0.0, 1.0)?,
        Prior::gamma(5.0, 4.0)?,
        Prior::gamma(1.0, 10.0)?,
        Prior::gamma(1.0, 10.0)?,
        Prior::gamma(2.0, 20.0)?,
        Prior::gamma(2.0, 20.0)?,
        Prior::gamma(1.0, 10.0)?,
    ];
    let root = y_min.max(0.0).sqrt();
    let background = [
        Prior::gamma(2.0, 1.0 / y_max.max(f64::MIN_POSITIVE))?,
        Prior::gamma(2.0, 0.4)?,
        Prior::uniform(0.0, 1.0)?,
        Prior::uniform(y_min - root, y_min + root.max(1e-9))?,
    ];
    Ok(phases.iter().flat_map(|_| per_phase).chain(background).collect())
}

/// Peak and Shirley-endpoint priors for the XPS model.
pub fn xps_priors<S: Real>(peaks: usize, data: &Spectrum<S>) -> Result<Vec<Prior<S>>> {
    let (y_min, y_max) = (data.y_min().f64(), data.y_max().f64());
    let (x_min, x_max) = data.x_range();
    let first = data.ys()[0].f64();
    let last = data.ys()[data.len() - 1].f64();
    let per_peak = [
        Prior::uniform((0.3 * y_min).max(0.0), 1.05 * y_max)?,
        Prior::uniform(x_min.f64(), x_max.f64())?,
        Prior::uniform(0.1, 15.0)?,
        Prior::uniform(0.0, 1.0)?,
    ];
    let endpoint = |y: f64| {
        let (lo, hi) = (0.95 * y, 1.01 * y);
        Prior::uniform(lo.min(hi), lo.max(hi))
    };
    Ok((0..peaks)
        .flat_map(|_| per_peak)
        .chain([endpoint(first)?, endpoint(last)?])
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::AxisKind;

    #[test]
    fn xps_priors_follow_data() {
        let data = Spectrum::new(vec![0.0, 1.0, 2.0], vec![100.0, 400.0, 200.0], AxisKind::BindingEnergy).unwrap();
        let p = xps_priors(2, &data).unwrap();
        assert_eq!(p.len(), 10);
        assert_eq!(p[0], Prior::Uniform { lo: 30.0, hi: 420.0 });
        assert_eq!(p[1], Prior::Uniform { lo: 0.0, hi: 2.0 });
        assert_eq!(p[8], Prior::Uniform { lo: 95.0, hi: 101.0 });
        assert_eq!(p[9], Prior::Uniform { lo: 190.0, hi: 202.0 });
    }

    #[test]
    fn xrd_priors_follow_data() {
        let data = Spectrum::new(vec![20.0, 30.0], vec![100.0, 1100.0], AxisKind::TwoTheta).unwrap();
        let phase = PhaseRef::new("rutile", vec![(27.4, 1.0)]).unwrap();
        let p = xrd_priors(&[phase], &data).unwrap();
        assert_eq!(p.len(), 13);
        assert_eq!(p[0], Prior::Gamma { shape: 4.0, rate: 0.004 });
        assert_eq!(p[9], Prior::Gamma { shape: 2.0, rate: 1.0 / 1100.0 });
        assert_eq!(p[12], Prior::Uniform { lo: 90.0, hi: 110.0 });
    }
}
