//! Peak profiles and the Shirley background.
//!
//! Profiles are height-normalised (value 1 at the centre); amplitudes live in
//! the forward models.

use crate::error::{Error, Result};
use crate::real::Real;

/// Gaussian with full width at half maximum `fwhm`.
#[inline]
pub fn gaussian_fwhm<S: Real>(dx: S, fwhm: S) -> S {
    let z = dx / fwhm;
    (-S::lit(4.0 * std::f64::consts::LN_2) * z * z).exp()
}

/// Lorentzian with full width at half maximum `fwhm`.
#[inline]
pub fn lorentzian_fwhm<S: Real>(dx: S, fwhm: S) -> S {
    let z = dx / fwhm;
    S::one() / (S::one() + S::lit(4.0) * z * z)
}

/// Pseudo-Voigt mix `(1-r)·G + r·L` without argument checks. Widths must be positive.
#[inline]
pub fn pseudo_voigt_unchecked<S: Real>(x: S, center: S, gamma_g: S, gamma_l: S, r: S) -> S {
    let dx = x - center;
    (S::one() - r) * gaussian_fwhm(dx, gamma_g) + r * lorentzian_fwhm(dx, gamma_l)
}

/// Pseudo-Voigt profile with Gaussian FWHM `gamma_g`, Lorentzian FWHM `gamma_l`
/// and Lorentzian fraction `r`.
pub fn pseudo_voigt<S: Real>(x: S, center: S, gamma_g: S, gamma_l: S, r: S) -> Result<S> {
    if !(gamma_g > S::zero()) || !(gamma_l > S::zero()) {
        return Err(Error::Domain(format!(
            "pseudo-Voigt widths must be positive (gamma_g = {gamma_g}, gamma_l = {gamma_l})"
        )));
    }
    if !(r >= S::zero() && r <= S::one()) {
        return Err(Error::Domain(format!("mixing ratio {r} outside [0, 1]")));
    }
    Ok(pseudo_voigt_unchecked(x, center, gamma_g, gamma_l, r))
}

/// XPS peak shape: `eta` weights a Gaussian and `1-eta` a Lorentzian, both
/// with half width at half maximum `hwhm`.
#[inline]
pub fn xps_peak<S: Real>(x: S, center: S, hwhm: S, eta: S) -> S {
    let dx = x - center;
    let d2 = dx * dx;
    let s2 = hwhm * hwhm;
    let gauss = (-S::LN_2() * d2 / s2).exp();
    let lorentz = s2 / (s2 + d2);
    eta * gauss + (S::one() - eta) * lorentz
}

/// Shirley background: `a + (b-a)·C(x)/C(x_N)` with `C` the cumulative
/// trapezoidal integral of `peak_signal` from the first point.
///
/// Falls back to a straight ramp from `a` to `b` when the integrated signal is
/// negligible. The first and last outputs are exactly `a` and `b`.
pub fn shirley_background<S: Real>(xs: &[S], peak_signal: &[S], a: S, b: S) -> Result<Vec<S>> {
    if xs.len() != peak_signal.len() {
        return Err(Error::Domain(format!(
            "{} x values but {} signal values",
            xs.len(),
            peak_signal.len()
        )));
    }
    let mut out = vec![S::zero(); xs.len()];
    shirley_into(xs, peak_signal, a, b, &mut out);
    Ok(out)
}

/// In-place form of [`shirley_background`]; `out` holds the background on return.
pub(crate) fn shirley_into<S: Real>(xs: &[S], peak: &[S], a: S, b: S, out: &mut [S]) {
    let n = xs.len();
    if n == 0 {
        return;
    }
    let half = S::lit(0.5);
    out[0] = S::zero();
    let mut peak_max = peak[0];
    for i in 1..n {
        out[i] = out[i - 1] + half * (peak[i] + peak[i - 1]) * (xs[i] - xs[i - 1]);
        if peak[i] > peak_max {
            peak_max = peak[i];
        }
    }
    let total = out[n - 1];
    let span = xs[n - 1] - xs[0];
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    let clamp = |v: S| v.max(lo).min(hi);
    if total <= S::lit(1e-12) * peak_max * span {
        for i in 0..n {
            out[i] = clamp(a + (b - a) * ((xs[i] - xs[0]) / span));
        }
    } else {
        let scale = (b - a) / total;
        for v in out.iter_mut() {
            *v = clamp(a + scale * *v);
        }
    }
    out[0] = a;
    out[n - 1] = b;
}
