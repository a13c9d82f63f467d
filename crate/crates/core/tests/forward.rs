//! Forward models and energies checked against straight-line scalar
//! transcriptions of the formulas.

use bayespec::lineshape::shirley_background;
use bayespec::model::{ModelFamily, NoiseSpec, PhaseRef};
use bayespec::target::{log_target, noise_energy, spectral_log_target};
use bayespec::*;
use proptest::prelude::*;

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

fn gm_spec(peaks: usize) -> ModelSpec64 {
    let priors = bayespec::defaults::gaussian_mixture_priors_with(peaks, Prior::uniform(0.0, 3.0).unwrap()).unwrap();
    ModelSpec::new(ModelFamily::GaussianMixture { peaks }, priors, NoiseSpec::GaussianFixed { sigma: 0.1 }).unwrap()
}

const GM3_TRUTH: [[f64; 3]; 3] = [[0.587, 1.210, 95.689], [1.522, 1.455, 146.837], [1.183, 1.703, 164.469]];

#[test]
fn gm_peak_height_at_centre() {
    let spec = gm_spec(1);
    let f = forward(&spec, &GM3_TRUTH[0], &[1.210]).unwrap();
    assert_eq!(f[0], 0.587);
}

#[test]
fn gm_zero_amplitudes_vanish() {
    let spec = gm_spec(3);
    let theta: Vec<f64> = GM3_TRUTH.iter().flat_map(|p| [0.0, p[1], p[2]]).collect();
    let f = forward(&spec, &theta, &bayespec::spectrum::linspace(0.0, 3.0, 50)).unwrap();
    assert!(f.iter().all(|&v| v == 0.0));
}

#[test]
fn gm_three_peaks_term_by_term() {
    let spec = gm_spec(3);
    let theta: Vec<f64> = GM3_TRUTH.iter().flatten().copied().collect();
    let x = 1.455;
    let expected: f64 = GM3_TRUTH.iter().map(|p| p[0] * (-(p[2] / 2.0) * (x - p[1]).powi(2)).exp()).sum();
    let f = forward(&spec, &theta, &[x]).unwrap();
    assert!(rel_close(f[0], expected, 1e-14), "{} vs {expected}", f[0]);
}

/// Scalar transcription of the XRD profile for one phase with one reflection
/// plus the pseudo-Voigt background.
fn xrd_oracle(x: f64, p: &[f64; 9], mu_ref: f64, inten: f64, bg: &[f64; 4]) -> f64 {
    let [amp, shift, r, alpha, u, v, w, s, t] = *p;
    let mu = mu_ref + shift;
    let half = (x / 2.0).to_radians();
    let asym = if x >= mu { alpha } else { 1.0 };
    let sigma = asym * (u * half.tan().powi(2) - v * half.tan() + w).sqrt();
    let omega = asym * (s / half.cos() + t * half.tan());
    let g = |d: f64, width: f64| (-4.0 * 2f64.ln() * (d / width).powi(2)).exp();
    let l = |d: f64, width: f64| 1.0 / (1.0 + 4.0 * (d / width).powi(2));
    let peak = (1.0 - r) * g(x - mu, sigma) + r * l(x - mu, omega);
    let [a, sbg, rbg, b] = *bg;
    let background = a * ((1.0 - rbg) * g(x, sbg) + rbg * l(x, sbg)) + b;
    amp * inten * peak + background
}

fn xrd_spec(reflections: Vec<(f64, f64)>) -> ModelSpec64 {
    let phase = PhaseRef::new("rutile", reflections).unwrap();
    let data = Spectrum::new(vec![20.0, 60.0], vec![100.0, 2000.0], AxisKind::TwoTheta).unwrap();
    let priors = bayespec::defaults::xrd_priors(std::slice::from_ref(&phase), &data).unwrap();
    ModelSpec::new(ModelFamily::XrdPseudoVoigt { phases: vec![phase] }, priors, NoiseSpec::Poisson).unwrap()
}

#[test]
fn xrd_single_reflection_matches_transcription() {
    let spec = xrd_spec(vec![(27.4, 1.0)]);
    let rutile = [10000.0, 0.035, 0.50, 0.6, 0.03, 0.03, 0.06, 0.06, 0.03];
    let bg = [60000.0, 10.0, 0.0, 100.0];
    let theta: Vec<f64> = rutile.iter().chain(&bg).copied().collect();
    let xs = [27.0, 27.3, 27.435, 27.5, 28.0];
    let f = forward(&spec, &theta, &xs).unwrap();
    for (&x, &fi) in xs.iter().zip(&f) {
        let want = xrd_oracle(x, &rutile, 27.4, 1.0, &bg);
        assert!(rel_close(fi, want, 1e-12), "x = {x}: {fi} vs {want}");
    }
}

#[test]
fn xrd_background_only() {
    let spec = xrd_spec(vec![(27.4, 1.0)]);
    let theta = [0.0, 0.035, 0.5, 0.6, 0.03, 0.03, 0.06, 0.06, 0.03, 60000.0, 10.0, 0.0, 100.0];
    let xs = bayespec::spectrum::linspace(20.0, 60.0, 41);
    let f = forward(&spec, &theta, &xs).unwrap();
    for (&x, &fi) in xs.iter().zip(&f) {
        let want = 60000.0 * (-4.0 * 2f64.ln() * (x / 10.0).powi(2)).exp() + 100.0;
        assert!(rel_close(fi, want, 1e-13), "x = {x}");
    }
}

#[test]
fn xrd_negative_caglioti_discriminant_is_an_error() {
    let spec = xrd_spec(vec![(27.4, 1.0)]);
    let theta = [1.0, 0.0, 0.5, 1.0, 0.0, 1.0, 0.0, 0.06, 0.03, 1.0, 10.0, 0.0, 100.0];
    let err = forward(&spec, &theta, &[30.0]).unwrap_err();
    assert!(matches!(err, Error::Caglioti { .. }), "{err}");
}

/// Scalar transcription of the XPS model: pseudo-Voigt peaks on a Shirley
/// background integrated with the trapezoid rule.
fn xps_oracle(xs: &[f64], peaks: &[[f64; 4]], a: f64, b: f64) -> Vec<f64> {
    let peak_sum: Vec<f64> = xs
        .iter()
        .map(|&x| {
            peaks
                .iter()
                .map(|&[amp, mu, s, eta]| {
                    let gauss_sd = s / (2.0 * 2f64.ln()).sqrt();
                    let g = (-(x - mu).powi(2) / (2.0 * gauss_sd * gauss_sd)).exp();
                    let l = s * s / (s * s + (x - mu).powi(2));
                    amp * (eta * g + (1.0 - eta) * l)
                })
                .sum()
        })
        .collect();
    let mut cum = vec![0.0; xs.len()];
    for i in 1..xs.len() {
        cum[i] = cum[i - 1] + 0.5 * (peak_sum[i] + peak_sum[i - 1]) * (xs[i] - xs[i - 1]);
    }
    let total = cum[xs.len() - 1];
    peak_sum.iter().zip(&cum).map(|(p, c)| p + a + (b - a) * c / total).collect()
}

fn xps_spec(peaks: usize, xs: &[f64]) -> ModelSpec64 {
    let ys = vec![1000.0; xs.len()];
    let data = Spectrum::new(xs.to_vec(), ys, AxisKind::BindingEnergy).unwrap();
    bayespec::synthetic::xps_fit_spec(peaks, &data).unwrap()
}

#[test]
fn xps_two_peaks_match_transcription() {
    let xs = [850.0, 851.0, 852.5, 853.0, 856.0];
    let spec = xps_spec(2, &xs);
    let peaks = [[600.0, 851.2, 1.1, 0.7], [300.0, 853.9, 1.6, 0.3]];
    let (a, b) = (1000.0, 1400.0);
    let theta: Vec<f64> = peaks.iter().flatten().copied().chain([a, b]).collect();
    let f = forward(&spec, &theta, &xs).unwrap();
    let want = xps_oracle(&xs, &peaks, a, b);
    for (fi, wi) in f.iter().zip(&want) {
        assert!(rel_close(*fi, *wi, 1e-12), "{fi} vs {wi}");
    }
}

#[test]
fn xps_without_peaks_is_a_ramp() {
    let xs = bayespec::spectrum::linspace(0.0, 4.0, 5);
    let spec = xps_spec(0, &xs);
    let f = forward(&spec, &[10.0, 30.0], &xs).unwrap();
    assert_eq!(f, vec![10.0, 15.0, 20.0, 25.0, 30.0]);
}

#[test]
fn xps_gaussian_peak_at_centre() {
    let xs = bayespec::spectrum::linspace(850.0, 854.0, 9);
    let spec = xps_spec(1, &xs);
    let theta = [500.0, 852.0, 0.8, 1.0, 1000.0, 1200.0];
    let f = forward(&spec, &theta, &xs).unwrap();
    let peak = bayespec::model::xps_peak_sum(&spec, &theta, &xs).unwrap();
    let bg = shirley_background(&xs, &peak, 1000.0, 1200.0).unwrap();
    assert!(rel_close(f[4], 500.0 + bg[4], 1e-15));
}

#[test]
fn xps_decomposes_into_peaks_and_background() {
    let xs = bayespec::spectrum::linspace(845.0, 887.0, 200);
    let spec = xps_spec(2, &xs);
    let theta = [600.0, 851.2, 1.1, 0.7, 300.0, 870.0, 2.6, 0.3, 1000.0, 1400.0];
    let f = forward(&spec, &theta, &xs).unwrap();
    let peak = bayespec::model::xps_peak_sum(&spec, &theta, &xs).unwrap();
    let bg = shirley_background(&xs, &peak, 1000.0, 1400.0).unwrap();
    for i in 0..xs.len() {
        assert!(rel_close(f[i] - bg[i], peak[i], 1e-10));
    }
}

#[test]
fn family_mismatch_is_rejected() {
    let spec = gm_spec(1);
    assert!(bayespec::model::xps_forward(&spec, &[1.0, 1.0, 1.0], &[1.0]).is_err());
    assert!(forward(&spec, &[1.0, 1.0], &[1.0]).is_err());
}

#[test]
fn energy_examples() {
    let gauss = NoiseSpec::GaussianFixed { sigma: 1.0 };
    let e = noise_energy(&gauss, &[0.3, -1.2], &[0.3, -1.2], false);
    assert!(rel_close(e, 0.5 * std::f64::consts::TAU.ln(), 1e-15));

    assert_eq!(noise_energy(&NoiseSpec::Poisson, &[1.0], &[1.0], false), 1.0);

    let xps = NoiseSpec::XpsHetero { sigma0: 1.0, sigma1: 0.01, sigma2: 0.0 };
    let e = noise_energy(&xps, &[100.0], &[100.0], false);
    assert!(rel_close(e, 0.5 * (std::f64::consts::TAU * 101.0).ln(), 1e-15));

    assert_eq!(noise_energy(&NoiseSpec::Poisson, &[3.0], &[0.0], false), f64::INFINITY);
}

#[test]
fn literal_quadratic_doubles_the_residual_term() {
    let xps = NoiseSpec::XpsHetero { sigma0: 1.0, sigma1: 0.01, sigma2: 0.0 };
    let (y, f) = ([120.0], [100.0]);
    let constant = 0.5 * (std::f64::consts::TAU * 101.0).ln();
    let standard = noise_energy(&xps, &y, &f, false) - constant;
    let literal = noise_energy(&xps, &y, &f, true) - constant;
    assert!(rel_close(literal, 2.0 * standard, 1e-12));
    assert!(rel_close(standard, 400.0 / 202.0, 1e-12));
}

#[test]
fn gaussian_energy_difference_is_the_scaled_residual_sum() {
    let noise = NoiseSpec::GaussianFixed { sigma: 0.3 };
    let ys = [1.0, 2.0, 0.5, -0.7];
    let f = [1.1, 1.8, 0.5, -0.2];
    let ss: f64 = ys.iter().zip(&f).map(|(y, f)| (y - f) * (y - f)).sum();
    let diff = noise_energy(&noise, &ys, &f, false) - noise_energy(&noise, &ys, &ys, false);
    assert!(rel_close(diff, ss / (2.0 * 4.0 * 0.09), 1e-12));
}

fn gm_data() -> (ModelSpec64, Spectrum64) {
    let d = gen_gaussian_mixture::<f64>(3, 7).unwrap();
    (gm_spec(3), d.spectrum)
}

#[test]
fn log_target_at_zero_beta_is_the_prior() {
    let (spec, data) = gm_data();
    let theta: Vec<f64> = GM3_TRUTH.iter().flatten().copied().collect();
    let lt = spectral_log_target(&spec, &theta, &data, 0.0).unwrap();
    assert_eq!(lt, bayespec::prior::prior_logpdf(&spec.priors, &theta));
    assert!(spectral_log_target(&spec, &theta, &data, 1.5).is_err());
}

#[test]
fn tempered_location_model_matches_conjugate_density() {
    // y_i = θ + ε with unit noise, θ ~ N(0, 1). At β the target is Gaussian
    // with precision 1 + βN and mean βΣy/(1 + βN).
    let ys: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin()).collect();
    let xs: Vec<f64> = (0..20).map(|i| i as f64).collect();
    let data = Spectrum::new(xs, ys.clone(), AxisKind::Generic).unwrap();
    let spec =
        ModelSpec::new(ModelFamily::Location, vec![Prior::normal(0.0, 1.0).unwrap()], NoiseSpec::GaussianFixed { sigma: 1.0 })
            .unwrap();
    let beta = 0.5;
    let n = ys.len() as f64;
    let prec = 1.0 + beta * n;
    let mean = beta * ys.iter().sum::<f64>() / prec;
    let target = SpectralTarget::new(&spec, &data).unwrap();
    let lt = |t: f64| log_target(&target, &[t], beta);
    let reference = lt(0.0) + 0.5 * prec * mean * mean;
    for t in [-1.0, -0.2, 0.4, 1.3] {
        let want = -0.5 * prec * (t - mean).powi(2);
        assert!((lt(t) - reference - want).abs() < 1e-10);
    }
}

#[test]
fn cached_trials_match_fresh_evaluation() {
    let xs = bayespec::spectrum::linspace(845.0, 887.0, 120);
    let spec = xps_spec(2, &xs);
    let ys: Vec<f64> = xs.iter().map(|x| 1000.0 + 10.0 * (x - 845.0)).collect();
    let data = Spectrum::new(xs, ys, AxisKind::BindingEnergy).unwrap();
    let target = SpectralTarget::new(&spec, &data).unwrap();
    let mut theta = vec![600.0, 851.2, 1.1, 0.7, 300.0, 870.0, 2.6, 0.3, 1000.0, 1400.0];
    let mut scratch = target.new_scratch();
    target.load(&theta, &mut scratch);
    let moves = [(1, 852.0, true), (6, 1.9, false), (4, 350.0, true), (9, 1380.0, true), (2, 1.4, true), (7, 0.5, false)];
    for (c, v, keep) in moves {
        let cached = target.trial(&theta, c, v, &mut scratch);
        let mut fresh_theta = theta.clone();
        fresh_theta[c] = v;
        assert_eq!(cached.to_bits(), target.energy(&fresh_theta).to_bits());
        if keep {
            target.commit(c, &mut scratch);
            theta = fresh_theta;
        }
    }
}

proptest! {
    #[test]
    fn log_target_is_linear_in_beta(
        amps in prop::array::uniform3(0.1f64..3.0),
        b1 in 0.0f64..1.0,
        b2 in 0.0f64..1.0,
    ) {
        let (spec, data) = gm_data();
        let theta: Vec<f64> = GM3_TRUTH.iter().zip(amps).flat_map(|(p, a)| [a, p[1], p[2]]).collect();
        let e = energy(&spec, &theta, &data).unwrap();
        let l1 = spectral_log_target(&spec, &theta, &data, b1).unwrap();
        let l2 = spectral_log_target(&spec, &theta, &data, b2).unwrap();
        let want = -(b2 - b1) * e.total();
        prop_assert!((l2 - l1 - want).abs() <= 1e-9 * want.abs().max(1.0));
    }

    #[test]
    fn evaluation_is_pointwise(split in 1usize..99) {
        let spec = gm_spec(3);
        let theta: Vec<f64> = GM3_TRUTH.iter().flatten().copied().collect();
        let xs = bayespec::spectrum::linspace(0.0, 3.0, 100);
        let whole = forward(&spec, &theta, &xs).unwrap();
        let mut parts = forward(&spec, &theta, &xs[..split]).unwrap();
        parts.extend(forward(&spec, &theta, &xs[split..]).unwrap());
        prop_assert_eq!(whole, parts);
    }
}
