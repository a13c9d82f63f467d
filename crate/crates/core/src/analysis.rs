//! Posterior summaries and model selection.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::report::RunReport;

/// Weighted quantile with linear interpolation.
///
/// Each sorted sample `x_i` with normalised weight `w_i` sits at the midpoint
/// of its CDF step, `c_i = S_i − w_i/2`, and the positions are rescaled so the
/// extreme samples map to 0 and 1. The quantile interpolates linearly between
/// these points. With equal weights this is the usual `(n−1)q` order-statistic
/// interpolation. Zero-weight samples are ignored.
pub fn weighted_quantile<S: Real>(samples: &[S], weights: &[S], q: S) -> Result<S> {
    if samples.len() != weights.len() {
        return Err(Error::Layout { expected: samples.len(), got: weights.len() });
    }
    if !(q >= S::zero() && q <= S::one()) {
        return Err(Error::Domain(format!("quantile level {q} outside [0, 1]")));
    }
    if weights.iter().any(|&w| w < S::zero() || !w.is_finite()) {
        return Err(Error::Domain("weights must be finite and non-negative".into()));
    }
    let mut pairs: Vec<(S, S)> = samples
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > S::zero())
        .map(|(&x, &w)| (x, w))
        .collect();
    if pairs.is_empty() {
        return Err(Error::EmptyInput);
    }
    if pairs.iter().any(|p| !p.0.is_finite()) {
        return Err(Error::Domain("samples must be finite".into()));
    }
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let n = pairs.len();
    if n == 1 {
        return Ok(pairs[0].0);
    }
    // Positions are kept unnormalised (scaled by the total weight) so that
    // integer weights give exact order-statistic positions.
    let half = S::lit(0.5);
    let w_first = pairs[0].1;
    let w_last = pairs[n - 1].1;
    let mut cum = S::zero();
    let mut positions = Vec::with_capacity(n);
    for &(_, w) in &pairs {
        positions.push(cum + half * (w - w_first));
        cum = cum + w;
    }
    let span = cum - half * (w_first + w_last);
    positions[n - 1] = span;
    let q = q * span;
    let j = positions.partition_point(|&p| p <= q);
    if j >= n {
        return Ok(pairs[n - 1].0);
    }
    let (p0, p1) = (positions[j - 1], positions[j]);
    let (x0, x1) = (pairs[j - 1].0, pairs[j].0);
    if p1 <= p0 {
        return Ok(x1);
    }
    Ok(x0 + (x1 - x0) * (q - p0) / (p1 - p0))
}

/// Equal-tailed credible interval at `level`.
pub fn credible_interval<S: Real>(samples: &[S], weights: &[S], level: S) -> Result<(S, S)> {
    if !(level > S::zero() && level <= S::one()) {
        return Err(Error::Domain(format!("credible level {level} outside (0, 1]")));
    }
    let tail = (S::one() - level) * S::lit(0.5);
    Ok((
        weighted_quantile(samples, weights, tail)?,
        weighted_quantile(samples, weights, S::one() - tail)?,
    ))
}

/// Interval endpoint error `|lo − lo_ref| + |hi − hi_ref|`.
pub fn endpoint_error<S: Real>(interval: (S, S), reference: (S, S)) -> S {
    (interval.0 - reference.0).abs() + (interval.1 - reference.1).abs()
}

/// Reorders the peaks inside every draw by increasing centre.
///
/// Each draw holds `peaks` consecutive groups of `stride` values, followed by
/// any non-peak parameters; `mu_offset` is the position of the centre inside
/// a group. Sorting each draw removes label switching between exchangeable
/// peaks.
pub fn relabel_by_position(draws: &mut [Vec<f64>], peaks: usize, stride: usize, mu_offset: usize) {
    let mut groups: Vec<Vec<f64>> = Vec::with_capacity(peaks);
    for draw in draws.iter_mut() {
        groups.clear();
        groups.extend((0..peaks).map(|k| draw[k * stride..(k + 1) * stride].to_vec()));
        groups.sort_by(|a, b| a[mu_offset].total_cmp(&b[mu_offset]));
        for (k, g) in groups.iter().enumerate() {
            draw[k * stride..(k + 1) * stride].copy_from_slice(g);
        }
    }
}

/// Posterior summary of one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub std: f64,
    pub ci95: (f64, f64),
    pub ci99: (f64, f64),
}

/// Summaries of every column of equally weighted draws.
pub fn summarize(names: &[String], draws: &[Vec<f64>]) -> Result<Vec<ParameterSummary>> {
    if draws.is_empty() {
        return Err(Error::EmptyInput);
    }
    let ones = vec![1.0; draws.len()];
    names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let col: Vec<f64> = draws.iter().map(|d| d[j]).collect();
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            Ok(ParameterSummary {
                name: name.clone(),
                mean,
                std: var.sqrt(),
                ci95: credible_interval(&col, &ones, 0.95)?,
                ci99: credible_interval(&col, &ones, 0.99)?,
            })
        })
        .collect()
}

/// One row of a model-selection table.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelRow {
    pub k: usize,
    /// Mean free energy over the finite runs (NaN if none).
    pub f_mean: f64,
    /// Sample standard deviation across runs; NaN with a single run.
    pub f_std: f64,
    pub runs: usize,
    pub excluded: usize,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSelection {
    pub best: usize,
    /// Rows sorted by `k`.
    pub table: Vec<ModelRow>,
}

impl ModelSelection {
    /// Tab-separated table with a header line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("K\tF_mean\tF_std\truns\texcluded\tselected\tnote\n");
        for r in &self.table {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                r.k,
                r.f_mean,
                r.f_std,
                r.runs,
                r.excluded,
                r.k == self.best,
                r.warning.as_deref().unwrap_or("")
            ));
        }
        out
    }
}

/// Picks the `K` with the smallest mean free energy. Runs with a non-finite
/// estimate are excluded and reported in the row's warning; equal means
/// select the smaller `K`.
pub fn model_select(reports: &[(usize, RunReport)]) -> Result<ModelSelection> {
    let values: Vec<(usize, f64)> = reports.iter().map(|(k, r)| (*k, r.free_energy)).collect();
    model_select_values(&values)
}

/// [`model_select`] on bare `(K, F)` pairs.
pub fn model_select_values(values: &[(usize, f64)]) -> Result<ModelSelection> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut by_k: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for &(k, f) in values {
        by_k.entry(k).or_default().push(f);
    }
    let table: Vec<ModelRow> = by_k
        .into_iter()
        .map(|(k, fs)| {
            let finite: Vec<f64> = fs.iter().copied().filter(|f| f.is_finite()).collect();
            let excluded = fs.len() - finite.len();
            let n = finite.len() as f64;
            let f_mean = if finite.is_empty() { f64::NAN } else { finite.iter().sum::<f64>() / n };
            let f_std = if finite.len() < 2 {
                f64::NAN
            } else {
                (finite.iter().map(|f| (f - f_mean) * (f - f_mean)).sum::<f64>() / (n - 1.0)).sqrt()
            };
            let warning = (excluded > 0).then(|| format!("{excluded} of {} runs had a non-finite free energy", fs.len()));
            ModelRow { k, f_mean, f_std, runs: finite.len(), excluded, warning }
        })
        .collect();
    let best = table
        .iter()
        .filter(|r| r.f_mean.is_finite())
        .fold(None::<&ModelRow>, |best, r| match best {
            Some(b) if b.f_mean <= r.f_mean => Some(b),
            _ => Some(r),
        })
        .map(|r| r.k)
        .ok_or_else(|| Error::Domain("no candidate has a finite free energy".into()))?;
    Ok(ModelSelection { best, table })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn uniform(n: usize) -> Vec<f64> {
        vec![1.0; n]
    }

    #[test]
    fn median_of_one_to_hundred() {
        let xs: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(weighted_quantile(&xs, &uniform(100), 0.5).unwrap(), 50.5);
        assert_eq!(weighted_quantile(&xs, &uniform(100), 0.0).unwrap(), 1.0);
        assert_eq!(weighted_quantile(&xs, &uniform(100), 1.0).unwrap(), 100.0);
    }

    /// Walks the midpoint CDF directly: the first rescaled midpoint at or
    /// above `q` and its predecessor bracket the answer.
    fn cdf_walk(xs: &[f64], ws: &[f64], q: f64) -> f64 {
        let total: f64 = ws.iter().sum();
        let n = xs.len();
        let (w1, wn) = (ws[0] / total, ws[n - 1] / total);
        let mut prev = (xs[0], 0.0);
        let mut cum = 0.0;
        for i in 0..n {
            let w = ws[i] / total;
            cum += w;
            let p = (cum - w / 2.0 - w1 / 2.0) / (1.0 - w1 / 2.0 - wn / 2.0);
            if p >= q && i > 0 {
                return prev.0 + (xs[i] - prev.0) * (q - prev.1) / (p - prev.1);
            }
            prev = (xs[i], p);
        }
        xs[n - 1]
    }

    #[test]
    fn skewed_weights_match_cdf_walk() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ws = [0.7, 0.1, 0.1, 0.1];
        let q = weighted_quantile(&xs, &ws, 0.5).unwrap();
        assert!((q - cdf_walk(&xs, &ws, 0.5)).abs() < 1e-12);
        assert!((q - 1.75).abs() < 1e-12);
    }

    #[test]
    fn zero_weights_are_ignored_and_empty_errors() {
        assert_eq!(weighted_quantile(&[5.0, 7.0], &[0.0, 2.0], 0.3).unwrap(), 7.0);
        assert!(matches!(weighted_quantile::<f64>(&[], &[], 0.5), Err(Error::EmptyInput)));
    }

    #[test]
    fn normal_interval() {
        use crate::real::Real;
        use crate::rng::RngStream;
        let mut rng = RngStream::from_seed(11);
        let xs: Vec<f64> = (0..1_000_000).map(|_| f64::standard_normal(&mut rng)).collect();
        let (lo, hi) = credible_interval(&xs, &uniform(xs.len()), 0.95).unwrap();
        assert!((lo + 1.959964).abs() < 0.01 && (hi - 1.959964).abs() < 0.01, "{lo} {hi}");
    }

    #[test]
    fn full_level_gives_range() {
        let xs = [3.0, -1.0, 2.0, 8.0];
        assert_eq!(credible_interval(&xs, &uniform(4), 1.0).unwrap(), (-1.0, 8.0));
    }

    #[test]
    fn relabel_sorts_each_draw() {
        let mut draws = vec![vec![1.0, 5.0, 10.0, 2.0, 3.0, 20.0, 99.0]];
        relabel_by_position(&mut draws, 2, 3, 1);
        assert_eq!(draws[0], vec![2.0, 3.0, 20.0, 1.0, 5.0, 10.0, 99.0]);
    }

    #[test]
    fn selection_examples() {
        let s = model_select_values(&[(6, 3256.0), (7, 3232.0), (8, 3232.5)]).unwrap();
        assert_eq!(s.best, 7);
        assert_eq!(model_select_values(&[(3, 10.0)]).unwrap().best, 3);
        assert_eq!(model_select_values(&[(4, 1.0), (2, 1.0)]).unwrap().best, 2);
    }

    #[test]
    fn selection_excludes_nan_with_warning() {
        let s = model_select_values(&[(2, f64::NAN), (3, 5.0), (3, 7.0), (4, 5.5)]).unwrap();
        assert_eq!(s.best, 4);
        assert_eq!(s.table[0].excluded, 1);
        assert!(s.table[0].warning.is_some());
        assert_eq!(s.table[1].f_mean, 6.0);
        assert!((s.table[1].f_std - 2f64.sqrt()).abs() < 1e-12);
        assert!(model_select_values(&[(2, f64::NAN)]).is_err());
    }

    proptest! {
        #[test]
        fn quantile_monotone_in_q(
            xs in prop::collection::vec(-100.0f64..100.0, 1..30),
            seed_ws in prop::collection::vec(0.01f64..5.0, 30),
            q1 in 0.0f64..1.0,
            q2 in 0.0f64..1.0,
        ) {
            let ws = &seed_ws[..xs.len()];
            let (a, b) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
            prop_assert!(weighted_quantile(&xs, ws, a).unwrap() <= weighted_quantile(&xs, ws, b).unwrap() + 1e-9);
        }

        #[test]
        fn quantile_invariant_under_rescale_and_permutation(
            xs in prop::collection::vec(-100.0f64..100.0, 2..20),
            seed_ws in prop::collection::vec(0.01f64..5.0, 20),
            q in 0.0f64..1.0,
            scale in 0.1f64..100.0,
            rot in 0usize..20,
        ) {
            let ws: Vec<f64> = seed_ws[..xs.len()].to_vec();
            let base = weighted_quantile(&xs, &ws, q).unwrap();
            let scaled: Vec<f64> = ws.iter().map(|w| w * scale).collect();
            prop_assert!((weighted_quantile(&xs, &scaled, q).unwrap() - base).abs() < 1e-9 * (1.0 + base.abs()));
            let r = rot % xs.len();
            let (mut px, mut pw) = (xs.clone(), ws.clone());
            px.rotate_left(r);
            pw.rotate_left(r);
            prop_assert!((weighted_quantile(&px, &pw, q).unwrap() - base).abs() < 1e-9 * (1.0 + base.abs()));
        }

        #[test]
        fn selection_ignores_order(fs in prop::collection::vec(-50.0f64..50.0, 1..8), rot in 0usize..8) {
            let vals: Vec<(usize, f64)> = fs.iter().enumerate().map(|(i, &f)| (i + 1, f)).collect();
            let mut shuffled = vals.clone();
            shuffled.rotate_left(rot % vals.len());
            let (a, b) = (model_select_values(&vals).unwrap(), model_select_values(&shuffled).unwrap());
            prop_assert_eq!(a.best, b.best);
            prop_assert_eq!(a.to_tsv(), b.to_tsv());
        }
    }
}
