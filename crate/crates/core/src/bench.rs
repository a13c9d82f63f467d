//! Repeated-run benchmarks: free-energy error and credible-interval error
//! against a reference, versus wall-clock time.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::analysis::{credible_interval, endpoint_error, relabel_by_position};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::parallel::pool;
use crate::remc::{remc_fit, RemcConfig};
use crate::report::{RunReport, SamplerKind};
use crate::smc::{smc_fit, SmcConfig};
use crate::spectrum::Spectrum;

/// One sampler configuration of a benchmark grid.
#[derive(Debug, Clone, PartialEq)]
pub enum SamplerConfig {
    Smc(SmcConfig),
    Remc(RemcConfig),
}

impl SamplerConfig {
    pub fn kind(&self) -> SamplerKind {
        match self {
            SamplerConfig::Smc(_) => SamplerKind::Smc,
            SamplerConfig::Remc(_) => SamplerKind::Remc,
        }
    }

    /// Size of the run: particles for SMC, sweeps per replica for REMC.
    pub fn budget(&self) -> usize {
        match self {
            SamplerConfig::Smc(c) => c.particles,
            SamplerConfig::Remc(c) => c.sweeps,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            SamplerConfig::Smc(c) => c.seed,
            SamplerConfig::Remc(c) => c.seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut out = self.clone();
        match &mut out {
            SamplerConfig::Smc(c) => c.seed = seed,
            SamplerConfig::Remc(c) => c.seed = seed,
        }
        out
    }

    fn with_workers(&self, workers: usize) -> Self {
        let mut out = self.clone();
        match &mut out {
            SamplerConfig::Smc(c) => c.workers = workers,
            SamplerConfig::Remc(c) => c.workers = workers,
        }
        out
    }

    pub fn run(&self, spec: &ModelSpec<f64>, data: &Spectrum<f64>) -> Result<RunReport> {
        match self {
            SamplerConfig::Smc(c) => smc_fit(spec, data, c),
            SamplerConfig::Remc(c) => remc_fit(spec, data, c),
        }
    }

    pub fn default_label(&self) -> String {
        match self {
            SamplerConfig::Smc(c) => format!("smc_T{}", c.particles),
            SamplerConfig::Remc(c) => format!("remc_L{}_sweeps{}", c.temperatures, c.sweeps),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub label: String,
    pub sampler: SamplerConfig,
}

impl Condition {
    pub fn new(sampler: SamplerConfig) -> Self {
        Self { label: sampler.default_label(), sampler }
    }
}

/// Where the reference free energy comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum Reference {
    /// Trial-mean F of the SMC condition with the most particles.
    Auto,
    /// Free energy of a given run.
    Report(Box<RunReport>),
    Value(f64),
}

/// Seeds of the trials: `base + trial index`.
pub fn trial_seeds(base: u64, trials: usize) -> Vec<u64> {
    (0..trials as u64).map(|t| base.wrapping_add(t)).collect()
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() < 2 {
        0.0
    } else {
        (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    (mean, std)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub label: String,
    pub sampler: SamplerKind,
    pub budget: usize,
    pub trials: usize,
    /// Runs with a non-finite free energy, left out of every statistic.
    pub excluded: usize,
    pub f_mean: f64,
    pub f_std: f64,
    /// Mean over finite trials of `|F_trial − F_ref|`.
    pub abs_err_mean: f64,
    pub abs_err_std: f64,
    pub time_mean: f64,
    pub time_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchTable {
    pub rows: Vec<BenchRow>,
    pub reference_f: f64,
    pub reference_label: String,
    /// `time(largest REMC) / time(SMC at the same |ΔF|)`, when the SMC curve
    /// brackets that error.
    pub speedup: Option<f64>,
    /// False when trials ran concurrently and timings are not comparable.
    pub timings_comparable: bool,
}

impl BenchTable {
    /// Builds the table from persisted reports; timings are read from the
    /// reports, never re-measured.
    pub fn from_reports(conditions: &[Condition], reports: &[Vec<RunReport>], reference: &Reference, timings_comparable: bool) -> Result<Self> {
        if conditions.len() != reports.len() {
            return Err(Error::Layout { expected: conditions.len(), got: reports.len() });
        }
        let (reference_f, reference_label) = match reference {
            Reference::Value(f) => (*f, "given".to_string()),
            Reference::Report(r) => (r.free_energy, "report".to_string()),
            Reference::Auto => {
                let idx = conditions
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| c.sampler.kind() == SamplerKind::Smc)
                    .max_by_key(|(i, c)| (c.sampler.budget(), std::cmp::Reverse(*i)))
                    .map(|(i, _)| i)
                    .ok_or_else(|| Error::MissingReference("no SMC condition in the grid".into()))?;
                let finite: Vec<f64> = reports[idx].iter().map(|r| r.free_energy).filter(|f| f.is_finite()).collect();
                (mean_std(&finite).0, conditions[idx].label.clone())
            }
        };
        if !reference_f.is_finite() {
            return Err(Error::MissingReference(format!("reference free energy is {reference_f}")));
        }
        let rows: Vec<BenchRow> = conditions
            .iter()
            .zip(reports)
            .map(|(c, runs)| {
                let finite: Vec<&RunReport> = runs.iter().filter(|r| r.free_energy.is_finite()).collect();
                let fs: Vec<f64> = finite.iter().map(|r| r.free_energy).collect();
                let errs: Vec<f64> = fs.iter().map(|f| (f - reference_f).abs()).collect();
                let times: Vec<f64> = finite.iter().map(|r| r.wall_time_s).collect();
                let (f_mean, f_std) = mean_std(&fs);
                let (abs_err_mean, abs_err_std) = mean_std(&errs);
                let (time_mean, time_std) = mean_std(&times);
                BenchRow {
                    label: c.label.clone(),
                    sampler: c.sampler.kind(),
                    budget: c.sampler.budget(),
                    trials: runs.len(),
                    excluded: runs.len() - finite.len(),
                    f_mean,
                    f_std,
                    abs_err_mean,
                    abs_err_std,
                    time_mean,
                    time_std,
                }
            })
            .collect();
        let speedup = speedup(&rows);
        Ok(Self { rows, reference_f, reference_label, speedup, timings_comparable })
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# reference\t{}\t{}\n", self.reference_label, self.reference_f));
        out.push_str(&format!(
            "# speedup\t{}\n",
            self.speedup.map_or_else(|| "NA".to_string(), |s| s.to_string())
        ));
        out.push_str(&format!("# timings_comparable\t{}\n", self.timings_comparable));
        out.push_str("condition\tsampler\tbudget\ttrials\texcluded\tF_mean\tF_std\tabs_dF_mean\tabs_dF_std\ttime_mean\ttime_std\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                r.label, r.sampler, r.budget, r.trials, r.excluded, r.f_mean, r.f_std, r.abs_err_mean, r.abs_err_std, r.time_mean, r.time_std
            ));
        }
        out
    }
}

/// Time at which `curve` (points `(time, error)`) reaches `error`, by linear
/// interpolation in `(log time, log error)` between consecutive points.
pub fn time_at_error(curve: &[(f64, f64)], error: f64) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = curve
        .iter()
        .copied()
        .filter(|(t, e)| *t > 0.0 && *e > 0.0 && t.is_finite() && e.is_finite())
        .collect();
    if !(error > 0.0) || pts.is_empty() {
        return None;
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let le = error.ln();
    for w in pts.windows(2) {
        let (t0, e0) = (w[0].0.ln(), w[0].1.ln());
        let (t1, e1) = (w[1].0.ln(), w[1].1.ln());
        let (lo, hi) = (e0.min(e1), e0.max(e1));
        if le >= lo && le <= hi {
            if e1 == e0 {
                return Some(w[0].0);
            }
            return Some((t0 + (t1 - t0) * (le - e0) / (e1 - e0)).exp());
        }
    }
    pts.iter().find(|p| p.1 == error).map(|p| p.0)
}

fn speedup(rows: &[BenchRow]) -> Option<f64> {
    let remc = rows
        .iter()
        .filter(|r| r.sampler == SamplerKind::Remc && r.abs_err_mean.is_finite())
        .max_by_key(|r| r.budget)?;
    let curve: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.sampler == SamplerKind::Smc)
        .map(|r| (r.time_mean, r.abs_err_mean))
        .collect();
    let t_smc = time_at_error(&curve, remc.abs_err_mean)?;
    Some(remc.time_mean / t_smc)
}

/// Runs every condition `trials` times with seeds `base_seed + trial` and
/// tabulates the results. Trials run one after another unless
/// `parallel_trials` is set, in which case timings are flagged as not
/// comparable. Returns the table and all reports, per condition.
pub fn benchmark(
    spec: &ModelSpec<f64>,
    data: &Spectrum<f64>,
    conditions: &[Condition],
    trials: usize,
    base_seed: u64,
    reference: &Reference,
    parallel_trials: bool,
) -> Result<(BenchTable, Vec<Vec<RunReport>>)> {
    if trials < 2 {
        return Err(Error::config("trials", "a benchmark needs at least two trials"));
    }
    let seeds = trial_seeds(base_seed, trials);
    let mut reports = Vec::with_capacity(conditions.len());
    for c in conditions {
        let runs: Vec<RunReport> = if parallel_trials {
            let workers = pool(0);
            workers.install(|| {
                seeds
                    .par_iter()
                    .map(|&s| c.sampler.with_seed(s).with_workers(1).run(spec, data))
                    .collect::<Result<_>>()
            })?
        } else {
            seeds.iter().map(|&s| c.sampler.with_seed(s).run(spec, data)).collect::<Result<_>>()?
        };
        reports.push(runs);
    }
    let table = BenchTable::from_reports(conditions, &reports, reference, !parallel_trials)?;
    Ok((table, reports))
}

/// One row of a credible-interval error curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CiErrorRow {
    pub condition: String,
    pub time_mean: f64,
    pub time_std: f64,
    pub err_mean: f64,
    pub err_std: f64,
}

/// Columns selected by `param`: an exact name, or a prefix ending in `*`
/// (`mu_*` selects every peak centre).
fn select_columns(names: &[String], param: &str) -> Result<Vec<usize>> {
    let cols: Vec<usize> = match param.strip_suffix('*') {
        Some(prefix) => names.iter().enumerate().filter(|(_, n)| n.starts_with(prefix)).map(|(i, _)| i).collect(),
        None => names.iter().position(|n| n == param).into_iter().collect(),
    };
    if cols.is_empty() {
        return Err(Error::UnknownParameter(param.to_string()));
    }
    Ok(cols)
}

fn draws_of(report: &RunReport, relabel: Option<(usize, usize, usize)>) -> Vec<Vec<f64>> {
    let mut draws = report.posterior.clone();
    if let Some((peaks, stride, mu)) = relabel {
        relabel_by_position(&mut draws, peaks, stride, mu);
    }
    draws
}

/// Equal-tailed intervals of every parameter from the pooled draws of the
/// reference runs.
pub fn reference_intervals(reports: &[RunReport], level: f64, relabel: Option<(usize, usize, usize)>) -> Result<BTreeMap<String, (f64, f64)>> {
    let first = reports.first().ok_or(Error::EmptyInput)?;
    let pooled: Vec<Vec<f64>> = reports.iter().flat_map(|r| draws_of(r, relabel)).collect();
    let ones = vec![1.0; pooled.len()];
    first
        .parameter_names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let col: Vec<f64> = pooled.iter().map(|d| d[j]).collect();
            Ok((name.clone(), credible_interval(&col, &ones, level)?))
        })
        .collect()
}

/// Per condition, mean over trials of the interval endpoint error of
/// `param` (averaged over matched parameters for a `prefix*` pattern).
pub fn ci_error_curve(
    conditions: &[Condition],
    reports: &[Vec<RunReport>],
    reference: &BTreeMap<String, (f64, f64)>,
    param: &str,
    level: f64,
    relabel: Option<(usize, usize, usize)>,
) -> Result<Vec<CiErrorRow>> {
    conditions
        .iter()
        .zip(reports)
        .map(|(c, runs)| {
            let mut errs = Vec::with_capacity(runs.len());
            let mut times = Vec::with_capacity(runs.len());
            for r in runs.iter().filter(|r| r.free_energy.is_finite()) {
                let cols = select_columns(&r.parameter_names, param)?;
                let draws = draws_of(r, relabel);
                let ones = vec![1.0; draws.len()];
                let mut total = 0.0;
                for &j in &cols {
                    let name = &r.parameter_names[j];
                    let reference = reference.get(name).ok_or_else(|| Error::UnknownParameter(name.clone()))?;
                    let col: Vec<f64> = draws.iter().map(|d| d[j]).collect();
                    total += endpoint_error(credible_interval(&col, &ones, level)?, *reference);
                }
                errs.push(total / cols.len() as f64);
                times.push(r.wall_time_s);
            }
            let (err_mean, err_std) = mean_std(&errs);
            let (time_mean, time_std) = mean_std(&times);
            Ok(CiErrorRow { condition: c.label.clone(), time_mean, time_std, err_mean, err_std })
        })
        .collect()
}

pub fn ci_error_tsv(rows: &[CiErrorRow]) -> String {
    let mut out = String::from("condition\ttime_mean\ttime_std\terr_mean\terr_std\n");
    for r in rows {
        out.push_str(&format!("{}\t{}\t{}\t{}\t{}\n", r.condition, r.time_mean, r.time_std, r.err_mean, r.err_std));
    }
    out
}
