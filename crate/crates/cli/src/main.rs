use std::fmt::Write as _;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bayespec::analysis::{relabel_by_position, summarize};
use bayespec::synthetic::{gen_gaussian_mixture, gen_xps, gen_xrd, Dataset};
use bayespec::{benchmark, model_select, Error, FitConfig, Reference, RunReport, Spectrum};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bayespec", version, about = "Bayesian spectral deconvolution with SMC and replica-exchange samplers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic spectrum and its truth table.
    Generate {
        #[arg(long, value_enum)]
        family: GenFamily,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory; receives `spectrum.txt` and `truth.toml`.
        #[arg(long)]
        out: PathBuf,
        /// Number of diffraction angles (xrd only).
        #[arg(long, default_value_t = 1000)]
        n: usize,
        /// Number of true peaks (xps only).
        #[arg(long, default_value_t = 7)]
        k_true: usize,
    },
    /// Fit one model and write the run report.
    Fit {
        #[arg(long, value_enum)]
        sampler: Sampler,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit every K in a range and pick the one with the smallest free energy.
    ModelSelect {
        /// Inclusive range such as `6..8`.
        #[arg(long, value_parser = parse_k_range)]
        k_range: RangeInclusive<usize>,
        #[arg(long, value_enum, default_value_t = Sampler::Smc)]
        sampler: Sampler,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Independent runs per K, seeded `seed`, `seed + 1`, ...
        #[arg(long, default_value_t = 1)]
        trials: usize,
    },
    /// Run the `[bench]` grid of the config repeatedly and tabulate accuracy and time.
    Benchmark {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        /// Run trials concurrently; timings are then marked as not comparable.
        #[arg(long)]
        parallel_trials: bool,
        /// Base seed; defaults to the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum GenFamily {
    Gm3,
    Gm10,
    Gm30,
    Xrd,
    Xps,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Sampler {
    Smc,
    Remc,
}

fn parse_k_range(s: &str) -> Result<RangeInclusive<usize>, String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected `a..b`, got `{s}`"))?;
    let b = b.strip_prefix('=').unwrap_or(b);
    let lo: usize = a.trim().parse().map_err(|e| format!("bad lower bound: {e}"))?;
    let hi: usize = b.trim().parse().map_err(|e| format!("bad upper bound: {e}"))?;
    if lo == 0 || lo > hi {
        return Err(format!("empty or zero-based range `{s}`"));
    }
    Ok(lo..=hi)
}

enum Failure {
    Core(Error),
    NonFinite(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
        Err(Failure::NonFinite(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Generate { family, seed, out, n, k_true } => generate(family, seed, &out, n, k_true),
        Command::Fit { sampler, config, data, out } => {
            let (cfg, spectrum) = load(&config, &data)?;
            let report = fit(&cfg, &spectrum, sampler)?;
            report.write(&out)?;
            if let Some(summary) = summary_tsv(&cfg, &spectrum, &report)? {
                std::fs::write(with_suffix(&out, "summary.tsv"), summary)?;
            }
            println!("F = {}", report.free_energy);
            if report.non_finite {
                return Err(Failure::NonFinite(format!(
                    "free energy is not finite ({})",
                    report.diagnostics.join("; ")
                )));
            }
            Ok(())
        }
        Command::ModelSelect { k_range, sampler, config, data, out, trials } => {
            let (cfg, spectrum) = load(&config, &data)?;
            if trials == 0 {
                return Err(Error::Config { key: "trials".into(), message: "must be at least 1".into() }.into());
            }
            let mut runs = Vec::new();
            for k in k_range {
                let mut per_k = cfg.clone();
                per_k.k = Some(k);
                for t in 0..trials as u64 {
                    per_k.seed = cfg.seed + t;
                    let report = fit(&per_k, &spectrum, sampler)?;
                    eprintln!("K = {k}, trial {t}: F = {}", report.free_energy);
                    runs.push((k, report));
                }
            }
            let selection = model_select(&runs)?;
            let mut text = selection.to_tsv();
            writeln!(text, "# best_K\t{}", selection.best).unwrap();
            std::fs::write(&out, text)?;
            println!("best K = {}", selection.best);
            if selection.table.iter().all(|r| !r.f_mean.is_finite()) {
                return Err(Failure::NonFinite("no K produced a finite free energy".into()));
            }
            Ok(())
        }
        Command::Benchmark { config, data, out, trials, parallel_trials, seed } => {
            let (cfg, spectrum) = load(&config, &data)?;
            let spec = cfg.build_spec(&spectrum)?;
            let conditions = cfg.bench_conditions()?;
            let base = seed.unwrap_or(cfg.seed);
            let (table, _) = benchmark(&spec, &spectrum, &conditions, trials, base, &Reference::Auto, parallel_trials)?;
            std::fs::write(&out, table.to_tsv())?;
            print!("{}", table.to_tsv());
            if !table.reference_f.is_finite() {
                return Err(Failure::NonFinite("reference free energy is not finite".into()));
            }
            Ok(())
        }
    }
}

fn generate(family: GenFamily, seed: u64, out: &Path, n: usize, k_true: usize) -> Result<(), Failure> {
    let data: Dataset<f64> = match family {
        GenFamily::Gm3 => gen_gaussian_mixture(3, seed)?,
        GenFamily::Gm10 => gen_gaussian_mixture(10, seed)?,
        GenFamily::Gm30 => gen_gaussian_mixture(30, seed)?,
        GenFamily::Xrd => gen_xrd(n, seed)?,
        GenFamily::Xps => gen_xps(k_true, seed)?,
    };
    std::fs::create_dir_all(out)?;
    data.spectrum.write(&out.join("spectrum.txt"))?;
    data.truth.write(&out.join("truth.toml"))?;
    if let GenFamily::Xrd = family {
        std::fs::write(out.join("phases.csv"), bayespec::synthetic::TIO2_REFLECTIONS)?;
    }
    println!("wrote {} points to {}", data.spectrum.len(), out.display());
    Ok(())
}

fn load(config: &Path, data: &Path) -> Result<(FitConfig, Spectrum<f64>), Failure> {
    let cfg = FitConfig::read(config)?;
    let spectrum = Spectrum::read(data, cfg.family.axis())?;
    Ok((cfg, spectrum))
}

fn fit(cfg: &FitConfig, data: &Spectrum<f64>, sampler: Sampler) -> Result<RunReport, Failure> {
    let spec = cfg.build_spec(data)?;
    let mut report = match sampler {
        Sampler::Smc => bayespec::smc_fit(&spec, data, &cfg.smc_config()?)?,
        Sampler::Remc => bayespec::remc_fit(&spec, data, &cfg.remc_config()?)?,
    };
    report.config = cfg.text.clone();
    Ok(report)
}

/// Per-parameter posterior summary, with peaks ordered by position within
/// each draw for the peak families.
fn summary_tsv(cfg: &FitConfig, data: &Spectrum<f64>, report: &RunReport) -> Result<Option<String>, Failure> {
    if report.posterior.is_empty() {
        return Ok(None);
    }
    let spec = cfg.build_spec(data)?;
    let mut draws = report.posterior.clone();
    if let Some((peaks, stride, mu)) = spec.family.exchangeable_peaks() {
        relabel_by_position(&mut draws, peaks, stride, mu);
    }
    let mut text = String::from("parameter\tmean\tstd\tci95_lo\tci95_hi\tci99_lo\tci99_hi\n");
    for s in summarize(&report.parameter_names, &draws)? {
        writeln!(text, "{}\t{}\t{}\t{}\t{}\t{}\t{}", s.name, s.mean, s.std, s.ci95.0, s.ci95.1, s.ci99.0, s.ci99.1).unwrap();
    }
    Ok(Some(text))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_stem().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".");
    name.push(suffix);
    path.with_file_name(name)
}
