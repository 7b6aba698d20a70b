//! Command-line front end for composite risk estimation.
//!
//! Five subcommands cover the workflow: `estimate` evaluates a risk
//! measure on a sample, `asymptotics` adds the delta-method confidence
//! interval, `oracle` computes population values by numerical
//! integration, `coherence` checks the coherence axioms on a sample,
//! and `simulate` replicates estimators across seeded substreams and
//! compares the standardized errors against the standard normal.
//!
//! All machine output is deterministic `key = value` text with floats
//! at 17 significant digits; identical arguments and seed produce byte
//! identical output. Exit code 0 means success, 2 a usage or parameter
//! validation error (one-line diagnostic on stderr), 1 a runtime
//! failure. The `RISKCLT_THREADS` environment variable bounds the
//! simulation pool; all other randomness flows from `--seed`.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use riskclt_core::distributions::{oracle, substream, DistributionSpec};
use riskclt_core::measures::{coherence_check, estimate, MeasureSpec};
use riskclt_core::report::{
    format_float, format_float_opt, parse_key_values, render_flat_table, render_report,
};
use riskclt_core::sample::SampleSet;
use riskclt_core::simulate::{run_experiment, ExperimentConfig, SdMode};
use riskclt_core::special::normal_quantile;

/// Estimators and Monte Carlo verification for composite risk measures.
#[derive(Parser)]
#[command(name = "riskclt", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate a risk measure on a sample.
    Estimate(EstimateArgs),
    /// Estimate with the delta-method standard error and confidence interval.
    Asymptotics(AsymptoticsArgs),
    /// Compute population value, minimizer, and limiting sd by integration.
    Oracle(OracleArgs),
    /// Check translation, homogeneity, monotonicity, and convexity on a sample.
    Coherence(CoherenceArgs),
    /// Replicate estimators across seeds and compare against the normal limit.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct MeasureArgs {
    /// Risk measure: semidev, avar, or hmcr.
    #[arg(long, value_name = "NAME")]
    measure: String,
    /// Moment order p (semidev: p >= 1; hmcr: p >= 1).
    #[arg(long, value_name = "P")]
    p: Option<f64>,
    /// Semideviation weight kappa in [0, 1] (semidev only).
    #[arg(long, value_name = "KAPPA")]
    kappa: Option<f64>,
    /// Tail level alpha in (0, 1] (avar only).
    #[arg(long, value_name = "ALPHA")]
    alpha: Option<f64>,
    /// Scale multiplier c > 1 (hmcr only).
    #[arg(long, value_name = "C")]
    c: Option<f64>,
}

#[derive(Args)]
struct SourceArgs {
    /// CSV sample file, one observation per row, header optional.
    /// Alone it is the sample itself; with --dist empirical it holds the
    /// atoms of the law to resample from.
    #[arg(long, value_name = "FILE")]
    data: Option<PathBuf>,
    /// Sampling law: normal, student_t, or empirical.
    #[arg(long, value_name = "NAME")]
    dist: Option<String>,
    /// Mean of the normal law.
    #[arg(long, value_name = "MEAN")]
    mean: Option<f64>,
    /// Standard deviation of the normal law.
    #[arg(long, value_name = "SD")]
    sd: Option<f64>,
    /// Degrees of freedom nu of the Student t law.
    #[arg(long, value_name = "NU")]
    nu: Option<f64>,
    /// Location shift of the Student t law (default 0).
    #[arg(long, value_name = "SHIFT")]
    shift: Option<f64>,
    /// Sample size to draw when a law is given.
    #[arg(long, value_name = "N")]
    n: Option<usize>,
    /// Master seed for all randomness.
    #[arg(long, value_name = "SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct OutputArg {
    /// Write output to this file instead of stdout.
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    measure: MeasureArgs,
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    out: OutputArg,
}

#[derive(Args)]
struct AsymptoticsArgs {
    #[command(flatten)]
    measure: MeasureArgs,
    #[command(flatten)]
    source: SourceArgs,
    /// Confidence level in (0, 1) for the normal interval.
    #[arg(long, value_name = "LEVEL", default_value_t = 0.95)]
    level: f64,
    #[command(flatten)]
    out: OutputArg,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    measure: MeasureArgs,
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    out: OutputArg,
}

#[derive(Args)]
struct CoherenceArgs {
    #[command(flatten)]
    measure: MeasureArgs,
    #[command(flatten)]
    source: SourceArgs,
    /// Scaling factor for the homogeneity check.
    #[arg(long, value_name = "LAMBDA", default_value_t = 2.0)]
    lambda: f64,
    /// Translation amount for the equivariance check.
    #[arg(long, value_name = "SHIFT", default_value_t = 1.0)]
    coherence_shift: f64,
    /// Tolerance for the pass verdict.
    #[arg(long, value_name = "TOL", default_value_t = 1e-8)]
    tol: f64,
    #[command(flatten)]
    out: OutputArg,
}

#[derive(Args)]
struct SimulateArgs {
    /// Configuration file of key = value lines; flags override it.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Risk measure: semidev, avar, or hmcr.
    #[arg(long, value_name = "NAME")]
    measure: Option<String>,
    /// Moment order p (semidev, hmcr).
    #[arg(long, value_name = "P")]
    p: Option<f64>,
    /// Semideviation weight kappa in [0, 1] (semidev only).
    #[arg(long, value_name = "KAPPA")]
    kappa: Option<f64>,
    /// Tail level alpha in (0, 1] (avar only).
    #[arg(long, value_name = "ALPHA")]
    alpha: Option<f64>,
    /// Scale multiplier c > 1 (hmcr only).
    #[arg(long, value_name = "C")]
    c: Option<f64>,
    /// Sampling law: normal, student_t, or empirical.
    #[arg(long, value_name = "NAME")]
    dist: Option<String>,
    /// Mean of the normal law.
    #[arg(long, value_name = "MEAN")]
    mean: Option<f64>,
    /// Standard deviation of the normal law.
    #[arg(long, value_name = "SD")]
    sd: Option<f64>,
    /// Degrees of freedom nu of the Student t law.
    #[arg(long, value_name = "NU")]
    nu: Option<f64>,
    /// Location shift of the Student t law (default 0).
    #[arg(long, value_name = "SHIFT")]
    shift: Option<f64>,
    /// CSV file with the atoms of an empirical law.
    #[arg(long, value_name = "FILE")]
    data: Option<PathBuf>,
    /// Comma-separated sample sizes, e.g. 1000,2000,4000,8000.
    #[arg(long, value_name = "LIST")]
    sizes: Option<String>,
    /// Replicates per sample size.
    #[arg(long, value_name = "M")]
    m: Option<usize>,
    /// Master seed for all randomness.
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,
    /// Standardization scale: oracle or plug_in.
    #[arg(long, value_name = "MODE")]
    sd_mode: Option<String>,
    /// Output format: structured-text or table.
    #[arg(long, value_name = "FORMAT")]
    format: Option<String>,
    #[command(flatten)]
    out: OutputArg,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    fn usage(msg: impl Into<String>) -> Self {
        Failure::Usage(msg.into())
    }

    fn runtime(msg: impl Into<String>) -> Self {
        Failure::Runtime(msg.into())
    }
}

fn usage_from_core(e: riskclt_core::RiskError) -> Failure {
    Failure::Usage(e.to_string())
}

fn runtime_from_core(e: riskclt_core::RiskError) -> Failure {
    Failure::Runtime(e.to_string())
}

impl MeasureArgs {
    fn build(&self) -> Result<MeasureSpec<f64>, Failure> {
        build_measure(
            &self.measure,
            self.p,
            self.kappa,
            self.alpha,
            self.c,
        )
    }
}

fn build_measure(
    name: &str,
    p: Option<f64>,
    kappa: Option<f64>,
    alpha: Option<f64>,
    c: Option<f64>,
) -> Result<MeasureSpec<f64>, Failure> {
    let require = |value: Option<f64>, flag: &str| {
        value.ok_or_else(|| Failure::usage(format!("--measure {name} requires --{flag}")))
    };
    let forbid = |value: Option<f64>, flag: &str| {
        if value.is_some() {
            Err(Failure::usage(format!(
                "--{flag} does not apply to --measure {name}"
            )))
        } else {
            Ok(())
        }
    };
    let spec = match name {
        "semidev" => {
            forbid(alpha, "alpha")?;
            forbid(c, "c")?;
            MeasureSpec::MeanSemideviation {
                p: require(p, "p")?,
                kappa: require(kappa, "kappa")?,
            }
        }
        "avar" => {
            forbid(p, "p")?;
            forbid(kappa, "kappa")?;
            forbid(c, "c")?;
            MeasureSpec::AvgValueAtRisk {
                alpha: require(alpha, "alpha")?,
            }
        }
        "hmcr" => {
            forbid(alpha, "alpha")?;
            forbid(kappa, "kappa")?;
            MeasureSpec::HigherOrderInverse {
                p: require(p, "p")?,
                c: require(c, "c")?,
            }
        }
        other => {
            return Err(Failure::usage(format!(
                "unknown measure {other:?}; expected semidev, avar, or hmcr"
            )))
        }
    };
    spec.validate().map_err(usage_from_core)?;
    Ok(spec)
}

fn read_scalar_csv(path: &Path) -> Result<SampleSet<f64>, Failure> {
    let s: SampleSet<f64> = SampleSet::read_csv(path).map_err(runtime_from_core)?;
    if s.dim() != 1 {
        return Err(Failure::runtime(format!(
            "{}: expected one column, found {}",
            path.display(),
            s.dim()
        )));
    }
    Ok(s)
}

fn build_law(
    name: &str,
    mean: Option<f64>,
    sd: Option<f64>,
    nu: Option<f64>,
    shift: Option<f64>,
    data: Option<&Path>,
) -> Result<DistributionSpec<f64>, Failure> {
    let require = |value: Option<f64>, flag: &str| {
        value.ok_or_else(|| Failure::usage(format!("--dist {name} requires --{flag}")))
    };
    let spec = match name {
        "normal" => DistributionSpec::Normal {
            mean: require(mean, "mean")?,
            sd: require(sd, "sd")?,
        },
        "student_t" => DistributionSpec::StudentT {
            nu: require(nu, "nu")?,
            shift: shift.unwrap_or(0.0),
        },
        "empirical" => {
            let path = data.ok_or_else(|| {
                Failure::usage("--dist empirical requires --data with the atoms")
            })?;
            let s = read_scalar_csv(path)?;
            DistributionSpec::Empirical {
                values: s.scalars().to_vec(),
            }
        }
        other => {
            return Err(Failure::usage(format!(
                "unknown distribution {other:?}; expected normal, student_t, or empirical"
            )))
        }
    };
    spec.validate().map_err(usage_from_core)?;
    Ok(spec)
}

impl SourceArgs {
    fn law(&self) -> Result<DistributionSpec<f64>, Failure> {
        let name = self
            .dist
            .as_deref()
            .ok_or_else(|| Failure::usage("a --dist law is required here"))?;
        build_law(name, self.mean, self.sd, self.nu, self.shift, self.data.as_deref())
    }

    /// The sample a subcommand operates on, plus a stable description
    /// of where it came from.
    fn sample(&self) -> Result<(SampleSet<f64>, String), Failure> {
        match (&self.data, &self.dist) {
            (Some(path), None) => {
                if self.n.is_some() {
                    return Err(Failure::usage(
                        "--n applies only when sampling from --dist",
                    ));
                }
                let s = read_scalar_csv(path)?;
                Ok((s, format!("file({})", path.display())))
            }
            (_, Some(_)) => {
                let law = self.law()?;
                let n = self.n.ok_or_else(|| {
                    Failure::usage("sampling from --dist requires --n")
                })?;
                let mut rng = substream(self.seed, 0, 0, 0);
                let s = law.sample(&mut rng, n).map_err(runtime_from_core)?;
                Ok((s, format!("{} n={} seed={}", law.id_string(), n, self.seed)))
            }
            (None, None) => Err(Failure::usage(
                "provide a sample with --data or a law with --dist",
            )),
        }
    }
}

fn write_output(out: &OutputArg, text: &str) -> Result<(), Failure> {
    match &out.output {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Failure::runtime(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn minimizer_line(minimizer: &Option<Vec<f64>>) -> String {
    match minimizer {
        Some(z) => z
            .iter()
            .map(|&v| format_float(v))
            .collect::<Vec<_>>()
            .join(","),
        None => "none".to_string(),
    }
}

fn run_estimate(args: &EstimateArgs) -> Result<(), Failure> {
    let spec = args.measure.build()?;
    let (sample, input) = args.source.sample()?;
    let est = estimate(&spec, &sample).map_err(runtime_from_core)?;
    let text = format!(
        "format = riskclt-estimate-v1\n\
         measure = {}\n\
         input = {}\n\
         n = {}\n\
         value = {}\n\
         minimizer = {}\n\
         limit_sd = {}\n\
         tie_warning = {}\n",
        est.measure,
        input,
        est.n,
        format_float(est.value),
        minimizer_line(&est.minimizer),
        format_float_opt(est.limit_sd),
        est.tie_warning,
    );
    write_output(&args.out, &text)
}

fn run_asymptotics(args: &AsymptoticsArgs) -> Result<(), Failure> {
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(Failure::usage("--level must lie strictly between 0 and 1"));
    }
    let spec = args.measure.build()?;
    let (sample, input) = args.source.sample()?;
    let est = estimate(&spec, &sample).map_err(runtime_from_core)?;
    let root_n = (est.n as f64).sqrt();
    let (se, lo, hi) = match est.limit_sd {
        Some(sd) => {
            let q = normal_quantile(0.5 + args.level / 2.0).map_err(runtime_from_core)?;
            let se = sd / root_n;
            (Some(se), Some(est.value - q * se), Some(est.value + q * se))
        }
        None => (None, None, None),
    };
    let text = format!(
        "format = riskclt-asymptotics-v1\n\
         measure = {}\n\
         input = {}\n\
         n = {}\n\
         value = {}\n\
         minimizer = {}\n\
         limit_sd = {}\n\
         standard_error = {}\n\
         level = {}\n\
         ci_lo = {}\n\
         ci_hi = {}\n",
        est.measure,
        input,
        est.n,
        format_float(est.value),
        minimizer_line(&est.minimizer),
        format_float_opt(est.limit_sd),
        format_float_opt(se),
        format_float(args.level),
        format_float_opt(lo),
        format_float_opt(hi),
    );
    write_output(&args.out, &text)
}

fn run_oracle(args: &OracleArgs) -> Result<(), Failure> {
    if args.source.n.is_some() {
        return Err(Failure::usage("--n does not apply: the oracle works on the population"));
    }
    let spec = args.measure.build()?;
    let law = args.source.law()?;
    let answer = oracle(&spec, &law).map_err(runtime_from_core)?;
    let text = format!(
        "format = riskclt-oracle-v1\n\
         measure = {}\n\
         distribution = {}\n\
         value = {}\n\
         minimizer = {}\n\
         limit_sd = {}\n",
        spec.id_string(),
        law.id_string(),
        format_float(answer.value),
        minimizer_line(&answer.minimizer),
        format_float_opt(answer.limit_sd),
    );
    write_output(&args.out, &text)
}

fn run_coherence(args: &CoherenceArgs) -> Result<(), Failure> {
    let spec = args.measure.build()?;
    let (sample, input) = args.source.sample()?;
    let report =
        coherence_check(&spec, &sample, args.lambda, args.coherence_shift)
            .map_err(runtime_from_core)?;
    let text = format!(
        "format = riskclt-coherence-v1\n\
         measure = {}\n\
         input = {}\n\
         n = {}\n\
         lambda = {}\n\
         coherence_shift = {}\n\
         translation_residual = {}\n\
         homogeneity_residual = {}\n\
         monotonicity_gap = {}\n\
         convexity_gap = {}\n\
         tolerance = {}\n\
         passes = {}\n",
        spec.id_string(),
        input,
        sample.len(),
        format_float(args.lambda),
        format_float(args.coherence_shift),
        format_float(report.translation_residual),
        format_float(report.homogeneity_residual),
        format_float(report.monotonicity_gap),
        format_float(report.convexity_gap),
        format_float(args.tol),
        report.passes(args.tol),
    );
    write_output(&args.out, &text)
}

/// Settings for one simulation, merged from the config file and flags
/// (flags win).
struct SimulationPlan {
    measure: MeasureSpec<f64>,
    law: DistributionSpec<f64>,
    sizes: Vec<usize>,
    replicates: usize,
    seed: u64,
    sd_mode: SdMode,
    format: String,
}

fn parse_sizes(text: &str) -> Result<Vec<usize>, Failure> {
    text.split(',')
        .map(|piece| {
            piece
                .trim()
                .parse::<usize>()
                .map_err(|_| Failure::usage(format!("bad sample size {piece:?} in sizes list")))
        })
        .collect()
}

fn resolve_plan(args: &SimulateArgs) -> Result<SimulationPlan, Failure> {
    let mut cfg: std::collections::BTreeMap<String, String> = std::collections::BTreeMap::new();
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?;
        let known = [
            "measure", "p", "kappa", "alpha", "c", "dist", "mean", "sd", "nu", "shift",
            "data", "sizes", "m", "seed", "sd_mode", "format",
        ];
        for (key, value) in parse_key_values(&text).map_err(usage_from_core)? {
            if !known.contains(&key.as_str()) {
                return Err(Failure::usage(format!(
                    "{}: unknown configuration key {key:?}",
                    path.display()
                )));
            }
            cfg.insert(key, value);
        }
    }
    let cfg_f64 = |key: &str| -> Result<Option<f64>, Failure> {
        cfg.get(key)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| Failure::usage(format!("configuration key {key} = {v:?} is not a number")))
            })
            .transpose()
    };

    let measure_name = args
        .measure
        .clone()
        .or_else(|| cfg.get("measure").cloned())
        .ok_or_else(|| Failure::usage("simulate needs --measure (flag or config)"))?;
    let measure = build_measure(
        &measure_name,
        args.p.or(cfg_f64("p")?),
        args.kappa.or(cfg_f64("kappa")?),
        args.alpha.or(cfg_f64("alpha")?),
        args.c.or(cfg_f64("c")?),
    )?;

    let dist_name = args
        .dist
        .clone()
        .or_else(|| cfg.get("dist").cloned())
        .ok_or_else(|| Failure::usage("simulate needs --dist (flag or config)"))?;
    let data = args
        .data
        .clone()
        .or_else(|| cfg.get("data").map(PathBuf::from));
    let law = build_law(
        &dist_name,
        args.mean.or(cfg_f64("mean")?),
        args.sd.or(cfg_f64("sd")?),
        args.nu.or(cfg_f64("nu")?),
        args.shift.or(cfg_f64("shift")?),
        data.as_deref(),
    )?;

    let sizes_text = args
        .sizes
        .clone()
        .or_else(|| cfg.get("sizes").cloned())
        .ok_or_else(|| Failure::usage("simulate needs --sizes (flag or config)"))?;
    let sizes = parse_sizes(&sizes_text)?;

    let replicates = match (args.m, cfg.get("m")) {
        (Some(m), _) => m,
        (None, Some(v)) => v
            .parse::<usize>()
            .map_err(|_| Failure::usage(format!("configuration key m = {v:?} is not a count")))?,
        (None, None) => return Err(Failure::usage("simulate needs --m (flag or config)")),
    };

    let seed = match (args.seed, cfg.get("seed")) {
        (Some(s), _) => s,
        (None, Some(v)) => v
            .parse::<u64>()
            .map_err(|_| Failure::usage(format!("configuration key seed = {v:?} is not a seed")))?,
        (None, None) => 0,
    };

    let mode_text = args
        .sd_mode
        .clone()
        .or_else(|| cfg.get("sd_mode").cloned())
        .unwrap_or_else(|| "oracle".to_string());
    let sd_mode = match mode_text.as_str() {
        "oracle" => SdMode::Oracle,
        "plug_in" => SdMode::PlugIn,
        other => {
            return Err(Failure::usage(format!(
                "unknown sd mode {other:?}; expected oracle or plug_in"
            )))
        }
    };

    let format = args
        .format
        .clone()
        .or_else(|| cfg.get("format").cloned())
        .unwrap_or_else(|| "structured-text".to_string());
    if format != "structured-text" && format != "table" {
        return Err(Failure::usage(format!(
            "unknown format {format:?}; expected structured-text or table"
        )));
    }

    Ok(SimulationPlan {
        measure,
        law,
        sizes,
        replicates,
        seed,
        sd_mode,
        format,
    })
}

fn run_simulate(args: &SimulateArgs) -> Result<(), Failure> {
    let plan = resolve_plan(args)?;
    let config = ExperimentConfig {
        distribution: plan.law,
        measure: plan.measure,
        sample_sizes: plan.sizes,
        replicates: plan.replicates,
        master_seed: plan.seed,
        sd_mode: plan.sd_mode,
    };
    let started = std::time::Instant::now();
    let report = run_experiment(&config).map_err(runtime_from_core)?;
    eprintln!(
        "simulate: {} runs x {} replicates in {:.2}s",
        report.runs.len(),
        report.replicates,
        started.elapsed().as_secs_f64()
    );
    let text = match plan.format.as_str() {
        "table" => render_flat_table(&report),
        _ => render_report(&report),
    };
    write_output(&args.out, &text)
}

fn run() -> i32 {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Estimate(args) => run_estimate(args),
        Command::Asymptotics(args) => run_asymptotics(args),
        Command::Oracle(args) => run_oracle(args),
        Command::Coherence(args) => run_coherence(args),
        Command::Simulate(args) => run_simulate(args),
    };
    match outcome {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

fn main() {
    std::process::exit(run());
}
