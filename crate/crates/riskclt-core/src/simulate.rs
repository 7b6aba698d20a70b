//! Monte Carlo verification of the central limit behavior of plug-in
//! risk estimators.
//!
//! One experiment draws `m` independent samples of each size `n` from a
//! chosen law, estimates the measure on every sample, and standardizes
//! the estimation errors:
//!
//! ```text
//! z_r = (rho_hat_r - rho) / (sigma / sqrt(n))
//! ```
//!
//! with `rho` the population value and `sigma` either the population
//! limiting scale ([`SdMode::Oracle`]) or each replicate's own plug-in
//! scale ([`SdMode::PlugIn`]). If the limit theory holds, the `z_r` look
//! standard normal as `n` grows; the Kolmogorov-Smirnov distance
//! ([`ks_distance`]) against the standard normal quantifies the
//! remaining gap, and a histogram of the standardized errors is recorded
//! for plotting against the limit density.
//!
//! Degenerate situations follow two conventions. When the population
//! scale is infinite (reported as absent by the oracle), no finite
//! normalization exists: the run records a KS distance of 1, sets the
//! degeneracy flag, and attaches a shape-only diagnostic KS computed
//! after standardizing by the replicates' own empirical mean and scale.
//! When the standardized values collapse to a point mass, the run
//! likewise records KS 1 with the flag set.
//!
//! Replication is deterministic and schedule-invariant: replicate `r` at
//! sample-size index `i` always draws from the same counter-based
//! substream of the master seed, so any thread count produces bit-equal
//! reports. The `RISKCLT_THREADS` environment variable pins the pool
//! size; [`run_experiment_with_threads`] does the same in code.

use rayon::prelude::*;

use crate::distributions::{oracle, substream, DistributionSpec, PopulationOracle};
use crate::error::{Result, RiskError};
use crate::measures::{estimate, MeasureSpec};
use crate::scalar::Scalar;
use crate::special::normal_cdf;
use crate::sum::{mean, population_sd};

/// Domain byte separating replicate-sampling substreams from any other
/// consumer of the master seed.
const REPLICATE_DOMAIN: u8 = 1;

/// Which scale standardizes the estimation errors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SdMode {
    /// The population limiting scale, one number for the whole run.
    Oracle,
    /// Each replicate's own plug-in scale estimate.
    PlugIn,
}

/// Full description of one experiment.
#[derive(Clone, Debug)]
pub struct ExperimentConfig<T> {
    /// Law the samples are drawn from.
    pub distribution: DistributionSpec<T>,
    /// Measure under study.
    pub measure: MeasureSpec<T>,
    /// Sample sizes, one run per entry.
    pub sample_sizes: Vec<usize>,
    /// Replicates per run.
    pub replicates: usize,
    /// Master seed; all randomness derives from it.
    pub master_seed: u64,
    /// Standardization mode.
    pub sd_mode: SdMode,
}

/// Equal-width density histogram of the standardized errors.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram<T> {
    /// Bin edges, one more than the number of bins; empty when the run
    /// was degenerate.
    pub edges: Vec<T>,
    /// Density heights (area sums to one over the recorded range).
    pub densities: Vec<T>,
}

impl<T: Scalar> Histogram<T> {
    fn empty() -> Self {
        Histogram {
            edges: Vec::new(),
            densities: Vec::new(),
        }
    }

    fn build(values: &[T], bins: usize) -> Self {
        if values.len() < 2 || bins == 0 {
            return Histogram::empty();
        }
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        for &v in values {
            if v < lo {
                lo = v;
            }
            if v > hi {
                hi = v;
            }
        }
        if !(hi > lo) {
            return Histogram::empty();
        }
        let width = (hi - lo) / T::of_count(bins);
        let mut counts = vec![0usize; bins];
        for &v in values {
            let idx = ((v - lo) / width).as_f64() as usize;
            counts[idx.min(bins - 1)] += 1;
        }
        let total = T::of_count(values.len());
        let edges = (0..=bins).map(|i| lo + T::of_count(i) * width).collect();
        let densities = counts
            .into_iter()
            .map(|c| T::of_count(c) / (total * width))
            .collect();
        Histogram { edges, densities }
    }
}

/// Outcome of all replicates at one sample size.
#[derive(Clone, Debug)]
pub struct RunReport<T> {
    /// Sample size of this run.
    pub n: usize,
    /// Estimates in replicate order (failed replicates omitted).
    pub estimates: Vec<T>,
    /// Failed replicates as (index, reason).
    pub failures: Vec<(usize, String)>,
    /// Kolmogorov-Smirnov distance of the standardized errors against
    /// the standard normal; 1 under a degeneracy convention.
    pub ks: T,
    /// True when a degeneracy convention set `ks` to 1.
    pub ks_degenerate: bool,
    /// Shape-only diagnostic: KS after standardizing by the empirical
    /// mean and scale of the replicates, recorded when the population
    /// scale is absent.
    pub ks_shape_only: Option<T>,
    /// Mean estimation error `mean(rho_hat) - rho`.
    pub bias: T,
    /// Empirical standard deviation of the estimates times `sqrt(n)`.
    pub empirical_sd_scaled: T,
    /// Mean plug-in scale across replicates (plug-in mode only).
    pub mean_plugin_sd: Option<T>,
    /// Histogram of the standardized errors.
    pub histogram: Histogram<T>,
    /// Population value behind the standardization.
    pub overlay_center: T,
    /// Population scale divided by `sqrt(n)`, when finite.
    pub overlay_scale: Option<T>,
}

/// Everything one experiment produced.
#[derive(Clone, Debug)]
pub struct ExperimentReport<T> {
    /// Identifier of the sampled law.
    pub distribution: String,
    /// Identifier of the measure.
    pub measure: String,
    /// Master seed the experiment ran under.
    pub master_seed: u64,
    /// Replicates requested per run.
    pub replicates: usize,
    /// Standardization mode.
    pub sd_mode: SdMode,
    /// Population quantities used for centering and scaling.
    pub oracle_value: T,
    /// Population limiting scale, absent when infinite.
    pub oracle_limit_sd: Option<T>,
    /// Population minimizer when the measure carries one.
    pub oracle_minimizer: Option<Vec<T>>,
    /// One entry per requested sample size.
    pub runs: Vec<RunReport<T>>,
}

impl SdMode {
    /// Stable identifier used in serialized reports.
    pub fn id_string(&self) -> &'static str {
        match self {
            SdMode::Oracle => "oracle",
            SdMode::PlugIn => "plug_in",
        }
    }
}

impl<T: Scalar> ExperimentReport<T> {
    /// Mean estimation error per sample size.
    pub fn bias_summary(&self) -> Vec<(usize, T)> {
        self.runs.iter().map(|r| (r.n, r.bias)).collect()
    }

    /// KS distances per sample size.
    pub fn ks_summary(&self) -> Vec<(usize, T)> {
        self.runs.iter().map(|r| (r.n, r.ks)).collect()
    }
}

/// Kolmogorov-Smirnov distance between the empirical law of `sorted`
/// (ascending) and a continuous cdf.
pub fn ks_distance<T: Scalar>(sorted: &[T], cdf: &dyn Fn(T) -> T) -> T {
    let n = T::of_count(sorted.len());
    let mut worst = T::zero();
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        let hi = T::of_count(i + 1) / n - f;
        let lo = f - T::of_count(i) / n;
        for d in [hi, lo] {
            if d > worst {
                worst = d;
            }
        }
    }
    worst
}

/// KS distance of `values` against the standard normal; sorts a copy.
pub fn ks_to_standard_normal<T: Scalar>(values: &[T]) -> T {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("standardized values are finite"));
    ks_distance(&sorted, &|x| normal_cdf(x))
}

fn run_one_size<T: Scalar>(
    config: &ExperimentConfig<T>,
    oracle_values: &PopulationOracle<T>,
    n_idx: usize,
    n: usize,
) -> RunReport<T> {
    let m = config.replicates;
    let outcomes: Vec<std::result::Result<(T, Option<T>), String>> = (0..m)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(config.master_seed, REPLICATE_DOMAIN, n_idx as u32, r as u32);
            let sample = config
                .distribution
                .sample(&mut rng, n)
                .map_err(|e| e.to_string())?;
            let est = estimate(&config.measure, &sample).map_err(|e| e.to_string())?;
            Ok((est.value, est.limit_sd))
        })
        .collect();

    let mut estimates = Vec::with_capacity(m);
    let mut plugin_sds = Vec::with_capacity(m);
    let mut failures = Vec::new();
    for (r, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok((value, sd)) => {
                estimates.push(value);
                plugin_sds.push(sd);
            }
            Err(reason) => failures.push((r, reason)),
        }
    }

    let root_n = T::of_count(n).sqrt();
    let overlay_center = oracle_values.value;
    let overlay_scale = oracle_values.limit_sd.map(|sd| sd / root_n);

    if estimates.len() < 2 {
        return RunReport {
            n,
            estimates,
            failures,
            ks: T::one(),
            ks_degenerate: true,
            ks_shape_only: None,
            bias: T::nan(),
            empirical_sd_scaled: T::nan(),
            mean_plugin_sd: None,
            histogram: Histogram::empty(),
            overlay_center,
            overlay_scale,
        };
    }

    let bias = mean(&estimates) - oracle_values.value;
    let empirical_sd_scaled = population_sd(&estimates) * root_n;

    let standardized: Option<Vec<T>> = match config.sd_mode {
        SdMode::Oracle => match oracle_values.limit_sd {
            Some(sd) if sd > T::zero() => Some(
                estimates
                    .iter()
                    .map(|&v| (v - oracle_values.value) * root_n / sd)
                    .collect(),
            ),
            _ => None,
        },
        SdMode::PlugIn => {
            let mut z = Vec::with_capacity(estimates.len());
            let mut ok = true;
            for (&v, sd) in estimates.iter().zip(plugin_sds.iter()) {
                match sd {
                    Some(s) if *s > T::zero() => {
                        z.push((v - oracle_values.value) * root_n / *s);
                    }
                    _ => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                Some(z)
            } else {
                None
            }
        }
    };

    let mean_plugin_sd = if config.sd_mode == SdMode::PlugIn {
        let finite: Vec<T> = plugin_sds.iter().filter_map(|s| *s).collect();
        if finite.is_empty() {
            None
        } else {
            Some(mean(&finite))
        }
    } else {
        None
    };

    let bins = (estimates.len() as f64).sqrt().round().max(1.0) as usize;
    match standardized {
        Some(z) => {
            let spread = population_sd(&z);
            if !(spread > T::zero()) {
                RunReport {
                    n,
                    estimates,
                    failures,
                    ks: T::one(),
                    ks_degenerate: true,
                    ks_shape_only: None,
                    bias,
                    empirical_sd_scaled,
                    mean_plugin_sd,
                    histogram: Histogram::empty(),
                    overlay_center,
                    overlay_scale,
                }
            } else {
                let ks = ks_to_standard_normal(&z);
                let histogram = Histogram::build(&z, bins);
                RunReport {
                    n,
                    estimates,
                    failures,
                    ks,
                    ks_degenerate: false,
                    ks_shape_only: None,
                    bias,
                    empirical_sd_scaled,
                    mean_plugin_sd,
                    histogram,
                    overlay_center,
                    overlay_scale,
                }
            }
        }
        None => {
            let center = mean(&estimates);
            let spread = population_sd(&estimates);
            let (shape, histogram) = if spread > T::zero() {
                let z: Vec<T> = estimates.iter().map(|&v| (v - center) / spread).collect();
                (Some(ks_to_standard_normal(&z)), Histogram::build(&z, bins))
            } else {
                (None, Histogram::empty())
            };
            RunReport {
                n,
                estimates,
                failures,
                ks: T::one(),
                ks_degenerate: true,
                ks_shape_only: shape,
                bias,
                empirical_sd_scaled,
                mean_plugin_sd,
                histogram,
                overlay_center,
                overlay_scale,
            }
        }
    }
}

fn run_experiment_inner<T: Scalar>(config: &ExperimentConfig<T>) -> Result<ExperimentReport<T>> {
    config.distribution.validate()?;
    config.measure.validate()?;
    if config.sample_sizes.is_empty() {
        return Err(RiskError::invalid("no sample sizes requested".to_string()));
    }
    if config.sample_sizes.iter().any(|&n| n < 2) {
        return Err(RiskError::invalid("sample sizes must be at least 2".to_string()));
    }
    if config.replicates == 0 {
        return Err(RiskError::invalid("at least one replicate is required".to_string()));
    }
    let oracle_values = oracle(&config.measure, &config.distribution)?;
    let runs = config
        .sample_sizes
        .iter()
        .enumerate()
        .map(|(n_idx, &n)| run_one_size(config, &oracle_values, n_idx, n))
        .collect();
    Ok(ExperimentReport {
        distribution: config.distribution.id_string(),
        measure: config.measure.id_string(),
        master_seed: config.master_seed,
        replicates: config.replicates,
        sd_mode: config.sd_mode,
        oracle_value: oracle_values.value,
        oracle_limit_sd: oracle_values.limit_sd,
        oracle_minimizer: oracle_values.minimizer,
        runs,
    })
}

/// Runs the experiment on a thread pool sized by the `RISKCLT_THREADS`
/// environment variable when set, otherwise on the global pool.
pub fn run_experiment<T: Scalar>(config: &ExperimentConfig<T>) -> Result<ExperimentReport<T>> {
    match std::env::var("RISKCLT_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        Some(threads) if threads > 0 => run_experiment_with_threads(config, threads),
        _ => run_experiment_inner(config),
    }
}

/// Runs the experiment on a dedicated pool of exactly `threads` workers.
/// Reports are bit-identical across thread counts.
pub fn run_experiment_with_threads<T: Scalar>(
    config: &ExperimentConfig<T>,
    threads: usize,
) -> Result<ExperimentReport<T>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| RiskError::invalid(format!("thread pool: {e}")))?;
    pool.install(|| run_experiment_inner(config))
}
