//! Deterministic text serialization of experiment results.
//!
//! Reports are flat `key = value` documents with one `[run n=...]`
//! section per sample size. Floats are written in scientific notation
//! with 17 significant digits, which round-trips every finite double
//! exactly, and arrays are comma-separated on a single line. Rendering
//! the same report twice yields byte-identical text, so report files
//! can be diffed and checked into regression suites. Wall-clock timing
//! never enters the rendered text for the same reason.
//!
//! The same module parses the `key = value` grammar back into pairs for
//! configuration files, and renders a flat per-replicate table for
//! spreadsheet import.

use crate::error::{Result, RiskError};
use crate::scalar::Scalar;
use crate::simulate::{ExperimentReport, RunReport};

/// Formats one float with 17 significant digits; round-trips exactly.
pub fn format_float<T: Scalar>(v: T) -> String {
    format!("{:.16e}", v.as_f64())
}

/// Formats an optional float, writing `none` when absent.
pub fn format_float_opt<T: Scalar>(v: Option<T>) -> String {
    match v {
        Some(x) => format_float(x),
        None => "none".to_string(),
    }
}

fn format_array<T: Scalar>(values: &[T]) -> String {
    values
        .iter()
        .map(|&v| format_float(v))
        .collect::<Vec<_>>()
        .join(",")
}

/// Replicate indices that produced the estimates of `run`, in order.
/// Failed replicates are skipped, so the `i`-th surviving index labels
/// `run.estimates[i]`.
fn surviving_replicates<T>(run: &RunReport<T>, replicates: usize) -> Vec<usize> {
    let mut failed = vec![false; replicates];
    for &(r, _) in &run.failures {
        if r < replicates {
            failed[r] = true;
        }
    }
    (0..replicates).filter(|&r| !failed[r]).collect()
}

/// Renders the full experiment report as deterministic key = value text.
pub fn render_report<T: Scalar>(report: &ExperimentReport<T>) -> String {
    let mut out = String::new();
    let mut push = |line: String| {
        out.push_str(&line);
        out.push('\n');
    };
    push("format = riskclt-experiment-v1".to_string());
    push(format!("distribution = {}", report.distribution));
    push(format!("measure = {}", report.measure));
    push(format!("master_seed = {}", report.master_seed));
    push(format!("replicates = {}", report.replicates));
    push(format!("sd_mode = {}", report.sd_mode.id_string()));
    push(format!("oracle_value = {}", format_float(report.oracle_value)));
    push(format!(
        "oracle_limit_sd = {}",
        format_float_opt(report.oracle_limit_sd)
    ));
    match &report.oracle_minimizer {
        Some(z) => push(format!("oracle_minimizer = {}", format_array(z))),
        None => push("oracle_minimizer = none".to_string()),
    }
    for run in &report.runs {
        push(String::new());
        push(format!("[run n={}]", run.n));
        push(format!("ks = {}", format_float(run.ks)));
        push(format!("ks_degenerate = {}", run.ks_degenerate));
        push(format!(
            "ks_shape_only = {}",
            format_float_opt(run.ks_shape_only)
        ));
        push(format!("bias = {}", format_float(run.bias)));
        push(format!(
            "empirical_sd_scaled = {}",
            format_float(run.empirical_sd_scaled)
        ));
        push(format!(
            "mean_plugin_sd = {}",
            format_float_opt(run.mean_plugin_sd)
        ));
        push(format!("overlay_center = {}", format_float(run.overlay_center)));
        push(format!(
            "overlay_scale = {}",
            format_float_opt(run.overlay_scale)
        ));
        push(format!("failures = {}", run.failures.len()));
        for (r, reason) in &run.failures {
            push(format!("failure_{} = {}", r, reason.replace('\n', " ")));
        }
        push(format!(
            "histogram_edges = {}",
            format_array(&run.histogram.edges)
        ));
        push(format!(
            "histogram_densities = {}",
            format_array(&run.histogram.densities)
        ));
        push(format!("estimates = {}", format_array(&run.estimates)));
    }
    out
}

/// Renders a flat tab-separated table with one row per surviving
/// replicate: sample size, replicate index, estimate.
pub fn render_flat_table<T: Scalar>(report: &ExperimentReport<T>) -> String {
    let mut out = String::from("n\treplicate\testimate\n");
    for run in &report.runs {
        let ids = surviving_replicates(run, report.replicates);
        for (id, &value) in ids.iter().zip(run.estimates.iter()) {
            out.push_str(&format!("{}\t{}\t{}\n", run.n, id, format_float(value)));
        }
    }
    out
}

/// Renders a short human-oriented summary, one line per run.
pub fn render_summary<T: Scalar>(report: &ExperimentReport<T>) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{} under {} (m = {}, sd mode {})\n",
        report.measure,
        report.distribution,
        report.replicates,
        report.sd_mode.id_string()
    ));
    out.push_str(&format!(
        "population value {:.6}, limit sd {}\n",
        report.oracle_value.as_f64(),
        match report.oracle_limit_sd {
            Some(sd) => format!("{:.6}", sd.as_f64()),
            None => "infinite".to_string(),
        }
    ));
    for run in &report.runs {
        let flag = if run.ks_degenerate {
            match run.ks_shape_only {
                Some(shape) => format!(" degenerate, shape-only ks {:.4}", shape.as_f64()),
                None => " degenerate".to_string(),
            }
        } else {
            String::new()
        };
        out.push_str(&format!(
            "n = {:>8}: ks {:.4}{}, bias {:+.5}, sd(est) * sqrt(n) {:.5}, failures {}\n",
            run.n,
            run.ks.as_f64(),
            flag,
            run.bias.as_f64(),
            run.empirical_sd_scaled.as_f64(),
            run.failures.len()
        ));
    }
    out
}

/// Parses `key = value` text into ordered pairs. Blank lines and lines
/// starting with `#` are skipped; section headers are rejected because
/// configuration files are flat.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line.starts_with('[') {
            return Err(RiskError::invalid(format!(
                "line {}: sections are not allowed in configuration files",
                lineno + 1
            )));
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(RiskError::invalid(format!(
                "line {}: expected key = value, got {:?}",
                lineno + 1,
                line
            )));
        };
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}
