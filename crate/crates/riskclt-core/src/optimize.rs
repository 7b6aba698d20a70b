//! Deterministic minimization of convex objectives over boxes.
//!
//! Risk estimators that carry an auxiliary decision (a quantile-like
//! threshold, or an outer decision vector) reduce to minimizing a convex
//! function over a compact interval or a small box. The solvers here are
//! derivative-free and fully deterministic:
//!
//! * [`solve_1d_convex`] runs ternary search on an interval, then audits
//!   the result against a deterministic probe grid spanning the original
//!   bracket. A probe that strictly dominates the converged value means
//!   the convexity assumption was violated and the solve fails loudly.
//!   A probe that matches the converged value far from the minimizer
//!   marks the result as a tie (a flat minimizer interval), which callers
//!   surface as a warning rather than an error.
//! * [`solve_low_dim`] handles boxes in up to three dimensions with a
//!   coarse grid scan followed by compass pattern search with step
//!   halving.
//!
//! Both report a [`SolveResult`] carrying certificate data: iteration
//! count, final bracket or step width, and the tie flag.

use crate::error::{Result, RiskError};
use crate::scalar::Scalar;

/// Tuning knobs for the solvers; the defaults suit well-scaled risk
/// objectives.
#[derive(Clone, Copy, Debug)]
pub struct SolveOptions {
    /// Final bracket width relative to `1 + max(|lo|, |hi|)`.
    pub width_tol_factor: f64,
    /// Hard cap on ternary iterations or pattern-search sweeps.
    pub max_iters: usize,
    /// Probe-grid size per axis for the optimality audit.
    pub probe_count: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            width_tol_factor: 1e-9,
            max_iters: 500,
            probe_count: 32,
        }
    }
}

/// Outcome of a solve, with certificate data for property tests.
#[derive(Clone, Debug)]
pub struct SolveResult<T> {
    /// Minimizer (length 1 for the interval solver).
    pub point: Vec<T>,
    /// Objective value at `point`.
    pub value: T,
    /// Ternary iterations or pattern-search sweeps used.
    pub iterations: usize,
    /// Width of the final bracket, or the final step size.
    pub bracket_width: f64,
    /// True when a probe matched the optimum far from `point`, meaning
    /// the minimizer is an interval rather than a point.
    pub tie: bool,
}

impl<T: Scalar> SolveResult<T> {
    /// The minimizer of an interval solve.
    pub fn scalar_point(&self) -> T {
        self.point[0]
    }
}

fn finite_or_fail<T: Scalar>(v: T, at: T) -> Result<T> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(RiskError::SolverFailure {
            reason: format!("objective returned {v} at {at}"),
        })
    }
}

/// Minimizes a convex function on `[lo, hi]` by ternary search.
///
/// # Errors
/// [`RiskError::InvalidParameter`] for a malformed bracket,
/// [`RiskError::SolverFailure`] for non-finite objective values or when
/// the probe audit finds a strictly better point than the converged one.
pub fn solve_1d_convex<T: Scalar>(
    f: &dyn Fn(T) -> T,
    lo: T,
    hi: T,
    opts: &SolveOptions,
) -> Result<SolveResult<T>> {
    if !lo.is_finite() || !hi.is_finite() || !(lo <= hi) {
        return Err(RiskError::invalid(format!("bracket [{lo}, {hi}] is not a finite interval")));
    }
    let (orig_lo, orig_hi) = (lo, hi);
    let scale = T::one() + if lo.abs() > hi.abs() { lo.abs() } else { hi.abs() };
    let tol = T::of(opts.width_tol_factor) * scale;

    let mut a = lo;
    let mut b = hi;
    let mut iterations = 0usize;
    let third = T::of(3.0);
    while b - a > tol && iterations < opts.max_iters {
        let span = b - a;
        let m1 = a + span / third;
        let m2 = b - span / third;
        let f1 = finite_or_fail(f(m1), m1)?;
        let f2 = finite_or_fail(f(m2), m2)?;
        if f1 <= f2 {
            b = m2;
        } else {
            a = m1;
        }
        iterations += 1;
    }
    let point = (a + b) / T::of(2.0);
    let value = finite_or_fail(f(point), point)?;

    let mut tie = false;
    if opts.probe_count >= 2 {
        let step = (orig_hi - orig_lo) / T::of_count(opts.probe_count - 1);
        let probes: Vec<(T, T)> = (0..opts.probe_count)
            .map(|i| {
                let x = orig_lo + T::of_count(i) * step;
                finite_or_fail(f(x), x).map(|fx| (x, fx))
            })
            .collect::<Result<_>>()?;
        let (f_min, f_max) = probes.iter().fold(
            (T::infinity(), T::neg_infinity()),
            |(lo_v, hi_v), &(_, fx)| {
                (
                    if fx < lo_v { fx } else { lo_v },
                    if fx > hi_v { fx } else { hi_v },
                )
            },
        );
        let audit_guard = T::of(1e-8) * (T::one() + value.abs() + (f_max - f_min));
        let distance_guard = T::of(1e-6) * (T::one() + point.abs());
        for &(x, fx) in &probes {
            if fx < value - audit_guard {
                return Err(RiskError::SolverFailure {
                    reason: format!(
                        "probe at {x} attains {fx}, below the converged value {value} at {point}; \
                         the objective is not convex on the bracket"
                    ),
                });
            }
            if (fx - value).abs() <= audit_guard && (x - point).abs() > distance_guard {
                tie = true;
            }
        }
    }

    Ok(SolveResult {
        point: vec![point],
        value,
        iterations,
        bracket_width: (b - a).as_f64(),
        tie,
    })
}

/// Minimizes a convex function over a box of dimension at most three.
///
/// A grid of `probe_count` points per axis seeds the search; compass
/// pattern search with step halving refines it. The tie flag is set when
/// a distant grid point matches the final value.
///
/// # Errors
/// [`RiskError::InvalidParameter`] for empty, reversed, or
/// higher-than-3-dimensional boxes; [`RiskError::SolverFailure`] for
/// non-finite objective values.
pub fn solve_low_dim<T: Scalar>(
    f: &dyn Fn(&[T]) -> T,
    lo: &[T],
    hi: &[T],
    opts: &SolveOptions,
) -> Result<SolveResult<T>> {
    let d = lo.len();
    if d == 0 || d > 3 || hi.len() != d {
        return Err(RiskError::invalid(format!(
            "box must have matching bounds in 1 to 3 dimensions, got {}/{}",
            d,
            hi.len()
        )));
    }
    for i in 0..d {
        if !lo[i].is_finite() || !hi[i].is_finite() || !(lo[i] <= hi[i]) {
            return Err(RiskError::invalid(format!(
                "coordinate {i} bracket [{}, {}] is not a finite interval",
                lo[i], hi[i]
            )));
        }
    }
    let eval = |x: &[T]| -> Result<T> {
        let v = f(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(RiskError::SolverFailure {
                reason: format!("objective returned {v} at {x:?}"),
            })
        }
    };

    let per_axis = opts.probe_count.max(2);
    let mut grid: Vec<Vec<T>> = Vec::with_capacity(d);
    for i in 0..d {
        let step = (hi[i] - lo[i]) / T::of_count(per_axis - 1);
        grid.push((0..per_axis).map(|k| lo[i] + T::of_count(k) * step).collect());
    }
    let mut best_point = vec![T::zero(); d];
    let mut best_value = T::infinity();
    let total = per_axis.pow(d as u32);
    let mut x = vec![T::zero(); d];
    for flat in 0..total {
        let mut rem = flat;
        for i in 0..d {
            x[i] = grid[i][rem % per_axis];
            rem /= per_axis;
        }
        let v = eval(&x)?;
        if v < best_value {
            best_value = v;
            best_point.copy_from_slice(&x);
        }
    }
    let seed_value = best_value;

    let scale_vec: Vec<T> = (0..d)
        .map(|i| {
            let m = if lo[i].abs() > hi[i].abs() { lo[i].abs() } else { hi[i].abs() };
            T::one() + m
        })
        .collect();
    let mut step: Vec<T> = (0..d).map(|i| (hi[i] - lo[i]) / T::of(8.0)).collect();
    let min_span = (0..d)
        .map(|i| hi[i] - lo[i])
        .fold(T::infinity(), |acc, s| if s < acc { s } else { acc });
    let mut iterations = 0usize;
    if min_span > T::zero() {
        loop {
            let done = (0..d).all(|i| step[i] <= T::of(opts.width_tol_factor) * scale_vec[i]);
            if done || iterations >= opts.max_iters {
                break;
            }
            let mut improved = false;
            for i in 0..d {
                for sign in [T::one(), -T::one()] {
                    let mut cand = best_point.clone();
                    let moved = cand[i] + sign * step[i];
                    cand[i] = if moved < lo[i] {
                        lo[i]
                    } else if moved > hi[i] {
                        hi[i]
                    } else {
                        moved
                    };
                    if cand[i] == best_point[i] {
                        continue;
                    }
                    let v = eval(&cand)?;
                    if v < best_value {
                        best_value = v;
                        best_point = cand;
                        improved = true;
                    }
                }
            }
            if !improved {
                for s in step.iter_mut() {
                    *s = *s / T::of(2.0);
                }
            }
            iterations += 1;
        }
    }

    let value_guard = T::of(1e-10) * (T::one() + best_value.abs());
    let tie = seed_value <= best_value + value_guard && {
        let dist2 = best_point
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let g = grid[i]
                    .iter()
                    .map(|&gk| (gk - p).abs())
                    .fold(T::infinity(), |a, b| if b < a { b } else { a });
                g
            })
            .fold(T::zero(), |a, b| if b > a { b } else { a });
        dist2 > T::of(1e-6) * (T::one() + best_point[0].abs())
    };

    let width = step.iter().fold(T::zero(), |a, &s| if s > a { s } else { a });
    Ok(SolveResult {
        point: best_point,
        value: best_value,
        iterations,
        bracket_width: width.as_f64(),
        tie,
    })
}
