//! Adaptive Simpson quadrature for the population oracles.
//!
//! The integrands here are smooth densities times polynomial tail factors,
//! so recursive Simpson with Richardson correction converges quickly.
//! Half-infinite integrals are split into geometrically growing segments
//! and truncated once a segment stops contributing.

use crate::error::{Result, RiskError};
use crate::scalar::Scalar;

/// Tolerances and depth bound for the adaptive rule.
#[derive(Clone, Copy, Debug)]
pub struct QuadOptions<T> {
    /// Relative tolerance against the accumulated integral.
    pub rel_tol: T,
    /// Absolute tolerance floor.
    pub abs_tol: T,
    /// Maximum bisection depth per segment.
    pub max_depth: usize,
}

impl<T: Scalar> Default for QuadOptions<T> {
    fn default() -> Self {
        QuadOptions {
            rel_tol: T::of(1e-11),
            abs_tol: T::of(1e-13),
            max_depth: 48,
        }
    }
}

/// Integrates `f` over the finite interval `[a, b]`.
///
/// # Errors
/// [`RiskError::IntegrationFailure`] when the integrand produces a
/// non-finite value or the interval is invalid.
pub fn adaptive_simpson<T: Scalar>(
    f: &dyn Fn(T) -> T,
    a: T,
    b: T,
    opts: &QuadOptions<T>,
) -> Result<T> {
    if !(a.is_finite() && b.is_finite()) || a > b {
        return Err(RiskError::IntegrationFailure {
            reason: format!("invalid interval [{a}, {b}]"),
        });
    }
    if a == b {
        return Ok(T::zero());
    }
    let fa = eval(f, a)?;
    let fb = eval(f, b)?;
    let m = midpoint(a, b);
    let fm = eval(f, m)?;
    let whole = simpson(a, b, fa, fm, fb);
    recurse(f, a, b, fa, fm, fb, whole, opts, opts.max_depth)
}

/// Integrates `f` over `[a, +inf)` by geometric segmentation.
///
/// Segment widths start at `initial_width` and grow fourfold; integration
/// stops when a segment's contribution falls below the tolerance relative
/// to the running total. Suitable for integrands that eventually decay
/// faster than 1/x; the caller is responsible for knowing the integral
/// converges at all.
pub fn integrate_half_line<T: Scalar>(
    f: &dyn Fn(T) -> T,
    a: T,
    initial_width: T,
    opts: &QuadOptions<T>,
) -> Result<T> {
    if !initial_width.is_finite() || initial_width <= T::zero() {
        return Err(RiskError::IntegrationFailure {
            reason: format!("invalid initial segment width {initial_width}"),
        });
    }
    let mut total = T::zero();
    let mut lo = a;
    let mut width = initial_width;
    let growth = T::of(4.0);
    let mut negligible_run = 0usize;
    let mut last_piece = T::infinity();
    for _segment in 0..96 {
        let hi = lo + width;
        let piece = adaptive_simpson(f, lo, hi, opts)?;
        total += piece;
        last_piece = piece;
        let floor = opts.abs_tol.max(opts.rel_tol * total.abs());
        // Quiet segments count only after real mass has accumulated;
        // leading dead stretches must not end the scan early.
        if piece.abs() <= floor && total.abs() > opts.abs_tol {
            negligible_run += 1;
            if negligible_run >= 2 {
                return Ok(total);
            }
        } else {
            negligible_run = 0;
        }
        lo = hi;
        width = width * growth;
    }
    if last_piece.abs() <= opts.abs_tol {
        return Ok(total);
    }
    Err(RiskError::IntegrationFailure {
        reason: "half-line integral did not settle within the segment budget".into(),
    })
}

fn eval<T: Scalar>(f: &dyn Fn(T) -> T, x: T) -> Result<T> {
    let v = f(x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(RiskError::IntegrationFailure {
            reason: format!("integrand returned {v} at x = {x}"),
        })
    }
}

#[inline]
fn midpoint<T: Scalar>(a: T, b: T) -> T {
    a + (b - a) / T::of(2.0)
}

#[inline]
fn simpson<T: Scalar>(a: T, b: T, fa: T, fm: T, fb: T) -> T {
    (b - a) / T::of(6.0) * (fa + T::of(4.0) * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn recurse<T: Scalar>(
    f: &dyn Fn(T) -> T,
    a: T,
    b: T,
    fa: T,
    fm: T,
    fb: T,
    whole: T,
    opts: &QuadOptions<T>,
    depth: usize,
) -> Result<T> {
    let m = midpoint(a, b);
    let lm = midpoint(a, m);
    let rm = midpoint(m, b);
    let flm = eval(f, lm)?;
    let frm = eval(f, rm)?;
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let refined = left + right;
    let err = refined - whole;
    let tol = opts.abs_tol.max(opts.rel_tol * refined.abs());
    if err.abs() <= T::of(15.0) * tol || depth == 0 {
        // Richardson extrapolation removes the leading error term.
        return Ok(refined + err / T::of(15.0));
    }
    let l = recurse(f, a, m, fa, flm, fm, left, opts, depth - 1)?;
    let r = recurse(f, m, b, fm, frm, fb, right, opts, depth - 1)?;
    Ok(l + r)
}
