//! Limiting distributions of plug-in estimators.
//!
//! The plug-in estimate of a nested functional is asymptotically normal:
//! centered at the true value and scaled by `sqrt(n)`, it converges to a
//! scalar projection of the Gaussian field of stage-mean fluctuations.
//! Writing `c_1 = 1` and `c_{j+1} = c_j J_j_bar` for the products of mean
//! Jacobians along the chain, the limit is `sum_j c_j W_j` where the
//! stacked vector `(W_1, ..., W_{k+1})` is centered Gaussian with the
//! covariance of the stacked stage evaluations
//!
//! ```text
//! ( f_1(mu_2, X), f_2(mu_3, X), ..., f_k(mu_{k+1}, X), f_{k+1}(X) ).
//! ```
//!
//! [`covariance_empirical`] estimates that covariance at the empirical
//! chain point, [`limit_coefficients`] forms the Jacobian products, and
//! [`limit_sd_composite`] combines them into the limiting standard
//! deviation `sqrt(c' Sigma c)` of `sqrt(n) (rho_hat - rho)`.
//!
//! Measures that carry an inner minimization admit shortcuts. When the
//! value is `min_u f_1(u, E[f_2(u, X)])` with a smooth outer map, the
//! optimal-value estimator has limiting standard deviation equal to the
//! standard deviation of the scalarized inner stage
//! `<grad_eta f_1(u*, mu_2), f_2(u*, X)>` at the minimizer
//! ([`two_stage_limit_sd`]). When the objective at each decision is
//! itself a nested functional, the decision is frozen at its estimate and
//! the generic chain machinery applies ([`nested_limit_sd`]).
//!
//! Closed forms for the concrete measures in this crate
//! ([`limit_sd_semideviation`], [`limit_sd_quantile_excess`],
//! [`limit_sd_higher_order`]) are derived from the same projection and
//! are cross-checked against the generic path in tests.

use crate::error::{Result, RiskError};
use crate::functional::{mean_jacobian, CompositeFunctional, MeanChain};
use crate::linalg::Matrix;
use crate::optimize::{solve_1d_convex, solve_low_dim, SolveOptions, SolveResult};
use crate::sample::SampleSet;
use crate::scalar::Scalar;
use crate::sum::{mean, pairwise_sum, population_sd, PairwiseAccumulator};

/// Covariance of the stacked stage evaluations, with block bookkeeping.
///
/// Entry `(a, b)` is the population covariance (normalized by `n`) of the
/// `a`-th and `b`-th coordinates of the stacked vector described in the
/// module docs.
#[derive(Clone, Debug)]
pub struct CovarianceModel<T> {
    matrix: Matrix<T>,
    block_dims: Vec<usize>,
    block_offsets: Vec<usize>,
    n: usize,
}

impl<T: Scalar> CovarianceModel<T> {
    /// Full stacked covariance matrix.
    pub fn matrix(&self) -> &Matrix<T> {
        &self.matrix
    }

    /// Dimension of level `j` for `j in 1..=k+1`.
    pub fn block_dim(&self, j: usize) -> usize {
        self.block_dims[j - 1]
    }

    /// Number of levels `k+1`.
    pub fn levels(&self) -> usize {
        self.block_dims.len()
    }

    /// Sample size behind the estimate.
    pub fn sample_size(&self) -> usize {
        self.n
    }

    /// Copies the `(j, l)` cross-covariance block (levels are 1-based).
    pub fn block(&self, j: usize, l: usize) -> Matrix<T> {
        self.matrix.block(
            self.block_offsets[j - 1],
            self.block_offsets[l - 1],
            self.block_dims[j - 1],
            self.block_dims[l - 1],
        )
    }
}

fn stacked_rows<T: Scalar>(
    cf: &CompositeFunctional<T>,
    chain: &MeanChain<T>,
    s: &SampleSet<T>,
    i: usize,
) -> Result<Vec<T>> {
    let k = cf.depth();
    let mut row = Vec::new();
    for j in 1..=k {
        let v = cf.stage(j).eval(chain.level(j + 1), s.row(i))?;
        row.extend(v);
    }
    row.extend(cf.terminal().eval(s.row(i))?);
    Ok(row)
}

/// Empirical covariance of the stacked stage evaluations at the chain
/// point, normalized by `n`.
pub fn covariance_empirical<T: Scalar>(
    cf: &CompositeFunctional<T>,
    chain: &MeanChain<T>,
    s: &SampleSet<T>,
) -> Result<CovarianceModel<T>> {
    let k = cf.depth();
    let n = s.len();
    let block_dims: Vec<usize> = (1..=k + 1).map(|j| cf.level_dim(j)).collect();
    let mut block_offsets = Vec::with_capacity(k + 1);
    let mut acc_off = 0usize;
    for &d in &block_dims {
        block_offsets.push(acc_off);
        acc_off += d;
    }
    let total = acc_off;

    let mut center = Vec::with_capacity(total);
    for j in 1..=k + 1 {
        center.extend_from_slice(chain.level(j));
    }

    let mut accs: Vec<PairwiseAccumulator<T>> = (0..total * total)
        .map(|_| PairwiseAccumulator::new())
        .collect();
    let mut resid = vec![T::zero(); total];
    for i in 0..n {
        let row = stacked_rows(cf, chain, s, i)?;
        for (r, (&v, &c)) in resid.iter_mut().zip(row.iter().zip(center.iter())) {
            *r = v - c;
        }
        for a in 0..total {
            for b in a..total {
                accs[a * total + b].push(resid[a] * resid[b]);
            }
        }
    }
    let count = T::of_count(n);
    let mut data = vec![T::zero(); total * total];
    for a in 0..total {
        for b in a..total {
            let v = accs[a * total + b].sum() / count;
            data[a * total + b] = v;
            data[b * total + a] = v;
        }
    }
    Ok(CovarianceModel {
        matrix: Matrix::from_row_major(total, total, data)?,
        block_dims,
        block_offsets,
        n,
    })
}

/// Jacobian-product coefficients `c_1, ..., c_{k+1}` of the limiting
/// projection, evaluated at the empirical chain point.
pub fn limit_coefficients<T: Scalar>(
    cf: &CompositeFunctional<T>,
    chain: &MeanChain<T>,
    s: &SampleSet<T>,
) -> Result<Vec<Vec<T>>> {
    let k = cf.depth();
    let mut coeffs: Vec<Vec<T>> = Vec::with_capacity(k + 1);
    coeffs.push(vec![T::one()]);
    for j in 1..=k {
        let jbar = mean_jacobian(cf, chain, s, j)?;
        let prev = &coeffs[j - 1];
        coeffs.push(jbar.vecmat(prev));
    }
    Ok(coeffs)
}

/// Limiting standard deviation of `sqrt(n) (rho_hat - rho)` for a generic
/// nested functional, via `sqrt(c' Sigma c)`.
///
/// # Errors
/// Propagates missing Jacobians; a quadratic form more negative than
/// rounding allows reports [`RiskError::SolverFailure`].
pub fn limit_sd_composite<T: Scalar>(
    cf: &CompositeFunctional<T>,
    chain: &MeanChain<T>,
    s: &SampleSet<T>,
) -> Result<T> {
    let cov = covariance_empirical(cf, chain, s)?;
    let coeffs = limit_coefficients(cf, chain, s)?;
    let stacked: Vec<T> = coeffs.into_iter().flatten().collect();
    let q = cov.matrix().quadratic_form(&stacked);
    let tol = T::of(1e-10) * (T::one() + cov.matrix().trace());
    if q < -tol {
        return Err(RiskError::SolverFailure {
            reason: format!("limiting variance came out negative ({q})"),
        });
    }
    Ok(if q > T::zero() { q.sqrt() } else { T::zero() })
}

/// Closed-form limiting standard deviation for the mean-semideviation
/// functional `E[X] + kappa * (E[max(0, X - E[X])^p])^(1/p)`.
///
/// With `mu2 = E_hat[max(0, X - mean)^p]`, the projection reduces to
/// `a V_1 + b V_2` for `V_1 = X`, `V_2 = max(0, X - mean)^p`, where
/// `b = (kappa/p) mu2^{(1-p)/p}` and `a = 1 - b p E_hat[max^{p-1}]`.
///
/// # Errors
/// [`RiskError::DegenerateSample`] when `kappa > 0` and the deviation
/// moment vanishes (a constant sample), where the scaling derivative is
/// unbounded.
pub fn limit_sd_semideviation<T: Scalar>(s: &SampleSet<T>, p: T, kappa: T) -> Result<T> {
    let x = s.scalars();
    let n = s.len();
    let mu = mean(x);
    if kappa == T::zero() {
        return Ok(population_sd(x));
    }
    let mut dev = Vec::with_capacity(n);
    let mut dev_pm1 = Vec::with_capacity(n);
    for &xi in x {
        let d = if xi > mu { xi - mu } else { T::zero() };
        let (dp, dpm1) = if p == T::of(2.0) {
            (d * d, d)
        } else if p == T::one() {
            (d, if d > T::zero() { T::one() } else { T::zero() })
        } else {
            (d.powf(p), d.powf(p - T::one()))
        };
        dev.push(dp);
        dev_pm1.push(dpm1);
    }
    let mu2 = mean(&dev);
    if !(mu2 > T::zero()) {
        return Err(RiskError::DegenerateSample {
            context: "semideviation moment vanishes on a constant sample; \
                      the limiting scale is undefined"
                .to_string(),
        });
    }
    let b = (kappa / p) * mu2.powf((T::one() - p) / p);
    let a = T::one() - b * p * mean(&dev_pm1);

    let var1 = population_sd(x).powi(2);
    let var2 = population_sd(&dev).powi(2);
    let mu_dev = mean(&dev);
    let cov_terms: Vec<T> = x
        .iter()
        .zip(dev.iter())
        .map(|(&xi, &di)| (xi - mu) * (di - mu_dev))
        .collect();
    let cov = pairwise_sum(&cov_terms) / T::of_count(n);

    let variance = a * a * var1 + b * b * var2 + T::of(2.0) * a * b * cov;
    Ok(if variance > T::zero() { variance.sqrt() } else { T::zero() })
}

/// Limiting standard deviation for the tail-average (quantile-excess)
/// functional at level `alpha`, evaluated at the threshold estimate:
/// `sd(max(0, X - z_hat)) / alpha`.
pub fn limit_sd_quantile_excess<T: Scalar>(s: &SampleSet<T>, alpha: T, z_hat: T) -> T {
    let excess: Vec<T> = s
        .scalars()
        .iter()
        .map(|&x| if x > z_hat { x - z_hat } else { T::zero() })
        .collect();
    population_sd(&excess) / alpha
}

/// Limiting standard deviation for the higher-order inverse functional
/// `min_z z + c (E[(X - z)_+^p])^{1/p}`, evaluated at the threshold
/// estimate: `(c/p) m_p^{(1-p)/p} sd((X - z_hat)_+^p)` with
/// `m_p = E_hat[(X - z_hat)_+^p]`.
///
/// # Errors
/// [`RiskError::DegenerateSample`] when the tail moment vanishes.
pub fn limit_sd_higher_order<T: Scalar>(s: &SampleSet<T>, p: T, c: T, z_hat: T) -> Result<T> {
    let powers: Vec<T> = s
        .scalars()
        .iter()
        .map(|&x| {
            let d = if x > z_hat { x - z_hat } else { T::zero() };
            if p == T::of(2.0) {
                d * d
            } else if p == T::one() {
                d
            } else {
                d.powf(p)
            }
        })
        .collect();
    let m_p = mean(&powers);
    if !(m_p > T::zero()) {
        return Err(RiskError::DegenerateSample {
            context: "tail moment vanishes at the threshold estimate; \
                      the limiting scale is undefined"
                .to_string(),
        });
    }
    Ok((c / p) * m_p.powf((T::one() - p) / p) * population_sd(&powers))
}

/// A risk problem in optimized form: minimize a smooth outer map of an
/// inner expectation over a low-dimensional decision box,
/// `min_u f_1(u, E[f_2(u, X)])`.
pub struct TwoStageProblem<T> {
    /// Dimension of the inner expectation.
    pub inner_dim: usize,
    /// Outer map `(u, eta) -> value`.
    pub f1: Box<dyn Fn(&[T], &[T]) -> T + Send + Sync>,
    /// Gradient of the outer map in its `eta` argument.
    pub grad_f1_eta: Box<dyn Fn(&[T], &[T]) -> Vec<T> + Send + Sync>,
    /// Inner integrand `(u, x) -> R^{inner_dim}`.
    pub f2: Box<dyn Fn(&[T], &[T]) -> Vec<T> + Send + Sync>,
    /// Decision box, at most three-dimensional.
    pub lo: Vec<T>,
    /// Upper decision bounds.
    pub hi: Vec<T>,
}

impl<T: Scalar> TwoStageProblem<T> {
    fn inner_mean(&self, u: &[T], s: &SampleSet<T>) -> Result<Vec<T>> {
        let mut accs: Vec<PairwiseAccumulator<T>> =
            (0..self.inner_dim).map(|_| PairwiseAccumulator::new()).collect();
        for i in 0..s.len() {
            let v = (self.f2)(u, s.row(i));
            if v.len() != self.inner_dim {
                return Err(RiskError::DimensionMismatch {
                    context: format!(
                        "inner integrand produced length {}, declared {}",
                        v.len(),
                        self.inner_dim
                    ),
                });
            }
            for (acc, &value) in accs.iter_mut().zip(v.iter()) {
                acc.push(value);
            }
        }
        let count = T::of_count(s.len());
        Ok(accs.into_iter().map(|a| a.sum() / count).collect())
    }

    /// Plug-in objective at one decision.
    pub fn objective(&self, u: &[T], s: &SampleSet<T>) -> Result<T> {
        let eta = self.inner_mean(u, s)?;
        Ok((self.f1)(u, &eta))
    }
}

/// Minimizes the plug-in objective of an optimized-form problem.
pub fn two_stage_estimate<T: Scalar>(
    problem: &TwoStageProblem<T>,
    s: &SampleSet<T>,
    opts: &SolveOptions,
) -> Result<SolveResult<T>> {
    if problem.lo.len() == 1 {
        let f = |z: T| {
            problem
                .objective(&[z], s)
                .unwrap_or_else(|_| T::nan())
        };
        solve_1d_convex(&f, problem.lo[0], problem.hi[0], opts)
    } else {
        let f = |u: &[T]| problem.objective(u, s).unwrap_or_else(|_| T::nan());
        solve_low_dim(&f, &problem.lo, &problem.hi, opts)
    }
}

/// Limiting standard deviation of the optimal-value estimator of an
/// optimized-form problem at the decision estimate `u_hat`:
/// the standard deviation of `<grad_eta f_1(u_hat, eta_bar), f_2(u_hat, X)>`.
pub fn two_stage_limit_sd<T: Scalar>(
    problem: &TwoStageProblem<T>,
    s: &SampleSet<T>,
    u_hat: &[T],
) -> Result<T> {
    let eta = problem.inner_mean(u_hat, s)?;
    let grad = (problem.grad_f1_eta)(u_hat, &eta);
    if grad.len() != problem.inner_dim {
        return Err(RiskError::DimensionMismatch {
            context: format!(
                "outer gradient has length {}, inner dimension is {}",
                grad.len(),
                problem.inner_dim
            ),
        });
    }
    let scalarized: Vec<T> = (0..s.len())
        .map(|i| {
            let v = (problem.f2)(u_hat, s.row(i));
            v.iter().zip(grad.iter()).map(|(&a, &g)| a * g).fold(T::zero(), |acc, t| acc + t)
        })
        .collect();
    Ok(population_sd(&scalarized))
}

/// A risk problem whose objective at each decision is a nested functional
/// built by a factory.
pub struct NestedProblem<T> {
    /// Builds the chain for one decision.
    pub factory: Box<dyn Fn(&[T]) -> Result<CompositeFunctional<T>> + Send + Sync>,
    /// Decision box, at most three-dimensional.
    pub lo: Vec<T>,
    /// Upper decision bounds.
    pub hi: Vec<T>,
}

/// Minimizes the plug-in objective of a nested-objective problem.
pub fn nested_estimate<T: Scalar>(
    problem: &NestedProblem<T>,
    s: &SampleSet<T>,
    opts: &SolveOptions,
) -> Result<SolveResult<T>> {
    let eval = |u: &[T]| -> T {
        (problem.factory)(u)
            .and_then(|cf| crate::functional::evaluate_plugin(&cf, s))
            .unwrap_or_else(|_| T::nan())
    };
    if problem.lo.len() == 1 {
        let f = |z: T| eval(&[z]);
        solve_1d_convex(&f, problem.lo[0], problem.hi[0], opts)
    } else {
        let f = |u: &[T]| eval(u);
        solve_low_dim(&f, &problem.lo, &problem.hi, opts)
    }
}

/// Limiting standard deviation of the optimal-value estimator of a
/// nested-objective problem: the decision is frozen at `u_hat` and the
/// generic chain projection applies.
pub fn nested_limit_sd<T: Scalar>(
    problem: &NestedProblem<T>,
    s: &SampleSet<T>,
    u_hat: &[T],
) -> Result<T> {
    let cf = (problem.factory)(u_hat)?;
    let chain = crate::functional::mean_chain(&cf, s)?;
    limit_sd_composite(&cf, &chain, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::{mean_chain, DomainBox, StageFunction, TerminalStage};
    use crate::linalg::symmetric_eigenvalues;
    use crate::sample::Provenance;

    fn scalar_sample(values: &[f64]) -> SampleSet<f64> {
        SampleSet::from_scalars(values.to_vec(), Provenance::Literal).unwrap()
    }

    fn identity_chain() -> CompositeFunctional<f64> {
        let f1 = StageFunction::new(1, 1, Box::new(|eta: &[f64], _x: &[f64]| vec![eta[0]]))
            .with_jacobian(Box::new(|_eta, _x| Matrix::scalar(1.0)));
        let terminal = TerminalStage::new(1, Box::new(|x: &[f64]| vec![x[0]]));
        CompositeFunctional::new(
            vec![f1],
            terminal,
            vec![DomainBox::SampleRange { margin: 3.0 }],
            1,
        )
        .unwrap()
    }

    fn semideviation_chain(kappa: f64) -> CompositeFunctional<f64> {
        let f1 = StageFunction::new(
            1,
            1,
            Box::new(move |eta: &[f64], x: &[f64]| vec![x[0] + kappa * eta[0].sqrt()]),
        )
        .with_jacobian(Box::new(move |eta: &[f64], _x: &[f64]| {
            let d = if eta[0] > 0.0 {
                kappa * 0.5 * eta[0].powf(-0.5)
            } else {
                0.0
            };
            Matrix::scalar(d)
        }));
        let f2 = StageFunction::new(
            1,
            1,
            Box::new(|eta: &[f64], x: &[f64]| {
                let d = (x[0] - eta[0]).max(0.0);
                vec![d * d]
            }),
        )
        .with_jacobian(Box::new(|eta: &[f64], x: &[f64]| {
            Matrix::scalar(-2.0 * (x[0] - eta[0]).max(0.0))
        }));
        let terminal = TerminalStage::new(1, Box::new(|x: &[f64]| vec![x[0]]));
        CompositeFunctional::new(
            vec![f1, f2],
            terminal,
            vec![
                DomainBox::NonnegPower { p: 2.0, scale: 8.0 },
                DomainBox::SampleRange { margin: 3.0 },
            ],
            1,
        )
        .unwrap()
    }

    /// Deterministic non-trivial sample used by the equivalence checks.
    fn wavy_sample(n: usize) -> SampleSet<f64> {
        let values: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64;
                10.0 + 2.0 * (t * 0.7).sin() + 0.5 * (t * 0.13).cos() + 0.001 * t
            })
            .collect();
        scalar_sample(&values)
    }

    #[test]
    fn identity_chain_covariance_blocks() {
        // Stage 1 evaluates to the constant mu2: its block is zero.
        // The terminal block is Var(X) = 1 on {-1, 1}.
        let cf = identity_chain();
        let s = scalar_sample(&[-1.0, 1.0]);
        let chain = mean_chain(&cf, &s).unwrap();
        let cov = covariance_empirical(&cf, &chain, &s).unwrap();
        assert_eq!(cov.levels(), 2);
        assert_eq!(cov.block(1, 1).get(0, 0), 0.0);
        assert_eq!(cov.block(2, 2).get(0, 0), 1.0);
        assert_eq!(cov.block(1, 2).get(0, 0), 0.0);
        let sd = limit_sd_composite(&cf, &chain, &s).unwrap();
        assert!((sd - 1.0).abs() < 1e-15);
    }

    #[test]
    fn semideviation_covariance_blocks_by_hand() {
        // On {-1, 1} with mean 0: V1 = X + const has variance 1,
        // V2 = max(0, X)^2 takes values {0, 1} with variance 1/4, and
        // cov(V1, V2) = 1/2.
        let cf = semideviation_chain(0.5);
        let s = scalar_sample(&[-1.0, 1.0]);
        let chain = mean_chain(&cf, &s).unwrap();
        let cov = covariance_empirical(&cf, &chain, &s).unwrap();
        assert_eq!(cov.levels(), 3);
        assert!((cov.block(1, 1).get(0, 0) - 1.0).abs() < 1e-15);
        assert!((cov.block(2, 2).get(0, 0) - 0.25).abs() < 1e-15);
        assert!((cov.block(1, 2).get(0, 0) - 0.5).abs() < 1e-15);
        assert!((cov.block(3, 3).get(0, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn semideviation_closed_form_matches_generic_projection() {
        // Hand arithmetic on {-1, 1}, p = 2, kappa = 1/2:
        // b = sqrt(2)/4, a = 1 - b, and the limiting variance is
        // a^2 + a b + b^2/4 = 0.6776966094067262.
        let cf = semideviation_chain(0.5);
        let s = scalar_sample(&[-1.0, 1.0]);
        let chain = mean_chain(&cf, &s).unwrap();
        let generic = limit_sd_composite(&cf, &chain, &s).unwrap();
        let closed = limit_sd_semideviation(&s, 2.0, 0.5).unwrap();
        assert!((closed * closed - 0.6776966094067262).abs() < 1e-15);
        assert!(
            (generic - closed).abs() <= 1e-12 * (1.0 + closed.abs()),
            "generic {generic} vs closed {closed}"
        );

        let s = wavy_sample(400);
        let chain = mean_chain(&cf, &s).unwrap();
        let generic = limit_sd_composite(&cf, &chain, &s).unwrap();
        let closed = limit_sd_semideviation(&s, 2.0, 0.5).unwrap();
        assert!(
            (generic - closed).abs() <= 1e-12 * (1.0 + closed.abs()),
            "generic {generic} vs closed {closed}"
        );
    }

    #[test]
    fn semideviation_kappa_zero_reduces_to_plain_sd() {
        let s = wavy_sample(100);
        let sd = limit_sd_semideviation(&s, 2.0, 0.0).unwrap();
        assert_eq!(sd, population_sd(s.scalars()));
    }

    #[test]
    fn semideviation_constant_sample_is_degenerate() {
        let s = scalar_sample(&[4.0, 4.0, 4.0]);
        assert!(matches!(
            limit_sd_semideviation(&s, 2.0, 0.5),
            Err(RiskError::DegenerateSample { .. })
        ));
    }

    #[test]
    fn quantile_excess_limit_sd_by_hand() {
        // Excesses over z = 2 on {1, 2, 3, 4} are {0, 0, 1, 2}; their
        // population sd is sqrt(11/16) and alpha = 1/2 doubles it.
        let s = scalar_sample(&[1.0, 2.0, 3.0, 4.0]);
        let sd = limit_sd_quantile_excess(&s, 0.5, 2.0);
        assert!((sd - 1.6583123951776998).abs() < 1e-15, "sd {sd}");
    }

    #[test]
    fn higher_order_limit_sd_degenerates_without_tail_mass() {
        let s = scalar_sample(&[1.0, 1.0, 1.0]);
        assert!(matches!(
            limit_sd_higher_order(&s, 2.0, 20.0, 5.0),
            Err(RiskError::DegenerateSample { .. })
        ));
    }

    #[test]
    fn stacked_covariance_is_positive_semidefinite() {
        let cf = semideviation_chain(0.5);
        let s = wavy_sample(257);
        let chain = mean_chain(&cf, &s).unwrap();
        let cov = covariance_empirical(&cf, &chain, &s).unwrap();
        let eigs = symmetric_eigenvalues(cov.matrix()).unwrap();
        let floor = -1e-10 * (1.0 + cov.matrix().trace());
        for e in eigs {
            assert!(e >= floor, "eigenvalue {e} below {floor}");
        }
    }

    fn quantile_excess_two_stage(alpha: f64, lo: f64, hi: f64) -> TwoStageProblem<f64> {
        TwoStageProblem {
            inner_dim: 1,
            f1: Box::new(move |u: &[f64], eta: &[f64]| u[0] + eta[0] / alpha),
            grad_f1_eta: Box::new(move |_u: &[f64], _eta: &[f64]| vec![1.0 / alpha]),
            f2: Box::new(|u: &[f64], x: &[f64]| vec![(x[0] - u[0]).max(0.0)]),
            lo: vec![lo],
            hi: vec![hi],
        }
    }

    #[test]
    fn two_stage_form_reproduces_the_tail_average_scale() {
        let alpha = 0.25;
        let s = wavy_sample(500);
        let lo = s.coordinate_min()[0] - 1.0;
        let hi = s.coordinate_max()[0] + 1.0;
        let problem = quantile_excess_two_stage(alpha, lo, hi);
        let solved = two_stage_estimate(&problem, &s, &SolveOptions::default()).unwrap();
        let z_hat = solved.scalar_point();
        let optimized = two_stage_limit_sd(&problem, &s, &[z_hat]).unwrap();
        let direct = limit_sd_quantile_excess(&s, alpha, z_hat);
        assert!(
            (optimized - direct).abs() <= 1e-12 * (1.0 + direct.abs()),
            "optimized {optimized} vs direct {direct}"
        );
    }

    #[test]
    fn two_stage_form_reproduces_the_higher_order_scale() {
        let (p, c) = (2.0, 5.0);
        let s = wavy_sample(500);
        let lo = s.coordinate_min()[0] - 1.0;
        let hi = s.coordinate_max()[0] + 1.0;
        let problem = TwoStageProblem {
            inner_dim: 1,
            f1: Box::new(move |u: &[f64], eta: &[f64]| u[0] + c * eta[0].powf(1.0 / p)),
            grad_f1_eta: Box::new(move |_u: &[f64], eta: &[f64]| {
                vec![(c / p) * eta[0].powf((1.0 - p) / p)]
            }),
            f2: Box::new(|u: &[f64], x: &[f64]| {
                let d = (x[0] - u[0]).max(0.0);
                vec![d * d]
            }),
            lo: vec![lo],
            hi: vec![hi],
        };
        let solved = two_stage_estimate(&problem, &s, &SolveOptions::default()).unwrap();
        let z_hat = solved.scalar_point();
        let optimized = two_stage_limit_sd(&problem, &s, &[z_hat]).unwrap();
        let direct = limit_sd_higher_order(&s, p, c, z_hat).unwrap();
        assert!(
            (optimized - direct).abs() <= 1e-12 * (1.0 + direct.abs()),
            "optimized {optimized} vs direct {direct}"
        );
    }

    #[test]
    fn nested_problem_freezes_the_decision_and_projects() {
        // Objective u -> E[u X] over u in [0.5, 1.5] with positive mean:
        // the minimum sits at u = 0.5 and the frozen-chain scale is
        // 0.5 sd(X).
        let problem = NestedProblem {
            factory: Box::new(|u: &[f64]| {
                let scale = u[0];
                let f1 = StageFunction::new(
                    1,
                    1,
                    Box::new(|eta: &[f64], _x: &[f64]| vec![eta[0]]),
                )
                .with_jacobian(Box::new(|_eta, _x| Matrix::scalar(1.0)));
                let terminal =
                    TerminalStage::new(1, Box::new(move |x: &[f64]| vec![scale * x[0]]));
                CompositeFunctional::new(
                    vec![f1],
                    terminal,
                    vec![DomainBox::Fixed {
                        lo: vec![-1e6],
                        hi: vec![1e6],
                    }],
                    1,
                )
            }),
            lo: vec![0.5],
            hi: vec![1.5],
        };
        let s = wavy_sample(300);
        let solved = nested_estimate(&problem, &s, &SolveOptions::default()).unwrap();
        assert!((solved.scalar_point() - 0.5).abs() < 1e-6);
        let sd = nested_limit_sd(&problem, &s, &solved.point).unwrap();
        let expected = solved.scalar_point() * population_sd(s.scalars());
        assert!((sd - expected).abs() <= 1e-10 * (1.0 + expected));
    }
}
