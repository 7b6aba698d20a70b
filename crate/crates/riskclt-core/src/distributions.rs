//! Sampling distributions and exact population values of the risk
//! measures, for calibrating Monte Carlo experiments.
//!
//! Three source laws are supported: the normal, the (shifted) Student t,
//! and the empirical law of a stored sample (drawn with replacement).
//! Sampling is driven by counter-based substreams of one master seed
//! ([`substream`]), so that replicate `r` at sample-size index `i` always
//! receives the same bytes no matter how work is scheduled across
//! threads.
//!
//! Population quantities come from the same formulas the estimators use,
//! with expectations computed by adaptive quadrature against the density
//! ([`tail_moment`]) and the threshold found by the same convex solver.
//! A [`PopulationOracle`] records the minimizer, the exact value, and the
//! limiting standard deviation; the latter is `None` when the required
//! moment diverges (Student t with too few degrees of freedom), in which
//! case no finite normalization of the estimator error exists.

use rand::distributions::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Result, RiskError};
use crate::measures::{self, MeasureSpec};
use crate::optimize::{solve_1d_convex, SolveOptions};
use crate::quad::{adaptive_simpson, integrate_half_line, QuadOptions};
use crate::sample::{Provenance, SampleSet};
use crate::scalar::Scalar;
use crate::special::{normal_pdf, normal_quantile, student_t_pdf};
use crate::sum::{mean, population_sd};

/// A sampling law for experiment inputs.
#[derive(Clone, Debug, PartialEq)]
pub enum DistributionSpec<T> {
    /// Normal with the given mean and standard deviation.
    Normal { mean: T, sd: T },
    /// Student t with `nu` degrees of freedom, shifted by `shift`.
    StudentT { nu: T, shift: T },
    /// The empirical law of stored values, sampled with replacement.
    Empirical { values: Vec<T> },
}

impl<T: Scalar> DistributionSpec<T> {
    /// Validates the parameters.
    pub fn validate(&self) -> Result<()> {
        match self {
            DistributionSpec::Normal { mean, sd } => {
                if !mean.is_finite() || !sd.is_finite() || !(*sd > T::zero()) {
                    return Err(RiskError::invalid(format!(
                        "normal law needs finite mean and positive sd, got mean={mean}, sd={sd}"
                    )));
                }
            }
            DistributionSpec::StudentT { nu, shift } => {
                if !nu.is_finite() || !(*nu > T::zero()) || !shift.is_finite() {
                    return Err(RiskError::invalid(format!(
                        "student t law needs positive degrees of freedom, got nu={nu}, shift={shift}"
                    )));
                }
            }
            DistributionSpec::Empirical { values } => {
                if values.is_empty() {
                    return Err(RiskError::EmptySample {
                        context: "empirical sampling law".to_string(),
                    });
                }
                if let Some(v) = values.iter().find(|v| !v.is_finite()) {
                    return Err(RiskError::non_finite(format!("empirical law value {v}")));
                }
            }
        }
        Ok(())
    }

    /// Stable identifier used in reports.
    pub fn id_string(&self) -> String {
        match self {
            DistributionSpec::Normal { mean, sd } => {
                format!("normal(mean={},sd={})", mean.as_f64(), sd.as_f64())
            }
            DistributionSpec::StudentT { nu, shift } => {
                format!("student_t(nu={},shift={})", nu.as_f64(), shift.as_f64())
            }
            DistributionSpec::Empirical { values } => format!("empirical(n={})", values.len()),
        }
    }

    /// Location used to center solver brackets.
    fn location(&self) -> T {
        match self {
            DistributionSpec::Normal { mean, .. } => *mean,
            DistributionSpec::StudentT { shift, .. } => *shift,
            DistributionSpec::Empirical { values } => mean(values),
        }
    }

    /// Spread used to size solver brackets and quadrature windows.
    fn spread(&self) -> T {
        match self {
            DistributionSpec::Normal { sd, .. } => *sd,
            DistributionSpec::StudentT { .. } => T::of(2.0),
            DistributionSpec::Empirical { values } => {
                let s = population_sd(values);
                if s > T::zero() {
                    s
                } else {
                    T::one()
                }
            }
        }
    }

    /// True when `E[(X - z)_+^q]` is finite for every `z`.
    fn tail_moment_finite(&self, q: T) -> bool {
        match self {
            DistributionSpec::Normal { .. } | DistributionSpec::Empirical { .. } => true,
            DistributionSpec::StudentT { nu, .. } => q < *nu - T::of(1e-9),
        }
    }

    /// Population variance, `None` when infinite.
    pub fn variance(&self) -> Option<T> {
        match self {
            DistributionSpec::Normal { sd, .. } => Some(*sd * *sd),
            DistributionSpec::StudentT { nu, .. } => {
                if *nu > T::of(2.0) {
                    Some(*nu / (*nu - T::of(2.0)))
                } else {
                    None
                }
            }
            DistributionSpec::Empirical { values } => {
                let s = population_sd(values);
                Some(s * s)
            }
        }
    }

    /// Draws `n` observations using the supplied generator.
    pub fn sample<R: Rng>(&self, rng: &mut R, n: usize) -> Result<SampleSet<T>> {
        self.validate()?;
        if n == 0 {
            return Err(RiskError::EmptySample {
                context: "requested sample of size zero".to_string(),
            });
        }
        let values: Vec<T> = match self {
            DistributionSpec::Normal { mean, sd } => {
                let d = rand_distr::Normal::new(mean.as_f64(), sd.as_f64())
                    .map_err(|e| RiskError::invalid(format!("normal sampler: {e}")))?;
                (0..n).map(|_| T::of(d.sample(rng))).collect()
            }
            DistributionSpec::StudentT { nu, shift } => {
                let d = rand_distr::StudentT::new(nu.as_f64())
                    .map_err(|e| RiskError::invalid(format!("student t sampler: {e}")))?;
                (0..n).map(|_| *shift + T::of(d.sample(rng))).collect()
            }
            DistributionSpec::Empirical { values } => (0..n)
                .map(|_| values[rng.gen_range(0..values.len())])
                .collect(),
        };
        SampleSet::from_scalars(
            values,
            Provenance::Generator {
                name: self.id_string(),
                seed: 0,
            },
        )
    }

    /// Density at `x`; the empirical law has none.
    fn density(&self, x: T) -> Result<T> {
        match self {
            DistributionSpec::Normal { mean, sd } => {
                Ok(normal_pdf((x - *mean) / *sd) / *sd)
            }
            DistributionSpec::StudentT { nu, shift } => student_t_pdf(*nu, x - *shift),
            DistributionSpec::Empirical { .. } => Err(RiskError::invalid(
                "the empirical law has no density".to_string(),
            )),
        }
    }
}

/// Deterministic substream generator: one master seed fans out to
/// independent streams indexed by a domain byte, a sample-size index, and
/// a replicate index. Work scheduled in any order sees the same bytes.
pub fn substream(master_seed: u64, domain: u8, n_idx: u32, replicate: u32) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream(((domain as u64) << 56) | ((n_idx as u64) << 32) | replicate as u64);
    rng
}

/// Exact population quantities for one measure under one law.
#[derive(Clone, Debug)]
pub struct PopulationOracle<T> {
    /// Population minimizer (threshold) when the measure carries one.
    pub minimizer: Option<Vec<T>>,
    /// Exact value of the measure.
    pub value: T,
    /// Limiting standard deviation of `sqrt(n) (rho_hat - rho)`, `None`
    /// when the governing moment diverges.
    pub limit_sd: Option<T>,
}

/// Partial tail moment `E[(X - z)_+^q]` by adaptive quadrature.
///
/// # Errors
/// [`RiskError::IntegrationFailure`] when the moment diverges for this
/// law, along with any quadrature escalation.
pub fn tail_moment<T: Scalar>(dist: &DistributionSpec<T>, q: T, z: T) -> Result<T> {
    if let DistributionSpec::Empirical { values } = dist {
        let n = T::of_count(values.len());
        let total = values
            .iter()
            .map(|&v| {
                let d = if v > z { v - z } else { T::zero() };
                pow_nonneg(d, q)
            })
            .fold(T::zero(), |a, b| a + b);
        return Ok(total / n);
    }
    if !dist.tail_moment_finite(q) {
        return Err(RiskError::IntegrationFailure {
            reason: format!("tail moment of order {q} diverges for {}", dist.id_string()),
        });
    }
    let f = |x: T| -> T {
        let d = x - z;
        let w = pow_nonneg(if d > T::zero() { d } else { T::zero() }, q);
        w * dist.density(x).unwrap_or_else(|_| T::nan())
    };
    let opts = QuadOptions::default();
    let loc = dist.location();
    let spread = dist.spread();
    // The density's mass can sit far above z. Cover [z, anchor] in panels
    // no wider than the spread so the mode cannot hide inside one
    // quadrature interval, then sweep the remaining tail geometrically.
    let anchor = (if z > loc { z } else { loc }) + T::of(2.0) * spread;
    let span = anchor - z;
    let panels = (span / spread).ceil().as_f64() as usize;
    if panels > 4096 {
        return Err(RiskError::IntegrationFailure {
            reason: format!(
                "threshold {z} is unreasonably far below the mass of {}",
                dist.id_string()
            ),
        });
    }
    let mut total = T::zero();
    let h = span / T::of_count(panels.max(1));
    for i in 0..panels.max(1) {
        let a = z + T::of_count(i) * h;
        total += adaptive_simpson(&f, a, a + h, &opts)?;
    }
    total += integrate_half_line(&f, anchor, spread, &opts)?;
    Ok(total)
}

#[inline]
fn pow_nonneg<T: Scalar>(d: T, q: T) -> T {
    if q == T::zero() {
        T::one()
    } else if q == T::one() {
        d
    } else if q == T::of(2.0) {
        d * d
    } else if d == T::zero() {
        T::zero()
    } else {
        d.powf(q)
    }
}

/// Population value and limiting scale of the higher-order inverse tail
/// measure under `dist`.
///
/// # Errors
/// [`RiskError::IntegrationFailure`] when the value itself diverges
/// (`p` at or above the Student t degrees of freedom).
pub fn oracle_higher_order<T: Scalar>(
    dist: &DistributionSpec<T>,
    p: T,
    c: T,
) -> Result<PopulationOracle<T>> {
    dist.validate()?;
    MeasureSpec::HigherOrderInverse { p, c }.validate()?;
    if let DistributionSpec::Empirical { values } = dist {
        let s = SampleSet::from_scalars(values.clone(), Provenance::Literal)?;
        let est = measures::estimate_higher_order(&s, p, c)?;
        return Ok(PopulationOracle {
            minimizer: est.minimizer,
            value: est.value,
            limit_sd: est.limit_sd,
        });
    }
    if !dist.tail_moment_finite(p) {
        return Err(RiskError::IntegrationFailure {
            reason: format!(
                "the measure itself is infinite: order {p} tail moment diverges for {}",
                dist.id_string()
            ),
        });
    }

    let inv_p = T::one() / p;
    let objective = |z: T| -> T {
        match tail_moment(dist, p, z) {
            Ok(m) => z + c * m.powf(inv_p),
            Err(_) => T::nan(),
        }
    };
    let loc = dist.location();
    let spread = dist.spread();
    let lo = loc - (T::of(4.0) + c) * spread;
    let hi = loc + T::of(20.0) * spread;
    let solved = solve_1d_convex(&objective, lo, hi, &SolveOptions::default())?;
    let z_star = solved.scalar_point();

    let limit_sd = if dist.tail_moment_finite(T::of(2.0) * p) {
        let m_p = tail_moment(dist, p, z_star)?;
        let m_2p = tail_moment(dist, T::of(2.0) * p, z_star)?;
        let var = m_2p - m_p * m_p;
        let sd = if var > T::zero() { var.sqrt() } else { T::zero() };
        Some((c / p) * m_p.powf((T::one() - p) / p) * sd)
    } else {
        None
    };
    Ok(PopulationOracle {
        minimizer: Some(vec![z_star]),
        value: solved.value,
        limit_sd,
    })
}

/// Population value and limiting scale of the tail average at `alpha`;
/// the inverse-form solve at `p = 1`, `c = 1/alpha`.
pub fn oracle_tail_average<T: Scalar>(
    dist: &DistributionSpec<T>,
    alpha: T,
) -> Result<PopulationOracle<T>> {
    MeasureSpec::AvgValueAtRisk { alpha }.validate()?;
    if alpha == T::one() {
        let value = match dist {
            DistributionSpec::Normal { mean, .. } => *mean,
            DistributionSpec::StudentT { nu, shift } => {
                if *nu > T::one() {
                    *shift
                } else {
                    return Err(RiskError::IntegrationFailure {
                        reason: "the mean diverges for student t with nu <= 1".to_string(),
                    });
                }
            }
            DistributionSpec::Empirical { values } => mean(values),
        };
        let limit_sd = dist.variance().map(|v| v.sqrt());
        return Ok(PopulationOracle {
            minimizer: None,
            value,
            limit_sd,
        });
    }
    if let DistributionSpec::Empirical { values } = dist {
        let s = SampleSet::from_scalars(values.clone(), Provenance::Literal)?;
        let est = measures::estimate_tail_average(&s, alpha)?;
        return Ok(PopulationOracle {
            minimizer: est.minimizer,
            value: est.value,
            limit_sd: est.limit_sd,
        });
    }
    oracle_higher_order(dist, T::one(), T::one() / alpha)
}

/// Population value and limiting scale of the mean-semideviation measure
/// under `dist`.
pub fn oracle_semideviation<T: Scalar>(
    dist: &DistributionSpec<T>,
    p: T,
    kappa: T,
) -> Result<PopulationOracle<T>> {
    dist.validate()?;
    MeasureSpec::MeanSemideviation { p, kappa }.validate()?;
    if let DistributionSpec::Empirical { values } = dist {
        let s = SampleSet::from_scalars(values.clone(), Provenance::Literal)?;
        let est = measures::estimate_semideviation(&s, p, kappa)?;
        return Ok(PopulationOracle {
            minimizer: est.minimizer,
            value: est.value,
            limit_sd: est.limit_sd,
        });
    }
    if !dist.tail_moment_finite(p) {
        return Err(RiskError::IntegrationFailure {
            reason: format!(
                "the measure itself is infinite: order {p} tail moment diverges for {}",
                dist.id_string()
            ),
        });
    }
    let mu = dist.location();
    let two = T::of(2.0);
    let m_p = tail_moment(dist, p, mu)?;
    let value = mu + kappa * m_p.powf(T::one() / p);

    let limit_sd = if kappa == T::zero() {
        dist.variance().map(|v| v.sqrt())
    } else if dist.tail_moment_finite(two * p) {
        match dist.variance() {
            None => None,
            Some(var1) => {
                if !(m_p > T::zero()) {
                    return Err(RiskError::DegenerateSample {
                        context: "semideviation moment vanishes for this law".to_string(),
                    });
                }
                let b = (kappa / p) * m_p.powf((T::one() - p) / p);
                let a = T::one() - b * p * tail_moment(dist, p - T::one(), mu)?;
                let m_2p = tail_moment(dist, two * p, mu)?;
                let var2 = m_2p - m_p * m_p;
                let cov = tail_moment(dist, p + T::one(), mu)?;
                let variance = a * a * var1 + b * b * var2 + two * a * b * cov;
                Some(if variance > T::zero() { variance.sqrt() } else { T::zero() })
            }
        }
    } else {
        None
    };
    Ok(PopulationOracle {
        minimizer: None,
        value,
        limit_sd,
    })
}

/// Dispatches to the oracle for one measure specification.
pub fn oracle<T: Scalar>(
    spec: &MeasureSpec<T>,
    dist: &DistributionSpec<T>,
) -> Result<PopulationOracle<T>> {
    spec.validate()?;
    match *spec {
        MeasureSpec::MeanSemideviation { p, kappa } => oracle_semideviation(dist, p, kappa),
        MeasureSpec::AvgValueAtRisk { alpha } => oracle_tail_average(dist, alpha),
        MeasureSpec::HigherOrderInverse { p, c } => oracle_higher_order(dist, p, c),
    }
}

/// Closed-form tail average of the normal law, used to cross-check the
/// quadrature path: `mean + sd * pdf(q) / alpha` at `q` the `(1 - alpha)`
/// standard normal quantile.
pub fn normal_tail_average_closed_form<T: Scalar>(mean: T, sd: T, alpha: T) -> Result<(T, T)> {
    let q = normal_quantile(T::one() - alpha)?;
    let value = mean + sd * normal_pdf(q) / alpha;
    Ok((q * sd + mean, value))
}
