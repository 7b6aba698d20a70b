//! Composite (nested) functionals of a probability measure and their
//! plug-in estimators.
//!
//! A composite functional of a random vector X is the nested expectation
//!
//! ```text
//! rho = E[ f1( mu2, X) ],   mu_j = E[ f_j( mu_{j+1}, X) ],   mu_{k+1} = E[ f_{k+1}(X) ]
//! ```
//!
//! where stage `j` maps `R^{m_j} x R^m -> R^{m_{j-1}}` with `m_0 = 1`. The
//! plug-in estimator replaces every expectation with the empirical mean of
//! one sample, giving the chain of stage means mu_hat computed by
//! [`mean_chain`]; its scalar head is [`evaluate_plugin`].
//!
//! The limiting distribution of the plug-in estimator is the image of a
//! Gaussian field under the linear functional computed by
//! [`xi_recursion`]: starting from the terminal component of a direction
//! bundle, each stage applies its mean Jacobian and adds the stage's own
//! directional perturbation,
//!
//! ```text
//! xi_{k+1} = d_{k+1},
//! xi_j     = E_hat[ J_j(mu_{j+1}, X) ] xi_{j+1} + d_j(mu_{j+1}),
//! ```
//!
//! and the scalar `xi_1` is the derivative of the nested evaluation along
//! the bundle. [`finite_diff_directional`] is the independent oracle for
//! that derivative: it re-evaluates the perturbed chain at a small step
//! and forms the difference quotient.
//!
//! Every stage declares a compact axis-aligned box that must contain the
//! empirical mean feeding it; escapes surface as errors rather than
//! silently extrapolating stage derivatives.

use crate::error::{Result, RiskError};
use crate::linalg::Matrix;
use crate::sample::SampleSet;
use crate::scalar::Scalar;
use crate::sum::PairwiseAccumulator;

/// Stage evaluator: arguments are (eta, observation).
pub type StageEval<T> = Box<dyn Fn(&[T], &[T]) -> Vec<T> + Send + Sync>;

/// Stage Jacobian with respect to eta, shaped `out_dim x eta_dim`.
pub type StageJacobian<T> = Box<dyn Fn(&[T], &[T]) -> Matrix<T> + Send + Sync>;

/// Terminal evaluator: argument is the observation alone.
pub type TerminalEval<T> = Box<dyn Fn(&[T]) -> Vec<T> + Send + Sync>;

/// One inner stage `f_j` of a composite functional.
pub struct StageFunction<T> {
    out_dim: usize,
    eta_dim: usize,
    eval: StageEval<T>,
    jacobian: Option<StageJacobian<T>>,
}

impl<T: Scalar> StageFunction<T> {
    /// Creates a stage from its evaluator.
    pub fn new(out_dim: usize, eta_dim: usize, eval: StageEval<T>) -> Self {
        StageFunction {
            out_dim,
            eta_dim,
            eval,
            jacobian: None,
        }
    }

    /// Attaches the eta-Jacobian needed by derivative-based operations.
    #[must_use]
    pub fn with_jacobian(mut self, jacobian: StageJacobian<T>) -> Self {
        self.jacobian = Some(jacobian);
        self
    }

    /// Output dimension `m_{j-1}`.
    #[inline]
    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// Inner-mean dimension `m_j`.
    #[inline]
    pub fn eta_dim(&self) -> usize {
        self.eta_dim
    }

    /// Evaluates the stage, validating the output length.
    pub fn eval(&self, eta: &[T], x: &[T]) -> Result<Vec<T>> {
        let v = (self.eval)(eta, x);
        if v.len() != self.out_dim {
            return Err(RiskError::DimensionMismatch {
                context: format!(
                    "stage evaluator produced length {}, declared {}",
                    v.len(),
                    self.out_dim
                ),
            });
        }
        Ok(v)
    }

    /// Evaluates the Jacobian, validating its shape.
    ///
    /// # Errors
    /// [`RiskError::MissingJacobian`] when none was attached; the stage
    /// index for the message is supplied by the caller.
    pub fn jacobian(&self, stage_index: usize, eta: &[T], x: &[T]) -> Result<Matrix<T>> {
        let jac = self
            .jacobian
            .as_ref()
            .ok_or(RiskError::MissingJacobian { stage: stage_index })?;
        let m = jac(eta, x);
        if m.rows() != self.out_dim || m.cols() != self.eta_dim {
            return Err(RiskError::DimensionMismatch {
                context: format!(
                    "stage {stage_index} Jacobian is {}x{}, declared {}x{}",
                    m.rows(),
                    m.cols(),
                    self.out_dim,
                    self.eta_dim
                ),
            });
        }
        Ok(m)
    }

    /// True when a Jacobian was attached.
    pub fn has_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }
}

/// The innermost map `f_{k+1}` applied directly to observations.
pub struct TerminalStage<T> {
    out_dim: usize,
    eval: TerminalEval<T>,
}

impl<T: Scalar> TerminalStage<T> {
    /// Creates the terminal stage from its evaluator.
    pub fn new(out_dim: usize, eval: TerminalEval<T>) -> Self {
        TerminalStage { out_dim, eval }
    }

    /// Output dimension `m_k`.
    #[inline]
    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// Evaluates the terminal map, validating the output length.
    pub fn eval(&self, x: &[T]) -> Result<Vec<T>> {
        let v = (self.eval)(x);
        if v.len() != self.out_dim {
            return Err(RiskError::DimensionMismatch {
                context: format!(
                    "terminal evaluator produced length {}, declared {}",
                    v.len(),
                    self.out_dim
                ),
            });
        }
        Ok(v)
    }
}

/// Axis-aligned compact box for an intermediate mean, either fixed or
/// derived from the sample at evaluation time.
#[derive(Clone, Debug)]
pub enum DomainBox<T> {
    /// Explicit bounds, one pair per coordinate.
    Fixed { lo: Vec<T>, hi: Vec<T> },
    /// Per-coordinate `[min - margin*range, max + margin*range]` of the
    /// observations; requires the box dimension to equal the observation
    /// dimension.
    SampleRange { margin: T },
    /// One-dimensional `[0, range^p * scale]`, sized for means of
    /// `p`-th powers of nonnegative deviations within the sample range.
    NonnegPower { p: T, scale: T },
}

/// A box with concrete bounds, produced by [`DomainBox::resolve`].
#[derive(Clone, Debug)]
pub struct ResolvedBox<T> {
    pub lo: Vec<T>,
    pub hi: Vec<T>,
}

impl<T: Scalar> ResolvedBox<T> {
    /// Membership with a relative cushion of a few ulps so that empirical
    /// means of constant samples stay inside degenerate boxes.
    pub fn contains(&self, point: &[T]) -> bool {
        if point.len() != self.lo.len() {
            return false;
        }
        point.iter().zip(self.lo.iter().zip(self.hi.iter())).all(|(&v, (&lo, &hi))| {
            let cushion = T::of(1e-12) * (T::one() + v.abs());
            v >= lo - cushion && v <= hi + cushion
        })
    }
}

impl<T: Scalar> DomainBox<T> {
    /// Resolves the box against a sample.
    ///
    /// # Errors
    /// [`RiskError::DimensionMismatch`] when a fixed box has unequal
    /// bound lengths or a sample-derived rule cannot match `dim`;
    /// [`RiskError::InvalidParameter`] for reversed fixed bounds.
    pub fn resolve(&self, sample: &SampleSet<T>, dim: usize) -> Result<ResolvedBox<T>> {
        match self {
            DomainBox::Fixed { lo, hi } => {
                if lo.len() != dim || hi.len() != dim {
                    return Err(RiskError::DimensionMismatch {
                        context: format!(
                            "fixed box has bounds of length {}/{}, stage needs {dim}",
                            lo.len(),
                            hi.len()
                        ),
                    });
                }
                if lo.iter().zip(hi.iter()).any(|(&l, &h)| !(l <= h)) {
                    return Err(RiskError::invalid("fixed box has reversed bounds".to_string()));
                }
                Ok(ResolvedBox {
                    lo: lo.clone(),
                    hi: hi.clone(),
                })
            }
            DomainBox::SampleRange { margin } => {
                if sample.dim() != dim {
                    return Err(RiskError::DimensionMismatch {
                        context: format!(
                            "sample-range box needs stage dimension {dim} to match \
                             observation dimension {}",
                            sample.dim()
                        ),
                    });
                }
                let min = sample.coordinate_min();
                let max = sample.coordinate_max();
                let lo: Vec<T> = min
                    .iter()
                    .zip(max.iter())
                    .map(|(&lo, &hi)| lo - *margin * (hi - lo))
                    .collect();
                let hi: Vec<T> = min
                    .iter()
                    .zip(max.iter())
                    .map(|(&lo, &hi)| hi + *margin * (hi - lo))
                    .collect();
                Ok(ResolvedBox { lo, hi })
            }
            DomainBox::NonnegPower { p, scale } => {
                if dim != 1 {
                    return Err(RiskError::DimensionMismatch {
                        context: format!("nonnegative-power box is one-dimensional, stage needs {dim}"),
                    });
                }
                let min = sample.coordinate_min();
                let max = sample.coordinate_max();
                let range = max
                    .iter()
                    .zip(min.iter())
                    .map(|(&hi, &lo)| hi - lo)
                    .fold(T::zero(), |a, b| if b > a { b } else { a });
                Ok(ResolvedBox {
                    lo: vec![T::zero()],
                    hi: vec![range.powf(*p) * *scale],
                })
            }
        }
    }
}

/// A nested functional: inner stages, terminal map, and one domain box per
/// inner stage.
pub struct CompositeFunctional<T> {
    stages: Vec<StageFunction<T>>,
    terminal: TerminalStage<T>,
    boxes: Vec<DomainBox<T>>,
    obs_dim: usize,
}

impl<T: Scalar> CompositeFunctional<T> {
    /// Assembles and validates a chain.
    ///
    /// Stage `j` (1-based position in `stages`) consumes the mean of stage
    /// `j+1`; the first stage must produce a scalar and the last inner
    /// stage must consume the terminal dimension. `boxes[j-1]` constrains
    /// the mean fed to stage `j`.
    ///
    /// # Errors
    /// [`RiskError::DimensionMismatch`] on any broken adjacency;
    /// [`RiskError::InvalidParameter`] when `stages` or `boxes` have the
    /// wrong count.
    pub fn new(
        stages: Vec<StageFunction<T>>,
        terminal: TerminalStage<T>,
        boxes: Vec<DomainBox<T>>,
        obs_dim: usize,
    ) -> Result<Self> {
        if stages.is_empty() {
            return Err(RiskError::invalid(
                "a composite functional needs at least one inner stage".to_string(),
            ));
        }
        if boxes.len() != stages.len() {
            return Err(RiskError::invalid(format!(
                "{} stages need {} boxes, got {}",
                stages.len(),
                stages.len(),
                boxes.len()
            )));
        }
        if obs_dim == 0 {
            return Err(RiskError::invalid("observation dimension is zero".to_string()));
        }
        if stages[0].out_dim() != 1 {
            return Err(RiskError::DimensionMismatch {
                context: format!(
                    "outermost stage must be scalar-valued, declared {}",
                    stages[0].out_dim()
                ),
            });
        }
        for j in 0..stages.len() - 1 {
            if stages[j].eta_dim() != stages[j + 1].out_dim() {
                return Err(RiskError::DimensionMismatch {
                    context: format!(
                        "stage {} consumes dimension {} but stage {} produces {}",
                        j + 1,
                        stages[j].eta_dim(),
                        j + 2,
                        stages[j + 1].out_dim()
                    ),
                });
            }
        }
        let last = stages.len() - 1;
        if stages[last].eta_dim() != terminal.out_dim() {
            return Err(RiskError::DimensionMismatch {
                context: format!(
                    "innermost stage consumes dimension {} but the terminal map produces {}",
                    stages[last].eta_dim(),
                    terminal.out_dim()
                ),
            });
        }
        Ok(CompositeFunctional {
            stages,
            terminal,
            boxes,
            obs_dim,
        })
    }

    /// Number of inner stages `k`.
    #[inline]
    pub fn depth(&self) -> usize {
        self.stages.len()
    }

    /// Observation dimension `m`.
    #[inline]
    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    /// Borrows inner stage `j` (1-based).
    pub fn stage(&self, j: usize) -> &StageFunction<T> {
        &self.stages[j - 1]
    }

    /// Borrows the terminal map.
    pub fn terminal(&self) -> &TerminalStage<T> {
        &self.terminal
    }

    /// Output dimension of level `j` for `j in 1..=k+1`; level `k+1` is
    /// the terminal map.
    pub fn level_dim(&self, j: usize) -> usize {
        if j == self.depth() + 1 {
            self.terminal.out_dim()
        } else {
            self.stages[j - 1].out_dim()
        }
    }

    fn check_sample(&self, s: &SampleSet<T>) -> Result<()> {
        if s.dim() != self.obs_dim {
            return Err(RiskError::DimensionMismatch {
                context: format!(
                    "functional expects observations in R^{}, sample has dimension {}",
                    self.obs_dim,
                    s.dim()
                ),
            });
        }
        Ok(())
    }

    fn resolved_boxes(&self, s: &SampleSet<T>) -> Result<Vec<ResolvedBox<T>>> {
        self.boxes
            .iter()
            .zip(self.stages.iter())
            .map(|(b, st)| b.resolve(s, st.eta_dim()))
            .collect()
    }
}

/// The empirical stage means, outermost first.
///
/// `levels[j-1]` holds the mean feeding stage `j-1` (so `levels[0]` is the
/// scalar plug-in value and the last entry is the mean of the terminal
/// map).
#[derive(Clone, Debug)]
pub struct MeanChain<T> {
    levels: Vec<Vec<T>>,
}

impl<T: Scalar> MeanChain<T> {
    /// The scalar plug-in estimate (the level-1 mean).
    pub fn value(&self) -> T {
        self.levels[0][0]
    }

    /// Mean at level `j` for `j in 1..=k+1`.
    pub fn level(&self, j: usize) -> &[T] {
        &self.levels[j - 1]
    }

    /// Number of levels `k+1`.
    pub fn depth(&self) -> usize {
        self.levels.len()
    }
}

/// Per-coordinate empirical mean of a stage applied across the sample.
fn stage_mean<T: Scalar, F>(n: usize, out_dim: usize, mut produce: F) -> Result<Vec<T>>
where
    F: FnMut(usize) -> Result<Vec<T>>,
{
    let mut accs: Vec<PairwiseAccumulator<T>> =
        (0..out_dim).map(|_| PairwiseAccumulator::new()).collect();
    for i in 0..n {
        let v = produce(i)?;
        for (acc, &value) in accs.iter_mut().zip(v.iter()) {
            acc.push(value);
        }
    }
    let count = T::of_count(n);
    Ok(accs.into_iter().map(|a| a.sum() / count).collect())
}

/// Computes all empirical stage means for one sample.
///
/// # Errors
/// Escalates stage-evaluation shape errors and reports
/// [`RiskError::DomainEscape`] when an intermediate mean leaves its box.
pub fn mean_chain<T: Scalar>(
    cf: &CompositeFunctional<T>,
    s: &SampleSet<T>,
) -> Result<MeanChain<T>> {
    cf.check_sample(s)?;
    let boxes = cf.resolved_boxes(s)?;
    let k = cf.depth();
    let n = s.len();
    let mut levels: Vec<Vec<T>> = vec![Vec::new(); k + 1];

    levels[k] = stage_mean(n, cf.terminal().out_dim(), |i| cf.terminal().eval(s.row(i)))?;

    for j in (1..=k).rev() {
        let inner = levels[j].clone();
        let resolved = &boxes[j - 1];
        if !resolved.contains(&inner) {
            return Err(RiskError::DomainEscape {
                stage: j,
                point: inner.iter().map(|v| v.as_f64()).collect(),
                lo: resolved.lo.iter().map(|v| v.as_f64()).collect(),
                hi: resolved.hi.iter().map(|v| v.as_f64()).collect(),
            });
        }
        let stage = cf.stage(j);
        levels[j - 1] = stage_mean(n, stage.out_dim(), |i| stage.eval(&inner, s.row(i)))?;
    }
    Ok(MeanChain { levels })
}

/// The scalar plug-in estimate; shares the code path of [`mean_chain`]
/// so the two agree bit for bit.
pub fn evaluate_plugin<T: Scalar>(cf: &CompositeFunctional<T>, s: &SampleSet<T>) -> Result<T> {
    Ok(mean_chain(cf, s)?.value())
}

/// Empirical mean of stage `j`'s Jacobian at the chain point.
pub fn mean_jacobian<T: Scalar>(
    cf: &CompositeFunctional<T>,
    chain: &MeanChain<T>,
    s: &SampleSet<T>,
    j: usize,
) -> Result<Matrix<T>> {
    cf.check_sample(s)?;
    let stage = cf.stage(j);
    let eta = chain.level(j + 1);
    let rows = stage.out_dim();
    let cols = stage.eta_dim();
    let mut accs: Vec<PairwiseAccumulator<T>> =
        (0..rows * cols).map(|_| PairwiseAccumulator::new()).collect();
    for i in 0..s.len() {
        let m = stage.jacobian(j, eta, s.row(i))?;
        for r in 0..rows {
            for c in 0..cols {
                accs[r * cols + c].push(m.get(r, c));
            }
        }
    }
    let count = T::of_count(s.len());
    let data: Vec<T> = accs.into_iter().map(|a| a.sum() / count).collect();
    Matrix::from_row_major(rows, cols, data)
}

/// A direction in the space of stage functions: a terminal vector plus one
/// optional function per inner stage.
pub struct DirectionBundle<T> {
    terminal: Vec<T>,
    components: Vec<Option<Box<dyn Fn(&[T]) -> Vec<T> + Send + Sync>>>,
}

impl<T: Scalar> DirectionBundle<T> {
    /// A bundle whose inner-stage components are all zero.
    pub fn terminal_only(terminal: Vec<T>, depth: usize) -> Self {
        let components = (0..depth).map(|_| None).collect();
        DirectionBundle {
            terminal,
            components,
        }
    }

    /// Sets the component for inner stage `j` (1-based): a function of the
    /// stage's eta point, valued in the stage's output space.
    ///
    /// # Panics
    /// Panics when `j` is out of range; bundles are built against a known
    /// chain depth.
    #[must_use]
    pub fn with_component(
        mut self,
        j: usize,
        f: Box<dyn Fn(&[T]) -> Vec<T> + Send + Sync>,
    ) -> Self {
        assert!(j >= 1 && j <= self.components.len(), "stage index out of range");
        self.components[j - 1] = Some(f);
        self
    }

    /// Terminal component `d_{k+1}`.
    pub fn terminal(&self) -> &[T] {
        &self.terminal
    }

    /// Evaluates component `j` at `eta`, with absent components as zero.
    pub fn component(&self, j: usize, eta: &[T], out_dim: usize) -> Result<Vec<T>> {
        match &self.components[j - 1] {
            None => Ok(vec![T::zero(); out_dim]),
            Some(f) => {
                let v = f(eta);
                if v.len() != out_dim {
                    return Err(RiskError::DimensionMismatch {
                        context: format!(
                            "direction component {j} produced length {}, stage needs {out_dim}",
                            v.len()
                        ),
                    });
                }
                Ok(v)
            }
        }
    }
}

/// Derivative of the nested evaluation along a direction bundle.
///
/// Runs the backward recursion described in the module docs at the
/// empirical means in `chain`.
///
/// # Errors
/// [`RiskError::MissingJacobian`] when a stage lacks its Jacobian, plus
/// any dimension mismatches in the bundle.
pub fn xi_recursion<T: Scalar>(
    cf: &CompositeFunctional<T>,
    chain: &MeanChain<T>,
    d: &DirectionBundle<T>,
    s: &SampleSet<T>,
) -> Result<T> {
    cf.check_sample(s)?;
    let k = cf.depth();
    if d.terminal().len() != cf.terminal().out_dim() {
        return Err(RiskError::DimensionMismatch {
            context: format!(
                "terminal direction has length {}, terminal map produces {}",
                d.terminal().len(),
                cf.terminal().out_dim()
            ),
        });
    }
    let mut xi: Vec<T> = d.terminal().to_vec();
    for j in (1..=k).rev() {
        let jbar = mean_jacobian(cf, chain, s, j)?;
        let mut next = jbar.matvec(&xi);
        let dj = d.component(j, chain.level(j + 1), cf.stage(j).out_dim())?;
        for (n, extra) in next.iter_mut().zip(dj.iter()) {
            *n = *n + *extra;
        }
        xi = next;
    }
    Ok(xi[0])
}

/// Difference-quotient oracle for [`xi_recursion`].
///
/// Evaluates the nested chain with every stage mean perturbed functionally
/// by `t` times the bundle and returns `(perturbed - plain) / t`.
///
/// # Errors
/// [`RiskError::InvalidParameter`] for a non-positive step and
/// [`RiskError::DomainEscape`] when the perturbed means leave their boxes.
pub fn finite_diff_directional<T: Scalar>(
    cf: &CompositeFunctional<T>,
    s: &SampleSet<T>,
    d: &DirectionBundle<T>,
    t: T,
) -> Result<T> {
    if !(t > T::zero()) || !t.is_finite() {
        return Err(RiskError::invalid(format!("step must be positive and finite, got {t}")));
    }
    cf.check_sample(s)?;
    let boxes = cf.resolved_boxes(s)?;
    let k = cf.depth();
    let n = s.len();

    let plain = evaluate_plugin(cf, s)?;

    let mut nu = stage_mean(n, cf.terminal().out_dim(), |i| cf.terminal().eval(s.row(i)))?;
    for (v, &dv) in nu.iter_mut().zip(d.terminal().iter()) {
        *v = *v + t * dv;
    }
    for j in (1..=k).rev() {
        let resolved = &boxes[j - 1];
        if !resolved.contains(&nu) {
            return Err(RiskError::DomainEscape {
                stage: j,
                point: nu.iter().map(|v| v.as_f64()).collect(),
                lo: resolved.lo.iter().map(|v| v.as_f64()).collect(),
                hi: resolved.hi.iter().map(|v| v.as_f64()).collect(),
            });
        }
        let stage = cf.stage(j);
        let inner = nu.clone();
        let mut outer = stage_mean(n, stage.out_dim(), |i| stage.eval(&inner, s.row(i)))?;
        let dj = d.component(j, &inner, stage.out_dim())?;
        for (v, &dv) in outer.iter_mut().zip(dj.iter()) {
            *v = *v + t * dv;
        }
        nu = outer;
    }
    Ok((nu[0] - plain) / t)
}

/// Worst relative disagreement between a stage's declared Jacobian and a
/// central finite difference at one probe point.
///
/// Used by property tests to validate hand-written derivatives.
pub fn jacobian_fd_residual<T: Scalar>(
    stage: &StageFunction<T>,
    stage_index: usize,
    eta: &[T],
    x: &[T],
    step: T,
) -> Result<T> {
    let jac = stage.jacobian(stage_index, eta, x)?;
    let mut worst = T::zero();
    for c in 0..stage.eta_dim() {
        let mut up = eta.to_vec();
        let mut dn = eta.to_vec();
        up[c] = up[c] + step;
        dn[c] = dn[c] - step;
        let fu = stage.eval(&up, x)?;
        let fd = stage.eval(&dn, x)?;
        for r in 0..stage.out_dim() {
            let fd_est = (fu[r] - fd[r]) / (T::of(2.0) * step);
            let denom = T::one() + jac.get(r, c).abs();
            let rel = (fd_est - jac.get(r, c)).abs() / denom;
            if rel > worst {
                worst = rel;
            }
        }
    }
    Ok(worst)
}
