//! Pairwise (tree) summation and the moment helpers built on it.
//!
//! Every empirical mean in this crate runs through [`PairwiseAccumulator`],
//! so any two code paths that average the same values in the same order
//! produce bit-identical results. The accumulator merges partial sums like
//! a binary counter: the running block at level `l` holds `2^l` addends,
//! and pushing a value carries full blocks upward. Rounding error grows
//! like O(log n) instead of the O(n) of left-to-right summation.
//!
//! Variances and covariances here use the population convention (divide by
//! `n`, not `n - 1`) and are computed in two passes: means first, then
//! centered products, which keeps cancellation in check.

use crate::scalar::Scalar;

/// Streaming pairwise summation with a fixed, input-order-determined tree.
#[derive(Clone, Debug)]
pub struct PairwiseAccumulator<T> {
    levels: [T; 64],
    count: u64,
}

impl<T: Scalar> Default for PairwiseAccumulator<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> PairwiseAccumulator<T> {
    /// Creates an empty accumulator.
    #[inline]
    pub fn new() -> Self {
        PairwiseAccumulator {
            levels: [T::zero(); 64],
            count: 0,
        }
    }

    /// Adds one value, carrying completed blocks up the tree.
    #[inline]
    pub fn push(&mut self, v: T) {
        let mut v = v;
        let mut level = 0usize;
        let mut mask = self.count;
        while mask & 1 == 1 {
            v = self.levels[level] + v;
            level += 1;
            mask >>= 1;
        }
        self.levels[level] = v;
        self.count += 1;
    }

    /// Number of values pushed so far.
    #[inline]
    pub fn len(&self) -> u64 {
        self.count
    }

    /// True when nothing has been pushed.
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Combines the outstanding blocks into the final sum.
    ///
    /// Blocks are merged from the smallest to the largest so short tails
    /// join before meeting the bulk of the data.
    #[inline]
    pub fn sum(&self) -> T {
        let mut total = T::zero();
        let mut mask = self.count;
        let mut level = 0usize;
        while mask != 0 {
            if mask & 1 == 1 {
                total = total + self.levels[level];
            }
            level += 1;
            mask >>= 1;
        }
        total
    }
}

/// Sums a slice with the pairwise tree.
#[inline]
pub fn pairwise_sum<T: Scalar>(xs: &[T]) -> T {
    let mut acc = PairwiseAccumulator::new();
    for &x in xs {
        acc.push(x);
    }
    acc.sum()
}

/// Arithmetic mean via pairwise summation.
///
/// # Panics
/// Panics on an empty slice; public entry points validate emptiness first.
#[inline]
pub fn mean<T: Scalar>(xs: &[T]) -> T {
    assert!(!xs.is_empty(), "mean of empty slice");
    pairwise_sum(xs) / T::of_count(xs.len())
}

/// Population variance (normalized by `n`) via the two-pass formula.
///
/// # Panics
/// Panics on an empty slice.
pub fn population_variance<T: Scalar>(xs: &[T]) -> T {
    let m = mean(xs);
    let mut acc = PairwiseAccumulator::new();
    for &x in xs {
        let d = x - m;
        acc.push(d * d);
    }
    acc.sum() / T::of_count(xs.len())
}

/// Population standard deviation (normalized by `n`).
pub fn population_sd<T: Scalar>(xs: &[T]) -> T {
    population_variance(xs).sqrt()
}

/// Population covariance (normalized by `n`) of two equally long slices.
///
/// # Panics
/// Panics when the slices are empty or of different lengths.
pub fn population_covariance<T: Scalar>(xs: &[T], ys: &[T]) -> T {
    assert_eq!(xs.len(), ys.len(), "covariance of unequal-length slices");
    let mx = mean(xs);
    let my = mean(ys);
    let mut acc = PairwiseAccumulator::new();
    for (&x, &y) in xs.iter().zip(ys.iter()) {
        acc.push((x - mx) * (y - my));
    }
    acc.sum() / T::of_count(xs.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sums_integers_exactly() {
        let xs: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 500500.0);
    }

    #[test]
    fn streaming_matches_slice_sum() {
        let xs: Vec<f64> = (0..317).map(|i| (i as f64).sin()).collect();
        let mut acc = PairwiseAccumulator::new();
        for &x in &xs {
            acc.push(x);
        }
        assert_eq!(acc.sum(), pairwise_sum(&xs));
        assert_eq!(acc.len(), 317);
    }

    #[test]
    fn beats_sequential_summation_on_adversarial_input() {
        // Many tiny values after one large value lose bits under
        // left-to-right accumulation but survive the tree.
        let n = 1 << 20;
        let mut xs = vec![1e-10f64; n];
        xs[0] = 1.0;
        let exact = 1.0 + 1e-10 * ((n - 1) as f64);
        let tree = pairwise_sum(&xs);
        let seq: f64 = xs.iter().sum();
        assert!((tree - exact).abs() <= (seq - exact).abs());
        assert!((tree - exact).abs() / exact < 1e-15);
    }

    #[test]
    fn mean_of_constant_slice_is_exact() {
        let xs = vec![0.1f64; 1003];
        assert_eq!(mean(&xs), 0.1);
    }

    #[test]
    fn population_variance_of_two_point_sample() {
        let xs = vec![-1.0f64, 1.0];
        assert_eq!(population_variance(&xs), 1.0);
        assert_eq!(population_sd(&xs), 1.0);
    }

    #[test]
    fn population_variance_uses_n_not_n_minus_one() {
        let xs = vec![0.0f64, 2.0];
        // Residuals are +-1, so dividing by n gives 1, by n-1 would give 2.
        assert_eq!(population_variance(&xs), 1.0);
    }

    #[test]
    fn covariance_of_identical_slices_is_variance() {
        let xs: Vec<f64> = (0..41).map(|i| (i as f64).cos()).collect();
        let v = population_variance(&xs);
        let c = population_covariance(&xs, &xs);
        assert!((v - c).abs() < 1e-15);
    }

    #[test]
    fn covariance_sign_tracks_comonotonicity() {
        let xs = vec![1.0f64, 2.0, 3.0, 4.0];
        let ys = vec![4.0f64, 3.0, 2.0, 1.0];
        assert!(population_covariance(&xs, &ys) < 0.0);
        assert!(population_covariance(&xs, &xs) > 0.0);
    }

    #[test]
    fn works_in_f32() {
        let xs = vec![0.5f32; 64];
        assert_eq!(pairwise_sum(&xs), 32.0f32);
        assert_eq!(mean(&xs), 0.5f32);
    }
}
