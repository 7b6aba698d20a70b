//! Floating-point scalar abstraction used throughout the crate.
//!
//! All numeric code is generic over [`Scalar`] so estimators can run in
//! `f32` or `f64`. The trait is a thin bundle of `num-traits` bounds plus
//! conversion helpers for constants, counts, and reporting.

use core::fmt::{Debug, Display};
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar type for estimators, solvers, and reports.
///
/// Implemented for `f32` and `f64` via the blanket impl below. The helper
/// methods panic only when a conversion is impossible for the concrete
/// type, which for the two shipped types means never in practice.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` constant into `Self`.
    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("constant not representable in scalar type")
    }

    /// Converts a count into `Self`.
    ///
    /// Counts used by this crate (sample sizes, replicate counts) stay far
    /// below the 2^24 / 2^53 mantissa limits of the shipped scalar types.
    #[inline]
    fn of_count(n: usize) -> Self {
        Self::from_usize(n).expect("count not representable in scalar type")
    }

    /// Widens to `f64` for formatting and diagnostics.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar not representable as f64")
    }
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + ToPrimitive + NumAssign + Debug + Display + Send + Sync + 'static
{
}
