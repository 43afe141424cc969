//! Floating-point sample type shared by every numeric routine.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Sample type for images, kernels and model parameters.
///
/// Implemented for `f32` and `f64`. Inner products are accumulated in `f64`
/// regardless of the storage type, so results are reproducible across both.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Default + Debug + Display + Sum + Send + Sync + 'static
{
    /// Lossless widening (f32) or identity (f64).
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        // Both implementors are finite-width IEEE floats; the cast cannot fail.
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).unwrap_or_else(Self::nan)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
