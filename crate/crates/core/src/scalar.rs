//! Floating-point abstraction shared by scorers, losses and metrics.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar used for features, weights and scores.
///
/// Implemented for `f32` and `f64`. Configuration values are kept as `f64`
/// and converted with [`Scalar::lit`] at the point of use.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Name written into checkpoints.
    const NAME: &'static str;

    /// Converts an `f64` constant. Panics only for values the type cannot hold.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";
}

/// `max(0, a - b)`.
#[inline]
pub fn hinge<T: Scalar>(a: T, b: T) -> T {
    let diff = a - b;
    if diff > T::zero() {
        diff
    } else {
        T::zero()
    }
}

/// Subgradient of [`hinge`] with respect to `a`; zero at the kink.
#[inline]
pub fn hinge_slope<T: Scalar>(a: T, b: T) -> T {
    if a - b > T::zero() {
        T::one()
    } else {
        T::zero()
    }
}
