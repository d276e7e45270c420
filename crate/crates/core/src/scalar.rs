//! Scalar abstraction shared by the numeric modules.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point type the linear algebra, detectors and closed forms are
/// written against. Implemented for `f32` and `f64`.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from `f64`; every supported type represents any
    /// finite `f64` up to rounding.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts to every Scalar")
    }

    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("usize converts to every Scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }
}

impl<T> Scalar for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + ToPrimitive
        + Debug
        + Display
        + Default
        + Send
        + Sync
        + 'static
{
}

/// Sum with a fixed left-to-right order.
pub(crate) fn ordered_sum<T: Scalar>(values: impl IntoIterator<Item = T>) -> T {
    values.into_iter().fold(T::zero(), |acc, v| acc + v)
}
