//! Scalar abstraction for the floating-point parts of the crate.
//!
//! Counting quantities (coverage, overlap, mean absolute difference) are kept
//! exact as [`Fraction`]s and only converted to a float scalar at the edge.

use std::fmt::{Debug, Display};

use num_rational::Ratio;
use num_traits::{Float, FromPrimitive, ToPrimitive};

/// floating point: f32 or f64
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Default + Debug + Display + Send + Sync + 'static
{
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 representable in scalar")
    }

    fn of_u64(v: u64) -> Self {
        Self::from_u64(v).expect("u64 representable in scalar")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Exact ratio of two pixel counts.
pub type Fraction = Ratio<u64>;

pub fn fraction_to<S: Scalar>(f: Fraction) -> S {
    S::of_u64(*f.numer()) / S::of_u64(*f.denom())
}
