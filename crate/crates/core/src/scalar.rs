use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point scalar every numerical routine in this crate is generic
/// over. Implemented for `f32` and `f64`; the pipeline and file formats use
/// `f64` (see the aliases at the crate root).
pub trait Scalar:
    Float + FromPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Shorthand for lifting an `f64` constant into the generic scalar type.
#[inline]
pub fn fl<F: Scalar>(x: f64) -> F {
    F::from_f64(x).expect("f64 constant representable in scalar type")
}

/// Shorthand for lifting a count into the generic scalar type.
#[inline]
pub fn fu<F: Scalar>(n: usize) -> F {
    F::from_usize(n).expect("usize representable in scalar type")
}
