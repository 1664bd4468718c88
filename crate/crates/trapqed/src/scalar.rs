//! Floating-point abstraction: every solver in this crate is generic over the
//! scalar type through [`Scalar`], with `f64` as the working default.

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};
use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

/// Real scalar type the numerics are generic over.
///
/// `f64` meets every tolerance in the test suite; `f32` compiles and runs but
/// only makes sense for quick smoke runs.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Convert an `f64` literal. Panics only if the literal is not
    /// representable, which cannot happen for the constants used here.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal must be representable")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Complex number over the crate scalar.
pub type C<T> = Complex<T>;

/// Complex constructor from `f64` literals.
#[inline]
pub fn c<T: Scalar>(re: f64, im: f64) -> C<T> {
    Complex::new(T::lit(re), T::lit(im))
}

/// Complex zero.
#[inline]
pub fn czero<T: Scalar>() -> C<T> {
    Complex::new(T::zero(), T::zero())
}

/// Complex one.
#[inline]
pub fn cone<T: Scalar>() -> C<T> {
    Complex::new(T::one(), T::zero())
}

/// The imaginary unit.
#[inline]
pub fn ci<T: Scalar>() -> C<T> {
    Complex::new(T::zero(), T::one())
}
