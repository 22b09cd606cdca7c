//! Scalar abstraction shared by the operator, state and propagator code.
//!
//! Everything below the experiment layer is written against [`Real`] so that
//! the same operators and integrators run in `f64` (the default, required by
//! the conservation tolerances) or `f32` (quick exploratory runs).

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Complex amplitude over a real scalar.
pub type C<T> = Complex<T>;

pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + LowerExp + Send + Sync + 'static
{
    /// Converts an `f64` literal. Never fails for the supported scalars.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }

    /// Relative floor below which an integration step counts as underflow.
    fn step_floor() -> Self;

    /// Tolerance used when validating norms, traces and Hermiticity of states.
    fn state_tol() -> Self;
}

impl Real for f64 {
    fn step_floor() -> Self {
        1e-15
    }
    fn state_tol() -> Self {
        1e-9
    }
}

impl Real for f32 {
    fn step_floor() -> Self {
        1e-7
    }
    fn state_tol() -> Self {
        1e-5
    }
}

#[inline]
pub(crate) fn czero<T: Real>() -> C<T> {
    C::new(T::zero(), T::zero())
}

#[inline]
pub(crate) fn cone<T: Real>() -> C<T> {
    C::new(T::one(), T::zero())
}

#[inline]
pub(crate) fn ci<T: Real>() -> C<T> {
    C::new(T::zero(), T::one())
}

/// `e^{i theta}`
#[inline]
pub(crate) fn cis<T: Real>(theta: T) -> C<T> {
    C::new(theta.cos(), theta.sin())
}

#[inline]
pub(crate) fn creal<T: Real>(x: T) -> C<T> {
    C::new(x, T::zero())
}
