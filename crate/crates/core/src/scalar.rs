//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Real floating-point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Complex scalar over a [`Real`] component type.
pub type Cx<T> = Complex<T>;

/// `e^{j phase}`.
#[inline]
pub fn cis<T: Real>(phase: T) -> Cx<T> {
    Complex::new(phase.cos(), phase.sin())
}

#[inline]
pub fn czero<T: Real>() -> Cx<T> {
    Complex::new(T::zero(), T::zero())
}

/// Multiplies by `j`.
#[inline]
pub fn mul_j<T: Real>(z: Cx<T>) -> Cx<T> {
    Complex::new(-z.im, z.re)
}

/// Numerically stable `ln(e^a + e^b)`, tolerating infinities.
pub fn log_add_exp<T: Real>(a: T, b: T) -> T {
    if a == T::neg_infinity() {
        return b;
    }
    if b == T::neg_infinity() {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Logistic function evaluated without overflow.
pub fn sigmoid<T: Real>(logit: T) -> T {
    if logit.is_nan() {
        return T::lit(0.5);
    }
    if logit >= T::zero() {
        T::one() / (T::one() + (-logit).exp())
    } else {
        let e = logit.exp();
        e / (T::one() + e)
    }
}

/// `ln p` with `ln 0 = -inf`.
#[inline]
pub fn ln_prob<T: Real>(p: T) -> T {
    if p <= T::zero() {
        T::neg_infinity()
    } else {
        p.ln()
    }
}
