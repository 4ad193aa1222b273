//! Scalar abstraction shared by every probability computation in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type used for probabilities and log-likelihoods.
///
/// Implemented for `f32` and `f64`. Tolerances that the crate states in
/// absolute terms (e.g. "sums to 1 within 1e-9") are clamped from below by
/// the type's own resolution through [`Scalar::tol`].
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossless-enough conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    /// `base` if the type can resolve it, otherwise a small multiple of epsilon.
    fn tol(base: f64) -> Self {
        let floor = Self::epsilon() * Self::lit(1024.0);
        Self::lit(base).max(floor)
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `log(sum(exp(xs)))`, returning `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp<F: Scalar>(xs: impl IntoIterator<Item = F> + Clone) -> F {
    let max = xs
        .clone()
        .into_iter()
        .fold(F::neg_infinity(), |m, x| m.max(x));
    if max == F::neg_infinity() {
        return max;
    }
    let sum: F = xs.into_iter().map(|x| (x - max).exp()).sum();
    max + sum.ln()
}
