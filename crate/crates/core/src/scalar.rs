//! Scalar abstraction shared by the closed-form layers of the crate.
//!
//! Pointwise analytic objects (bubble profiles, interaction terms, the ball
//! Green kernels, the K catalogue) are written once over [`Scalar`] and are
//! usable with `f32` or `f64`. Quadrature-backed code works in `f64`.

use num_traits::{Float, FloatConst, FromPrimitive, NumCast};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating point scalar: f32 or f64.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + NumCast + Sum + Debug + Display + Send + Sync + 'static
{
    /// Converts a literal; panics only for values not representable at all.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Euclidean dot product.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

#[inline]
pub fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

#[inline]
pub fn dist2<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

#[inline]
pub fn dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    dist2(a, b).sqrt()
}

/// Distance to the boundary of the unit ball, `1 - |a|`.
#[inline]
pub fn boundary_distance<T: Scalar>(a: &[T]) -> T {
    T::one() - norm(a)
}

/// `a + s * b`
pub fn axpy<T: Scalar>(a: &[T], s: T, b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x + s * y).collect()
}

/// Unit vector `e_k` in `R^dim`.
pub fn unit<T: Scalar>(dim: usize, k: usize) -> Vec<T> {
    let mut v = vec![T::zero(); dim];
    v[k] = T::one();
    v
}

/// Point `s * e_1` in `R^dim`.
pub fn on_axis<T: Scalar>(dim: usize, s: T) -> Vec<T> {
    let mut v = vec![T::zero(); dim];
    v[0] = s;
    v
}
