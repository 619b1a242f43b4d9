//! Bubble analysis, Green functions, energy expansions and reduced
//! pseudogradient flows for the critical Navier bilaplacian problem
//! `Δ²u = K u^{(n+4)/(n−4)}` on the unit ball.
//!
//! The closed-form layers are generic over [`Scalar`]; the aliases below fix
//! them to `f64`, which is what the numerical layers use.

// `!(x > 0.0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bubbles;
pub mod cli;
pub mod constants;
pub mod energy;
pub mod error;
pub mod flow;
pub mod green;
pub mod morse;
pub mod numerics;
pub mod projection;
pub mod scalar;
pub mod special;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Bubble = bubbles::Bubble<f64>;
pub type BubblePair = bubbles::BubblePair<f64>;

pub fn c_n(n: usize) -> f64 {
    constants::c_n::<f64>(n)
}

pub fn delta_eval(b: &Bubble, x: &[f64]) -> f64 {
    bubbles::delta_eval(b, x)
}

pub fn eps(p: &BubblePair) -> f64 {
    bubbles::eps(p)
}

pub fn green_navier(x: &[f64], y: &[f64]) -> Result<f64> {
    green::green_navier(x, y)
}

pub fn regular_part_h(x: &[f64], y: &[f64]) -> Result<f64> {
    green::regular_part_h(x, y)
}

pub fn robin(a: &[f64]) -> Result<f64> {
    green::robin(a)
}
