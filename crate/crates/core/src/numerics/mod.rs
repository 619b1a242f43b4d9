//! Quadrature, quasi-random sampling and ODE integration.

pub mod gauss;
pub mod ode;
pub mod qmc;
pub mod quad;

pub use gauss::GaussLegendre;
pub use ode::{Event, OdeOutcome, OdeSpec, Stop};
pub use quad::{
    integrate_ball, integrate_radial_rn, Center, Domain, QuadResult, QuadratureSpec, Symmetry,
};
