//! Random streams, predictor samplers, quadrature rules and the small dense
//! linear algebra the rest of the crate leans on.

mod linalg;
mod quadrature;
mod rng;
mod sampling;

pub use linalg::{cholesky, cholesky_solve};
pub use quadrature::{quad_integrate, riemann_weights, QuadratureMode, TimeGrid};
pub use rng::RngStream;
pub use sampling::{equicorrelation, sample_equicorr_normal, sample_mvn, sample_uniform_cube};
