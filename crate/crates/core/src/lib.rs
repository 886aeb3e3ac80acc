//! Regularity of point sequences on the flat torus measured through optimal
//! transport.
//!
//! The crate is organised bottom-up:
//!
//! * [`torus`] holds points, point sets, empirical measures and the
//!   wrap-around metric.
//! * [`sequences`] generates Kronecker, van der Corput, quadratic-residue,
//!   grid and seeded random point sets.
//! * [`numtheory`] provides nearest-integer distances, continued fractions,
//!   badness certificates and the geometric-series bound on Weyl sums.
//! * [`spectral`] evaluates exponential sums, diaphonies and the
//!   heat-smoothed upper bound on `W_2(mu, dx)`.
//! * [`transport`] computes exact transport distances (circle closed forms,
//!   a network-simplex oracle and a two-dimensional semidiscrete bracket).
//! * [`integration`] measures quadrature errors against the Lipschitz,
//!   `L^2`-refined and `L^1`-refined bounds.
//! * [`fit`] does the log-log least-squares used by every scaling study.

pub mod error;
pub mod fit;
pub mod integration;
pub mod numtheory;
pub mod sequences;
pub mod spectral;
pub mod summation;
pub mod torus;
pub mod transport;

pub use error::{Error, Result};
pub use torus::{EmpiricalMeasure, GradientStats, PointSet, TorusPoint};
