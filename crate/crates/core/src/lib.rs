//! Sliding vector fields on a codimension-one discontinuity surface.
//!
//! A piecewise-continuous field is a pair `(X1, X2)` living on either side of a
//! surface `x_n = u(x_1, ..., x_{n-1})`. On the part of the surface where the
//! two fields push in opposite normal directions (the sliding region) some rule
//! has to pick a tangent velocity. This crate provides
//!
//! * [`geometry`]: surface charts, the flattening diffeomorphism and pushforwards,
//! * [`fields`]: piecewise fields, normal components and region classification,
//! * [`sliding_laws`]: characteristic maps and the generating maps they induce,
//!   including the Filippov convex combination,
//! * [`audit`]: randomized checks of the structural properties a sliding law
//!   must satisfy,
//! * [`integrator`]: an event-driven fixed-step integrator with sliding motion.

pub mod audit;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod integrator;
pub mod sliding_laws;

pub use error::{Error, Result};
pub use fields::{gap, PiecewiseField, RegionKind};
pub use geometry::{Diffeo, Matrix, SurfaceChart, TangentVector, Vector, VectorField};
pub use sliding_laws::{CharacteristicMap, GeneratingMap};
