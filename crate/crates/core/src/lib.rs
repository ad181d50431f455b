//! Swarms of particles on spheres: simulation, Watanabe–Strogatz reduction,
//! cross-ratio invariants and kinetic diagnostics.

pub mod dynamics;
pub mod ensemble;
pub mod export;
pub mod functionals;
pub mod error;
pub mod geometry;
pub mod kinetic;
pub mod quadrature;
pub mod rng;
pub mod ws_transform;

pub use dynamics::{simulate, simulate_observed, step, DrivingField, FieldReplay, Trajectory};
pub use ensemble::{Ensemble, Omegas};
pub use error::{Error, Result};
pub use geometry::{BallVector, Rotation, SkewMatrix, UnitVector};
