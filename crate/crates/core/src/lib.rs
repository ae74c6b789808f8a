//! Random walks on discrete point processes of `Z^d`: environments, walks,
//! exact kernels, cut networks, compression, correctors and statistics.

pub mod corrector;
pub mod env;
pub mod error;
pub mod experiment;
pub mod isoper;
pub mod kernel;
pub mod lattice;
pub mod network;
pub mod stats;
pub mod walk;

pub use env::{Environment, EnvironmentConfig, EnvironmentKind, PointSet};
pub use error::{Error, Result};
pub use lattice::{Direction, LatticePoint};
