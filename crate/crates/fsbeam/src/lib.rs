//! Geometrically exact spatial Bernoulli-Euler beam elements built on the
//! Frenet-Serret frame of the beam axis, discretized with NURBS.

pub mod assembly;
pub mod bench;
pub mod constraints;
pub mod constitutive;
pub mod error;
pub mod geometry;
pub mod kinematics;
pub mod model;
pub mod oracle;
pub mod quadrature;
pub mod report;
pub mod solver;
pub mod splines;

pub use error::{Error, Result};
