//! Two-drone racing along a parametric 3D path.
//!
//! - [`dynamics`]: quadrotor rigid-body model.
//! - [`path`]: parametric curves and projection-point dynamics.
//! - [`objectives`]: path-following costs and the overtaking/obstructing potential.
//! - [`solver`]: continuation/GMRES receding-horizon solver.
//! - [`controllers`]: NMPC and NRHDG racing controllers.
//! - [`race`]: closed-loop races and the progress comparison.
//! - [`demo`]: projection tracking along a prescribed trajectory.
//! - [`io`]: configuration, CSV logs, run manifests and SVG figures.

pub mod controllers;
pub mod demo;
pub mod dynamics;
pub mod error;
pub mod io;
pub mod objectives;
pub mod path;
pub mod race;
pub mod solver;

pub use error::{Error, Result};
