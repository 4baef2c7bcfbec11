//! Laminated-core eddy-current solver using multiscale finite elements in a
//! current-vector-potential formulation, with an equilibrated-flux error
//! estimator and an adaptive refinement loop.

pub mod assembly;
pub mod cli;
pub mod config;
pub mod error;
pub mod estimator;
pub mod fespace;
pub mod linsolve;
pub mod mesh;
pub mod quadrature;
pub mod reference;
pub mod sources;
pub mod thickness;
pub mod vtk;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
