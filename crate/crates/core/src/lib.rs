//! Compatible finite-element rotating shallow water solver on a doubly
//! periodic plane, with upwinded potential vorticity and energy-conserving
//! implicit time stepping.

pub mod checks;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod initial;
pub mod mesh;
pub mod operators;
pub mod output;
pub mod pv;
pub mod refelem;
pub mod runner;
pub mod sparse;
pub mod timestepper;
pub mod upwinding;

pub use error::{Result, SweError};
