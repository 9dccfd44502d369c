//! Optimal stopping for Lévy processes: fluctuation identities, Appell
//! functions, scale functions, threshold solvers and a Monte Carlo oracle.

pub mod appell;
pub mod error;
pub mod fluctuation;
pub mod levy_models;
pub mod numerics;
pub mod scale_functions;
pub mod simulation;
pub mod stopping_solvers;
pub mod verify;

pub use error::{Error, Result};
pub use levy_models::{Family, Horizon, LevyModel};
