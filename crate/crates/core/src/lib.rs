//! Pseudo-spectral solver for the Pitaevskii two-fluid model of superfluidity on
//! the periodic unit box, with diagnostics for its conservation laws, decay
//! envelopes, and density-positivity criteria.

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod io;
pub mod lagrangian;
pub mod model;
pub mod oracles;
pub mod spectral;
pub mod timestepper;
pub mod verify;

pub use error::{Error, Result};
pub use model::{Params, State};
pub use spectral::{Grid, Repr, ScalarField, VectorField};
