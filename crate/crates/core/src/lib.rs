//! Numerical laboratory for Toeplitz operators on Bergman and Fock spaces and for
//! composition operators on weighted Hardy-type spaces.

pub mod asymptotics;
pub mod berezin;
pub mod composition;
pub mod eigen;
pub mod error;
pub mod experiment;
pub mod harmonic;
pub mod lattice;
pub mod measures;
pub mod plot;
pub mod profile;
pub mod quadrature;
pub mod spaces;
pub mod toeplitz;

pub use error::{BslError, Result};
