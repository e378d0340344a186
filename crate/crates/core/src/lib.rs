//! Convexity of free invertibility sets of noncommutative polynomials and rational
//! expressions, with LMI (free spectrahedron) representations and SDP certificates.

pub mod error;
pub mod json;
pub mod linalg;
pub mod ncpoly;
pub mod parser;
pub mod algebra;
pub mod pencil;
pub mod realization;
pub mod sdp;
pub mod convexity;
pub mod cli;

pub use error::{Error, Result};
