//! Doubly warped products, their isometric immersions, and numerical
//! verification of the curvature identities and inequalities they satisfy.

pub mod chenineq;
pub mod dwp;
pub mod dwpimm;
pub mod error;
pub mod exprs;
pub mod harness;
pub mod riemann;
pub mod submanifold;

pub use error::{Error, Result};
