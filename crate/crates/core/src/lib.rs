//! Discrete calculus and gradient flows on cubic discretizations of the flat torus.

pub mod ac_flow;
pub mod calculus;
pub mod circulant;
pub mod error;
pub mod gamma;
pub mod grid;
pub mod interp;
pub mod poincare;
pub mod quadrature;
pub mod trajectory;
pub mod tv_flow;
pub mod verify;

pub use error::{Error, Result};
