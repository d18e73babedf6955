//! Numerical and symbolic toolkit for quadratic optimal control of quantum
//! stochastic processes at small matrix dimension.
//!
//! The crate has two halves. The symbolic half (`ito`) manipulates formal
//! noncommutative polynomials over noise differentials and verifies the
//! algebraic identities the whole control theory rests on. The numeric half
//! (`operator`, `flow`, `collision`, `riccati`, `control`) works with dense
//! complex matrices at dimension <= 32 and cross-checks every solver against
//! an independent route.

pub mod collision;
pub mod control;
pub mod error;
pub mod flow;
pub mod grid;
pub mod ito;
pub mod operator;
pub mod riccati;
pub mod rng;

pub use error::{Error, Result};
