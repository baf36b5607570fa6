//! Driven elliptical quantum billiards in a circular Bessel basis.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod cli;
pub mod clock;
pub mod driving;
pub mod error;
pub mod model;
pub mod ode;
pub mod output;
pub mod perturbation;
pub mod propagator;
pub mod scan;
pub mod spectrum;

pub use error::{Error, Result};
