#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod domain;
pub mod error;
pub mod experiments;
pub mod extension;
pub mod io;
mod krylov;
pub mod linear;
pub mod operators;
pub mod quadrature;
pub mod semilinear;

pub use domain::{build_domain, NodalField, RectDomain, SpectralField};
pub use error::{Error, Result};
pub use quadrature::QuadratureSpec;
