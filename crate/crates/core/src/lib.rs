//! Numerical laboratory for the equal-mitosis growth-fragmentation equation.

pub mod acceptance;
pub mod branching;
pub mod dual_semigroup;
pub mod entropy;
pub mod error;
pub mod harris;
pub mod measures;
pub mod numerics;
pub mod rates;
pub mod spectral;
pub mod testfns;

pub use error::{Error, Result};
pub use numerics::{GridFunction, LogGrid, Window};
pub use rates::{AssumptionConstants, DivisionRate, RateKind, RateTable};
