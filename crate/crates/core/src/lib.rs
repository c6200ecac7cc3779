//! Hierarchical reserving for reported-but-not-settled (RBNS) claims.
//!
//! Individual claim development is modelled year by year as an ordered stack
//! of layers (settlement, payment, payment size). Each layer is a regression
//! model fitted on the claim-years that pass its filter; future development
//! is simulated layer by layer to produce reserve distributions. The
//! [`aggregate`] module holds the triangle-based methods (chain ladder, Mack,
//! multiplicative/ODP fits, DCL and CRM style models) together with the
//! likelihood ratio test used to choose between aggregate and individual
//! reserving.

pub mod aggregate;
pub mod data;
pub mod density;
pub mod engines;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod model;
pub mod rng;
pub mod synthetic;
pub mod weights;

pub use error::{Error, Result};
