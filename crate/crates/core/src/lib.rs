//! Saddlepoint approximation for the density of a sample mean of i.i.d.
//! random vectors whose dimension may grow with the sample size, together
//! with exact oracles for the symmetric Gaussian mixture.

pub mod correction;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod quad;
pub mod saddle;
pub mod spa;

pub use error::{Error, Result};
