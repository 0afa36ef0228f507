//! Local adaptive domain adaptation: domainness maps from a domain
//! discriminator, fused into an object classifier's convolutional features.

pub mod data;
pub mod domainness;
pub mod error;
pub mod experiments;
pub mod formats;
pub mod model;
pub mod nets;

pub use error::{Error, Result};
