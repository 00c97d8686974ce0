//! Reduced-order surrogates for parametric surface deformation fields:
//! PCA/least-squares field interpolation, field-to-parameter regressors and
//! the mapping of regression errors back onto the geometry.

pub mod analysis;
pub mod ensemble;
pub mod error;
pub mod geometry;
pub mod interpolation;
pub mod pipeline;
pub mod reduction;
pub mod regressors;
pub mod store;

pub use error::{PrevisError, Result};
