//! Online unsupervised domain adaptation on the Grassmann manifold.

pub mod cli;
pub mod error;
pub mod gfk;
pub mod grassmann;
pub mod mean;
pub mod pipeline;
pub mod predict;

pub use error::{Error, Result};
