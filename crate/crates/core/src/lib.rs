//! Online uncertainty-aware radiance fields for image-goal navigation.

pub mod error;
pub mod rng;
pub mod world;
pub mod field;
pub mod render;
pub mod tensor;
pub mod extract;
pub mod policy;
pub mod eval;
pub mod config;
pub mod viz;

pub use error::{Error, Result};
