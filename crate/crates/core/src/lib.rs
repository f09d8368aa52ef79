//! Complementary-product recommendation from purchase logs.
//!
//! Items are linked by a powered random-walk projection of the user-item
//! graph, and each link is weighted by how often the target item follows the
//! source item in purchase sequences.

pub mod dataset;
pub mod directionality;
pub mod error;
pub mod eval;
pub mod format;
pub mod model;
pub mod projection;
pub mod sparse;
pub mod synthetic;

#[cfg(feature = "cli")]
pub mod cli;

pub use dataset::{Interaction, InteractionLog};
pub use error::{Error, FormatError, Result};
pub use model::{build_model, ComplementarityModel, ModelParams, Recommendation};
