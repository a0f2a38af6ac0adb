pub mod container;
pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod normalize;
pub mod pipeline;
pub mod sif;
pub mod tagger;

pub use error::{Error, Result};
