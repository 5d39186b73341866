//! Topic discovery over short user comments.
//!
//! The pipeline ingests raw comments, cleans and splits them into sentences,
//! embeds and mean-pools them into document vectors, reduces the vectors,
//! clusters them by density and summarises the clusters as topics with
//! trends. The [`evaluation`] module samples and scores the human annotation
//! tasks used to judge topic quality.

pub mod clustering;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod jsonl;
pub mod synthetic;
pub mod topics;

pub use error::{EmbedError, Error, Result};
