//! Joint aspect/opinion extraction and aspect-level sentiment classification.
//!
//! The network encodes a sentence with pretrained word vectors, an n-gram CNN and a
//! graph convolution over its dependency parse whose edges carry trainable relation-type
//! embeddings. Two task heads (term extraction, token-level sentiment) then exchange
//! information for a fixed number of rounds: sentiment attention is steered toward
//! tokens predicted to be opinion words, and the shared representation is re-encoded
//! from the task-specific hidden states.

pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod exec;
pub mod graph;
pub mod model;
pub mod numerics;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};
