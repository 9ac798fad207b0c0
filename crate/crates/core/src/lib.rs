//! Artifact-robust graph classification of tiled images.
//!
//! Images are tiled into patches, each patch becomes a node with a feature
//! vector, and nodes are joined into a k-nearest-neighbour graph. A GCN embeds
//! the nodes, an untrained graph prior optionally denoises the embeddings, a
//! learned top-k pool keeps a fixed budget of nodes, and a CLS-token
//! transformer predicts the grade.

pub mod cli;
pub mod corruption;
pub mod denoiser;
pub mod error;
pub mod gcn;
pub mod graphbuild;
pub mod imageio;
pub mod numcore;
pub mod pooltrans;
pub mod synth;
pub mod trainer;
pub mod util;

pub use error::{Error, Result};
