//! Hypergraph-enhanced cascading graph convolution for multi-behavior
//! recommendation.
//!
//! The crate covers the whole pipeline: ingesting per-behavior interaction
//! files ([`dataset`]), building normalized bipartite graphs ([`graph`]), a
//! small reverse-mode differentiation engine ([`autodiff`]), the forward
//! model ([`model`]), its losses ([`objective`]), Adam training with early
//! stopping and checkpoints ([`trainer`]) and leave-one-out evaluation
//! ([`evaluator`]).

pub mod autodiff;
pub mod dataset;
pub mod error;
pub mod evaluator;
pub mod gradcheck;
pub mod graph;
pub mod model;
pub mod objective;
pub mod synthetic;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::{Scalar, Tensor};
