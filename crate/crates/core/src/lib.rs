//! Topological features of transformer attention graphs.
//!
//! Each attention head of a sample yields a weighted digraph over the tokens.
//! Thresholding it at a fixed schedule and forgetting edge directions gives a
//! nested family of undirected graphs whose Betti numbers (components and
//! independent cycles) form the sample's features. A logistic regression on
//! those features classifies samples, and per-head classifiers rank heads by
//! how much class information their topology carries.
//!
//! Modules, bottom-up:
//!
//! * [`graph`]: graphs, β0/β1 and a GF(2) oracle
//! * [`filtration`]: attention maps, threshold schedules, Betti curves, barcodes
//! * [`features`]: heads, tensors, feature vectors and matrices
//! * [`classifier`] and [`metrics`]: logistic regression, Matthews score, accuracy
//! * [`heads`]: per-head score grid and ranking
//! * [`synth`]: reference attention and a synthetic dataset
//! * [`tensor_file`] and [`manifest`]: on-disk formats
//! * [`cli`]: the `attn-topo` commands

pub mod classifier;
pub mod cli;
pub mod error;
pub mod features;
pub mod filtration;
pub mod graph;
pub mod heads;
pub mod manifest;
pub mod metrics;
pub mod synth;
pub mod tensor_file;
pub mod union_find;

pub use error::{Error, Result};
pub use features::{AttentionTensor, FeatureMatrix, FeatureVector, HeadId};
pub use filtration::{AttentionMap, BettiCurve, ThresholdSchedule};
pub use graph::{BettiPair, UndirectedGraph};
