//! Decision forests over temporal transitions in skeleton sequences.
//!
//! Ordinary random forests classify each frame of a sequence on its own;
//! whatever order the frames arrive in, the votes are the same. The
//! forests built here additionally learn how frames *follow* each other:
//! while a tree grows, pairs of frames a fixed temporal distance apart are
//! tracked through the tree together, and a node may choose its split to
//! make those pair trajectories class-discriminative rather than the
//! static frame distribution. At inference time the leaf-to-leaf
//! transition statistics gathered during training multiply into the
//! per-frame posterior, which turns a static classifier into a temporal
//! one with the same evaluation cost.
//!
//! The crate covers the full pipeline: dataset loading and synthesis
//! ([`data`]), frame feature extraction ([`features`]), split statistics
//! ([`stats`]), tree growth ([`tree`]), ensembles over several temporal
//! distances with binary model storage ([`forest`]), frame/sequence
//! prediction ([`inference`]), online action detection ([`detect`]),
//! evaluation metrics ([`metrics`]), and config-driven experiment runs
//! ([`experiment`]). The `tforest` binary exposes all of it on the
//! command line.

pub mod data;
pub mod detect;
pub mod error;
pub mod experiment;
pub mod features;
pub mod forest;
pub mod inference;
pub mod metrics;
pub mod stats;
pub mod tree;

pub use error::{Error, Result};
