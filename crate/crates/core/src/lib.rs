//! Context-dependent fine-grained entity typing over a tree-structured type taxonomy.
//!
//! This crate holds the allocation-only algorithmic core: the taxonomy and its
//! hierarchy queries, the document model, distant-supervision label pruning,
//! mention feature extraction, L2-regularized logistic and softmax training,
//! hierarchical inference, evaluation metrics and annotator consensus.
//!
//! Everything here is `no_std` + `alloc`. File formats, the command line and the
//! annotation service live in the `finetype` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod agreement;
pub mod coarse;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod inference;
pub mod linear;
pub mod math;
pub mod models;
pub mod optim;
pub mod pruning;
pub mod taxonomy;

pub use error::{Error, Result};
pub use taxonomy::{LabelId, LabelSet, Taxonomy};
