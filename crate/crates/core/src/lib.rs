//! Error taxonomy engine for image-classifier mispredictions.
//!
//! Every top-1 error of a classifier is assigned to the least severe of six
//! explanations (class overlap, missing multi-label, fine-grained,
//! fine-grained out-of-vocabulary, non-prototypical, spurious correlation)
//! or, failing all of them, counted as an unexplained model failure.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the command
//! line and fixture generation live in the `erratlas` companion crate.
//!
//! ## Modules
//!
//! - [`label_space`]: class vocabulary, groups, overlap relation, superclasses
//!   and the hypernym DAG.
//! - [`annotations`]: per-image ground truth, multi-label verdicts and the
//!   non-prototypical set.
//! - [`embedding`]: exact cosine k-NN and open-world proposal scoring.
//! - [`cooccurrence`]: spurious-correlation pair mining.
//! - [`cascade`]: the severity-ordered classification of a single error.
//! - [`metrics`] and [`trend`]: accuracies, per-group aggregation, expert
//!   comparison and linear trend fits.

#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod annotations;
pub mod cascade;
pub mod cooccurrence;
pub mod embedding;
mod ids;
pub mod label_space;
pub mod metrics;
pub mod trend;

pub use annotations::{AnnotationError, AnnotationParts, AnnotationStore, ImageAnnotation, Verdict};
pub use cascade::{
    CascadeConfig, CascadeContext, CascadeError, DatasetMode, ErrorCategory, ErrorRecord,
    Evidence, ModelRun, Outcome, Stage,
};
pub use cooccurrence::{extract_pairs, PairMining, PairSet};
pub use embedding::{EmbeddingError, EmbeddingMatrix, LabeledIndex, Neighbor, ProposalScores};
pub use ids::{IdError, ImageId, SynsetId};
pub use label_space::{Group, HypernymGraph, LabelSpace, LabelSpaceError, LabelSpaceParts, OverlapSpec};
