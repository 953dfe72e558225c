//! Pedestrian flock detection from multi-agent trajectories.
//!
//! The pipeline has two stages. A small sequence classifier (Elman RNN, LSTM
//! or Transformer encoder, all trained from scratch in [`seqnet`]) decides for
//! a pair of pedestrians whether they walk together. Within a time-binned
//! scene every pair is evaluated and the positive pairs are merged into flocks
//! with a path-compressing union-find ([`aggregate`]).
//!
//! Supporting modules:
//!
//! * [`model`]: shared domain types (trajectory points, group annotations).
//! * [`ingest`]: trajectory CSV and group-file parsers, synthetic generator.
//! * [`scene`]: time-bin scene construction and labeled pair datasets.
//! * [`features`]: per-step pair features, DTW / FastDTW, column scalers.
//! * [`pipeline`]: glue used by the CLI and the acceptance suite.

pub mod aggregate;
pub mod error;
pub mod features;
pub mod ingest;
pub mod linalg;
pub mod model;
pub mod par;
pub mod pipeline;
pub mod scene;
pub mod seqnet;

pub use error::{Error, Result};
pub use par::Execution;
