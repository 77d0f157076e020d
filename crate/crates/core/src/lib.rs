//! Primary user emulation attack (PUEA) detection for cognitive radio networks.
//!
//! The crate covers the whole pipeline run at a fusion center:
//!
//! * [`scenario`] places secondary users, a primary user and an attacker in a
//!   plane and draws per-slot received energies under path loss with
//!   log-normal shadowing.
//! * [`features`] reduces each slot's reports to a five-number summary
//!   (mean, variance, median, quartiles) and persists labelled datasets as CSV.
//! * [`oneclass`] holds four novelty detectors (isolation forest, one-class
//!   SVM, minimum covariance determinant, local outlier factor) trained on
//!   primary-user data only.
//! * [`eval`] computes confusion-matrix metrics, k-fold cross-validation and
//!   the full experiment grid.
//!
//! Every random draw goes through [`rng`] so results are reproducible for a
//! fixed seed regardless of thread count.

// NaN-rejecting `!(x > 0.0)` checks and index loops over small matrices are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod error;
pub mod eval;
pub mod features;
pub mod oneclass;
pub mod rng;
pub mod scenario;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use eval::{ConfusionMatrix, CvReport, MetricsReport};
pub use features::{Dataset, Example, FeatureVector, Label};
pub use oneclass::{Detector, DetectorKind, DetectorParams, Prediction};
pub use scenario::{ChannelParams, Placement, Position, SlotReport, Source, Topology, TransmitterProfile};
