//! AutoML for imbalanced trajectory action classification.
//!
//! The pipeline windows instrument trajectories into kinematic features,
//! searches jointly over learning algorithms and their hyperparameters with
//! a random-forest-guided Bayesian optimizer, and combines the best
//! candidates into a weighted-average ensemble.

pub mod bundle;
pub mod cash;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod imbalance;
pub mod learners;
pub mod metalearn;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod space;

pub use error::{Error, Result};
