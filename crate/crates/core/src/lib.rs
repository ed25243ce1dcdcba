//! Failure-mode discovery and failure-mode-aware remaining useful life (RUL)
//! prediction for run-to-failure multi-sensor data.
//!
//! The pipeline has four stages:
//!
//! 1. [`dataset`]: load C-MAPSS style text files, drop non-informative
//!    sensors, label RUL, min-max scale and cut sliding windows.
//! 2. [`umap`]: embed every (unit, cycle) sensor vector in a low dimensional
//!    space with a fuzzy k-NN graph and an SGD layout.
//! 3. [`trajectory`]: follow each unit through the embedding and group the
//!    resulting paths with DTW k-means; each group is a failure mode.
//! 4. [`jointmodel`]: train a mode classifier and one LSTM regressor per mode
//!    under a joint loss with a soft monotonicity penalty.
//!
//! [`eval`] scores predicted RUL sequences and [`pipeline`] drives the whole
//! thing from a config file with cached, manifest-tracked stages.

// NaN must fail range checks, so `!(x > 0.0)` is deliberate throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod error;
pub mod eval;
pub mod jointmodel;
pub mod pipeline;
pub mod rng;
pub mod trajectory;
pub mod umap;

pub use error::{Error, Result};
