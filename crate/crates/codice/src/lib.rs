//! Counterfactual explanations for tabular models, searched with a genetic
//! algorithm over a composite objective: outcome loss, proximity on the data
//! manifold (diffusion distance or weighted L1), sparsity, and directional
//! coherence of the proposed feature changes.
//!
//! The crate is organized around a small pipeline:
//!
//! 1. [`schema`] / [`dataset`] — feature declarations, CSV ingestion,
//!    train/test splitting, and synthetic manifold generators ([`synthetic`]).
//! 2. [`preprocess`] — standardization, one-hot encoding, and per-feature
//!    median absolute deviations.
//! 3. [`model`] — the black-box prediction contract plus built-in trainable
//!    reference models (logistic, k-NN, ridge).
//! 4. [`diffusion`] — self-tuning diffusion maps and the diffusion distance,
//!    with Nystrom extension for out-of-sample points.
//! 5. [`coherence`] / [`objective`] — directional-coherence scoring and the
//!    composite counterfactual objective.
//! 6. [`search`] — the genetic optimizer returning a [`search::CounterfactualResult`].
//! 7. [`metrics`] / [`harness`] — evaluation metrics, benchmark/ablation/sweep
//!    protocols, and report emission.

pub mod coherence;
pub mod dataset;
pub mod diffusion;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod objective;
pub mod preprocess;
pub mod schema;
pub mod search;
pub mod synthetic;

pub use error::{Error, Result};
