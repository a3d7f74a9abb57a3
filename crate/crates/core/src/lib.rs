//! Measurement of adversarial image perturbations and analysis of how well
//! those measurements predict a detector's verdict.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`] holds images and image pairs, PNG I/O and the signed difference.
//! * [`norms`] computes the L0, L1, L2 and L∞ distances of a pair.
//! * [`quality`] computes eight full-reference quality indices
//!   (MSE, UQI, ERGAS, SAM, SCC, RASE, VIFP, PSNR-B).
//! * [`metrics`] bundles all twelve values into a named feature row.
//! * [`forest`] is a random-forest classifier with Pearson screening,
//!   stratified splitting, impurity importances and leave-one-attack-out.
//! * [`datagen`] produces synthetic perturbation families and a threshold
//!   detector so the whole chain can run without real attacks.
//! * [`pipeline`] implements the batch commands and the CSV/JSON file formats.

pub mod datagen;
pub mod error;
pub mod forest;
pub mod metrics;
pub mod norms;
pub mod pipeline;
pub mod quality;
pub mod tensor;

pub use error::{Error, Result};
pub use metrics::{MetricName, MetricVector};
pub use tensor::{ImagePair, ImageTensor};
