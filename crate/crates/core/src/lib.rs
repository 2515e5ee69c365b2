//! On-manifold adversarial data augmentation (OMADA).
//!
//! The crate is organised along the three training phases plus evaluation:
//!
//! - [`tensor`]: dense matrices, feed-forward networks, losses and SGD.
//! - [`manifold`]: autoencoder with a jointly trained latent classifier.
//! - [`attack`]: latent-space sign-gradient attacks, path sampling and the
//!   augmentation set built from decoded path samples.
//! - [`train`]: input-space classifier training with OMADA and baseline
//!   augmentations, ensembles and MC-dropout inference.
//! - [`metrics`]: ACE/ECE, temperature scaling, AUROC, MMC, sparsification.
//! - [`harness`]: synthetic datasets with analytic posteriors, configuration,
//!   checkpoints, experiment orchestration and the CLI.

pub mod attack;
mod csvfmt;
pub mod error;
pub mod harness;
pub mod manifold;
pub mod metrics;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Matrix, Mlp, MlpSpec, Rng};
