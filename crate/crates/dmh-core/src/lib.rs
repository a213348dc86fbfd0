//! Decorrelated multimodal hashing: learn one short binary code per
//! sample from several feature views (plus an optional label view) such
//! that Hamming distance reflects semantic similarity across modalities.
//!
//! Each view learns a sigmoid embedding `C = sigma(beta * X W + 1 v^T)`;
//! all views share a binary code matrix `B` obtained by rounding the
//! weighted average embedding. Training alternates the closed-form `B`
//! update with gradient steps on `W` and `v`, under an objective that
//! adds a minimum-correlation penalty `gamma * ||C^T C / n||_F^2` per view
//! to keep code bits decorrelated as the code length grows.
//!
//! The crate is organized along the pipeline:
//!
//! * [`model`] — embeddings, objective, code update, analytic gradients;
//! * [`optimizer`] — the alternating training loop and its schedule;
//! * [`codes`] — bit-packed codes and Hamming kernels;
//! * [`eval`] — Hamming-ranking MAP and hash-lookup F1;
//! * [`geometry`] — numerical oracles for the regularizer's geometry;
//! * [`data`] — datasets, synthetic instances, splits, feature scaling;
//! * [`io`] — bit-exact matrix / code / model file formats;
//! * [`checks`] — finite-difference and proposition self-checks;
//! * [`pipeline`] — end-to-end orchestration shared with the CLI.

pub mod checks;
pub mod codes;
pub mod data;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod model;
pub mod optimizer;
pub mod pipeline;

pub use codes::{distances_to_all, encode_view, hamming_distance, PackedCodes};
pub use data::{generate_synthetic, split_dataset, MultimodalDataset, SyntheticSpec};
pub use error::{DmhError, Result};
pub use eval::{evaluate_cross_modal, EvalReport};
pub use model::{CodeMatrix, ViewParams};
pub use optimizer::{train, train_prototype, TrainConfig, TrainResult, ViewHyper};
