//! Allocation-only core of the ECG CNN-VAE pipeline.
//!
//! Everything in this crate is a pure computation over in-memory buffers:
//! record and label types, a deterministic synthetic ECG generator, lead-wise
//! normalization and class balancing, a small 1D convolutional network with
//! hand-written backward passes, weighted BCE + Adam training with plateau /
//! early-stop callbacks, and multi-label evaluation metrics. File formats
//! other than the in-memory checkpoint codec live in the `ecg-cvae` crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod nn;
pub mod preprocess;
pub mod tensor;
pub mod training;

pub use dataset::{Corpus, DiagClass, EcgRecord, LabelMatrix, LabelSet, NUM_CLASSES};
pub use error::{Error, Result};
pub use tensor::{SignalBatch, Tensor3};
