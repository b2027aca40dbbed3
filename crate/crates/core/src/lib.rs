//! Contextual transducer ASR, computational core.
//!
//! Everything in this crate is pure computation over in-memory values and
//! builds without `std` (only `alloc` is required):
//!
//! - [`numkit`]: dense `f64` tensors, a reverse-mode compute graph and a
//!   finite-difference gradient checker.
//! - [`model`]: the transducer (encoder, stateless predictor, joiner) with a
//!   BiLSTM context encoder and cross-attention biasing adapters that can be
//!   injected after any encoder block.
//! - [`rnnt`]: transducer negative log-likelihood over the output lattice,
//!   plus an exhaustive alignment enumerator used as a test oracle.
//! - [`text`]: alternative-spelling rules, rare-word extraction, biasing-list
//!   construction and transcript perturbation.
//! - [`decode`]: greedy and beam-search decoding with trie-based shallow fusion.
//! - [`eval`]: Levenshtein alignment and WER / U-WER / B-WER.
//! - [`data`]: the synthetic homophone corpus generator.
//! - [`train`]: Adam and the base / biasing training steps.
//!
//! File formats, the CLI and wall-clock benchmarking live in the companion
//! `contextbias` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod data;
pub mod decode;
pub mod error;
pub mod eval;
pub mod math;
pub mod model;
pub mod numkit;
pub mod rnnt;
pub mod text;
pub mod train;

pub use error::{Error, Result};
