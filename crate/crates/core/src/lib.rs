//! Multilingual commonsense probing and training toolkit.
//!
//! The crate covers the whole pipeline: sentence scoring with masked language models by
//! pseudo-log-likelihood, the parallel multilingual probe protocol and its hit@k reports,
//! construction of probe corpora (distractor decoding, tagging filters, round-trip translation
//! gating), the multilingual contrastive objective, and zero-shot cross-lingual multiple-choice
//! fine-tuning and evaluation.

pub mod backend;
pub mod builder;
pub mod data;
pub mod error;
pub mod mcp;
pub mod probe;
pub mod report;
pub mod scoring;
pub mod tokenize;
pub mod toy;
pub mod xcsr;

pub use error::{Error, Result};
