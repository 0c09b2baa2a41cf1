//! Incremental generative dependency parsing with ranked parallel path
//! search, word-by-word surprisal, and voxelwise fMRI regression.

pub mod cli;
pub mod error;
pub mod evaluation;
pub mod neuro;
pub mod scoring;
pub mod search;
pub mod surprisal;
pub mod synth;
pub mod trainer;
pub mod transition;
pub mod treebank;

pub use error::{Error, Result};
