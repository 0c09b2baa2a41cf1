//! Synthetic data: treebanks from a small grammar and planted-effect
//! fMRI experiments.

mod experiment;
mod grammar;

pub use experiment::{
    analyze, compact_region, generate_dataset, regressor_name, simulate_panels, ExperimentConfig, ExperimentResult,
    SynthDataset,
};
pub use grammar::TreebankGrammar;
