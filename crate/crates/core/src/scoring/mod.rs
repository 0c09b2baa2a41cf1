//! Probability factors for arc-hybrid transitions.
//!
//! Every factor is conditioned on the encodings of the stack top `i` and the
//! buffer front `j`: the shift/reduce decision, the left/right arc
//! direction, the arc label, and the next word generated by a shift. Each
//! factor is an independent affine map plus softmax over `[h_i; h_j]`.

mod checkpoint;
mod external;
mod loss;
mod model;
mod params;
mod table;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use external::ExternalEncodings;
pub use loss::{nll_loss, LossBreakdown, OracleEvents};
pub use model::{
    encode_prefix, EncoderKind, EncoderSpec, InputMode, ModelConfig, ParserModel, PrefixEncoding,
    PreparedSentence,
    SentenceScorer,
};
pub use params::ParamSet;
pub use table::{TableEntry, TableScorer};

use crate::transition::Configuration;

/// Natural-log factors at one `(stack top, buffer front)` pair, before
/// legality renormalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Factors {
    pub shift: f64,
    pub reduce: f64,
    pub left: f64,
    pub right: f64,
    pub labels: Vec<f64>,
    /// ln p_gen of the word generated if this configuration shifts.
    pub next_word: f64,
}

impl Factors {
    pub fn best_label(&self) -> u32 {
        let mut best = 0;
        for (k, &v) in self.labels.iter().enumerate() {
            if v > self.labels[best] {
                best = k;
            }
        }
        best as u32
    }
}

/// Supplies factors for every configuration of one sentence.
pub trait Scorer {
    fn n_tokens(&self) -> usize;

    fn n_labels(&self) -> usize;

    /// ln p_gen of the first word, generated before any transition.
    fn first_word(&self) -> f64;

    fn factors(&self, c: &Configuration) -> &Factors;
}

/// Linear-domain distributions at one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreBundle {
    pub p_shift: f64,
    pub p_reduce: f64,
    pub p_la: f64,
    pub p_ra: f64,
    pub word_dist: Vec<f64>,
    pub label_dist: Vec<f64>,
}

pub fn log_softmax_pair(a: f64, b: f64) -> (f64, f64) {
    let m = a.max(b);
    let z = m + ((a - m).exp() + (b - m).exp()).ln();
    (a - z, b - z)
}

pub fn log_sum_exp(xs: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.into_iter().collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
