//! Mini-batch training on oracle derivations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{attachment_counts, AttachmentCounts, AttachmentReport};
use crate::scoring::{
    load_checkpoint, nll_loss, save_checkpoint, ExternalEncodings, OracleEvents, ParamSet,
    ParserModel, PreparedSentence,
};
use crate::search::greedy_parse;
use crate::transition::static_oracle;
use crate::treebank::{Sentence, Vocabulary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr0: f64,
    pub decay: f64,
    /// Epochs trained at `lr0` before decay starts.
    pub decay_after: usize,
    pub grad_clip_norm: f64,
    pub dropout: f64,
    pub seed: u64,
    /// Stop after the first epoch whose dev UAS reaches this value.
    pub target_dev_uas: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            epochs: 30,
            lr0: 1.0,
            decay: 1.7,
            decay_after: 6,
            grad_clip_norm: 5.0,
            dropout: 0.5,
            seed: 1,
            target_dev_uas: None,
        }
    }
}

impl TrainConfig {
    /// Schedule for the trainable recurrent encoder; a step size of 1 makes
    /// it diverge.
    pub fn internal_encoder() -> Self {
        TrainConfig {
            lr0: 0.1,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch size and epochs must be positive".into()));
        }
        if !(self.lr0 > 0.0 && self.grad_clip_norm > 0.0) {
            return Err(Error::Config("learning rate and clip norm must be positive".into()));
        }
        if !(self.decay > 1.0) {
            return Err(Error::Config("decay must exceed 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// Learning rate for a 1-based epoch.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        let k = epoch.saturating_sub(self.decay_after);
        self.lr0 / self.decay.powi(k as i32)
    }
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-sentence loss in nats.
    pub loss: f64,
    pub dev_las: f64,
    pub dev_uas: f64,
    pub label_acc: f64,
    pub lr: f64,
}

pub fn write_training_log(log: &[EpochLog], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(e.to_string()))?;
    w.write_record(["epoch", "loss", "dev_las", "dev_uas", "label_acc", "lr"])?;
    for e in log {
        w.write_record([
            e.epoch.to_string(),
            format!("{:.6}", e.loss),
            format!("{:.4}", e.dev_las),
            format!("{:.4}", e.dev_uas),
            format!("{:.4}", e.label_acc),
            format!("{}", e.lr),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// A training sentence with its oracle events.
pub struct Example {
    pub prepared: PreparedSentence,
    pub events: OracleEvents,
}

/// Maps sentences onto model inputs and oracle events. External encodings,
/// when given, are indexed by sentence position.
pub fn prepare_examples(
    model: &ParserModel,
    vocab: &Vocabulary,
    sentences: &[Sentence],
    external: Option<&ExternalEncodings>,
) -> Result<Vec<Example>> {
    sentences
        .iter()
        .enumerate()
        .map(|(id, s)| {
            let ext = external.map(|e| e.get(id).cloned()).transpose()?;
            let prepared = model.prepare(&s.tokens, vocab, ext)?;
            let actions = static_oracle(s, vocab)?;
            let events = OracleEvents::new(&prepared, &actions, model.config.eos)?;
            Ok(Example { prepared, events })
        })
        .collect()
}

/// Batches of indices: sentences of one length per batch, order shuffled.
pub fn length_batches(lengths: &[usize], batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut buckets: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &n) in lengths.iter().enumerate() {
        buckets.entry(n).or_default().push(i);
    }
    let mut batches = Vec::new();
    for (_, mut idx) in buckets {
        idx.shuffle(rng);
        batches.extend(idx.chunks(batch_size).map(<[usize]>::to_vec));
    }
    batches.shuffle(rng);
    batches
}

/// Greedy-decoding accuracy on a set of sentences.
pub fn evaluate(
    model: &ParserModel,
    vocab: &Vocabulary,
    sentences: &[Sentence],
    external: Option<&ExternalEncodings>,
    exclude_punct: bool,
) -> Result<AttachmentReport> {
    let mut total = AttachmentCounts::default();
    for (id, s) in sentences.iter().enumerate() {
        let ext = external.map(|e| e.get(id).cloned()).transpose()?;
        let prepared = model.prepare(&s.tokens, vocab, ext)?;
        let tree = greedy_parse(&model.scorer(&prepared))?;
        total.add(attachment_counts(&tree, s, vocab.labels(), exclude_punct)?);
    }
    Ok(total.report(exclude_punct))
}

/// One SGD step over a batch; returns the mean loss and the pre-clip norm.
pub fn train_batch(
    model: &mut ParserModel,
    examples: &[&Example],
    grads: &mut ParamSet,
    cfg: &TrainConfig,
    lr: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64)> {
    grads.fill_zero();
    let mut loss = 0.0;
    for ex in examples {
        let dropout = (cfg.dropout > 0.0).then_some((&mut *rng, cfg.dropout));
        loss += nll_loss(model, &ex.prepared, &ex.events, Some(grads), dropout)?.total();
    }
    let m = examples.len() as f64;
    grads.scale(1.0 / m);
    let norm = grads.clip_norm(cfg.grad_clip_norm);
    if !norm.is_finite() || !loss.is_finite() {
        return Err(Error::Diverged("non-finite loss or gradient".into()));
    }
    model.params.add_scaled(-lr, grads);
    Ok((loss / m, norm))
}

pub struct TrainOutcome {
    pub model: ParserModel,
    pub log: Vec<EpochLog>,
    pub checkpoints: Vec<PathBuf>,
}

/// Trains `model` in place, writing `epoch_NNN.ckpt` into `out_dir` after
/// every epoch when a directory is given.
#[allow(clippy::too_many_arguments)]
pub fn train(
    mut model: ParserModel,
    vocab: &Vocabulary,
    train_set: &[Sentence],
    dev_set: &[Sentence],
    external: (Option<&ExternalEncodings>, Option<&ExternalEncodings>),
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
    exclude_punct: bool,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Validation("empty training set".into()));
    }
    let examples = prepare_examples(&model, vocab, train_set, external.0)?;
    let lengths: Vec<usize> = examples.iter().map(|e| e.prepared.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut grads = ParamSet::zeros_like(&model.params);
    let mut log = Vec::new();
    let mut checkpoints = Vec::new();
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    for epoch in 1..=cfg.epochs {
        let lr = cfg.learning_rate(epoch);
        let batches = length_batches(&lengths, cfg.batch_size, &mut rng);
        let mut total = 0.0;
        for (b, idx) in batches.iter().enumerate() {
            let exs: Vec<&Example> = idx.iter().map(|&i| &examples[i]).collect();
            let (loss, _) = train_batch(&mut model, &exs, &mut grads, cfg, lr, &mut rng)
                .map_err(|e| match e {
                    Error::Diverged(m) => Error::Diverged(format!("epoch {epoch}, batch {b}: {m}")),
                    other => other,
                })?;
            total += loss * idx.len() as f64;
        }
        let dev = if dev_set.is_empty() {
            AttachmentCounts::default().report(exclude_punct)
        } else {
            evaluate(&model, vocab, dev_set, external.1, exclude_punct)?
        };
        let row = EpochLog {
            epoch,
            loss: total / examples.len() as f64,
            dev_las: dev.las,
            dev_uas: dev.uas,
            label_acc: dev.label_acc,
            lr,
        };
        if dev_set.is_empty() {
            info!("epoch {epoch}: loss {:.4} lr {:.4}", row.loss, lr);
        } else {
            info!(
                "epoch {epoch}: loss {:.4} dev LAS {:.2} UAS {:.2} lr {:.4}",
                row.loss, row.dev_las, row.dev_uas, lr
            );
        }
        log.push(row);
        if let Some(dir) = out_dir {
            let p = dir.join(format!("epoch_{epoch:03}.ckpt"));
            save_checkpoint(&model, vocab, &p)?;
            checkpoints.push(p);
        }
        if cfg.target_dev_uas.is_some_and(|t| row.dev_uas >= t) {
            info!("dev UAS target reached after epoch {epoch}");
            break;
        }
    }
    Ok(TrainOutcome {
        model,
        log,
        checkpoints,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionCriterion {
    DevAccuracy,
    R2Fit,
}

/// Index of the epoch with the best dev LAS (earliest on ties).
pub fn select_by_dev(log: &[EpochLog]) -> Result<usize> {
    let mut best: Option<usize> = None;
    for (i, e) in log.iter().enumerate() {
        if best.is_none_or(|b| e.dev_las > log[b].dev_las) {
            best = Some(i);
        }
    }
    best.ok_or_else(|| Error::Validation("no checkpoints to select from".into()))
}

/// Scores every checkpoint with `fit` and returns the index of the best
/// together with all scores.
pub fn select_checkpoint(
    checkpoints: &[PathBuf],
    vocab: &Vocabulary,
    mut fit: impl FnMut(&ParserModel) -> Result<f64>,
) -> Result<(usize, Vec<f64>)> {
    if checkpoints.is_empty() {
        return Err(Error::Validation("no checkpoints to select from".into()));
    }
    let mut scores = Vec::with_capacity(checkpoints.len());
    for p in checkpoints {
        let m = load_checkpoint(p, vocab)?;
        scores.push(fit(&m)?);
    }
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    Ok((best, scores))
}
