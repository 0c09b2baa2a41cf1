//! Attachment scores against gold trees.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transition::DependencyTree;
use crate::treebank::Sentence;

/// Labels treated as punctuation when punctuation is excluded.
pub const PUNCT_LABELS: [&str; 2] = ["punct", "P"];

/// Micro-averaged percentages over one token set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttachmentReport {
    pub las: f64,
    pub uas: f64,
    pub label_acc: f64,
    pub token_count: usize,
    pub punctuation_excluded: bool,
}

/// Raw counts; add them up across sentences before taking percentages.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AttachmentCounts {
    pub tokens: usize,
    pub heads: usize,
    pub labeled: usize,
    pub labels: usize,
}

impl AttachmentCounts {
    pub fn add(&mut self, other: AttachmentCounts) {
        self.tokens += other.tokens;
        self.heads += other.heads;
        self.labeled += other.labeled;
        self.labels += other.labels;
    }

    pub fn report(&self, punctuation_excluded: bool) -> AttachmentReport {
        let pct = |x: usize| {
            if self.tokens == 0 {
                0.0
            } else {
                100.0 * x as f64 / self.tokens as f64
            }
        };
        AttachmentReport {
            las: pct(self.labeled),
            uas: pct(self.heads),
            label_acc: pct(self.labels),
            token_count: self.tokens,
            punctuation_excluded,
        }
    }
}

/// Counts for one sentence. `label_names` maps predicted label ids to names.
pub fn attachment_counts(
    pred: &DependencyTree,
    gold: &Sentence,
    label_names: &[String],
    exclude_punct: bool,
) -> Result<AttachmentCounts> {
    if !gold.has_gold() {
        return Err(Error::Contract("gold sentence has no tree".into()));
    }
    if pred.len() != gold.len() {
        return Err(Error::Contract(format!(
            "predicted tree has {} tokens, gold sentence {}",
            pred.len(),
            gold.len()
        )));
    }
    let names = pred.label_names(label_names);
    let mut c = AttachmentCounts::default();
    for d in 0..gold.len() {
        if exclude_punct && PUNCT_LABELS.contains(&gold.labels[d].as_str()) {
            continue;
        }
        let head_ok = pred.heads[d] == gold.heads[d];
        let label_ok = names[d] == gold.labels[d];
        c.tokens += 1;
        c.heads += usize::from(head_ok);
        c.labels += usize::from(label_ok);
        c.labeled += usize::from(head_ok && label_ok);
    }
    Ok(c)
}

pub fn attachment_scores(
    pred: &DependencyTree,
    gold: &Sentence,
    label_names: &[String],
    exclude_punct: bool,
) -> Result<AttachmentReport> {
    Ok(attachment_counts(pred, gold, label_names, exclude_punct)?.report(exclude_punct))
}

/// Micro-average over a corpus.
pub fn corpus_scores(
    preds: &[DependencyTree],
    golds: &[Sentence],
    label_names: &[String],
    exclude_punct: bool,
) -> Result<AttachmentReport> {
    if preds.len() != golds.len() {
        return Err(Error::Contract(format!(
            "{} predictions for {} gold sentences",
            preds.len(),
            golds.len()
        )));
    }
    let mut total = AttachmentCounts::default();
    for (p, g) in preds.iter().zip(golds) {
        total.add(attachment_counts(p, g, label_names, exclude_punct)?);
    }
    Ok(total.report(exclude_punct))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::TreebankGrammar;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn names() -> Vec<String> {
        ["a", "b", "c", "punct"].iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn perfect_and_partial_scores() {
        let gold = Sentence::new(
            vec!["w".into(); 4],
            vec![2, 0, 2, 3],
            vec!["a".into(), "b".into(), "c".into(), "a".into()],
        );
        let perfect = DependencyTree {
            heads: vec![2, 0, 2, 3],
            labels: vec![0, 1, 2, 0],
        };
        let r = attachment_scores(&perfect, &gold, &names(), false).unwrap();
        assert_eq!((r.las, r.uas, r.label_acc), (100.0, 100.0, 100.0));
        // heads right on tokens 1-2, label right on 1, 3, 4
        let p = DependencyTree {
            heads: vec![2, 0, 1, 1],
            labels: vec![0, 2, 2, 0],
        };
        let r = attachment_scores(&p, &gold, &names(), false).unwrap();
        assert_eq!((r.uas, r.las, r.label_acc), (50.0, 25.0, 75.0));
        let short = DependencyTree {
            heads: vec![0],
            labels: vec![0],
        };
        assert!(attachment_scores(&short, &gold, &names(), false).is_err());
    }

    #[test]
    fn punctuation_can_be_excluded() {
        let gold = Sentence::new(
            vec!["w".into(), ".".into()],
            vec![0, 1],
            vec!["a".into(), "punct".into()],
        );
        let p = DependencyTree {
            heads: vec![0, 0],
            labels: vec![0, 0],
        };
        assert_eq!(attachment_scores(&p, &gold, &names(), false).unwrap().uas, 50.0);
        let r = attachment_scores(&p, &gold, &names(), true).unwrap();
        assert_eq!((r.uas, r.token_count), (100.0, 1));
    }

    #[test]
    fn micro_average_matches_recount() {
        let golds = TreebankGrammar::english_like().generate(100, 5);
        let mut labels: Vec<String> = golds.iter().flat_map(|s| s.labels.clone()).collect();
        labels.sort();
        labels.dedup();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let preds: Vec<DependencyTree> = golds
            .iter()
            .map(|g| DependencyTree {
                heads: g
                    .heads
                    .iter()
                    .map(|&h| if rng.random_bool(0.3) { rng.random_range(0..=g.len()) } else { h })
                    .collect(),
                labels: g
                    .labels
                    .iter()
                    .map(|l| {
                        if rng.random_bool(0.2) {
                            rng.random_range(0..labels.len()) as u32
                        } else {
                            labels.iter().position(|x| x == l).unwrap() as u32
                        }
                    })
                    .collect(),
            })
            .collect();
        let r = corpus_scores(&preds, &golds, &labels, false).unwrap();
        // independent one-pass recount over flattened tokens
        let (mut n, mut h, mut l, mut hl) = (0.0, 0.0, 0.0, 0.0);
        for (p, g) in preds.iter().zip(&golds) {
            for d in 0..g.len() {
                let hh = p.heads[d] == g.heads[d];
                let ll = labels[p.labels[d] as usize] == g.labels[d];
                n += 1.0;
                h += f64::from(u8::from(hh));
                l += f64::from(u8::from(ll));
                hl += f64::from(u8::from(hh && ll));
            }
        }
        assert!((r.uas - 100.0 * h / n).abs() < 1e-9);
        assert!((r.label_acc - 100.0 * l / n).abs() < 1e-9);
        assert!((r.las - 100.0 * hl / n).abs() < 1e-9);
        assert!(r.las <= r.uas.min(r.label_acc));
        let mut rev_p = preds.clone();
        let mut rev_g = golds.clone();
        rev_p.reverse();
        rev_g.reverse();
        assert_eq!(corpus_scores(&rev_p, &rev_g, &labels, false).unwrap(), r);
    }
}
