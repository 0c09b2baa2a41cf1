//! Treebank input/output, vocabularies, and stimulus metadata.
//!
//! Sentences are read from CoNLL-X or CoNLL-U files. Only the FORM, UPOS,
//! HEAD and DEPREL columns are retained; writing a sentence back produces
//! `_` for every other column.

mod conll;
mod stimulus;
mod vocab;

pub use conll::{read_conll, read_conll_str, write_conll, write_conll_string, ConllFormat};
pub use stimulus::{
    read_alignment, read_feature_series, read_frequency_table, AlignedWord, FeatureSeries,
    FrequencyTable, StimulusAlignment,
};
pub use vocab::{build_vocabulary, signature, Lang, Vocabulary, BOS, EOS, UNK};

use crate::error::{Error, Result};

/// A tokenized sentence with an optional gold dependency tree.
///
/// Token positions are 1-based in `heads`; head `0` is the artificial root.
/// A sentence read from raw text has empty `heads` and `labels`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<String>,
    pub tags: Vec<String>,
    pub heads: Vec<usize>,
    pub labels: Vec<String>,
}

impl Sentence {
    pub fn new(tokens: Vec<String>, heads: Vec<usize>, labels: Vec<String>) -> Self {
        let tags = vec!["_".to_string(); tokens.len()];
        Sentence {
            tokens,
            tags,
            heads,
            labels,
        }
    }

    /// A sentence without gold annotation.
    pub fn from_tokens<S: AsRef<str>>(tokens: &[S]) -> Self {
        Sentence {
            tokens: tokens.iter().map(|t| t.as_ref().to_string()).collect(),
            tags: vec!["_".to_string(); tokens.len()],
            heads: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn has_gold(&self) -> bool {
        !self.tokens.is_empty()
            && self.heads.len() == self.tokens.len()
            && self.labels.len() == self.tokens.len()
    }

    /// Checks that the gold annotation is a single-rooted, acyclic tree.
    pub fn validate_tree(&self) -> Result<()> {
        if !self.has_gold() {
            return Err(Error::Validation("sentence has no gold tree".into()));
        }
        let n = self.len();
        let mut roots = 0;
        for (d, &h) in self.heads.iter().enumerate() {
            if h > n {
                return Err(Error::Validation(format!(
                    "token {} has head {} outside [0, {}]",
                    d + 1,
                    h,
                    n
                )));
            }
            if h == d + 1 {
                return Err(Error::Validation(format!("token {} heads itself", d + 1)));
            }
            if h == 0 {
                roots += 1;
            }
        }
        if roots != 1 {
            return Err(Error::Validation(format!(
                "expected exactly one root attachment, found {roots}"
            )));
        }
        for start in 1..=n {
            let mut cur = start;
            let mut steps = 0;
            while cur != 0 {
                cur = self.heads[cur - 1];
                steps += 1;
                if steps > n {
                    return Err(Error::Validation(format!("cycle through token {start}")));
                }
            }
        }
        Ok(())
    }
}

/// True iff no two arcs of the gold tree cross when drawn above the
/// sentence, counting arcs from the artificial root at position 0.
///
/// An arc `h -> d` is projective when every token strictly between `h`
/// and `d` is dominated by `h`; the tree is projective when every arc is.
pub fn is_projective(s: &Sentence) -> bool {
    let n = s.heads.len();
    let dominated_by = |anc: usize, mut node: usize| -> bool {
        let mut steps = 0;
        while node != 0 && steps <= n {
            node = s.heads[node - 1];
            if node == anc {
                return true;
            }
            steps += 1;
        }
        anc == 0
    };
    for (di, &h) in s.heads.iter().enumerate() {
        let d = di + 1;
        let (lo, hi) = if h < d { (h, d) } else { (d, h) };
        for k in lo + 1..hi {
            if !dominated_by(h, k) {
                return false;
            }
        }
    }
    true
}

/// Splits a treebank into projective, well-formed sentences and a count of
/// the dropped ones.
pub fn filter_projective(sentences: Vec<Sentence>) -> (Vec<Sentence>, usize) {
    let total = sentences.len();
    let kept: Vec<Sentence> = sentences
        .into_iter()
        .filter(|s| s.validate_tree().is_ok() && is_projective(s))
        .collect();
    let dropped = total - kept.len();
    if dropped > 0 {
        log::info!("dropped {dropped} of {total} sentences (non-projective or malformed)");
    }
    (kept, dropped)
}

/// Reads a whitespace-tokenized text file, one sentence per line.
pub fn read_plain_text(path: impl AsRef<std::path::Path>) -> Result<Vec<Sentence>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(|l| l.split_whitespace().collect::<Vec<_>>())
        .filter(|t| !t.is_empty())
        .map(|t| Sentence::from_tokens(&t))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree(heads: &[usize]) -> Sentence {
        let n = heads.len();
        Sentence::new(
            (1..=n).map(|i| format!("w{i}")).collect(),
            heads.to_vec(),
            vec!["dep".into(); n],
        )
    }

    fn crossing_oracle(heads: &[usize]) -> bool {
        let arcs: Vec<(usize, usize)> = heads
            .iter()
            .enumerate()
            .map(|(d, &h)| if h < d + 1 { (h, d + 1) } else { (d + 1, h) })
            .collect();
        for (i, &(a, b)) in arcs.iter().enumerate() {
            for &(c, d) in &arcs[i + 1..] {
                if (a < c && c < b && b < d) || (c < a && a < d && d < b) {
                    return false;
                }
            }
        }
        true
    }

    fn is_tree_rooted_at_zero(heads: &[usize]) -> bool {
        let n = heads.len();
        (1..=n).all(|start| {
            let mut cur = start;
            for _ in 0..=n {
                if cur == 0 {
                    return true;
                }
                cur = heads[cur - 1];
            }
            false
        })
    }

    #[test]
    fn two_token_tree_is_projective() {
        assert!(is_projective(&tree(&[2, 0])));
    }

    #[test]
    fn crossing_arcs_are_detected() {
        // arcs 3->1 and 4->2 cross
        assert!(!is_projective(&tree(&[3, 4, 0, 3])));
    }

    #[test]
    fn all_trees_on_three_tokens_match_crossing_oracle() {
        let mut trees = 0;
        let mut projective = 0;
        for a in 0..=3 {
            for b in 0..=3 {
                for c in 0..=3 {
                    let heads = [a, b, c];
                    if heads.iter().enumerate().any(|(d, &h)| h == d + 1) {
                        continue;
                    }
                    if !is_tree_rooted_at_zero(&heads) {
                        continue;
                    }
                    trees += 1;
                    assert_eq!(is_projective(&tree(&heads)), crossing_oracle(&heads), "{heads:?}");
                    if crossing_oracle(&heads) {
                        projective += 1;
                    }
                }
            }
        }
        assert_eq!(trees, 16);
        assert!(projective < trees);
    }

    #[test]
    fn random_trees_match_crossing_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let n = rng.random_range(1..9);
            // random recursive tree: each token attaches to root or an earlier-placed token
            let order: Vec<usize> = {
                let mut o: Vec<usize> = (1..=n).collect();
                for i in (1..o.len()).rev() {
                    o.swap(i, rng.random_range(0..=i));
                }
                o
            };
            let mut heads = vec![0; n];
            for (k, &tok) in order.iter().enumerate() {
                heads[tok - 1] = if k == 0 { 0 } else { order[rng.random_range(0..k)] };
            }
            assert_eq!(is_projective(&tree(&heads)), crossing_oracle(&heads), "{heads:?}");
        }
    }

    #[test]
    fn validate_rejects_cycles_and_double_roots() {
        assert!(tree(&[2, 0]).validate_tree().is_ok());
        assert!(tree(&[0, 0]).validate_tree().is_err());
        assert!(tree(&[2, 3, 2]).validate_tree().is_err());
    }

    #[test]
    fn filter_drops_nonprojective() {
        let (kept, dropped) = filter_projective(vec![tree(&[2, 0]), tree(&[3, 4, 0, 3])]);
        assert_eq!(kept.len(), 1);
        assert_eq!(dropped, 1);
    }
}
