//! Word-class vocabularies with unknown-word signatures.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Sentence;
use crate::error::{Error, Result};

pub const UNK: &str = "UNK";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";

const SUFFIXES: [&str; 10] = ["s", "ed", "ing", "ion", "er", "est", "ly", "ity", "y", "al"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Lang {
    #[default]
    English,
    Chinese,
}

/// Unknown-word signature class for a surface form.
///
/// English: capitalization flag (`-INITC`, `-CAPS`, `-LC`), `-NUM`, `-DASH`,
/// and the longest matching suffix for alphabetic words of three or more
/// characters. Chinese: `-NUM`, `-LAT` and a length bucket.
pub fn signature(word: &str, lang: Lang) -> String {
    match lang {
        Lang::English => english_signature(word),
        Lang::Chinese => chinese_signature(word),
    }
}

fn english_signature(word: &str) -> String {
    let mut sig = String::from(UNK);
    let chars: Vec<char> = word.chars().collect();
    if chars.is_empty() {
        return sig;
    }
    let num_caps = chars.iter().filter(|c| c.is_uppercase()).count();
    let letters = chars.iter().filter(|c| c.is_alphabetic()).count();
    let has_lower = chars.iter().any(|c| c.is_lowercase());
    let has_digit = chars.iter().any(|c| c.is_numeric());
    let has_dash = chars.contains(&'-');

    if chars[0].is_uppercase() {
        if num_caps > 1 && num_caps == letters {
            sig.push_str("-CAPS");
        } else {
            sig.push_str("-INITC");
        }
    } else if !chars[0].is_alphabetic() && num_caps > 0 {
        sig.push_str("-CAPS");
    } else if has_lower {
        sig.push_str("-LC");
    }
    if has_digit {
        sig.push_str("-NUM");
    }
    if has_dash {
        sig.push_str("-DASH");
    }
    if chars.len() >= 3 && letters == chars.len() {
        let lowered = word.to_lowercase();
        if let Some(suffix) = SUFFIXES
            .iter()
            .filter(|s| lowered.ends_with(*s))
            .max_by_key(|s| s.len())
        {
            sig.push('-');
            sig.push_str(suffix);
        }
    }
    sig
}

fn chinese_signature(word: &str) -> String {
    let mut sig = String::from("UNK-ZH");
    let chars: Vec<char> = word.chars().collect();
    let numerals = "零〇一二三四五六七八九十百千万亿";
    if chars.iter().any(|c| c.is_ascii_digit() || numerals.contains(*c)) {
        sig.push_str("-NUM");
    }
    if chars.iter().any(|c| c.is_ascii_alphabetic()) {
        sig.push_str("-LAT");
    }
    sig.push_str(match chars.len() {
        0 | 1 => "-L1",
        2 => "-L2",
        _ => "-L3",
    });
    sig
}

/// Coarser signatures tried, in order, when a signature was never realized
/// in training.
fn backoff(sig: &str) -> Vec<String> {
    let parts: Vec<&str> = sig.split('-').collect();
    (1..parts.len()).rev().map(|k| parts[..k].join("-")).collect()
}

/// Maps every surface form to exactly one dense word-class id.
///
/// Ids are laid out as: known words, realized signatures, `UNK` (when not
/// already realized), `<s>`, `</s>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    lang: Lang,
    min_count: usize,
    classes: Vec<String>,
    n_known: usize,
    labels: Vec<String>,
    #[serde(skip)]
    word_to_id: HashMap<String, u32>,
    #[serde(skip)]
    signature_to_id: HashMap<String, u32>,
    #[serde(skip)]
    label_to_id: HashMap<String, u32>,
}

/// Builds the parser vocabulary: forms seen at least `min_count` times are
/// known, the rest are replaced by signatures.
pub fn build_vocabulary(training: &[Sentence], min_count: usize) -> Vocabulary {
    Vocabulary::build(training, min_count, Lang::English)
}

impl Vocabulary {
    pub fn build(training: &[Sentence], min_count: usize, lang: Lang) -> Self {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        let mut labels: BTreeMap<&str, ()> = BTreeMap::new();
        for s in training {
            for t in &s.tokens {
                *counts.entry(t.as_str()).or_default() += 1;
            }
            for l in &s.labels {
                labels.insert(l.as_str(), ());
            }
        }
        let mut known: Vec<(&str, usize)> = counts
            .iter()
            .filter(|(_, &c)| c >= min_count)
            .map(|(&w, &c)| (w, c))
            .collect();
        known.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));

        let mut sigs: BTreeMap<String, ()> = BTreeMap::new();
        for (&w, &c) in &counts {
            if c < min_count {
                sigs.insert(signature(w, lang), ());
            }
        }
        sigs.remove(UNK);

        let mut classes: Vec<String> = known.iter().map(|(w, _)| w.to_string()).collect();
        let n_known = classes.len();
        classes.extend(sigs.into_keys());
        classes.push(UNK.to_string());
        classes.push(BOS.to_string());
        classes.push(EOS.to_string());

        let mut v = Vocabulary {
            lang,
            min_count,
            classes,
            n_known,
            labels: labels.into_keys().map(str::to_string).collect(),
            word_to_id: HashMap::new(),
            signature_to_id: HashMap::new(),
            label_to_id: HashMap::new(),
        };
        v.reindex();
        v
    }

    pub(crate) fn reindex(&mut self) {
        self.word_to_id = self.classes[..self.n_known]
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        let n_sig_end = self.classes.len() - 2;
        self.signature_to_id = self.classes[self.n_known..n_sig_end]
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), (i + self.n_known) as u32))
            .collect();
        self.label_to_id = self
            .labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i as u32))
            .collect();
    }

    /// Word-class id for any surface form.
    pub fn lookup(&self, form: &str) -> u32 {
        if let Some(&id) = self.word_to_id.get(form) {
            return id;
        }
        self.signature_id(&signature(form, self.lang))
    }

    fn signature_id(&self, sig: &str) -> u32 {
        if let Some(&id) = self.signature_to_id.get(sig) {
            return id;
        }
        for coarse in backoff(sig) {
            if let Some(&id) = self.signature_to_id.get(&coarse) {
                return id;
            }
        }
        self.signature_to_id[UNK]
    }

    pub fn is_known(&self, form: &str) -> bool {
        self.word_to_id.contains_key(form)
    }

    /// The class name a form maps to (the form itself when known).
    pub fn class_name(&self, id: u32) -> &str {
        &self.classes[id as usize]
    }

    pub fn size(&self) -> usize {
        self.classes.len()
    }

    pub fn n_known(&self) -> usize {
        self.n_known
    }

    /// Number of signature classes, including the `UNK` fallback.
    pub fn n_signatures(&self) -> usize {
        self.classes.len() - 2 - self.n_known
    }

    pub fn known_words(&self) -> impl Iterator<Item = &str> {
        self.classes[..self.n_known].iter().map(String::as_str)
    }

    pub fn signatures(&self) -> impl Iterator<Item = &str> {
        self.classes[self.n_known..self.classes.len() - 2]
            .iter()
            .map(String::as_str)
    }

    pub fn bos(&self) -> u32 {
        (self.classes.len() - 2) as u32
    }

    pub fn eos(&self) -> u32 {
        (self.classes.len() - 1) as u32
    }

    pub fn lang(&self) -> Lang {
        self.lang
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label_id(&self, label: &str) -> Option<u32> {
        self.label_to_id.get(label).copied()
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<u32> {
        tokens.iter().map(|t| self.lookup(t)).collect()
    }

    /// Hex SHA-256 over the class and label inventories.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("{:?}|{}|", self.lang, self.min_count).as_bytes());
        for c in &self.classes {
            h.update(c.as_bytes());
            h.update([0u8]);
        }
        h.update([1u8]);
        for l in &self.labels {
            h.update(l.as_bytes());
            h.update([0u8]);
        }
        hex::encode(h.finalize())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut v: Vocabulary = serde_json::from_str(&text)?;
        if v.n_known + 3 > v.classes.len() {
            return Err(Error::Format(format!("{}: truncated vocabulary", path.display())));
        }
        v.reindex();
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sent(words: &[&str]) -> Sentence {
        Sentence::new(
            words.iter().map(|w| w.to_string()).collect(),
            vec![0; words.len()],
            vec!["dep".into(); words.len()],
        )
    }

    #[test]
    fn frequent_words_known_singletons_signed() {
        let corpus = vec![
            sent(&["the", "the", "the", "Xylophone"]),
            sent(&["the", "the", "cat"]),
        ];
        let v = build_vocabulary(&corpus, 2);
        assert!(v.is_known("the"));
        assert!(!v.is_known("Xylophone"));
        assert_eq!(v.class_name(v.lookup("Xylophone")), "UNK-INITC");
    }

    #[test]
    fn all_singleton_corpus_has_no_known_words() {
        let v = build_vocabulary(&[sent(&["a", "b", "c", "Dee"])], 2);
        assert_eq!(v.n_known(), 0);
        for w in ["a", "b", "c", "Dee"] {
            assert!(v.class_name(v.lookup(w)).starts_with(UNK));
        }
    }

    #[test]
    fn english_signature_rules() {
        let e = |w| signature(w, Lang::English);
        assert_eq!(e("walked"), "UNK-LC-ed");
        assert_eq!(e("walking"), "UNK-LC-ing");
        assert_eq!(e("city"), "UNK-LC-ity");
        assert_eq!(e("IBM"), "UNK-CAPS");
        assert_eq!(e("1984"), "UNK-NUM");
        assert_eq!(e("well-known"), "UNK-LC-DASH");
        assert_eq!(e("Cats"), "UNK-INITC-s");
        assert_eq!(e("quickly"), "UNK-LC-ly");
        assert_eq!(e("as"), "UNK-LC");
    }

    #[test]
    fn chinese_signatures_have_no_suffixes() {
        assert_eq!(signature("小王子", Lang::Chinese), "UNK-ZH-L3");
        assert_eq!(signature("3月", Lang::Chinese), "UNK-ZH-NUM-L2");
        assert_eq!(signature("BLOOM", Lang::Chinese), "UNK-ZH-LAT-L3");
    }

    #[test]
    fn unseen_signature_backs_off() {
        let v = build_vocabulary(&[sent(&["dogs", "dogs", "runner"])], 2);
        // "-LC-er" realized; "-LC-ing" is not, backs off to "UNK-LC" (absent) then UNK
        assert_eq!(v.class_name(v.lookup("jogger")), "UNK-LC-er");
        assert_eq!(v.class_name(v.lookup("jogging")), UNK);
    }

    #[test]
    fn class_count_matches_independent_recount() {
        let corpus = crate::synth::TreebankGrammar::english_like().generate(300, 5);
        let v = build_vocabulary(&corpus, 2);
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for s in &corpus {
            for t in &s.tokens {
                *counts.entry(t).or_default() += 1;
            }
        }
        let frequent = counts.values().filter(|&&c| c >= 2).count();
        let realized: std::collections::HashSet<String> = counts
            .iter()
            .filter(|(_, &c)| c < 2)
            .map(|(w, _)| signature(w, Lang::English))
            .collect();
        let unk_extra = usize::from(!realized.contains(UNK));
        // + <s>, </s>
        assert_eq!(v.size(), frequent + realized.len() + unk_extra + 2);
    }

    #[test]
    fn save_load_round_trip() {
        let v = build_vocabulary(&[sent(&["a", "a", "Bob"])], 2);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.json");
        v.save(&p).unwrap();
        let w = Vocabulary::load(&p).unwrap();
        assert_eq!(w.hash(), v.hash());
        assert_eq!(w.lookup("a"), v.lookup("a"));
        assert_eq!(w.lookup("Zed"), v.lookup("Zed"));
    }

    proptest! {
        #[test]
        fn lookup_is_total_and_dense(word in "\\PC{0,12}") {
            let v = build_vocabulary(&[sent(&["a", "a", "Bob", "runs", "x-1"])], 2);
            let id = v.lookup(&word);
            prop_assert!((id as usize) < v.size());
            prop_assert!(id != v.bos() && id != v.eos());
            prop_assert_eq!(v.lookup(&word), id);
        }
    }
}
