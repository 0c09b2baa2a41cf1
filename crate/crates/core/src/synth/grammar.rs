//! A seeded probabilistic dependency grammar producing English-like,
//! projective, CoNLL-shaped sentences. Used for fixtures, demos and the
//! offline training smoke test.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::treebank::Sentence;

struct Node {
    word: String,
    tag: &'static str,
    label: &'static str,
    left: Vec<Node>,
    right: Vec<Node>,
}

impl Node {
    fn leaf(word: impl Into<String>, tag: &'static str, label: &'static str) -> Self {
        Node {
            word: word.into(),
            tag,
            label,
            left: Vec::new(),
            right: Vec::new(),
        }
    }

    fn linearize(self, head: usize, out: &mut Vec<(String, &'static str, usize, &'static str)>) -> usize {
        // reserve positions: left subtree, self, right subtree
        let mut left_ids = Vec::new();
        let placeholder = usize::MAX;
        for l in self.left {
            left_ids.push(l.linearize(placeholder, out));
        }
        out.push((self.word, self.tag, head, self.label));
        let me = out.len();
        for &id in &left_ids {
            patch(out, id, me);
        }
        for r in self.right {
            r.linearize(me, out);
        }
        me
    }
}

fn patch(out: &mut [(String, &'static str, usize, &'static str)], id: usize, head: usize) {
    out[id - 1].2 = head;
}

/// Grammar parameters and lexicon.
pub struct TreebankGrammar {
    nouns: Vec<&'static str>,
    names: Vec<&'static str>,
    verbs_tr: Vec<&'static str>,
    verbs_in: Vec<&'static str>,
    adjs: Vec<&'static str>,
    dets: Vec<&'static str>,
    preps: Vec<&'static str>,
    advs: Vec<&'static str>,
    prons: Vec<&'static str>,
    rare_stems: Vec<&'static str>,
    rare_suffixes: Vec<&'static str>,
}

fn zipf<R: Rng>(rng: &mut R, items: &[&'static str]) -> &'static str {
    // P(rank r) ∝ 1 / (r + 1)
    let h: f64 = (1..=items.len()).map(|r| 1.0 / r as f64).sum();
    let mut u = rng.random::<f64>() * h;
    for (r, it) in items.iter().enumerate() {
        u -= 1.0 / (r + 1) as f64;
        if u <= 0.0 {
            return it;
        }
    }
    items[items.len() - 1]
}

impl TreebankGrammar {
    pub fn english_like() -> Self {
        TreebankGrammar {
            nouns: vec![
                "prince", "flower", "planet", "king", "fox", "desert", "star", "sheep", "rose",
                "pilot", "drawing", "box", "volcano", "tree", "lamp", "road", "night", "day",
                "friend", "child", "man", "snake", "garden", "water", "well", "sunset", "book",
                "house", "hat", "elephant", "world", "heart", "voice", "secret", "story", "city",
                "mountain", "bird", "wind", "light", "stone", "door", "window", "table", "letter",
                "river", "sea", "boat", "field", "morning", "question", "answer", "dream", "sky",
                "town", "merchant", "geographer", "lamplighter", "businessman", "traveller",
            ],
            names: vec!["Paris", "Asia", "Mary", "John", "Antoine", "Europe", "Saturn", "Jupiter"],
            verbs_tr: vec![
                "saw", "drew", "loved", "found", "asked", "watched", "met", "carried", "took",
                "knew", "made", "heard", "wanted", "needed", "visited", "painted", "followed",
                "answered", "touched", "remembered", "tamed", "planted", "cleaned", "counted",
            ],
            verbs_in: vec![
                "laughed", "slept", "cried", "arrived", "left", "smiled", "waited", "walked",
                "fell", "danced", "spoke", "listened", "returned", "disappeared",
            ],
            adjs: vec![
                "little", "small", "old", "beautiful", "red", "big", "strange", "sad", "young",
                "tall", "quiet", "bright", "lonely", "golden", "wild", "serious", "proud", "tiny",
                "happy", "dark", "distant", "empty", "gentle", "curious",
            ],
            dets: vec!["the", "a", "his", "her", "this", "that", "every", "my", "some", "no"],
            preps: vec!["in", "on", "with", "from", "near", "under", "to", "of", "behind", "across"],
            advs: vec!["then", "slowly", "always", "never", "often", "again", "quickly", "suddenly", "softly"],
            prons: vec!["he", "she", "it", "they", "I", "we", "you"],
            rare_stems: vec![
                "bao", "zan", "quor", "melk", "trov", "pil", "dras", "vun", "skel", "orv", "fen",
                "grib", "lum", "tesk", "wab", "yor", "kest", "brin", "sol", "mard",
            ],
            rare_suffixes: vec!["ity", "ion", "er", "al", "ing", "ly", "est", "y", "s", "ed", "ob"],
        }
    }

    /// Generates `count` sentences with a fixed seed.
    pub fn generate(&self, count: usize, seed: u64) -> Vec<Sentence> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count).map(|_| self.sentence(&mut rng)).collect()
    }

    fn sentence<R: Rng>(&self, rng: &mut R) -> Sentence {
        let mut root = self.clause(rng, "root", 0);
        root.right.push(Node::leaf(if rng.random_bool(0.9) { "." } else { "!" }, "PUNCT", "punct"));
        let mut rows = Vec::new();
        root.linearize(0, &mut rows);
        let mut s = Sentence::new(
            rows.iter().map(|r| r.0.clone()).collect(),
            rows.iter().map(|r| r.2).collect(),
            rows.iter().map(|r| r.3.to_string()).collect(),
        );
        s.tags = rows.iter().map(|r| r.1.to_string()).collect();
        if s.tokens[0].chars().next().is_some_and(char::is_lowercase) {
            let mut c = s.tokens[0].chars();
            let first = c.next().unwrap().to_uppercase().collect::<String>();
            s.tokens[0] = first + c.as_str();
        }
        s
    }

    fn noun_word<R: Rng>(&self, rng: &mut R) -> (String, bool) {
        if rng.random_bool(0.04) {
            let stem = self.rare_stems.choose(rng).unwrap();
            let stem2 = self.rare_stems.choose(rng).unwrap();
            let suf = self.rare_suffixes.choose(rng).unwrap();
            return (format!("{stem}{stem2}{suf}"), false);
        }
        let n = zipf(rng, &self.nouns);
        if rng.random_bool(0.25) {
            (format!("{n}s"), true)
        } else {
            (n.to_string(), false)
        }
    }

    fn noun_phrase<R: Rng>(&self, rng: &mut R, label: &'static str, depth: usize) -> Node {
        let r: f64 = rng.random();
        if r < 0.15 {
            return Node::leaf(*self.prons.choose(rng).unwrap(), "PRON", label);
        }
        if r < 0.22 {
            return Node::leaf(zipf(rng, &self.names), "PROPN", label);
        }
        let (word, _plural) = self.noun_word(rng);
        let mut np = Node::leaf(word, "NOUN", label);
        if rng.random_bool(0.85) {
            np.left.push(Node::leaf(zipf(rng, &self.dets), "DET", "det"));
        }
        let n_adj = if rng.random_bool(0.35) { 1 + usize::from(rng.random_bool(0.2)) } else { 0 };
        for _ in 0..n_adj {
            np.left.push(Node::leaf(zipf(rng, &self.adjs), "ADJ", "amod"));
        }
        if depth < 2 && rng.random_bool(0.2) {
            np.right.push(self.prep_phrase(rng, "nmod", depth + 1));
        }
        if depth < 1 && rng.random_bool(0.08) {
            let mut conj = self.noun_phrase(rng, "conj", depth + 1);
            conj.left.insert(0, Node::leaf("and", "CCONJ", "cc"));
            np.right.push(conj);
        }
        np
    }

    fn prep_phrase<R: Rng>(&self, rng: &mut R, label: &'static str, depth: usize) -> Node {
        let mut np = self.noun_phrase(rng, label, depth + 1);
        np.left.insert(0, Node::leaf(zipf(rng, &self.preps), "ADP", "case"));
        np
    }

    fn clause<R: Rng>(&self, rng: &mut R, label: &'static str, depth: usize) -> Node {
        let transitive = rng.random_bool(0.6);
        let verb = if transitive {
            zipf(rng, &self.verbs_tr)
        } else {
            zipf(rng, &self.verbs_in)
        };
        let mut v = Node::leaf(verb, "VERB", label);
        if depth == 0 && rng.random_bool(0.12) {
            v.left.push(Node::leaf(zipf(rng, &self.advs), "ADV", "advmod"));
        }
        v.left.push(self.noun_phrase(rng, "nsubj", depth));
        if rng.random_bool(0.1) {
            v.left.push(Node::leaf(zipf(rng, &self.advs), "ADV", "advmod"));
        }
        if transitive {
            v.right.push(self.noun_phrase(rng, "obj", depth));
        }
        if rng.random_bool(0.35) {
            v.right.push(self.prep_phrase(rng, "obl", depth));
        }
        if rng.random_bool(0.12) {
            v.right.push(Node::leaf(zipf(rng, &self.advs), "ADV", "advmod"));
        }
        if depth == 0 && rng.random_bool(0.12) {
            let mut sub = self.clause(rng, "advcl", depth + 1);
            let mark = if rng.random_bool(0.5) { "because" } else { "when" };
            sub.left.insert(0, Node::leaf(mark, "SCONJ", "mark"));
            v.right.push(sub);
        }
        v
    }
}
