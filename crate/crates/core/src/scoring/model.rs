use std::sync::OnceLock;

use ndarray::{s, Array1, Array2, ArrayView1};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::*;
use super::{log_softmax_pair, Factors, ScoreBundle, Scorer};
use crate::error::{Error, Result};
use crate::transition::Configuration;
use crate::treebank::{Sentence, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Internal,
    External,
}

/// What the encoder sees: the raw surface forms, or the parser's own word
/// classes with rare words replaced by signatures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    FullInput,
    Generative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderSpec {
    pub kind: EncoderKind,
    /// Encoding dimension `d`.
    pub d: usize,
    /// Embedding dimension; internal encoder only.
    pub emb_dim: usize,
    pub input_mode: InputMode,
    /// Precomputed vectors; external encoder only.
    #[serde(default)]
    pub external_path: Option<String>,
}

impl EncoderSpec {
    pub fn internal(emb_dim: usize, d: usize, input_mode: InputMode) -> Self {
        EncoderSpec {
            kind: EncoderKind::Internal,
            d,
            emb_dim,
            input_mode,
            external_path: None,
        }
    }

    pub fn external(path: impl Into<String>, d: usize) -> Self {
        EncoderSpec {
            kind: EncoderKind::External,
            d,
            emb_dim: 0,
            input_mode: InputMode::FullInput,
            external_path: Some(path.into()),
        }
    }
}

impl Default for EncoderSpec {
    fn default() -> Self {
        EncoderSpec::internal(64, 256, InputMode::Generative)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderSpec,
    /// Size of the parser vocabulary (word classes).
    pub n_classes: usize,
    pub labels: Vec<String>,
    pub bos: u32,
    pub eos: u32,
    /// Encoder input vocabulary in full-input mode.
    #[serde(default)]
    pub input_vocab: Option<Vocabulary>,
}

impl ModelConfig {
    /// Configuration for a parser vocabulary; in full-input mode the encoder
    /// vocabulary keeps every form seen in `training`.
    pub fn new(encoder: EncoderSpec, vocab: &Vocabulary, training: &[Sentence]) -> Self {
        let input_vocab = (encoder.kind == EncoderKind::Internal
            && encoder.input_mode == InputMode::FullInput)
            .then(|| Vocabulary::build(training, 1, vocab.lang()));
        ModelConfig {
            encoder,
            n_classes: vocab.size(),
            labels: vocab.labels().to_vec(),
            bos: vocab.bos(),
            eos: vocab.eos(),
            input_vocab,
        }
    }

    pub fn n_labels(&self) -> usize {
        self.labels.len()
    }

    fn n_inputs(&self) -> usize {
        match &self.input_vocab {
            Some(v) => v.size(),
            None => self.n_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.encoder;
        if e.d == 0 {
            return Err(Error::Config("encoder dimension must be positive".into()));
        }
        if e.kind == EncoderKind::Internal && e.emb_dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        if self.labels.is_empty() {
            return Err(Error::Config("empty label set".into()));
        }
        if self.n_classes < 3 || self.bos as usize >= self.n_classes || self.eos as usize >= self.n_classes {
            return Err(Error::Config("vocabulary lacks boundary classes".into()));
        }
        Ok(())
    }
}

/// Per-token encodings of a sentence prefix; row `t` encodes tokens `1..=t+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixEncoding {
    pub vectors: Array2<f64>,
}

impl PrefixEncoding {
    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }
}

/// A sentence mapped onto the model's inputs and targets.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSentence {
    /// Parser word classes, the generation targets.
    pub classes: Vec<u32>,
    /// Encoder input ids (internal encoder).
    pub inputs: Vec<u32>,
    /// Precomputed encodings, `n x d` (external encoder).
    pub external: Option<Array2<f64>>,
}

impl PreparedSentence {
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParserModel {
    pub config: ModelConfig,
    pub params: ParamSet,
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, bound: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
}

impl ParserModel {
    /// Randomly initialized model.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.encoder.d;
        let k = config.n_labels();
        let v = config.n_classes;
        let internal = config.encoder.kind == EncoderKind::Internal;
        let (e, nin) = if internal {
            (config.encoder.emb_dim, config.n_inputs())
        } else {
            (0, 0)
        };
        let head = |rng: &mut ChaCha8Rng, rows: usize| {
            uniform(rng, rows, 2 * d, (6.0 / (rows + 2 * d) as f64).sqrt())
        };
        let mut t = vec![Array2::zeros((0, 0)); N_TENSORS];
        if internal {
            t[EMB] = uniform(&mut rng, nin, e, 0.1);
            t[WX] = uniform(&mut rng, d, e, (6.0 / (d + e) as f64).sqrt());
            t[WH] = uniform(&mut rng, d, d, 0.5 * (3.0 / d as f64).sqrt());
            t[BH] = Array2::zeros((1, d));
        }
        t[NULL] = uniform(&mut rng, 1, d, 0.1);
        t[ROOT] = uniform(&mut rng, 1, d, 0.1);
        t[BOS] = uniform(&mut rng, 1, d, 0.1);
        t[TRANS_W] = head(&mut rng, 2);
        t[TRANS_B] = Array2::zeros((1, 2));
        t[DIR_W] = head(&mut rng, 2);
        t[DIR_B] = Array2::zeros((1, 2));
        t[LABEL_W] = head(&mut rng, k);
        t[LABEL_B] = Array2::zeros((1, k));
        t[WORD_W] = head(&mut rng, v);
        t[WORD_B] = Array2::zeros((1, v));
        Ok(ParserModel {
            config,
            params: ParamSet { tensors: t },
        })
    }

    /// All-zero parameters: every factor is uniform.
    pub fn uniform(config: ModelConfig) -> Result<Self> {
        let mut m = ParserModel::new(config, 0)?;
        m.params.fill_zero();
        Ok(m)
    }

    pub fn d(&self) -> usize {
        self.config.encoder.d
    }

    pub fn n_labels(&self) -> usize {
        self.config.n_labels()
    }

    pub fn n_classes(&self) -> usize {
        self.config.n_classes
    }

    /// Maps tokens onto classes and encoder inputs.
    pub fn prepare(
        &self,
        tokens: &[String],
        vocab: &Vocabulary,
        external: Option<Array2<f64>>,
    ) -> Result<PreparedSentence> {
        if tokens.is_empty() {
            return Err(Error::Contract("cannot score an empty sentence".into()));
        }
        if vocab.size() != self.config.n_classes {
            return Err(Error::Incompatible(format!(
                "vocabulary has {} classes, model expects {}",
                vocab.size(),
                self.config.n_classes
            )));
        }
        let classes = vocab.encode(tokens);
        let inputs = match &self.config.input_vocab {
            Some(iv) => iv.encode(tokens),
            None => classes.clone(),
        };
        match (self.config.encoder.kind, &external) {
            (EncoderKind::External, None) => {
                return Err(Error::Lookup("no external encodings for sentence".into()))
            }
            (EncoderKind::External, Some(x)) => {
                if x.ncols() != self.d() {
                    return Err(Error::Config(format!(
                        "external encodings have d = {}, model expects {}",
                        x.ncols(),
                        self.d()
                    )));
                }
                if x.nrows() != tokens.len() {
                    return Err(Error::Lookup(format!(
                        "external encodings cover {} tokens, sentence has {}",
                        x.nrows(),
                        tokens.len()
                    )));
                }
            }
            _ => {}
        }
        Ok(PreparedSentence {
            classes,
            inputs,
            external,
        })
    }

    /// Recurrent states: row 0 is the start state, row `t` follows token `t`.
    pub(crate) fn encode_rows(&self, s: &PreparedSentence) -> Array2<f64> {
        let d = self.d();
        let n = s.len();
        let p = &self.params.tensors;
        let mut h = Array2::zeros((n + 1, d));
        h.row_mut(0).assign(&p[BOS].row(0));
        match &s.external {
            Some(x) => h.slice_mut(s![1.., ..]).assign(x),
            None => {
                for t in 1..=n {
                    let e = p[EMB].row(s.inputs[t - 1] as usize);
                    let a = p[WX].dot(&e) + p[WH].dot(&h.row(t - 1)) + p[BH].row(0);
                    h.row_mut(t).assign(&a.mapv(f64::tanh));
                }
            }
        }
        h
    }

    /// Stacks null, root and the encoder rows: row 0 null, 1 root, `t + 2`
    /// encoder row `t`.
    pub(crate) fn feature_rows(&self, enc: &Array2<f64>) -> Array2<f64> {
        let p = &self.params.tensors;
        let n1 = enc.nrows();
        let mut h = Array2::zeros((n1 + 2, self.d()));
        h.row_mut(0).assign(&p[NULL].row(0));
        h.row_mut(1).assign(&p[ROOT].row(0));
        h.slice_mut(s![2.., ..]).assign(enc);
        h
    }

    pub fn scorer(&self, s: &PreparedSentence) -> SentenceScorer<'_> {
        let enc = self.encode_rows(s);
        let h = self.feature_rows(&enc);
        SentenceScorer::new(self, h, s.classes.clone())
    }
}

/// Row of the feature matrix holding `h_i` for stack top `i`.
pub(crate) fn top_row(top: Option<usize>) -> usize {
    match top {
        None => 0,
        Some(i) => i + 2,
    }
}

/// Row holding `h_j` for buffer front `j` of an `n`-token sentence.
pub(crate) fn front_row(front: usize, n: usize) -> usize {
    if front == n + 1 {
        1
    } else {
        front + 2
    }
}

/// Encodes a token sequence. Vectors depend only on the tokens up to their
/// own position.
pub fn encode_prefix(
    model: &ParserModel,
    tokens: &[String],
    vocab: &Vocabulary,
    external: Option<Array2<f64>>,
) -> Result<PrefixEncoding> {
    let s = model.prepare(tokens, vocab, external)?;
    let enc = model.encode_rows(&s);
    Ok(PrefixEncoding {
        vectors: enc.slice(s![1.., ..]).to_owned(),
    })
}

/// A head's logits split into stack-top and front contributions.
struct SplitHead {
    left: Array2<f64>,
    right: Array2<f64>,
    bias: Array1<f64>,
}

impl SplitHead {
    fn new(h: &Array2<f64>, w: &Array2<f64>, b: &Array2<f64>) -> Self {
        let d = h.ncols();
        SplitHead {
            left: h.dot(&w.slice(s![.., ..d]).t()),
            right: h.dot(&w.slice(s![.., d..]).t()),
            bias: b.row(0).to_owned(),
        }
    }

    fn logits(&self, i: usize, j: usize) -> Array1<f64> {
        &self.left.row(i) + &self.right.row(j) + &self.bias
    }
}

fn log_softmax(z: ArrayView1<f64>, mask: &[usize]) -> Array1<f64> {
    let mut z = z.to_owned();
    for &m in mask {
        z[m] = f64::NEG_INFINITY;
    }
    let mx = z.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let lz = mx + z.iter().map(|x| (x - mx).exp()).sum::<f64>().ln();
    z.mapv(|x| x - lz)
}

/// Scores every configuration of one sentence from precomputed head
/// projections. Factors are computed on first use per `(top, front)` pair.
pub struct SentenceScorer<'a> {
    model: &'a ParserModel,
    n: usize,
    classes: Vec<u32>,
    trans: SplitHead,
    dir: SplitHead,
    label: SplitHead,
    word: SplitHead,
    first: f64,
    table: Vec<OnceLock<Factors>>,
}

impl<'a> SentenceScorer<'a> {
    fn new(model: &'a ParserModel, h: Array2<f64>, classes: Vec<u32>) -> Self {
        let p = &model.params.tensors;
        let n = classes.len();
        let word = SplitHead::new(&h, &p[WORD_W], &p[WORD_B]);
        let cfg = &model.config;
        let first = log_softmax(
            word.logits(0, 2).view(),
            &[cfg.bos as usize, cfg.eos as usize],
        )[classes[0] as usize];
        let mut table = Vec::new();
        table.resize_with((n + 1) * (n + 2) / 2, OnceLock::new);
        SentenceScorer {
            model,
            n,
            classes,
            trans: SplitHead::new(&h, &p[TRANS_W], &p[TRANS_B]),
            dir: SplitHead::new(&h, &p[DIR_W], &p[DIR_B]),
            label: SplitHead::new(&h, &p[LABEL_W], &p[LABEL_B]),
            word,
            first,
            table,
        }
    }

    fn index(&self, top: Option<usize>, front: usize) -> usize {
        assert!(
            (1..=self.n + 1).contains(&front),
            "front {front} outside sentence of {} tokens",
            self.n
        );
        let t = top.unwrap_or(0);
        assert!(t < front, "stack top {t} not before front {front}");
        front * (front - 1) / 2 + t
    }

    fn compute(&self, top: Option<usize>, front: usize) -> Factors {
        let (i, j) = (top_row(top), front_row(front, self.n));
        let tr = self.trans.logits(i, j);
        let (shift, reduce) = log_softmax_pair(tr[0], tr[1]);
        let dr = self.dir.logits(i, j);
        let (left, right) = log_softmax_pair(dr[0], dr[1]);
        let labels = log_softmax(self.label.logits(i, j).view(), &[]).to_vec();
        let next_word = if front <= self.n {
            let target = if front == self.n {
                self.model.config.eos
            } else {
                self.classes[front]
            };
            let z = self.word.logits(i, j);
            let bos = self.model.config.bos as usize;
            let mx = z
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != bos)
                .fold(f64::NEG_INFINITY, |a, (_, &b)| a.max(b));
            let lz = mx
                + z.iter()
                    .enumerate()
                    .filter(|&(k, _)| k != bos)
                    .map(|(_, x)| (x - mx).exp())
                    .sum::<f64>()
                    .ln();
            z[target as usize] - lz
        } else {
            0.0
        };
        Factors {
            shift,
            reduce,
            left,
            right,
            labels,
            next_word,
        }
    }

    /// Full distributions at a configuration.
    pub fn score(&self, c: &Configuration) -> Result<ScoreBundle> {
        if c.n() != self.n || c.front() > self.n + 1 {
            return Err(Error::Contract(format!(
                "configuration {c} does not belong to this {}-token sentence",
                self.n
            )));
        }
        let (i, j) = (top_row(c.top()), front_row(c.front(), self.n));
        let tr = self.trans.logits(i, j);
        let (sh, re) = log_softmax_pair(tr[0], tr[1]);
        let dr = self.dir.logits(i, j);
        let (la, ra) = log_softmax_pair(dr[0], dr[1]);
        let cfg = &self.model.config;
        let word_dist = log_softmax(self.word.logits(i, j).view(), &[cfg.bos as usize])
            .mapv(f64::exp)
            .to_vec();
        let label_dist = log_softmax(self.label.logits(i, j).view(), &[])
            .mapv(f64::exp)
            .to_vec();
        Ok(ScoreBundle {
            p_shift: sh.exp(),
            p_reduce: re.exp(),
            p_la: la.exp(),
            p_ra: ra.exp(),
            word_dist,
            label_dist,
        })
    }

    /// Word-class distribution for the first word.
    pub fn first_word_dist(&self) -> Vec<f64> {
        let cfg = &self.model.config;
        log_softmax(
            self.word.logits(0, 2).view(),
            &[cfg.bos as usize, cfg.eos as usize],
        )
        .mapv(f64::exp)
        .to_vec()
    }

    pub fn classes(&self) -> &[u32] {
        &self.classes
    }
}

impl Scorer for SentenceScorer<'_> {
    fn n_tokens(&self) -> usize {
        self.n
    }

    fn n_labels(&self) -> usize {
        self.model.n_labels()
    }

    fn first_word(&self) -> f64 {
        self.first
    }

    fn factors(&self, c: &Configuration) -> &Factors {
        let k = self.index(c.top(), c.front());
        self.table[k].get_or_init(|| self.compute(c.top(), c.front()))
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::transition::{initial_config, Action};

    pub(crate) fn tiny_vocab() -> Vocabulary {
        let s = Sentence::new(
            vec!["a".into(), "b".into(), "a".into(), "b".into()],
            vec![2, 0, 4, 2],
            vec!["x".into(), "root".into(), "x".into(), "y".into()],
        );
        Vocabulary::build(&[s], 1, crate::treebank::Lang::English)
    }

    pub(crate) fn tiny_model(seed: u64, mode: InputMode) -> (ParserModel, Vocabulary) {
        let v = tiny_vocab();
        let cfg = ModelConfig::new(EncoderSpec::internal(3, 4, mode), &v, &[]);
        (ParserModel::new(cfg, seed).unwrap(), v)
    }

    fn toks(ws: &[&str]) -> Vec<String> {
        ws.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn uniform_parameters_give_even_factors() {
        let (m, v) = tiny_model(1, InputMode::Generative);
        let m = ParserModel::uniform(m.config).unwrap();
        let s = m.prepare(&toks(&["a", "b", "a"]), &v, None).unwrap();
        let sc = m.scorer(&s);
        let c = initial_config(3).unwrap().apply(Action::SHIFT).unwrap();
        let b = sc.score(&c).unwrap();
        assert!((b.p_shift - 0.5).abs() < 1e-12);
        assert!((b.p_reduce - 0.5).abs() < 1e-12);
        assert!((b.p_la - 0.5).abs() < 1e-12);
        assert!((b.p_ra - 0.5).abs() < 1e-12);
        // BOS is never generated
        let live = v.size() - 1;
        assert!((b.word_dist[0] - 1.0 / live as f64).abs() < 1e-12);
        assert_eq!(b.word_dist[v.bos() as usize], 0.0);
    }

    #[test]
    fn distributions_are_normalized() {
        let (m, v) = tiny_model(7, InputMode::Generative);
        let s = m.prepare(&toks(&["b", "a", "zzz"]), &v, None).unwrap();
        let sc = m.scorer(&s);
        let mut c = initial_config(3).unwrap();
        for a in [Action::SHIFT, Action::SHIFT, Action::SHIFT] {
            let b = sc.score(&c).unwrap();
            assert!((b.word_dist.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!((b.label_dist.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!((b.p_shift + b.p_reduce - 1.0).abs() < 1e-15);
            assert!((b.p_la + b.p_ra - 1.0).abs() < 1e-15);
            c = c.apply(a).unwrap();
        }
        let d1 = sc.first_word_dist();
        assert!((d1.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(d1[v.eos() as usize], 0.0);
    }

    #[test]
    fn cached_factors_match_bundle() {
        let (m, v) = tiny_model(3, InputMode::Generative);
        let s = m.prepare(&toks(&["a", "b", "b"]), &v, None).unwrap();
        let sc = m.scorer(&s);
        let c = initial_config(3)
            .unwrap()
            .apply(Action::SHIFT)
            .unwrap()
            .apply(Action::SHIFT)
            .unwrap();
        let f = sc.factors(&c).clone();
        let b = sc.score(&c).unwrap();
        assert!((f.shift.exp() - b.p_shift).abs() < 1e-12);
        assert!((f.left.exp() - b.p_la).abs() < 1e-12);
        // front is the last token: the shift generates the end marker
        assert!((f.next_word.exp() - b.word_dist[v.eos() as usize]).abs() < 1e-12);
        assert_eq!(sc.factors(&c), &f);
    }

    #[test]
    fn encoding_is_deterministic_and_causal() {
        let (m, v) = tiny_model(5, InputMode::FullInput);
        let a = encode_prefix(&m, &toks(&["a", "b"]), &v, None).unwrap();
        let b = encode_prefix(&m, &toks(&["a", "b", "a"]), &v, None).unwrap();
        let a2 = encode_prefix(&m, &toks(&["a", "b"]), &v, None).unwrap();
        assert_eq!(a, a2);
        assert_eq!(a.len(), 2);
        assert_eq!(b.len(), 3);
        assert_eq!(a.vectors, b.vectors.slice(s![..2, ..]));
    }

    #[test]
    fn generative_inputs_use_word_classes() {
        let (m, v) = tiny_model(5, InputMode::Generative);
        // two unseen forms with the same signature encode identically
        let a = encode_prefix(&m, &toks(&["a", "qqq"]), &v, None).unwrap();
        let b = encode_prefix(&m, &toks(&["a", "rrr"]), &v, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn external_dimension_is_checked() {
        let v = tiny_vocab();
        let cfg = ModelConfig::new(EncoderSpec::external("x.csv", 4), &v, &[]);
        let m = ParserModel::new(cfg, 1).unwrap();
        let t = toks(&["a", "b"]);
        assert!(matches!(m.prepare(&t, &v, None), Err(Error::Lookup(_))));
        assert!(matches!(
            m.prepare(&t, &v, Some(Array2::zeros((2, 3)))),
            Err(Error::Config(_))
        ));
        let x = Array2::from_shape_fn((2, 4), |(r, c)| (r * 4 + c) as f64);
        let e = encode_prefix(&m, &t, &v, Some(x.clone())).unwrap();
        assert_eq!(e.vectors, x);
    }
}
