//! Word-by-word surprisal from ranked pools, in bits.
//!
//! SynS_k(w_i) is −log2 of the syntactic mass of the k best-ranked paths at
//! word i over the same quantity at word i−1; the first word divides by 1.
//! Full surprisal applies the same ratio to the joint (word-including)
//! probabilities of those paths, and lexical surprisal is the difference.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scoring::{ExternalEncodings, ParserModel};
use crate::search::{run_search, PoolSummary, SearchOptions, SearchRun};
use crate::treebank::{StimulusAlignment, Vocabulary};

const LOG2_E: f64 = std::f64::consts::LOG2_E;

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    Ok(())
}

fn ratio_series(pools: &[PoolSummary], k: usize, full: bool) -> Result<Vec<f64>> {
    check_k(k)?;
    let mut prev = 1.0;
    let mut out = Vec::with_capacity(pools.len());
    for p in pools {
        if p.is_empty() {
            return Err(Error::Search(format!("empty pool at word {}", p.word)));
        }
        let (syn, joint) = p.top_k_mass(k);
        let m = if full { joint } else { syn };
        if m <= 0.0 || !m.is_finite() {
            return Err(Error::Search(format!(
                "zero top-{k} mass at word {}",
                p.word
            )));
        }
        out.push(-(m / prev).log2());
        prev = m;
    }
    Ok(out)
}

/// SynS_k for every word of one sentence.
pub fn syn_surprisal(pools: &[PoolSummary], k: usize) -> Result<Vec<f64>> {
    ratio_series(pools, k, false)
}

/// Full surprisal over the same top-k paths.
pub fn full_surprisal(pools: &[PoolSummary], k: usize) -> Result<Vec<f64>> {
    ratio_series(pools, k, true)
}

/// Full minus syntactic surprisal.
pub fn lex_surprisal(pools: &[PoolSummary], k: usize) -> Result<Vec<f64>> {
    let s = syn_surprisal(pools, k)?;
    let f = full_surprisal(pools, k)?;
    Ok(f.iter().zip(&s).map(|(f, s)| f - s).collect())
}

/// Surprisal at one k.
#[derive(Debug, Clone, PartialEq)]
pub struct KSeries {
    pub k: usize,
    pub syn: Vec<f64>,
    pub full: Vec<f64>,
    pub lex: Vec<f64>,
}

/// Per-word surprisal over a text, for several k.
#[derive(Debug, Clone, PartialEq)]
pub struct SurprisalSeries {
    pub forms: Vec<String>,
    /// Word offset times once aligned to a stimulus.
    pub offsets: Option<Vec<f64>>,
    pub series: Vec<KSeries>,
}

impl SurprisalSeries {
    pub fn len(&self) -> usize {
        self.forms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forms.is_empty()
    }

    pub fn ks(&self) -> Vec<usize> {
        self.series.iter().map(|s| s.k).collect()
    }

    pub fn at(&self, k: usize) -> Result<&KSeries> {
        self.series
            .iter()
            .find(|s| s.k == k)
            .ok_or_else(|| Error::Config(format!("surprisal was not computed at k = {k}")))
    }

    /// Series for one sentence from its pool trajectory.
    pub fn from_pools(forms: Vec<String>, pools: &[PoolSummary], ks: &[usize]) -> Result<Self> {
        if forms.len() != pools.len() {
            return Err(Error::Contract(format!(
                "{} forms for {} pools",
                forms.len(),
                pools.len()
            )));
        }
        let mut series = Vec::new();
        for &k in ks {
            let syn = syn_surprisal(pools, k)?;
            let full = full_surprisal(pools, k)?;
            let lex = full.iter().zip(&syn).map(|(f, s)| f - s).collect();
            series.push(KSeries { k, syn, full, lex });
        }
        Ok(SurprisalSeries {
            forms,
            offsets: None,
            series,
        })
    }

    /// Appends another sentence; pools reset at sentence boundaries.
    pub fn extend(&mut self, other: SurprisalSeries) -> Result<()> {
        if self.ks() != other.ks() {
            return Err(Error::Contract("cannot join series with different k".into()));
        }
        self.forms.extend(other.forms);
        for (a, b) in self.series.iter_mut().zip(other.series) {
            a.syn.extend(b.syn);
            a.full.extend(b.full);
            a.lex.extend(b.lex);
        }
        self.offsets = None;
        Ok(())
    }

    fn empty(ks: &[usize]) -> Self {
        SurprisalSeries {
            forms: Vec::new(),
            offsets: None,
            series: ks
                .iter()
                .map(|&k| KSeries {
                    k,
                    syn: Vec::new(),
                    full: Vec::new(),
                    lex: Vec::new(),
                })
                .collect(),
        }
    }

    /// Drops punctuation-only tokens and attaches the stimulus offsets.
    /// Remaining tokens must match the aligned words one to one, compared
    /// case-insensitively on their alphanumeric characters.
    pub fn align(&self, alignment: &StimulusAlignment) -> Result<SurprisalSeries> {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| !is_punctuation(&self.forms[i]))
            .collect();
        let words = &alignment.entries;
        for (pos, &i) in keep.iter().enumerate() {
            let Some(w) = words.get(pos) else {
                return Err(Error::Alignment(format!(
                    "token {} `{}` has no aligned word (alignment has {} words)",
                    pos,
                    self.forms[i],
                    words.len()
                )));
            };
            if normalize(&self.forms[i]) != normalize(&w.word) {
                return Err(Error::Alignment(format!(
                    "first mismatch at word {pos}: token `{}` vs aligned `{}`",
                    self.forms[i], w.word
                )));
            }
        }
        if keep.len() < words.len() {
            return Err(Error::Alignment(format!(
                "aligned word {} `{}` has no token ({} tokens after dropping punctuation)",
                keep.len(),
                words[keep.len()].word,
                keep.len()
            )));
        }
        let pick = |v: &[f64]| keep.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Ok(SurprisalSeries {
            forms: keep.iter().map(|&i| self.forms[i].clone()).collect(),
            offsets: Some(words.iter().map(|w| w.offset).collect()),
            series: self
                .series
                .iter()
                .map(|s| KSeries {
                    k: s.k,
                    syn: pick(&s.syn),
                    full: pick(&s.full),
                    lex: pick(&s.lex),
                })
                .collect(),
        })
    }

    fn offsets(&self) -> Result<&[f64]> {
        self.offsets
            .as_deref()
            .ok_or_else(|| Error::Alignment("series has not been aligned to a stimulus".into()))
    }

    /// `offset,value` rows with SynS_k at each word offset.
    pub fn regressor(&self, k: usize) -> Result<Vec<(f64, f64)>> {
        let offs = self.offsets()?;
        let s = self.at(k)?;
        Ok(offs.iter().copied().zip(s.syn.iter().copied()).collect())
    }

    pub fn emit_regressor(&self, k: usize, path: impl AsRef<Path>) -> Result<()> {
        write_events(&self.regressor(k)?, path)
    }

    /// Syntactic surprisal at every k, with full and lexical surprisal at the
    /// largest k.
    pub fn write_multi_k(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let offs = self.offsets()?;
        let top = self
            .series
            .iter()
            .max_by_key(|s| s.k)
            .ok_or_else(|| Error::Config("no k configured".into()))?;
        let mut out = String::from("offset");
        for s in &self.series {
            out.push_str(&format!(",syn_k{}", s.k));
        }
        out.push_str(&format!(",full_k{0},lex_k{0}\n", top.k));
        for (i, o) in offs.iter().enumerate() {
            out.push_str(&fmt_f64(*o));
            for s in &self.series {
                out.push(',');
                out.push_str(&fmt_f64(s.syn[i]));
            }
            out.push_str(&format!(",{},{}\n", fmt_f64(top.full[i]), fmt_f64(top.lex[i])));
        }
        write_file(path, &out)
    }
}

pub(crate) fn fmt_f64(v: f64) -> String {
    // prints -0 as 0
    format!("{}", v + 0.0)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Writes `offset,value` rows.
pub fn write_events(rows: &[(f64, f64)], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from("offset,value\n");
    for (o, v) in rows {
        out.push_str(&format!("{},{}\n", fmt_f64(*o), fmt_f64(*v)));
    }
    write_file(path.as_ref(), &out)
}

/// Reads an `offset,value` event file.
pub fn read_events(path: impl AsRef<Path>) -> Result<Vec<(f64, f64)>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let headers = r.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "offset" || &headers[1] != "value" {
        return Err(Error::Format(format!(
            "{}: expected header `offset,value`",
            path.display()
        )));
    }
    let mut out = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            rec[i].trim().parse().map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: k + 2,
                message: format!("bad number `{}`: {e}", &rec[i]),
            })
        };
        out.push((parse(0)?, parse(1)?));
    }
    Ok(out)
}

pub fn is_punctuation(token: &str) -> bool {
    !token.is_empty() && token.chars().all(|c| !c.is_alphanumeric())
}

fn normalize(w: &str) -> String {
    w.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

/// Parses every sentence independently and joins the surprisal series.
/// Returns the per-sentence search runs alongside for tracing.
pub fn profile_sentences(
    model: &ParserModel,
    vocab: &Vocabulary,
    sentences: &[Vec<String>],
    external: Option<&ExternalEncodings>,
    opts: &SearchOptions,
    ks: &[usize],
) -> Result<(SurprisalSeries, Vec<SearchRun>)> {
    for &k in ks {
        check_k(k)?;
    }
    let mut all = SurprisalSeries::empty(ks);
    let mut runs = Vec::with_capacity(sentences.len());
    for (id, toks) in sentences.iter().enumerate() {
        let ext = match external {
            Some(e) => Some(e.get(id)?.clone()),
            None => None,
        };
        let prepared = model.prepare(toks, vocab, ext)?;
        let scorer = model.scorer(&prepared);
        let run = run_search(&scorer, opts)?;
        all.extend(SurprisalSeries::from_pools(toks.clone(), &run.pools, ks)?)?;
        runs.push(run);
    }
    Ok((all, runs))
}

/// Converts a natural-log probability to bits of surprisal.
pub fn bits(logp: f64) -> f64 {
    -logp * LOG2_E
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::{log_sum_exp, TableEntry, TableScorer};
    use crate::search::{exhaustive_parse, LabelMode};
    use crate::treebank::AlignedWord;

    fn pools(t: &TableScorer, opts: &SearchOptions) -> Vec<PoolSummary> {
        run_search(t, opts).unwrap().pools
    }

    #[test]
    fn one_bit_for_half() {
        assert!((bits(0.5f64.ln()) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ratio_of_sums_on_hand_pools() {
        let p = |syn: &[f64]| PoolSummary {
            word: 0,
            syn: syn.iter().map(|x: &f64| x.ln()).collect(),
            full: syn.iter().map(|x: &f64| (x * 0.5).ln()).collect(),
            cap_bound: None,
        };
        let traj = vec![p(&[1.0]), p(&[0.6, 0.4]), p(&[0.5, 0.3, 0.2])];
        let s1 = syn_surprisal(&traj, 1).unwrap();
        assert_eq!(s1[0], 0.0);
        assert!((s1[1] + (0.6f64).log2()).abs() < 1e-12);
        assert!((s1[2] + (0.5f64 / 0.6).log2()).abs() < 1e-12);
        let s2 = syn_surprisal(&traj, 2).unwrap();
        assert!((s2[2] + (0.8f64).log2()).abs() < 1e-12);
        let f = full_surprisal(&traj, 2).unwrap();
        let l = lex_surprisal(&traj, 2).unwrap();
        for i in 0..3 {
            assert!((f[i] - l[i] - s2[i]).abs() < 1e-15);
        }
        assert!(syn_surprisal(&traj, 0).is_err());
    }

    #[test]
    fn forced_sentence_has_zero_syntactic_surprisal() {
        // only shifts until the end: every word has one path
        let mut t = TableScorer::new(4, 1, 1.0, 0.5).unwrap();
        t.set_first_word(0.25).unwrap();
        let ps = pools(&t, &SearchOptions::default());
        for k in [1, 3, 10] {
            assert!(syn_surprisal(&ps, k).unwrap().iter().all(|&x| x == 0.0));
        }
        let f = full_surprisal(&ps, 1).unwrap();
        assert!((f[0] - 2.0).abs() < 1e-12);
        assert!(f[1..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn limit_law_on_a_random_table() {
        let t = TableScorer::new(5, 2, 0.37, 0.61).unwrap();
        let opts = SearchOptions::unbounded(LabelMode::Off);
        let ps = pools(&t, &opts);
        let n_paths = exhaustive_parse(&t, LabelMode::Off, 10).unwrap().len();
        for s in syn_surprisal(&ps, n_paths).unwrap() {
            assert!(s.abs() < 1e-9);
        }
    }

    #[test]
    fn full_surprisal_is_nonnegative_without_cap() {
        let mut t = TableScorer::new(4, 1, 0.5, 0.5).unwrap();
        t.insert(&TableEntry {
            stack: vec![1],
            front: 2,
            p_word: Some(0.3),
            ..Default::default()
        })
        .unwrap();
        let ps = pools(&t, &SearchOptions::unbounded(LabelMode::Off));
        let big = ps.iter().map(PoolSummary::len).max().unwrap();
        for f in full_surprisal(&ps, big).unwrap() {
            assert!(f >= -1e-12);
        }
        let total = log_sum_exp(ps[3].full.iter().copied());
        assert!(total <= 0.0);
    }

    #[test]
    fn scores_below_rank_k_do_not_matter() {
        // changing the word probability of a low-ranked branch at word 3
        // changes SynS_1 nowhere and only moves mass below the top path
        let base = |p_word: f64| {
            let mut t = TableScorer::new(4, 1, 0.8, 0.5).unwrap();
            t.insert(&TableEntry {
                stack: vec![],
                front: 2,
                p_word: Some(p_word),
                ..Default::default()
            })
            .unwrap();
            pools(&t, &SearchOptions::default())
        };
        let a = syn_surprisal(&base(0.9), 1).unwrap();
        let b = syn_surprisal(&base(0.1), 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn alignment_drops_punctuation() {
        let s = SurprisalSeries {
            forms: vec!["The".into(), "cat".into(), ",".into(), "sat".into(), ".".into()],
            offsets: None,
            series: vec![KSeries {
                k: 1,
                syn: vec![0.0, 1.0, 2.0, 3.0, 4.0],
                full: vec![1.0; 5],
                lex: vec![1.0, 0.0, -1.0, -2.0, -3.0],
            }],
        };
        let w = |word: &str, onset, offset| AlignedWord {
            word: word.into(),
            onset,
            offset,
        };
        let al = StimulusAlignment::new(vec![
            w("the", 0.0, 0.5),
            w("cat", 0.5, 1.0),
            w("sat", 1.2, 1.8),
        ])
        .unwrap();
        let a = s.align(&al).unwrap();
        assert_eq!(a.regressor(1).unwrap(), vec![(0.5, 0.0), (1.0, 1.0), (1.8, 3.0)]);
        let bad = StimulusAlignment::new(vec![w("the", 0.0, 0.5), w("dog", 0.5, 1.0)]).unwrap();
        let e = s.align(&bad).unwrap_err().to_string();
        assert!(e.contains("word 1"), "{e}");

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("reg.csv");
        a.emit_regressor(1, &p).unwrap();
        let back = read_events(&p).unwrap();
        assert_eq!(back, a.regressor(1).unwrap());
        let m = dir.path().join("multi.csv");
        a.write_multi_k(&m).unwrap();
        let text = std::fs::read_to_string(&m).unwrap();
        assert!(text.starts_with("offset,syn_k1,full_k1,lex_k1\n"));
    }

    proptest::proptest! {
        #[test]
        fn limit_law_and_decomposition_on_random_tables(
            n in 1usize..7,
            p_shift in 0.05f64..0.95,
            p_la in 0.05f64..0.95,
            words in proptest::collection::vec(0.05f64..1.0, 6),
        ) {
            let mut t = TableScorer::new(n, 1, p_shift, p_la).unwrap();
            for i in 1..n.min(6) {
                t.insert(&TableEntry {
                    stack: vec![i],
                    front: i + 1,
                    p_word: Some(words[i]),
                    ..Default::default()
                })
                .unwrap();
            }
            let ps = pools(&t, &SearchOptions::unbounded(LabelMode::Off));
            let big = ps.iter().map(PoolSummary::len).max().unwrap();
            for k in [1, 2, big, big + 3] {
                let syn = syn_surprisal(&ps, k).unwrap();
                let full = full_surprisal(&ps, k).unwrap();
                let lex = lex_surprisal(&ps, k).unwrap();
                for i in 0..n {
                    proptest::prop_assert!((full[i] - syn[i] - lex[i]).abs() < 1e-12);
                    if k >= big {
                        proptest::prop_assert!(syn[i].abs() < 1e-9);
                        proptest::prop_assert!(full[i] >= -1e-9);
                    }
                }
            }
        }
    }
}
