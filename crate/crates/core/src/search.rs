//! Word-synchronized ranked path search.
//!
//! All live paths have generated the same word prefix. Advancing to the
//! next word expands every path through any number of arc actions followed
//! by the Shift that generates the word. Children are produced best-first so
//! the top `cap` of them can be kept exactly without enumerating the rest.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc as Shared;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::{Factors, Scorer};
use crate::transition::{initial_config, Action, ActionKind, Configuration, DependencyTree, Legal};

pub const DEFAULT_CAP: usize = 10_000;

/// Whether arc labels branch the search and contribute their probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMode {
    #[default]
    Participate,
    /// Each arc takes its most probable label with factor 1.
    Off,
}

/// The probability paths are ranked by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankKey {
    #[default]
    Syntactic,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchOptions {
    /// Maximum pool size; `None` keeps every path.
    pub cap: Option<usize>,
    pub labels: LabelMode,
    pub rank: RankKey,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            cap: Some(DEFAULT_CAP),
            labels: LabelMode::Participate,
            rank: RankKey::Syntactic,
        }
    }
}

impl SearchOptions {
    pub fn unbounded(labels: LabelMode) -> Self {
        SearchOptions {
            cap: None,
            labels,
            rank: RankKey::Syntactic,
        }
    }
}

/// A partial derivation with natural-log probabilities: `logp_syn` over
/// transitions (and labels when they participate), `logp_full` adding the
/// generated words.
#[derive(Debug, Clone, PartialEq)]
pub struct PathItem {
    pub config: Configuration,
    pub logp_syn: f64,
    pub logp_full: f64,
    pub history: Shared<Vec<Action>>,
}

impl PathItem {
    pub fn key(&self, rank: RankKey) -> f64 {
        match rank {
            RankKey::Syntactic => self.logp_syn,
            RankKey::Full => self.logp_full,
        }
    }
}

/// Paths after word `word` (1-based), best first.
#[derive(Debug, Clone, PartialEq)]
pub struct WordSyncPool {
    pub word: usize,
    pub paths: Vec<PathItem>,
    /// Rank-key log probability of the best path the cap left out.
    pub cap_bound: Option<f64>,
}

impl WordSyncPool {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn summary(&self) -> PoolSummary {
        PoolSummary {
            word: self.word,
            syn: self.paths.iter().map(|p| p.logp_syn).collect(),
            full: self.paths.iter().map(|p| p.logp_full).collect(),
            cap_bound: self.cap_bound,
        }
    }
}

/// Ranked log probabilities of a pool, without configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolSummary {
    pub word: usize,
    pub syn: Vec<f64>,
    pub full: Vec<f64>,
    pub cap_bound: Option<f64>,
}

impl PoolSummary {
    /// Summed syntactic and full probability of the `k` best-ranked paths.
    pub fn top_k_mass(&self, k: usize) -> (f64, f64) {
        let k = k.min(self.syn.len());
        (
            self.syn[..k].iter().map(|x| x.exp()).sum(),
            self.full[..k].iter().map(|x| x.exp()).sum(),
        )
    }

    pub fn len(&self) -> usize {
        self.syn.len()
    }

    pub fn is_empty(&self) -> bool {
        self.syn.is_empty()
    }
}

/// One line of the search trace. `top_mass` holds the top-k syntactic
/// mass for each requested k; `cap_bound` is set when the cap excluded paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub word_index: usize,
    pub pool_size: usize,
    pub top_mass: Vec<f64>,
    pub cap_bound: bool,
}

/// Log factor of an arc-free choice at `c`, before any label.
pub(crate) fn action_logp(f: &Factors, legal: Legal, kind: ActionKind) -> f64 {
    let both = legal.shift && legal.reduce();
    match kind {
        ActionKind::Shift => {
            if both {
                f.shift
            } else {
                0.0
            }
        }
        ActionKind::LeftArc | ActionKind::RightArc => {
            let tr = if both { f.reduce } else { 0.0 };
            let dir = if legal.left && legal.right {
                if kind == ActionKind::LeftArc {
                    f.left
                } else {
                    f.right
                }
            } else {
                0.0
            };
            tr + dir
        }
    }
}

/// Every successor of `c` with its syntactic and word log factors.
fn successors(c: &Configuration, f: &Factors, labels: LabelMode) -> Vec<(Action, f64, f64)> {
    let legal = c.legal();
    let mut out = Vec::new();
    if legal.shift {
        out.push((Action::SHIFT, action_logp(f, legal, ActionKind::Shift), f.next_word));
    }
    for kind in [ActionKind::LeftArc, ActionKind::RightArc] {
        if !legal.allows(kind) {
            continue;
        }
        let base = action_logp(f, legal, kind);
        match labels {
            LabelMode::Participate => {
                for (l, &lp) in f.labels.iter().enumerate() {
                    out.push((Action { kind, label: l as u32 }, base + lp, 0.0));
                }
            }
            LabelMode::Off => out.push((
                Action {
                    kind,
                    label: f.best_label(),
                },
                base,
                0.0,
            )),
        }
    }
    out
}

fn cmp_history(a: &[Action], a_next: Option<Action>, b: &[Action], b_next: Option<Action>) -> Ordering {
    let ai = a.iter().copied().chain(a_next);
    let bi = b.iter().copied().chain(b_next);
    ai.cmp(bi)
}

/// A child waiting in the frontier; materialized when popped.
struct Candidate {
    score: f64,
    logp_syn: f64,
    logp_full: f64,
    parent: usize,
    parent_history: Shared<Vec<Action>>,
    action: Action,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    // max-heap: higher score first, then lexicographically smaller history
    fn cmp(&self, other: &Self) -> Ordering {
        self.score.total_cmp(&other.score).then_with(|| {
            cmp_history(
                &other.parent_history,
                Some(other.action),
                &self.parent_history,
                Some(self.action),
            )
        })
    }
}

/// Best-first expansion of `roots` until `done` holds. Returns the completed
/// paths in rank order and the bound on what the cap excluded.
fn expand<S: Scorer + ?Sized>(
    roots: &[PathItem],
    scorer: &S,
    labels: LabelMode,
    rank: RankKey,
    cap: Option<usize>,
    done: impl Fn(&Configuration) -> bool,
) -> (Vec<PathItem>, Option<f64>) {
    let mut nodes: Vec<PathItem> = Vec::new();
    let mut heap = BinaryHeap::new();
    let push_children = |heap: &mut BinaryHeap<Candidate>, node: &PathItem, idx: usize| {
        let f = scorer.factors(&node.config);
        for (action, syn, word) in successors(&node.config, f, labels) {
            let logp_syn = node.logp_syn + syn;
            let logp_full = node.logp_full + syn + word;
            if logp_syn == f64::NEG_INFINITY || logp_full == f64::NEG_INFINITY {
                continue;
            }
            let score = match rank {
                RankKey::Syntactic => logp_syn,
                RankKey::Full => logp_full,
            };
            heap.push(Candidate {
                score,
                logp_syn,
                logp_full,
                parent: idx,
                parent_history: node.history.clone(),
                action,
            });
        }
    };
    for r in roots {
        nodes.push(r.clone());
        push_children(&mut heap, r, nodes.len() - 1);
    }
    let limit = cap.unwrap_or(usize::MAX);
    let mut out = Vec::new();
    let mut excluded = None;
    while let Some(cand) = heap.pop() {
        let parent = &nodes[cand.parent];
        let config = parent
            .config
            .apply(cand.action)
            .expect("successors are legal");
        let mut history = Vec::with_capacity(parent.history.len() + 1);
        history.extend_from_slice(&parent.history);
        history.push(cand.action);
        let item = PathItem {
            config,
            logp_syn: cand.logp_syn,
            logp_full: cand.logp_full,
            history: Shared::new(history),
        };
        if done(&item.config) {
            if out.len() < limit {
                out.push(item);
            } else {
                excluded = Some(cand.score);
                break;
            }
        } else {
            nodes.push(item);
            let idx = nodes.len() - 1;
            let node = nodes[idx].clone();
            push_children(&mut heap, &node, idx);
        }
    }
    (out, excluded)
}

/// The pool after the first word: the initial configuration.
pub fn initial_pool<S: Scorer + ?Sized>(scorer: &S) -> Result<WordSyncPool> {
    let config = initial_config(scorer.n_tokens())?;
    Ok(WordSyncPool {
        word: 1,
        paths: vec![PathItem {
            config,
            logp_syn: 0.0,
            logp_full: scorer.first_word(),
            history: Shared::new(Vec::new()),
        }],
        cap_bound: None,
    })
}

/// Extends every path to the Shift that generates the next word.
pub fn advance_word<S: Scorer + ?Sized>(
    pool: &WordSyncPool,
    scorer: &S,
    opts: &SearchOptions,
) -> Result<WordSyncPool> {
    let n = scorer.n_tokens();
    if pool.word >= n {
        return Err(Error::Search(format!(
            "pool is at word {} of {n}; nothing left to generate",
            pool.word
        )));
    }
    if opts.cap == Some(0) {
        return Err(Error::Config("pool cap must be positive".into()));
    }
    let target = pool.word + 1;
    let (paths, cap_bound) = expand(&pool.paths, scorer, opts.labels, opts.rank, opts.cap, |c| {
        c.front() == target
    });
    if paths.is_empty() {
        return Err(Error::Search(format!("no path reaches word {target}")));
    }
    Ok(WordSyncPool {
        word: target,
        paths,
        cap_bound,
    })
}

/// Completes each path of the last word's pool into a terminal derivation by
/// taking its most probable successor at every step, then ranks the results
/// by full probability, keeping at most `cap`.
pub fn finalize<S: Scorer + ?Sized>(
    pool: &WordSyncPool,
    scorer: &S,
    opts: &SearchOptions,
) -> Result<Vec<PathItem>> {
    if pool.word != scorer.n_tokens() {
        return Err(Error::Search(format!(
            "finalize needs the pool of word {}, got word {}",
            scorer.n_tokens(),
            pool.word
        )));
    }
    let mut paths = Vec::with_capacity(pool.paths.len());
    for start in &pool.paths {
        let mut item = start.clone();
        let mut history = item.history.to_vec();
        while !item.config.is_terminal() {
            let f = scorer.factors(&item.config);
            let best = successors(&item.config, f, opts.labels)
                .into_iter()
                .filter(|(_, syn, word)| (syn + word).is_finite())
                .max_by(|a, b| (a.1 + a.2).total_cmp(&(b.1 + b.2)));
            let Some((action, syn, word)) = best else { break };
            item.config = item.config.apply(action).expect("successors are legal");
            item.logp_syn += syn;
            item.logp_full += syn + word;
            history.push(action);
        }
        if item.config.is_terminal() {
            item.history = Shared::new(history);
            paths.push(item);
        }
    }
    if paths.is_empty() {
        return Err(Error::Search("no terminal derivation".into()));
    }
    paths.sort_by(|a, b| b.logp_full.total_cmp(&a.logp_full));
    paths.truncate(opts.cap.unwrap_or(usize::MAX));
    Ok(paths)
}

/// Every terminal completion of the last word's pool, best-first by full
/// probability up to `cap`. Exponential in the unreduced stack depth.
pub fn complete_exhaustive<S: Scorer + ?Sized>(
    pool: &WordSyncPool,
    scorer: &S,
    opts: &SearchOptions,
) -> Result<Vec<PathItem>> {
    if pool.word != scorer.n_tokens() {
        return Err(Error::Search(format!(
            "completion needs the pool of word {}, got word {}",
            scorer.n_tokens(),
            pool.word
        )));
    }
    let (paths, _) = expand(&pool.paths, scorer, opts.labels, RankKey::Full, opts.cap, |c| {
        c.is_terminal()
    });
    Ok(paths)
}

/// Pools for every word of a sentence, plus the completed derivations.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchRun {
    pub pools: Vec<PoolSummary>,
    pub completed: Vec<PathItem>,
}

impl SearchRun {
    pub fn trace(&self, ks: &[usize]) -> Vec<TraceRecord> {
        self.pools
            .iter()
            .map(|p| TraceRecord {
                word_index: p.word,
                pool_size: p.len(),
                top_mass: ks.iter().map(|&k| p.top_k_mass(k).0).collect(),
                cap_bound: p.cap_bound.is_some(),
            })
            .collect()
    }

    pub fn best(&self) -> &PathItem {
        &self.completed[0]
    }
}

/// Runs the search over a whole sentence.
pub fn run_search<S: Scorer + ?Sized>(scorer: &S, opts: &SearchOptions) -> Result<SearchRun> {
    let mut pool = initial_pool(scorer)?;
    let mut pools = vec![pool.summary()];
    while pool.word < scorer.n_tokens() {
        pool = advance_word(&pool, scorer, opts)?;
        pools.push(pool.summary());
    }
    let completed = finalize(&pool, scorer, opts)?;
    Ok(SearchRun { pools, completed })
}

/// One step of a scored derivation: the syntactic log factor (labels
/// included when they participate) and the word log factor of a Shift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivationStep {
    pub action: Action,
    pub logp_syn: f64,
    pub logp_word: f64,
}

/// Rescores `history` from the initial configuration.
pub fn derivation_steps<S: Scorer + ?Sized>(
    scorer: &S,
    history: &[Action],
    labels: LabelMode,
) -> Result<Vec<DerivationStep>> {
    let mut c = initial_config(scorer.n_tokens())?;
    let mut out = Vec::with_capacity(history.len());
    for (i, &a) in history.iter().enumerate() {
        let f = scorer.factors(&c);
        let (_, syn, word) = successors(&c, f, labels)
            .into_iter()
            .find(|(b, _, _)| b.kind == a.kind && (labels == LabelMode::Off || b.label == a.label))
            .ok_or_else(|| Error::Search(format!("step {i}: {a} is not legal")))?;
        out.push(DerivationStep {
            action: a,
            logp_syn: syn,
            logp_word: word,
        });
        c = c.apply(a)?;
    }
    Ok(out)
}

/// Every terminal derivation, for sentences of at most `max_n` tokens.
pub fn exhaustive_parse<S: Scorer + ?Sized>(
    scorer: &S,
    labels: LabelMode,
    max_n: usize,
) -> Result<Vec<PathItem>> {
    let n = scorer.n_tokens();
    if n > max_n {
        return Err(Error::Refused(format!(
            "exhaustive parsing of {n} tokens exceeds the limit of {max_n}"
        )));
    }
    let root = initial_pool(scorer)?.paths.remove(0);
    let mut out = Vec::new();
    let mut stack = vec![root];
    while let Some(p) = stack.pop() {
        if p.config.is_terminal() {
            out.push(p);
            continue;
        }
        let f = scorer.factors(&p.config);
        for (action, syn, word) in successors(&p.config, f, labels) {
            let mut h = (*p.history).clone();
            h.push(action);
            stack.push(PathItem {
                config: p.config.apply(action)?,
                logp_syn: p.logp_syn + syn,
                logp_full: p.logp_full + syn + word,
                history: Shared::new(h),
            });
        }
    }
    Ok(out)
}

/// Locally best action at every step by its transition, direction and
/// label factors.
pub fn greedy_parse<S: Scorer + ?Sized>(scorer: &S) -> Result<DependencyTree> {
    let mut c = initial_config(scorer.n_tokens())?;
    while !c.is_terminal() {
        let f = scorer.factors(&c);
        let mut best: Option<(Action, f64)> = None;
        for (a, syn, _) in successors(&c, f, LabelMode::Off) {
            let label = if a.kind == ActionKind::Shift {
                0.0
            } else {
                f.labels[a.label as usize]
            };
            let s = syn + label;
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((a, s));
            }
        }
        let (a, _) = best.ok_or_else(|| Error::Search(format!("no legal action at {c}")))?;
        c.apply_mut(a)?;
    }
    Ok(c.tree())
}

/// Highest full-probability derivation found by the ranked search.
pub fn beam_parse<S: Scorer + ?Sized>(scorer: &S, opts: &SearchOptions) -> Result<DependencyTree> {
    let run = run_search(scorer, opts)?;
    Ok(run.best().config.tree())
}
