//! The arc-hybrid transition system.
//!
//! A configuration is a stack of token indices plus the index `j` of the
//! buffer front. Tokens are numbered `1..=n`; a virtual ROOT sits at
//! position `n + 1` and is never shifted. The sentence head attaches to ROOT
//! by a LeftArc once ROOT is the buffer front and exactly one token remains
//! on the stack.
//!
//! | action   | before        | after           | arc    |
//! |----------|---------------|-----------------|--------|
//! | Shift    | `(σ, j)`      | `(σ|j, j+1)`    |        |
//! | LeftArc  | `(σ|i, j)`    | `(σ, j)`        | j → i  |
//! | RightArc | `(σ|l|i, j)`  | `(σ|l, j)`      | l → i  |

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::treebank::{is_projective, Sentence, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ActionKind {
    Shift,
    LeftArc,
    RightArc,
}

/// A transition. `label` indexes the label inventory and is ignored for
/// Shift (always 0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Action {
    pub kind: ActionKind,
    pub label: u32,
}

impl Action {
    pub const SHIFT: Action = Action {
        kind: ActionKind::Shift,
        label: 0,
    };

    pub fn left(label: u32) -> Self {
        Action {
            kind: ActionKind::LeftArc,
            label,
        }
    }

    pub fn right(label: u32) -> Self {
        Action {
            kind: ActionKind::RightArc,
            label,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ActionKind::Shift => write!(f, "SH"),
            ActionKind::LeftArc => write!(f, "LA:{}", self.label),
            ActionKind::RightArc => write!(f, "RA:{}", self.label),
        }
    }
}

/// A labeled dependency. `head == 0` is the root attachment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Arc {
    pub head: usize,
    pub dependent: usize,
    pub label: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Configuration {
    n: usize,
    stack: Vec<usize>,
    front: usize,
    arcs: Vec<Arc>,
}

/// The set of legal action kinds at a configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Legal {
    pub shift: bool,
    pub left: bool,
    pub right: bool,
}

impl Legal {
    pub fn kinds(&self) -> Vec<ActionKind> {
        let mut v = Vec::with_capacity(3);
        if self.shift {
            v.push(ActionKind::Shift);
        }
        if self.left {
            v.push(ActionKind::LeftArc);
        }
        if self.right {
            v.push(ActionKind::RightArc);
        }
        v
    }

    pub fn allows(&self, kind: ActionKind) -> bool {
        match kind {
            ActionKind::Shift => self.shift,
            ActionKind::LeftArc => self.left,
            ActionKind::RightArc => self.right,
        }
    }

    pub fn reduce(&self) -> bool {
        self.left || self.right
    }
}

/// Initial configuration for an `n`-token sentence: empty stack, front at 1.
pub fn initial_config(n: usize) -> Result<Configuration> {
    if n == 0 {
        return Err(Error::Contract("cannot parse an empty sentence".into()));
    }
    Ok(Configuration {
        n,
        stack: Vec::new(),
        front: 1,
        arcs: Vec::new(),
    })
}

impl Configuration {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn stack(&self) -> &[usize] {
        &self.stack
    }

    pub fn front(&self) -> usize {
        self.front
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn top(&self) -> Option<usize> {
        self.stack.last().copied()
    }

    /// The element below the stack top.
    pub fn below(&self) -> Option<usize> {
        let k = self.stack.len();
        (k >= 2).then(|| self.stack[k - 2])
    }

    /// ROOT is the buffer front: no more words to shift.
    pub fn root_front(&self) -> bool {
        self.front == self.n + 1
    }

    pub fn legal(&self) -> Legal {
        let depth = self.stack.len();
        if self.root_front() {
            Legal {
                shift: false,
                left: depth == 1,
                right: depth >= 2,
            }
        } else {
            Legal {
                shift: true,
                left: depth >= 1,
                right: depth >= 2,
            }
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.stack.is_empty() && self.root_front() && self.arcs.len() == self.n
    }

    pub fn apply(&self, a: Action) -> Result<Configuration> {
        let mut c = self.clone();
        c.apply_mut(a)?;
        Ok(c)
    }

    pub fn apply_mut(&mut self, a: Action) -> Result<()> {
        if !self.legal().allows(a.kind) {
            return Err(Error::Contract(format!("{a} is illegal in {self}")));
        }
        match a.kind {
            ActionKind::Shift => {
                self.stack.push(self.front);
                self.front += 1;
            }
            ActionKind::LeftArc => {
                let i = self.stack.pop().expect("legal LeftArc has a stack top");
                let head = if self.root_front() { 0 } else { self.front };
                self.arcs.push(Arc {
                    head,
                    dependent: i,
                    label: a.label,
                });
            }
            ActionKind::RightArc => {
                let i = self.stack.pop().expect("legal RightArc has a stack top");
                let l = *self.stack.last().expect("legal RightArc has two stack items");
                self.arcs.push(Arc {
                    head: l,
                    dependent: i,
                    label: a.label,
                });
            }
        }
        Ok(())
    }

    /// Checks the structural invariants; used by property tests.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        if self.front < 1 || self.front > self.n + 1 {
            return Err(format!("front {} outside [1, {}]", self.front, self.n + 1));
        }
        for (k, &s) in self.stack.iter().enumerate() {
            if s == 0 || s >= self.front {
                return Err(format!("stack entry {s} not below front {}", self.front));
            }
            if k > 0 && s <= self.stack[k - 1] {
                return Err(format!("stack not strictly increasing: {:?}", self.stack));
            }
        }
        let mut seen = vec![false; self.n + 1];
        for a in &self.arcs {
            if a.head == a.dependent {
                return Err(format!("self-loop on {}", a.dependent));
            }
            if a.dependent >= self.front || self.stack.contains(&a.dependent) {
                return Err(format!("attached dependent {} still active", a.dependent));
            }
            if std::mem::replace(&mut seen[a.dependent], true) {
                return Err(format!("token {} has two heads", a.dependent));
            }
        }
        Ok(())
    }

    /// The tree built so far; only meaningful once terminal.
    pub fn tree(&self) -> DependencyTree {
        let mut heads = vec![0; self.n];
        let mut labels = vec![0; self.n];
        for a in &self.arcs {
            heads[a.dependent - 1] = a.head;
            labels[a.dependent - 1] = a.label;
        }
        DependencyTree { heads, labels }
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(σ={:?}, j={}, n={})", self.stack, self.front, self.n)
    }
}

/// A complete dependency tree: `heads[d-1]` and `labels[d-1]` for token `d`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DependencyTree {
    pub heads: Vec<usize>,
    pub labels: Vec<u32>,
}

impl DependencyTree {
    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }

    pub fn label_names<'a>(&self, inventory: &'a [String]) -> Vec<&'a str> {
        self.labels
            .iter()
            .map(|&l| inventory.get(l as usize).map(String::as_str).unwrap_or("_"))
            .collect()
    }
}

/// Runs `actions` from the initial configuration.
pub fn replay(n: usize, actions: &[Action]) -> Result<Configuration> {
    let mut c = initial_config(n)?;
    for &a in actions {
        c.apply_mut(a)?;
    }
    Ok(c)
}

/// Static oracle over gold heads and label ids.
pub fn oracle_from_heads(heads: &[usize], labels: &[u32]) -> Result<Vec<Action>> {
    let n = heads.len();
    let mut pending = vec![0usize; n + 1];
    for &h in heads {
        pending[h] += 1;
    }
    let head_of = |t: usize| heads[t - 1];
    let mut c = initial_config(n)?;
    let mut actions = Vec::with_capacity(2 * n);
    while !c.is_terminal() {
        let legal = c.legal();
        let next = match c.top() {
            Some(i) if pending[i] == 0 => {
                let front_as_head = if c.root_front() { 0 } else { c.front() };
                if legal.left && head_of(i) == front_as_head {
                    Some(Action::left(labels[i - 1]))
                } else if legal.right && c.below() == Some(head_of(i)) {
                    Some(Action::right(labels[i - 1]))
                } else {
                    None
                }
            }
            _ => None,
        };
        let a = match next {
            Some(a) => a,
            None if legal.shift => Action::SHIFT,
            None => {
                return Err(Error::NonProjective(format!(
                    "oracle stuck at {c} for heads {heads:?}"
                )))
            }
        };
        if a.kind != ActionKind::Shift {
            let i = c.top().expect("arc action has a top");
            pending[head_of(i)] -= 1;
        }
        c.apply_mut(a)?;
        actions.push(a);
    }
    if c.tree().heads != heads {
        return Err(Error::NonProjective(format!("oracle cannot derive {heads:?}")));
    }
    Ok(actions)
}

/// Transition sequence deriving the gold tree of a projective sentence.
pub fn static_oracle(s: &Sentence, vocab: &Vocabulary) -> Result<Vec<Action>> {
    if !s.has_gold() {
        return Err(Error::Contract("static oracle needs a gold tree".into()));
    }
    s.validate_tree()?;
    if !is_projective(s) {
        return Err(Error::NonProjective(s.tokens.join(" ")));
    }
    let labels = s
        .labels
        .iter()
        .map(|l| {
            vocab
                .label_id(l)
                .ok_or_else(|| Error::Lookup(format!("label `{l}` not in the label set")))
        })
        .collect::<Result<Vec<_>>>()?;
    oracle_from_heads(&s.heads, &labels)
}
