use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Factors, Scorer};
use crate::error::{Error, Result};
use crate::transition::Configuration;

/// Linear-domain probabilities for one configuration; omitted fields take
/// the table defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub stack: Vec<usize>,
    pub front: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_shift: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_la: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<f64>>,
    /// Probability of the word generated by a shift here.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_word: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TableFile {
    n_tokens: usize,
    #[serde(default = "one")]
    n_labels: usize,
    #[serde(default = "onef")]
    first_word: f64,
    #[serde(default = "onef")]
    p_shift: f64,
    #[serde(default = "half")]
    p_la: f64,
    #[serde(default = "onef")]
    p_word: f64,
    #[serde(default)]
    entries: Vec<TableEntry>,
}

fn one() -> usize {
    1
}
fn onef() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}

/// Hand-specified factors keyed by the full stack and buffer front; used to
/// pin down search and surprisal behavior on small fragments.
#[derive(Debug, Clone)]
pub struct TableScorer {
    n: usize,
    n_labels: usize,
    first: f64,
    default: Factors,
    entries: HashMap<(Vec<usize>, usize), Factors>,
}

fn check_prob(p: f64, what: &str) -> Result<f64> {
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(Error::Validation(format!("{what} = {p} is not a probability")))
    }
}

impl TableScorer {
    /// Defaults: shift with probability `p_shift`, left arc `p_la`, uniform
    /// labels and certain words.
    pub fn new(n: usize, n_labels: usize, p_shift: f64, p_la: f64) -> Result<Self> {
        if n == 0 || n_labels == 0 {
            return Err(Error::Validation("table needs tokens and labels".into()));
        }
        let default = Self::make(p_shift, p_la, &vec![1.0 / n_labels as f64; n_labels], 1.0)?;
        Ok(TableScorer {
            n,
            n_labels,
            first: 0.0,
            default,
            entries: HashMap::new(),
        })
    }

    fn make(p_shift: f64, p_la: f64, labels: &[f64], p_word: f64) -> Result<Factors> {
        let p_shift = check_prob(p_shift, "p_shift")?;
        let p_la = check_prob(p_la, "p_la")?;
        let p_word = check_prob(p_word, "p_word")?;
        let total: f64 = labels.iter().sum();
        if labels.iter().any(|&p| p < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::Validation("label probabilities must sum to 1".into()));
        }
        Ok(Factors {
            shift: p_shift.ln(),
            reduce: (1.0 - p_shift).ln(),
            left: p_la.ln(),
            right: (1.0 - p_la).ln(),
            labels: labels.iter().map(|p| p.ln()).collect(),
            next_word: p_word.ln(),
        })
    }

    pub fn set_first_word(&mut self, p: f64) -> Result<()> {
        self.first = check_prob(p, "first_word")?.ln();
        Ok(())
    }

    pub fn insert(&mut self, e: &TableEntry) -> Result<()> {
        if e.front == 0 || e.front > self.n + 1 {
            return Err(Error::Validation(format!("front {} out of range", e.front)));
        }
        if e.stack.iter().any(|&s| s == 0 || s >= e.front) {
            return Err(Error::Validation(format!("stack {:?} not below front", e.stack)));
        }
        let d = &self.default;
        let labels = match &e.labels {
            Some(l) if l.len() != self.n_labels => {
                return Err(Error::Validation(format!(
                    "entry has {} label probabilities, table has {} labels",
                    l.len(),
                    self.n_labels
                )))
            }
            Some(l) => l.clone(),
            None => d.labels.iter().map(|x| x.exp()).collect(),
        };
        let f = Self::make(
            e.p_shift.unwrap_or(d.shift.exp()),
            e.p_la.unwrap_or(d.left.exp()),
            &labels,
            e.p_word.unwrap_or(d.next_word.exp()),
        )?;
        self.entries.insert((e.stack.clone(), e.front), f);
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: TableFile = serde_json::from_str(text)?;
        let mut t = TableScorer::new(f.n_tokens, f.n_labels, f.p_shift, f.p_la)?;
        t.default.next_word = check_prob(f.p_word, "p_word")?.ln();
        t.set_first_word(f.first_word)?;
        for e in &f.entries {
            t.insert(e)?;
        }
        Ok(t)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

impl Scorer for TableScorer {
    fn n_tokens(&self) -> usize {
        self.n
    }

    fn n_labels(&self) -> usize {
        self.n_labels
    }

    fn first_word(&self) -> f64 {
        self.first
    }

    fn factors(&self, c: &Configuration) -> &Factors {
        self.entries
            .get(&(c.stack().to_vec(), c.front()))
            .unwrap_or(&self.default)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transition::{initial_config, Action};

    #[test]
    fn json_entries_override_defaults() {
        let t = TableScorer::from_json(
            r#"{"n_tokens": 3, "entries": [{"stack": [1], "front": 2, "p_shift": 0.25}]}"#,
        )
        .unwrap();
        let c = initial_config(3).unwrap();
        assert_eq!(t.factors(&c).shift, 0.0);
        let c = c.apply(Action::SHIFT).unwrap();
        assert!((t.factors(&c).shift - 0.25f64.ln()).abs() < 1e-15);
        assert!((t.factors(&c).left - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn invalid_entries_are_rejected() {
        assert!(TableScorer::from_json(r#"{"n_tokens": 2, "p_shift": 1.5}"#).is_err());
        assert!(TableScorer::from_json(
            r#"{"n_tokens": 2, "entries": [{"stack": [2], "front": 2}]}"#
        )
        .is_err());
        assert!(TableScorer::from_json(
            r#"{"n_tokens": 2, "n_labels": 2, "entries": [{"stack": [], "front": 1, "labels": [0.5]}]}"#
        )
        .is_err());
    }
}
