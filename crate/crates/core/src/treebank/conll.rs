use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Sentence;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ConllFormat {
    Conllx,
    #[default]
    Conllu,
}

impl std::str::FromStr for ConllFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "conllx" | "conll-x" => Ok(ConllFormat::Conllx),
            "conllu" | "conll-u" => Ok(ConllFormat::Conllu),
            other => Err(Error::Config(format!("unknown treebank format `{other}`"))),
        }
    }
}

pub fn read_conll(path: impl AsRef<Path>, format: ConllFormat) -> Result<Vec<Sentence>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_conll_str(&text, format, &path.display().to_string())
}

/// Parses CoNLL text. `origin` is used in error messages.
pub fn read_conll_str(text: &str, format: ConllFormat, origin: &str) -> Result<Vec<Sentence>> {
    let mut sentences = Vec::new();
    let mut cur = Sentence::new(Vec::new(), Vec::new(), Vec::new());
    cur.tags.clear();

    let flush = |cur: &mut Sentence, out: &mut Vec<Sentence>| {
        if !cur.tokens.is_empty() {
            out.push(std::mem::replace(
                cur,
                Sentence {
                    tokens: Vec::new(),
                    tags: Vec::new(),
                    heads: Vec::new(),
                    labels: Vec::new(),
                },
            ));
        }
    };

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        let err = |message: String| Error::Parse {
            path: origin.to_string(),
            line: lineno + 1,
            message,
        };
        if line.trim().is_empty() {
            flush(&mut cur, &mut sentences);
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 8 {
            return Err(err(format!(
                "expected at least 8 tab-separated columns, found {}",
                cols.len()
            )));
        }
        let id = cols[0];
        if format == ConllFormat::Conllu && (id.contains('-') || id.contains('.')) {
            continue;
        }
        let id: usize = id
            .parse()
            .map_err(|_| err(format!("non-integer token id `{id}`")))?;
        if id != cur.tokens.len() + 1 {
            return Err(err(format!(
                "token id {id} out of sequence (expected {})",
                cur.tokens.len() + 1
            )));
        }
        let head: usize = cols[6]
            .parse()
            .map_err(|_| err(format!("non-integer HEAD `{}`", cols[6])))?;
        cur.tokens.push(cols[1].to_string());
        cur.tags.push(cols[3].to_string());
        cur.heads.push(head);
        cur.labels.push(cols[7].to_string());
    }
    flush(&mut cur, &mut sentences);

    for (si, s) in sentences.iter().enumerate() {
        let n = s.len();
        if let Some(h) = s.heads.iter().find(|&&h| h > n) {
            return Err(Error::Parse {
                path: origin.to_string(),
                line: 0,
                message: format!("sentence {} has HEAD {} beyond its {} tokens", si + 1, h, n),
            });
        }
    }
    Ok(sentences)
}

/// Both formats share the ten-column layout for the retained columns.
pub fn write_conll_string(sentences: &[Sentence], _format: ConllFormat) -> String {
    let mut out = String::new();
    for s in sentences {
        for i in 0..s.len() {
            let tag = s.tags.get(i).map(String::as_str).unwrap_or("_");
            let head = s.heads.get(i).copied().unwrap_or(0);
            let label = s.labels.get(i).map(String::as_str).unwrap_or("_");
            let _ = writeln!(
                out,
                "{}\t{}\t_\t{}\t_\t_\t{}\t{}\t_\t_",
                i + 1,
                s.tokens[i],
                tag,
                head,
                label,
            );
        }
        out.push('\n');
    }
    out
}

pub fn write_conll(path: impl AsRef<Path>, sentences: &[Sentence], format: ConllFormat) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_conll_string(sentences, format)).map_err(|e| Error::io(path, e))
}
