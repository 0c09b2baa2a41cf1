use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Precomputed per-word encodings for a corpus, one matrix per sentence.
///
/// The CSV layout is a `sentence_id,n_tokens,d` header line, then for each
/// sentence a line `id,n,d` followed by `n` rows of `d` values.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalEncodings {
    pub d: usize,
    pub sentences: Vec<Array2<f64>>,
}

impl ExternalEncodings {
    pub fn new(d: usize, sentences: Vec<Array2<f64>>) -> Result<Self> {
        if let Some((k, m)) = sentences.iter().enumerate().find(|(_, m)| m.ncols() != d) {
            return Err(Error::Config(format!(
                "sentence {k} has d = {}, expected {d}",
                m.ncols()
            )));
        }
        Ok(ExternalEncodings { d, sentences })
    }

    pub fn get(&self, id: usize) -> Result<&Array2<f64>> {
        self.sentences
            .get(id)
            .ok_or_else(|| Error::Lookup(format!("no external encodings for sentence {id}")))
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let origin = path.display().to_string();
        let mut lines = BufReader::new(f).lines().enumerate();
        let mut next = || -> Result<Option<(usize, String)>> {
            for (k, l) in lines.by_ref() {
                let l = l.map_err(|e| Error::io(path, e))?;
                if !l.trim().is_empty() {
                    return Ok(Some((k + 1, l)));
                }
            }
            Ok(None)
        };
        let perr = |line: usize, message: String| Error::Parse {
            path: origin.clone(),
            line,
            message,
        };
        match next()? {
            Some((_, h)) if h.trim() == "sentence_id,n_tokens,d" => {}
            Some((line, h)) => return Err(perr(line, format!("unexpected header `{h}`"))),
            None => return Err(Error::Format(format!("{origin}: empty encoding file"))),
        }
        let mut d = None;
        let mut sentences = Vec::new();
        while let Some((line, head)) = next()? {
            let f: Vec<usize> = head
                .split(',')
                .map(|x| x.trim().parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| perr(line, format!("bad block header: {e}")))?;
            let [id, n, dd] = f[..] else {
                return Err(perr(line, "block header needs id,n,d".into()));
            };
            if id != sentences.len() {
                return Err(perr(line, format!("expected sentence {}, found {id}", sentences.len())));
            }
            if *d.get_or_insert(dd) != dd {
                return Err(Error::Config(format!("{origin}:{line}: d changes to {dd}")));
            }
            let mut m = Array2::zeros((n, dd));
            for r in 0..n {
                let (line, row) = next()?.ok_or_else(|| perr(line, "truncated block".into()))?;
                let vals: Vec<f64> = row
                    .split(',')
                    .map(|x| x.trim().parse())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| perr(line, format!("bad value: {e}")))?;
                if vals.len() != dd {
                    return Err(perr(line, format!("{} values, expected {dd}", vals.len())));
                }
                for (c, v) in vals.into_iter().enumerate() {
                    m[[r, c]] = v;
                }
            }
            sentences.push(m);
        }
        ExternalEncodings::new(d.unwrap_or(0), sentences)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::from("sentence_id,n_tokens,d\n");
        for (k, m) in self.sentences.iter().enumerate() {
            out.push_str(&format!("{k},{},{}\n", m.nrows(), self.d));
            for row in m.rows() {
                let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
                out.push_str(&cells.join(","));
                out.push('\n');
            }
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("enc.csv");
        let a = Array2::from_shape_fn((4, 3), |(r, c)| r as f64 * 0.5 - c as f64 / 3.0);
        let b = Array2::from_shape_fn((1, 3), |(_, c)| c as f64);
        let e = ExternalEncodings::new(3, vec![a, b]).unwrap();
        e.write(&p).unwrap();
        let back = ExternalEncodings::read(&p).unwrap();
        assert_eq!(back, e);
        assert_eq!(back.get(0).unwrap().nrows(), 4);
        assert!(matches!(back.get(2), Err(Error::Lookup(_))));
    }

    #[test]
    fn malformed_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "sentence_id,n_tokens,d\n0,2,2\n1,2\n").unwrap();
        assert!(matches!(ExternalEncodings::read(&p), Err(Error::Parse { line: 2, .. })));
        std::fs::write(&p, "sentence_id,n_tokens,d\n0,1,2\n1,2\n1,1,3\n1,2,3\n").unwrap();
        assert!(matches!(ExternalEncodings::read(&p), Err(Error::Config(_))));
    }
}
