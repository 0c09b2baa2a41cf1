//! Stimulus timing and acoustic/lexical control series.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedWord {
    pub word: String,
    pub onset: f64,
    pub offset: f64,
}

/// Word onsets and offsets in seconds, with strictly increasing offsets.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StimulusAlignment {
    pub entries: Vec<AlignedWord>,
}

impl StimulusAlignment {
    pub fn new(entries: Vec<AlignedWord>) -> Result<Self> {
        let a = StimulusAlignment { entries };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, e) in self.entries.iter().enumerate() {
            if !(e.onset.is_finite() && e.offset.is_finite()) || e.onset > e.offset {
                return Err(Error::Validation(format!(
                    "alignment row {}: onset {} after offset {}",
                    i + 1,
                    e.onset,
                    e.offset
                )));
            }
            if i > 0 && e.offset <= self.entries[i - 1].offset {
                return Err(Error::Validation(format!(
                    "alignment row {}: offset {} not after previous offset {}",
                    i + 1,
                    e.offset,
                    self.entries[i - 1].offset
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn offsets(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.offset).collect()
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        for e in &self.entries {
            w.serialize(e)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn require_headers(path: &Path, reader: &mut csv::Reader<std::fs::File>, want: &[&str]) -> Result<()> {
    let headers = reader.headers()?.clone();
    for h in want {
        if !headers.iter().any(|x| x.trim() == *h) {
            return Err(Error::Format(format!(
                "{}: missing column `{}` (found {:?})",
                path.display(),
                h,
                headers.iter().collect::<Vec<_>>()
            )));
        }
    }
    Ok(())
}

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

/// Reads `word,onset,offset` rows.
pub fn read_alignment(path: impl AsRef<Path>) -> Result<StimulusAlignment> {
    let path = path.as_ref();
    let mut r = open_csv(path)?;
    require_headers(path, &mut r, &["word", "onset", "offset"])?;
    let mut entries = Vec::new();
    for row in r.deserialize() {
        let e: AlignedWord = row?;
        entries.push(e);
    }
    StimulusAlignment::new(entries)
}

/// A uniformly sampled control series such as RMS intensity or f0.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSeries {
    pub start: f64,
    pub period: f64,
    pub values: Vec<f64>,
}

impl FeatureSeries {
    pub fn duration(&self) -> f64 {
        self.values.len() as f64 * self.period
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["time", "value"])?;
        for (i, v) in self.values.iter().enumerate() {
            let t = self.start + i as f64 * self.period;
            w.write_record([format!("{t:.6}"), format!("{v}")])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Deserialize)]
struct Sidecar {
    period: f64,
}

/// Reads a `time,value` CSV. The sample period comes from a `<path>.json`
/// sidecar (`{"period": 0.01}`) when present, otherwise it is inferred from
/// the first two rows; either way all rows must lie on the uniform grid.
pub fn read_feature_series(path: impl AsRef<Path>) -> Result<FeatureSeries> {
    let path = path.as_ref();
    let mut r = open_csv(path)?;
    require_headers(path, &mut r, &["time", "value"])?;
    let headers = r.headers()?.clone();
    let ti = headers.iter().position(|h| h == "time").unwrap_or(0);
    let vi = headers.iter().position(|h| h == "value").unwrap_or(1);
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| Error::Parse {
                    path: path.display().to_string(),
                    line: i + 2,
                    message: "non-numeric field".into(),
                })
        };
        times.push(parse(ti)?);
        values.push(parse(vi)?);
    }
    let sidecar = path.with_extension(format!(
        "{}.json",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    let period = if sidecar.exists() {
        let text = std::fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        let s: Sidecar = serde_json::from_str(&text)?;
        s.period
    } else if times.len() >= 2 {
        times[1] - times[0]
    } else {
        return Err(Error::Format(format!(
            "{}: cannot infer sample period from fewer than two rows",
            path.display()
        )));
    };
    if !(period > 0.0) {
        return Err(Error::Format(format!("{}: non-positive sample period", path.display())));
    }
    let start = times.first().copied().unwrap_or(0.0);
    for (i, &t) in times.iter().enumerate() {
        let expect = start + i as f64 * period;
        if (t - expect).abs() > 1e-6 * period.max(1.0) + 1e-9 * t.abs() {
            return Err(Error::Validation(format!(
                "{}: row {} at t={} is off the uniform {}s grid",
                path.display(),
                i + 2,
                t,
                period
            )));
        }
    }
    Ok(FeatureSeries {
        start,
        period,
        values,
    })
}

/// Word frequencies per million tokens, looked up case-insensitively.
#[derive(Debug, Clone, Default)]
pub struct FrequencyTable {
    per_million: HashMap<String, f64>,
    min: f64,
}

impl FrequencyTable {
    pub fn from_pairs<I: IntoIterator<Item = (String, f64)>>(pairs: I) -> Self {
        let per_million: HashMap<String, f64> =
            pairs.into_iter().map(|(w, f)| (w.to_lowercase(), f)).collect();
        let min = per_million.values().copied().fold(f64::INFINITY, f64::min);
        FrequencyTable {
            per_million,
            min: if min.is_finite() { min } else { 1.0 },
        }
    }

    /// Per-million frequency; unknown words get the table minimum.
    pub fn get(&self, word: &str) -> f64 {
        self.per_million
            .get(&word.to_lowercase())
            .copied()
            .unwrap_or(self.min)
    }

    pub fn len(&self) -> usize {
        self.per_million.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_million.is_empty()
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut rows: Vec<_> = self.per_million.iter().collect();
        rows.sort_by(|a, b| a.0.cmp(b.0));
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["word", "per_million"])?;
        for (word, f) in rows {
            w.write_record([word.as_str(), &format!("{f}")])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Reads `word,per_million` rows.
pub fn read_frequency_table(path: impl AsRef<Path>) -> Result<FrequencyTable> {
    let path = path.as_ref();
    let mut r = open_csv(path)?;
    require_headers(path, &mut r, &["word", "per_million"])?;
    #[derive(Deserialize)]
    struct Row {
        word: String,
        per_million: f64,
    }
    let mut pairs = Vec::new();
    for row in r.deserialize() {
        let row: Row = row?;
        if !(row.per_million > 0.0) {
            return Err(Error::Validation(format!(
                "{}: non-positive frequency for `{}`",
                path.display(),
                row.word
            )));
        }
        pairs.push((row.word, row.per_million));
    }
    Ok(FrequencyTable::from_pairs(pairs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        let mut f = std::fs::File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn reads_alignment_in_order() {
        let d = tempfile::tempdir().unwrap();
        let p = write(d.path(), "a.csv", "word,onset,offset\nthe,0.1,0.3\ndesert,0.3,0.8\nis,0.8,1.0\n");
        let a = read_alignment(&p).unwrap();
        assert_eq!(a.len(), 3);
        assert_eq!(a.entries[1].word, "desert");
        assert_eq!(a.offsets(), vec![0.3, 0.8, 1.0]);
    }

    #[test]
    fn non_monotone_offsets_rejected() {
        let d = tempfile::tempdir().unwrap();
        let p = write(d.path(), "a.csv", "word,onset,offset\na,0.0,1.0\nb,0.2,0.5\n");
        assert!(matches!(read_alignment(&p), Err(Error::Validation(_))));
    }

    #[test]
    fn missing_column_is_format_error() {
        let d = tempfile::tempdir().unwrap();
        let p = write(d.path(), "a.csv", "word,onset\na,0.0\n");
        assert!(matches!(read_alignment(&p), Err(Error::Format(_))));
    }

    #[test]
    fn long_rms_series_reports_duration() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("rms.csv");
        let mut body = String::with_capacity(600_000 * 16);
        body.push_str("time,value\n");
        for i in 0..600_000u32 {
            body.push_str(&format!("{:.2},{}\n", i as f64 * 0.01, i % 7));
        }
        std::fs::write(&p, body).unwrap();
        let s = read_feature_series(&p).unwrap();
        assert_eq!(s.values.len(), 600_000);
        assert!((s.period - 0.01).abs() < 1e-12);
        assert!((s.duration() - 6000.0).abs() < 1e-6);
    }

    #[test]
    fn sidecar_period_wins() {
        let d = tempfile::tempdir().unwrap();
        let p = write(d.path(), "f0.csv", "time,value\n0.0,1\n0.5,2\n1.0,3\n");
        write(d.path(), "f0.csv.json", "{\"period\": 0.5}");
        let s = read_feature_series(&p).unwrap();
        assert_eq!(s.period, 0.5);
        let bad = write(d.path(), "g.csv", "time,value\n0.0,1\n0.5,2\n1.2,3\n");
        assert!(read_feature_series(&bad).is_err());
    }

    #[test]
    fn frequency_unknown_gets_minimum() {
        let t = FrequencyTable::from_pairs(vec![("The".into(), 50000.0), ("prince".into(), 12.5)]);
        assert_eq!(t.get("the"), 50000.0);
        assert_eq!(t.get("baobab"), 12.5);
    }
}
