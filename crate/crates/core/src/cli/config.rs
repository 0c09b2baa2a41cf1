use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neuro::HrfSpec;
use crate::scoring::{EncoderKind, EncoderSpec};
use crate::search::{LabelMode, RankKey, SearchOptions, DEFAULT_CAP};
use crate::synth::ExperimentConfig;
use crate::trainer::{SelectionCriterion, TrainConfig};
use crate::treebank::{ConllFormat, Lang};

/// One declarative file drives every subcommand; each reads its own section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub k_list: Vec<usize>,
    /// Pool cap; 0 keeps every path.
    pub cap: usize,
    pub labels: LabelMode,
    pub rank: RankKey,
    pub exclude_punct: bool,
    pub lang: Lang,
    pub train: Option<TrainSection>,
    pub eval: Option<EvalSection>,
    pub profile: Option<ProfileSection>,
    pub regress: Option<RegressSection>,
    pub select: Option<SelectSection>,
    pub synth: Option<SynthSection>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            k_list: vec![1, 5],
            cap: DEFAULT_CAP,
            labels: LabelMode::Participate,
            rank: RankKey::Syntactic,
            exclude_punct: true,
            lang: Lang::English,
            train: None,
            eval: None,
            profile: None,
            regress: None,
            select: None,
            synth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub train: PathBuf,
    #[serde(default)]
    pub dev: Option<PathBuf>,
    pub out_dir: PathBuf,
    #[serde(default = "default_min_count")]
    pub min_count: usize,
    #[serde(default)]
    pub encoder: EncoderSpec,
    #[serde(default)]
    pub external_train: Option<PathBuf>,
    #[serde(default)]
    pub external_dev: Option<PathBuf>,
    /// `seed` here is ignored in favour of the run seed.
    #[serde(default)]
    pub schedule: TrainConfig,
}

fn default_min_count() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub treebank: PathBuf,
    pub checkpoint: PathBuf,
    pub vocab: PathBuf,
    #[serde(default)]
    pub external: Option<PathBuf>,
    /// JSON report destination; stdout always receives it.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileSection {
    pub checkpoint: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    /// Hand-specified scores instead of a trained model.
    pub score_table: Option<PathBuf>,
    /// Plain text (one sentence per line) or a CoNLL file.
    pub text: Option<PathBuf>,
    pub alignment: Option<PathBuf>,
    pub external: Option<PathBuf>,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressorInput {
    pub name: String,
    pub path: PathBuf,
}

/// Stimulus and BOLD inputs for fitting GLMs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitInputs {
    pub bold: Vec<PathBuf>,
    pub alignment: Option<PathBuf>,
    pub f0: Option<PathBuf>,
    pub rms: Option<PathBuf>,
    pub frequencies: Option<PathBuf>,
    pub hrf: HrfSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressSection {
    #[serde(default)]
    pub bold: Vec<PathBuf>,
    #[serde(default)]
    pub alignment: Option<PathBuf>,
    #[serde(default)]
    pub f0: Option<PathBuf>,
    #[serde(default)]
    pub rms: Option<PathBuf>,
    #[serde(default)]
    pub frequencies: Option<PathBuf>,
    #[serde(default)]
    pub hrf: HrfSpec,
    /// Compared last against first.
    #[serde(default)]
    pub regressors: Vec<RegressorInput>,
    pub out_dir: PathBuf,
    #[serde(default = "default_p")]
    pub p_thresh: f64,
    #[serde(default = "default_min_cluster")]
    pub min_cluster: usize,
}

impl RegressSection {
    pub fn inputs(&self) -> FitInputs {
        FitInputs {
            bold: self.bold.clone(),
            alignment: self.alignment.clone(),
            f0: self.f0.clone(),
            rms: self.rms.clone(),
            frequencies: self.frequencies.clone(),
            hrf: self.hrf,
        }
    }
}

fn default_p() -> f64 {
    0.001
}

fn default_min_cluster() -> usize {
    15
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectSection {
    /// Explicit checkpoint files, or every `epoch_*.ckpt` in `checkpoint_dir`.
    #[serde(default)]
    pub checkpoints: Vec<PathBuf>,
    #[serde(default)]
    pub checkpoint_dir: Option<PathBuf>,
    pub vocab: PathBuf,
    #[serde(default)]
    pub dev: Option<PathBuf>,
    #[serde(default = "default_criterion")]
    pub criterion: SelectionCriterion,
    /// Surprisal level used for the r² fit; defaults to the largest k.
    #[serde(default)]
    pub k: Option<usize>,
    /// Story text parsed by each checkpoint for the r² fit.
    #[serde(default)]
    pub text: Option<PathBuf>,
    #[serde(default)]
    pub fit: Option<FitInputs>,
    pub out_dir: PathBuf,
}

fn default_criterion() -> SelectionCriterion {
    SelectionCriterion::DevAccuracy
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub out_dir: PathBuf,
    /// `seed` here is ignored in favour of the run seed.
    #[serde(default)]
    pub experiment: ExperimentConfig,
}

/// Applies a dotted `key=value` override to a TOML document. Values are
/// parsed as TOML and fall back to plain strings.
pub fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not KEY=VALUE")))?;
    let value = parse_value(raw.trim());
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override key `{key}` is malformed")));
    }
    let mut table = doc;
    for p in &parts[..parts.len() - 1] {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{key}`: `{p}` is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

impl RunConfig {
    /// Reads `path` (if any), applies overrides, and resolves relative paths
    /// against the config file's directory.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut doc = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    Error::Config(format!("cannot read config {}: {e}", p.display()))
                })?;
                text.parse::<toml::Table>()
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let mut cfg: RunConfig = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let base = path
            .and_then(Path::parent)
            .map(Path::to_path_buf)
            .unwrap_or_default();
        cfg.resolve(&base);
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() && !base.as_os_str().is_empty() {
                *p = base.join(&*p);
            }
        };
        let fix_opt = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                fix(p);
            }
        };
        let fix_fit = |f: &mut FitInputs| {
            f.bold.iter_mut().for_each(fix);
            for p in [&mut f.alignment, &mut f.f0, &mut f.rms, &mut f.frequencies] {
                fix_opt(p);
            }
        };
        if let Some(t) = &mut self.train {
            fix(&mut t.train);
            fix(&mut t.out_dir);
            fix_opt(&mut t.dev);
            fix_opt(&mut t.external_train);
            fix_opt(&mut t.external_dev);
        }
        if let Some(e) = &mut self.eval {
            fix(&mut e.treebank);
            fix(&mut e.checkpoint);
            fix(&mut e.vocab);
            fix_opt(&mut e.external);
            fix_opt(&mut e.output);
        }
        if let Some(p) = &mut self.profile {
            for o in [
                &mut p.checkpoint,
                &mut p.vocab,
                &mut p.score_table,
                &mut p.text,
                &mut p.alignment,
                &mut p.external,
            ] {
                fix_opt(o);
            }
            fix(&mut p.out_dir);
        }
        if let Some(r) = &mut self.regress {
            r.bold.iter_mut().for_each(fix);
            for p in [&mut r.alignment, &mut r.f0, &mut r.rms, &mut r.frequencies] {
                fix_opt(p);
            }
            r.regressors.iter_mut().for_each(|x| fix(&mut x.path));
            fix(&mut r.out_dir);
        }
        if let Some(s) = &mut self.select {
            s.checkpoints.iter_mut().for_each(fix);
            fix_opt(&mut s.checkpoint_dir);
            fix(&mut s.vocab);
            fix_opt(&mut s.dev);
            fix_opt(&mut s.text);
            if let Some(f) = &mut s.fit {
                fix_fit(f);
            }
            fix(&mut s.out_dir);
        }
        if let Some(s) = &mut self.synth {
            fix(&mut s.out_dir);
        }
    }

    pub fn search_options(&self) -> SearchOptions {
        SearchOptions {
            cap: (self.cap > 0).then_some(self.cap),
            labels: self.labels,
            rank: self.rank,
        }
    }

    /// Checks settings shared by all subcommands.
    pub fn validate_common(&self) -> Result<()> {
        if self.k_list.is_empty() || self.k_list.contains(&0) {
            return Err(Error::Config("k_list must hold positive values".into()));
        }
        if !self.k_list.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config(format!(
                "k_list {:?} must be sorted ascending without repeats",
                self.k_list
            )));
        }
        Ok(())
    }

    pub fn section<'a, T>(&self, s: &'a Option<T>, name: &str) -> Result<&'a T> {
        s.as_ref()
            .ok_or_else(|| Error::Config(format!("config has no [{name}] section")))
    }
}

/// Fails unless `p` exists.
pub fn require(p: &Path, what: &str) -> Result<()> {
    if !p.exists() {
        return Err(Error::Validation(format!("{what} {} does not exist", p.display())));
    }
    Ok(())
}

pub fn require_opt(p: &Option<PathBuf>, what: &str) -> Result<()> {
    p.as_deref().map_or(Ok(()), |p| require(p, what))
}

pub fn conll_format(p: &Path) -> ConllFormat {
    match p.extension().and_then(|e| e.to_str()) {
        Some("conll") | Some("conllx") => ConllFormat::Conllx,
        _ => ConllFormat::Conllu,
    }
}

impl TrainSection {
    pub fn validate(&self) -> Result<()> {
        require(&self.train, "training treebank")?;
        require_opt(&self.dev, "dev treebank")?;
        require_opt(&self.external_train, "external training encodings")?;
        require_opt(&self.external_dev, "external dev encodings")?;
        if self.encoder.kind == EncoderKind::External && self.external_train.is_none() {
            return Err(Error::Config(
                "external encoder needs `external_train` encodings".into(),
            ));
        }
        if self.dev.is_some() && self.external_train.is_some() && self.external_dev.is_none() {
            return Err(Error::Config(
                "external encodings for the dev set (`external_dev`) are required".into(),
            ));
        }
        self.schedule.validate()
    }
}

impl FitInputs {
    pub fn validate(&self) -> Result<()> {
        if self.bold.is_empty() {
            return Err(Error::Config("no BOLD panels listed".into()));
        }
        for b in &self.bold {
            require(b, "BOLD panel")?;
        }
        require_opt(&self.alignment, "alignment")?;
        require_opt(&self.f0, "f0 series")?;
        require_opt(&self.rms, "RMS series")?;
        require_opt(&self.frequencies, "frequency table")?;
        if self.frequencies.is_some() && self.alignment.is_none() {
            return Err(Error::Config("word frequencies need an alignment".into()));
        }
        self.hrf.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_and_paths() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(
            &p,
            "seed = 3\n[train]\ntrain = \"t.conllu\"\nout_dir = \"out\"\n[train.schedule]\nepochs = 4\n",
        )
        .unwrap();
        let cfg = RunConfig::load(
            Some(&p),
            &["train.schedule.epochs=2".into(), "k_list=[1,3]".into(), "labels=off".into()],
        )
        .unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.k_list, vec![1, 3]);
        assert_eq!(cfg.labels, LabelMode::Off);
        let t = cfg.train.unwrap();
        assert_eq!(t.schedule.epochs, 2);
        assert_eq!(t.schedule.lr0, TrainConfig::default().lr0);
        assert_eq!(t.train, dir.path().join("t.conllu"));
        assert!(t.validate().is_err());
    }

    #[test]
    fn bad_configs() {
        assert!(RunConfig::load(None, &["nonsense".into()]).is_err());
        assert!(RunConfig::load(None, &["unknown_key=1".into()]).is_err());
        let c = RunConfig::load(None, &["k_list=[5,1]".into()]).unwrap();
        assert!(c.validate_common().is_err());
        let c = RunConfig::load(None, &["k_list=[1,1]".into()]).unwrap();
        assert!(c.validate_common().is_err());
        assert!(RunConfig::load(None, &[]).unwrap().validate_common().is_ok());
    }

    #[test]
    fn unbounded_cap() {
        let c = RunConfig::load(None, &["cap=0".into()]).unwrap();
        assert_eq!(c.search_options().cap, None);
    }
}
