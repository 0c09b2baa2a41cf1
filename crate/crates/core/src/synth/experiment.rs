use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::TreebankGrammar;
use crate::error::{Error, Result};
use crate::neuro::{
    control_design, dice, event_column, run_regression, BoldPanel, ControlInputs, DesignMatrix,
    Grid, HrfSpec, RegressionOutput,
};
use crate::scoring::{save_checkpoint, EncoderSpec, InputMode, ModelConfig, ParserModel};
use crate::search::{LabelMode, RankKey, SearchOptions};
use crate::surprisal::{is_punctuation, profile_sentences, SurprisalSeries};
use crate::trainer::{train, TrainConfig};
use crate::treebank::{
    filter_projective, write_conll, AlignedWord, ConllFormat, FeatureSeries, FrequencyTable, Lang,
    Sentence, StimulusAlignment, Vocabulary,
};

/// Settings for a planted-effect experiment: a story is parsed by a briefly
/// trained model, and BOLD data are simulated in which a compact region
/// responds to surprisal at the largest k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub n_subjects: usize,
    pub dims: [usize; 3],
    pub voxel_mm: f64,
    pub planted_voxels: usize,
    pub n_sections: usize,
    pub scans_per_section: usize,
    pub tr: f64,
    /// std(planted signal) / std(noise) inside the planted region.
    pub snr: f64,
    pub ks: Vec<usize>,
    pub cap: usize,
    pub train_sentences: usize,
    pub train_epochs: usize,
    pub encoder_dim: usize,
    pub emb_dim: usize,
    pub p_thresh: f64,
    pub min_cluster: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 7,
            n_subjects: 12,
            dims: [10, 10, 10],
            voxel_mm: 2.0,
            planted_voxels: 30,
            n_sections: 9,
            scans_per_section: 60,
            tr: 2.0,
            snr: 0.5,
            ks: vec![1, 5],
            cap: 200,
            train_sentences: 400,
            train_epochs: 2,
            encoder_dim: 32,
            emb_dim: 16,
            p_thresh: 0.001,
            min_cluster: 15,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let grid_n: usize = self.dims.iter().product();
        if self.n_subjects < 2 || self.n_sections < 2 || self.scans_per_section == 0 {
            return Err(Error::Config(
                "need at least 2 subjects, 2 sections and 1 scan per section".into(),
            ));
        }
        if self.planted_voxels == 0 || self.planted_voxels > grid_n {
            return Err(Error::Config(format!(
                "planted region of {} voxels does not fit a grid of {grid_n}",
                self.planted_voxels
            )));
        }
        if self.ks.is_empty() || self.ks.contains(&0) || !self.ks.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config("k list must be ascending, unique and positive".into()));
        }
        if !(self.tr > 0.0 && self.voxel_mm > 0.0 && self.snr >= 0.0) {
            return Err(Error::Config("TR, voxel size and SNR must be positive".into()));
        }
        if self.cap == 0 || self.train_sentences < 2 || self.train_epochs == 0 {
            return Err(Error::Config("cap, training sentences and epochs must be positive".into()));
        }
        Ok(())
    }

    pub fn n_scans(&self) -> usize {
        self.n_sections * self.scans_per_section
    }

    pub fn grid(&self) -> Grid {
        Grid::cubic(self.dims, self.voxel_mm)
    }

    fn search(&self) -> SearchOptions {
        SearchOptions {
            cap: Some(self.cap),
            labels: LabelMode::Off,
            rank: RankKey::Syntactic,
        }
    }
}

/// Everything the simulation produces before analysis.
pub struct SynthDataset {
    pub config: ExperimentConfig,
    pub training: Vec<Sentence>,
    pub vocab: Vocabulary,
    pub model: ParserModel,
    pub story: Vec<Sentence>,
    pub alignment: StimulusAlignment,
    pub f0: FeatureSeries,
    pub rms: FeatureSeries,
    pub frequencies: FrequencyTable,
    /// Word-aligned surprisal for every configured k.
    pub surprisal: SurprisalSeries,
    pub controls: DesignMatrix,
    /// `(name, convolved column)` per k, ascending.
    pub regressors: Vec<(String, Vec<f64>)>,
    pub panels: Vec<BoldPanel>,
    pub planted: Vec<usize>,
}

pub struct ExperimentResult {
    pub regression: RegressionOutput,
    pub significant: Vec<usize>,
    pub dice: f64,
    /// Every surviving cluster favours the largest k.
    pub all_toward_last: bool,
}

pub fn regressor_name(k: usize) -> String {
    format!("syn_k{k}")
}

/// The `n` voxels closest to the grid centre (ties by index).
pub fn compact_region(grid: &Grid, n: usize) -> Vec<usize> {
    let centre = grid.dims.map(|d| (d as f64 - 1.0) / 2.0);
    let mut idx: Vec<(f64, usize)> = (0..grid.n_voxels())
        .map(|i| {
            let c = grid.coords(i);
            let d2: f64 = (0..3).map(|a| (c[a] as f64 - centre[a]).powi(2)).sum();
            (d2, i)
        })
        .collect();
    idx.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut v: Vec<usize> = idx.into_iter().take(n).map(|x| x.1).collect();
    v.sort_unstable();
    v
}

fn per_million(corpus: &[Sentence]) -> FrequencyTable {
    let mut counts: HashMap<String, f64> = HashMap::new();
    let mut total = 0.0;
    for s in corpus {
        for t in s.tokens.iter().filter(|t| !is_punctuation(t)) {
            *counts.entry(t.to_lowercase()).or_default() += 1.0;
            total += 1.0;
        }
    }
    FrequencyTable::from_pairs(counts.into_iter().map(|(w, c)| (w, c * 1e6 / total)))
}

/// Lays the story's words end to end with short gaps and sentence pauses,
/// stopping before the scanning window runs out.
fn time_story(
    grammar: &TreebankGrammar,
    duration: f64,
    rng: &mut ChaCha8Rng,
    seed: u64,
) -> (Vec<Sentence>, StimulusAlignment) {
    let mut story = Vec::new();
    let mut entries = Vec::new();
    let mut cursor = 1.0;
    let mut batch = 0u64;
    'outer: loop {
        for s in grammar.generate(50, seed.wrapping_add(batch)) {
            let words = s.tokens.iter().filter(|t| !is_punctuation(t)).count();
            if cursor + words as f64 * 0.5 + 20.0 > duration {
                break 'outer;
            }
            for t in s.tokens.iter().filter(|t| !is_punctuation(t)) {
                let onset = cursor;
                let offset = onset + 0.2 + 0.25 * rng.random::<f64>();
                entries.push(AlignedWord {
                    word: t.clone(),
                    onset,
                    offset,
                });
                cursor = offset + 0.05 * rng.random::<f64>();
            }
            cursor += 0.3 + 0.5 * rng.random::<f64>();
            story.push(s);
        }
        batch += 1;
    }
    (story, StimulusAlignment { entries })
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Pitch and intensity tracks that are active while words are spoken.
fn acoustics(alignment: &StimulusAlignment, duration: f64, rng: &mut ChaCha8Rng) -> (FeatureSeries, FeatureSeries) {
    let voiced = |t: f64, words: &[AlignedWord], from: &mut usize| -> bool {
        while *from < words.len() && words[*from].offset < t {
            *from += 1;
        }
        *from < words.len() && words[*from].onset <= t
    };
    let mut f0 = Vec::new();
    let mut ar = 0.0;
    let mut w = 0;
    for i in 0..(duration / 0.1) as usize {
        ar = 0.9 * ar + 0.3 * normal(rng);
        f0.push(if voiced(i as f64 * 0.1, &alignment.entries, &mut w) { 120.0 + 20.0 * ar } else { 0.0 });
    }
    let mut rms = Vec::new();
    let mut w = 0;
    for i in 0..(duration / 0.01) as usize {
        let n = normal(rng).abs();
        rms.push(if voiced(i as f64 * 0.01, &alignment.entries, &mut w) { 0.5 + 0.2 * n } else { 0.02 * n });
    }
    (
        FeatureSeries {
            start: 0.0,
            period: 0.1,
            values: f0,
        },
        FeatureSeries {
            start: 0.0,
            period: 0.01,
            values: rms,
        },
    )
}

fn standardize(v: &[f64]) -> Vec<f64> {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt();
    if sd > 0.0 {
        v.iter().map(|x| (x - m) / sd).collect()
    } else {
        vec![0.0; v.len()]
    }
}

/// Runs the generative half: training, story parsing, design construction
/// and BOLD simulation.
pub fn generate_dataset(cfg: &ExperimentConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let grammar = TreebankGrammar::english_like();
    let (training, _) = filter_projective(grammar.generate(cfg.train_sentences, cfg.seed));
    let vocab = Vocabulary::build(&training, 2, Lang::English);
    let enc = EncoderSpec::internal(cfg.emb_dim, cfg.encoder_dim, InputMode::Generative);
    let model = ParserModel::new(ModelConfig::new(enc, &vocab, &training), cfg.seed)?;
    let tc = TrainConfig {
        epochs: cfg.train_epochs,
        seed: cfg.seed,
        ..TrainConfig::internal_encoder()
    };
    let model = train(model, &vocab, &training, &[], (None, None), &tc, None, true)?.model;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let duration = cfg.n_scans() as f64 * cfg.tr;
    let (story, alignment) = time_story(&grammar, duration, &mut rng, cfg.seed.wrapping_mul(31) + 1);
    let texts: Vec<Vec<String>> = story.iter().map(|s| s.tokens.clone()).collect();
    let (series, _) = profile_sentences(&model, &vocab, &texts, None, &cfg.search(), &cfg.ks)?;
    let surprisal = series.align(&alignment)?;
    let (f0, rms) = acoustics(&alignment, duration, &mut rng);
    let frequencies = per_million(&training);

    let spec = HrfSpec::default();
    let n_scans = cfg.n_scans();
    let controls = control_design(
        &ControlInputs {
            alignment: Some(&alignment),
            f0: Some(&f0),
            rms: Some(&rms),
            frequencies: Some(&frequencies),
        },
        &spec,
        cfg.tr,
        n_scans,
    )?;
    let mut regressors = Vec::new();
    for &k in &cfg.ks {
        let col = event_column(&surprisal.regressor(k)?, &spec, cfg.tr, n_scans)?;
        regressors.push((regressor_name(k), col));
    }

    let planted = compact_region(&cfg.grid(), cfg.planted_voxels);
    let panels = simulate_panels(cfg, &controls, &regressors[regressors.len() - 1].1, &planted)?;
    Ok(SynthDataset {
        config: cfg.clone(),
        training,
        vocab,
        model,
        story,
        alignment,
        f0,
        rms,
        frequencies,
        surprisal,
        controls,
        regressors,
        panels,
        planted,
    })
}

/// Simulated subjects: every voxel mixes the standardized controls with
/// random weights plus unit white noise, and voxels in `planted` add `target`
/// scaled to `snr` standard deviations.
pub fn simulate_panels(
    cfg: &ExperimentConfig,
    controls: &DesignMatrix,
    target: &[f64],
    planted: &[usize],
) -> Result<Vec<BoldPanel>> {
    cfg.validate()?;
    let grid = cfg.grid();
    let n_scans = cfg.n_scans();
    if controls.n_scans() != n_scans || target.len() != n_scans {
        return Err(Error::Validation(format!(
            "simulation needs {n_scans} scans in the design and target"
        )));
    }
    let target = standardize(target);
    let control_cols: Vec<Vec<f64>> = controls.names()[1..]
        .iter()
        .map(|n| standardize(controls.column(n).expect("named column")))
        .collect();
    let mut in_blob = vec![false; grid.n_voxels()];
    for &v in planted {
        *in_blob
            .get_mut(v)
            .ok_or_else(|| Error::Validation(format!("planted voxel {v} outside the grid")))? = true;
    }
    let sections = vec![cfg.scans_per_section; cfg.n_sections];
    let mut panels = Vec::with_capacity(cfg.n_subjects);
    for s in 0..cfg.n_subjects {
        let mut srng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1000 + s as u64));
        let mut data = ndarray::Array2::<f64>::zeros((n_scans, grid.n_voxels()));
        for (v, &blob) in in_blob.iter().enumerate() {
            let betas: Vec<f64> = control_cols.iter().map(|_| 0.5 * normal(&mut srng)).collect();
            let base = 100.0 + 5.0 * normal(&mut srng);
            for t in 0..n_scans {
                let mut y = base + normal(&mut srng);
                for (b, c) in betas.iter().zip(&control_cols) {
                    y += b * c[t];
                }
                if blob {
                    y += cfg.snr * target[t];
                }
                data[[t, v]] = y;
            }
        }
        panels.push(BoldPanel::new(grid, cfg.tr, sections.clone(), data)?);
    }
    Ok(panels)
}

/// Runs the analysis half and scores recovery of the planted region.
pub fn analyze(data: &SynthDataset) -> Result<ExperimentResult> {
    let cfg = &data.config;
    let regression = run_regression(
        &data.panels,
        &data.controls,
        &data.regressors,
        cfg.p_thresh,
        cfg.min_cluster,
    )?;
    let significant = regression.clusters.voxels();
    let all_toward_last = regression.clusters.clusters.iter().all(|c| c.peak_stat > 0.0);
    Ok(ExperimentResult {
        dice: dice(&significant, &data.planted),
        significant,
        all_toward_last,
        regression,
    })
}

impl SynthDataset {
    /// Writes the inputs a standalone regression run needs: story treebank,
    /// alignment, control series, frequency table, per-k regressors, the
    /// multi-k table, model checkpoint and vocabulary, and one BOLD panel per
    /// subject.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_conll(dir.join("story.conllu"), &self.story, ConllFormat::Conllu)?;
        write_conll(dir.join("train.conllu"), &self.training, ConllFormat::Conllu)?;
        self.alignment.write(dir.join("alignment.csv"))?;
        self.f0.write(dir.join("f0.csv"))?;
        self.rms.write(dir.join("rms.csv"))?;
        self.frequencies.write(dir.join("frequencies.csv"))?;
        for &k in &self.config.ks {
            self.surprisal
                .emit_regressor(k, dir.join(format!("{}.csv", regressor_name(k))))?;
        }
        self.surprisal.write_multi_k(dir.join("surprisal_multi_k.csv"))?;
        self.vocab.save(dir.join("vocab.json"))?;
        save_checkpoint(&self.model, &self.vocab, dir.join("model.ckpt"))?;
        for (s, p) in self.panels.iter().enumerate() {
            p.write(&dir.join(format!("subject_{s:02}.bold")))?;
        }
        let planted: String = self.planted.iter().map(|v| format!("{v}\n")).collect();
        let path = dir.join("planted_voxels.txt");
        std::fs::write(&path, planted).map_err(|e| Error::io(&path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compact_region_is_connected_and_central() {
        let g = Grid::cubic([10, 10, 10], 2.0);
        let r = compact_region(&g, 30);
        assert_eq!(r.len(), 30);
        let z: Vec<f64> = (0..1000).map(|i| if r.contains(&i) { 5.0 } else { 0.0 }).collect();
        let t = crate::neuro::cluster_threshold(&z, &g, 0.001, 1).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.clusters[0].voxels, r);
    }

    #[test]
    fn config_validation() {
        let bad = ExperimentConfig {
            ks: vec![5, 1],
            ..ExperimentConfig::default()
        };
        assert!(bad.validate().is_err());
        let big = ExperimentConfig {
            planted_voxels: 2000,
            ..ExperimentConfig::default()
        };
        assert!(big.validate().is_err());
        assert!(ExperimentConfig::default().validate().is_ok());
    }

    #[test]
    fn small_experiment_runs() {
        let cfg = ExperimentConfig {
            n_subjects: 3,
            dims: [4, 4, 4],
            planted_voxels: 8,
            n_sections: 3,
            scans_per_section: 30,
            train_sentences: 40,
            train_epochs: 1,
            encoder_dim: 8,
            emb_dim: 4,
            cap: 20,
            min_cluster: 2,
            ..ExperimentConfig::default()
        };
        let data = generate_dataset(&cfg).unwrap();
        assert_eq!(data.panels.len(), 3);
        assert_eq!(data.panels[0].data.dim(), (90, 64));
        assert_eq!(data.regressors.len(), 2);
        assert_eq!(data.surprisal.len(), data.alignment.len());
        assert!(data.alignment.entries.last().unwrap().offset < 180.0);
        let res = analyze(&data).unwrap();
        assert_eq!(res.regression.increases.len(), 2);
        assert_eq!(res.regression.increases[0].len(), 3);
    }
}
