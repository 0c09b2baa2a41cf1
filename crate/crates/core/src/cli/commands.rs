use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::Serialize;
use serde_json::json;

use super::config::{conll_format, require, require_opt, FitInputs, ProfileSection, RunConfig};
use crate::error::{Error, Result};
use crate::neuro::{
    control_design, event_column, r2_increase, run_regression, BoldPanel, ControlInputs,
    DesignMatrix,
};
use crate::scoring::{load_checkpoint, ExternalEncodings, ModelConfig, ParserModel, TableScorer};
use crate::search::{derivation_steps, run_search, SearchRun};
use crate::surprisal::{fmt_f64, profile_sentences, read_events, SurprisalSeries};
use crate::synth::{generate_dataset, regressor_name};
use crate::trainer::{evaluate, select_checkpoint, train, write_training_log, SelectionCriterion};
use crate::transition::ActionKind;
use crate::treebank::{
    filter_projective, read_alignment, read_conll, read_feature_series, read_frequency_table,
    read_plain_text, Sentence, Vocabulary,
};

fn create_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn write_text(p: &Path, text: &str) -> Result<()> {
    std::fs::write(p, text).map_err(|e| Error::io(p, e))
}

fn read_treebank(p: &Path) -> Result<Vec<Sentence>> {
    let (s, dropped) = filter_projective(read_conll(p, conll_format(p))?);
    if dropped > 0 {
        warn!("{}: skipped {dropped} non-projective sentences", p.display());
    }
    Ok(s)
}

fn read_external(p: &Option<PathBuf>) -> Result<Option<ExternalEncodings>> {
    p.as_deref().map(ExternalEncodings::read).transpose()
}

pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let t = cfg.section(&cfg.train, "train")?;
    t.validate()?;
    let train_set = read_treebank(&t.train)?;
    let dev_set = match &t.dev {
        Some(p) => read_treebank(p)?,
        None => Vec::new(),
    };
    let ext_train = read_external(&t.external_train)?;
    let ext_dev = read_external(&t.external_dev)?;
    let vocab = Vocabulary::build(&train_set, t.min_count, cfg.lang);
    let model = ParserModel::new(ModelConfig::new(t.encoder.clone(), &vocab, &train_set), cfg.seed)?;
    let mut schedule = t.schedule.clone();
    schedule.seed = cfg.seed;
    create_dir(&t.out_dir)?;
    vocab.save(t.out_dir.join("vocab.json"))?;
    info!(
        "training on {} sentences ({} dev), {} word classes, {} labels",
        train_set.len(),
        dev_set.len(),
        vocab.size(),
        vocab.labels().len()
    );
    let out = train(
        model,
        &vocab,
        &train_set,
        &dev_set,
        (ext_train.as_ref(), ext_dev.as_ref()),
        &schedule,
        Some(&t.out_dir),
        cfg.exclude_punct,
    )?;
    write_training_log(&out.log, t.out_dir.join("training_log.csv"))?;
    println!(
        "wrote {} checkpoints and training_log.csv to {}",
        out.checkpoints.len(),
        t.out_dir.display()
    );
    Ok(())
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<()> {
    let e = cfg.section(&cfg.eval, "eval")?;
    require(&e.treebank, "treebank")?;
    require(&e.checkpoint, "checkpoint")?;
    require(&e.vocab, "vocabulary")?;
    require_opt(&e.external, "external encodings")?;
    let vocab = Vocabulary::load(&e.vocab)?;
    let model = load_checkpoint(&e.checkpoint, &vocab)?;
    let sentences = read_treebank(&e.treebank)?;
    let ext = read_external(&e.external)?;
    let report = evaluate(&model, &vocab, &sentences, ext.as_ref(), cfg.exclude_punct)?;
    let text = serde_json::to_string_pretty(&report)?;
    println!("{text}");
    if let Some(o) = &e.output {
        write_text(o, &text)?;
    }
    Ok(())
}

/// Command-line extras for `profile`.
#[derive(Debug, Clone, Default)]
pub struct ProfileFlags {
    pub score_table: Option<PathBuf>,
    pub text: Option<PathBuf>,
    pub emit_plot_data: bool,
}

fn read_text(p: &Path) -> Result<Vec<Vec<String>>> {
    let ext = p.extension().and_then(|e| e.to_str()).unwrap_or("");
    let sents = if matches!(ext, "conllu" | "conll" | "conllx") {
        read_conll(p, conll_format(p))?
    } else {
        read_plain_text(p)?
    };
    Ok(sents.into_iter().map(|s| s.tokens).collect())
}

#[derive(Serialize)]
struct TraceLine {
    sentence: usize,
    word_index: usize,
    pool_size: usize,
    top_mass: Vec<f64>,
    cap_bound: bool,
}

pub fn cmd_profile(cfg: &RunConfig, flags: &ProfileFlags) -> Result<()> {
    let p = cfg.profile.clone().unwrap_or_else(|| ProfileSection {
        out_dir: PathBuf::from("."),
        ..ProfileSection::default()
    });
    let table = flags.score_table.clone().or(p.score_table.clone());
    let text = flags.text.clone().or(p.text.clone());
    require_opt(&table, "score table")?;
    require_opt(&text, "input text")?;
    require_opt(&p.alignment, "alignment")?;
    require_opt(&p.external, "external encodings")?;
    if table.is_none() {
        let (Some(ck), Some(v)) = (&p.checkpoint, &p.vocab) else {
            return Err(Error::Config(
                "profile needs `checkpoint` and `vocab`, or a score table".into(),
            ));
        };
        require(ck, "checkpoint")?;
        require(v, "vocabulary")?;
        if text.is_none() {
            return Err(Error::Config("profile needs input `text`".into()));
        }
    }
    let opts = cfg.search_options();
    let ks = &cfg.k_list;

    let (series, runs, label_names): (SurprisalSeries, Vec<SearchRun>, Vec<String>) =
        if let Some(tp) = &table {
            let scorer = TableScorer::load(tp)?;
            let n = crate::scoring::Scorer::n_tokens(&scorer);
            let forms = match &text {
                Some(t) => {
                    let s = read_text(t)?;
                    let forms = s.into_iter().next().unwrap_or_default();
                    if forms.len() != n {
                        return Err(Error::Validation(format!(
                            "score table covers {n} tokens, text has {}",
                            forms.len()
                        )));
                    }
                    forms
                }
                None => (1..=n).map(|i| format!("w{i}")).collect(),
            };
            let run = run_search(&scorer, &opts)?;
            let series = SurprisalSeries::from_pools(forms, &run.pools, ks)?;
            let labels = (0..crate::scoring::Scorer::n_labels(&scorer))
                .map(|l| format!("l{l}"))
                .collect();
            (series, vec![run], labels)
        } else {
            let vocab = Vocabulary::load(p.vocab.as_ref().expect("checked"))?;
            let model = load_checkpoint(p.checkpoint.as_ref().expect("checked"), &vocab)?;
            let sentences = read_text(text.as_ref().expect("checked"))?;
            let ext = read_external(&p.external)?;
            let (series, runs) = profile_sentences(&model, &vocab, &sentences, ext.as_ref(), &opts, ks)?;
            (series, runs, vocab.labels().to_vec())
        };

    let series = match &p.alignment {
        Some(a) => series.align(&read_alignment(a)?)?,
        None => {
            let mut s = series;
            s.offsets = Some((1..=s.len()).map(|i| i as f64).collect());
            s
        }
    };
    create_dir(&p.out_dir)?;
    for &k in ks {
        series.emit_regressor(k, p.out_dir.join(format!("surprisal_k{k}.csv")))?;
    }
    series.write_multi_k(p.out_dir.join("surprisal_multi_k.csv"))?;
    if flags.emit_plot_data {
        write_plot_data(&series, &p.out_dir.join("plot_data.csv"))?;
        let mut trace = String::new();
        for (i, r) in runs.iter().enumerate() {
            for t in r.trace(ks) {
                let line = TraceLine {
                    sentence: i,
                    word_index: t.word_index,
                    pool_size: t.pool_size,
                    top_mass: t.top_mass,
                    cap_bound: t.cap_bound,
                };
                trace.push_str(&serde_json::to_string(&line)?);
                trace.push('\n');
            }
        }
        write_text(&p.out_dir.join("trace.jsonl"), &trace)?;
        write_text(
            &p.out_dir.join("derivations.jsonl"),
            &derivations(cfg, &table, &p, &runs, &label_names, text.as_deref())?,
        )?;
    }
    println!(
        "profiled {} words at k = {:?} into {}",
        series.len(),
        ks,
        p.out_dir.display()
    );
    Ok(())
}

fn write_plot_data(series: &SurprisalSeries, path: &Path) -> Result<()> {
    let mut out = String::from("index,token,offset");
    for s in &series.series {
        let _ = write!(out, ",syn_k{}", s.k);
    }
    for s in &series.series {
        let _ = write!(out, ",full_k{0},lex_k{0}", s.k);
    }
    out.push('\n');
    let offs = series.offsets.clone().unwrap_or_default();
    for i in 0..series.len() {
        let tok = series.forms[i].replace('"', "\"\"");
        let off = offs.get(i).copied().unwrap_or(f64::NAN);
        let _ = write!(out, "{},\"{}\",{}", i + 1, tok, fmt_f64(off));
        for s in &series.series {
            let _ = write!(out, ",{}", fmt_f64(s.syn[i]));
        }
        for s in &series.series {
            let _ = write!(out, ",{},{}", fmt_f64(s.full[i]), fmt_f64(s.lex[i]));
        }
        out.push('\n');
    }
    write_text(path, &out)
}

/// Best derivation of every sentence, one step per line.
fn derivations(
    cfg: &RunConfig,
    table: &Option<PathBuf>,
    p: &ProfileSection,
    runs: &[SearchRun],
    labels: &[String],
    text: Option<&Path>,
) -> Result<String> {
    let mut out = String::new();
    let mut emit = |i: usize, steps: Vec<crate::search::DerivationStep>| {
        for s in steps {
            let (action, label) = match s.action.kind {
                ActionKind::Shift => ("SH", None),
                ActionKind::LeftArc => ("LA", labels.get(s.action.label as usize).cloned()),
                ActionKind::RightArc => ("RA", labels.get(s.action.label as usize).cloned()),
            };
            let line = json!({
                "sentence": i,
                "action": action,
                "label": label,
                "logp": s.logp_syn + s.logp_word,
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
    };
    if let Some(tp) = table {
        let scorer = TableScorer::load(tp)?;
        if let Some(run) = runs.first().filter(|r| !r.completed.is_empty()) {
            emit(0, derivation_steps(&scorer, &run.best().history, cfg.labels)?);
        }
    } else {
        let vocab = Vocabulary::load(p.vocab.as_ref().expect("checked"))?;
        let model = load_checkpoint(p.checkpoint.as_ref().expect("checked"), &vocab)?;
        let sentences = read_text(text.expect("checked"))?;
        let ext = read_external(&p.external)?;
        for (i, (toks, run)) in sentences.iter().zip(runs).enumerate() {
            if run.completed.is_empty() {
                continue;
            }
            let e = ext.as_ref().map(|x| x.get(i).cloned()).transpose()?;
            let prepared = model.prepare(toks, &vocab, e)?;
            let scorer = model.scorer(&prepared);
            emit(i, derivation_steps(&scorer, &run.best().history, cfg.labels)?);
        }
    }
    Ok(out)
}

/// Baseline design from the stimulus files in `f`.
fn load_controls(f: &FitInputs, tr: f64, n_scans: usize) -> Result<DesignMatrix> {
    let alignment = f.alignment.as_deref().map(read_alignment).transpose()?;
    let f0 = f.f0.as_deref().map(read_feature_series).transpose()?;
    let rms = f.rms.as_deref().map(read_feature_series).transpose()?;
    let freq = f.frequencies.as_deref().map(read_frequency_table).transpose()?;
    control_design(
        &ControlInputs {
            alignment: alignment.as_ref(),
            f0: f0.as_ref(),
            rms: rms.as_ref(),
            frequencies: freq.as_ref(),
        },
        &f.hrf,
        tr,
        n_scans,
    )
}

fn load_panels(f: &FitInputs) -> Result<Vec<BoldPanel>> {
    let panels = f
        .bold
        .iter()
        .map(|p| BoldPanel::read(p))
        .collect::<Result<Vec<_>>>()?;
    crate::neuro::check_panels(&panels, panels[0].n_scans())?;
    Ok(panels)
}

pub fn cmd_regress(cfg: &RunConfig) -> Result<()> {
    let r = cfg.section(&cfg.regress, "regress")?;
    let inputs = r.inputs();
    inputs.validate()?;
    for x in &r.regressors {
        require(&x.path, "regressor")?;
    }
    if !(r.p_thresh > 0.0 && r.p_thresh < 1.0) {
        return Err(Error::Config("p_thresh must lie in (0, 1)".into()));
    }
    let panels = load_panels(&inputs)?;
    let (tr, n_scans) = (panels[0].tr, panels[0].n_scans());
    let controls = load_controls(&inputs, tr, n_scans)?;
    let mut regs = Vec::new();
    for x in &r.regressors {
        regs.push((x.name.clone(), event_column(&read_events(&x.path)?, &inputs.hrf, tr, n_scans)?));
    }
    let out = run_regression(&panels, &controls, &regs, r.p_thresh, r.min_cluster)?;
    create_dir(&r.out_dir)?;
    let grid = out.grid;
    for (s, b) in out.baseline.iter().enumerate() {
        BoldPanel::map(grid, b)?.write(&r.out_dir.join(format!("baseline_r2_sub{s:02}.bold")))?;
    }
    for (name, maps) in out.names.iter().zip(&out.increases) {
        for (s, m) in maps.iter().enumerate() {
            BoldPanel::map(grid, m)?.write(&r.out_dir.join(format!("increase_{name}_sub{s:02}.bold")))?;
        }
    }
    if let Some(t) = &out.comparison {
        BoldPanel::map(grid, &t.t)?.write(&r.out_dir.join("comparison_t.bold"))?;
        BoldPanel::map(grid, &t.z)?.write(&r.out_dir.join("comparison_z.bold"))?;
    }
    out.clusters.write(&r.out_dir.join("clusters.csv"))?;
    let summary = json!({
        "regressors": out.names,
        "mean_increase": out.mean_increase(),
        "n_subjects": panels.len(),
        "n_voxels": grid.n_voxels(),
        "n_masked": out.comparison.as_ref().map(|t| t.n_masked),
        "comparison": out.comparison.as_ref().map(|_| format!(
            "{} minus {}", out.names[out.names.len() - 1], out.names[0]
        )),
        "clusters": out.clusters.clusters.iter().map(|c| json!({
            "peak_mm": c.peak,
            "peak_stat": c.peak_stat,
            "size_mm3": c.size_mm3,
            "n_voxels": c.voxels.len(),
        })).collect::<Vec<_>>(),
    });
    write_text(&r.out_dir.join("summary.json"), &serde_json::to_string_pretty(&summary)?)?;
    println!(
        "{} subjects, {} regressors, {} significant clusters; results in {}",
        panels.len(),
        regs.len(),
        out.clusters.len(),
        r.out_dir.display()
    );
    Ok(())
}

fn epoch_of(p: &Path, i: usize) -> usize {
    p.file_stem()
        .and_then(|s| s.to_str())
        .and_then(|s| s.rsplit('_').next())
        .and_then(|d| d.parse().ok())
        .unwrap_or(i + 1)
}

pub fn cmd_select(cfg: &RunConfig) -> Result<()> {
    let s = cfg.section(&cfg.select, "select")?;
    let mut ckpts = s.checkpoints.clone();
    if let Some(dir) = &s.checkpoint_dir {
        require(dir, "checkpoint directory")?;
        let mut found: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension().is_some_and(|e| e == "ckpt")
                    && p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("epoch_"))
            })
            .collect();
        found.sort();
        ckpts.extend(found);
    }
    if ckpts.is_empty() {
        return Err(Error::Config("select needs `checkpoints` or `checkpoint_dir`".into()));
    }
    for c in &ckpts {
        require(c, "checkpoint")?;
    }
    require(&s.vocab, "vocabulary")?;
    require_opt(&s.dev, "dev treebank")?;
    require_opt(&s.text, "story text")?;
    if let Some(f) = &s.fit {
        f.validate()?;
    }
    let wants_fit = s.criterion == SelectionCriterion::R2Fit;
    if wants_fit && (s.fit.is_none() || s.text.is_none()) {
        return Err(Error::Config("r2_fit selection needs `text` and a [select.fit] section".into()));
    }
    if s.fit.as_ref().is_some_and(|f| f.alignment.is_none()) {
        return Err(Error::Config("r2 fit needs the story alignment".into()));
    }
    if s.criterion == SelectionCriterion::DevAccuracy && s.dev.is_none() {
        return Err(Error::Config("dev_accuracy selection needs a `dev` treebank".into()));
    }
    let k = s.k.unwrap_or(*cfg.k_list.last().expect("validated"));

    let vocab = Vocabulary::load(&s.vocab)?;
    let dev = s.dev.as_deref().map(read_treebank).transpose()?;
    let mut dev_rows = Vec::new();
    let dev_choice = match &dev {
        Some(d) => {
            let (best, las) = select_checkpoint(&ckpts, &vocab, |m| {
                let rep = evaluate(m, &vocab, d, None, cfg.exclude_punct)?;
                dev_rows.push((rep.las, rep.uas));
                Ok(rep.las)
            })?;
            debug_assert_eq!(las.len(), dev_rows.len());
            Some(best)
        }
        None => None,
    };
    let mut fit_rows = Vec::new();
    let fit_choice = match (&s.fit, &s.text) {
        (Some(f), Some(text)) => {
            let panels = load_panels(f)?;
            let (tr, n_scans) = (panels[0].tr, panels[0].n_scans());
            let controls = load_controls(f, tr, n_scans)?;
            let alignment = read_alignment(f.alignment.as_ref().expect("checked"))?;
            let story = read_text(text)?;
            let opts = cfg.search_options();
            let (best, scores) = select_checkpoint(&ckpts, &vocab, |m| {
                let (series, _) = profile_sentences(m, &vocab, &story, None, &opts, &[k])?;
                let col = event_column(&series.align(&alignment)?.regressor(k)?, &f.hrf, tr, n_scans)?;
                let mut total = 0.0;
                let mut n = 0usize;
                for p in &panels {
                    let inc = r2_increase(&controls, &regressor_name(k), &col, p.data.view(), &p.sections)?;
                    total += inc.sum();
                    n += inc.len();
                }
                Ok(total / n as f64)
            })?;
            fit_rows = scores;
            Some(best)
        }
        _ => None,
    };
    let chosen = match s.criterion {
        SelectionCriterion::DevAccuracy => dev_choice,
        SelectionCriterion::R2Fit => fit_choice,
    }
    .expect("criterion inputs checked");

    create_dir(&s.out_dir)?;
    let mut csv = String::from("epoch,checkpoint,dev_las,dev_uas,mean_r2_increase\n");
    let mut rows = Vec::new();
    for (i, c) in ckpts.iter().enumerate() {
        let (las, uas) = dev_rows.get(i).copied().map_or((None, None), |(a, b)| (Some(a), Some(b)));
        let r2 = fit_rows.get(i).copied();
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let _ = writeln!(csv, "{},{},{},{},{}", epoch_of(c, i), c.display(), opt(las), opt(uas), opt(r2));
        rows.push(json!({
            "epoch": epoch_of(c, i),
            "checkpoint": c,
            "dev_las": las,
            "dev_uas": uas,
            "mean_r2_increase": r2,
        }));
    }
    write_text(&s.out_dir.join("select_report.csv"), &csv)?;
    let report = json!({
        "criterion": s.criterion,
        "k": k,
        "chosen_epoch": epoch_of(&ckpts[chosen], chosen),
        "chosen_checkpoint": ckpts[chosen],
        "dev_accuracy_choice": dev_choice.map(|i| epoch_of(&ckpts[i], i)),
        "r2_fit_choice": fit_choice.map(|i| epoch_of(&ckpts[i], i)),
        "rows": rows,
    });
    write_text(&s.out_dir.join("select_report.json"), &serde_json::to_string_pretty(&report)?)?;
    let show = |c: Option<usize>| c.map_or("n/a".to_string(), |i| epoch_of(&ckpts[i], i).to_string());
    println!("dev accuracy choice: epoch {}", show(dev_choice));
    println!("r2 fit choice:       epoch {}", show(fit_choice));
    if let (Some(a), Some(b)) = (dev_choice, fit_choice) {
        if a != b {
            println!("the criteria disagree: the best parser is not the best predictor of the BOLD data");
        }
    }
    println!("selected: {}", ckpts[chosen].display());
    Ok(())
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<()> {
    let s = cfg.section(&cfg.synth, "synth")?;
    let mut exp = s.experiment.clone();
    exp.seed = cfg.seed;
    exp.ks = cfg.k_list.clone();
    exp.validate()?;
    let data = generate_dataset(&exp)?;
    data.write(&s.out_dir)?;
    let mut toml = String::new();
    let _ = writeln!(toml, "seed = {}\nk_list = {:?}\n\n[regress]", cfg.seed, exp.ks);
    let bold: Vec<String> = (0..exp.n_subjects).map(|i| format!("\"subject_{i:02}.bold\"")).collect();
    let _ = writeln!(toml, "bold = [{}]", bold.join(", "));
    let _ = writeln!(
        toml,
        "alignment = \"alignment.csv\"\nf0 = \"f0.csv\"\nrms = \"rms.csv\"\nfrequencies = \"frequencies.csv\"\nout_dir = \"results\"\np_thresh = {:?}\nmin_cluster = {}",
        exp.p_thresh, exp.min_cluster
    );
    for &k in &exp.ks {
        let name = regressor_name(k);
        let _ = writeln!(toml, "\n[[regress.regressors]]\nname = \"{name}\"\npath = \"{name}.csv\"");
    }
    write_text(&s.out_dir.join("regress.toml"), &toml)?;
    write_text(
        &s.out_dir.join("experiment.json"),
        &serde_json::to_string_pretty(&exp)?,
    )?;
    println!(
        "synthetic dataset: {} subjects, {} words, {} planted voxels in {}",
        exp.n_subjects,
        data.alignment.len(),
        data.planted.len(),
        s.out_dir.display()
    );
    Ok(())
}
