use ndarray::Array1;

use super::design::{DesignMatrix, EventSeries};
use super::glm::{cv_r2, r2_increase};
use super::hrf::HrfSpec;
use super::panel::BoldPanel;
use super::stats::{cluster_threshold, paired_t_map, ClusterTable, Grid, TMap};
use crate::error::{Error, Result};
use crate::treebank::{FeatureSeries, FrequencyTable, StimulusAlignment};

/// Stimulus-side inputs for the baseline model. Missing series are left out
/// of the design.
#[derive(Debug, Clone, Default)]
pub struct ControlInputs<'a> {
    pub alignment: Option<&'a StimulusAlignment>,
    pub f0: Option<&'a FeatureSeries>,
    pub rms: Option<&'a FeatureSeries>,
    pub frequencies: Option<&'a FrequencyTable>,
}

/// Intercept plus word rate (unit impulses at word offsets), f0, word
/// frequency (−log10 per-million at word offsets) and RMS intensity.
pub fn control_design(
    inputs: &ControlInputs<'_>,
    spec: &HrfSpec,
    tr: f64,
    n_scans: usize,
) -> Result<DesignMatrix> {
    let mut d = DesignMatrix::new(n_scans);
    if let Some(a) = inputs.alignment {
        let offsets = a.offsets();
        d.add_events("word_rate", &EventSeries::unit_impulses(offsets.clone())?, spec, tr)?;
        if let Some(f) = inputs.frequencies {
            let amps = a
                .entries
                .iter()
                .map(|w| -f.get(&w.word).log10())
                .collect::<Vec<_>>();
            if amps.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(
                    "word frequencies must be positive".into(),
                ));
            }
            d.add_events("word_freq", &EventSeries::impulses(offsets, amps)?, spec, tr)?;
        }
    }
    for (name, s) in [("f0", inputs.f0), ("rms", inputs.rms)] {
        if let Some(s) = s {
            let e = EventSeries::sampled(s.start, s.period, s.values.clone())?;
            d.add_events(name, &e, spec, tr)?;
        }
    }
    Ok(d)
}

/// Convolved column for `offset,value` events.
pub fn event_column(rows: &[(f64, f64)], spec: &HrfSpec, tr: f64, n_scans: usize) -> Result<Vec<f64>> {
    let (t, v): (Vec<f64>, Vec<f64>) = rows.iter().copied().unzip();
    super::design::convolve_and_sample(&EventSeries::impulses(t, v)?, spec, tr, n_scans)
}

/// Per-regressor r² increase maps for every subject, plus the paired
/// comparison of the last regressor against the first.
#[derive(Debug, Clone)]
pub struct RegressionOutput {
    pub names: Vec<String>,
    pub grid: Grid,
    /// `increases[r][s]` is subject `s`'s map for regressor `r`.
    pub increases: Vec<Vec<Vec<f64>>>,
    /// Baseline cross-validated r² per subject.
    pub baseline: Vec<Vec<f64>>,
    pub comparison: Option<TMap>,
    pub clusters: ClusterTable,
}

impl RegressionOutput {
    /// Mean increase over subjects and voxels for each regressor.
    pub fn mean_increase(&self) -> Vec<f64> {
        self.increases
            .iter()
            .map(|subj| {
                let n: usize = subj.iter().map(Vec::len).sum();
                subj.iter().flatten().sum::<f64>() / n.max(1) as f64
            })
            .collect()
    }
}

/// Checks that all subjects share grid, TR and sections with the design.
pub fn check_panels(panels: &[BoldPanel], n_scans: usize) -> Result<()> {
    let first = panels
        .first()
        .ok_or_else(|| Error::Validation("no BOLD panels".into()))?;
    for (i, p) in panels.iter().enumerate() {
        if p.grid != first.grid {
            return Err(Error::Validation(format!(
                "subject {i} grid {:?} differs from subject 0 grid {:?}",
                p.grid.dims, first.grid.dims
            )));
        }
        if p.sections != first.sections || p.tr != first.tr {
            return Err(Error::Validation(format!(
                "subject {i} sections or TR differ from subject 0"
            )));
        }
        if p.n_scans() != n_scans {
            return Err(Error::Validation(format!(
                "subject {i} has {} scans, design has {n_scans}",
                p.n_scans()
            )));
        }
    }
    Ok(())
}

/// Fits `controls` plus one regressor at a time for every subject, then
/// compares the last regressor with the first voxel-wise (positive z favours
/// the last) and thresholds the comparison into clusters.
pub fn run_regression(
    panels: &[BoldPanel],
    controls: &DesignMatrix,
    regressors: &[(String, Vec<f64>)],
    p_thresh: f64,
    min_cluster: usize,
) -> Result<RegressionOutput> {
    check_panels(panels, controls.n_scans())?;
    let grid = panels[0].grid;
    let mut baseline = Vec::with_capacity(panels.len());
    let mut increases = vec![Vec::with_capacity(panels.len()); regressors.len()];
    for p in panels {
        let y = p.data.view();
        baseline.push(cv_r2(controls, y, &p.sections)?.to_vec());
        for (r, (name, col)) in regressors.iter().enumerate() {
            let inc: Array1<f64> = r2_increase(controls, name, col, y, &p.sections)?;
            increases[r].push(inc.to_vec());
        }
    }
    let (comparison, clusters) = if regressors.len() >= 2 && panels.len() >= 2 {
        let t = paired_t_map(&increases[0], &increases[regressors.len() - 1])?;
        if t.n_masked > 0 {
            log::warn!("{} voxels masked for zero variance", t.n_masked);
        }
        let c = cluster_threshold(&t.z, &grid, p_thresh, min_cluster)?;
        (Some(t), c)
    } else {
        (None, ClusterTable::default())
    };
    Ok(RegressionOutput {
        names: regressors.iter().map(|r| r.0.clone()).collect(),
        grid,
        increases,
        baseline,
        comparison,
        clusters,
    })
}
