use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::hrf::{hrf_kernel, HrfSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesKind {
    Impulse,
    /// Uniformly sampled signal with the given period in seconds.
    Sampled { period: f64 },
}

/// Time-stamped regressor values, in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub kind: SeriesKind,
}

impl EventSeries {
    pub fn impulses(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let s = EventSeries {
            times,
            values,
            kind: SeriesKind::Impulse,
        };
        s.validate()?;
        Ok(s)
    }

    /// Unit impulse at every time point.
    pub fn unit_impulses(times: Vec<f64>) -> Result<Self> {
        let values = vec![1.0; times.len()];
        Self::impulses(times, values)
    }

    /// Samples starting at `start` every `period` seconds.
    pub fn sampled(start: f64, period: f64, values: Vec<f64>) -> Result<Self> {
        let times = (0..values.len()).map(|i| start + i as f64 * period).collect();
        let s = EventSeries {
            times,
            values,
            kind: SeriesKind::Sampled { period },
        };
        s.validate()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.values.len() {
            return Err(Error::Validation(format!(
                "event series has {} times but {} values",
                self.times.len(),
                self.values.len()
            )));
        }
        if self.times.iter().chain(&self.values).any(|v| !v.is_finite()) {
            return Err(Error::Validation("event series contains non-finite entries".into()));
        }
        if let Some(i) = self.times.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::Validation(format!(
                "event times decrease at index {}",
                i + 1
            )));
        }
        if let SeriesKind::Sampled { period } = self.kind {
            if !(period > 0.0) {
                return Err(Error::Validation("sample period must be positive".into()));
            }
            let start = self.times.first().copied().unwrap_or(0.0);
            for (i, &t) in self.times.iter().enumerate() {
                if (t - start - i as f64 * period).abs() > 1e-6 * period.max(1.0) {
                    return Err(Error::Validation(format!(
                        "sampled series is not uniform at index {i}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Convolves `events` with the HRF on a grid of `tr / oversampling` seconds
/// and samples the result at scan onsets `s * tr` for `s < n_scans`.
///
/// Impulses are rounded to the nearest grid point and contribute
/// `amplitude * kernel`. Sampled series are resampled to the grid
/// (bin-averaged when finer than the grid, held otherwise) and integrated,
/// so each grid point contributes `value * dt * kernel`.
pub fn convolve_and_sample(
    events: &EventSeries,
    spec: &HrfSpec,
    tr: f64,
    n_scans: usize,
) -> Result<Vec<f64>> {
    events.validate()?;
    if !(tr > 0.0) {
        return Err(Error::Config("TR must be positive".into()));
    }
    if events.is_empty() {
        log::warn!("empty event series; regressor is all zeros");
        return Ok(vec![0.0; n_scans]);
    }
    let os = spec.oversampling;
    let dt = tr / os as f64;
    let kernel = hrf_kernel(spec, dt)?;
    let n_grid = n_scans * os;
    let grid = match events.kind {
        SeriesKind::Impulse => impulse_grid(events, dt, n_grid),
        SeriesKind::Sampled { period } => sampled_grid(events, period, dt, n_grid),
    };
    let mut out = vec![0.0; n_scans];
    for (s, o) in out.iter_mut().enumerate() {
        let g = s * os;
        let mut acc = 0.0;
        for (k, &h) in kernel.iter().enumerate().take(g + 1) {
            acc += h * grid[g - k];
        }
        *o = acc;
    }
    Ok(out)
}

fn impulse_grid(events: &EventSeries, dt: f64, n_grid: usize) -> Vec<f64> {
    let mut grid = vec![0.0; n_grid];
    for (&t, &v) in events.times.iter().zip(&events.values) {
        if t < 0.0 {
            log::warn!("event at {t} s precedes the first scan; dropped");
            continue;
        }
        let i = (t / dt).round() as usize;
        if i < n_grid {
            grid[i] += v;
        }
    }
    grid
}

fn sampled_grid(events: &EventSeries, period: f64, dt: f64, n_grid: usize) -> Vec<f64> {
    let start = events.times[0];
    let mut grid = vec![0.0; n_grid];
    if period < dt {
        let mut counts = vec![0usize; n_grid];
        for (&t, &v) in events.times.iter().zip(&events.values) {
            let i = (t / dt).floor();
            if i >= 0.0 && (i as usize) < n_grid {
                grid[i as usize] += v;
                counts[i as usize] += 1;
            }
        }
        for (g, c) in grid.iter_mut().zip(counts) {
            if c > 0 {
                *g /= c as f64;
            }
        }
    } else {
        let last = events.times[events.len() - 1] + period;
        for (i, g) in grid.iter_mut().enumerate() {
            let t = i as f64 * dt;
            if t < start || t >= last {
                continue;
            }
            let j = (((t - start) / period).floor() as usize).min(events.len() - 1);
            *g = events.values[j];
        }
    }
    for g in &mut grid {
        *g *= dt;
    }
    grid
}

pub const INTERCEPT: &str = "intercept";

/// Named regressors sampled at scan times, with an intercept column first.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    n_scans: usize,
}

impl DesignMatrix {
    pub fn new(n_scans: usize) -> Self {
        DesignMatrix {
            names: vec![INTERCEPT.to_string()],
            columns: vec![vec![1.0; n_scans]],
            n_scans,
        }
    }

    pub fn add_column(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        if values.len() != self.n_scans {
            return Err(Error::Validation(format!(
                "column '{name}' has {} rows, design has {}",
                values.len(),
                self.n_scans
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("column '{name}' has non-finite entries")));
        }
        if self.names.iter().any(|n| n == name) {
            return Err(Error::Validation(format!("duplicate column name '{name}'")));
        }
        self.names.push(name.to_string());
        self.columns.push(values);
        Ok(())
    }

    pub fn with_column(&self, name: &str, values: Vec<f64>) -> Result<Self> {
        let mut d = self.clone();
        d.add_column(name, values)?;
        Ok(d)
    }

    /// Convolves and appends a regressor.
    pub fn add_events(
        &mut self,
        name: &str,
        events: &EventSeries,
        spec: &HrfSpec,
        tr: f64,
    ) -> Result<()> {
        let col = convolve_and_sample(events, spec, tr, self.n_scans)?;
        self.add_column(name, col)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
    }

    pub fn n_scans(&self) -> usize {
        self.n_scans
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    /// Scans by columns.
    pub fn to_array(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.n_scans, self.columns.len()), |(t, j)| self.columns[j][t])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> HrfSpec {
        HrfSpec::default()
    }

    #[test]
    fn unit_impulse_reproduces_kernel() {
        let e = EventSeries::unit_impulses(vec![0.0]).unwrap();
        let col = convolve_and_sample(&e, &spec(), 2.0, 20).unwrap();
        let k = hrf_kernel(&spec(), 2.0 / 16.0).unwrap();
        for (s, &c) in col.iter().enumerate() {
            let expect = k.get(s * 16).copied().unwrap_or(0.0);
            assert!((c - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn superposition_and_scaling() {
        let a = EventSeries::impulses(vec![1.0, 7.3], vec![0.5, 2.0]).unwrap();
        let b = EventSeries::impulses(vec![3.25, 40.0], vec![-1.0, 3.0]).unwrap();
        let both = EventSeries::impulses(vec![1.0, 3.25, 7.3, 40.0], vec![0.5, -1.0, 2.0, 3.0])
            .unwrap();
        let ca = convolve_and_sample(&a, &spec(), 2.0, 40).unwrap();
        let cb = convolve_and_sample(&b, &spec(), 2.0, 40).unwrap();
        let cab = convolve_and_sample(&both, &spec(), 2.0, 40).unwrap();
        for i in 0..40 {
            assert!((ca[i] + cb[i] - cab[i]).abs() < 1e-9);
        }
        let scaled = EventSeries::impulses(vec![1.0, 7.3], vec![1.5, 6.0]).unwrap();
        let cs = convolve_and_sample(&scaled, &spec(), 2.0, 40).unwrap();
        for i in 0..40 {
            assert!((3.0 * ca[i] - cs[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn sampled_constant_matches_kernel_integral() {
        let e = EventSeries::sampled(0.0, 0.01, vec![1.0; 8000]).unwrap();
        let col = convolve_and_sample(&e, &spec(), 2.0, 40).unwrap();
        let dt = 2.0 / 16.0;
        let area: f64 = hrf_kernel(&spec(), dt).unwrap().iter().sum::<f64>() * dt;
        assert!((col[39] - area).abs() < 1e-9, "{} vs {area}", col[39]);
        let coarse = EventSeries::sampled(0.0, 1.0, vec![1.0; 80]).unwrap();
        let col2 = convolve_and_sample(&coarse, &spec(), 2.0, 40).unwrap();
        assert!((col2[39] - area).abs() < 1e-9);
    }

    #[test]
    fn empty_series_gives_zeros() {
        let e = EventSeries::unit_impulses(vec![]).unwrap();
        assert_eq!(convolve_and_sample(&e, &spec(), 2.0, 5).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn malformed_series_rejected() {
        assert!(EventSeries::impulses(vec![2.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(EventSeries::impulses(vec![1.0], vec![]).is_err());
        let mut s = EventSeries::sampled(0.0, 1.0, vec![1.0; 3]).unwrap();
        s.times[2] = 2.5;
        assert!(s.validate().is_err());
    }

    #[test]
    fn design_columns() {
        let mut d = DesignMatrix::new(3);
        d.add_column("a", vec![1.0, 2.0, 3.0]).unwrap();
        assert!(d.add_column("a", vec![0.0; 3]).is_err());
        assert!(d.add_column("b", vec![0.0; 2]).is_err());
        assert!(d.add_column("c", vec![f64::NAN; 3]).is_err());
        let x = d.to_array();
        assert_eq!(x.shape(), &[3, 2]);
        assert_eq!(x[[2, 0]], 1.0);
        assert_eq!(x[[2, 1]], 3.0);
        assert_eq!(d.names(), &["intercept", "a"]);
    }

    proptest::proptest! {
        #[test]
        fn convolution_is_linear(
            mut times in proptest::collection::vec(0.0f64..100.0, 1..12),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
            seed in 0u64..1000,
        ) {
            times.sort_by(f64::total_cmp);
            let n = times.len();
            let x: Vec<f64> = (0..n).map(|i| ((i as u64 * 31 + seed) % 17) as f64 / 4.0).collect();
            let y: Vec<f64> = (0..n).map(|i| ((i as u64 * 7 + seed) % 13) as f64 - 6.0).collect();
            let mix: Vec<f64> = x.iter().zip(&y).map(|(x, y)| a * x + b * y).collect();
            let conv = |v: Vec<f64>| {
                convolve_and_sample(&EventSeries::impulses(times.clone(), v).unwrap(), &spec(), 2.0, 70).unwrap()
            };
            let (cx, cy, cm) = (conv(x), conv(y), conv(mix));
            for s in 0..70 {
                proptest::prop_assert!((cm[s] - a * cx[s] - b * cy[s]).abs() < 1e-9);
            }
        }
    }
}
