use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, Gamma};

use crate::error::{Error, Result};

/// Double-gamma hemodynamic response with the SPM canonical defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HrfSpec {
    pub peak_delay: f64,
    pub undershoot_delay: f64,
    pub peak_dispersion: f64,
    pub undershoot_dispersion: f64,
    pub undershoot_ratio: f64,
    pub kernel_length: f64,
    /// Grid points per TR used for convolution.
    pub oversampling: usize,
}

impl Default for HrfSpec {
    fn default() -> Self {
        HrfSpec {
            peak_delay: 6.0,
            undershoot_delay: 16.0,
            peak_dispersion: 1.0,
            undershoot_dispersion: 1.0,
            undershoot_ratio: 1.0 / 6.0,
            kernel_length: 32.0,
            oversampling: 16,
        }
    }
}

impl HrfSpec {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            self.peak_delay,
            self.undershoot_delay,
            self.peak_dispersion,
            self.undershoot_dispersion,
            self.kernel_length,
        ];
        if pos.iter().any(|&v| !(v > 0.0)) || self.oversampling == 0 {
            return Err(Error::Config("HRF parameters must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.undershoot_ratio) {
            return Err(Error::Config("HRF undershoot ratio must be in [0, 1)".into()));
        }
        Ok(())
    }
}

fn gamma_pdf(t: f64, delay: f64, dispersion: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    Gamma::new(delay / dispersion, 1.0 / dispersion)
        .expect("validated shape and rate")
        .pdf(t)
}

/// Unnormalized double-gamma value at `t` seconds.
pub fn hrf_value(spec: &HrfSpec, t: f64) -> f64 {
    gamma_pdf(t, spec.peak_delay, spec.peak_dispersion)
        - spec.undershoot_ratio * gamma_pdf(t, spec.undershoot_delay, spec.undershoot_dispersion)
}

/// Kernel sampled at `0, dt, 2dt, ...` up to `kernel_length`, scaled to a
/// maximum of 1.
pub fn hrf_kernel(spec: &HrfSpec, dt: f64) -> Result<Vec<f64>> {
    spec.validate()?;
    if !(dt > 0.0) {
        return Err(Error::Config("HRF sampling step must be positive".into()));
    }
    let n = (spec.kernel_length / dt).floor() as usize + 1;
    let mut k: Vec<f64> = (0..n).map(|i| hrf_value(spec, i as f64 * dt)).collect();
    let peak = k.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for v in &mut k {
        *v /= peak;
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_shape() {
        let spec = HrfSpec::default();
        let k = hrf_kernel(&spec, 0.1).unwrap();
        assert_eq!(k[0], 0.0);
        let argmax = k
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        // the peak of gamma(6, 1) minus a small undershoot lies just below 5 s
        assert!((argmax as f64 * 0.1 - 5.0).abs() <= 0.1 + 1e-12, "{argmax}");
        assert_eq!(k[argmax], 1.0);
        // the two gammas cross just after 12 s
        for i in 125..=250 {
            assert!(k[i] < 0.0, "t = {}", i as f64 * 0.1);
        }
        assert!(hrf_value(&spec, 12.0) > 0.0);
        assert!(hrf_value(&spec, 12.1) < 0.0);
        assert_eq!(k.len(), 321);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let bad = HrfSpec {
            undershoot_ratio: 1.5,
            ..HrfSpec::default()
        };
        assert!(hrf_kernel(&bad, 0.1).is_err());
        assert!(hrf_kernel(&HrfSpec::default(), 0.0).is_err());
    }
}
