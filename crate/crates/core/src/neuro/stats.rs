use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

/// Voxel-wise paired comparison; masked voxels hold 0 in `t`, `z` and 1 in `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct TMap {
    pub t: Vec<f64>,
    pub z: Vec<f64>,
    pub p: Vec<f64>,
    pub masked: Vec<bool>,
    pub n_masked: usize,
    pub df: usize,
}

/// Paired t-test of `b - a` across subjects at each voxel.
pub fn paired_t_map(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<TMap> {
    let n = a.len();
    if n < 2 || b.len() != n {
        return Err(Error::Validation(format!(
            "paired test needs matching groups of at least 2 subjects, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let v = a[0].len();
    if a.iter().chain(b).any(|m| m.len() != v) {
        return Err(Error::Validation("subject maps differ in voxel count".into()));
    }
    let df = n - 1;
    let mut out = TMap {
        t: vec![0.0; v],
        z: vec![0.0; v],
        p: vec![1.0; v],
        masked: vec![false; v],
        n_masked: 0,
        df,
    };
    let mut d = vec![0.0; n];
    for i in 0..v {
        for s in 0..n {
            d[s] = b[s][i] - a[s][i];
        }
        let mean = d.iter().sum::<f64>() / n as f64;
        let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / df as f64;
        if !(var > 0.0) || !var.is_finite() {
            out.masked[i] = true;
            out.n_masked += 1;
            continue;
        }
        let t = mean / (var.sqrt() / (n as f64).sqrt());
        let (z, p) = t_to_z(t, df);
        out.t[i] = t;
        out.z[i] = z;
        out.p[i] = p;
    }
    Ok(out)
}

/// Normal deviate with the same tail probability as `t` on `df` degrees of
/// freedom, and the two-tailed p-value. `t_to_z(-t) == -t_to_z(t)` exactly.
pub fn t_to_z(t: f64, df: usize) -> (f64, f64) {
    let lower = StudentsT::new(0.0, 1.0, df as f64)
        .expect("positive df")
        .cdf(-t.abs());
    let z = -Normal::standard().inverse_cdf(lower);
    (if t < 0.0 { -z } else { z }, (2.0 * lower).min(1.0))
}

/// Two-tailed normal critical value for `p`.
pub fn z_threshold(p: f64) -> f64 {
    Normal::standard().inverse_cdf(1.0 - p / 2.0)
}

/// Voxel grid geometry; voxel `(x, y, z)` has index `x + nx * (y + ny * z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dims: [usize; 3],
    pub voxel_size: [f64; 3],
    pub origin: [f64; 3],
}

impl Grid {
    pub fn cubic(dims: [usize; 3], size: f64) -> Self {
        Grid {
            dims,
            voxel_size: [size; 3],
            origin: [0.0; 3],
        }
    }

    pub fn n_voxels(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn voxel_volume(&self) -> f64 {
        self.voxel_size.iter().product()
    }

    pub fn index(&self, c: [usize; 3]) -> usize {
        c[0] + self.dims[0] * (c[1] + self.dims[1] * c[2])
    }

    pub fn coords(&self, i: usize) -> [usize; 3] {
        let x = i % self.dims[0];
        let y = (i / self.dims[0]) % self.dims[1];
        let z = i / (self.dims[0] * self.dims[1]);
        [x, y, z]
    }

    pub fn mm(&self, i: usize) -> [f64; 3] {
        let c = self.coords(i);
        [0, 1, 2].map(|a| self.origin[a] + c[a] as f64 * self.voxel_size[a])
    }

    /// Face neighbours.
    pub fn neighbours(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let c = self.coords(i);
        (0..3).flat_map(move |axis| {
            let mut v = Vec::with_capacity(2);
            if c[axis] > 0 {
                let mut d = c;
                d[axis] -= 1;
                v.push(self.index(d));
            }
            if c[axis] + 1 < self.dims[axis] {
                let mut d = c;
                d[axis] += 1;
                v.push(self.index(d));
            }
            v
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub peak: [f64; 3],
    pub peak_index: usize,
    pub peak_stat: f64,
    pub size_mm3: f64,
    pub voxels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClusterTable {
    pub clusters: Vec<Cluster>,
}

impl ClusterTable {
    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn voxels(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.clusters.iter().flat_map(|c| c.voxels.clone()).collect();
        v.sort_unstable();
        v
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["X", "Y", "Z", "Peak Stat", "Cluster Size mm3"])?;
        for c in &self.clusters {
            out.write_record([
                format!("{}", c.peak[0]),
                format!("{}", c.peak[1]),
                format!("{}", c.peak[2]),
                format!("{:.4}", c.peak_stat),
                format!("{}", c.size_mm3),
            ])?;
        }
        out.flush().map_err(|e| Error::Format(e.to_string()))?;
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// Keeps voxels with two-tailed `p < p_thresh`, groups same-signed face
/// neighbours, and drops groups smaller than `min_size` voxels. Rows are
/// ordered by descending peak |z|.
pub fn cluster_threshold(z: &[f64], grid: &Grid, p_thresh: f64, min_size: usize) -> Result<ClusterTable> {
    if z.len() != grid.n_voxels() {
        return Err(Error::Validation(format!(
            "map has {} voxels, grid has {}",
            z.len(),
            grid.n_voxels()
        )));
    }
    let thr = z_threshold(p_thresh);
    let sign = |v: f64| -> i8 {
        if v > thr {
            1
        } else if v < -thr {
            -1
        } else {
            0
        }
    };
    let mut seen = vec![false; z.len()];
    let mut clusters = Vec::new();
    for start in 0..z.len() {
        let sg = sign(z[start]);
        if sg == 0 || seen[start] {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut voxels = Vec::new();
        while let Some(i) = queue.pop_front() {
            voxels.push(i);
            for j in grid.neighbours(i) {
                if !seen[j] && sign(z[j]) == sg {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        if voxels.len() < min_size {
            continue;
        }
        voxels.sort_unstable();
        let peak_index = *voxels
            .iter()
            .max_by(|&&a, &&b| z[a].abs().total_cmp(&z[b].abs()).then(b.cmp(&a)))
            .expect("non-empty");
        clusters.push(Cluster {
            peak: grid.mm(peak_index),
            peak_index,
            peak_stat: z[peak_index],
            size_mm3: voxels.len() as f64 * grid.voxel_volume(),
            voxels,
        });
    }
    clusters.sort_by(|a, b| {
        b.peak_stat
            .abs()
            .total_cmp(&a.peak_stat.abs())
            .then(a.peak_index.cmp(&b.peak_index))
    });
    Ok(ClusterTable { clusters })
}

/// Dice overlap of two voxel sets.
pub fn dice(a: &[usize], b: &[usize]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let sa: std::collections::BTreeSet<_> = a.iter().collect();
    let inter = b.iter().filter(|v| sa.contains(v)).count();
    2.0 * inter as f64 / (a.len() + b.len()) as f64
}
