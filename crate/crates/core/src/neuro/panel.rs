//! Binary BOLD panels, one file per subject. All fields little-endian:
//!
//! ```text
//! magic        8 bytes  "BOLDPNL1"
//! dims         3 x u32  nx, ny, nz
//! voxel_size   3 x f32  mm
//! origin       3 x f32  mm
//! tr           f32      seconds
//! n_voxels     u32      must equal nx * ny * nz
//! n_scans      u32
//! n_sections   u32
//! sections     n_sections x u32 scan counts, summing to n_scans
//! data         n_voxels x n_scans f32, voxel-major
//! ```
//!
//! Statistical maps use the same layout with one scan and one section.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;

use super::stats::Grid;
use crate::error::{Error, Result};

pub const BOLD_MAGIC: &[u8; 8] = b"BOLDPNL1";

#[derive(Debug, Clone, PartialEq)]
pub struct BoldPanel {
    pub grid: Grid,
    pub tr: f64,
    pub sections: Vec<usize>,
    /// Scans by voxels.
    pub data: Array2<f64>,
}

impl BoldPanel {
    pub fn new(grid: Grid, tr: f64, sections: Vec<usize>, data: Array2<f64>) -> Result<Self> {
        let p = BoldPanel {
            grid,
            tr,
            sections,
            data,
        };
        p.validate()?;
        Ok(p)
    }

    /// A single-scan panel holding a voxel map.
    pub fn map(grid: Grid, values: &[f64]) -> Result<Self> {
        let data = Array2::from_shape_vec((1, values.len()), values.to_vec())
            .map_err(|e| Error::Validation(e.to_string()))?;
        Self::new(grid, 0.0, vec![1], data)
    }

    pub fn n_scans(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_voxels(&self) -> usize {
        self.data.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.n_voxels() != self.n_voxels() {
            return Err(Error::Validation(format!(
                "grid {:?} holds {} voxels, data has {}",
                self.grid.dims,
                self.grid.n_voxels(),
                self.n_voxels()
            )));
        }
        if self.sections.iter().sum::<usize>() != self.n_scans() || self.sections.contains(&0) {
            return Err(Error::Validation(format!(
                "sections {:?} do not partition {} scans",
                self.sections,
                self.n_scans()
            )));
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        self.validate()?;
        let e = |e: std::io::Error| Error::Format(e.to_string());
        w.write_all(BOLD_MAGIC).map_err(e)?;
        for d in self.grid.dims {
            w.write_u32::<LE>(to_u32(d)?).map_err(e)?;
        }
        for v in self.grid.voxel_size.iter().chain(&self.grid.origin) {
            w.write_f32::<LE>(*v as f32).map_err(e)?;
        }
        w.write_f32::<LE>(self.tr as f32).map_err(e)?;
        w.write_u32::<LE>(to_u32(self.n_voxels())?).map_err(e)?;
        w.write_u32::<LE>(to_u32(self.n_scans())?).map_err(e)?;
        w.write_u32::<LE>(to_u32(self.sections.len())?).map_err(e)?;
        for &s in &self.sections {
            w.write_u32::<LE>(to_u32(s)?).map_err(e)?;
        }
        for v in 0..self.n_voxels() {
            for t in 0..self.n_scans() {
                w.write_f32::<LE>(self.data[[t, v]] as f32).map_err(e)?;
            }
        }
        w.flush().map_err(e)
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let e = |e: std::io::Error| Error::Format(format!("truncated BOLD panel: {e}"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(e)?;
        if &magic != BOLD_MAGIC {
            return Err(Error::Format("not a BOLD panel (bad magic)".into()));
        }
        let mut dims = [0usize; 3];
        for d in &mut dims {
            *d = r.read_u32::<LE>().map_err(e)? as usize;
        }
        let mut geo = [0f64; 6];
        for g in &mut geo {
            *g = r.read_f32::<LE>().map_err(e)? as f64;
        }
        let tr = r.read_f32::<LE>().map_err(e)? as f64;
        let n_vox = r.read_u32::<LE>().map_err(e)? as usize;
        let n_scans = r.read_u32::<LE>().map_err(e)? as usize;
        let n_sec = r.read_u32::<LE>().map_err(e)? as usize;
        let grid = Grid {
            dims,
            voxel_size: [geo[0], geo[1], geo[2]],
            origin: [geo[3], geo[4], geo[5]],
        };
        if grid.n_voxels() != n_vox {
            return Err(Error::Format(format!(
                "header voxel count {n_vox} disagrees with grid {dims:?}"
            )));
        }
        let mut sections = Vec::with_capacity(n_sec.min(1 << 16));
        for _ in 0..n_sec {
            sections.push(r.read_u32::<LE>().map_err(e)? as usize);
        }
        let mut data = Array2::zeros((n_scans, n_vox));
        let mut buf = vec![0f32; n_scans];
        for v in 0..n_vox {
            r.read_f32_into::<LE>(&mut buf).map_err(e)?;
            for (t, &x) in buf.iter().enumerate() {
                data[[t, v]] = x as f64;
            }
        }
        let p = BoldPanel {
            grid,
            tr,
            sections,
            data,
        };
        p.validate().map_err(|err| Error::Format(err.to_string()))?;
        Ok(p)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

fn to_u32(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Validation(format!("{v} does not fit the panel header")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> BoldPanel {
        let grid = Grid {
            dims: [2, 3, 1],
            voxel_size: [2.0, 2.0, 2.5],
            origin: [-1.0, 0.0, 4.0],
        };
        let data = Array2::from_shape_fn((5, 6), |(t, v)| t as f64 * 0.5 - v as f64);
        BoldPanel::new(grid, 2.0, vec![2, 3], data).unwrap()
    }

    #[test]
    fn round_trip() {
        let p = sample();
        let mut buf = Vec::new();
        p.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 12 + 24 + 4 + 12 + 8 + 4 * 30);
        assert_eq!(BoldPanel::read_from(buf.as_slice()).unwrap(), p);
    }

    #[test]
    fn voxel_major_layout() {
        let mut buf = Vec::new();
        sample().write_to(&mut buf).unwrap();
        let data = &buf[68..];
        let first = f32::from_le_bytes(data[4..8].try_into().unwrap());
        assert_eq!(first, 0.5);
        let second_voxel = f32::from_le_bytes(data[20..24].try_into().unwrap());
        assert_eq!(second_voxel, -1.0);
    }

    #[test]
    fn corrupt_inputs() {
        let mut buf = Vec::new();
        sample().write_to(&mut buf).unwrap();
        assert!(matches!(BoldPanel::read_from(&buf[..buf.len() - 1]), Err(Error::Format(_))));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(BoldPanel::read_from(bad.as_slice()), Err(Error::Format(_))));
        let mut sec = buf.clone();
        sec[60] = 9;
        assert!(BoldPanel::read_from(sec.as_slice()).is_err());
        assert!(BoldPanel::new(sample().grid, 2.0, vec![4], sample().data).is_err());
    }
}
