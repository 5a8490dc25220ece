//! Region-feature archive: a 24-byte header (`b"CAVPFEAT"`, then `u32`
//! version, k, D and count) followed by `count` blocks of `k × D`
//! little-endian `f32`.

use std::fs;
use std::path::Path;

use crate::cavp::RegionFeatureSet;
use crate::{Error, Result, Scalar};

pub const FEATURE_MAGIC: &[u8; 8] = b"CAVPFEAT";
pub const FEATURE_VERSION: u32 = 1;
pub const FEATURE_HEADER_LEN: usize = 24;

/// In-memory feature archive; rows are regions, blocks of `k` rows are images.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFile {
    k: usize,
    dim: usize,
    data: Vec<f32>,
}

impl FeatureFile {
    pub fn new(k: usize, dim: usize) -> Result<Self> {
        if k == 0 || dim == 0 {
            return Err(Error::Data("feature file needs k ≥ 1 and D ≥ 1".into()));
        }
        Ok(Self { k, dim, data: Vec::new() })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.data.len() / (self.k * self.dim)
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.dim
    }

    /// Appends one `k × D` block; returns its index.
    pub fn push(&mut self, block: &[Vec<f32>]) -> Result<usize> {
        if block.len() != self.k || block.iter().any(|r| r.len() != self.dim) {
            return Err(Error::Data(format!("feature block must be {} × {}", self.k, self.dim)));
        }
        for r in block {
            self.data.extend_from_slice(r);
        }
        Ok(self.count() - 1)
    }

    /// Region rows `start..end` as a feature set.
    pub fn rows_as_set<T: Scalar>(&self, start: usize, end: usize) -> Result<RegionFeatureSet<T>> {
        if start >= end || end > self.rows() {
            return Err(Error::Data(format!(
                "row range {start}..{end} invalid for a file of {} rows",
                self.rows()
            )));
        }
        let regions = (start..end)
            .map(|r| self.data[r * self.dim..(r + 1) * self.dim].iter().map(|&x| T::of(x as f64)).collect())
            .collect();
        RegionFeatureSet::new(regions)
    }

    /// Block `index` as a feature set.
    pub fn block<T: Scalar>(&self, index: usize) -> Result<RegionFeatureSet<T>> {
        self.rows_as_set(index * self.k, (index + 1) * self.k)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(FEATURE_HEADER_LEN + self.data.len() * 4);
        out.extend_from_slice(FEATURE_MAGIC);
        for v in [FEATURE_VERSION, self.k as u32, self.dim as u32, self.count() as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for x in &self.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < FEATURE_HEADER_LEN {
            return Err(Error::Data(format!(
                "feature file truncated: expected at least {FEATURE_HEADER_LEN} header bytes, found {}",
                bytes.len()
            )));
        }
        if &bytes[..8] != FEATURE_MAGIC {
            return Err(Error::Data("feature file has bad magic".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().expect("4 bytes")) as usize;
        let (version, k, dim, count) = (word(0), word(1), word(2), word(3));
        if version != FEATURE_VERSION as usize {
            return Err(Error::Data(format!("unsupported feature file version {version}")));
        }
        let expected = FEATURE_HEADER_LEN + count * k * dim * 4;
        if bytes.len() != expected {
            return Err(Error::Data(format!(
                "feature file size mismatch: expected {expected} bytes, found {}",
                bytes.len()
            )));
        }
        let mut f = Self::new(k, dim)?;
        f.data = bytes[FEATURE_HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Ok(f)
    }
}

pub fn write_feature_file(path: &Path, file: &FeatureFile) -> Result<()> {
    Ok(fs::write(path, file.to_bytes())?)
}

pub fn read_feature_file(path: &Path) -> Result<FeatureFile> {
    let bytes = fs::read(path).map_err(|e| Error::Data(format!("cannot read feature file {}: {e}", path.display())))?;
    FeatureFile::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FeatureFile {
        let mut f = FeatureFile::new(2, 3).unwrap();
        f.push(&[vec![1.0, 2.0, 3.0], vec![-1.5, 0.25, 1e-7]]).unwrap();
        f.push(&[vec![0.0; 3], vec![7.0, 8.0, 9.0]]).unwrap();
        f
    }

    #[test]
    fn round_trip_is_bitwise() {
        let f = sample();
        let bytes = f.to_bytes();
        assert_eq!(bytes.len(), FEATURE_HEADER_LEN + 2 * 2 * 3 * 4);
        assert_eq!(FeatureFile::from_bytes(&bytes).unwrap(), f);
    }

    #[test]
    fn truncation_reports_sizes() {
        let bytes = sample().to_bytes();
        let err = FeatureFile::from_bytes(&bytes[..bytes.len() - 3]).unwrap_err().to_string();
        assert!(err.contains("expected 72") && err.contains("found 69"), "{err}");
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(FeatureFile::from_bytes(&bad).is_err());
    }

    #[test]
    fn block_mean() {
        let rf: RegionFeatureSet<f64> = sample().block(0).unwrap();
        assert!((rf.mean()[0] + 0.25).abs() < 1e-6);
        assert!(sample().block::<f64>(2).is_err());
    }
}
