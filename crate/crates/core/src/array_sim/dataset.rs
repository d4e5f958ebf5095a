//! `DOA1` dataset files: a fixed header followed by labeled SCM records.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use std::io::{Read, Write};
use std::path::Path;

use super::{sample_covariance, simulate_snapshots, ArrayKind, CMatrix, DoaLabel, ImperfectionSpec, SignalScenario};
use crate::rng;
use crate::{DoaError, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"DOA1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetHeader {
    pub kind: ArrayKind,
    pub elements: usize,
    pub sources: usize,
    pub label_dims: usize,
    pub rho: f64,
}

/// One labeled sample covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub label: DoaLabel,
    pub scm: CMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// First `n` samples as a new dataset.
    pub fn take(&self, n: usize) -> Dataset {
        Dataset { header: self.header, samples: self.samples[..n.min(self.len())].to_vec() }
    }
}

/// Record `index` of a dataset seeded with `seed`.
pub fn generate_record(scenario: &SignalScenario, imp: &ImperfectionSpec, seed: u64, index: u64) -> Result<Sample> {
    let (y, label) = simulate_snapshots(scenario, imp, rng::mix(seed, index))?;
    Ok(Sample { label, scm: sample_covariance(&y) })
}

/// Generates `count` records in parallel; record order is the index order.
pub fn generate_dataset(scenario: &SignalScenario, imp: &ImperfectionSpec, count: usize, seed: u64) -> Result<Dataset> {
    scenario.validate()?;
    let samples = (0..count as u64)
        .into_par_iter()
        .map(|i| generate_record(scenario, imp, seed, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        header: DatasetHeader {
            kind: scenario.geometry.kind(),
            elements: scenario.geometry.elements(),
            sources: scenario.sources,
            label_dims: scenario.geometry.label_dims(),
            rho: imp.effective_rho(),
        },
        samples,
    })
}

pub(crate) fn put_header(out: &mut Vec<u8>, magic: &[u8; 4], header: &DatasetHeader, count: usize) {
    out.extend_from_slice(magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.elements as u32).to_le_bytes());
    out.extend_from_slice(&(header.sources as u32).to_le_bytes());
    out.push(header.kind.code());
    out.push(header.label_dims as u8);
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&header.rho.to_le_bytes());
    out.extend_from_slice(&(count as u64).to_le_bytes());
}

pub(crate) fn put_label(out: &mut Vec<u8>, label: &DoaLabel) {
    for v in label.flat() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub(crate) fn put_scm(out: &mut Vec<u8>, scm: &CMatrix) {
    let m = scm.nrows();
    for i in 0..m {
        for j in 0..m {
            let c = scm[(i, j)];
            out.extend_from_slice(&c.re.to_le_bytes());
            out.extend_from_slice(&c.im.to_le_bytes());
        }
    }
}

pub fn encode_dataset(ds: &Dataset) -> Vec<u8> {
    let m = ds.header.elements;
    let per_record = 8 * (ds.header.sources * ds.header.label_dims + 2 * m * m);
    let mut out = Vec::with_capacity(32 + per_record * ds.len());
    put_header(&mut out, DATASET_MAGIC, &ds.header, ds.len());
    for s in &ds.samples {
        put_label(&mut out, &s.label);
        put_scm(&mut out, &s.scm);
    }
    out
}

/// Little-endian cursor over an in-memory file.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub(crate) fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(DoaError::Format("unexpected end of file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.bytes(2)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(DoaError::Format(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }

    pub(crate) fn header(&mut self, magic: &[u8; 4]) -> Result<(DatasetHeader, usize)> {
        let got = self.bytes(4)?;
        if got != magic {
            return Err(DoaError::Format(format!("bad magic {got:?}")));
        }
        let version = self.u32()?;
        if version != FORMAT_VERSION {
            return Err(DoaError::Format(format!("unsupported version {version}")));
        }
        let elements = self.u32()? as usize;
        let sources = self.u32()? as usize;
        let kind = ArrayKind::from_code(self.u8()?)?;
        let label_dims = self.u8()? as usize;
        if !(label_dims == 1 || label_dims == 2) {
            return Err(DoaError::Format(format!("label_dims must be 1 or 2, got {label_dims}")));
        }
        let _reserved = self.u16()?;
        let rho = self.f64()?;
        let count = self.u64()? as usize;
        Ok((DatasetHeader { kind, elements, sources, label_dims, rho }, count))
    }

    pub(crate) fn label(&mut self, h: &DatasetHeader) -> Result<DoaLabel> {
        let thetas = (0..h.sources).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        let phis = if h.label_dims == 2 {
            Some((0..h.sources).map(|_| self.f64()).collect::<Result<Vec<_>>>()?)
        } else {
            None
        };
        Ok(DoaLabel { thetas, phis })
    }

    pub(crate) fn scm(&mut self, m: usize) -> Result<CMatrix> {
        let mut data = Vec::with_capacity(m * m);
        for _ in 0..m * m {
            let re = self.f64()?;
            let im = self.f64()?;
            data.push(Complex64::new(re, im));
        }
        Ok(DMatrix::from_row_slice(m, m, &data))
    }
}

pub fn decode_dataset(buf: &[u8]) -> Result<Dataset> {
    let mut r = Reader::new(buf);
    let (header, count) = r.header(DATASET_MAGIC)?;
    let mut samples = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let label = r.label(&header)?;
        let scm = r.scm(header.elements)?;
        samples.push(Sample { label, scm });
    }
    r.finish()?;
    Ok(Dataset { header, samples })
}

pub fn write_dataset(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode_dataset(ds))?;
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    decode_dataset(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array_sim::{build_imperfections, ArrayGeometry, DoaSpec, Fov, ImperfectionFlags, DEFAULT_GAMMA};

    fn scenario() -> SignalScenario {
        SignalScenario {
            geometry: ArrayGeometry::ula(8, 0.5).unwrap(),
            sources: 3,
            snr_db: 0.0,
            snapshots: 10,
            doa: DoaSpec::default(),
            fov: Fov::ula(),
        }
    }

    #[test]
    fn empty_dataset_is_valid() {
        let s = scenario();
        let ds = generate_dataset(&s, &ImperfectionSpec::ideal(&s.geometry), 0, 1).unwrap();
        let bytes = encode_dataset(&ds);
        assert_eq!(bytes.len(), 36);
        assert_eq!(&bytes[..4], b"DOA1");
        assert_eq!(decode_dataset(&bytes).unwrap(), ds);
    }

    #[test]
    fn header_layout() {
        let s = scenario();
        let ds = generate_dataset(&s, &ImperfectionSpec::ideal(&s.geometry), 2, 1).unwrap();
        let b = encode_dataset(&ds);
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 8);
        assert_eq!(u32::from_le_bytes(b[12..16].try_into().unwrap()), 3);
        assert_eq!(b[16], 0);
        assert_eq!(b[17], 1);
        assert_eq!(u64::from_le_bytes(b[28..36].try_into().unwrap()), 2);
        assert_eq!(b.len(), 36 + 2 * 8 * (3 + 2 * 64));
        let theta0 = f64::from_le_bytes(b[36..44].try_into().unwrap());
        assert_eq!(theta0, ds.samples[0].label.thetas[0]);
    }

    #[test]
    fn zero_rho_equals_disabled() {
        let s = scenario();
        let off = ImperfectionSpec::ideal(&s.geometry);
        let zero = build_imperfections(0.0, ImperfectionFlags::ALL, &s.geometry, DEFAULT_GAMMA, false).unwrap();
        let a = encode_dataset(&generate_dataset(&s, &off, 20, 42).unwrap());
        let b = encode_dataset(&generate_dataset(&s, &zero, 20, 42).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn truncated_and_corrupt_files() {
        let s = scenario();
        let ds = generate_dataset(&s, &ImperfectionSpec::ideal(&s.geometry), 3, 1).unwrap();
        let mut b = encode_dataset(&ds);
        assert!(decode_dataset(&b[..b.len() - 1]).is_err());
        b[0] = b'X';
        assert!(matches!(decode_dataset(&b), Err(DoaError::Format(_))));
    }

    #[test]
    fn uca_roundtrip_through_file() {
        let s = SignalScenario {
            geometry: ArrayGeometry::uca(12, 1.0).unwrap(),
            sources: 5,
            snr_db: 5.0,
            snapshots: 10,
            doa: DoaSpec::default(),
            fov: Fov::uca(),
        };
        let imp = build_imperfections(0.5, ImperfectionFlags::ALL, &s.geometry, DEFAULT_GAMMA, false).unwrap();
        let ds = generate_dataset(&s, &imp, 4, 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("uca.doa");
        write_dataset(&p, &ds).unwrap();
        let back = read_dataset(&p).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.header.label_dims, 2);
        assert_eq!(back.header.rho, 0.5);
    }
}
