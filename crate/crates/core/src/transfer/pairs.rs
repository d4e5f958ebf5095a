//! Paired ideal/imperfect records and the `DOAP` file format.

use rayon::prelude::*;
use std::path::Path;

use crate::array_sim::dataset::{put_header, put_label, put_scm, Reader};
use crate::array_sim::{
    sample_covariance, simulate_for_label, CMatrix, Dataset, DatasetHeader, DoaLabel, ImperfectionSpec, Sample,
    SignalScenario,
};
use crate::rng;
use crate::{DoaError, Result};

pub const PAIRS_MAGIC: &[u8; 4] = b"DOAP";

#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    pub label: DoaLabel,
    /// Measurement from the imperfect array.
    pub target_scm: CMatrix,
    /// Ideal-array SCM for the same DOAs, reproducible from `gen_seed`.
    pub ideal_scm: CMatrix,
    pub gen_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedDataset {
    pub header: DatasetHeader,
    pub pairs: Vec<PairedSample>,
}

impl PairedDataset {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// The imperfect measurements with their labels.
    pub fn targets(&self) -> Dataset {
        Dataset {
            header: self.header,
            samples: self.pairs.iter().map(|p| Sample { label: p.label.clone(), scm: p.target_scm.clone() }).collect(),
        }
    }
}

/// Pairs every target record with an ideal (ρ = 0) SCM simulated for the
/// same DOAs at the scenario's SNR and snapshot count. Record `i` uses
/// `gen_seed = mix(seed, i)`.
pub fn make_pairs(target: &Dataset, scenario: &SignalScenario, seed: u64) -> Result<PairedDataset> {
    scenario.validate()?;
    let h = &target.header;
    let g = &scenario.geometry;
    if h.kind != g.kind() || h.elements != g.elements() || h.sources != scenario.sources || h.label_dims != g.label_dims()
    {
        return Err(DoaError::Dimension("target dataset does not match the pairing scenario".into()));
    }
    let ideal = ImperfectionSpec::ideal(g);
    let pairs = target
        .samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            if !scenario.fov.contains(&s.label) {
                return Err(DoaError::InvalidLabel(format!("record {i} lies outside the field of view: {:?}", s.label)));
            }
            let gen_seed = rng::mix(seed, i as u64);
            let y = simulate_for_label(scenario, &ideal, &s.label, gen_seed)?;
            Ok(PairedSample {
                label: s.label.clone(),
                target_scm: s.scm.clone(),
                ideal_scm: sample_covariance(&y),
                gen_seed,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PairedDataset { header: target.header, pairs })
}

pub fn encode_pairs(ds: &PairedDataset) -> Vec<u8> {
    let mut out = Vec::new();
    put_header(&mut out, PAIRS_MAGIC, &ds.header, ds.len());
    for p in &ds.pairs {
        put_label(&mut out, &p.label);
        put_scm(&mut out, &p.target_scm);
        put_scm(&mut out, &p.ideal_scm);
        out.extend_from_slice(&p.gen_seed.to_le_bytes());
    }
    out
}

pub fn decode_pairs(buf: &[u8]) -> Result<PairedDataset> {
    let mut r = Reader::new(buf);
    let (header, count) = r.header(PAIRS_MAGIC)?;
    let mut pairs = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let label = r.label(&header)?;
        let target_scm = r.scm(header.elements)?;
        let ideal_scm = r.scm(header.elements)?;
        let gen_seed = r.u64()?;
        pairs.push(PairedSample { label, target_scm, ideal_scm, gen_seed });
    }
    r.finish()?;
    Ok(PairedDataset { header, pairs })
}

pub fn write_pairs(path: impl AsRef<Path>, ds: &PairedDataset) -> Result<()> {
    std::fs::write(path, encode_pairs(ds))?;
    Ok(())
}

pub fn read_pairs(path: impl AsRef<Path>) -> Result<PairedDataset> {
    decode_pairs(&std::fs::read(path)?)
}
