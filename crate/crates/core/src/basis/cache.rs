//! On-disk cache of coupling matrices, keyed by cutoff, block and quadrature version.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::quadrature::QUADRATURE_VERSION;
use super::{BasisSet, CouplingMatrices, ParityBlock, RealMode};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Entry {
    format_version: u32,
    quadrature_version: u32,
    cutoff: f64,
    parity: ParityBlock,
    modes: Vec<RealMode>,
    dim: usize,
    /// Column-major entries of f1..f6.
    f: Vec<Vec<f64>>,
}

pub fn cache_path(dir: &Path, cutoff: f64, parity: ParityBlock) -> PathBuf {
    dir.join(format!(
        "coupling-k{cutoff}-{parity}-q{QUADRATURE_VERSION}-v{FORMAT_VERSION}.json"
    ))
}

pub fn store(dir: &Path, basis: &BasisSet, mats: &CouplingMatrices) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let entry = Entry {
        format_version: FORMAT_VERSION,
        quadrature_version: QUADRATURE_VERSION,
        cutoff: basis.cutoff,
        parity: mats.parity,
        modes: basis.block(mats.parity).modes.clone(),
        dim: mats.dim(),
        f: mats.f.iter().map(|m| m.as_slice().to_vec()).collect(),
    };
    let path = cache_path(dir, basis.cutoff, mats.parity);
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, serde_json::to_vec(&entry)?)?;
    fs::rename(&tmp, &path)?;
    Ok(path)
}

/// `Ok(None)` when nothing is cached; an error when a cached file does not match.
pub fn load(dir: &Path, basis: &BasisSet, parity: ParityBlock) -> Result<Option<CouplingMatrices>> {
    let path = cache_path(dir, basis.cutoff, parity);
    if !path.exists() {
        return Ok(None);
    }
    let entry: Entry = serde_json::from_slice(&fs::read(&path)?)?;
    if entry.format_version != FORMAT_VERSION || entry.quadrature_version != QUADRATURE_VERSION {
        return Err(Error::Cache(format!(
            "{} has format {} / quadrature {}",
            path.display(),
            entry.format_version,
            entry.quadrature_version
        )));
    }
    let modes = &basis.block(parity).modes;
    let same_modes = entry.modes.len() == modes.len()
        && entry
            .modes
            .iter()
            .zip(modes)
            .all(|(a, b)| a.m == b.m && a.n == b.n && (a.k - b.k).abs() < 1e-12);
    if entry.cutoff != basis.cutoff || entry.parity != parity || !same_modes || entry.f.len() != 6 {
        return Err(Error::Cache(format!(
            "{} does not match the basis",
            path.display()
        )));
    }
    let dim = entry.dim;
    let mut mats = entry.f.into_iter().map(|v| DMatrix::from_vec(dim, dim, v));
    let f = std::array::from_fn(|_| mats.next().expect("six matrices"));
    Ok(Some(CouplingMatrices { parity, f }))
}

/// Loads from `dir` when possible, otherwise builds and stores.
pub fn load_or_build(dir: Option<&Path>, basis: &BasisSet, parity: ParityBlock) -> Result<CouplingMatrices> {
    let Some(dir) = dir else {
        return CouplingMatrices::build(basis, parity);
    };
    if let Some(mats) = load(dir, basis, parity)? {
        log::debug!("loaded {parity} couplings from cache");
        return Ok(mats);
    }
    let mats = CouplingMatrices::build(basis, parity)?;
    store(dir, basis, &mats)?;
    Ok(mats)
}
