//! Basis, operators and labels shared by every pipeline stage.

use std::path::Path;

use rayon::prelude::*;

use crate::basis::{cache, BasisSet, ParityBlock};
use crate::driving::DrivingLaw;
use crate::error::{Error, Result};
use crate::perturbation::Predictor;
use crate::propagator::ObservationGrid;
use crate::spectrum::{global_labels, Operators, SpectralPath};

pub const DEFAULT_CUTOFF: f64 = 40.0;
pub const DEFAULT_N_TAU: usize = 1024;

/// States above the strictly tracked set that are followed as a buffer.
pub const TRACK_MARGIN: usize = 8;

/// Candidates sit below `q = K_max² / 8`, a quarter of the circular-limit
/// truncation edge `K_max² / 2`.
pub fn candidate_limit(cutoff: f64) -> f64 {
    cutoff * cutoff / 8.0
}

#[derive(Clone, Debug)]
pub struct Model {
    pub basis: BasisSet,
    pub operators: Vec<Operators>,
}

impl Model {
    pub fn new(cutoff: f64, cache_dir: Option<&Path>) -> Result<Self> {
        if !(cutoff > 3.0 && cutoff.is_finite()) {
            return Err(Error::Config(format!("basis cutoff must exceed 3, got {cutoff}")));
        }
        let basis = BasisSet::new(cutoff)?;
        let operators = ParityBlock::ALL
            .par_iter()
            .map(|&p| cache::load_or_build(cache_dir, &basis, p).map(|m| Operators::from(&m)))
            .collect::<Result<_>>()?;
        Ok(Model { basis, operators })
    }

    pub fn block(&self, parity: ParityBlock) -> &Operators {
        self.operators
            .iter()
            .find(|o| o.parity == parity)
            .expect("all four blocks are built")
    }

    /// Global labels of the `block` states at the undriven axis ratio.
    pub fn global_labels(&self, law: &DrivingLaw, block: ParityBlock) -> Vec<usize> {
        global_labels(&self.operators, law.ratio0(), block)
    }

    /// Block label of the state with global label `label`.
    pub fn block_state(&self, law: &DrivingLaw, block: ParityBlock, label: usize) -> Result<usize> {
        self.global_labels(law, block)
            .iter()
            .position(|&g| g == label)
            .ok_or_else(|| Error::Config(format!("state {label} does not belong to the {block} block")))
    }

    /// How many low states of `block` lie below the candidate limit at `τ = 0`.
    pub fn candidate_count(&self, law: &DrivingLaw, block: ParityBlock) -> usize {
        let limit = candidate_limit(self.basis.cutoff);
        self.block(block)
            .mathieu(law.ratio0())
            .symmetric_eigenvalues()
            .iter()
            .filter(|&&q| q < limit)
            .count()
    }

    pub fn spectral_path(&self, law: &DrivingLaw, block: ParityBlock, n_tau: usize) -> Result<SpectralPath> {
        let strict = self.candidate_count(law, block);
        SpectralPath::compute(law, self.block(block), n_tau, strict + TRACK_MARGIN, strict)
    }

    pub fn predictor(&self, law: &DrivingLaw, block: ParityBlock, n_tau: usize) -> Result<Predictor> {
        let path = self.spectral_path(law, block, n_tau)?;
        let strict = path.strict;
        let mut labels = self.global_labels(law, block);
        labels.truncate(path.tracked());
        Ok(Predictor::new(path, self.block(block), labels, strict))
    }

    /// Observation frames for trajectories; `full` tracks the whole block.
    pub fn observation_grid(
        &self,
        law: &DrivingLaw,
        block: ParityBlock,
        samples_per_period: usize,
        full: bool,
    ) -> Result<ObservationGrid> {
        let ops = self.block(block);
        let strict = self.candidate_count(law, block);
        let tracked = if full { ops.dim() } else { strict + TRACK_MARGIN };
        let labels = self.global_labels(law, block);
        ObservationGrid::new(law, ops, &labels, samples_per_period, tracked, strict)
    }
}
