//! Mathieu-operator spectra, adiabatic state tracking and phase integrals.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::basis::{Coupling, CouplingMatrices, ParityBlock};
use crate::driving::{geometry, Convention, DrivingLaw, GeometrySample, LawKind};
use crate::error::{Error, Result};

/// Relative eigen-residual bound `‖M v − q v‖ ≤ tol · ‖M‖`.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

/// Two overlaps closer than this make a tracking step ambiguous.
pub const AMBIGUITY_MARGIN: f64 = 0.05;

/// Extra eigenpairs kept per frame so tracked states can drift upward.
pub const TRACK_SLACK: usize = 16;

/// The four operator combinations every Hamiltonian is built from.
#[derive(Clone, Debug)]
pub struct Operators {
    pub parity: ParityBlock,
    /// `f1`, diagonal `−k²/4`.
    pub laplacian: DMatrix<f64>,
    /// `f2 = ρ²/4`.
    pub radial: DMatrix<f64>,
    /// `f3 + f5`.
    pub anisotropy: DMatrix<f64>,
    /// `f4 + f6`.
    pub quadrupole: DMatrix<f64>,
}

impl From<&CouplingMatrices> for Operators {
    fn from(m: &CouplingMatrices) -> Self {
        Operators {
            parity: m.parity,
            laplacian: m.get(Coupling::F1).clone(),
            radial: symmetrized(m.get(Coupling::F2).clone()),
            anisotropy: symmetrized(m.anisotropy()),
            quadrupole: symmetrized(m.quadrupole()),
        }
    }
}

fn symmetrized(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

impl Operators {
    pub fn dim(&self) -> usize {
        self.laplacian.nrows()
    }

    /// `M(r) = −(r + 1/r) f1 − (r − 1/r)(f3 + f5)`.
    pub fn mathieu(&self, r: f64) -> DMatrix<f64> {
        &self.laplacian * (-(r + 1.0 / r)) + &self.anisotropy * (-(r - 1.0 / r))
    }

    /// `∂M/∂r = −(1 − 1/r²) f1 − (1 + 1/r²)(f3 + f5)`.
    pub fn mathieu_dr(&self, r: f64) -> DMatrix<f64> {
        let ir2 = 1.0 / (r * r);
        &self.laplacian * (-(1.0 - ir2)) + &self.anisotropy * (-(1.0 + ir2))
    }
}

pub fn assemble_mathieu(r: f64, mats: &CouplingMatrices) -> DMatrix<f64> {
    Operators::from(mats).mathieu(r)
}

/// Ascending eigenvalues with real, sign-fixed eigenvectors as columns.
#[derive(Clone, Debug)]
pub struct Eigenpairs {
    pub q: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

/// Lowest `count` eigenpairs of a real symmetric matrix, each with its
/// largest-magnitude component positive.
pub fn eigendecompose(m: &DMatrix<f64>, count: usize) -> Result<Eigenpairs> {
    let dim = m.nrows();
    let count = count.min(dim);
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let norm = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);

    let mut q = Vec::with_capacity(count);
    let mut vectors = DMatrix::zeros(dim, count);
    for (col, &src) in order.iter().take(count).enumerate() {
        let mut v = eig.eigenvectors.column(src).into_owned();
        let lead = v.iamax();
        if v[lead] < 0.0 {
            v.neg_mut();
        }
        let value = eig.eigenvalues[src];
        let residual = (m * &v - &v * value).norm();
        if residual > RESIDUAL_TOLERANCE * norm {
            return Err(Error::EigenConvergence {
                index: col,
                residual: residual / norm,
                tolerance: RESIDUAL_TOLERANCE,
            });
        }
        q.push(value);
        vectors.set_column(col, &v);
    }
    Ok(Eigenpairs { q, vectors })
}

/// Tracked eigenpairs at one phase of driving; column `j` carries label `j`.
#[derive(Clone, Debug)]
pub struct SpectralFrame {
    pub tau: f64,
    pub r: f64,
    pub volume: f64,
    pub q: Vec<f64>,
    pub vectors: DMatrix<f64>,
    /// Position of each label in the ascending spectrum at this `tau`.
    pub rank: Vec<usize>,
}

impl SpectralFrame {
    pub fn energy(&self, label: usize) -> f64 {
        self.q[label] / self.volume
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }
}

/// An untracked frame: ascending eigenpairs at one `tau`.
#[derive(Clone, Debug)]
pub struct RawFrame {
    pub tau: f64,
    pub r: f64,
    pub volume: f64,
    pub pairs: Eigenpairs,
}

/// Follows `tracked` states from the first frame by maximal overlap.
///
/// Labels `0..strict` must be unambiguous at every step; the remaining
/// labels are a buffer and take the best free match.
pub fn track_states(raw: Vec<RawFrame>, tracked: usize, strict: usize) -> Result<Vec<SpectralFrame>> {
    let mut out: Vec<SpectralFrame> = Vec::with_capacity(raw.len());
    for frame in raw {
        let available = frame.pairs.q.len();
        let tracked = tracked.min(available);
        let Some(prev) = out.last() else {
            out.push(SpectralFrame {
                tau: frame.tau,
                r: frame.r,
                volume: frame.volume,
                q: frame.pairs.q[..tracked].to_vec(),
                vectors: frame.pairs.vectors.columns(0, tracked).into_owned(),
                rank: (0..tracked).collect(),
            });
            continue;
        };

        let overlaps = prev.vectors.transpose() * &frame.pairs.vectors;
        let mut best: Vec<(usize, usize, f64, f64)> = (0..prev.len())
            .map(|label| {
                let row = overlaps.row(label);
                let (mut top, mut first, mut second) = (0, 0.0, 0.0);
                for (c, v) in row.iter().enumerate() {
                    let v = v.abs();
                    if v > first {
                        second = first;
                        first = v;
                        top = c;
                    } else if v > second {
                        second = v;
                    }
                }
                (label, top, first, second)
            })
            .collect();
        best.sort_by(|x, y| y.2.total_cmp(&x.2));

        let mut taken = vec![false; available];
        let mut assigned = vec![usize::MAX; prev.len()];
        for &(label, top, first, second) in &best {
            let ambiguous = first - second < AMBIGUITY_MARGIN || first < 0.5;
            if label < strict && (ambiguous || taken[top]) {
                return Err(Error::AmbiguousTracking {
                    state: label,
                    from: prev.tau,
                    to: frame.tau,
                });
            }
            let pick = if !taken[top] {
                top
            } else {
                (0..available)
                    .filter(|&c| !taken[c])
                    .max_by(|&a, &b| overlaps[(label, a)].abs().total_cmp(&overlaps[(label, b)].abs()))
                    .expect("more candidates than tracked states")
            };
            taken[pick] = true;
            assigned[label] = pick;
        }

        let mut vectors = DMatrix::zeros(frame.pairs.vectors.nrows(), prev.len());
        let mut q = Vec::with_capacity(prev.len());
        for (label, &c) in assigned.iter().enumerate() {
            let mut v = frame.pairs.vectors.column(c).into_owned();
            if overlaps[(label, c)] < 0.0 {
                v.neg_mut();
            }
            vectors.set_column(label, &v);
            q.push(frame.pairs.q[c]);
        }
        out.push(SpectralFrame {
            tau: frame.tau,
            r: frame.r,
            volume: frame.volume,
            q,
            vectors,
            rank: assigned,
        });
    }
    Ok(out)
}

/// Tracked spectra of one parity block on a uniform grid over one period.
#[derive(Clone, Debug)]
pub struct SpectralPath {
    pub law: DrivingLaw,
    pub parity: ParityBlock,
    pub frames: Vec<SpectralFrame>,
    /// Geometry in the scaled-time convention, one per frame.
    pub geometry: Vec<GeometrySample>,
    /// Labels guaranteed to be tracked unambiguously.
    pub strict: usize,
}

impl SpectralPath {
    pub fn compute(
        law: &DrivingLaw,
        ops: &Operators,
        n_tau: usize,
        tracked: usize,
        strict: usize,
    ) -> Result<Self> {
        if n_tau < 2 {
            return Err(Error::Config(format!("need at least 2 tau samples, got {n_tau}")));
        }
        let tracked = tracked.min(ops.dim());
        let strict = strict.min(tracked);
        let keep = (tracked + TRACK_SLACK).min(ops.dim());
        let geometry: Vec<GeometrySample> = (0..n_tau)
            .map(|j| geometry(law, j as f64 / n_tau as f64, Convention::Tau))
            .collect::<Result<_>>()?;

        let raw: Vec<RawFrame> = if law.kind == LawKind::AxesRatio || law.amplitude == 0.0 {
            let pairs = eigendecompose(&ops.mathieu(geometry[0].r), keep)?;
            geometry
                .iter()
                .map(|g| RawFrame {
                    tau: g.tau,
                    r: g.r,
                    volume: g.volume,
                    pairs: pairs.clone(),
                })
                .collect()
        } else {
            geometry
                .par_iter()
                .map(|g| {
                    Ok(RawFrame {
                        tau: g.tau,
                        r: g.r,
                        volume: g.volume,
                        pairs: eigendecompose(&ops.mathieu(g.r), keep)?,
                    })
                })
                .collect::<Result<_>>()?
        };
        let frames = track_states(raw, tracked, strict)?;
        Ok(SpectralPath {
            law: *law,
            parity: ops.parity,
            frames,
            geometry,
            strict,
        })
    }

    pub fn n_tau(&self) -> usize {
        self.frames.len()
    }

    pub fn tracked(&self) -> usize {
        self.frames[0].len()
    }

    pub fn taus(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.tau).collect()
    }

    /// `E_n(τ_j) = q_n(r(τ_j)) / V(τ_j)`.
    pub fn energies(&self, label: usize) -> Vec<f64> {
        self.frames.iter().map(|f| f.energy(label)).collect()
    }

    pub fn q(&self, label: usize) -> Vec<f64> {
        self.frames.iter().map(|f| f.q[label]).collect()
    }

    /// Smallest `|q_n − q_m|` over the grid and where it occurs.
    pub fn min_gap(&self, n: usize, m: usize) -> (f64, f64) {
        self.frames
            .iter()
            .map(|f| ((f.q[n] - f.q[m]).abs(), f.tau))
            .fold((f64::INFINITY, 0.0), |acc, x| if x.0 < acc.0 { x } else { acc })
    }

    pub fn phase_functions(&self, n: usize, k: usize) -> PhaseData {
        let diff: Vec<f64> = self.frames.iter().map(|f| f.energy(n) - f.energy(k)).collect();
        PhaseData::from_samples(&diff)
    }
}

/// One-period split `∫_0^τ ΔE = ν τ + Δν(τ)` with `Δν` periodic.
#[derive(Clone, Debug, Serialize)]
pub struct PhaseData {
    pub nu: f64,
    /// `Δν(τ_j)` on the uniform grid `τ_j = j / N`.
    pub delta: Vec<f64>,
}

impl PhaseData {
    /// From samples of a smooth one-periodic integrand on a uniform grid.
    pub fn from_samples(values: &[f64]) -> Self {
        let n = values.len();
        let nu = values.iter().sum::<f64>() / n as f64;
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let mut planner = FftPlanner::new();
        planner.plan_fft_forward(n).process(&mut buf);
        for (j, c) in buf.iter_mut().enumerate() {
            let freq = signed_frequency(j, n);
            *c = if freq == 0 || (n.is_multiple_of(2) && j == n / 2) {
                Complex64::new(0.0, 0.0)
            } else {
                *c / (Complex64::new(0.0, 2.0 * PI * freq as f64) * n as f64)
            };
        }
        planner.plan_fft_inverse(n).process(&mut buf);
        let origin = buf[0].re;
        let delta = buf.iter().map(|c| c.re - origin).collect();
        PhaseData { nu, delta }
    }

    pub fn n_tau(&self) -> usize {
        self.delta.len()
    }
}

/// FFT bin `j` of an `n`-point transform as a signed harmonic.
pub fn signed_frequency(j: usize, n: usize) -> i64 {
    if j <= n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// Global 1-based labels of the `block` states, counting ascending `q`
/// across all parity blocks at axis ratio `r`.
pub fn global_labels(all: &[Operators], r: f64, block: ParityBlock) -> Vec<usize> {
    let mut spectrum: Vec<(f64, ParityBlock, usize)> = all
        .par_iter()
        .flat_map(|ops| {
            let mut q: Vec<f64> = ops.mathieu(r).symmetric_eigenvalues().iter().copied().collect();
            q.sort_by(f64::total_cmp);
            q.into_iter()
                .enumerate()
                .map(|(i, v)| (v, ops.parity, i))
                .collect::<Vec<_>>()
        })
        .collect();
    spectrum.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut labels: Vec<(usize, usize)> = spectrum
        .iter()
        .enumerate()
        .filter(|(_, s)| s.1 == block)
        .map(|(g, s)| (s.2, g + 1))
        .collect();
    labels.sort();
    labels.into_iter().map(|(_, g)| g).collect()
}

/// Shared, immutable handle used by the later stages.
pub type SharedPath = Arc<SpectralPath>;
