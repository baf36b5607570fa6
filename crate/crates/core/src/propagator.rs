//! Time evolution under the effective Hamiltonian and the observables
//! sampled along it.
//!
//! The state is integrated in the fixed circular basis of one parity block.
//! Observables go through the quadratic-form unitary
//! `U = exp(−i S)`, `S = (a ȧ + b ḃ) f2 + (a ȧ − b ḃ)(f4 + f6)`, which maps
//! the integrated state onto instantaneous Mathieu eigenstates. Every
//! quantity needed for observation is periodic in `τ`, so it is prepared
//! once per sampling phase and shared by all frequencies.

use crate::clock::Stopwatch;
use std::cell::RefCell;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DMatrixView, DVector, SymmetricEigen};
use num_complex::Complex64;
use ode_solvers::System;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::ParityBlock;
use crate::driving::{g_factors, geometry, Convention, DrivingLaw, GeometrySample};
use crate::error::{Error, Result};
use crate::model::DEFAULT_N_TAU;
use crate::ode::integrate_sampled;
use crate::spectrum::{Operators, SpectralPath};

pub const DEFAULT_REL_TOL: f64 = 1e-9;
pub const MAX_REL_TOL: f64 = 1e-8;
pub const DEFAULT_SAMPLES_PER_PERIOD: usize = 64;
pub const DEFAULT_STEP_BUDGET: u64 = 500_000_000;

/// Norm drift beyond this aborts a trajectory as inaccurate.
pub const NORM_DRIFT_BOUND: f64 = 1e-4;

/// Minimum overlap between the two initial-state conventions.
pub const OVERLAP_FLOOR: f64 = 0.945;

/// Tracked populations below this fraction of `‖Λ‖²` trigger a warning.
pub const COMPLETENESS_FLOOR: f64 = 0.99;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// The back-transformed eigenstate of the energy operator.
    EnergyEigenstate,
    /// The bare Mathieu eigenvector.
    Instantaneous,
}

impl fmt::Display for InitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitMode::EnergyEigenstate => "energy",
            InitMode::Instantaneous => "instantaneous",
        })
    }
}

impl FromStr for InitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "energy" | "energy_eigenstate" | "energy-eigenstate" => Ok(InitMode::EnergyEigenstate),
            "instantaneous" => Ok(InitMode::Instantaneous),
            _ => Err(Error::Config(format!(
                "unknown initialisation mode '{s}' (expected energy or instantaneous)"
            ))),
        }
    }
}

/// `H^e = g1 f1 + g3 (f3 + f5) + g2 f2 + g4 (f4 + f6)`.
pub fn assemble_he(sample: &GeometrySample, ops: &Operators) -> DMatrix<f64> {
    let g = g_factors(sample);
    &ops.laplacian * g.g1 + &ops.anisotropy * g.g3 + &ops.radial * g.g2 + &ops.quadrupole * g.g4
}

/// `S` in the derivative convention of `sample`.
pub fn quadratic_form(sample: &GeometrySample, ops: &Operators) -> DMatrix<f64> {
    let eta = sample.a * sample.da;
    let xi = sample.b * sample.db;
    &ops.radial * (eta + xi) + &ops.quadrupole * (eta - xi)
}

/// `S = W diag(s) Wᵀ`, so `exp(−i c S)` is available for any scale `c`.
#[derive(Clone, Debug)]
pub struct QuadraticUnitary {
    eigenvalues: DVector<f64>,
    vectors: DMatrix<f64>,
}

impl QuadraticUnitary {
    pub fn new(form: DMatrix<f64>) -> Self {
        let eig = SymmetricEigen::new(form);
        QuadraticUnitary {
            eigenvalues: eig.eigenvalues,
            vectors: eig.eigenvectors,
        }
    }

    /// `exp(−i scale S) z`.
    pub fn apply(&self, scale: f64, z: &DVector<Complex64>) -> DVector<Complex64> {
        self.rotate(-scale, z)
    }

    /// `exp(+i scale S) z`.
    pub fn apply_adjoint(&self, scale: f64, z: &DVector<Complex64>) -> DVector<Complex64> {
        self.rotate(scale, z)
    }

    fn rotate(&self, angle: f64, z: &DVector<Complex64>) -> DVector<Complex64> {
        let wt = self.vectors.transpose();
        let mut c = real_times(&wt, z);
        for (ci, s) in c.iter_mut().zip(self.eigenvalues.iter()) {
            *ci *= Complex64::from_polar(1.0, angle * s);
        }
        real_times(&self.vectors, &c)
    }
}

/// Real matrix times complex vector.
pub fn real_times(m: &DMatrix<f64>, z: &DVector<Complex64>) -> DVector<Complex64> {
    let re = m * z.map(|c| c.re);
    let im = m * z.map(|c| c.im);
    re.zip_map(&im, Complex64::new)
}

fn to_complex(v: DVector<f64>) -> DVector<Complex64> {
    v.map(|x| Complex64::new(x, 0.0))
}

fn pack(z: &DVector<Complex64>) -> DVector<f64> {
    let n = z.len();
    DVector::from_fn(2 * n, |i, _| if i < n { z[i].re } else { z[i - n].im })
}

fn unpack(y: &DVector<f64>) -> DVector<Complex64> {
    let n = y.len() / 2;
    DVector::from_fn(n, |i, _| Complex64::new(y[i], y[i + n]))
}

/// Observation data at one sampling phase.
#[derive(Clone, Debug)]
struct Phase {
    volume: f64,
    q: Vec<f64>,
    vectors: DMatrix<f64>,
    /// `M(r) / V`, for the direct energy expectation.
    hamiltonian: DMatrix<f64>,
    /// `S` with scaled-time derivatives; physical time rescales it by `ω/2π`.
    form: QuadraticUnitary,
}

/// Frequency-independent observation frames for one law and parity block.
#[derive(Clone, Debug)]
pub struct ObservationGrid {
    pub law: DrivingLaw,
    pub parity: ParityBlock,
    pub samples_per_period: usize,
    /// Global label of every tracked state.
    pub labels: Vec<usize>,
    phases: Vec<Phase>,
}

impl ObservationGrid {
    /// Tracks `tracked` states through one period on a grid fine enough for
    /// unambiguous tracking, keeping every phase that is a multiple of
    /// `1 / samples_per_period`.
    pub fn new(
        law: &DrivingLaw,
        ops: &Operators,
        labels: &[usize],
        samples_per_period: usize,
        tracked: usize,
        strict: usize,
    ) -> Result<Self> {
        if samples_per_period == 0 {
            return Err(Error::Config("samples per period must be positive".into()));
        }
        let stride = DEFAULT_N_TAU.div_ceil(samples_per_period);
        let path = SpectralPath::compute(law, ops, samples_per_period * stride, tracked, strict)?;
        let first = &path.frames[0];
        let last = path.frames.last().expect("nonempty path");
        let closing = last.vectors.transpose() * &first.vectors;
        for label in 0..path.strict {
            if closing[(label, label)].abs() < 0.5 {
                return Err(Error::AmbiguousTracking {
                    state: labels.get(label).copied().unwrap_or(label + 1),
                    from: last.tau,
                    to: 1.0,
                });
            }
        }

        let phases = (0..samples_per_period)
            .into_par_iter()
            .map(|i| {
                let frame = &path.frames[i * stride];
                let g = &path.geometry[i * stride];
                Phase {
                    volume: frame.volume,
                    q: frame.q.clone(),
                    vectors: frame.vectors.clone(),
                    hamiltonian: ops.mathieu(frame.r) / frame.volume,
                    form: QuadraticUnitary::new(quadratic_form(g, ops)),
                }
            })
            .collect();
        let mut labels = labels.to_vec();
        labels.truncate(path.tracked());
        Ok(ObservationGrid {
            law: *law,
            parity: ops.parity,
            samples_per_period,
            labels,
            phases,
        })
    }

    pub fn tracked(&self) -> usize {
        self.phases[0].q.len()
    }

    /// Tracked position of a global label.
    pub fn state_of_label(&self, label: usize) -> Result<usize> {
        self.labels.iter().position(|&g| g == label).ok_or_else(|| {
            Error::Config(format!(
                "state {label} is not tracked in the {} block",
                self.parity
            ))
        })
    }

    /// Energies `E_n(τ)` of the tracked states at phase `i`.
    pub fn energies(&self, i: usize) -> Vec<f64> {
        let p = &self.phases[i % self.samples_per_period];
        p.q.iter().map(|q| q / p.volume).collect()
    }

    /// Populations, population-weighted energy and direct energy of `state`
    /// at sampling index `i`.
    pub fn observe(&self, state: &DVector<Complex64>, i: usize, omega: f64) -> Observation {
        let p = &self.phases[i % self.samples_per_period];
        let body = p.form.apply_adjoint(omega / (2.0 * PI), state);
        let proj = real_times(&p.vectors.transpose(), &body);
        let populations: Vec<f64> = proj.iter().map(|c| c.norm_sqr()).collect();
        let energy = populations.iter().zip(&p.q).map(|(w, q)| w * q / p.volume).sum();
        let h_body = real_times(&p.hamiltonian, &body);
        let energy_direct = body.dotc(&h_body).re;
        Observation {
            populations,
            energy,
            energy_direct,
            norm: state.norm(),
        }
    }

    /// Initial state built from tracked state `state` and its overlap
    /// `|⟨k|U(0)|k⟩|²` between the two initialisation conventions.
    pub fn prepare_initial(
        &self,
        state: usize,
        omega: f64,
        mode: InitMode,
    ) -> Result<(DVector<Complex64>, f64)> {
        if state >= self.tracked() {
            return Err(Error::Config(format!("initial state {state} is not tracked")));
        }
        let p = &self.phases[0];
        let bare = to_complex(p.vectors.column(state).into_owned());
        let scale = omega / (2.0 * PI);
        let dressed = p.form.apply(scale, &bare);
        let overlap = bare.dotc(&dressed).norm_sqr();
        let initial = match mode {
            InitMode::EnergyEigenstate => dressed,
            InitMode::Instantaneous => bare,
        };
        Ok((initial, overlap))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub populations: Vec<f64>,
    pub energy: f64,
    pub energy_direct: f64,
    pub norm: f64,
}

/// `i dΛ/dt = H^e(t) Λ` with `Λ = Re + i Im` packed as `[Re; Im]`.
struct Schrodinger<'a> {
    law: DrivingLaw,
    omega: f64,
    dim: usize,
    laplacian: DVector<f64>,
    /// `[f3 + f5; f2; f4 + f6]`.
    stacked: &'a DMatrix<f64>,
    product: RefCell<DMatrix<f64>>,
}

impl System<f64, DVector<f64>> for Schrodinger<'_> {
    fn system(&self, t: f64, y: &DVector<f64>, dy: &mut DVector<f64>) {
        let n = self.dim;
        let tau = self.omega * t / (2.0 * PI);
        let sample = geometry(&self.law, tau, Convention::Physical { omega: self.omega })
            .expect("law validated before integration");
        let g = g_factors(&sample);
        let state = DMatrixView::from_slice(y.as_slice(), n, 2);
        let mut product = self.product.borrow_mut();
        self.stacked.mul_to(&state, &mut product);
        for i in 0..n {
            let h = |c: usize| {
                g.g1 * self.laplacian[i] * state[(i, c)]
                    + g.g3 * product[(i, c)]
                    + g.g2 * product[(n + i, c)]
                    + g.g4 * product[(2 * n + i, c)]
            };
            dy[i] = h(1);
            dy[n + i] = -h(0);
        }
    }
}

/// Integration settings for one trajectory.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PropagationConfig {
    pub omega: f64,
    /// Run length in driving periods.
    pub tau_run: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub samples_per_period: usize,
    pub init: InitMode,
    pub max_steps: u64,
}

impl PropagationConfig {
    pub fn new(omega: f64, tau_run: f64) -> Self {
        PropagationConfig {
            omega,
            tau_run,
            rel_tol: DEFAULT_REL_TOL,
            abs_tol: DEFAULT_REL_TOL * 1e-3,
            samples_per_period: DEFAULT_SAMPLES_PER_PERIOD,
            init: InitMode::EnergyEigenstate,
            max_steps: DEFAULT_STEP_BUDGET,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(Error::Config(format!(
                "omega must be positive, got {}",
                self.omega
            )));
        }
        if !(self.tau_run > 0.0 && self.tau_run.is_finite()) {
            return Err(Error::Config(format!(
                "tau_run must be positive, got {}",
                self.tau_run
            )));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol <= MAX_REL_TOL) {
            return Err(Error::Config(format!(
                "rel_tol must lie in (0, {MAX_REL_TOL:e}], got {}",
                self.rel_tol
            )));
        }
        if !(self.abs_tol > 0.0) {
            return Err(Error::Config(format!(
                "abs_tol must be positive, got {}",
                self.abs_tol
            )));
        }
        if self.samples_per_period == 0 {
            return Err(Error::Config("samples per period must be positive".into()));
        }
        Ok(())
    }

    /// Scaled sampling times `i / samples_per_period`, with the run length
    /// rounded to the nearest sample.
    pub fn sample_taus(&self) -> Vec<f64> {
        let spp = self.samples_per_period as f64;
        let count = (self.tau_run * spp).round().max(1.0) as usize;
        (0..=count).map(|i| i as f64 / spp).collect()
    }
}

/// Integrates `initial` under the law's `H^e` through the scaled `taus`,
/// calling `on_sample` with each state.
#[allow(clippy::too_many_arguments)]
pub fn evolve(
    ops: &Operators,
    law: &DrivingLaw,
    omega: f64,
    initial: &DVector<Complex64>,
    taus: &[f64],
    rel_tol: f64,
    abs_tol: f64,
    max_steps: u64,
    mut on_sample: impl FnMut(usize, f64, &DVector<Complex64>) -> Result<()>,
) -> Result<(u64, u64)> {
    law.validate()?;
    let dim = ops.dim();
    if initial.len() != dim {
        return Err(Error::Config(format!(
            "initial state has {} components, block has {dim}",
            initial.len()
        )));
    }
    let mut stacked = DMatrix::zeros(3 * dim, dim);
    stacked.rows_mut(0, dim).copy_from(&ops.anisotropy);
    stacked.rows_mut(dim, dim).copy_from(&ops.radial);
    stacked.rows_mut(2 * dim, dim).copy_from(&ops.quadrupole);
    let system = Schrodinger {
        law: *law,
        omega,
        dim,
        laplacian: ops.laplacian.diagonal(),
        stacked: &stacked,
        product: RefCell::new(DMatrix::zeros(3 * dim, 2)),
    };
    let times: Vec<f64> = taus.iter().map(|tau| tau * 2.0 * PI / omega).collect();
    let sol = integrate_sampled(
        &system,
        &times,
        pack(initial),
        rel_tol,
        abs_tol,
        max_steps,
        |i, _, y| on_sample(i, taus[i], &unpack(y)),
    )?;
    Ok((sol.steps, sol.evaluations))
}

/// Sampled energy, norm and tracked populations of one run.
#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    pub law: DrivingLaw,
    pub parity: ParityBlock,
    pub omega: f64,
    pub cutoff: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub init: InitMode,
    pub initial_label: usize,
    /// `|⟨k|U(0)|k⟩|²`.
    pub initial_overlap: f64,
    pub labels: Vec<usize>,
    pub tau: Vec<f64>,
    pub energy: Vec<f64>,
    pub energy_direct: Vec<f64>,
    pub norm: Vec<f64>,
    /// `populations[i][n]` for sample `i` and tracked state `n`.
    pub populations: Vec<Vec<f64>>,
    pub norm_drift: f64,
    pub steps: u64,
    pub evaluations: u64,
    pub wall_seconds: f64,
}

impl Trajectory {
    /// Population series of one global label.
    pub fn population(&self, label: usize) -> Option<Vec<f64>> {
        let n = self.labels.iter().position(|&g| g == label)?;
        Some(self.populations.iter().map(|p| p[n]).collect())
    }

    pub fn energy_range(&self) -> (f64, f64) {
        self.energy
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &e| {
                (lo.min(e), hi.max(e))
            })
    }

    /// Largest `|E_pop − E_direct|` over the run.
    pub fn energy_mismatch(&self) -> f64 {
        self.energy
            .iter()
            .zip(&self.energy_direct)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Runs one trajectory from tracked state `state` of `grid`.
pub fn propagate(
    ops: &Operators,
    grid: &ObservationGrid,
    cutoff: f64,
    state: usize,
    config: &PropagationConfig,
) -> Result<Trajectory> {
    config.validate()?;
    if config.samples_per_period != grid.samples_per_period {
        return Err(Error::Config(format!(
            "grid samples {} per period, configuration asks for {}",
            grid.samples_per_period, config.samples_per_period
        )));
    }
    let start = Stopwatch::start();
    let (initial, overlap) = grid.prepare_initial(state, config.omega, config.init)?;
    if overlap <= OVERLAP_FLOOR {
        log::warn!("initial-state overlap {overlap:.4} is at or below {OVERLAP_FLOOR}");
    }
    let taus = config.sample_taus();
    let mut trajectory = Trajectory {
        law: grid.law,
        parity: grid.parity,
        omega: config.omega,
        cutoff,
        rel_tol: config.rel_tol,
        abs_tol: config.abs_tol,
        init: config.init,
        initial_label: grid.labels[state],
        initial_overlap: overlap,
        labels: grid.labels.clone(),
        tau: Vec::with_capacity(taus.len()),
        energy: Vec::with_capacity(taus.len()),
        energy_direct: Vec::with_capacity(taus.len()),
        norm: Vec::with_capacity(taus.len()),
        populations: Vec::with_capacity(taus.len()),
        norm_drift: 0.0,
        steps: 0,
        evaluations: 0,
        wall_seconds: 0.0,
    };
    let mut warned = false;
    let (steps, evaluations) = evolve(
        ops,
        &grid.law,
        config.omega,
        &initial,
        &taus,
        config.rel_tol,
        config.abs_tol,
        config.max_steps,
        |i, tau, psi| {
            let obs = grid.observe(psi, i, config.omega);
            let total: f64 = obs.populations.iter().sum();
            if !warned && total < COMPLETENESS_FLOOR * obs.norm * obs.norm {
                log::warn!(
                    "tracked populations cover {total:.4} of the norm at tau={tau:.3}; enlarge the tracked set"
                );
                warned = true;
            }
            trajectory.tau.push(tau);
            trajectory.energy.push(obs.energy);
            trajectory.energy_direct.push(obs.energy_direct);
            trajectory.norm.push(obs.norm);
            trajectory.populations.push(obs.populations);
            Ok(())
        },
    )?;
    let n0 = trajectory.norm[0];
    trajectory.norm_drift = trajectory.norm.iter().map(|n| (n - n0).abs()).fold(0.0, f64::max);
    if trajectory.norm_drift > NORM_DRIFT_BOUND {
        return Err(Error::NormDrift {
            drift: trajectory.norm_drift,
            bound: NORM_DRIFT_BOUND,
        });
    }
    trajectory.steps = steps;
    trajectory.evaluations = evaluations;
    trajectory.wall_seconds = start.seconds();
    Ok(trajectory)
}
