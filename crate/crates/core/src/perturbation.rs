//! First-order resonance prediction: Fourier couplings, detunings,
//! interaction times and Rabi envelopes.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectrum::{Operators, SpectralPath};

/// Smallest `|q_n − q_m|` tolerated in the non-adiabatic denominator.
pub const DEGENERACY_FLOOR: f64 = 1e-8;

/// Couplings below this count as exactly zero.
pub const ZERO_COUPLING: f64 = 1e-14;

/// Highest photon order searched by default.
pub const DEFAULT_L_MAX: u32 = 32;

/// Fourier harmonics of the driven and non-adiabatic couplings of one pair.
#[derive(Clone, Debug)]
pub struct FourierCoefficients {
    pub omega: f64,
    pub l_max: i64,
    /// `F_l` for `l = −l_max ..= l_max`.
    pub f: Vec<Complex64>,
    /// `D_l` for `l = −l_max ..= l_max`.
    pub d: Vec<Complex64>,
    pub delta_f0: f64,
}

impl FourierCoefficients {
    fn slot(&self, l: i64) -> usize {
        assert!(l.abs() <= self.l_max, "harmonic {l} outside ±{}", self.l_max);
        (l + self.l_max) as usize
    }

    pub fn f(&self, l: i64) -> Complex64 {
        self.f[self.slot(l)]
    }

    pub fn d(&self, l: i64) -> Complex64 {
        self.d[self.slot(l)]
    }

    /// `ω F_l + D_l`.
    pub fn coupling(&self, l: i64) -> Complex64 {
        self.f(l) * self.omega + self.d(l)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Minus,
    Plus,
}

/// A predicted resonance of the initial state `k` with `state`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResonanceRow {
    pub omega: f64,
    pub tau_int: f64,
    pub tau_low: f64,
    /// Tracked block label of the target state.
    pub state: usize,
    /// Global 1-based label of the target state.
    pub label: usize,
    /// Signed photon order; its sign follows `ν`.
    pub order: i64,
    pub branch: Branch,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resolvability {
    Full,
    Partial,
    No,
}

impl std::fmt::Display for Resolvability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Resolvability::Full => "full",
            Resolvability::Partial => "partial",
            Resolvability::No => "no",
        })
    }
}

/// Rows beyond this multiple of the run time are classed unobservable.
pub const PARTIAL_FACTOR: f64 = 20.0;

/// `full` when `τ_low < τ_int ≤ τ_run`, `partial` when the transfer has
/// only started by `τ_run` (`τ_int ≤ 20 τ_run`), `no` otherwise.
pub fn resolvability(tau_int: f64, tau_low: f64, tau_run: f64) -> Resolvability {
    if !(tau_low < tau_int) {
        Resolvability::No
    } else if tau_int <= tau_run {
        Resolvability::Full
    } else if tau_int <= PARTIAL_FACTOR * tau_run {
        Resolvability::Partial
    } else {
        Resolvability::No
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    #[serde(flatten)]
    pub row: ResonanceRow,
    pub resolvable: Resolvability,
}

/// `θ = ν/ω + ω δF₀ − l`.
pub fn theta(nu: f64, delta_f0: f64, l: i64, omega: f64) -> f64 {
    nu / omega + omega * delta_f0 - l as f64
}

/// Roots of `θ(ω) = 0` for one signed order: `(minus, plus)` branch.
///
/// The minus branch reduces to `ν / l` as `δF₀ → 0`; the plus branch then
/// runs off to infinity.
pub fn resonance_roots(nu: f64, delta_f0: f64, l: i64) -> Option<(f64, Option<f64>)> {
    if l == 0 {
        return None;
    }
    let lf = l as f64;
    let disc = lf * lf - 4.0 * nu * delta_f0;
    if disc < 0.0 {
        return None;
    }
    let s = lf.signum() * disc.sqrt();
    let minus = 2.0 * nu / (lf + s);
    let plus = (delta_f0 != 0.0).then(|| (lf + s) / (2.0 * delta_f0));
    // one Newton pass on θ(ω) = 0
    let newton = |w: f64| {
        let slope = -nu / (w * w) + delta_f0;
        if slope != 0.0 {
            w - theta(nu, delta_f0, l, w) / slope
        } else {
            w
        }
    };
    Some((newton(minus), plus.map(newton)))
}

/// `T_B = π τ_int / √(1 + (π θ τ_int)²)`.
pub fn beating_period(theta: f64, tau_int: f64) -> f64 {
    PI * tau_int / (1.0 + (PI * theta * tau_int).powi(2)).sqrt()
}

/// Peak transferred population `1 / (1 + (π θ τ_int)²)`.
pub fn rabi_amplitude(theta: f64, tau_int: f64) -> f64 {
    1.0 / (1.0 + (PI * theta * tau_int).powi(2))
}

/// Two-level rotating-wave population of the target state.
pub fn rabi_population(theta: f64, tau_int: f64, tau: f64) -> f64 {
    let period = beating_period(theta, tau_int);
    (PI * tau / period).sin().powi(2) * rabi_amplitude(theta, tau_int)
}

/// Beating period and peak height fitted to a sampled population.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RabiFit {
    pub period: f64,
    pub amplitude: f64,
    /// Root-mean-square residual of the period-averaged fit.
    pub residual: f64,
}

/// Fits `A sin²(π τ / T)` to `population` after averaging it over each
/// driving period, which removes the micromotion. Sample `i` sits at
/// `τ = i / samples_per_period`; the model is averaged with the same
/// trapezoid weights. `T` is searched in `[guess / 2, 2 guess]`.
pub fn fit_rabi(population: &[f64], samples_per_period: usize, guess: f64) -> Option<RabiFit> {
    let spp = samples_per_period;
    let periods = population.len().checked_sub(1)? / spp;
    if periods < 2 || spp == 0 || !(guess > 0.0) {
        return None;
    }
    let average = |f: &dyn Fn(usize) -> f64, j: usize| -> f64 {
        let a = j * spp;
        let inner: f64 = (a + 1..a + spp).map(f).sum();
        (inner + 0.5 * (f(a) + f(a + spp))) / spp as f64
    };
    let y: Vec<f64> = (0..periods).map(|j| average(&|i| population[i], j)).collect();
    let windowed = |t: f64| -> Vec<f64> {
        let model = |i: usize| (PI * i as f64 / (spp as f64 * t)).sin().powi(2);
        (0..periods).map(|j| average(&model, j)).collect()
    };
    let score = |t: f64| -> (f64, f64) {
        let m = windowed(t);
        let mm: f64 = m.iter().map(|v| v * v).sum();
        let amp = m.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / mm;
        let res = m.iter().zip(&y).map(|(a, b)| (amp * a - b).powi(2)).sum::<f64>();
        (res, amp)
    };
    let (lo, hi) = (0.5 * guess, 2.0 * guess);
    let steps = 4000;
    let mut best = (f64::INFINITY, lo);
    for i in 0..=steps {
        let t = lo + (hi - lo) * i as f64 / steps as f64;
        let r = score(t).0;
        if r < best.0 {
            best = (r, t);
        }
    }
    let h = (hi - lo) / steps as f64;
    let (mut a, mut b) = (best.1 - h, best.1 + h);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if score(c).0 < score(d).0 {
            b = d;
        } else {
            a = c;
        }
    }
    let period = 0.5 * (a + b);
    let (res, amplitude) = score(period);
    Some(RabiFit {
        period,
        amplitude,
        residual: (res / periods as f64).sqrt(),
    })
}

/// Operators projected onto the tracked states, one set per frame.
#[derive(Clone, Debug)]
struct Projected {
    laplacian: DMatrix<f64>,
    radial: DMatrix<f64>,
    anisotropy: DMatrix<f64>,
    quadrupole: DMatrix<f64>,
}

/// Everything needed to evaluate couplings and resonances for one law.
#[derive(Clone, Debug)]
pub struct Predictor {
    pub path: SpectralPath,
    /// Global label of every tracked state.
    pub labels: Vec<usize>,
    /// Labels `0..candidates` may appear in tables.
    pub candidates: usize,
    projected: Vec<Projected>,
    f0: Vec<f64>,
}

impl Predictor {
    pub fn new(path: SpectralPath, ops: &Operators, labels: Vec<usize>, candidates: usize) -> Self {
        let projected: Vec<Projected> = path
            .frames
            .par_iter()
            .map(|frame| {
                let v = &frame.vectors;
                let vt = v.transpose();
                let project = |op: &DMatrix<f64>| &vt * (op * v);
                Projected {
                    laplacian: project(&ops.laplacian),
                    radial: project(&ops.radial),
                    anisotropy: project(&ops.anisotropy),
                    quadrupole: project(&ops.quadrupole),
                }
            })
            .collect();
        let candidates = candidates.min(path.strict);
        let mut p = Predictor {
            path,
            labels,
            candidates,
            projected,
            f0: Vec::new(),
        };
        p.f0 = (0..p.path.tracked())
            .map(|n| {
                let h = p.driven_series(n, n);
                h.iter().sum::<f64>() / h.len() as f64
            })
            .collect();
        p
    }

    /// `⟨n| g2 f2 + g4 (f4 + f6) |m⟩ / 2π` with scaled-time accelerations.
    pub fn driven_series(&self, n: usize, m: usize) -> Vec<f64> {
        self.path
            .geometry
            .iter()
            .zip(&self.projected)
            .map(|(g, p)| {
                let g2 = g.a * g.dda + g.b * g.ddb;
                let g4 = g.a * g.dda - g.b * g.ddb;
                (g2 * p.radial[(n, m)] + g4 * p.quadrupole[(n, m)]) / (2.0 * PI)
            })
            .collect()
    }

    /// `−i ṙ ⟨n|∂_r|m⟩`, the non-adiabatic coupling along the path.
    pub fn nonadiabatic_series(&self, n: usize, m: usize) -> Result<Vec<Complex64>> {
        if n == m {
            return Ok(vec![Complex64::new(0.0, 0.0); self.path.n_tau()]);
        }
        self.path
            .geometry
            .iter()
            .zip(&self.projected)
            .zip(&self.path.frames)
            .map(|((g, p), frame)| {
                if g.dr == 0.0 {
                    return Ok(Complex64::new(0.0, 0.0));
                }
                let gap = frame.q[n] - frame.q[m];
                if gap.abs() < DEGENERACY_FLOOR {
                    return Err(Error::NearDegenerate {
                        n: self.labels[n],
                        m: self.labels[m],
                        gap: gap.abs(),
                        tau: frame.tau,
                    });
                }
                let r = g.r;
                let value = (g.dr / r)
                    * ((r - 1.0 / r) * p.laplacian[(n, m)] + (r + 1.0 / r) * p.anisotropy[(n, m)])
                    / gap;
                Ok(Complex64::new(0.0, -value))
            })
            .collect()
    }

    /// `F₀ⁿⁿ`, independent of `ω`.
    pub fn f0(&self, n: usize) -> f64 {
        self.f0[n]
    }

    /// `(F₀ⁿⁿ − F₀ᵏᵏ) / 2π`.
    pub fn delta_f0(&self, n: usize, k: usize) -> f64 {
        (self.f0[n] - self.f0[k]) / (2.0 * PI)
    }

    pub fn nu(&self, n: usize, k: usize) -> f64 {
        self.path.phase_functions(n, k).nu
    }

    pub fn fourier_coeffs(&self, n: usize, m: usize, omega: f64, l_max: u32) -> Result<FourierCoefficients> {
        let samples = self.path.n_tau();
        let l_max = l_max as i64;
        if 2 * l_max as usize >= samples {
            return Err(Error::Config(format!(
                "harmonic order {l_max} needs more than {samples} tau samples"
            )));
        }
        let phase = self.path.phase_functions(n, m);
        let h = self.driven_series(n, m);
        let d = self.nonadiabatic_series(n, m)?;
        // e^{−2πi Δν_mn/ω} = e^{+2πi Δν_nm/ω}
        let rot: Vec<Complex64> = phase
            .delta
            .iter()
            .map(|dn| Complex64::from_polar(1.0, 2.0 * PI * dn / omega))
            .collect();

        let mut planner = FftPlanner::new();
        let inverse = planner.plan_fft_inverse(samples);
        let harmonics = |mut buf: Vec<Complex64>| -> Vec<Complex64> {
            inverse.process(&mut buf);
            (-l_max..=l_max)
                .map(|l| buf[l.rem_euclid(samples as i64) as usize] / samples as f64)
                .collect()
        };
        let f = harmonics(rot.iter().zip(&h).map(|(e, v)| e * v).collect());
        let d = harmonics(rot.iter().zip(&d).map(|(e, v)| e * v).collect());
        Ok(FourierCoefficients {
            omega,
            l_max,
            f,
            d,
            delta_f0: self.delta_f0(n, m),
        })
    }

    /// `θ_l^{nk}(ω)`.
    pub fn theta(&self, n: usize, k: usize, l: i64, omega: f64) -> f64 {
        theta(self.nu(n, k), self.delta_f0(n, k), l, omega)
    }

    /// `τ_low`: the slowest non-resonant oscillation among the other candidates.
    pub fn tau_low(&self, n: usize, k: usize, l: i64, omega: f64, nus: &[f64]) -> f64 {
        (0..self.candidates)
            .filter(|&p| p != n && p != k)
            .map(|p| 1.0 / theta(nus[p], self.delta_f0(p, k), l, omega).abs())
            .fold(0.0, f64::max)
    }

    /// Minus-branch resonances of `k` with every other candidate for
    /// `1 ≤ |l| ≤ l_max`, sorted by frequency.
    pub fn resonances(&self, k: usize, omega_max: f64, l_max: u32) -> Result<Vec<ResonanceRow>> {
        let nus: Vec<f64> = (0..self.candidates).map(|n| self.nu(n, k)).collect();
        let mut jobs = Vec::new();
        for n in (0..self.candidates).filter(|&n| n != k) {
            let nu = nus[n];
            if nu == 0.0 {
                continue;
            }
            let df = self.delta_f0(n, k);
            for order in 1..=l_max as i64 {
                let l = order * nu.signum() as i64;
                match resonance_roots(nu, df, l) {
                    Some((omega, _)) if omega > 0.0 && omega <= omega_max => jobs.push((n, l, omega)),
                    Some(_) => {}
                    None => log::debug!("no real resonance for state {} at order {l}", self.labels[n]),
                }
            }
        }
        let mut rows: Vec<ResonanceRow> = jobs
            .par_iter()
            .map(|&(n, l, omega)| {
                let coeffs = self.fourier_coeffs(n, k, omega, l.unsigned_abs() as u32)?;
                let c = coeffs.coupling(l).norm();
                Ok(ResonanceRow {
                    omega,
                    tau_int: if c < ZERO_COUPLING { f64::INFINITY } else { 1.0 / c },
                    tau_low: self.tau_low(n, k, l, omega, &nus),
                    state: n,
                    label: self.labels[n],
                    order: l,
                    branch: Branch::Minus,
                })
            })
            .collect::<Result<_>>()?;
        rows.sort_by(|a, b| a.omega.total_cmp(&b.omega));
        Ok(rows)
    }

    /// Resonances with `τ_int < tau_cutoff`, each classified against `tau_run`.
    pub fn predict_table(
        &self,
        k: usize,
        omega_max: f64,
        l_max: u32,
        tau_cutoff: f64,
        tau_run: f64,
    ) -> Result<Vec<TableRow>> {
        Ok(self
            .resonances(k, omega_max, l_max)?
            .into_iter()
            .filter(|r| r.tau_int < tau_cutoff)
            .map(|row| TableRow {
                resolvable: resolvability(row.tau_int, row.tau_low, tau_run),
                row,
            })
            .collect())
    }

    /// Tracked label carrying a global label.
    pub fn state_of_label(&self, label: usize) -> Option<usize> {
        self.labels.iter().position(|&g| g == label)
    }
}
