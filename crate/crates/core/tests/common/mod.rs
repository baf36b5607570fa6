#![allow(dead_code)]

use std::f64::consts::PI;

use driven_billiard::basis::bessel::bessel_j;
use driven_billiard::basis::quadrature::gauss_legendre;
use driven_billiard::basis::{signed_element, BasisSet, Coupling, ParityBlock};
use driven_billiard::driving::{DrivingLaw, LawKind};
use driven_billiard::model::Model;
use driven_billiard::propagator::{evolve, propagate, InitMode, PropagationConfig, DEFAULT_REL_TOL};
use driven_billiard::spectrum::{eigendecompose, Operators};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// `(ω_res, τ_int, τ_low, n, |l|)` rows of the reference resonance tables.
pub type RefRow = (f64, f64, f64, usize, i64);

pub const RATIO_TABLE: [RefRow; 12] = [
    (3.966, 304.0, 0.181, 1, 3),
    (5.030, 328.0, 0.482, 7, 2),
    (5.122, 1014.0, 0.493, 10, 4),
    (5.944, 39.4, 0.271, 1, 2),
    (6.829, 133.0, 0.657, 10, 3),
    (7.720, 1098.0, 0.743, 13, 4),
    (10.09, 40.5, 0.970, 7, 1),
    (10.24, 17.3, 0.985, 10, 2),
    (10.29, 144.0, 0.990, 13, 3),
    (11.84, 4.91, 0.540, 1, 1),
    (15.11, 1647.0, 1.77, 22, 4),
    (15.44, 18.7, 1.48, 13, 2),
];

pub const BREATHING_TABLE: [RefRow; 15] = [
    (2.584, 589.0, 0.254, 7, 4),
    (3.446, 150.0, 0.339, 7, 3),
    (3.972, 309.0, 0.178, 1, 3),
    (5.128, 1207.0, 0.504, 10, 4),
    (5.170, 40.0, 0.508, 7, 2),
    (5.954, 39.9, 0.268, 1, 2),
    (6.836, 151.0, 0.672, 10, 3),
    (7.807, 361.0, 0.728, 13, 4),
    (10.25, 18.8, 1.01, 10, 2),
    (10.35, 11.0, 1.02, 7, 1),
    (10.41, 63.7, 0.970, 13, 3),
    (11.86, 4.90, 0.534, 1, 1),
    (13.18, 1284.0, 3.29, 20, 4),
    (15.21, 1019.0, 1.87, 22, 4),
    (15.62, 11.2, 1.44, 13, 2),
];

pub const VOLUME_TABLE: [RefRow; 33] = [
    (0.3682, 1985.0, 0.0367, 7, 3),
    (0.3823, 1889.0, 0.0381, 7, 2),
    (0.3976, 1975.0, 0.0397, 7, 4),
    (0.4733, 1176.0, 0.0472, 7, 2),
    (0.4970, 842.0, 0.0496, 7, 3),
    (0.5232, 741.0, 0.0522, 7, 4),
    (0.5522, 712.0, 0.0551, 7, 1),
    (0.5847, 525.0, 0.0583, 7, 2),
    (0.6213, 303.0, 0.0620, 7, 3),
    (0.6627, 185.0, 0.0661, 7, 1),
    (0.7100, 124.0, 0.0708, 7, 4),
    (0.7647, 88.6, 0.0763, 7, 2),
    (0.8284, 63.7, 0.0826, 7, 3),
    (0.9037, 45.0, 0.0902, 7, 2),
    (0.9941, 31.3, 0.0992, 7, 4),
    (1.105, 22.0, 0.110, 7, 2),
    (1.243, 15.7, 0.124, 7, 3),
    (1.420, 11.5, 0.142, 7, 4),
    (1.657, 8.51, 0.165, 7, 1),
    (1.989, 6.42, 0.199, 7, 2),
    (2.487, 4.95, 0.248, 7, 3),
    (3.317, 3.94, 0.332, 7, 1),
    (4.982, 3.31, 0.500, 7, 4),
    (5.905, 411.0, 0.271, 1, 2),
    (6.228, 1134.0, 0.555, 13, 3),
    (7.795, 691.0, 0.691, 13, 2),
    (8.559, 875.0, 1.98, 20, 4),
    (9.926, 28.9, 1.01, 10, 2),
    (10.04, 2.97, 1.02, 7, 3),
    (10.28, 347.0, 2.33, 20, 4),
    (10.42, 218.0, 0.912, 13, 1),
    (11.74, 5.06, 0.538, 1, 2),
    (12.86, 136.0, 2.83, 20, 3),
];

pub fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

pub fn block_ops(cutoff: f64, parity: ParityBlock) -> Operators {
    let basis = BasisSet::new(cutoff).unwrap();
    Operators::from(&driven_billiard::basis::CouplingMatrices::build(&basis, parity).unwrap())
}

/// Largest `|J_m(k)|` over every basis root.
pub fn root_residual(cutoff: f64) -> f64 {
    let basis = BasisSet::new(cutoff).unwrap();
    basis
        .indices
        .iter()
        .map(|i| bessel_j(i.m.abs(), i.k).abs())
        .fold(0.0, f64::max)
}

/// `max |G − I|` for the signed modes, with `G` from a tensor-product
/// rule on the disc: Gauss–Legendre panels in `ρ`, trapezoid in `φ`.
pub fn gram_defect(cutoff: f64) -> f64 {
    let basis = BasisSet::new(cutoff).unwrap();
    let m_max = basis.indices.iter().map(|i| i.m.abs()).max().unwrap();
    let angles = 4 * m_max as usize + 8;
    let (x, w) = gauss_legendre(20);
    let panels = (cutoff as usize) / 2 + 4;
    let mut points = Vec::new();
    for p in 0..panels {
        let h = 1.0 / panels as f64;
        for (xi, wi) in x.iter().zip(&w) {
            let rho = p as f64 * h + 0.5 * h * (xi + 1.0);
            let wr = 0.5 * h * wi * rho;
            for j in 0..angles {
                points.push((
                    rho,
                    2.0 * PI * j as f64 / angles as f64,
                    wr * 2.0 * PI / angles as f64,
                ));
            }
        }
    }
    let dim = basis.dim();
    let sample = DMatrix::from_fn(points.len(), dim, |q, a| {
        let (rho, phi, wq) = points[q];
        let i = &basis.indices[a];
        let norm = PI.sqrt() * bessel_j(i.m.abs() + 1, i.k);
        let radial = bessel_j(i.m, i.k * rho) / norm;
        Complex64::from_polar(radial * wq.sqrt(), i.m as f64 * phi)
    });
    let gram = sample.adjoint() * &sample;
    (gram - DMatrix::<Complex64>::identity(dim, dim))
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
}

/// `max |M − Mᵀ|` at a few axis ratios.
pub fn mathieu_asymmetry(ops: &Operators) -> f64 {
    [0.5, 0.714, 1.3]
        .iter()
        .map(|&r| {
            let m = ops.mathieu(r);
            (&m - m.transpose()).amax()
        })
        .fold(0.0, f64::max)
}

/// Largest relative eigen-residual `‖M v − q v‖ / ‖M‖` over the spectrum.
pub fn eigen_residual(ops: &Operators, r: f64) -> f64 {
    let m = ops.mathieu(r);
    let pairs = eigendecompose(&m, ops.dim()).unwrap();
    let scale = pairs.q.iter().fold(0.0f64, |a, q| a.max(q.abs()));
    (0..pairs.q.len())
        .map(|j| {
            let v = pairs.vectors.column(j);
            (&m * v - v * pairs.q[j]).norm() / scale
        })
        .fold(0.0, f64::max)
}

/// `(max |⟨n|∂_r n⟩|, max |analytic − finite difference|)` for the lowest
/// `count` states, with `⟨m|∂_r n⟩ = ⟨m|∂_r M|n⟩ / (q_n − q_m)`.
pub fn derivative_checks(ops: &Operators, r: f64, count: usize) -> (f64, f64) {
    let h = 1e-5;
    let centre = eigendecompose(&ops.mathieu(r), count).unwrap();
    let aligned = |x: f64| {
        let mut p = eigendecompose(&ops.mathieu(x), count).unwrap();
        for j in 0..count {
            if p.vectors.column(j).dot(&centre.vectors.column(j)) < 0.0 {
                p.vectors.column_mut(j).neg_mut();
            }
        }
        p.vectors
    };
    let fd = (aligned(r + h) - aligned(r - h)) / (2.0 * h);
    let dm = ops.mathieu_dr(r);
    let projected = centre.vectors.transpose() * &dm * &centre.vectors;
    let overlaps = centre.vectors.transpose() * &fd;
    let mut diag = 0.0f64;
    let mut off = 0.0f64;
    for n in 0..count {
        diag = diag.max(overlaps[(n, n)].abs());
        for m in 0..count {
            if m != n {
                let analytic = projected[(m, n)] / (centre.q[n] - centre.q[m]);
                off = off.max((analytic - overlaps[(m, n)]).abs());
            }
        }
    }
    (diag, off)
}

/// Full signed-basis operators, bypassing the parity-block assembly.
pub fn signed_ops(cutoff: f64) -> (BasisSet, Operators) {
    let basis = BasisSet::new(cutoff).unwrap();
    let dim = basis.dim();
    let build = |kind: Coupling| {
        DMatrix::from_fn(dim, dim, |a, b| {
            signed_element(kind, &basis.indices[a], &basis.indices[b]).unwrap()
        })
    };
    let sym = |m: DMatrix<f64>| (&m + m.transpose()) * 0.5;
    let ops = Operators {
        parity: ParityBlock::EVEN_EVEN,
        laplacian: build(Coupling::F1),
        radial: sym(build(Coupling::F2)),
        anisotropy: sym(build(Coupling::F3) + build(Coupling::F5)),
        quadrupole: sym(build(Coupling::F4) + build(Coupling::F6)),
    };
    (basis, ops)
}

pub struct LeakageReport {
    /// Largest population outside the initial block.
    pub leakage: f64,
    /// Largest distance between the block component and the block-only run.
    pub block_mismatch: f64,
}

/// Propagates the same initial state in the full signed basis and inside
/// its parity block.
pub fn leakage(cutoff: f64, law: &DrivingLaw, omega: f64, periods: usize) -> LeakageReport {
    let (basis, full) = signed_ops(cutoff);
    let block = ParityBlock::EVEN_EVEN;
    let ops = block_ops(cutoff, block);
    let transforms: Vec<(ParityBlock, DMatrix<Complex64>)> = ParityBlock::ALL
        .iter()
        .map(|&p| (p, basis.block(p).to_signed(&basis)))
        .collect();
    let t_block = &transforms.iter().find(|(p, _)| *p == block).unwrap().1;

    let start = eigendecompose(&ops.mathieu(law.ratio0()), 3).unwrap();
    let psi_block: DVector<Complex64> = start.vectors.column(1).map(|x| Complex64::new(x, 0.0));
    let psi_full = t_block * &psi_block;
    let taus: Vec<f64> = (0..=periods * 8).map(|i| i as f64 / 8.0).collect();

    let mut block_states = Vec::new();
    evolve(
        &ops,
        law,
        omega,
        &psi_block,
        &taus,
        1e-10,
        1e-13,
        100_000_000,
        |_, _, y| {
            block_states.push(y.clone());
            Ok(())
        },
    )
    .unwrap();
    let mut report = LeakageReport {
        leakage: 0.0,
        block_mismatch: 0.0,
    };
    evolve(
        &full,
        law,
        omega,
        &psi_full,
        &taus,
        1e-10,
        1e-13,
        100_000_000,
        |i, _, y| {
            for (p, t) in &transforms {
                let part = t.adjoint() * y;
                if *p == block {
                    report.block_mismatch = report.block_mismatch.max((part - &block_states[i]).norm());
                } else {
                    report.leakage = report.leakage.max(part.norm_squared());
                }
            }
            Ok(())
        },
    )
    .unwrap();
    report
}

/// Norm drift of a default-tolerance run over `periods` periods.
pub fn norm_drift(model: &Model, law: &DrivingLaw, omega: f64, periods: f64) -> f64 {
    let grid = model
        .observation_grid(law, ParityBlock::EVEN_EVEN, 64, false)
        .unwrap();
    let state = grid.state_of_label(4).unwrap();
    let mut config = PropagationConfig::new(omega, periods);
    config.rel_tol = DEFAULT_REL_TOL;
    propagate(
        model.block(ParityBlock::EVEN_EVEN),
        &grid,
        model.basis.cutoff,
        state,
        &config,
    )
    .unwrap()
    .norm_drift
}

/// Smallest `|⟨4|U(0)|4⟩|²` over the three laws and `omegas`.
pub fn min_initial_overlap(model: &Model, omegas: &[f64]) -> (f64, LawKind, f64) {
    let mut worst = (f64::INFINITY, LawKind::AxesRatio, 0.0);
    for kind in LawKind::ALL {
        let law = DrivingLaw::standard(kind);
        let grid = model
            .observation_grid(&law, ParityBlock::EVEN_EVEN, 8, false)
            .unwrap();
        let state = grid.state_of_label(4).unwrap();
        for &w in omegas {
            let (_, overlap) = grid
                .prepare_initial(state, w, InitMode::EnergyEigenstate)
                .unwrap();
            if overlap < worst.0 {
                worst = (overlap, kind, w);
            }
        }
    }
    worst
}

pub struct FourierChecks {
    /// `max |F_l^{nm} − conj(F_{−l}^{mn})|`, likewise for `D`.
    pub conjugation: f64,
    /// `max |F_0^{nn}(ω_1) − F_0^{nn}(ω_2)|`.
    pub omega_dependence: f64,
}

pub fn fourier_checks(model: &Model, kind: LawKind) -> FourierChecks {
    let law = DrivingLaw::standard(kind);
    let p = model.predictor(&law, ParityBlock::EVEN_EVEN, 1024).unwrap();
    let states = p.candidates.min(6);
    let l_max = 6;
    let mut out = FourierChecks {
        conjugation: 0.0,
        omega_dependence: 0.0,
    };
    for n in 0..states {
        let a = p.fourier_coeffs(n, n, 1.3, l_max).unwrap().f(0);
        let b = p.fourier_coeffs(n, n, 11.7, l_max).unwrap().f(0);
        out.omega_dependence = out.omega_dependence.max((a - b).norm());
        for m in 0..states {
            if m == n {
                continue;
            }
            let nm = p.fourier_coeffs(n, m, 4.2, l_max).unwrap();
            let mn = p.fourier_coeffs(m, n, 4.2, l_max).unwrap();
            for l in -(l_max as i64)..=l_max as i64 {
                out.conjugation = out
                    .conjugation
                    .max((nm.f(l) - mn.f(-l).conj()).norm())
                    .max((nm.d(l) - mn.d(-l).conj()).norm());
            }
        }
    }
    out
}

/// Largest `|D_l^{nm}|` and raw non-adiabatic sample for the ratio law.
pub fn ratio_law_nonadiabatic(model: &Model) -> f64 {
    let law = DrivingLaw::standard(LawKind::AxesRatio);
    let p = model.predictor(&law, ParityBlock::EVEN_EVEN, 256).unwrap();
    let mut worst = 0.0f64;
    for n in 0..p.candidates {
        for m in 0..p.candidates {
            if n == m {
                continue;
            }
            for v in p.nonadiabatic_series(n, m).unwrap() {
                worst = worst.max(v.norm());
            }
            let c = p.fourier_coeffs(n, m, 5.0, 8).unwrap();
            for l in -8..=8 {
                worst = worst.max(c.d(l).norm());
            }
        }
    }
    worst
}
