mod common;

use common::*;
use driven_billiard::basis::bessel::ROOT_TOLERANCE;
use driven_billiard::basis::ParityBlock;
use driven_billiard::driving::{DrivingLaw, LawKind};
use driven_billiard::model::Model;
use driven_billiard::propagator::OVERLAP_FLOOR;
use driven_billiard::spectrum::RESIDUAL_TOLERANCE;

#[test]
fn bessel_roots_are_zeros() {
    assert!(root_residual(40.0) <= ROOT_TOLERANCE);
}

#[test]
fn basis_is_orthonormal_on_the_disc() {
    let d = gram_defect(15.0);
    assert!(d <= 1e-9, "gram defect {d:e}");
}

#[test]
fn mathieu_operator_is_symmetric_with_accurate_eigenpairs() {
    for parity in ParityBlock::ALL {
        let ops = block_ops(30.0, parity);
        assert_eq!(mathieu_asymmetry(&ops), 0.0);
        for r in [0.714, 0.9, 1.4] {
            let res = eigen_residual(&ops, r);
            assert!(res <= RESIDUAL_TOLERANCE, "{parity} r={r}: {res:e}");
        }
    }
}

#[test]
fn eigenvector_derivatives_match_finite_differences() {
    let ops = block_ops(20.0, ParityBlock::EVEN_EVEN);
    for r in [0.6, 0.714, 0.85] {
        let (diag, off) = derivative_checks(&ops, r, 8);
        assert!(diag <= 1e-8, "r={r}: <n|d_r n> = {diag:e}");
        assert!(off <= 1e-6, "r={r}: off-diagonal mismatch {off:e}");
    }
}

#[test]
fn fourier_coefficients_have_conjugation_symmetry() {
    let model = Model::new(25.0, None).unwrap();
    for kind in [LawKind::Breathing, LawKind::VolumePreserving] {
        let c = fourier_checks(&model, kind);
        assert!(c.conjugation <= 1e-10, "{kind}: {:e}", c.conjugation);
        assert!(c.omega_dependence <= 1e-10, "{kind}: {:e}", c.omega_dependence);
    }
}

#[test]
fn ratio_law_has_no_nonadiabatic_coupling() {
    let model = Model::new(25.0, None).unwrap();
    assert_eq!(ratio_law_nonadiabatic(&model), 0.0);
}

#[test]
fn parity_blocks_do_not_leak() {
    let law = DrivingLaw::standard(LawKind::Breathing);
    let r = leakage(11.0, &law, 5.0, 10);
    assert!(r.leakage <= 1e-10, "leakage {:e}", r.leakage);
    assert!(r.block_mismatch <= 1e-7, "block mismatch {:e}", r.block_mismatch);
}

#[test]
fn norm_is_conserved_over_a_hundred_periods() {
    let model = Model::new(20.0, None).unwrap();
    let law = DrivingLaw::standard(LawKind::VolumePreserving);
    let drift = norm_drift(&model, &law, 6.0, 100.0);
    assert!(drift <= 1e-6, "drift {drift:e}");
}

#[test]
fn initial_states_overlap_with_mathieu_eigenstates() {
    let model = Model::new(25.0, None).unwrap();
    let (worst, kind, omega) = min_initial_overlap(&model, &[0.25, 1.0, 2.0, 4.0, 8.0, 12.0, 16.0]);
    assert!(worst > OVERLAP_FLOOR, "{kind} at omega={omega}: {worst}");
}
