//! Spectral decompositions: invariant splits, the matrix exponential, and
//! the constructed contraction seminorm.

use nalgebra::DMatrix;
use seminorm_sa::instances::random_system;
use seminorm_sa::linalg;
use seminorm_sa::seminorm::{verify_contraction, Operator};
use seminorm_sa::spectral::{
    decompose, expm, jordan_seminorm, operator_norm2, unstable_subspace, Mode,
};
use seminorm_sa::Error;

#[test]
fn decompose_recovers_rotation_eigenvalues() {
    let a = DMatrix::from_row_slice(2, 2, &[0.3, -0.4, 0.4, 0.3]);
    let sys = decompose(&a).unwrap();
    let mut mods: Vec<f64> = sys.eigenvalues.iter().map(|l| l.norm()).collect();
    mods.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let expect = (0.3f64 * 0.3 + 0.4 * 0.4).sqrt();
    for m in mods {
        assert!((m - expect).abs() < 1e-12);
    }
}

#[test]
fn expm_matches_closed_forms() {
    // Diagonal.
    let a = DMatrix::from_partial_diagonal(3, 3, &[1.0, -2.0, 0.5]);
    let e = expm(&a);
    for (i, &l) in [1.0f64, -2.0, 0.5].iter().enumerate() {
        assert!((e[(i, i)] - l.exp()).abs() <= 1e-13 * l.exp());
    }
    // Rotation block: expm([[0,-w],[w,0]]) = [[cos w, -sin w],[sin w, cos w]].
    let w = 0.7f64;
    let r = expm(&DMatrix::from_row_slice(2, 2, &[0.0, -w, w, 0.0]));
    let expect = DMatrix::from_row_slice(2, 2, &[w.cos(), -w.sin(), w.sin(), w.cos()]);
    assert!((r - expect).norm() <= 1e-13);
    // Zero matrix.
    assert!((expm(&DMatrix::zeros(4, 4)) - DMatrix::identity(4, 4)).norm() == 0.0);
}

#[test]
fn invariant_split_is_invariant_and_complementary() {
    for mode in [Mode::Discrete, Mode::Continuous] {
        for seed in 0..30u64 {
            let inst = random_system(mode, seed);
            let sys = decompose(&inst.a).unwrap();
            let split = unstable_subspace(&sys, mode).unwrap();
            let d = inst.dim;
            assert_eq!(
                split.stable_basis.ncols() + split.unstable_basis.ncols(),
                d
            );
            assert_eq!(split.unstable_basis.ncols(), inst.n_unstable);
            let scale = 1.0 + inst.a.norm();
            for b in [&split.stable_basis, &split.unstable_basis] {
                if b.ncols() > 0 {
                    let resid =
                        ((DMatrix::identity(d, d) - linalg::projector(b)) * &inst.a * b).norm();
                    assert!(resid <= 1e-8 * scale, "invariance residual {resid}");
                }
            }
        }
    }
}

#[test]
fn continuous_split_matches_discrete_split_of_exponential() {
    for seed in 100..115u64 {
        let inst = random_system(Mode::Continuous, seed);
        let sys = decompose(&inst.a).unwrap();
        let split_c = unstable_subspace(&sys, Mode::Continuous).unwrap();
        let e_sys = decompose(&expm(&inst.a)).unwrap();
        let split_d = unstable_subspace(&e_sys, Mode::Discrete).unwrap();
        assert!(linalg::same_subspace(
            &split_c.unstable_basis,
            &split_d.unstable_basis,
            1e-6
        ));
    }
}

#[test]
fn exact_boundary_eigenvalue_counts_as_unstable() {
    let a = DMatrix::from_partial_diagonal(2, 2, &[1.0, 0.5]);
    let sys = decompose(&a).unwrap();
    let split = unstable_subspace(&sys, Mode::Discrete).unwrap();
    assert_eq!(split.unstable_basis.ncols(), 1);
    assert!((split.unstable_basis[(0, 0)].abs() - 1.0).abs() < 1e-12);
}

#[test]
fn near_boundary_eigenvalue_is_rejected() {
    let a = DMatrix::from_partial_diagonal(2, 2, &[1.0 + 1e-10, 0.5]);
    let sys = decompose(&a).unwrap();
    assert!(matches!(
        unstable_subspace(&sys, Mode::Discrete),
        Err(Error::BoundaryEigenvalue { .. })
    ));
}

#[test]
fn contraction_seminorm_certificate_holds() {
    for seed in 200..230u64 {
        let inst = random_system(Mode::Discrete, seed);
        let sys = decompose(&inst.a).unwrap();
        let js = jordan_seminorm(&sys, &inst.e_basis, None).unwrap();
        assert!(js.predicted_gamma < 1.0);
        assert!(js.sigma <= js.predicted_gamma + 1e-12);
        let est = verify_contraction(
            &Operator::Linear(inst.a.clone()),
            &js.seminorm,
            2_000,
            seed,
        );
        assert!(
            est.gamma_hat <= js.predicted_gamma * (1.0 + 1e-6),
            "measured {} exceeds predicted {}",
            est.gamma_hat,
            js.predicted_gamma
        );
        // E is annihilated relative to the seminorm's own scale. (The
        // Jordan-style rescaling can make the quadratic form astronomically
        // ill-conditioned, so only the scale-relative statement is
        // numerically meaningful; evaluating x'Px itself carries sqrt(eps)
        // relative noise, hence the 1e-7 floor.)
        let p_mat = js.seminorm.quadratic_matrix().unwrap();
        let p_scale = p_mat.norm().sqrt();
        for j in 0..inst.e_basis.ncols() {
            let col = inst.e_basis.column(j).into_owned();
            assert!(js.seminorm.eval(&col) <= 1e-7 * p_scale);
        }
        // ... and the complement is not: a generic complement direction has
        // a strictly positive value.
        let u = linalg::complement_basis(&inst.e_basis);
        for j in 0..u.ncols() {
            let col = u.column(j).into_owned();
            assert!(js.seminorm.eval(&col) > 0.0);
        }
    }
}

#[test]
fn contraction_seminorm_requires_quotient_stability() {
    // Expanding map with empty kernel: no contraction seminorm exists.
    let a = DMatrix::from_partial_diagonal(2, 2, &[1.2, 0.5]);
    let sys = decompose(&a).unwrap();
    assert!(jordan_seminorm(&sys, &DMatrix::zeros(2, 0), None).is_err());
}

#[test]
fn operator_norm_matches_known_values() {
    let a = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, -4.0]);
    assert!((operator_norm2(&a) - 4.0).abs() < 1e-12);
    let r = DMatrix::from_row_slice(2, 2, &[0.0, -2.0, 2.0, 0.0]);
    assert!((operator_norm2(&r) - 2.0).abs() < 1e-12);
}
