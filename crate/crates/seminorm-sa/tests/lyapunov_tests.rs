//! Lyapunov solves with prescribed kernels: independent oracles, residuals,
//! uniqueness, the contraction factor, and the five-way stability verdict.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use seminorm_sa::instances::random_system;
use seminorm_sa::linalg;
use seminorm_sa::lyapunov::{
    contraction_factor_from_certificate, quadrature_oracle_continuous, random_q_with_kernel,
    series_oracle_discrete, solve_continuous, solve_discrete, stability_verdict,
};
use seminorm_sa::spectral::Mode;

fn random_stable(d: usize, seed: u64, continuous: bool) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = g.qr().q();
    let eigs: Vec<f64> = (0..d)
        .map(|_| {
            if continuous {
                -rng.gen_range(0.2..1.5)
            } else {
                let m = rng.gen_range(0.1..0.8);
                if rng.gen_bool(0.5) {
                    m
                } else {
                    -m
                }
            }
        })
        .collect();
    &q * DMatrix::from_partial_diagonal(d, d, &eigs) * q.transpose()
}

#[test]
fn discrete_solution_matches_truncated_series() {
    for seed in 0..10u64 {
        let a = random_stable(5, seed, false);
        let q = random_q_with_kernel(5, &DMatrix::zeros(5, 0), seed ^ 99);
        let cert = solve_discrete(&a, &q).unwrap();
        // Geometric decay of the truncation error in the number of terms.
        let p200 = series_oracle_discrete(&a, &q, 200);
        let p100 = series_oracle_discrete(&a, &q, 100);
        let err200 = (&cert.p - &p200).norm() / cert.p.norm();
        let err100 = (&cert.p - &p100).norm() / cert.p.norm();
        assert!(err200 <= 1e-7, "series disagreement {err200}");
        assert!(err200 <= err100 + 1e-13);
        assert!(cert.residual <= 1e-8 * (1.0 + q.norm()));
        assert!(cert.c2_prime > 0.0);
    }
}

#[test]
fn continuous_solution_matches_quadrature() {
    for seed in 20..28u64 {
        let a = random_stable(4, seed, true);
        let q = random_q_with_kernel(4, &DMatrix::zeros(4, 0), seed ^ 7);
        let cert = solve_continuous(&a, &q).unwrap();
        let p_quad = quadrature_oracle_continuous(&a, &q, 60.0, 4_000);
        let rel = (&cert.p - &p_quad).norm() / cert.p.norm();
        assert!(rel <= 1e-7, "quadrature disagreement {rel}");
    }
}

#[test]
fn kernel_of_solution_equals_kernel_of_rhs() {
    for mode in [Mode::Discrete, Mode::Continuous] {
        for seed in 40..55u64 {
            let inst = random_system(mode, seed);
            let q = random_q_with_kernel(inst.dim, &inst.e_basis, seed ^ 3);
            let cert = match mode {
                Mode::Discrete => solve_discrete(&inst.a, &q).unwrap(),
                Mode::Continuous => solve_continuous(&inst.a, &q).unwrap(),
            };
            assert!(linalg::same_subspace(
                &linalg::null_basis(&cert.p),
                &inst.e_basis,
                1e-8
            ));
            assert!(cert.uniqueness_gap <= 1e-7);
            assert!(cert.residual <= 1e-8 * (1.0 + q.norm()));
        }
    }
}

#[test]
fn contraction_factor_in_unit_interval_and_discrete_only() {
    let a = random_stable(4, 60, false);
    let q = random_q_with_kernel(4, &DMatrix::zeros(4, 0), 61);
    let cert = solve_discrete(&a, &q).unwrap();
    let g = contraction_factor_from_certificate(&cert).unwrap();
    assert!((0.0..1.0).contains(&g));
    let ac = random_stable(4, 62, true);
    let cc = solve_continuous(&ac, &q).unwrap();
    assert!(contraction_factor_from_certificate(&cc).is_err());
}

#[test]
fn verdict_unanimous_true_for_full_unstable_kernel() {
    let a = DMatrix::from_partial_diagonal(3, 3, &[2.0, 1.5, 0.5]);
    let e = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    let v = stability_verdict(&a, &e, Mode::Discrete).unwrap();
    assert!(v.unanimous() && v.verdict(), "verdict {:?}", v.all());
}

#[test]
fn verdict_unanimous_false_when_dropping_an_unstable_direction() {
    let a = DMatrix::from_partial_diagonal(3, 3, &[2.0, 1.5, 0.5]);
    // E misses the second unstable direction.
    let e = DMatrix::from_row_slice(3, 1, &[1.0, 0.0, 0.0]);
    let v = stability_verdict(&a, &e, Mode::Discrete).unwrap();
    assert!(v.unanimous() && !v.verdict(), "verdict {:?}", v.all());
}

#[test]
fn unstable_system_with_trivial_kernel_has_no_certificate() {
    let a = DMatrix::from_partial_diagonal(2, 2, &[0.5, 2.0]);
    let q = random_q_with_kernel(2, &DMatrix::zeros(2, 0), 70);
    assert!(solve_discrete(&a, &q).is_err());
    let v = stability_verdict(&a, &DMatrix::zeros(2, 0), Mode::Discrete).unwrap();
    assert!(v.unanimous() && !v.verdict());
}

#[test]
fn certificate_seminorm_has_kernel_e() {
    let inst = random_system(Mode::Discrete, 80);
    let q = random_q_with_kernel(inst.dim, &inst.e_basis, 81);
    let cert = solve_discrete(&inst.a, &q).unwrap();
    let p = cert.seminorm().unwrap();
    assert!(linalg::same_subspace(p.kernel_basis(), &inst.e_basis, 1e-7));
}
