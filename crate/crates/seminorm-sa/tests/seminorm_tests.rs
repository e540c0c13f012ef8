//! Seminorm algebra: axioms, distance forms, equivalence constants,
//! fixed-point iteration, and gradient-descent contraction factors.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use seminorm_sa::linalg;
use seminorm_sa::lyapunov::random_q_with_kernel;
use seminorm_sa::seminorm::{
    affine_fixed_point, equivalence_constants, fixed_point_iterate, gd_seminorm_operator,
    verify_contraction, BaseNorm, GdMode, Operator, Seminorm,
};
use seminorm_sa::Error;

fn gvec(d: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn sample_seminorms() -> Vec<Seminorm> {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let e = linalg::range_basis(&DMatrix::from_fn(5, 1, |_, _| {
        rng.sample::<f64, _>(StandardNormal)
    }));
    let kern = DMatrix::from_fn(6, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
    vec![
        Seminorm::span(6).unwrap(),
        Seminorm::quadratic(random_q_with_kernel(5, &e, 7)).unwrap(),
        Seminorm::subspace_distance(BaseNorm::Euclidean, 6, &kern).unwrap(),
        Seminorm::subspace_distance(BaseNorm::ScaledSup(1.5), 4, &DMatrix::zeros(4, 0)).unwrap(),
        Seminorm::subspace_distance(BaseNorm::ScaledSup(2.0), 4, &DMatrix::from_element(4, 1, 1.0))
            .unwrap(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]
    #[test]
    fn axioms_hold_on_random_triples(
        xs in proptest::collection::vec(-10.0f64..10.0, 6),
        ys in proptest::collection::vec(-10.0f64..10.0, 6),
        t in -5.0f64..5.0,
    ) {
        for p in sample_seminorms() {
            let d = p.dim();
            let x = DVector::from_iterator(d, xs.iter().take(d).cloned());
            let y = DVector::from_iterator(d, ys.iter().take(d).cloned());
            let px = p.eval(&x);
            let hom = (p.eval(&(t * &x)) - t.abs() * px).abs();
            prop_assert!(hom <= 1e-9 * (1.0 + t.abs() * px));
            let tri = p.eval(&(&x + &y)) - px - p.eval(&y);
            prop_assert!(tri <= 1e-9 * (1.0 + px + p.eval(&y)));
            prop_assert!(p.eval(&DVector::zeros(d)) == 0.0);
        }
    }
}

#[test]
fn positive_definite_on_kernel_complement() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for p in sample_seminorms() {
        let b = linalg::complement_basis(p.kernel_basis());
        for _ in 0..200 {
            let z = gvec(b.ncols(), &mut rng);
            if z.norm() < 1e-3 {
                continue;
            }
            let x = &b * &z;
            assert!(
                p.eval(&x) > 1e-8 * z.norm(),
                "seminorm vanishes off its kernel"
            );
        }
        // And it vanishes on the kernel.
        if p.kernel_basis().ncols() > 0 {
            let k = p.kernel_basis() * gvec(p.kernel_basis().ncols(), &mut rng);
            assert!(p.eval(&k) <= 1e-9 * (1.0 + k.norm()));
        }
    }
}

#[test]
fn distance_form_matches_direct_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for p in sample_seminorms() {
        for _ in 0..300 {
            let x = gvec(p.dim(), &mut rng);
            let direct = p.eval(&x);
            let dist = p.distance_form(&x);
            assert!(
                (direct - dist).abs() <= 1e-9 * (1.0 + direct),
                "distance form {dist} vs direct {direct}"
            );
        }
    }
}

#[test]
fn span_equivalence_constants_are_dimensional() {
    for d in 2..=8usize {
        let p = Seminorm::span(d).unwrap();
        let (lo, hi) = p.norm_equivalence_to_euclidean();
        assert!((lo - 2.0 / (d as f64).sqrt()).abs() < 1e-12);
        assert!((hi - 2.0).abs() < 1e-12);
    }
}

#[test]
fn quadratic_pencil_constants_bound_sampled_ratios() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let e = linalg::range_basis(&DMatrix::from_fn(5, 1, |_, _| {
        rng.sample::<f64, _>(StandardNormal)
    }));
    let p = Seminorm::quadratic(random_q_with_kernel(5, &e, 11)).unwrap();
    let q = Seminorm::subspace_distance(BaseNorm::Euclidean, 5, &e).unwrap();
    let c = equivalence_constants(&p, &q).unwrap();
    assert!(c.c_lower > 0.0 && c.c_lower <= c.c_upper);
    let b = linalg::complement_basis(p.kernel_basis());
    for _ in 0..2_000 {
        let x = &b * gvec(b.ncols(), &mut rng);
        let qv = q.eval(&x);
        if qv > 1e-9 {
            let r = p.eval(&x) / qv;
            assert!(r >= c.c_lower * (1.0 - 1e-9) && r <= c.c_upper * (1.0 + 1e-9));
        }
    }
}

#[test]
fn equivalence_requires_matching_kernels() {
    let p = Seminorm::span(4).unwrap();
    let q = Seminorm::subspace_distance(BaseNorm::Euclidean, 4, &DMatrix::zeros(4, 0)).unwrap();
    assert!(matches!(
        equivalence_constants(&p, &q),
        Err(Error::KernelMismatch)
    ));
}

#[test]
fn json_roundtrip_preserves_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for p in sample_seminorms() {
        let back = Seminorm::from_json(&p.to_json()).unwrap();
        for _ in 0..50 {
            let x = gvec(p.dim(), &mut rng);
            assert!((p.eval(&x) - back.eval(&x)).abs() <= 1e-12 * (1.0 + p.eval(&x)));
        }
    }
}

#[test]
fn affine_fixed_point_is_fixed_modulo_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let e = linalg::range_basis(&DMatrix::from_fn(4, 1, |_, _| {
        rng.sample::<f64, _>(StandardNormal)
    }));
    let p = Seminorm::subspace_distance(BaseNorm::Euclidean, 4, &e).unwrap();
    // Contraction toward the kernel: A = 0.5 (I - ee') + ee'.
    let pi_e = linalg::projector(&e);
    let a = 0.5 * (DMatrix::identity(4, 4) - &pi_e) + &pi_e;
    let b = gvec(4, &mut rng);
    let x_star = affine_fixed_point(&a, &b, &p).unwrap();
    let t_x = &a * &x_star + &b;
    assert!(p.eval(&(&t_x - &x_star)) <= 1e-10 * (1.0 + x_star.norm()));
}

#[test]
fn iteration_errors_decay_by_at_most_gamma_per_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let gamma = 0.8;
    let a = gamma * DMatrix::identity(3, 3);
    let p = Seminorm::span(3).unwrap();
    let x0 = gvec(3, &mut rng);
    let tr = fixed_point_iterate(&Operator::Linear(a), &p, &x0, 30, None).unwrap();
    for k in 0..30 {
        assert!(tr.p_errors[k + 1] <= (gamma + 1e-9) * tr.p_errors[k] + 1e-14);
    }
}

#[test]
fn iteration_flags_non_contraction() {
    let a = DMatrix::from_row_slice(1, 1, &[3.0]);
    let p = Seminorm::quadratic(DMatrix::identity(1, 1)).unwrap();
    let x0 = DVector::from_element(1, 1.0);
    let x_star = DVector::zeros(1);
    let err = fixed_point_iterate(&Operator::Linear(a), &p, &x0, 50, Some(&x_star));
    assert!(matches!(err, Err(Error::Diverged(_))));
}

#[test]
fn sampled_contraction_matches_known_factor() {
    let a = 0.5 * DMatrix::identity(4, 4);
    let p = Seminorm::subspace_distance(BaseNorm::Euclidean, 4, &DMatrix::zeros(4, 0)).unwrap();
    let est = verify_contraction(&Operator::Linear(a), &p, 2_000, 9);
    assert!((est.gamma_hat - 0.5).abs() <= 1e-9);
    assert!(est.witness.is_none());
}

#[test]
fn gd_rejects_inadmissible_stepsizes() {
    let grad = |x: &DVector<f64>| x.clone();
    assert!(matches!(
        gd_seminorm_operator(grad, 3.0, 1.0, 1.0, GdMode::StronglyConvex),
        Err(Error::StepsizeOutOfRange(_))
    ));
    let grad2 = |x: &DVector<f64>| x.clone();
    assert!(matches!(
        gd_seminorm_operator(grad2, 0.0, 1.0, 1.0, GdMode::QuadraticGrowth),
        Err(Error::StepsizeOutOfRange(_))
    ));
}

#[test]
fn gd_predicted_factor_matches_scalar_theory() {
    let (mu, l, alpha) = (1.0, 2.0, 0.2);
    let grad = |x: &DVector<f64>| x.clone();
    let gd = gd_seminorm_operator(grad, alpha, mu, l, GdMode::StronglyConvex).unwrap();
    let expect = (1.0 - 2.0 * alpha * mu + alpha * alpha * l * l).sqrt();
    assert!((gd.predicted_gamma - expect).abs() < 1e-15);
}
