//! Finite Markov chains: stationarity, exact TV mixing curves, ergodicity
//! envelopes, and seeded sampling.

use nalgebra::{DMatrix, DVector};
use seminorm_sa::instances::two_state_chain;
use seminorm_sa::markov::{chain_from_csv, stationary, tv_distance, MarkovChain, TvCurve};
use seminorm_sa::Error;

#[test]
fn two_state_stationary_closed_form() {
    let (a, b) = (0.2, 0.5);
    let chain = two_state_chain(a, b).unwrap();
    assert!((chain.stationary[0] - b / (a + b)).abs() < 1e-12);
    assert!((chain.stationary[1] - a / (a + b)).abs() < 1e-12);
}

#[test]
fn stationary_is_fixed_point() {
    let p = DMatrix::from_row_slice(
        3,
        3,
        &[0.5, 0.3, 0.2, 0.1, 0.6, 0.3, 0.25, 0.25, 0.5],
    );
    let mu = stationary(&p).unwrap();
    assert!((p.transpose() * &mu - &mu).abs().max() < 1e-12);
    assert!((mu.sum() - 1.0).abs() < 1e-12);
}

#[test]
fn tv_distance_basics() {
    let m1 = DVector::from_vec(vec![1.0, 0.0]);
    let m2 = DVector::from_vec(vec![0.0, 1.0]);
    assert!((tv_distance(&m1, &m2).unwrap() - 1.0).abs() < 1e-15);
    assert_eq!(tv_distance(&m1, &m1).unwrap(), 0.0);
    assert!(tv_distance(&m1, &DVector::from_vec(vec![1.0, 0.0, 0.0])).is_err());
}

#[test]
fn two_state_tv_curve_is_exact_geometric() {
    // From a point start, TV(k) = 0.5 |1 - a - b|^k for the two-state chain.
    let (a, b) = (0.3, 0.3);
    let chain = two_state_chain(a, b).unwrap();
    let mut curve = TvCurve::new(&chain);
    for k in 0..20 {
        let expect = 0.5 * (1.0f64 - a - b).abs().powi(k as i32);
        assert!((curve.tv(k) - expect).abs() <= 1e-12);
    }
}

#[test]
fn tv_curve_monotone_and_mixing_times_monotone() {
    let p = DMatrix::from_row_slice(
        3,
        3,
        &[0.6, 0.3, 0.1, 0.2, 0.5, 0.3, 0.1, 0.4, 0.5],
    );
    let chain = MarkovChain::new(p).unwrap();
    let mut curve = TvCurve::new(&chain);
    for k in 0..50 {
        assert!(curve.tv(k + 1) <= curve.tv(k) + 1e-12);
    }
    let table = chain.mixing_table(&[0.2, 0.1, 0.01, 0.001]).unwrap();
    for w in table.entries.windows(2) {
        assert!(w[0].1 <= w[1].1, "mixing time not monotone in accuracy");
    }
}

#[test]
fn ergodicity_envelope_covers_tv_curve() {
    let chain = two_state_chain(0.25, 0.4).unwrap();
    let mut curve = TvCurve::new(&chain);
    for k in 0..200 {
        assert!(
            curve.tv(k) <= chain.c_erg * chain.rho.powi(k as i32) + 1e-12,
            "envelope violated at k={k}"
        );
    }
    assert!(chain.rho < 1.0);
}

#[test]
fn chapman_kolmogorov_consistency() {
    // TV at 2k computed from the curve equals TV computed from (P^k)^2.
    let chain = two_state_chain(0.3, 0.15).unwrap();
    let mut curve = TvCurve::new(&chain);
    for k in [1usize, 3, 7] {
        let mut pk = DMatrix::identity(2, 2);
        for _ in 0..k {
            pk = &pk * &chain.p;
        }
        let p2k = &pk * &pk;
        let mut worst: f64 = 0.0;
        for i in 0..2 {
            let row = p2k.row(i).transpose();
            worst = worst.max(tv_distance(&row, &chain.stationary).unwrap());
        }
        assert!((curve.tv(2 * k) - worst).abs() <= 1e-12);
    }
}

#[test]
fn invalid_and_non_ergodic_matrices_are_rejected() {
    // Not row-stochastic.
    let bad = DMatrix::from_row_slice(2, 2, &[0.9, 0.3, 0.5, 0.5]);
    assert!(matches!(
        MarkovChain::new(bad),
        Err(Error::BadStochasticMatrix(_))
    ));
    // Periodic flip chain never mixes.
    let flip = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    assert!(MarkovChain::new(flip).is_err());
    // Reducible chain.
    let red = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
    assert!(MarkovChain::new(red).is_err());
}

#[test]
fn sample_path_is_seed_deterministic_and_valid() {
    let chain = two_state_chain(0.3, 0.6).unwrap();
    let p1 = chain.sample_path(0, 500, 99).unwrap();
    let p2 = chain.sample_path(0, 500, 99).unwrap();
    assert_eq!(p1, p2);
    let p3 = chain.sample_path(0, 500, 100).unwrap();
    assert_ne!(p1, p3);
    assert!(p1.iter().all(|&s| s < 2));
    assert!(chain.sample_path(5, 10, 0).is_err());
}

#[test]
fn long_run_frequencies_approach_stationary() {
    let chain = two_state_chain(0.2, 0.5).unwrap();
    let path = chain.sample_path(0, 200_000, 7).unwrap();
    let freq1 = path.iter().filter(|&&s| s == 1).count() as f64 / path.len() as f64;
    assert!((freq1 - chain.stationary[1]).abs() < 0.01);
}

#[test]
fn csv_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("chain.csv");
    std::fs::write(&path, "0.7,0.3\n0.4,0.6\n").unwrap();
    let chain = chain_from_csv(&path).unwrap();
    assert_eq!(chain.n_states(), 2);
    assert!((chain.p[(0, 1)] - 0.3).abs() < 1e-15);
}
