//! Stochastic approximation: mixing-time windows, stepsize admissibility,
//! bound envelopes, drift and iterate-drift inequalities, and deterministic
//! trial aggregation.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use seminorm_sa::instances::{scalar_problem, two_state_chain};
use seminorm_sa::lyapunov::solve_continuous;
use seminorm_sa::markov::MarkovChain;
use seminorm_sa::sa::{
    bound_envelope, burn_in, check_condition1, check_condition_linear, drift_check, mixing_times,
    run_linear_sa, run_sa, BoundConstants, EnvelopeParams, LinearSaInstance, RunOptions,
};
use seminorm_sa::schedule::StepsizeSchedule;

#[test]
fn mixing_times_monotone_and_burn_in() {
    let chain = two_state_chain(0.3, 0.3).unwrap();
    let sched = StepsizeSchedule::Linear { alpha: 1.0, h: 2.0 };
    let t_ks = mixing_times(&chain, &sched, 200).unwrap();
    assert_eq!(t_ks.len(), 201);
    for w in t_ks.windows(2) {
        assert!(w[0] <= w[1], "t_k must be non-decreasing for decreasing alpha");
    }
    let k = burn_in(&t_ks).unwrap();
    assert!(k >= t_ks[k]);
    for j in 0..k {
        assert!(j < t_ks[j]);
    }
}

#[test]
fn condition_check_passes_small_steps_and_fails_large() {
    let problem = scalar_problem(0.2).unwrap();
    let consts = BoundConstants::for_problem(&problem).unwrap();
    let tiny = StepsizeSchedule::Constant { alpha: 1e-6 };
    assert!(check_condition1(&tiny, &problem.chain, &consts, 1_000)
        .unwrap()
        .pass);
    let big = StepsizeSchedule::Constant { alpha: 0.3 };
    let rep = check_condition1(&big, &problem.chain, &consts, 1_000).unwrap();
    assert!(!rep.pass);
    assert!(rep.first_violation.is_some());
    // Linear-recursion variant with explicit constants.
    assert!(
        check_condition_linear(&tiny, &problem.chain, 2.0, 0.5, 1_000)
            .unwrap()
            .pass
    );
}

#[test]
fn envelope_closed_forms_dominate_exact_recursion() {
    let chain = two_state_chain(0.3, 0.3).unwrap();
    let params = EnvelopeParams {
        init: 4.0,
        decay: 0.3,
        noise: 10.0,
    };
    let horizon = 5_000usize;
    let schedules = [
        StepsizeSchedule::Constant { alpha: 1e-3 },
        StepsizeSchedule::Linear {
            alpha: 2.0 / 0.3,
            h: 5_000.0,
        },
        StepsizeSchedule::Polynomial {
            alpha: 0.05,
            h: 500.0,
            xi: 0.6,
        },
    ];
    for sched in schedules {
        let env = bound_envelope(&params, &sched, &chain, horizon, true).unwrap();
        assert!(env.closed_valid);
        for k in env.k_start..=horizon {
            assert!(
                env.closed[k] >= env.exact[k] * (1.0 - 1e-9),
                "closed form below exact recursion at k={k}"
            );
            assert!(env.exact[k].is_finite() && env.exact[k] >= 0.0);
        }
    }
}

#[test]
fn linear_closed_form_requires_large_stepsize_constant() {
    let chain = two_state_chain(0.3, 0.3).unwrap();
    let params = EnvelopeParams {
        init: 1.0,
        decay: 0.3,
        noise: 1.0,
    };
    // alpha * decay <= 1: no valid closed form, exact still defined.
    let sched = StepsizeSchedule::Linear { alpha: 1.0, h: 10.0 };
    let env = bound_envelope(&params, &sched, &chain, 100, true).unwrap();
    assert!(!env.closed_valid);
    assert!(env.closed[env.k_start].is_nan());
    assert!(env.exact[100].is_finite());
}

#[test]
fn drift_inequality_holds_at_post_burn_in_step() {
    let problem = scalar_problem(0.2).unwrap();
    let sched = StepsizeSchedule::Constant { alpha: 1e-4 };
    let t_ks = mixing_times(&problem.chain, &sched, 200).unwrap();
    let k = burn_in(&t_ks).unwrap() + 5;
    let report = drift_check(&problem, &sched, k, 4_000, 33).unwrap();
    assert!(report.pass, "lhs {} vs rhs {}", report.lhs_mean, report.rhs);
    // Pre-burn-in indices are rejected.
    assert!(drift_check(&problem, &sched, 0, 10, 33).is_err());
}

#[test]
fn iterate_drift_window_bounds_hold_pathwise() {
    // Whenever the window stepsize sum is at most 1/(4A), the in-window
    // drift is bounded by 2 alpha_sum (A p(x_k1) + B) and by
    // 4 alpha_sum (A p(x_k2) + B).
    let problem = scalar_problem(0.3).unwrap();
    let a_const = problem.a_const();
    let b_const = problem.b_const();
    let alpha = 0.01f64;
    let window = ((1.0 / (4.0 * a_const)) / alpha).floor() as usize;
    assert!(window >= 2);
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let mut y = problem.chain.sample_stationary(&mut rng);
    let mut x = problem.x0.clone();
    let mut xs = vec![x.clone()];
    for _ in 0..500 {
        let mut drive = (problem.f)(&x, y) - &x;
        if let Some(noise) = &problem.noise {
            drive += noise(&x, y, &mut rng);
        }
        x += alpha * drive;
        y = problem.chain.sample_next(y, &mut rng);
        xs.push(x.clone());
    }
    let alpha_sum = alpha * window as f64;
    assert!(alpha_sum <= 1.0 / (4.0 * a_const) + 1e-12);
    for k1 in (0..xs.len() - window).step_by(17) {
        let k2 = k1 + window;
        let p1 = problem.p_c.eval(&xs[k1]);
        let p2 = problem.p_c.eval(&xs[k2]);
        for k in k1..=k2 {
            let drift = problem.p_c.eval(&(&xs[k] - &xs[k1]));
            assert!(
                drift <= 2.0 * alpha_sum * (a_const * p1 + b_const) + 1e-12,
                "forward drift bound violated at k1={k1}, k={k}"
            );
            assert!(
                drift <= 4.0 * alpha_sum * (a_const * p2 + b_const) + 1e-12,
                "backward drift bound violated at k1={k1}, k={k}"
            );
        }
    }
}

#[test]
fn runs_are_seed_deterministic() {
    let problem = scalar_problem(0.2).unwrap();
    let opts = RunOptions {
        horizon: 300,
        n_trials: 40,
        seed: 5,
        keep_traces: true,
    };
    let sched = StepsizeSchedule::Constant { alpha: 0.05 };
    let r1 = run_sa(&problem, sched, &opts);
    let r2 = run_sa(&problem, sched, &opts);
    assert_eq!(r1.mean_sq, r2.mean_sq);
    assert_eq!(r1.se_sq, r2.se_sq);
    assert_eq!(r1.traces.len(), 40);
    // First recorded error is the deterministic initial condition.
    let e0 = problem.p_c.eval(&(&problem.x0 - &problem.x_star));
    assert_eq!(r1.mean_sq[0], e0 * e0);
    // A different seed changes the data.
    let r3 = run_sa(
        &problem,
        sched,
        &RunOptions {
            seed: 6,
            ..opts
        },
    );
    assert_ne!(r1.mean_sq[10], r3.mean_sq[10]);
}

fn small_linear_instance() -> LinearSaInstance {
    let a_bar = DMatrix::from_row_slice(2, 2, &[-1.0, 0.2, 0.0, -0.8]);
    let delta = DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.05, -0.1]);
    let a_mats = vec![&a_bar + &delta, &a_bar - &delta];
    let b_vecs = vec![
        DVector::from_vec(vec![1.0, 0.0]),
        DVector::from_vec(vec![0.0, 1.0]),
    ];
    let chain = two_state_chain(0.5, 0.5).unwrap();
    let cert = solve_continuous(&a_bar, &DMatrix::identity(2, 2)).unwrap();
    LinearSaInstance::new(
        a_mats,
        b_vecs,
        chain,
        &cert,
        DVector::from_vec(vec![2.0, -1.0]),
    )
    .unwrap()
}

#[test]
fn linear_instance_solves_mean_fixed_point() {
    let inst = small_linear_instance();
    let resid = (&inst.a_bar * &inst.x_star + &inst.b_bar).norm();
    assert!(resid <= 1e-12);
    assert!(inst.l1 > 0.0 && inst.l2 > 0.0 && inst.c2_prime > 0.0);
}

#[test]
fn linear_sa_converges_toward_target() {
    let inst = small_linear_instance();
    let opts = RunOptions {
        horizon: 4_000,
        n_trials: 50,
        seed: 11,
        keep_traces: false,
    };
    let sched = StepsizeSchedule::Linear { alpha: 4.0, h: 50.0 };
    let run = run_linear_sa(&inst, sched, &opts);
    assert_eq!(run.n_diverged, 0);
    let early = run.mean_sq[0];
    let late = run.mean_sq[opts.horizon - 1];
    assert!(
        late < early / 50.0,
        "no convergence: early {early}, late {late}"
    );
}

#[test]
fn linear_instance_rejects_non_invariant_dynamics() {
    // Certificate kernel E = span{e1}; the base system leaves E invariant,
    // but the sampled dynamics map e1 off E.
    let a_sys = DMatrix::from_row_slice(2, 2, &[-1.0, 0.2, 0.0, -0.5]);
    let q = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
    let cert = solve_continuous(&a_sys, &q).unwrap();
    let bad = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 5.0, -0.5]);
    let chain = two_state_chain(0.5, 0.5).unwrap();
    let res = LinearSaInstance::new(
        vec![bad.clone(), bad],
        vec![DVector::zeros(2), DVector::zeros(2)],
        chain,
        &cert,
        DVector::zeros(2),
    );
    assert!(res.is_err());
}

#[test]
fn schedule_validation_and_partial_sums() {
    assert!(StepsizeSchedule::Constant { alpha: 0.0 }.validate().is_err());
    assert!(StepsizeSchedule::Linear { alpha: 1.0, h: -1.0 }.validate().is_err());
    assert!(StepsizeSchedule::Polynomial {
        alpha: 1.0,
        h: 1.0,
        xi: 1.5
    }
    .validate()
    .is_err());
    let s = StepsizeSchedule::Constant { alpha: 0.25 };
    assert!((s.partial_sum(3, 6) - 4.0 * 0.25).abs() < 1e-15);
    let lin = StepsizeSchedule::Linear { alpha: 2.0, h: 1.0 };
    let direct: f64 = (2..=5).map(|k| 2.0 / (k as f64 + 1.0)).sum();
    assert!((lin.partial_sum(2, 5) - direct).abs() < 1e-12);
}

#[test]
fn mixing_time_cap_is_enforced() {
    // A chain mixing too slowly for an extreme accuracy triggers the cap.
    let chain = MarkovChain::new(DMatrix::from_row_slice(
        2,
        2,
        &[1.0 - 1e-6, 1e-6, 1e-6, 1.0 - 1e-6],
    ))
    .unwrap();
    let sched = StepsizeSchedule::Constant { alpha: 1e-300 };
    assert!(mixing_times(&chain, &sched, 1).is_err());
}
