//! Acceptance suite: one test per criterion, each printing a single
//! pass/fail line with the measured value and pinned threshold.

use seminorm_sa::acceptance as acc;

const SEED: u64 = 17;

fn check(report: acc::CriterionReport) {
    println!("{}", report.line());
    assert!(report.pass, "{}", report.line());
}

#[test]
fn criterion_01_seminorm_axioms() {
    check(acc::criterion_seminorm_axioms(SEED));
}

#[test]
fn criterion_02_exact_two_dim_iteration() {
    check(acc::criterion_exact_two_dim());
}

#[test]
fn criterion_03_lyapunov_random_instances() {
    check(acc::criterion_lyapunov_instances(SEED));
}

#[test]
fn criterion_04_certificate_contraction() {
    check(acc::criterion_certificate_contraction(SEED));
}

#[test]
fn criterion_05_two_state_mixing() {
    check(acc::criterion_two_state_mixing());
}

#[test]
fn criterion_06_sa_envelope_soundness() {
    check(acc::criterion_envelope_soundness(SEED));
}

#[test]
fn criterion_07_one_over_k_rate() {
    check(acc::criterion_rate_slope(SEED));
}

#[test]
fn criterion_08_constant_step_plateau() {
    check(acc::criterion_plateau_ratio(SEED));
}

#[test]
fn criterion_09_td_solution_set() {
    check(acc::criterion_td_solution_set(SEED));
}

#[test]
fn criterion_10_q_star_oracle() {
    check(acc::criterion_q_star_oracle(SEED));
}

#[test]
fn criterion_11_moreau_sandwich() {
    check(acc::criterion_moreau_sandwich(SEED));
}

#[test]
fn criterion_12_gd_contraction_factors() {
    check(acc::criterion_gd_factors(SEED));
}
