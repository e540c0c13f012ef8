//! Markovian stochastic approximation: the general contractive recursion, the
//! linear recursion, stepsize condition checks, and finite-sample bound
//! envelopes (exact product-sum form and closed-form relaxations).

use crate::error::{Error, Result};
use crate::linalg;
use crate::markov::{MarkovChain, TvCurve};
use crate::moreau::MoreauEnvelope;
use crate::schedule::StepsizeSchedule;
use crate::seminorm::Seminorm;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::sync::Arc;

pub type OperatorOracle = Arc<dyn Fn(&DVector<f64>, usize) -> DVector<f64> + Send + Sync>;
pub type NoiseOracle =
    Arc<dyn Fn(&DVector<f64>, usize, &mut ChaCha8Rng) -> DVector<f64> + Send + Sync>;

/// A seminorm-contractive Markovian SA problem instance.
#[derive(Clone)]
pub struct SAProblem {
    pub dim: usize,
    /// F(x, y).
    pub f: OperatorOracle,
    /// Martingale-difference oracle; must have conditional mean zero by
    /// construction (sign-symmetric / centered sampling).
    pub noise: Option<NoiseOracle>,
    pub chain: MarkovChain,
    pub p_c: Seminorm,
    /// Contraction factor of the expected operator.
    pub gamma: f64,
    pub a1: f64,
    pub b1: f64,
    pub a2: f64,
    pub b2: f64,
    pub x0: DVector<f64>,
    pub x_star: DVector<f64>,
}

impl SAProblem {
    /// A = A1 + A2 + 1.
    pub fn a_const(&self) -> f64 {
        self.a1 + self.a2 + 1.0
    }
    /// B = B1 + B2.
    pub fn b_const(&self) -> f64 {
        self.b1 + self.b2
    }
}

/// Problem-level constants of the finite-sample bound.
#[derive(Debug, Clone)]
pub struct BoundConstants {
    pub phi1: f64,
    pub phi2: f64,
    pub phi3: f64,
    pub theta: f64,
    pub l_cs: f64,
    pub u_cs: f64,
    pub l_cm: f64,
    pub u_cm: f64,
    pub l_smooth: f64,
    pub a_const: f64,
    pub b_const: f64,
    pub c1: f64,
    pub c2: f64,
}

impl BoundConstants {
    pub fn for_problem(problem: &SAProblem) -> Result<Self> {
        let env = MoreauEnvelope::for_contraction(problem.p_c.clone(), problem.gamma)?;
        Self::from_envelope(problem, &env)
    }

    pub fn from_envelope(problem: &SAProblem, env: &MoreauEnvelope) -> Result<Self> {
        let phi1 = env.phi1();
        let g2 = problem.gamma * problem.gamma;
        let phi2 = 0.5 * (1.0 - g2 * phi1);
        if !(phi2 > 0.0) {
            return Err(Error::InvalidInput(format!(
                "phi2 = {phi2} not positive; theta selection failed"
            )));
        }
        let phi3 = 82.0 * env.l_smooth * (1.0 + env.theta * env.u_cs * env.u_cs)
            / (env.theta * env.l_cs * env.l_cs);
        let a_const = problem.a_const();
        let b_const = problem.b_const();
        let p0 = problem.p_c.eval(&problem.x0);
        let e0 = problem.p_c.eval(&(&problem.x0 - &problem.x_star));
        let ps = problem.p_c.eval(&problem.x_star);
        let c1 = (e0 + p0 + b_const / a_const).powi(2);
        let c2 = (a_const * ps + b_const).powi(2);
        Ok(BoundConstants {
            phi1,
            phi2,
            phi3,
            theta: env.theta,
            l_cs: env.l_cs,
            u_cs: env.u_cs,
            l_cm: env.l_cm,
            u_cm: env.u_cm,
            l_smooth: env.l_smooth,
            a_const,
            b_const,
            c1,
            c2,
        })
    }
}

/// t_k = t_{alpha_k} for k = 0..horizon (inclusive), computed with a monotone
/// pointer over the exact TV curve.
pub fn mixing_times(
    chain: &MarkovChain,
    schedule: &StepsizeSchedule,
    horizon: usize,
) -> Result<Vec<usize>> {
    let mut curve = TvCurve::new(chain);
    let mut out = Vec::with_capacity(horizon + 1);
    let mut t = 0usize;
    for k in 0..=horizon {
        let delta = schedule.alpha(k);
        if delta < 1.0 {
            while curve.tv(t) > delta {
                t += 1;
                if t > crate::markov::MIXING_CAP {
                    return Err(Error::MixingTimeCap {
                        cap: crate::markov::MIXING_CAP,
                        delta,
                    });
                }
            }
        }
        out.push(t);
    }
    Ok(out)
}

/// K = min{k : k >= t_k}, or an error if it does not occur within the horizon.
pub fn burn_in(t_ks: &[usize]) -> Result<usize> {
    t_ks.iter()
        .enumerate()
        .find(|(k, &t)| *k >= t)
        .map(|(k, _)| k)
        .ok_or_else(|| Error::InvalidInput("burn-in index exceeds horizon".into()))
}

/// Outcome of the stepsize admissibility check.
#[derive(Debug, Clone)]
pub struct ConditionReport {
    pub pass: bool,
    pub threshold: f64,
    pub first_violation: Option<usize>,
}

fn check_window_condition(
    schedule: &StepsizeSchedule,
    t_ks: &[usize],
    threshold: f64,
) -> ConditionReport {
    for (k, &tk) in t_ks.iter().enumerate() {
        if k >= tk && k >= 1 {
            let window = schedule.partial_sum(k - tk, k - 1);
            if window > threshold {
                return ConditionReport {
                    pass: false,
                    threshold,
                    first_violation: Some(k),
                };
            }
        }
    }
    ConditionReport {
        pass: true,
        threshold,
        first_violation: None,
    }
}

/// Stepsize condition for the contractive bound:
/// alpha_{k-t_k,k-1} <= min{phi2/(phi3 A^2), 1/(4A)}.
pub fn check_condition1(
    schedule: &StepsizeSchedule,
    chain: &MarkovChain,
    consts: &BoundConstants,
    horizon: usize,
) -> Result<ConditionReport> {
    schedule.validate()?;
    let a = consts.a_const;
    let threshold = (consts.phi2 / (consts.phi3 * a * a)).min(1.0 / (4.0 * a));
    let t_ks = mixing_times(chain, schedule, horizon)?;
    Ok(check_window_condition(schedule, &t_ks, threshold))
}

/// Stepsize condition for the linear bound:
/// alpha_{k-t_k,k-1} <= min{1/(4 L1), c2'/(228 L1^2)}.
pub fn check_condition_linear(
    schedule: &StepsizeSchedule,
    chain: &MarkovChain,
    l1: f64,
    c2_prime: f64,
    horizon: usize,
) -> Result<ConditionReport> {
    schedule.validate()?;
    let threshold = (1.0 / (4.0 * l1)).min(c2_prime / (228.0 * l1 * l1));
    let t_ks = mixing_times(chain, schedule, horizon)?;
    Ok(check_window_condition(schedule, &t_ks, threshold))
}

/// One simulated trial: p-errors and coordinate sup-norms per step.
#[derive(Debug, Clone)]
pub struct TrialTrace {
    pub p_errors: Vec<f64>,
    pub coord_sup: Vec<f64>,
    pub diverged: bool,
}

/// Aggregated run over trials.
#[derive(Debug, Clone)]
pub struct SARun {
    pub schedule: StepsizeSchedule,
    pub horizon: usize,
    pub n_trials: usize,
    pub seed: u64,
    /// Mean of p-error^2 over trials, per step.
    pub mean_sq: Vec<f64>,
    /// Standard error of that mean, per step.
    pub se_sq: Vec<f64>,
    pub n_diverged: usize,
    /// Per-trial traces (kept only when requested).
    pub traces: Vec<TrialTrace>,
}

/// Execution options shared by all runners.
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub horizon: usize,
    pub n_trials: usize,
    pub seed: u64,
    pub keep_traces: bool,
}

/// Runs independent seeded trials (rayon-parallel within fixed-size blocks so
/// aggregation order is deterministic) and aggregates mean-square p-errors.
pub fn run_trials<F>(schedule: StepsizeSchedule, opts: &RunOptions, sim: F) -> SARun
where
    F: Fn(u64) -> TrialTrace + Sync,
{
    let n = opts.n_trials.max(1);
    let len = opts.horizon;
    let mut sum = vec![0.0f64; len];
    let mut sumsq = vec![0.0f64; len];
    let mut count = vec![0usize; len];
    let mut n_diverged = 0;
    let mut traces: Vec<TrialTrace> = Vec::new();
    let block = 32usize;
    let mut start = 0usize;
    while start < n {
        let end = (start + block).min(n);
        let batch: Vec<TrialTrace> = (start..end)
            .into_par_iter()
            .map(|t| sim(t as u64))
            .collect();
        for tr in batch {
            if tr.diverged {
                n_diverged += 1;
            }
            for (k, &e) in tr.p_errors.iter().enumerate().take(len) {
                if e.is_finite() {
                    let sq = e * e;
                    sum[k] += sq;
                    sumsq[k] += sq * sq;
                    count[k] += 1;
                }
            }
            if opts.keep_traces {
                traces.push(tr);
            }
        }
        start = end;
    }
    let mut mean_sq = vec![f64::NAN; len];
    let mut se_sq = vec![f64::NAN; len];
    for k in 0..len {
        if count[k] > 0 {
            let m = sum[k] / count[k] as f64;
            mean_sq[k] = m;
            if count[k] > 1 {
                let var = (sumsq[k] / count[k] as f64 - m * m).max(0.0)
                    * (count[k] as f64 / (count[k] as f64 - 1.0));
                se_sq[k] = (var / count[k] as f64).sqrt();
            }
        }
    }
    SARun {
        schedule,
        horizon: opts.horizon,
        n_trials: n,
        seed: opts.seed,
        mean_sq,
        se_sq,
        n_diverged,
        traces,
    }
}

fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial + 1);
    rng
}

/// Runs x_{k+1} = x_k + alpha_k (F(x_k, Y_k) - x_k + w_k) over seeded trials.
/// Component divergence is legal; the p-error is recorded while finite.
pub fn run_sa(problem: &SAProblem, schedule: StepsizeSchedule, opts: &RunOptions) -> SARun {
    run_trials(schedule, opts, |trial| {
        let mut rng = trial_rng(opts.seed, trial);
        let mut y = problem.chain.sample_stationary(&mut rng);
        let mut x = problem.x0.clone();
        let mut p_errors = Vec::with_capacity(opts.horizon);
        let mut coord_sup = Vec::with_capacity(opts.horizon);
        let mut diverged = false;
        for k in 0..opts.horizon {
            let perr = problem.p_c.eval(&(&x - &problem.x_star));
            p_errors.push(perr);
            coord_sup.push(x.amax());
            if !perr.is_finite() {
                diverged = true;
                for _ in k + 1..opts.horizon {
                    p_errors.push(f64::NAN);
                    coord_sup.push(f64::NAN);
                }
                break;
            }
            let alpha = schedule.alpha(k);
            let mut drive = (problem.f)(&x, y) - &x;
            if let Some(noise) = &problem.noise {
                drive += noise(&x, y, &mut rng);
            }
            x += alpha * drive;
            y = problem.chain.sample_next(y, &mut rng);
        }
        TrialTrace {
            p_errors,
            coord_sup,
            diverged,
        }
    })
}

/// A linear SA instance: state-indexed matrices/vectors plus the certificate
/// seminorm, with measured norm bounds and the quotient-solved target.
pub struct LinearSaInstance {
    pub a_mats: Vec<DMatrix<f64>>,
    pub b_vecs: Vec<DVector<f64>>,
    pub chain: MarkovChain,
    pub p: Seminorm,
    pub e_basis: DMatrix<f64>,
    pub c2_prime: f64,
    pub l1: f64,
    pub l2: f64,
    pub a_bar: DMatrix<f64>,
    pub b_bar: DVector<f64>,
    pub x_star: DVector<f64>,
    pub x0: DVector<f64>,
}

impl LinearSaInstance {
    /// Validates E-invariance of every A(y), measures (L1, L2) in the c-norm
    /// of the certificate, and solves for x* on the complement of E.
    pub fn new(
        a_mats: Vec<DMatrix<f64>>,
        b_vecs: Vec<DVector<f64>>,
        chain: MarkovChain,
        cert: &crate::lyapunov::LyapunovCertificate,
        x0: DVector<f64>,
    ) -> Result<Self> {
        let d = x0.len();
        if a_mats.len() != chain.n_states() || b_vecs.len() != chain.n_states() {
            return Err(Error::DimensionMismatch {
                expected: chain.n_states(),
                got: a_mats.len(),
            });
        }
        let p = cert.seminorm()?;
        let e_basis = cert.e_basis.clone();
        // E-invariance under every A(y): x in E implies A(y) x in E.
        let proj_out = DMatrix::identity(d, d) - linalg::projector(&e_basis);
        for (y, a) in a_mats.iter().enumerate() {
            if e_basis.ncols() > 0 {
                let resid = (&proj_out * a * &e_basis).norm();
                if resid > 1e-8 * (1.0 + a.norm()) {
                    return Err(Error::InvalidInput(format!(
                        "E not invariant under A(y={y}) (residual {resid})"
                    )));
                }
            }
        }
        // c-norm of the certificate: ||z||_c = sqrt(z' (P + Pi_E) z).
        let c = &cert.p + linalg::projector(&e_basis);
        let eig = nalgebra::SymmetricEigen::new(linalg::symmetrize(&c));
        let sqrt_vals = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        let c_half = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose();
        let c_half_inv = &eig.eigenvectors
            * DMatrix::from_diagonal(&sqrt_vals.map(|s| if s > 0.0 { 1.0 / s } else { 0.0 }))
            * eig.eigenvectors.transpose();
        let mut l1: f64 = 0.0;
        let mut l2: f64 = 0.0;
        for y in 0..a_mats.len() {
            l1 = l1.max(crate::spectral::operator_norm2(&(&c_half * &a_mats[y] * &c_half_inv)));
            let b = &b_vecs[y];
            l2 = l2.max(((b.transpose() * &c * b)[(0, 0)]).max(0.0).sqrt());
        }
        let mut a_bar = DMatrix::zeros(d, d);
        let mut b_bar = DVector::zeros(d);
        for y in 0..a_mats.len() {
            a_bar += chain.stationary[y] * &a_mats[y];
            b_bar += chain.stationary[y] * &b_vecs[y];
        }
        // Quotient solve of Abar x + bbar = 0 (mod E).
        let u = linalg::complement_basis(&e_basis);
        let m = u.transpose() * &a_bar * &u;
        let rhs = -(u.transpose() * &b_bar);
        let z = m
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::SingularSystem("Abar has no solution on the quotient".into()))?;
        let x_star = &u * z;
        Ok(LinearSaInstance {
            a_mats,
            b_vecs,
            chain,
            p,
            e_basis,
            c2_prime: cert.c2_prime,
            l1,
            l2,
            a_bar,
            b_bar,
            x_star,
            x0,
        })
    }
}

/// Runs x_{k+1} = x_k + alpha_k (A(Y_k) x_k + b(Y_k)) over seeded trials.
pub fn run_linear_sa(
    inst: &LinearSaInstance,
    schedule: StepsizeSchedule,
    opts: &RunOptions,
) -> SARun {
    run_trials(schedule, opts, |trial| {
        let mut rng = trial_rng(opts.seed, trial);
        let mut y = inst.chain.sample_stationary(&mut rng);
        let mut x = inst.x0.clone();
        let mut p_errors = Vec::with_capacity(opts.horizon);
        let mut coord_sup = Vec::with_capacity(opts.horizon);
        let mut diverged = false;
        for k in 0..opts.horizon {
            let perr = inst.p.eval(&(&x - &inst.x_star));
            p_errors.push(perr);
            coord_sup.push(x.amax());
            if !perr.is_finite() {
                diverged = true;
                for _ in k + 1..opts.horizon {
                    p_errors.push(f64::NAN);
                    coord_sup.push(f64::NAN);
                }
                break;
            }
            let alpha = schedule.alpha(k);
            x += alpha * (&inst.a_mats[y] * &x + &inst.b_vecs[y]);
            y = inst.chain.sample_next(y, &mut rng);
        }
        TrialTrace {
            p_errors,
            coord_sup,
            diverged,
        }
    })
}

/// Generic envelope parameters: exact recursion
/// b_{k+1} = (1 - decay a_k) b_k + noise a_k a_{k-t_k,k-1}, b_K = init.
/// For the contractive bound: init = phi1 c1, decay = phi2, noise = phi3 c2.
/// For the linear bound: init = c1', decay = c2'/2, noise = c3'.
#[derive(Debug, Clone, Copy)]
pub struct EnvelopeParams {
    pub init: f64,
    pub decay: f64,
    pub noise: f64,
}

#[derive(Debug, Clone)]
pub struct Envelope {
    pub k_start: usize,
    /// Exact product-sum envelope (defined for k >= k_start; earlier entries
    /// hold the initial value).
    pub exact: Vec<f64>,
    /// Closed-form relaxation per schedule family; NaN when the schedule
    /// violates the closed form's constant constraint.
    pub closed: Vec<f64>,
    pub closed_valid: bool,
    /// Whether the stepsize condition held (envelope binding).
    pub binding: bool,
    pub t_ks: Vec<usize>,
}

/// Evaluates both envelope forms for k = 0..horizon.
pub fn bound_envelope(
    params: &EnvelopeParams,
    schedule: &StepsizeSchedule,
    chain: &MarkovChain,
    horizon: usize,
    binding: bool,
) -> Result<Envelope> {
    schedule.validate()?;
    let t_ks = mixing_times(chain, schedule, horizon)?;
    let k_start = burn_in(&t_ks)?;
    let mut exact = vec![params.init; horizon + 1];
    for k in k_start..horizon {
        let alpha = schedule.alpha(k);
        let tk = t_ks[k];
        let window = if k >= 1 && k >= tk {
            schedule.partial_sum(k - tk, k - 1)
        } else {
            0.0
        };
        exact[k + 1] = (1.0 - params.decay * alpha).max(0.0) * exact[k]
            + params.noise * alpha * window;
    }
    let e = std::f64::consts::E;
    let mut closed = vec![f64::NAN; horizon + 1];
    let mut closed_valid = true;
    match *schedule {
        StepsizeSchedule::Constant { alpha } => {
            let t_alpha = t_ks[0] as f64;
            let base = (1.0 - params.decay * alpha).max(0.0);
            for k in k_start..=horizon {
                closed[k] = params.init * base.powi((k - k_start) as i32)
                    + params.noise / params.decay * alpha * t_alpha;
            }
        }
        StepsizeSchedule::Linear { alpha, h } => {
            if alpha * params.decay <= 1.0 {
                closed_valid = false;
            } else {
                for k in k_start..=horizon {
                    let bias = params.init
                        * ((k_start as f64 + h) / (k as f64 + h)).powf(alpha * params.decay);
                    let var = 8.0 * e * alpha * alpha * params.noise
                        / (params.decay * alpha - 1.0)
                        * t_ks[k] as f64
                        / (k as f64 + h);
                    closed[k] = bias + var;
                }
            }
        }
        StepsizeSchedule::Polynomial { alpha, h, xi } => {
            for k in k_start..=horizon {
                let bias = params.init
                    * (-(params.decay * alpha / (1.0 - xi))
                        * ((k as f64 + h).powf(1.0 - xi) - (k_start as f64 + h).powf(1.0 - xi)))
                    .exp();
                let var = 4.0 * params.noise * alpha / params.decay * t_ks[k] as f64
                    / (k as f64 + h).powf(xi);
                closed[k] = bias + var;
            }
        }
    }
    Ok(Envelope {
        k_start,
        exact,
        closed,
        closed_valid,
        binding,
    t_ks,
    })
}

/// One-step Moreau drift report at index k.
#[derive(Debug, Clone)]
pub struct DriftReport {
    pub k: usize,
    pub lhs_mean: f64,
    pub lhs_se: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// Monte-Carlo check of the one-step drift inequality
/// E[M_E(x_{k+1}-x*)] <= (1 - phi2 a_k) E[M_E(x_k-x*)]
///   + phi3 a_k a_{k-t_k,k-1} / (2 u_cm^2) (A p(x*) + B)^2.
pub fn drift_check(
    problem: &SAProblem,
    schedule: &StepsizeSchedule,
    k: usize,
    n_mc: usize,
    seed: u64,
) -> Result<DriftReport> {
    let env = MoreauEnvelope::for_contraction(problem.p_c.clone(), problem.gamma)?;
    let consts = BoundConstants::from_envelope(problem, &env)?;
    let t_ks = mixing_times(&problem.chain, schedule, k + 1)?;
    let kk = burn_in(&t_ks)?;
    if k < kk {
        return Err(Error::InvalidInput(format!(
            "drift check requires k >= burn-in K = {kk}"
        )));
    }
    let alpha_k = schedule.alpha(k);
    let window = if k >= t_ks[k] && k >= 1 {
        schedule.partial_sum(k - t_ks[k], k - 1)
    } else {
        0.0
    };
    let results: Vec<(f64, f64)> = (0..n_mc)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(seed, trial as u64);
            let mut y = problem.chain.sample_stationary(&mut rng);
            let mut x = problem.x0.clone();
            for j in 0..k {
                let a = schedule.alpha(j);
                let mut drive = (problem.f)(&x, y) - &x;
                if let Some(noise) = &problem.noise {
                    drive += noise(&x, y, &mut rng);
                }
                x += a * drive;
                y = problem.chain.sample_next(y, &mut rng);
            }
            let m_k = env.eval(&(&x - &problem.x_star));
            let mut drive = (problem.f)(&x, y) - &x;
            if let Some(noise) = &problem.noise {
                drive += noise(&x, y, &mut rng);
            }
            x += alpha_k * drive;
            let m_k1 = env.eval(&(&x - &problem.x_star));
            (m_k, m_k1)
        })
        .collect();
    let n = results.len() as f64;
    let mean_k: f64 = results.iter().map(|r| r.0).sum::<f64>() / n;
    let mean_k1: f64 = results.iter().map(|r| r.1).sum::<f64>() / n;
    let var_k1: f64 =
        results.iter().map(|r| (r.1 - mean_k1).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let se = (var_k1 / n).sqrt();
    let rhs = (1.0 - consts.phi2 * alpha_k) * mean_k
        + consts.phi3 * alpha_k * window / (2.0 * consts.u_cm * consts.u_cm)
            * (consts.a_const * problem.p_c.eval(&problem.x_star) + consts.b_const).powi(2);
    Ok(DriftReport {
        k,
        lhs_mean: mean_k1,
        lhs_se: se,
        rhs,
        pass: mean_k1 <= rhs + 3.0 * se,
    })
}
