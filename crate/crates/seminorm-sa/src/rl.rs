//! Average-reward RL layer: finite MDPs, policy-induced MRPs, multi-step
//! Bellman operators, TD(lambda) with linear features as a linear SA
//! instance, J-step synchronous Q-learning, and exact oracle solvers.

use crate::error::{Error, Result};
use crate::linalg;
use crate::markov::{self, MarkovChain};
use crate::sa::{run_trials, RunOptions, SARun, TrialTrace};
use crate::schedule::StepsizeSchedule;
use crate::seminorm::{BaseNorm, Operator, Seminorm};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

/// Finite average-reward MDP. Transition rows are indexed by the pair
/// (s, a) -> row s * n_actions + a; rewards live in [0, 1].
#[derive(Debug, Clone)]
pub struct Mdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// (n_states * n_actions) x n_states row-stochastic matrix.
    pub transitions: DMatrix<f64>,
    /// Length n_states * n_actions.
    pub rewards: DVector<f64>,
}

impl Mdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transitions: DMatrix<f64>,
        rewards: DVector<f64>,
    ) -> Result<Self> {
        let rows = n_states * n_actions;
        if transitions.nrows() != rows || transitions.ncols() != n_states {
            return Err(Error::DimensionMismatch {
                expected: rows,
                got: transitions.nrows(),
            });
        }
        if rewards.len() != rows {
            return Err(Error::DimensionMismatch {
                expected: rows,
                got: rewards.len(),
            });
        }
        for i in 0..rows {
            let mut s = 0.0;
            for j in 0..n_states {
                let v = transitions[(i, j)];
                if !v.is_finite() || v < -1e-12 {
                    return Err(Error::BadStochasticMatrix(format!(
                        "negative or non-finite entry at ({i},{j})"
                    )));
                }
                s += v;
            }
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::BadStochasticMatrix(format!(
                    "row {i} sums to {s}"
                )));
            }
        }
        for i in 0..rows {
            let r = rewards[i];
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::InvalidInput(format!(
                    "reward {r} at index {i} outside [0, 1]"
                )));
            }
        }
        Ok(Mdp {
            n_states,
            n_actions,
            transitions,
            rewards,
        })
    }

    #[inline]
    pub fn row(&self, s: usize, a: usize) -> usize {
        s * self.n_actions + a
    }

    /// Transition matrix and reward vector of the chain induced by a
    /// deterministic policy.
    pub fn induced(&self, policy: &[usize]) -> Result<(DMatrix<f64>, DVector<f64>)> {
        if policy.len() != self.n_states {
            return Err(Error::DimensionMismatch {
                expected: self.n_states,
                got: policy.len(),
            });
        }
        let mut p = DMatrix::zeros(self.n_states, self.n_states);
        let mut r = DVector::zeros(self.n_states);
        for s in 0..self.n_states {
            let a = policy[s];
            if a >= self.n_actions {
                return Err(Error::InvalidInput(format!("action {a} out of range")));
            }
            let row = self.row(s, a);
            for s2 in 0..self.n_states {
                p[(s, s2)] = self.transitions[(row, s2)];
            }
            r[s] = self.rewards[row];
        }
        Ok((p, r))
    }

    pub fn to_json(&self) -> serde_json::Value {
        let flat: Vec<f64> = (0..self.transitions.nrows())
            .flat_map(|i| (0..self.n_states).map(move |j| (i, j)))
            .map(|(i, j)| self.transitions[(i, j)])
            .collect();
        json!({
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "transitions": flat,
            "rewards": self.rewards.iter().copied().collect::<Vec<f64>>(),
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let n_states = v["n_states"]
            .as_u64()
            .ok_or_else(|| Error::Parse("missing n_states".into()))? as usize;
        let n_actions = v["n_actions"]
            .as_u64()
            .ok_or_else(|| Error::Parse("missing n_actions".into()))? as usize;
        let flat: Vec<f64> = v["transitions"]
            .as_array()
            .ok_or_else(|| Error::Parse("missing transitions".into()))?
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| Error::Parse("non-numeric transition".into())))
            .collect::<Result<_>>()?;
        let rewards: Vec<f64> = v["rewards"]
            .as_array()
            .ok_or_else(|| Error::Parse("missing rewards".into()))?
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| Error::Parse("non-numeric reward".into())))
            .collect::<Result<_>>()?;
        let rows = n_states * n_actions;
        if flat.len() != rows * n_states {
            return Err(Error::Parse(format!(
                "transitions length {} != {}",
                flat.len(),
                rows * n_states
            )));
        }
        let transitions = DMatrix::from_row_slice(rows, n_states, &flat);
        Mdp::new(n_states, n_actions, transitions, DVector::from_vec(rewards))
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let v: serde_json::Value = serde_json::from_str(&text)?;
        Mdp::from_json(&v)
    }

    /// Random unichain MDP: Dirichlet(1,...,1) rows blended with a uniform
    /// component (weight 0.1), so every policy induces an irreducible
    /// aperiodic chain. Rewards uniform in [0, 1].
    pub fn random_unichain(n_states: usize, n_actions: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d64_7031);
        let rows = n_states * n_actions;
        let mut p = DMatrix::zeros(rows, n_states);
        for i in 0..rows {
            let mut w = vec![0.0f64; n_states];
            let mut total = 0.0;
            for wj in w.iter_mut() {
                // Exp(1) marginals normalize to a flat Dirichlet sample.
                let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                *wj = -u.ln();
                total += *wj;
            }
            for (j, wj) in w.iter().enumerate() {
                p[(i, j)] = 0.9 * wj / total + 0.1 / n_states as f64;
            }
            // Renormalize exactly to kill accumulated roundoff.
            let s: f64 = (0..n_states).map(|j| p[(i, j)]).sum();
            for j in 0..n_states {
                p[(i, j)] /= s;
            }
        }
        let r = DVector::from_fn(rows, |_, _| rng.gen_range(0.0..1.0));
        Mdp::new(n_states, n_actions, p, r)
    }
}

/// Policy-induced Markov reward process with its exact evaluation.
#[derive(Debug, Clone)]
pub struct Mrp {
    pub p_pi: DMatrix<f64>,
    pub r_pi: DVector<f64>,
    pub mu_pi: DVector<f64>,
    /// Average reward r(pi).
    pub r_avg: f64,
    /// Differential value vector, normalized so mu' V = 0.
    pub v_pi: DVector<f64>,
}

/// Solves the average-reward evaluation equations for a deterministic policy:
/// r(pi) = mu' R, and (I - P) V = R - r(pi) e with mu' V = 0.
pub fn solve_mrp(mdp: &Mdp, policy: &[usize]) -> Result<Mrp> {
    let (p_pi, r_pi) = mdp.induced(policy)?;
    solve_mrp_from_parts(p_pi, r_pi)
}

/// Same evaluation given the chain and reward vector directly.
pub fn solve_mrp_from_parts(p_pi: DMatrix<f64>, r_pi: DVector<f64>) -> Result<Mrp> {
    let n = p_pi.nrows();
    let mu = markov::stationary(&p_pi)?;
    let r_avg = mu.dot(&r_pi);
    let e = DVector::from_element(n, 1.0);
    // (I - P + e mu') V = R - r e has the mu-orthogonal solution as its
    // unique solution for an ergodic chain.
    let m = DMatrix::identity(n, n) - &p_pi + &e * mu.transpose();
    let rhs = &r_pi - r_avg * &e;
    let v = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::SingularSystem("evaluation system singular".into()))?;
    let residual = (&r_pi + &p_pi * &v - r_avg * &e - &v).norm();
    if residual > 1e-10 * (1.0 + r_pi.norm() + v.norm()) {
        return Err(Error::NonConvergence(format!(
            "evaluation residual {residual}"
        )));
    }
    Ok(Mrp {
        p_pi,
        r_pi,
        mu_pi: mu,
        r_avg,
        v_pi: v,
    })
}

/// P^(lambda) = (1 - lambda) sum_m lambda^m P^{m+1} = (I - lambda P)^{-1} (1-lambda) P.
pub fn p_lambda(p: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    let n = p.nrows();
    let resolvent = (DMatrix::identity(n, n) - lambda * p)
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::SingularSystem("resolvent (I - lambda P) singular".into()))?;
    Ok((1.0 - lambda) * p * resolvent)
}

/// Multi-step averaged Bellman operator, truncation-free:
/// T_lam(v) = (I - lambda P)^{-1} R + P^(lambda) v.
pub fn bellman_lambda(mrp: &Mrp, lambda: f64, v: &DVector<f64>) -> Result<DVector<f64>> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(Error::InvalidInput(format!("lambda {lambda} outside [0,1)")));
    }
    let n = mrp.p_pi.nrows();
    let lu = (DMatrix::identity(n, n) - lambda * &mrp.p_pi).lu();
    let r_lam = lu
        .solve(&mrp.r_pi)
        .ok_or_else(|| Error::SingularSystem("resolvent solve failed".into()))?;
    let pl = p_lambda(&mrp.p_pi, lambda)?;
    Ok(r_lam + pl * v)
}

/// Linear feature map over states: |S| x d, full column rank, unit-ball rows.
#[derive(Debug, Clone)]
pub struct FeatureMap {
    pub phi: DMatrix<f64>,
}

impl FeatureMap {
    pub fn new(phi: DMatrix<f64>) -> Result<Self> {
        let gram = linalg::symmetrize(&(phi.transpose() * &phi));
        let lmin = nalgebra::SymmetricEigen::new(gram).eigenvalues.min();
        let smin = lmin.max(0.0).sqrt();
        if !(smin > 1e-10) {
            return Err(Error::InvalidInput(format!(
                "feature matrix rank-deficient (sigma_min = {smin})"
            )));
        }
        for s in 0..phi.nrows() {
            let norm = phi.row(s).norm();
            if norm > 1.0 + 1e-12 {
                return Err(Error::InvalidInput(format!(
                    "feature row {s} has norm {norm} > 1"
                )));
            }
        }
        Ok(FeatureMap { phi })
    }

    /// Tabular features scaled to unit rows.
    pub fn tabular(n_states: usize) -> Self {
        FeatureMap {
            phi: DMatrix::identity(n_states, n_states),
        }
    }

    pub fn dim(&self) -> usize {
        self.phi.ncols()
    }

    /// theta_e with Phi theta_e = e if e lies in the column space; None
    /// otherwise.
    pub fn theta_e(&self) -> Option<DVector<f64>> {
        let n = self.phi.nrows();
        let e = DVector::from_element(n, 1.0);
        // Least squares via normal equations; Phi has full column rank.
        let gram = linalg::symmetrize(&(self.phi.transpose() * &self.phi));
        let theta = nalgebra::Cholesky::new(gram)?.solve(&(self.phi.transpose() * &e));
        let resid = (&self.phi * &theta - &e).norm();
        if resid <= 1e-8 * (n as f64).sqrt() {
            Some(theta)
        } else {
            None
        }
    }
}

/// Solution of the projected multi-step evaluation equation.
#[derive(Debug, Clone)]
pub struct TdSolution {
    /// The particular solution orthogonal to the kernel direction.
    pub theta_star: DVector<f64>,
    /// Orthonormal basis of the kernel direction S (d x 0 or d x 1).
    pub s_basis: DMatrix<f64>,
    /// Orthonormal basis of its orthogonal complement (the solve space).
    pub e_phi_basis: DMatrix<f64>,
    /// Curvature constant: min over unit theta in the solve space of
    /// theta' Phi' D (I - P^(lambda)) Phi theta.
    pub delta: f64,
}

/// Solves the projected equation
/// Phi' D (P^(lambda) - I) Phi theta + Phi' D R^(lambda) - r(pi)/(1-lambda) Phi' mu = 0
/// restricted to the complement of the kernel direction.
pub fn td_solution_set(mrp: &Mrp, features: &FeatureMap, lambda: f64) -> Result<TdSolution> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(Error::InvalidInput(format!("lambda {lambda} outside [0,1)")));
    }
    let n = mrp.p_pi.nrows();
    let d = features.dim();
    let dmat = DMatrix::from_diagonal(&mrp.mu_pi);
    let pl = p_lambda(&mrp.p_pi, lambda)?;
    let lu = (DMatrix::identity(n, n) - lambda * &mrp.p_pi).lu();
    let r_lam = lu
        .solve(&mrp.r_pi)
        .ok_or_else(|| Error::SingularSystem("resolvent solve failed".into()))?;
    let s_basis = match features.theta_e() {
        Some(te) => {
            let mut b = DMatrix::zeros(d, 1);
            let nrm = te.norm();
            for i in 0..d {
                b[(i, 0)] = te[i] / nrm;
            }
            b
        }
        None => DMatrix::zeros(d, 0),
    };
    let e_basis = linalg::complement_basis(&s_basis);
    let a_mat = features.phi.transpose() * &dmat * (&pl - DMatrix::identity(n, n)) * &features.phi;
    let rhs_full = features.phi.transpose() * &dmat * &r_lam
        - (mrp.r_avg / (1.0 - lambda)) * (features.phi.transpose() * &mrp.mu_pi);
    let m = e_basis.transpose() * &a_mat * &e_basis;
    let rhs = -(e_basis.transpose() * &rhs_full);
    let z = m.clone().lu().solve(&rhs).ok_or_else(|| {
        Error::SingularSystem("restricted projected equation singular".into())
    })?;
    let theta_star = &e_basis * z;
    // Curvature on the solve space, via the symmetric part.
    let curv = e_basis.transpose()
        * features.phi.transpose()
        * &dmat
        * (DMatrix::identity(n, n) - &pl)
        * &features.phi
        * &e_basis;
    let delta = if curv.nrows() == 0 {
        f64::INFINITY
    } else {
        nalgebra::SymmetricEigen::new(linalg::symmetrize(&curv))
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    };
    if !(delta > 0.0) {
        return Err(Error::SingularSystem(format!(
            "projected operator not negative-definite on the solve space (delta = {delta})"
        )));
    }
    Ok(TdSolution {
        theta_star,
        s_basis,
        e_phi_basis: e_basis,
        delta,
    })
}

/// Everything needed to run and bound TD(lambda) as a linear SA instance in
/// the lifted coordinates Theta = [r; theta].
pub struct TdInstance {
    pub mrp: Mrp,
    pub features: FeatureMap,
    pub lambda: f64,
    pub c_alpha: f64,
    pub solution: TdSolution,
    /// Target [r(pi); theta*].
    pub theta_star_lifted: DVector<f64>,
    /// Euclidean distance to E = {0} x S.
    pub p: Seminorm,
    pub a_bar: DMatrix<f64>,
    pub b_bar: DVector<f64>,
    pub state_chain: MarkovChain,
}

impl TdInstance {
    /// Builds the instance; `c_alpha_opt` defaults to the admissibility
    /// threshold Delta + 1/(Delta (1-lambda)^2).
    pub fn new(
        mdp: &Mdp,
        policy: &[usize],
        features: FeatureMap,
        lambda: f64,
        c_alpha_opt: Option<f64>,
    ) -> Result<Self> {
        let mrp = solve_mrp(mdp, policy)?;
        Self::from_mrp(mrp, features, lambda, c_alpha_opt)
    }

    pub fn from_mrp(
        mrp: Mrp,
        features: FeatureMap,
        lambda: f64,
        c_alpha_opt: Option<f64>,
    ) -> Result<Self> {
        let solution = td_solution_set(&mrp, &features, lambda)?;
        let d = features.dim();
        let c_floor = solution.delta + 1.0 / (solution.delta * (1.0 - lambda) * (1.0 - lambda));
        let c_alpha = c_alpha_opt.unwrap_or(c_floor);
        if c_alpha < c_floor - 1e-12 {
            return Err(Error::InvalidInput(format!(
                "c_alpha {c_alpha} below the admissible floor {c_floor}"
            )));
        }
        let n = mrp.p_pi.nrows();
        let dmat = DMatrix::from_diagonal(&mrp.mu_pi);
        let pl = p_lambda(&mrp.p_pi, lambda)?;
        let lu = (DMatrix::identity(n, n) - lambda * &mrp.p_pi).lu();
        let r_lam = lu
            .solve(&mrp.r_pi)
            .ok_or_else(|| Error::SingularSystem("resolvent solve failed".into()))?;
        let e = DVector::from_element(n, 1.0);
        let mut a_bar = DMatrix::zeros(d + 1, d + 1);
        a_bar[(0, 0)] = -c_alpha;
        let col0 = -(features.phi.transpose() * &dmat * &e) / (1.0 - lambda);
        let block = features.phi.transpose() * &dmat * (&pl - DMatrix::identity(n, n)) * &features.phi;
        for i in 0..d {
            a_bar[(i + 1, 0)] = col0[i];
            for j in 0..d {
                a_bar[(i + 1, j + 1)] = block[(i, j)];
            }
        }
        let mut b_bar = DVector::zeros(d + 1);
        b_bar[0] = c_alpha * mrp.r_avg;
        let b_block = features.phi.transpose() * &dmat * &r_lam;
        for i in 0..d {
            b_bar[i + 1] = b_block[i];
        }
        // Kernel of the lifted dynamics: {0} x S.
        let m = solution.s_basis.ncols();
        let mut kernel = DMatrix::zeros(d + 1, m);
        for j in 0..m {
            for i in 0..d {
                kernel[(i + 1, j)] = solution.s_basis[(i, j)];
            }
        }
        let p = Seminorm::subspace_distance(BaseNorm::Euclidean, d + 1, &kernel)?;
        let mut theta_star_lifted = DVector::zeros(d + 1);
        theta_star_lifted[0] = mrp.r_avg;
        for i in 0..d {
            theta_star_lifted[i + 1] = solution.theta_star[i];
        }
        let state_chain = MarkovChain::new(mrp.p_pi.clone())?;
        Ok(TdInstance {
            mrp,
            features,
            lambda,
            c_alpha,
            solution,
            theta_star_lifted,
            p,
            a_bar,
            b_bar,
            state_chain,
        })
    }

    /// A(y) for y = (s, s', z).
    pub fn a_of(&self, s: usize, s2: usize, z: &DVector<f64>) -> DMatrix<f64> {
        let d = self.features.dim();
        let mut a = DMatrix::zeros(d + 1, d + 1);
        a[(0, 0)] = -self.c_alpha;
        let dphi = self.features.phi.row(s2) - self.features.phi.row(s);
        for i in 0..d {
            a[(i + 1, 0)] = -z[i];
            for j in 0..d {
                a[(i + 1, j + 1)] = z[i] * dphi[j];
            }
        }
        a
    }

    /// b(y) for y = (s, s', z).
    pub fn b_of(&self, s: usize, z: &DVector<f64>) -> DVector<f64> {
        let d = self.features.dim();
        let mut b = DVector::zeros(d + 1);
        let r = self.mrp.r_pi[s];
        b[0] = self.c_alpha * r;
        for i in 0..d {
            b[i + 1] = r * z[i];
        }
        b
    }
}

/// Runs Algorithm-style TD(lambda) with the eligibility trace maintained
/// recursively; the trace is cross-checked against its series form each step.
pub fn td_lambda_run(inst: &TdInstance, schedule: StepsizeSchedule, opts: &RunOptions) -> SARun {
    let d = inst.features.dim();
    run_trials(schedule, opts, |trial| {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(trial + 1);
        let mut s = inst.state_chain.sample_stationary(&mut rng);
        let mut theta = DVector::<f64>::zeros(d + 1);
        let mut z = DVector::<f64>::zeros(d);
        // Series form of the trace, maintained in parallel for the
        // consistency check (identical recursion, so drift means a bug).
        let mut phi_hist: Vec<usize> = Vec::new();
        let mut p_errors = Vec::with_capacity(opts.horizon);
        let mut coord_sup = Vec::with_capacity(opts.horizon);
        for k in 0..opts.horizon {
            let err = inst.p.eval(&(&theta - &inst.theta_star_lifted));
            p_errors.push(err);
            coord_sup.push(theta.amax());
            let s2 = inst.state_chain.sample_next(s, &mut rng);
            z = inst.lambda * z + inst.features.phi.row(s).transpose();
            phi_hist.push(s);
            if k < 64 {
                let mut z_series = DVector::<f64>::zeros(d);
                for (t, &st) in phi_hist.iter().enumerate() {
                    z_series += inst.lambda.powi((phi_hist.len() - 1 - t) as i32)
                        * inst.features.phi.row(st).transpose();
                }
                debug_assert!((&z_series - &z).amax() <= 1e-12 * (1.0 + z.amax()));
            }
            let beta = schedule.alpha(k);
            let r_obs = inst.mrp.r_pi[s];
            let delta_td = r_obs - theta[0]
                + (inst.features.phi.row(s2) - inst.features.phi.row(s))
                    .transpose()
                    .dot(&theta.rows(1, d).into_owned());
            theta[0] += beta * inst.c_alpha * (r_obs - theta[0]);
            for i in 0..d {
                theta[i + 1] += beta * z[i] * delta_td;
            }
            s = s2;
        }
        TrialTrace {
            p_errors,
            coord_sup,
            diverged: false,
        }
    })
}

/// One-step optimal Bellman operator H over Q-tables.
pub fn h_operator(mdp: &Mdp, q: &DVector<f64>) -> DVector<f64> {
    let v = greedy_values(mdp, q);
    let rows = mdp.n_states * mdp.n_actions;
    let mut out = DVector::zeros(rows);
    for i in 0..rows {
        out[i] = mdp.rewards[i] + mdp.transitions.row(i).transpose().dot(&v);
    }
    out
}

/// Greedy policy of Q with ties broken toward the lowest action index.
pub fn greedy_policy(mdp: &Mdp, q: &DVector<f64>) -> Vec<usize> {
    (0..mdp.n_states)
        .map(|s| {
            let mut best = 0usize;
            for a in 1..mdp.n_actions {
                if q[mdp.row(s, a)] > q[mdp.row(s, best)] {
                    best = a;
                }
            }
            best
        })
        .collect()
}

fn greedy_values(mdp: &Mdp, q: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(mdp.n_states, |s, _| {
        (0..mdp.n_actions)
            .map(|a| q[mdp.row(s, a)])
            .fold(f64::NEG_INFINITY, f64::max)
    })
}

/// J-step lookahead operator: after the first (s, a) step, actions follow the
/// greedy policy of Q frozen at the input (not H iterated J times).
pub fn j_step_h(mdp: &Mdp, q: &DVector<f64>, j: usize) -> Result<DVector<f64>> {
    if j == 0 {
        return Err(Error::InvalidInput("J must be >= 1".into()));
    }
    let mu = greedy_policy(mdp, q);
    let (p_mu, r_mu) = mdp.induced(&mu)?;
    let v = greedy_values(mdp, q);
    // tail(s') = E[sum of J-1 greedy rewards from s' + terminal value].
    let mut tail = v;
    for _ in 0..j - 1 {
        tail = &r_mu + &p_mu * tail;
    }
    let rows = mdp.n_states * mdp.n_actions;
    let mut out = DVector::zeros(rows);
    for i in 0..rows {
        out[i] = mdp.rewards[i] + mdp.transitions.row(i).transpose().dot(&tail);
    }
    Ok(out)
}

/// Relative value iteration output.
#[derive(Debug, Clone)]
pub struct QStar {
    /// Optimal Q-table normalized so its minimum entry is 0.
    pub q_star: DVector<f64>,
    pub r_star: f64,
    pub sweeps: usize,
}

fn span_of(x: &DVector<f64>) -> f64 {
    x.max() - x.min()
}

/// Solves the optimality equation H(Q) - r* e = Q by relative value
/// iteration, anchoring at entry (0, 0) each sweep; verifies the J-step
/// equation afterwards.
pub fn q_star_oracle(mdp: &Mdp, j: usize, tol: f64) -> Result<QStar> {
    let rows = mdp.n_states * mdp.n_actions;
    let mut q = DVector::zeros(rows);
    let mut r_star = 0.0;
    let mut converged = false;
    let mut sweeps = 0;
    for sweep in 0..1_000_000usize {
        let hq = h_operator(mdp, &q);
        let anchor = hq[0];
        let next = &hq - DVector::from_element(rows, anchor);
        let diff = &next - &q;
        sweeps = sweep + 1;
        if span_of(&diff) <= tol {
            r_star = anchor;
            q = next;
            converged = true;
            break;
        }
        q = next;
    }
    if !converged {
        return Err(Error::NonConvergence(
            "relative value iteration did not reach tolerance within 1e6 sweeps".into(),
        ));
    }
    let q_star = &q - DVector::from_element(rows, q.min());
    // One-step residual.
    let e = DVector::from_element(rows, 1.0);
    let res1 = span_of(&(h_operator(mdp, &q_star) - r_star * &e - &q_star));
    if res1 > 10.0 * tol {
        return Err(Error::NonConvergence(format!(
            "one-step optimality residual {res1}"
        )));
    }
    // J-step residual.
    let resj = span_of(&(j_step_h(mdp, &q_star, j)? - (j as f64) * r_star * &e - &q_star));
    if resj > 10.0 * (j as f64) * tol {
        return Err(Error::NonConvergence(format!(
            "{j}-step optimality residual {resj}"
        )));
    }
    Ok(QStar {
        q_star,
        r_star,
        sweeps,
    })
}

/// Smallest J <= 2 |S| whose J-step operator has sampled span-contraction
/// factor at most 0.99.
pub fn select_j(mdp: &Mdp, seed: u64) -> Result<(usize, f64)> {
    let rows = mdp.n_states * mdp.n_actions;
    let p = Seminorm::span(rows)?;
    for j in 1..=2 * mdp.n_states {
        let op = Operator::Map(Box::new(move |q: &DVector<f64>| {
            j_step_h(mdp, q, j).expect("J-step operator evaluation")
        }));
        let est = crate::seminorm::verify_contraction(&op, &p, 2000, seed ^ j as u64);
        if est.gamma_hat <= 0.99 {
            return Ok((j, est.gamma_hat));
        }
    }
    Err(Error::NonConvergence(format!(
        "no J <= {} gave a sampled span contraction",
        2 * mdp.n_states
    )))
}

/// Synchronous J-step Q-learning. Every (s, a) draws one J-step rollout per
/// iteration under the greedy policy frozen at the iteration start; the
/// centered noise's span bound 2 span(Q_k) + 2 J span(R) is asserted each
/// step. With `noise_free` the exact operator replaces the rollouts.
pub fn q_learning_run(
    mdp: &Mdp,
    j: usize,
    schedule: StepsizeSchedule,
    opts: &RunOptions,
    q_star: &DVector<f64>,
    noise_free: bool,
) -> SARun {
    let rows = mdp.n_states * mdp.n_actions;
    let span_r = mdp.rewards.max() - mdp.rewards.min();
    run_trials(schedule, opts, |trial| {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(trial + 1);
        let mut q = DVector::<f64>::zeros(rows);
        let mut p_errors = Vec::with_capacity(opts.horizon);
        let mut coord_sup = Vec::with_capacity(opts.horizon);
        for k in 0..opts.horizon {
            p_errors.push(span_of(&(&q - q_star)));
            coord_sup.push(q.amax());
            let hj = j_step_h(mdp, &q, j).expect("J-step operator evaluation");
            let drive = if noise_free {
                &hj - &q
            } else {
                let mu = greedy_policy(mdp, &q);
                let mut rollout = DVector::zeros(rows);
                for s in 0..mdp.n_states {
                    for a in 0..mdp.n_actions {
                        let i = mdp.row(s, a);
                        let mut total = mdp.rewards[i];
                        let mut st = sample_row(&mdp.transitions, i, &mut rng);
                        for _ in 0..j - 1 {
                            let ai = mdp.row(st, mu[st]);
                            total += mdp.rewards[ai];
                            st = sample_row(&mdp.transitions, ai, &mut rng);
                        }
                        total += (0..mdp.n_actions)
                            .map(|a2| q[mdp.row(st, a2)])
                            .fold(f64::NEG_INFINITY, f64::max);
                        rollout[i] = total;
                    }
                }
                let omega = &rollout - &hj;
                let bound = 2.0 * span_of(&q) + 2.0 * j as f64 * span_r;
                assert!(
                    span_of(&omega) <= bound + 1e-9,
                    "noise span {} exceeds structural bound {}",
                    span_of(&omega),
                    bound
                );
                rollout - &q
            };
            q += schedule.alpha(k) * drive;
        }
        TrialTrace {
            p_errors,
            coord_sup,
            diverged: false,
        }
    })
}

fn sample_row<R: Rng>(p: &DMatrix<f64>, row: usize, rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let n = p.ncols();
    for s in 0..n {
        acc += p[(row, s)];
        if u < acc {
            return s;
        }
    }
    n - 1
}
