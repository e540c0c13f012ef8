//! Finite Markov chains: stationary distributions, total-variation mixing
//! times (exact, by matrix powers), uniform-ergodicity envelopes, and seeded
//! trajectory sampling.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Hard cap on mixing-time searches.
pub const MIXING_CAP: usize = 1_000_000;

#[derive(Debug, Clone)]
pub struct MarkovChain {
    pub p: DMatrix<f64>,
    pub stationary: DVector<f64>,
    /// Fitted uniform-ergodicity envelope: sup_y TV(P^k(y,.), mu) <= C rho^k.
    pub c_erg: f64,
    pub rho: f64,
}

/// Exact mixing times at a list of accuracies.
#[derive(Debug, Clone)]
pub struct MixingTable {
    pub entries: Vec<(f64, usize)>,
}

/// Total variation distance between two distributions on the same support.
pub fn tv_distance(mu1: &DVector<f64>, mu2: &DVector<f64>) -> Result<f64> {
    if mu1.len() != mu2.len() {
        return Err(Error::DimensionMismatch {
            expected: mu1.len(),
            got: mu2.len(),
        });
    }
    Ok(0.5 * (mu1 - mu2).abs().sum())
}

/// Stationary distribution of an irreducible aperiodic row-stochastic matrix.
pub fn stationary(p: &DMatrix<f64>) -> Result<DVector<f64>> {
    validate_stochastic(p)?;
    check_ergodic(p)?;
    let n = p.nrows();
    // (P^T - I) mu = 0 with the last equation replaced by sum(mu) = 1.
    let mut m = p.transpose() - DMatrix::identity(n, n);
    for j in 0..n {
        m[(n - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let mu = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NonErgodicChain("stationary system singular".into()))?;
    let resid = (p.transpose() * &mu - &mu).abs().max();
    if resid > 1e-10 {
        return Err(Error::NonErgodicChain(format!(
            "stationary residual {resid} too large"
        )));
    }
    if mu.iter().any(|&x| x < -1e-12) {
        return Err(Error::NonErgodicChain("negative stationary mass".into()));
    }
    Ok(mu.map(|x| x.max(0.0)))
}

fn validate_stochastic(p: &DMatrix<f64>) -> Result<()> {
    if p.nrows() != p.ncols() || p.nrows() == 0 {
        return Err(Error::BadStochasticMatrix("matrix must be square".into()));
    }
    for i in 0..p.nrows() {
        let mut s = 0.0;
        for j in 0..p.ncols() {
            let x = p[(i, j)];
            if !(x >= 0.0) {
                return Err(Error::BadStochasticMatrix(format!(
                    "entry ({i},{j}) = {x} negative"
                )));
            }
            s += x;
        }
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::BadStochasticMatrix(format!(
                "row {i} sums to {s}"
            )));
        }
    }
    Ok(())
}

/// Irreducibility (strong connectivity of the support graph) and aperiodicity
/// (gcd of cycle lengths is 1).
fn check_ergodic(p: &DMatrix<f64>) -> Result<()> {
    let n = p.nrows();
    let reach = |rev: bool| -> Vec<bool> {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for v in 0..n {
                let edge = if rev { p[(v, u)] } else { p[(u, v)] } > 0.0;
                if edge && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    };
    if !reach(false).iter().all(|&x| x) || !reach(true).iter().all(|&x| x) {
        return Err(Error::NonErgodicChain("support graph not strongly connected".into()));
    }
    // BFS levels from state 0; gcd over edges of (level(u) + 1 - level(v)).
    let mut level = vec![usize::MAX; n];
    let mut queue = std::collections::VecDeque::new();
    level[0] = 0;
    queue.push_back(0usize);
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            if p[(u, v)] > 0.0 && level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut g: i64 = 0;
    for u in 0..n {
        for v in 0..n {
            if p[(u, v)] > 0.0 {
                let diff = level[u] as i64 + 1 - level[v] as i64;
                g = gcd(g.abs(), diff.abs());
            }
        }
    }
    if g != 1 {
        return Err(Error::NonErgodicChain(format!("chain has period {g}")));
    }
    Ok(())
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Incremental evaluator of the worst-start TV curve k -> sup_y TV(P^k(y,.), mu).
pub struct TvCurve<'a> {
    chain: &'a MarkovChain,
    power: DMatrix<f64>,
    tvs: Vec<f64>,
}

impl<'a> TvCurve<'a> {
    pub fn new(chain: &'a MarkovChain) -> Self {
        let n = chain.p.nrows();
        let tv0 = worst_tv(&DMatrix::identity(n, n), &chain.stationary);
        TvCurve {
            chain,
            power: DMatrix::identity(n, n),
            tvs: vec![tv0],
        }
    }

    /// sup_y TV(P^k(y,.), mu).
    pub fn tv(&mut self, k: usize) -> f64 {
        while self.tvs.len() <= k {
            self.power = &self.power * &self.chain.p;
            self.tvs.push(worst_tv(&self.power, &self.chain.stationary));
        }
        self.tvs[k]
    }

    /// Exact mixing time: min k with tv(k) <= delta.
    pub fn mixing_time(&mut self, delta: f64) -> Result<usize> {
        if delta >= 1.0 {
            return Ok(0);
        }
        if !(delta > 0.0) {
            return Err(Error::InvalidInput(format!("delta {delta} not in (0,1)")));
        }
        for k in 0..=MIXING_CAP {
            if self.tv(k) <= delta {
                return Ok(k);
            }
        }
        Err(Error::MixingTimeCap {
            cap: MIXING_CAP,
            delta,
        })
    }
}

fn worst_tv(pk: &DMatrix<f64>, mu: &DVector<f64>) -> f64 {
    let n = pk.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let mut s = 0.0;
        for j in 0..n {
            s += (pk[(i, j)] - mu[j]).abs();
        }
        worst = worst.max(0.5 * s);
    }
    worst
}

impl MarkovChain {
    /// Validates the matrix, computes the stationary distribution, and fits
    /// the uniform-ergodicity envelope (C, rho) by least squares on the log
    /// TV decay over [t_0.25, t_1e-6], with C widened to cover every observed
    /// point.
    pub fn new(p: DMatrix<f64>) -> Result<Self> {
        let stationary = stationary(&p)?;
        let mut chain = MarkovChain {
            p,
            stationary,
            c_erg: 1.0,
            rho: 0.5,
        };
        let (c, rho) = fit_ergodicity(&chain)?;
        chain.c_erg = c;
        chain.rho = rho;
        Ok(chain)
    }

    pub fn n_states(&self) -> usize {
        self.p.nrows()
    }

    /// Exact TV mixing time at accuracy delta.
    pub fn mixing_time(&self, delta: f64) -> Result<usize> {
        TvCurve::new(self).mixing_time(delta)
    }

    /// Mixing table at the supplied accuracies.
    pub fn mixing_table(&self, deltas: &[f64]) -> Result<MixingTable> {
        let mut curve = TvCurve::new(self);
        let mut entries = Vec::with_capacity(deltas.len());
        for &d in deltas {
            entries.push((d, curve.mixing_time(d)?));
        }
        Ok(MixingTable { entries })
    }

    /// Samples one transition from state `y`.
    pub fn sample_next<R: Rng>(&self, y: usize, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for j in 0..self.p.ncols() {
            acc += self.p[(y, j)];
            if u < acc {
                return j;
            }
        }
        self.p.ncols() - 1
    }

    /// Deterministic seeded trajectory of the given length (including y0).
    pub fn sample_path(&self, y0: usize, length: usize, seed: u64) -> Result<Vec<usize>> {
        if y0 >= self.n_states() {
            return Err(Error::InvalidInput(format!("start state {y0} out of range")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut path = Vec::with_capacity(length);
        let mut y = y0;
        path.push(y);
        for _ in 1..length {
            y = self.sample_next(y, &mut rng);
            path.push(y);
        }
        Ok(path)
    }

    /// Samples a state from the stationary distribution.
    pub fn sample_stationary<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for j in 0..self.stationary.len() {
            acc += self.stationary[j];
            if u < acc {
                return j;
            }
        }
        self.stationary.len() - 1
    }

    /// Operator-norm mixing time for state-indexed matrices/vectors:
    /// min k with sup_y ||E[A(Y_k)|Y_0=y] - Abar|| <= delta * l1 and the
    /// analogous bound for b with l2.
    pub fn operator_mixing_time(
        &self,
        a_fn: &dyn Fn(usize) -> DMatrix<f64>,
        b_fn: &dyn Fn(usize) -> DVector<f64>,
        l1: f64,
        l2: f64,
        delta: f64,
    ) -> Result<usize> {
        if delta >= 1.0 {
            return Ok(0);
        }
        let n = self.n_states();
        let mats: Vec<DMatrix<f64>> = (0..n).map(|y| a_fn(y)).collect();
        let vecs: Vec<DVector<f64>> = (0..n).map(|y| b_fn(y)).collect();
        let abar = {
            let mut m = mats[0].clone() * 0.0;
            for y in 0..n {
                m += self.stationary[y] * &mats[y];
            }
            m
        };
        let bbar = {
            let mut v = vecs[0].clone() * 0.0;
            for y in 0..n {
                v += self.stationary[y] * &vecs[y];
            }
            v
        };
        let mut pk = DMatrix::<f64>::identity(n, n);
        for k in 0..=MIXING_CAP {
            let mut ok = true;
            for y in 0..n {
                let mut am = abar.clone() * 0.0;
                let mut bv = bbar.clone() * 0.0;
                for j in 0..n {
                    am += pk[(y, j)] * &mats[j];
                    bv += pk[(y, j)] * &vecs[j];
                }
                if crate::spectral::operator_norm2(&(am - &abar)) > delta * l1
                    || (bv - &bbar).norm() > delta * l2
                {
                    ok = false;
                    break;
                }
            }
            if ok {
                return Ok(k);
            }
            pk = &pk * &self.p;
        }
        Err(Error::MixingTimeCap {
            cap: MIXING_CAP,
            delta,
        })
    }
}

/// Least-squares fit of log TV decay, returning (C, rho) covering all points.
fn fit_ergodicity(chain: &MarkovChain) -> Result<(f64, f64)> {
    let mut curve = TvCurve::new(chain);
    let floor = 1e-9;
    let t_hi = curve.mixing_time(0.25).unwrap_or(1);
    let t_lo_target: f64 = 1e-6;
    let mut t_end = t_hi;
    for k in t_hi.. {
        if curve.tv(k) <= t_lo_target.max(floor) || k > t_hi + 100_000 {
            t_end = k;
            break;
        }
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for k in t_hi.max(1)..=t_end {
        let v = curve.tv(k);
        if v > floor {
            xs.push(k as f64);
            ys.push(v.ln());
        }
    }
    let rho = if xs.len() >= 2 {
        let n = xs.len() as f64;
        let sx: f64 = xs.iter().sum();
        let sy: f64 = ys.iter().sum();
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        slope.exp().clamp(1e-12, 1.0 - 1e-12)
    } else {
        // Very fast chain: fall back to the one-step contraction.
        let tv1 = curve.tv(1).max(floor);
        let tv0 = curve.tv(0).max(floor);
        (tv1 / tv0).clamp(1e-12, 1.0 - 1e-12)
    };
    // C covers every observed point.
    let mut c: f64 = 1e-12;
    for k in 0..=t_end {
        let v = curve.tv(k);
        if v > 0.0 {
            c = c.max(v / rho.powi(k as i32));
        }
    }
    Ok((c, rho))
}

/// Reads a chain from a CSV row-stochastic matrix.
pub fn chain_from_csv(path: &std::path::Path) -> Result<MarkovChain> {
    MarkovChain::new(crate::linalg::read_matrix_csv(path)?)
}
