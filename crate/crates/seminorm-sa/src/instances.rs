//! Seeded test-instance generators: random linear systems with an invariant
//! subspace covering the unstable part, simple Markov chains, and the scalar
//! contraction problem used throughout the experiment suite.

use crate::error::Result;
use crate::linalg;
use crate::markov::MarkovChain;
use crate::sa::SAProblem;
use crate::seminorm::Seminorm;
use crate::spectral::Mode;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::sync::Arc;

/// A random linear system together with the designated kernel subspace E
/// (invariant under A and containing the unstable generalized eigenspace).
#[derive(Debug, Clone)]
pub struct SystemInstance {
    pub a: DMatrix<f64>,
    pub e_basis: DMatrix<f64>,
    pub mode: Mode,
    pub dim: usize,
    pub n_unstable: usize,
}

/// Generates a system of dimension 2..=10 in real block form V Lambda V^{-1}
/// with at least one eigenvalue strictly on each side of the stability
/// boundary (margin >= 0.05), an occasional stable Jordan pair, and E equal
/// to the span of the unstable blocks plus (sometimes) one stable
/// eigendirection. V has condition number at most ~16.
pub fn random_system(mode: Mode, seed: u64) -> SystemInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1e57_ca5e);
    let d = rng.gen_range(2..=10usize);
    // Block layout: list of (size, unstable?) blocks filling dimension d.
    let mut lambda = DMatrix::<f64>::zeros(d, d);
    let mut unstable_cols: Vec<usize> = Vec::new();
    let mut stable_single_cols: Vec<usize> = Vec::new();
    let mut pos = 0usize;
    let mut have_unstable = false;
    let mut have_stable = false;
    while pos < d {
        let remaining = d - pos;
        let unstable = if !have_unstable && remaining <= 2 {
            true
        } else if !have_stable && remaining <= 2 {
            false
        } else {
            rng.gen_bool(0.4)
        };
        let size = if remaining >= 2 && rng.gen_bool(0.4) { 2 } else { 1 };
        match (size, unstable) {
            (1, true) => {
                lambda[(pos, pos)] = match mode {
                    Mode::Discrete => {
                        let m = rng.gen_range(1.05..1.8);
                        if rng.gen_bool(0.5) { m } else { -m }
                    }
                    Mode::Continuous => rng.gen_range(0.05..1.0),
                };
                unstable_cols.push(pos);
            }
            (1, false) => {
                lambda[(pos, pos)] = match mode {
                    Mode::Discrete => {
                        let m = rng.gen_range(0.1..0.9);
                        if rng.gen_bool(0.5) { m } else { -m }
                    }
                    Mode::Continuous => -rng.gen_range(0.05..1.0),
                };
                stable_single_cols.push(pos);
            }
            (2, u) => {
                let jordan = !u && rng.gen_bool(0.3);
                if jordan {
                    // Stable Jordan pair: repeated real eigenvalue.
                    let l = match mode {
                        Mode::Discrete => rng.gen_range(0.1..0.85),
                        Mode::Continuous => -rng.gen_range(0.1..1.0),
                    };
                    lambda[(pos, pos)] = l;
                    lambda[(pos + 1, pos + 1)] = l;
                    lambda[(pos, pos + 1)] = 1.0;
                } else {
                    // Complex pair in real rotation form.
                    let (re, im) = match (mode, u) {
                        (Mode::Discrete, true) => {
                            let m = rng.gen_range(1.05..1.8);
                            let ang = rng.gen_range(0.2..std::f64::consts::PI - 0.2);
                            (m * ang.cos(), m * ang.sin())
                        }
                        (Mode::Discrete, false) => {
                            let m = rng.gen_range(0.1..0.9);
                            let ang = rng.gen_range(0.2..std::f64::consts::PI - 0.2);
                            (m * ang.cos(), m * ang.sin())
                        }
                        (Mode::Continuous, true) => {
                            (rng.gen_range(0.05..1.0), rng.gen_range(0.2..2.0))
                        }
                        (Mode::Continuous, false) => {
                            (-rng.gen_range(0.05..1.0), rng.gen_range(0.2..2.0))
                        }
                    };
                    lambda[(pos, pos)] = re;
                    lambda[(pos + 1, pos + 1)] = re;
                    lambda[(pos, pos + 1)] = im;
                    lambda[(pos + 1, pos)] = -im;
                }
                if u {
                    unstable_cols.push(pos);
                    unstable_cols.push(pos + 1);
                }
            }
            _ => unreachable!(),
        }
        if unstable {
            have_unstable = true;
        } else {
            have_stable = true;
        }
        pos += size;
    }
    // Similarity with controlled conditioning: orthogonal * diag * orthogonal.
    let q1 = random_orthogonal(d, &mut rng);
    let q2 = random_orthogonal(d, &mut rng);
    let scales = DVector::from_fn(d, |_, _| rng.gen_range(0.5..2.0));
    let v = &q1 * DMatrix::from_diagonal(&scales) * &q2;
    let v_inv = v.clone().lu().try_inverse().expect("well-conditioned V");
    let a = &v * lambda * &v_inv;
    // E = span of the unstable block columns of V, sometimes plus one stable
    // eigendirection (both are A-invariant by construction).
    let mut e_cols = unstable_cols.clone();
    if !stable_single_cols.is_empty() && rng.gen_bool(0.5) {
        e_cols.push(stable_single_cols[0]);
    }
    let mut raw = DMatrix::zeros(d, e_cols.len());
    for (j, &c) in e_cols.iter().enumerate() {
        raw.set_column(j, &v.column(c));
    }
    let e_basis = if raw.ncols() > 0 {
        linalg::range_basis(&raw)
    } else {
        DMatrix::zeros(d, 0)
    };
    SystemInstance {
        a,
        e_basis,
        mode,
        dim: d,
        n_unstable: unstable_cols.len(),
    }
}

fn random_orthogonal(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    qr.q()
}

/// Two-state chain with switch probabilities a (from state 0) and b (from 1).
pub fn two_state_chain(a: f64, b: f64) -> Result<MarkovChain> {
    let p = DMatrix::from_row_slice(2, 2, &[1.0 - a, a, b, 1.0 - b]);
    MarkovChain::new(p)
}

/// Scalar contraction test problem: F(x, y) = g_y x with g_0 = 0.3 and
/// g_1 = 0.7 on the symmetric two-state chain with switch probability 0.3
/// (stationary mean factor 0.5), plus an additive sign-symmetric noise of
/// magnitude sigma. The target is x* = 0 and p is the absolute value.
pub fn scalar_problem(sigma: f64) -> Result<SAProblem> {
    let chain = two_state_chain(0.3, 0.3)?;
    let gammas = [0.3f64, 0.7];
    let p_c = Seminorm::quadratic(DMatrix::identity(1, 1))?;
    let f = Arc::new(move |x: &DVector<f64>, y: usize| gammas[y] * x);
    let noise = Arc::new(move |_x: &DVector<f64>, _y: usize, rng: &mut ChaCha8Rng| {
        let s: bool = rng.gen();
        DVector::from_element(1, if s { sigma } else { -sigma })
    });
    Ok(SAProblem {
        dim: 1,
        f,
        noise: Some(noise),
        chain,
        p_c,
        gamma: 0.5,
        a1: 0.7,
        b1: 0.0,
        a2: 0.0,
        b2: sigma,
        x0: DVector::from_element(1, 1.0),
        x_star: DVector::zeros(1),
    })
}
