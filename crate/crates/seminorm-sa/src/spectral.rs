//! Spectral decomposition, classification of generalized eigenspaces by
//! modulus / real part, and the explicit construction of a contracting
//! seminorm for a linear map on the complement of its non-contracting part.

use crate::error::{Error, Result};
use crate::linalg;
use crate::seminorm::Seminorm;
use nalgebra::{Complex, DMatrix, DVector};

/// Stability convention: unit circle (discrete) or imaginary axis (continuous).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Discrete,
    Continuous,
}

/// Absolute tolerance for the classification boundary.
pub const BOUNDARY_TOL: f64 = 1e-8;

/// A square real matrix with cached Schur factorization and eigenvalues.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub a: DMatrix<f64>,
    /// Orthogonal factor U with A = U S U^T.
    pub schur_u: DMatrix<f64>,
    /// Quasi-upper-triangular factor S.
    pub schur_s: DMatrix<f64>,
    pub eigenvalues: Vec<Complex<f64>>,
}

/// Generalized-eigenspace split by stability class.
#[derive(Debug, Clone)]
pub struct InvariantSplit {
    pub mode: Mode,
    pub stable_basis: DMatrix<f64>,
    pub unstable_basis: DMatrix<f64>,
}

/// Computes the Schur factorization and eigenvalues of a square matrix.
pub fn decompose(a: &DMatrix<f64>) -> Result<LinearSystem> {
    if a.nrows() != a.ncols() {
        return Err(Error::InvalidInput("matrix must be square".into()));
    }
    linalg::check_finite(a)?;
    let schur = nalgebra::Schur::try_new(a.clone(), 1e-14, 100_000)
        .ok_or_else(|| Error::NonConvergence("Schur iteration did not converge".into()))?;
    let eigenvalues: Vec<Complex<f64>> = a.complex_eigenvalues().iter().cloned().collect();
    let (u, s) = schur.unpack();
    let recon_err = (&u * &s * u.transpose() - a).norm();
    if recon_err > 1e-10 * a.norm().max(1e-300) && recon_err > 1e-12 {
        return Err(Error::NonConvergence(format!(
            "Schur reconstruction error {recon_err} too large"
        )));
    }
    Ok(LinearSystem {
        a: a.clone(),
        schur_u: u,
        schur_s: s,
        eigenvalues,
    })
}

/// Signed distance of an eigenvalue to the stability boundary; >= 0 means
/// non-contracting ("unstable" side, boundary included).
fn stability_key(l: Complex<f64>, mode: Mode) -> f64 {
    match mode {
        Mode::Discrete => l.norm() - 1.0,
        Mode::Continuous => l.re,
    }
}

/// Splits R^d into the generalized eigenspaces of the stable and unstable
/// eigenvalue classes. Errors when an eigenvalue is within `BOUNDARY_TOL` of
/// the boundary without lying exactly on it.
pub fn unstable_subspace(sys: &LinearSystem, mode: Mode) -> Result<InvariantSplit> {
    let d = sys.a.nrows();
    let mut stable: Vec<Complex<f64>> = Vec::new();
    let mut unstable: Vec<Complex<f64>> = Vec::new();
    for &l in &sys.eigenvalues {
        let key = stability_key(l, mode);
        if key == 0.0 || key >= BOUNDARY_TOL {
            unstable.push(l);
        } else if key <= -BOUNDARY_TOL {
            stable.push(l);
        } else {
            return Err(Error::BoundaryEigenvalue {
                re: l.re,
                im: l.im,
                tol: BOUNDARY_TOL,
            });
        }
    }
    let stable_basis = annihilator_kernel(&sys.a, &stable)?;
    let unstable_basis = annihilator_kernel(&sys.a, &unstable)?;
    if stable_basis.ncols() != stable.len() || unstable_basis.ncols() != unstable.len() {
        return Err(Error::NonConvergence(format!(
            "eigenspace dimensions ({}, {}) disagree with eigenvalue counts ({}, {})",
            stable_basis.ncols(),
            unstable_basis.ncols(),
            stable.len(),
            unstable.len()
        )));
    }
    let split = InvariantSplit {
        mode,
        stable_basis,
        unstable_basis,
    };
    let scale = 1.0 + sys.a.norm();
    for b in [&split.stable_basis, &split.unstable_basis] {
        if b.ncols() > 0 {
            let resid = ((DMatrix::identity(d, d) - linalg::projector(b)) * &sys.a * b).norm();
            if resid > 1e-8 * scale {
                return Err(Error::NonConvergence(format!(
                    "invariant subspace residual {resid} too large"
                )));
            }
        }
    }
    Ok(split)
}

/// Kernel of prod over the listed eigenvalues of the real factors (A - l I)
/// (complex pairs combined into quadratics): the generalized eigenspace of
/// exactly that eigenvalue class, multiplicities included.
fn annihilator_kernel(a: &DMatrix<f64>, class: &[Complex<f64>]) -> Result<DMatrix<f64>> {
    let d = a.nrows();
    if class.is_empty() {
        return Ok(DMatrix::zeros(d, 0));
    }
    if class.len() == d {
        return Ok(DMatrix::identity(d, d));
    }
    let mut m = DMatrix::<f64>::identity(d, d);
    let mut pending: Vec<Complex<f64>> = class.to_vec();
    while let Some(l) = pending.pop() {
        if l.im.abs() > 0.0 {
            // Remove the conjugate partner and apply the real quadratic factor.
            if let Some(pos) = pending
                .iter()
                .position(|&c| (c - l.conj()).norm() < 1e-9 * (1.0 + l.norm()))
            {
                pending.swap_remove(pos);
            }
            let f = a * a - 2.0 * l.re * a + (l.norm_sqr()) * DMatrix::identity(d, d);
            m = &m * f;
        } else {
            m = &m * (a - l.re * DMatrix::identity(d, d));
        }
        let n = m.norm();
        if n > 0.0 {
            m /= n;
        }
    }
    Ok(linalg::null_basis(&m))
}

/// Matrix exponential by scaling-and-squaring with a Pade(13) approximant.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    // Coefficients of the degree-13 Pade numerator.
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    let d = a.nrows();
    let norm = a.abs().column_sum().max(); // 1-norm
    let mut s = 0i32;
    let theta13 = 5.371920351148152;
    if norm > theta13 {
        s = (norm / theta13).log2().ceil() as i32;
    }
    let a1 = a / 2f64.powi(s);
    let a2 = &a1 * &a1;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let id = DMatrix::<f64>::identity(d, d);
    let u = &a1
        * (&a6 * (B[13] * &a6 + B[11] * &a4 + B[9] * &a2)
            + B[7] * &a6
            + B[5] * &a4
            + B[3] * &a2
            + B[1] * &id);
    let v = &a6 * (B[12] * &a6 + B[10] * &a4 + B[8] * &a2)
        + B[6] * &a6
        + B[4] * &a4
        + B[2] * &a2
        + B[0] * &id;
    let mut r = (&v - &u)
        .lu()
        .solve(&(&v + &u))
        .expect("Pade denominator nonsingular");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// Seminorm from the stable-part construction, with its certified
/// per-step operator bound.
#[derive(Debug, Clone)]
pub struct JordanSeminorm {
    pub seminorm: Seminorm,
    /// Predicted contraction factor (1 + rho(stable part)) / 2.
    pub predicted_gamma: f64,
    /// Scaling parameter actually used.
    pub delta: f64,
    /// Certified operator bound: p(Ax) <= sigma p(x) with sigma <= gamma.
    pub sigma: f64,
}

/// Builds a seminorm with kernel E under which x -> Ax contracts with factor
/// gamma = (1 + rho) / 2, where rho is the spectral radius of the operator A
/// induces on the quotient by E (discrete mode).
///
/// Since E is A-invariant, M = B' A B (B an orthonormal basis of the
/// complement of E) represents that quotient operator exactly, so
/// p(x) = ||G B' x||_2 satisfies p(Ax) = ||G M B' x|| <= ||G M G^-1|| p(x).
/// G comes from a Schur factorization of M with 2x2 blocks standardized to
/// scaled rotations and a block-indexed geometric rescaling of the
/// strictly-upper part; delta defaults to (1 - rho)/2 and is halved until the
/// certified operator norm drops below gamma.
pub fn jordan_seminorm(
    sys: &LinearSystem,
    e_basis: &DMatrix<f64>,
    delta_override: Option<f64>,
) -> Result<JordanSeminorm> {
    let d = sys.a.nrows();
    let a = &sys.a;
    let scale = 1.0 + a.norm();
    // E must be invariant under A.
    if e_basis.ncols() > 0 {
        let e_orth = linalg::range_basis(e_basis);
        let resid = ((DMatrix::identity(d, d) - linalg::projector(&e_orth)) * a * &e_orth).norm();
        if resid > 1e-8 * scale {
            return Err(Error::InvalidInput(format!(
                "E is not A-invariant (residual {resid})"
            )));
        }
    }
    let split = unstable_subspace(sys, Mode::Discrete)?;
    let e_orth = linalg::range_basis(e_basis);
    // E must contain the unstable subspace.
    if split.unstable_basis.ncols() > 0 {
        let pu = linalg::projector(&e_orth);
        let resid = ((DMatrix::identity(d, d) - pu) * &split.unstable_basis).norm();
        if resid > 1e-8 {
            return Err(Error::InvalidInput(format!(
                "E does not contain the unstable subspace (residual {resid})"
            )));
        }
    }
    let _ = &split;
    // Quotient coordinates: orthonormal basis of the complement of E.
    let b = linalg::complement_basis(&e_orth);
    let k = b.ncols();
    if k == 0 {
        // Everything is excluded: the zero seminorm (kernel = R^d).
        let p = Seminorm::quadratic(DMatrix::zeros(d, d))?;
        return Ok(JordanSeminorm {
            seminorm: p,
            predicted_gamma: 0.5,
            delta: delta_override.unwrap_or(0.5),
            sigma: 0.0,
        });
    }
    // The operator A induces on the quotient by E.
    let m = b.transpose() * a * &b;
    let rho = m
        .complex_eigenvalues()
        .iter()
        .map(|l| l.norm())
        .fold(0.0, f64::max);
    if rho >= 1.0 - 1e-12 {
        return Err(Error::InvalidInput(format!(
            "quotient spectral radius {rho} is not strictly inside the unit circle"
        )));
    }
    let gamma = (1.0 + rho) / 2.0;
    let mut delta = delta_override.unwrap_or((1.0 - rho) / 2.0);
    if !(delta > 0.0) {
        return Err(Error::InvalidInput("delta must be positive".into()));
    }

    // Schur of the restriction, with 2x2 blocks standardized to p,q rotations.
    let schur = nalgebra::Schur::try_new(m.clone(), 1e-14, 100_000)
        .ok_or_else(|| Error::NonConvergence("Schur of stable restriction failed".into()))?;
    let (u, t) = schur.unpack();
    let (w, blocks) = standardize_blocks(&t)?;
    let w_inv = w
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularSystem("block standardization singular".into()))?;
    let t_std = &w_inv * &t * &w;

    let mut sigma = f64::INFINITY;
    let mut g = DMatrix::<f64>::identity(k, k);
    for _ in 0..200 {
        let dd = DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                delta.powi(blocks[i] as i32)
            } else {
                0.0
            }
        });
        let dd_inv = DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                delta.powi(-(blocks[i] as i32))
            } else {
                0.0
            }
        });
        let s_mat = &dd_inv * &t_std * &dd;
        sigma = operator_norm2(&s_mat);
        if sigma <= gamma {
            g = dd_inv * &w_inv * u.transpose();
            break;
        }
        delta /= 2.0;
    }
    if sigma > gamma {
        return Err(Error::NonConvergence(format!(
            "could not certify contraction: sigma {sigma} > gamma {gamma}"
        )));
    }

    // p(x) = || G B' x ||_2; the kernel is exactly E.
    let n_mat = &g * b.transpose();
    let p_mat = linalg::symmetrize(&(n_mat.transpose() * &n_mat));
    let seminorm = Seminorm::quadratic(p_mat)?;
    Ok(JordanSeminorm {
        seminorm,
        predicted_gamma: gamma,
        delta,
        sigma,
    })
}

/// Block-diagonal similarity W turning each 2x2 Schur block into the
/// standard form [[p, q], [-q, p]]; returns W and, per column, the index of
/// the diagonal block it belongs to.
fn standardize_blocks(t: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<usize>)> {
    let k = t.nrows();
    let mut w = DMatrix::<f64>::identity(k, k);
    let mut blocks = vec![0usize; k];
    let mut i = 0;
    let mut bidx = 0;
    while i < k {
        let two_by_two = i + 1 < k && t[(i + 1, i)].abs() > 1e-14 * (1.0 + t.norm());
        if two_by_two {
            let (a, b, c, d) = (t[(i, i)], t[(i, i + 1)], t[(i + 1, i)], t[(i + 1, i + 1)]);
            let disc = (a - d) * (a - d) / 4.0 + b * c;
            if disc >= 0.0 {
                return Err(Error::NonConvergence(
                    "real-eigenvalue 2x2 Schur block not split".into(),
                ));
            }
            let p = (a + d) / 2.0;
            let q = (-disc).sqrt();
            // Complex eigenvector of [[a,b],[c,d]] for eigenvalue p + i q:
            // (b, p - a + i q) works when b != 0; otherwise (p - d + i q, c).
            let (re, im) = if b.abs() >= c.abs() {
                (DVector::from_vec(vec![b, p - a]), DVector::from_vec(vec![0.0, q]))
            } else {
                (DVector::from_vec(vec![p - d, c]), DVector::from_vec(vec![q, 0.0]))
            };
            // Columns Re v, Im v give B W2 = W2 [[p, q], [-q, p]].
            let mut w2 = DMatrix::<f64>::zeros(2, 2);
            w2.set_column(0, &re);
            w2.set_column(1, &im);
            // Scalar normalization only: per-column scaling would break the
            // rotation form of the standardized block.
            let n = w2.norm();
            if n > 0.0 {
                w2 /= n;
            }
            w[(i, i)] = w2[(0, 0)];
            w[(i, i + 1)] = w2[(0, 1)];
            w[(i + 1, i)] = w2[(1, 0)];
            w[(i + 1, i + 1)] = w2[(1, 1)];
            blocks[i] = bidx;
            blocks[i + 1] = bidx;
            i += 2;
        } else {
            blocks[i] = bidx;
            i += 1;
        }
        bidx += 1;
    }
    Ok((w, blocks))
}

/// Spectral norm via SVD.
pub fn operator_norm2(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    // sqrt of the top eigenvalue of M'M; no cancellation at the maximum, and
    // the symmetric eigensolver is more reliable here than the SVD iteration.
    let gram = linalg::symmetrize(&(m.transpose() * m));
    let top = nalgebra::SymmetricEigen::new(gram).eigenvalues.max();
    top.max(0.0).sqrt()
}
