//! Generalized Moreau envelope M_E = (1/2 p^2) box (1/(2 theta)) ||.||_s^2
//! with Euclidean smoothing norm, and its sandwich constants.

use crate::error::{Error, Result};
use crate::seminorm::{BaseNorm, Seminorm, SeminormKind};
use nalgebra::{DMatrix, DVector};

/// Smoothed Lyapunov function attached to a seminorm.
#[derive(Debug, Clone)]
pub struct MoreauEnvelope {
    pub p_c: Seminorm,
    pub theta: f64,
    /// Smoothness constant of 1/2 ||.||_s^2 (1 for the Euclidean norm).
    pub l_smooth: f64,
    /// l_cs ||x||_2 <= ||x||_c <= u_cs ||x||_2.
    pub l_cs: f64,
    pub u_cs: f64,
    /// Sandwich constants: l_cm^2 M_E <= 1/2 p^2 <= u_cm^2 M_E.
    pub l_cm: f64,
    pub u_cm: f64,
}

impl MoreauEnvelope {
    pub fn new(p_c: Seminorm, theta: f64) -> Result<Self> {
        if !(theta > 0.0) {
            return Err(Error::InvalidInput("theta must be positive".into()));
        }
        let (l_cs, u_cs) = p_c.norm_equivalence_to_euclidean();
        Ok(MoreauEnvelope {
            p_c,
            theta,
            l_smooth: 1.0,
            l_cs,
            u_cs,
            l_cm: (1.0 + theta * l_cs * l_cs).sqrt(),
            u_cm: (1.0 + theta * u_cs * u_cs).sqrt(),
        })
    }

    /// Picks theta on the grid {2^-i} (largest admissible) so that
    /// gamma^2 < (1 + theta l_cs^2) / (1 + theta u_cs^2) holds with a 10%
    /// margin of the gap to 1.
    pub fn for_contraction(p_c: Seminorm, gamma: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidInput(format!(
                "contraction factor {gamma} not in [0,1)"
            )));
        }
        let (l_cs, u_cs) = p_c.norm_equivalence_to_euclidean();
        let g2 = gamma * gamma;
        let target = g2 + 0.1 * (1.0 - g2);
        for i in 0..=60 {
            let theta = 2f64.powi(-i);
            let ratio = (1.0 + theta * l_cs * l_cs) / (1.0 + theta * u_cs * u_cs);
            if ratio >= target {
                return Self::new(p_c, theta);
            }
        }
        Err(Error::InvalidInput(
            "no admissible theta on the 2^-i grid".into(),
        ))
    }

    /// phi_1 = (1 + theta u_cs^2) / (1 + theta l_cs^2) = (u_cm / l_cm)^2.
    pub fn phi1(&self) -> f64 {
        (1.0 + self.theta * self.u_cs * self.u_cs) / (1.0 + self.theta * self.l_cs * self.l_cs)
    }

    /// Evaluates M_E(x).
    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        match self.p_c.kind() {
            SeminormKind::Quadratic { .. }
            | SeminormKind::SubspaceDistance {
                base: BaseNorm::Euclidean,
            } => {
                let p = self.p_c.quadratic_matrix().expect("quadratic type");
                quadratic_envelope(&p, self.theta, x)
            }
            SeminormKind::Span { .. } => span_family_envelope(1.0, self.theta, x),
            SeminormKind::SubspaceDistance {
                base: BaseNorm::ScaledSup(f),
            } => {
                if self.p_c.kernel_basis().ncols() == 0 {
                    sup_ball_envelope(*f, self.theta, x)
                } else {
                    span_family_envelope(f / 2.0, self.theta, x)
                }
            }
        }
    }

    /// Independent numeric evaluation (gradient descent on the infimal
    /// convolution objective) for quadratic-type seminorms; used as a
    /// cross-check of the closed form.
    pub fn eval_numeric(&self, x: &DVector<f64>) -> Result<f64> {
        let p = self
            .p_c
            .quadratic_matrix()
            .ok_or_else(|| Error::InvalidInput("numeric cross-check is quadratic-only".into()))?;
        let lmax = nalgebra::SymmetricEigen::new(crate::linalg::symmetrize(&p))
            .eigenvalues
            .max()
            .max(0.0);
        let lip = lmax + 1.0 / self.theta;
        let step = 1.0 / lip;
        let mut y = x.clone();
        let tol = 1e-13 * (1.0 + x.norm());
        for _ in 0..1_000_000 {
            let grad = &p * &y + (&y - x) / self.theta;
            if grad.norm() <= tol {
                let obj = 0.5 * (y.transpose() * &p * &y)[(0, 0)]
                    + (x - &y).norm_squared() / (2.0 * self.theta);
                return Ok(obj);
            }
            y -= step * grad;
        }
        Err(Error::NonConvergence(
            "Moreau numeric minimization did not reach tolerance".into(),
        ))
    }
}

/// Closed-form envelope for p^2(x) = x^T P x: minimizer y* = (theta P + I)^{-1} x.
fn quadratic_envelope(p: &DMatrix<f64>, theta: f64, x: &DVector<f64>) -> f64 {
    let d = p.nrows();
    let m = theta * p + DMatrix::identity(d, d);
    let y = m.lu().solve(x).expect("theta P + I is SPD");
    0.5 * (y.transpose() * p * &y)[(0, 0)] + (x - &y).norm_squared() / (2.0 * theta)
}

/// Envelope for p = c * span: reduces to two nested one-dimensional convex
/// minimizations. The set {y : span(y) <= s} is the union over m of the boxes
/// [m, m+s]^d, so the squared Euclidean distance to it is a convex function
/// D(s) obtained by minimizing the clip distance over the box anchor m.
fn span_family_envelope(c: f64, theta: f64, x: &DVector<f64>) -> f64 {
    let (xmin, xmax) = (x.min(), x.max());
    if xmax - xmin <= 0.0 {
        return 0.0;
    }
    let dist2_at = |s: f64| -> f64 {
        // Minimize h(m) = sum_i dist(x_i, [m, m+s])^2 by bisection on the
        // monotone derivative.
        let mut lo = xmin - s;
        let mut hi = xmax;
        let dh = |m: f64| -> f64 {
            let mut g = 0.0;
            for &xi in x.iter() {
                g += 2.0 * (m - xi).max(0.0) - 2.0 * (xi - m - s).max(0.0);
            }
            g
        };
        for _ in 0..120 {
            let mid = 0.5 * (lo + hi);
            if dh(mid) <= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let m = 0.5 * (lo + hi);
        x.iter()
            .map(|&xi| {
                let d = (m - xi).max(0.0) + (xi - m - s).max(0.0);
                d * d
            })
            .sum()
    };
    let g = |s: f64| 0.5 * c * c * s * s + dist2_at(s) / (2.0 * theta);
    ternary_min(g, 0.0, xmax - xmin)
}

/// Envelope for p = f * ||.||_inf (empty kernel): boxes [-t, t]^d.
fn sup_ball_envelope(f: f64, theta: f64, x: &DVector<f64>) -> f64 {
    let r = x.amax();
    if r <= 0.0 {
        return 0.0;
    }
    let g = |t: f64| -> f64 {
        let d2: f64 = x
            .iter()
            .map(|&xi| {
                let d = (xi.abs() - t).max(0.0);
                d * d
            })
            .sum();
        0.5 * f * f * t * t + d2 / (2.0 * theta)
    };
    ternary_min(g, 0.0, r)
}

fn ternary_min<G: Fn(f64) -> f64>(g: G, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..120 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if g(m1) <= g(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    g(0.5 * (lo + hi))
}
