//! Small dense linear-algebra helpers shared across modules.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Relative singular-value threshold for rank decisions.
pub const RANK_TOL: f64 = 1e-10;

/// Orthonormal basis of the column space of `m`, rank-revealed by Householder
/// QR with column pivoting (diagonal of R above `RANK_TOL * |r_00|`).
/// Returns a d x r matrix, possibly r = 0.
pub fn range_basis(m: &DMatrix<f64>) -> DMatrix<f64> {
    let d = m.nrows();
    if m.ncols() == 0 {
        return DMatrix::zeros(d, 0);
    }
    let qr = m.clone().col_piv_qr();
    let r_mat = qr.r();
    let k = r_mat.nrows().min(r_mat.ncols());
    let r0 = if k > 0 { r_mat[(0, 0)].abs() } else { 0.0 };
    // Inputs here are O(1)-scaled (projectors, normalized products), so a
    // leading pivot at roundoff level means the matrix is numerically zero.
    if r0 <= 1e-12 {
        return DMatrix::zeros(d, 0);
    }
    let mut rank = 0;
    for i in 0..k {
        if r_mat[(i, i)].abs() > RANK_TOL * r0 {
            rank = i + 1;
        } else {
            break;
        }
    }
    let q = qr.q();
    q.columns(0, rank).into_owned()
}

/// Orthonormal basis of the null space of `m`: the orthogonal complement of
/// the row space.
pub fn null_basis(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.ncols();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    if m.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    complement_basis(&range_basis(&m.transpose()))
}

/// Orthonormal basis of the orthogonal complement of the span of the columns
/// of `basis` (a d x m matrix with orthonormal columns) in R^d.
pub fn complement_basis(basis: &DMatrix<f64>) -> DMatrix<f64> {
    let d = basis.nrows();
    if basis.ncols() == 0 {
        return DMatrix::identity(d, d);
    }
    range_basis(&(DMatrix::identity(d, d) - basis * basis.transpose()))
}

/// Orthogonal projector onto the span of the (orthonormal) columns of `basis`.
pub fn projector(basis: &DMatrix<f64>) -> DMatrix<f64> {
    let d = basis.nrows();
    if basis.ncols() == 0 {
        return DMatrix::zeros(d, d);
    }
    basis * basis.transpose()
}

/// Whether two orthonormal bases span the same subspace, to tolerance `tol`
/// on the difference of the orthogonal projectors.
pub fn same_subspace(b1: &DMatrix<f64>, b2: &DMatrix<f64>, tol: f64) -> bool {
    if b1.nrows() != b2.nrows() || b1.ncols() != b2.ncols() {
        return false;
    }
    (projector(b1) - projector(b2)).norm() <= tol
}

/// Checks that every entry of `m` is finite.
pub fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

/// Symmetrizes a matrix: (M + M^T)/2.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Verifies that `p` is symmetric (tol 1e-10 relative) and PSD
/// (eigenvalues >= -1e-10 * scale); returns the symmetric eigendecomposition
/// eigenvalues on success.
pub fn check_psd(p: &DMatrix<f64>) -> Result<DVector<f64>> {
    let scale = p.norm().max(1.0);
    if (p - p.transpose()).norm() > 1e-10 * scale {
        return Err(Error::InvalidInput("matrix not symmetric".into()));
    }
    let eig = nalgebra::SymmetricEigen::new(symmetrize(p));
    if eig.eigenvalues.iter().any(|&l| l < -1e-10 * scale) {
        return Err(Error::InvalidInput(format!(
            "matrix not PSD: min eigenvalue {}",
            eig.eigenvalues.min()
        )));
    }
    Ok(eig.eigenvalues)
}

/// Reads a matrix from a CSV file: one row per line, comma-separated reals.
pub fn read_matrix_csv(path: &std::path::Path) -> Result<DMatrix<f64>> {
    let text = std::fs::read_to_string(path)?;
    parse_matrix_csv(&text)
}

/// Parses CSV text into a matrix.
pub fn parse_matrix_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        let row = row.map_err(|e| Error::Parse(format!("line {}: {}", lineno + 1, e)))?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Parse(format!(
                    "line {}: ragged row ({} vs {} fields)",
                    lineno + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse("empty matrix".into()));
    }
    let (nr, nc) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

/// Formats a real with 17 significant digits, '.' decimal separator.
pub fn fmt_real(x: f64) -> String {
    format!("{:.16e}", x)
}

/// Writes a matrix as CSV with full-precision reals.
pub fn write_matrix_csv(path: &std::path::Path, m: &DMatrix<f64>) -> Result<()> {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let fields: Vec<String> = (0..m.ncols()).map(|j| fmt_real(m[(i, j)])).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Matrix as JSON array-of-rows.
pub fn matrix_to_json(m: &DMatrix<f64>) -> serde_json::Value {
    let rows: Vec<Vec<f64>> = (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect();
    serde_json::json!(rows)
}

/// Matrix from a JSON array-of-rows.
pub fn matrix_from_json(v: &serde_json::Value) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = serde_json::from_value(v.clone())?;
    if rows.is_empty() {
        return Err(Error::Parse("empty matrix".into()));
    }
    let nc = rows[0].len();
    if rows.iter().any(|r| r.len() != nc) {
        return Err(Error::Parse("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), nc, |i, j| rows[i][j]))
}

/// Kahan-compensated sum of an iterator of reals.
pub fn kahan_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut s = 0.0;
    let mut c = 0.0;
    for x in xs {
        let y = x - c;
        let t = s + y;
        c = (t - s) - y;
        s = t;
    }
    s
}
