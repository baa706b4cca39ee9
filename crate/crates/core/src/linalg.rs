//! Dense real linear algebra used by every estimator.
//!
//! Everything here is self-contained f64 code: a row-major [`Matrix`],
//! symmetric eigendecomposition (cyclic Jacobi), thin SVD (one-sided Jacobi),
//! the polar retraction onto the Stiefel manifold, projection matrices, and
//! Cholesky factorization. All routines are deterministic; eigenvector and
//! singular-vector signs are fixed so repeated runs agree exactly.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be >= 1");
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Build from nested rows. All rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::contract("matrix must have at least one row and column"));
        }
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::contract("ragged rows in matrix construction"));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Matrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    /// Single column as a `p x 1` matrix.
    pub fn column_vector(v: &[f64]) -> Self {
        Matrix {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self.get(i, l);
                if a == 0.0 {
                    continue;
                }
                let src = other.row(l);
                let dst = out.row_mut(i);
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        out
    }

    /// `self * v` for a vector `v`.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "matvec dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `self^T * v`.
    pub fn tr_matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, v.len(), "tr_matvec dimension mismatch");
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let vi = v[i];
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += vi * a;
            }
        }
        out
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn frob_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> f64 {
        assert_eq!(self.rows, self.cols, "trace of non-square matrix");
        (0..self.rows).map(|i| self.get(i, i)).sum()
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert!(self.rows == other.rows && self.cols == other.cols);
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_symmetry_defect(&self) -> f64 {
        assert_eq!(self.rows, self.cols);
        let mut d: f64 = 0.0;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                d = d.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        d
    }

    /// Nested-row representation, used by the JSON model formats.
    pub fn to_nested(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Symmetric eigendecomposition: eigenvalues sorted descending, eigenvector
/// column `j` pairs with `values[j]`.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

/// A `p x k` matrix with orthonormal columns (`V^T V = I_k`).
#[derive(Debug, Clone, PartialEq)]
pub struct StiefelMatrix(Matrix);

/// Frobenius tolerance on `V^T V - I` accepted by [`StiefelMatrix::new`].
pub const STIEFEL_TOL: f64 = 1e-10;

impl StiefelMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        if m.cols() > m.rows() {
            return Err(Error::contract(format!(
                "Stiefel matrix needs k <= p, got {}x{}",
                m.rows(),
                m.cols()
            )));
        }
        let defect = orthonormality_defect(&m);
        if defect > STIEFEL_TOL {
            return Err(Error::contract(format!(
                "columns not orthonormal: ||V'V - I||_F = {defect:.3e}"
            )));
        }
        Ok(StiefelMatrix(m))
    }

    /// First `k` standard basis vectors.
    pub fn canonical(p: usize, k: usize) -> Self {
        let mut m = Matrix::zeros(p, k);
        for j in 0..k {
            m.set(j, j, 1.0);
        }
        StiefelMatrix(m)
    }

    #[inline]
    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.0.rows()
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.0.cols()
    }
}

/// `||V^T V - I_k||_F`.
pub fn orthonormality_defect(m: &Matrix) -> f64 {
    let k = m.cols();
    let mut defect = 0.0;
    for a in 0..k {
        for b in 0..k {
            let mut s = 0.0;
            for i in 0..m.rows() {
                s += m.get(i, a) * m.get(i, b);
            }
            let target = if a == b { 1.0 } else { 0.0 };
            defect += (s - target) * (s - target);
        }
    }
    defect.sqrt()
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Eigenvalues come back sorted descending; each eigenvector's sign is fixed
/// so its largest-magnitude entry is positive (first such entry on ties).
pub fn eigen_sym(a: &Matrix) -> Result<SymEigen> {
    if a.rows() != a.cols() {
        return Err(Error::contract(format!(
            "eigen_sym needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let scale = a.frob_norm().max(1.0);
    if a.max_symmetry_defect() > 1e-10 * scale {
        return Err(Error::contract("eigen_sym input is not symmetric"));
    }
    let n = a.rows();
    let mut m = a.clone();
    let mut v = Matrix::identity(n);

    let off = |m: &Matrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += m.get(i, j) * m.get(i, j);
            }
        }
        (2.0 * s).sqrt()
    };

    let norm = a.frob_norm().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        if off(&m) <= 1e-15 * norm {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // Rotate rows/columns p and q of m.
                for i in 0..n {
                    let mip = m.get(i, p);
                    let miq = m.get(i, q);
                    m.set(i, p, c * mip - s * miq);
                    m.set(i, q, s * mip + c * miq);
                }
                for j in 0..n {
                    let mpj = m.get(p, j);
                    let mqj = m.get(q, j);
                    m.set(p, j, c * mpj - s * mqj);
                    m.set(q, j, s * mpj + c * mqj);
                }
                for i in 0..n {
                    let vip = v.get(i, p);
                    let viq = v.get(i, q);
                    v.set(i, p, c * vip - s * viq);
                    v.set(i, q, s * vip + c * viq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| m.get(i, i)).collect();
    order.sort_by(|&i, &j| diag[j].partial_cmp(&diag[i]).unwrap());

    let values: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = v.column(src);
        let sign = column_sign(&col);
        for i in 0..n {
            vectors.set(i, dst, sign * col[i]);
        }
    }
    Ok(SymEigen { values, vectors })
}

/// +1 if the largest-magnitude entry (first on ties) is positive, else -1.
fn column_sign(col: &[f64]) -> f64 {
    let mut best = 0usize;
    for (i, v) in col.iter().enumerate() {
        if v.abs() > col[best].abs() {
            best = i;
        }
    }
    if col[best] < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Thin singular value decomposition `m = U diag(S) W^T`.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    /// `p x k`, orthonormal columns.
    pub u: Matrix,
    /// Singular values, descending, all >= 0.
    pub s: Vec<f64>,
    /// `k x k`, orthogonal.
    pub w: Matrix,
}

/// Thin SVD of a `p x k` matrix (`p >= k`) by one-sided Jacobi.
pub fn thin_svd(m: &Matrix) -> Result<ThinSvd> {
    let (p, k) = (m.rows(), m.cols());
    if p < k {
        return Err(Error::contract(format!(
            "thin_svd needs p >= k, got {p}x{k}"
        )));
    }
    let mut a = m.clone();
    let mut w = Matrix::identity(k);

    // One-sided Jacobi: rotate column pairs of A until mutually orthogonal.
    for _sweep in 0..60 {
        let mut rotated = false;
        for i in 0..k {
            for j in (i + 1)..k {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for r in 0..p {
                    let ai = a.get(r, i);
                    let aj = a.get(r, j);
                    alpha += ai * ai;
                    beta += aj * aj;
                    gamma += ai * aj;
                }
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt().max(f64::MIN_POSITIVE) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (zeta * zeta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..p {
                    let ai = a.get(r, i);
                    let aj = a.get(r, j);
                    a.set(r, i, c * ai - s * aj);
                    a.set(r, j, s * ai + c * aj);
                }
                for r in 0..k {
                    let wi = w.get(r, i);
                    let wj = w.get(r, j);
                    w.set(r, i, c * wi - s * wj);
                    w.set(r, j, s * wi + c * wj);
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut s: Vec<f64> = (0..k)
        .map(|j| (0..p).map(|r| a.get(r, j).powi(2)).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| s[j].partial_cmp(&s[i]).unwrap());

    let mut u = Matrix::zeros(p, k);
    let mut w_sorted = Matrix::zeros(k, k);
    let smax = order.first().map(|&i| s[i]).unwrap_or(0.0);
    let mut sorted_s = vec![0.0; k];
    for (dst, &src) in order.iter().enumerate() {
        sorted_s[dst] = s[src];
        if s[src] > smax.max(1.0) * 1e-300 && s[src] > 0.0 {
            for r in 0..p {
                u.set(r, dst, a.get(r, src) / s[src]);
            }
        }
        for r in 0..k {
            w_sorted.set(r, dst, w.get(r, src));
        }
    }
    s = sorted_s;

    // Null columns (zero singular values): complete U to an orthonormal set.
    for dst in 0..k {
        if s[dst] > 0.0 && u.column(dst).iter().any(|v| *v != 0.0) {
            continue;
        }
        'basis: for e in 0..p {
            let mut cand = vec![0.0; p];
            cand[e] = 1.0;
            for other in 0..k {
                if other == dst {
                    continue;
                }
                let oc = u.column(other);
                let proj = dot(&cand, &oc);
                for r in 0..p {
                    cand[r] -= proj * oc[r];
                }
            }
            let nrm = dot(&cand, &cand).sqrt();
            if nrm > 1e-8 {
                for r in 0..p {
                    u.set(r, dst, cand[r] / nrm);
                }
                break 'basis;
            }
        }
    }

    // Deterministic signs: largest-|entry| of each U column positive.
    for j in 0..k {
        let sign = column_sign(&u.column(j));
        if sign < 0.0 {
            for r in 0..p {
                u.set(r, j, -u.get(r, j));
            }
            for r in 0..k {
                w_sorted.set(r, j, -w_sorted.get(r, j));
            }
        }
    }

    Ok(ThinSvd { u, s, w: w_sorted })
}

/// Relative rank threshold below which [`polar_retract`] reports a collapse.
pub const POLAR_RANK_TOL: f64 = 1e-12;

/// Project a full-column-rank `p x k` matrix to the nearest (Frobenius)
/// matrix with orthonormal columns: `U W^T` from its thin SVD.
pub fn polar_retract(m: &Matrix) -> Result<StiefelMatrix> {
    let svd = thin_svd(m)?;
    let smax = svd.s[0];
    let smin = svd.s[svd.s.len() - 1];
    if !(smax > 0.0) || smin <= POLAR_RANK_TOL * smax {
        return Err(Error::DegenerateProjection(format!(
            "rank-deficient input: singular values range [{smin:.3e}, {smax:.3e}]"
        )));
    }
    StiefelMatrix::new(svd.u.matmul(&svd.w.transpose()))
}

/// Orthogonal projection onto the column space: `P = V V^T`.
pub fn projection_matrix(v: &StiefelMatrix) -> Matrix {
    let m = v.matrix();
    let (p, k) = (m.rows(), m.cols());
    let mut out = Matrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            let mut s = 0.0;
            for l in 0..k {
                s += m.get(i, l) * m.get(j, l);
            }
            out.set(i, j, s);
        }
    }
    out
}

/// Cholesky factorization of a symmetric positive-definite matrix.
/// Returns lower-triangular `L` with `L L^T = a`.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    if a.rows() != a.cols() {
        return Err(Error::contract("cholesky needs a square matrix"));
    }
    let scale = a.frob_norm().max(1.0);
    if a.max_symmetry_defect() > 1e-10 * scale {
        return Err(Error::contract("cholesky input is not symmetric"));
    }
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a.get(i, j);
            for t in 0..j {
                s -= l.get(i, t) * l.get(j, t);
            }
            if i == j {
                if s <= 0.0 {
                    return Err(Error::Factorization(format!(
                        "pivot {i} is not positive ({s:.3e}); matrix is not positive definite"
                    )));
                }
                l.set(i, j, s.sqrt());
            } else {
                l.set(i, j, s / l.get(j, j));
            }
        }
    }
    Ok(l)
}

/// Solve `a x = b` for symmetric positive-definite `a` (in-place Cholesky).
pub(crate) fn solve_spd(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let l = cholesky_unchecked(a)?;
    let n = a.rows();
    // Forward substitution L y = b.
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for j in 0..i {
            s -= l.get(i, j) * y[j];
        }
        y[i] = s / l.get(i, i);
    }
    // Back substitution L^T x = y.
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for j in (i + 1)..n {
            s -= l.get(j, i) * x[j];
        }
        x[i] = s / l.get(i, i);
    }
    Ok(x)
}

/// Cholesky without the symmetry check (internal solver path; the normal
/// equations it serves are symmetric by construction).
pub(crate) fn cholesky_unchecked(a: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a.get(i, j);
            for t in 0..j {
                s -= l.get(i, t) * l.get(j, t);
            }
            if i == j {
                if s <= 0.0 {
                    return Err(Error::Factorization("non-positive pivot".into()));
                }
                l.set(i, j, s.sqrt());
            } else {
                l.set(i, j, s / l.get(j, j));
            }
        }
    }
    Ok(l)
}
