//! Small dense linear-algebra kernel.
//!
//! Everything here works on [`Matrix`], a column-major `f64` matrix. The
//! kernels are sized for the problems the estimator produces: unfoldings with
//! a short side of at most a few hundred, basis matrices with a handful of
//! columns, and per-mode covariance matrices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix from column-major storage.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidShape(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from a slice of rows. All rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::InvalidShape("ragged rows".into()));
        }
        Ok(Self::from_fn(n_rows, n_cols, |i, j| rows[i][j]))
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(cols: &[Vec<f64>]) -> Result<Self> {
        let n_cols = cols.len();
        let n_rows = cols.first().map_or(0, Vec::len);
        if cols.iter().any(|c| c.len() != n_rows) {
            return Err(Error::InvalidShape("columns of unequal length".into()));
        }
        Ok(Self {
            rows: n_rows,
            cols: n_cols,
            data: cols.concat(),
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    /// Rows as nested vectors, the layout used in JSON sidecars.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self[(i, j)]).collect())
            .collect()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            for k in 0..self.cols {
                let b = other[(k, j)];
                if b == 0.0 {
                    continue;
                }
                let a_col = self.col(k);
                let o_col = out.col_mut(j);
                for (o, &a) in o_col.iter_mut().zip(a_col) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ * other` without materialising the transpose.
    pub fn t_matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply ({}x{})ᵀ by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(Matrix::from_fn(self.cols, other.cols, |i, j| {
            dot(self.col(i), other.col(j))
        }))
    }

    pub fn frob_norm(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// True when the matrix is exactly the identity.
    pub fn is_identity(&self) -> bool {
        self.is_square()
            && (0..self.cols)
                .all(|j| (0..self.rows).all(|i| self[(i, j)] == if i == j { 1.0 } else { 0.0 }))
    }

    /// Elementwise `self - other`.
    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch("matrix subtraction".into()));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn scale(&self, c: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    /// `self + gamma * I`.
    pub fn add_diag(&self, gamma: f64) -> Matrix {
        let mut out = self.clone();
        for i in 0..self.rows.min(self.cols) {
            out[(i, i)] += gamma;
        }
        out
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i + j * self.rows]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i + j * self.rows]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Flips `v` so its largest-magnitude entry is nonnegative (ties go to the
/// lowest index). Returns whether a flip happened.
pub fn canonical_sign(v: &mut [f64]) -> bool {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
        true
    } else {
        false
    }
}

/// Sine of the angle between two lines, `√(1 − (uᵀv)²)` for unit vectors.
///
/// Evaluated through the residual `u − (uᵀv)v` instead of the closed form so
/// that nearly parallel vectors give a result near machine precision rather
/// than near `√ε`.
pub fn sin_angle(u: &[f64], v: &[f64]) -> f64 {
    let nu = norm2(u);
    let nv = norm2(v);
    if nu == 0.0 || nv == 0.0 {
        return 1.0;
    }
    let c = dot(u, v) / (nv * nv);
    let resid: f64 = u
        .iter()
        .zip(v)
        .map(|(a, b)| {
            let r = a - c * b;
            r * r
        })
        .sum();
    (resid.sqrt() / nu).clamp(0.0, 1.0)
}

/// Truncated singular value decomposition `A ≈ U diag(σ) Vᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdResult {
    /// Descending, nonnegative.
    pub singular_values: Vec<f64>,
    /// `rows × k`, orthonormal columns.
    pub left: Matrix,
    /// `cols × k`, orthonormal columns.
    pub right: Matrix,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    pub fn reconstruct(&self) -> Matrix {
        let k = self.rank();
        let mut scaled = self.left.clone();
        for j in 0..k {
            let s = self.singular_values[j];
            scaled.col_mut(j).iter_mut().for_each(|x| *x *= s);
        }
        scaled
            .matmul(&self.right.transpose())
            .expect("svd factors are conformant")
    }
}

const JACOBI_MAX_SWEEPS: usize = 80;

/// The `k` leading singular triplets of `a`.
///
/// One-sided (Hestenes) Jacobi on whichever orientation has fewer columns.
/// Each left vector is sign-normalised so that its largest-magnitude entry is
/// nonnegative, with the matching right vector flipped alongside.
pub fn top_k_svd(a: &Matrix, k: usize) -> Result<SvdResult> {
    let max_k = a.rows.min(a.cols);
    if k == 0 || k > max_k {
        return Err(Error::RankOutOfRange {
            requested: k,
            max: max_k,
        });
    }
    if a.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }

    let tall = a.rows >= a.cols;
    let mut w = if tall { a.clone() } else { a.transpose() };
    let n = w.cols;
    let mut v = Matrix::identity(n);
    jacobi_orthogonalize(&mut w, &mut v);

    let norms: Vec<f64> = (0..n).map(|j| norm2(w.col(j))).collect();
    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps the lowest column first among equal values.
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let order = &order[..k];

    let sigma: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let scale = sigma.first().copied().unwrap_or(0.0);
    let tiny = scale * f64::EPSILON * (w.rows.max(n) as f64);

    // Columns of w normalised; null directions are completed afterwards.
    let mut from_w: Vec<Option<Vec<f64>>> = order
        .iter()
        .map(|&j| {
            let s = norms[j];
            (s > tiny && s > 0.0).then(|| w.col(j).iter().map(|x| x / s).collect())
        })
        .collect();
    complete_orthonormal(&mut from_w, w.rows);
    let w_vecs: Vec<Vec<f64>> = from_w.into_iter().map(Option::unwrap).collect();
    let v_vecs: Vec<Vec<f64>> = order.iter().map(|&j| v.col(j).to_vec()).collect();

    let (mut left, mut right) = if tall {
        (w_vecs, v_vecs)
    } else {
        (v_vecs, w_vecs)
    };
    for (l, r) in left.iter_mut().zip(right.iter_mut()) {
        if canonical_sign(l) {
            r.iter_mut().for_each(|x| *x = -*x);
        }
    }

    Ok(SvdResult {
        singular_values: sigma,
        left: Matrix::from_columns(&left)?,
        right: Matrix::from_columns(&right)?,
    })
}

/// Rotates column pairs of `w` until all are mutually orthogonal, accumulating
/// the rotations in `v`.
fn jacobi_orthogonalize(w: &mut Matrix, v: &mut Matrix) {
    let n = w.cols;
    let m = w.rows;
    let tol = f64::EPSILON * (m as f64).sqrt().max(1.0);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (alpha, beta, gamma) = {
                    let wp = w.col(p);
                    let wq = w.col(q);
                    (dot(wp, wp), dot(wq, wq), dot(wp, wq))
                };
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_cols(w, p, q, c, s);
                rotate_cols(v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
}

fn rotate_cols(a: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let rows = a.rows;
    let (lo, hi) = a.data.split_at_mut(q * rows);
    let cp = &mut lo[p * rows..(p + 1) * rows];
    let cq = &mut hi[..rows];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Fills `None` slots with unit vectors orthogonal to every other slot, drawn
/// from the standard basis by Gram-Schmidt.
fn complete_orthonormal(vecs: &mut [Option<Vec<f64>>], dim: usize) {
    let mut candidate = 0;
    for slot in 0..vecs.len() {
        if vecs[slot].is_some() {
            continue;
        }
        while candidate < dim {
            let mut e = vec![0.0; dim];
            e[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for other in vecs.iter().flatten() {
                    let c = dot(&e, other);
                    e.iter_mut().zip(other).for_each(|(x, o)| *x -= c * o);
                }
            }
            let n = norm2(&e);
            if n > 1e-8 {
                e.iter_mut().for_each(|x| *x /= n);
                vecs[slot] = Some(e);
                break;
            }
        }
    }
}

/// Right inverse `B = A (AᵀA)⁻¹` of a full-column-rank `d × R` matrix, so
/// that `AᵀB = I_R`.
pub fn right_inverse(a: &Matrix) -> Result<Matrix> {
    if a.cols == 0 || a.cols > a.rows {
        return Err(Error::Singular(format!(
            "{}x{} matrix cannot have full column rank",
            a.rows, a.cols
        )));
    }
    let svd = top_k_svd(a, a.cols)?;
    let smax = svd.singular_values[0];
    let smin = svd.singular_values[a.cols - 1];
    if smin * smin < 1e-12 * smax * smax || smax == 0.0 {
        return Err(Error::Singular(format!(
            "Gram matrix eigenvalue ratio {:e} below 1e-12",
            if smax > 0.0 { (smin / smax).powi(2) } else { 0.0 }
        )));
    }
    let gram = symmetrize(&a.t_matmul(a)?);
    let gram_inv = sym_inverse(&gram)?;
    a.matmul(&gram_inv)
}

/// Smallest singular value of `a` (zero-size or rank-deficient gives 0).
pub fn min_singular_value(a: &Matrix) -> Result<f64> {
    let k = a.rows.min(a.cols);
    let svd = top_k_svd(a, k)?;
    Ok(svd.singular_values[k - 1])
}

/// `(S + Sᵀ)/2`, exactly symmetric.
pub fn symmetrize(s: &Matrix) -> Matrix {
    Matrix::from_fn(s.rows, s.cols, |i, j| 0.5 * (s[(i, j)] + s[(j, i)]))
}

fn check_symmetric(s: &Matrix) -> Result<()> {
    if !s.is_square() {
        return Err(Error::InvalidShape(format!(
            "expected a square matrix, got {}x{}",
            s.rows, s.cols
        )));
    }
    if s.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let scale = s.max_abs().max(1.0);
    let mut worst = 0.0_f64;
    for j in 0..s.cols {
        for i in 0..j {
            worst = worst.max((s[(i, j)] - s[(j, i)]).abs());
        }
    }
    if worst > 1e-10 * scale {
        return Err(Error::NotSymmetric(worst));
    }
    Ok(())
}

/// Lower-triangular Cholesky factor `L` with `LLᵀ = S`.
pub fn chol_factor(s: &Matrix) -> Result<Matrix> {
    check_symmetric(s)?;
    let n = s.rows;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut diag = s[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if diag <= 0.0 || !diag.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut acc = s[(i, j)];
            for k in 0..j {
                acc -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = acc / ljj;
        }
    }
    Ok(l)
}

/// Inverse of a symmetric positive-definite matrix via its Cholesky factor.
/// The result is exactly symmetric.
pub fn sym_inverse(s: &Matrix) -> Result<Matrix> {
    let l = chol_factor(s)?;
    let n = l.rows;
    // Columns of L⁻¹ by forward substitution.
    let mut linv = Matrix::zeros(n, n);
    for c in 0..n {
        for i in c..n {
            let mut acc = if i == c { 1.0 } else { 0.0 };
            for k in c..i {
                acc -= l[(i, k)] * linv[(k, c)];
            }
            linv[(i, c)] = acc / l[(i, i)];
        }
    }
    // S⁻¹ = L⁻ᵀ L⁻¹, computed on the upper triangle and mirrored.
    let mut inv = Matrix::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let v: f64 = (j..n).map(|k| linv[(k, i)] * linv[(k, j)]).sum();
            inv[(i, j)] = v;
            inv[(j, i)] = v;
        }
    }
    Ok(inv)
}

/// Orthonormal basis for the column space of a full-column-rank matrix
/// (the `Q` of a thin QR), by modified Gram-Schmidt with one
/// reorthogonalisation pass.
pub fn orthonormalize_columns(a: &Matrix) -> Result<Matrix> {
    let mut cols: Vec<Vec<f64>> = (0..a.cols).map(|j| a.col(j).to_vec()).collect();
    for j in 0..cols.len() {
        let (done, rest) = cols.split_at_mut(j);
        let col = &mut rest[0];
        for _ in 0..2 {
            for q in done.iter() {
                let c = dot(col, q);
                col.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
        }
        let n = norm2(col);
        if n <= 1e-12 {
            return Err(Error::Singular(format!("column {j} is linearly dependent")));
        }
        col.iter_mut().for_each(|x| *x /= n);
    }
    Matrix::from_columns(&cols)
}
