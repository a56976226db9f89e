//! Test-side oracles and random generators shared by the integration tests.
//!
//! The oracles deliberately avoid the library's strided kernels: they walk
//! explicit multi-indices and use textbook formulas.

#![allow(dead_code)]

use cplda::linalg::{dot, norm2, top_k_svd, Matrix};
use cplda::tnorm::SimRng;
use cplda::{CpModel, DenseTensor};

/// All multi-indices of `dims`, first index fastest.
pub fn multi_indices(dims: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = dims.iter().product();
    let mut out = Vec::with_capacity(total);
    for mut flat in 0..total {
        let mut idx = Vec::with_capacity(dims.len());
        for &d in dims {
            idx.push(flat % d);
            flat /= d;
        }
        out.push(idx);
    }
    out
}

/// Offset by the 1-based formula `Σ (i_m − 1) ∏_{l<m} d_l`.
pub fn offset_oracle(idx: &[usize], dims: &[usize]) -> usize {
    let mut off = 0;
    for m in 0..dims.len() {
        let stride: usize = dims[..m].iter().product();
        off += ((idx[m] + 1) - 1) * stride;
    }
    off
}

pub fn entry(t: &DenseTensor, idx: &[usize]) -> f64 {
    t.as_slice()[offset_oracle(idx, t.dims())]
}

/// `(X ×_m A)_{…j…} = Σ_k A_{jk} X_{…k…}` by direct summation.
pub fn mode_product_oracle(x: &DenseTensor, mode: usize, a: &Matrix) -> DenseTensor {
    let mut dims = x.dims().to_vec();
    dims[mode] = a.rows();
    let mut data = vec![0.0; dims.iter().product()];
    for idx in multi_indices(&dims) {
        let mut src = idx.clone();
        let mut s = 0.0;
        for k in 0..a.cols() {
            src[mode] = k;
            s += a[(idx[mode], k)] * entry(x, &src);
        }
        data[offset_oracle(&idx, &dims)] = s;
    }
    DenseTensor::new(dims, data).unwrap()
}

/// Unfolding by explicit row/column index formulas.
pub fn unfold_oracle(x: &DenseTensor, rows: &[usize]) -> Matrix {
    let dims = x.dims();
    let cols: Vec<usize> = (0..dims.len()).filter(|m| !rows.contains(m)).collect();
    let n_rows: usize = rows.iter().map(|&m| dims[m]).product();
    let n_cols: usize = cols.iter().map(|&m| dims[m]).product();
    let mut out = Matrix::zeros(n_rows, n_cols);
    for idx in multi_indices(dims) {
        let pos = |modes: &[usize]| {
            let mut p = 0;
            let mut stride = 1;
            for &m in modes {
                p += idx[m] * stride;
                stride *= dims[m];
            }
            p
        };
        let (r, c) = (pos(rows), pos(&cols));
        out.col_mut(c)[r] = entry(x, &idx);
    }
    out
}

pub fn inner_oracle(x: &DenseTensor, y: &DenseTensor) -> f64 {
    multi_indices(x.dims())
        .iter()
        .map(|idx| entry(x, idx) * entry(y, idx))
        .sum()
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, descending.
pub fn sym_eigenvalues(s: &Matrix) -> Vec<f64> {
    let n = s.rows();
    let mut a: Vec<Vec<f64>> = s.to_rows();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

pub fn random_tensor(dims: &[usize], rng: &mut SimRng) -> DenseTensor {
    let n = dims.iter().product();
    DenseTensor::new(dims.to_vec(), rng.normal_vec(n)).unwrap()
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut SimRng) -> Matrix {
    Matrix::from_col_major(rows, cols, rng.normal_vec(rows * cols)).unwrap()
}

pub fn random_dims(order: usize, max: usize, rng: &mut SimRng) -> Vec<usize> {
    (0..order).map(|_| 1 + (rng.uniform() * max as f64) as usize).collect()
}

pub fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = norm2(&v);
    v.into_iter().map(|x| x / n).collect()
}

/// Orthonormal `d × r` columns from a Gaussian matrix (Gram–Schmidt).
pub fn orthonormal_columns(d: usize, r: usize, rng: &mut SimRng) -> Vec<Vec<f64>> {
    let mut cols: Vec<Vec<f64>> = Vec::new();
    while cols.len() < r {
        let mut v = rng.normal_vec(d);
        for _ in 0..2 {
            for q in &cols {
                let c = dot(&v, q);
                v.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
        }
        if norm2(&v) > 1e-8 {
            cols.push(unit(v));
        }
    }
    cols
}

/// `‖AᵀA − I‖₂` for unit columns.
pub fn non_orthogonality(cols: &[Vec<f64>]) -> f64 {
    let r = cols.len();
    let g = Matrix::from_fn(r, r, |i, j| dot(&cols[i], &cols[j]) - if i == j { 1.0 } else { 0.0 });
    top_k_svd(&g, 1).unwrap().singular_values[0]
}

/// Bases whose columns are perturbed away from orthonormal by up to `spread`.
pub fn perturbed_bases(dims: &[usize], rank: usize, spread: f64, rng: &mut SimRng) -> Vec<Vec<Vec<f64>>> {
    let per_mode: Vec<Vec<Vec<f64>>> = dims
        .iter()
        .map(|&d| {
            let q = orthonormal_columns(d, rank, rng);
            let t = spread * rng.uniform();
            let shared = unit(rng.normal_vec(d));
            q.into_iter()
                .map(|c| unit(c.iter().zip(&shared).map(|(a, b)| a + t * b).collect()))
                .collect()
        })
        .collect();
    (0..rank)
        .map(|r| per_mode.iter().map(|m| m[r].clone()).collect())
        .collect()
}

pub fn model_from(weights: Vec<f64>, bases: Vec<Vec<Vec<f64>>>) -> CpModel {
    CpModel::new(weights, bases).unwrap()
}
