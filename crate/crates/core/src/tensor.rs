//! Dense order-M tensors and the tensor-algebra primitives.
//!
//! Storage is colexicographic: the first index varies fastest, so the flat
//! buffer is exactly `vec(X)` and the covariance of a tensor-normal sample
//! is `Σ_M ⊗ ⋯ ⊗ Σ_1` in that ordering. Mode indices in this API are
//! zero-based; element `(i_1, …, i_M)` (zero-based) lives at offset
//! `Σ_m i_m · ∏_{l<m} d_l`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, Matrix};
use crate::model::CpModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseTensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len = checked_len(&dims)?;
        if data.len() != len {
            return Err(Error::InvalidShape(format!(
                "dims {dims:?} need {len} entries, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        let len = checked_len(dims)?;
        Ok(Self {
            dims: dims.to_vec(),
            data: vec![0.0; len],
        })
    }

    /// Builds a tensor by evaluating `f` at every multi-index, in storage order.
    pub fn from_fn(dims: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let len = checked_len(dims)?;
        let mut data = Vec::with_capacity(len);
        let mut idx = vec![0; dims.len()];
        for _ in 0..len {
            data.push(f(&idx));
            advance(&mut idx, dims);
        }
        Ok(Self {
            dims: dims.to_vec(),
            data,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Colexicographic flattening `vec(X)`.
    pub fn vec(&self) -> Vec<f64> {
        self.data.clone()
    }

    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        let mut off = 0;
        let mut stride = 1;
        for (&i, &d) in idx.iter().zip(&self.dims) {
            debug_assert!(i < d);
            off += i * stride;
            stride *= d;
        }
        off
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let off = self.offset(idx);
        self.data[off] = value;
    }

    fn check_same_dims(&self, other: &DenseTensor) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::DimensionMismatch(format!(
                "tensor dims {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &DenseTensor) -> Result<DenseTensor> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &DenseTensor) -> Result<DenseTensor> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &DenseTensor, f: impl Fn(f64, f64) -> f64) -> Result<DenseTensor> {
        self.check_same_dims(other)?;
        Ok(DenseTensor {
            dims: self.dims.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn scale(&self, c: f64) -> DenseTensor {
        DenseTensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    /// `self += c * other`.
    pub fn axpy(&mut self, c: f64, other: &DenseTensor) -> Result<()> {
        self.check_same_dims(other)?;
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += c * b);
        Ok(())
    }

    /// Mode-m unfolding, a `d_m × d/d_m` matrix.
    pub fn mat_m(&self, mode: usize) -> Result<ModeMatrix> {
        self.check_mode(mode)?;
        self.mat_s(&[mode])
    }

    /// Multi-mode unfolding with the modes of `row_modes` indexing rows.
    ///
    /// Row index `Σ_{m∈S} i_m ∏_{l∈S,l<m} d_l`, column index the same over the
    /// complement. `row_modes` is treated as a set; order does not matter.
    pub fn mat_s(&self, row_modes: &[usize]) -> Result<ModeMatrix> {
        let rows_set = self.mode_set(row_modes)?;
        let (row_strides, col_strides, rows, cols) = split_strides(&self.dims, &rows_set);
        let mut out = vec![0.0; self.data.len()];
        let mut idx = vec![0; self.dims.len()];
        for &v in &self.data {
            let (r, c) = unfold_pos(&idx, &row_strides, &col_strides);
            out[r + c * rows] = v;
            advance(&mut idx, &self.dims);
        }
        Ok(ModeMatrix {
            matrix: Matrix::from_col_major(rows, cols, out)?,
            row_modes: rows_set,
            dims: self.dims.clone(),
        })
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.dims.len() {
            return Err(Error::ModeOutOfRange {
                mode,
                order: self.dims.len(),
            });
        }
        Ok(())
    }

    fn mode_set(&self, modes: &[usize]) -> Result<Vec<usize>> {
        let mut set = modes.to_vec();
        set.sort_unstable();
        set.dedup();
        if set.len() != modes.len() {
            return Err(Error::InvalidModeSet(format!("repeated modes in {modes:?}")));
        }
        if let Some(&m) = set.iter().find(|&&m| m >= self.order()) {
            return Err(Error::ModeOutOfRange {
                mode: m,
                order: self.order(),
            });
        }
        if set.is_empty() || (set.len() == self.order() && self.order() > 1) {
            return Err(Error::InvalidModeSet(format!(
                "{modes:?} must be a nonempty proper subset of the {} modes",
                self.order()
            )));
        }
        Ok(set)
    }

    /// `X ×_m A` for `A` of shape `d̃ × d_m`.
    pub fn mode_product(&self, mode: usize, a: &Matrix) -> Result<DenseTensor> {
        self.check_mode(mode)?;
        let dm = self.dims[mode];
        if a.cols() != dm {
            return Err(Error::DimensionMismatch(format!(
                "mode-{mode} product needs {dm} columns, matrix has {}",
                a.cols()
            )));
        }
        let new_dm = a.rows();
        let (left, right) = self.left_right(mode);
        let mut dims = self.dims.clone();
        dims[mode] = new_dm;
        let mut out = vec![0.0; left * new_dm * right];
        for r in 0..right {
            let src = &self.data[r * left * dm..(r + 1) * left * dm];
            let dst = &mut out[r * left * new_dm..(r + 1) * left * new_dm];
            for i in 0..dm {
                let x_i = &src[i * left..(i + 1) * left];
                for j in 0..new_dm {
                    let coef = a[(j, i)];
                    if coef == 0.0 {
                        continue;
                    }
                    let y_j = &mut dst[j * left..(j + 1) * left];
                    for (y, &x) in y_j.iter_mut().zip(x_i) {
                        *y += coef * x;
                    }
                }
            }
        }
        Ok(DenseTensor { dims, data: out })
    }

    /// `X ×_m vᵀ`: contracts mode `m` against `v`, leaving that mode with size 1.
    pub fn contract(&self, mode: usize, v: &[f64]) -> Result<DenseTensor> {
        self.check_mode(mode)?;
        let dm = self.dims[mode];
        if v.len() != dm {
            return Err(Error::DimensionMismatch(format!(
                "mode-{mode} contraction needs a vector of length {dm}, got {}",
                v.len()
            )));
        }
        let (left, right) = self.left_right(mode);
        let mut out = vec![0.0; left * right];
        for r in 0..right {
            let src = &self.data[r * left * dm..(r + 1) * left * dm];
            let dst = &mut out[r * left..(r + 1) * left];
            for (i, &coef) in v.iter().enumerate() {
                for (y, &x) in dst.iter_mut().zip(&src[i * left..(i + 1) * left]) {
                    *y += coef * x;
                }
            }
        }
        let mut dims = self.dims.clone();
        dims[mode] = 1;
        Ok(DenseTensor { dims, data: out })
    }

    /// Contracts every mode except `keep` against the given vectors and
    /// returns the remaining `d_keep`-vector. `vectors[keep]` is ignored.
    pub fn contract_all_but(&self, keep: usize, vectors: &[&[f64]]) -> Result<Vec<f64>> {
        self.check_mode(keep)?;
        if vectors.len() != self.order() {
            return Err(Error::DimensionMismatch(format!(
                "{} contraction vectors for an order-{} tensor",
                vectors.len(),
                self.order()
            )));
        }
        let mut cur = std::borrow::Cow::Borrowed(self);
        // Highest modes first keeps the intermediate contiguous and shrinking.
        for m in (0..self.order()).rev() {
            if m != keep {
                cur = std::borrow::Cow::Owned(cur.contract(m, vectors[m])?);
            }
        }
        Ok(cur.into_owned().data)
    }

    /// Full contraction `X ×_1 v_1ᵀ ⋯ ×_M v_Mᵀ`.
    pub fn contract_all(&self, vectors: &[&[f64]]) -> Result<f64> {
        let rest = self.contract_all_but(0, vectors)?;
        Ok(dot(&rest, vectors[0]))
    }

    /// `mat_m(X) mat_m(X)ᵀ`, accumulated into `acc` (upper triangle only;
    /// the lower triangle is left untouched).
    pub fn accumulate_mode_gram(&self, mode: usize, acc: &mut Matrix) -> Result<()> {
        self.check_mode(mode)?;
        let dm = self.dims[mode];
        if acc.rows() != dm || acc.cols() != dm {
            return Err(Error::DimensionMismatch("gram accumulator size".into()));
        }
        let (left, right) = self.left_right(mode);
        for r in 0..right {
            let block = &self.data[r * left * dm..(r + 1) * left * dm];
            if left == 1 {
                for j in 0..dm {
                    let xj = block[j];
                    if xj == 0.0 {
                        continue;
                    }
                    for i in 0..=j {
                        acc[(i, j)] += block[i] * xj;
                    }
                }
            } else {
                for j in 0..dm {
                    let xj = &block[j * left..(j + 1) * left];
                    for i in 0..=j {
                        acc[(i, j)] += dot(&block[i * left..(i + 1) * left], xj);
                    }
                }
            }
        }
        Ok(())
    }

    fn left_right(&self, mode: usize) -> (usize, usize) {
        let left = self.dims[..mode].iter().product();
        let right = self.dims[mode + 1..].iter().product();
        (left, right)
    }
}

/// A matricized tensor together with the modes that index its rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeMatrix {
    pub matrix: Matrix,
    /// Sorted modes whose joint index is the row index.
    pub row_modes: Vec<usize>,
    /// Dimensions of the source tensor.
    pub dims: Vec<usize>,
}

impl ModeMatrix {
    /// Wraps a matrix as the unfolding of a tensor with the given dims.
    pub fn new(matrix: Matrix, row_modes: &[usize], dims: &[usize]) -> Result<Self> {
        let mut rm = row_modes.to_vec();
        rm.sort_unstable();
        rm.dedup();
        let rows: usize = rm.iter().map(|&m| dims.get(m).copied().unwrap_or(0)).product();
        let total = checked_len(dims)?;
        if rm.len() != row_modes.len() || rm.iter().any(|&m| m >= dims.len()) {
            return Err(Error::InvalidModeSet(format!("{row_modes:?}")));
        }
        if matrix.rows() != rows || matrix.rows() * matrix.cols() != total {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix is not an unfolding of {dims:?} along {row_modes:?}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        Ok(Self {
            matrix,
            row_modes: rm,
            dims: dims.to_vec(),
        })
    }

    pub fn col_modes(&self) -> Vec<usize> {
        (0..self.dims.len())
            .filter(|m| !self.row_modes.contains(m))
            .collect()
    }

    /// Inverse of the unfolding.
    pub fn fold(&self) -> DenseTensor {
        let (row_strides, col_strides, rows, _) = split_strides(&self.dims, &self.row_modes);
        let src = self.matrix.as_slice();
        let len = src.len();
        let mut data = Vec::with_capacity(len);
        let mut idx = vec![0; self.dims.len()];
        for _ in 0..len {
            let (r, c) = unfold_pos(&idx, &row_strides, &col_strides);
            data.push(src[r + c * rows]);
            advance(&mut idx, &self.dims);
        }
        DenseTensor {
            dims: self.dims.clone(),
            data,
        }
    }
}

fn checked_len(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() {
        return Err(Error::InvalidShape("tensor order must be at least 1".into()));
    }
    if dims.contains(&0) {
        return Err(Error::InvalidShape(format!("zero-length mode in {dims:?}")));
    }
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::InvalidShape(format!("{dims:?} overflows")))
}

/// Advances a colexicographic multi-index by one position.
fn advance(idx: &mut [usize], dims: &[usize]) {
    for (i, &d) in idx.iter_mut().zip(dims) {
        *i += 1;
        if *i < d {
            return;
        }
        *i = 0;
    }
}

type Strides = Vec<usize>;

fn split_strides(dims: &[usize], row_modes: &[usize]) -> (Strides, Strides, usize, usize) {
    let mut row_strides = vec![0; dims.len()];
    let mut col_strides = vec![0; dims.len()];
    let (mut rows, mut cols) = (1, 1);
    for (m, &d) in dims.iter().enumerate() {
        if row_modes.contains(&m) {
            row_strides[m] = rows;
            rows *= d;
        } else {
            col_strides[m] = cols;
            cols *= d;
        }
    }
    (row_strides, col_strides, rows, cols)
}

#[inline]
fn unfold_pos(idx: &[usize], row_strides: &[usize], col_strides: &[usize]) -> (usize, usize) {
    let mut r = 0;
    let mut c = 0;
    for ((&i, &rs), &cs) in idx.iter().zip(row_strides).zip(col_strides) {
        r += i * rs;
        c += i * cs;
    }
    (r, c)
}

pub fn inner(x: &DenseTensor, y: &DenseTensor) -> Result<f64> {
    x.check_same_dims(y)?;
    Ok(dot(&x.data, &y.data))
}

pub fn frob_norm(x: &DenseTensor) -> f64 {
    norm2(&x.data)
}

/// `a_1 ∘ a_2 ∘ ⋯ ∘ a_M`.
pub fn outer(vectors: &[&[f64]]) -> Result<DenseTensor> {
    let dims: Vec<usize> = vectors.iter().map(|v| v.len()).collect();
    checked_len(&dims)?;
    let mut data = vectors[0].to_vec();
    for v in &vectors[1..] {
        let mut next = Vec::with_capacity(data.len() * v.len());
        for &c in v.iter() {
            next.extend(data.iter().map(|x| x * c));
        }
        data = next;
    }
    Ok(DenseTensor { dims, data })
}

/// `Σ_r w_r · a_{r1} ∘ ⋯ ∘ a_{rM}`.
pub fn cp_compose(model: &CpModel) -> Result<DenseTensor> {
    let dims = model.dims()?;
    let mut out = DenseTensor::zeros(&dims)?;
    for (w, bases) in model.weights.iter().zip(&model.bases) {
        let refs: Vec<&[f64]> = bases.iter().map(Vec::as_slice).collect();
        out.axpy(*w, &outer(&refs)?)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq_tensor(dims: &[usize]) -> DenseTensor {
        let n: usize = dims.iter().product();
        DenseTensor::new(dims.to_vec(), (1..=n).map(|v| v as f64).collect()).unwrap()
    }

    #[test]
    fn order_two_unfoldings() {
        let x = seq_tensor(&[2, 2]);
        let m1 = x.mat_m(0).unwrap();
        assert_eq!(m1.matrix.to_rows(), vec![vec![1.0, 3.0], vec![2.0, 4.0]]);
        let m2 = x.mat_m(1).unwrap();
        assert_eq!(m2.matrix.to_rows(), vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
    }

    #[test]
    fn mode_errors() {
        let x = seq_tensor(&[2, 3]);
        assert!(matches!(x.mat_m(2), Err(Error::ModeOutOfRange { mode: 2, order: 2 })));
        assert!(matches!(x.mat_s(&[]), Err(Error::InvalidModeSet(_))));
        assert!(matches!(x.mat_s(&[0, 1]), Err(Error::InvalidModeSet(_))));
        let a = Matrix::identity(3);
        assert!(matches!(x.mode_product(0, &a), Err(Error::DimensionMismatch(_))));
        assert!(DenseTensor::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(DenseTensor::zeros(&[]).is_err());
        assert!(DenseTensor::zeros(&[2, 0]).is_err());
    }

    #[test]
    fn offsets_are_colexicographic() {
        let x = seq_tensor(&[2, 3, 2]);
        assert_eq!(x.get(&[0, 0, 0]), 1.0);
        assert_eq!(x.get(&[1, 0, 0]), 2.0);
        assert_eq!(x.get(&[0, 1, 0]), 3.0);
        assert_eq!(x.get(&[0, 0, 1]), 7.0);
        assert_eq!(x.get(&[1, 2, 1]), 12.0);
    }

    #[test]
    fn outer_and_compose_single_entry() {
        let e = vec![1.0, 0.0];
        let model = CpModel::new(vec![2.0], vec![vec![e.clone(), e.clone(), e]]).unwrap();
        let t = cp_compose(&model).unwrap();
        assert_eq!(t.get(&[0, 0, 0]), 2.0);
        assert_eq!(t.as_slice().iter().filter(|&&v| v != 0.0).count(), 1);
    }

    #[test]
    fn contraction_matches_row_vector_product() {
        let x = seq_tensor(&[2, 3, 2]);
        let v = [0.5, -1.0, 2.0];
        let a = Matrix::from_rows(&[v.to_vec()]).unwrap();
        assert_eq!(x.contract(1, &v).unwrap(), x.mode_product(1, &a).unwrap());
    }

    #[test]
    fn gram_matches_unfolding_product() {
        let x = seq_tensor(&[3, 2, 4]);
        for m in 0..3 {
            let mm = x.mat_m(m).unwrap().matrix;
            let full = mm.matmul(&mm.transpose()).unwrap();
            let mut acc = Matrix::zeros(x.dims()[m], x.dims()[m]);
            x.accumulate_mode_gram(m, &mut acc).unwrap();
            for j in 0..acc.cols() {
                for i in 0..=j {
                    assert_eq!(acc[(i, j)], full[(i, j)]);
                }
            }
        }
    }
}
