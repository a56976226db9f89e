//! Randomized Composite PCA: warm-start CP bases from a noisy tensor.
//!
//! The tensor is unfolded along a balanced split `S | Sᶜ` and its top `R`
//! singular triplets are computed. Components whose singular value is well
//! separated from its neighbours are read off directly by reshaping `û_r`
//! and `v̂_r` and taking per-mode leading singular vectors (composite PCA).
//! Runs of components with clustered singular values are re-assembled into a
//! low-rank tensor `Ξ_j` and resolved by random projections along the first
//! mode followed by greedy selection with overlap pruning.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{canonical_sign, norm2, top_k_svd, Matrix};
use crate::tensor::{DenseTensor, ModeMatrix};
use crate::tnorm::SimRng;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InitConfig {
    pub rank: usize,
    /// Row modes of the unfolding; chosen automatically when `None`.
    pub split: Option<Vec<usize>>,
    /// Eigengap constant, in `(0, 1)`.
    pub c0: f64,
    /// Number of random projections; `max(100, 2·d₁)` when `None`.
    pub projections: Option<usize>,
    /// Overlap threshold for pruning duplicate tuples, in `(0, 1)`.
    pub nu: f64,
}

impl InitConfig {
    pub fn new(rank: usize) -> Self {
        Self {
            rank,
            split: None,
            c0: 0.1,
            projections: None,
            nu: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::InvalidConfig("rank must be at least 1".into()));
        }
        if !(self.c0 > 0.0 && self.c0 < 1.0) {
            return Err(Error::InvalidConfig(format!("c0 = {} not in (0,1)", self.c0)));
        }
        if !(self.nu > 0.0 && self.nu < 1.0) {
            return Err(Error::InvalidConfig(format!("nu = {} not in (0,1)", self.nu)));
        }
        if self.projections == Some(0) {
            return Err(Error::InvalidConfig("need at least one projection".into()));
        }
        Ok(())
    }

    fn projections_for(&self, projection_dim: usize) -> usize {
        self.projections.unwrap_or_else(|| 100.max(2 * projection_dim))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Cpca,
    Randomized,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupRecord {
    /// Zero-based component indices, contiguous.
    pub indices: Vec<usize>,
    pub branch: Branch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarmStart {
    /// `bases[r][m]`, unit vectors.
    pub bases: Vec<Vec<Vec<f64>>>,
    pub groups: Vec<GroupRecord>,
    pub singular_values: Vec<f64>,
    pub split: Vec<usize>,
}

impl WarmStart {
    pub fn rank(&self) -> usize {
        self.bases.len()
    }
}

/// Nonempty proper subset `S` of the modes maximising `min(d_S, d/d_S)`;
/// ties go to the lexicographically smallest sorted mode list.
pub fn choose_split(dims: &[usize]) -> Result<Vec<usize>> {
    let m = dims.len();
    if m < 2 {
        return Err(Error::InvalidModeSet(
            "a split needs a tensor of order at least 2".into(),
        ));
    }
    if m > 20 {
        return Err(Error::InvalidModeSet(format!("order {m} is too large to enumerate splits")));
    }
    let total: usize = dims.iter().product();
    let mut best: Option<(usize, Vec<usize>)> = None;
    for mask in 1..(1u32 << m) - 1 {
        let set: Vec<usize> = (0..m).filter(|&i| mask & (1 << i) != 0).collect();
        let ds: usize = set.iter().map(|&i| dims[i]).product();
        let score = ds.min(total / ds);
        let better = match &best {
            None => true,
            Some((s, b)) => score > *s || (score == *s && set < *b),
        };
        if better {
            best = Some((score, set));
        }
    }
    Ok(best.expect("order >= 2 has a proper subset").1)
}

/// Groups component indices by the eigengap test
/// `min(|λ_r − λ_{r−1}|, |λ_r − λ_{r+1}|) > c₀ λ_R` with `λ_0 = ∞`,
/// `λ_{R+1} = 0`. Passing indices become singletons; maximal runs of failing
/// indices become one group each.
pub fn eigengap_groups(lambda: &[f64], c0: f64) -> Vec<Vec<usize>> {
    let r = lambda.len();
    if r == 0 {
        return Vec::new();
    }
    let threshold = c0 * lambda[r - 1];
    let passes: Vec<bool> = (0..r)
        .map(|i| {
            let prev = if i == 0 { f64::INFINITY } else { lambda[i - 1] };
            let next = if i + 1 == r { 0.0 } else { lambda[i + 1] };
            (lambda[i] - prev).abs().min((lambda[i] - next).abs()) > threshold
        })
        .collect();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in 0..r {
        let extend = !passes[i] && i > 0 && !passes[i - 1];
        if extend {
            groups.last_mut().expect("previous group").push(i);
        } else {
            groups.push(vec![i]);
        }
    }
    groups
}

/// Per-mode leading directions of a vectorised sub-tensor.
///
/// `vector` is `vec` of a tensor with dims `side_dims`; for each of its modes
/// the top left singular vector of the mode unfolding is returned.
pub fn cpca_extract(vector: &[f64], side_dims: &[usize]) -> Result<Vec<Vec<f64>>> {
    let len: usize = side_dims.iter().product();
    if vector.len() != len || side_dims.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "vector of length {} cannot be reshaped to {side_dims:?}",
            vector.len()
        )));
    }
    if norm2(vector) == 0.0 {
        return Err(Error::ZeroVector);
    }
    if side_dims.len() == 1 {
        let n = norm2(vector);
        let mut v: Vec<f64> = vector.iter().map(|x| x / n).collect();
        canonical_sign(&mut v);
        return Ok(vec![v]);
    }
    let t = DenseTensor::new(side_dims.to_vec(), vector.to_vec())?;
    (0..side_dims.len())
        .map(|m| {
            let unf = t.mat_m(m)?;
            Ok(top_k_svd(&unf.matrix, 1)?.left.col(0).to_vec())
        })
        .collect()
}

fn normalized(mut v: Vec<f64>) -> Result<Vec<f64>> {
    let n = norm2(&v);
    if !(n > 0.0) {
        return Err(Error::ZeroVector);
    }
    v.iter_mut().for_each(|x| *x /= n);
    canonical_sign(&mut v);
    Ok(v)
}

/// The mode projected along in the randomized step: the first mode, or the
/// largest other mode if the first is degenerate.
fn projection_mode(dims: &[usize]) -> usize {
    if dims[0] > 1 {
        return 0;
    }
    let mut best = 0;
    for (m, &d) in dims.iter().enumerate() {
        if d > dims[best] {
            best = m;
        }
    }
    best
}

struct Candidate {
    bases: Vec<Vec<f64>>,
    score: f64,
}

/// Resolves `s` components of `xi` by random projections and greedy
/// selection with overlap pruning.
pub fn randomized_projection(
    xi: &DenseTensor,
    s: usize,
    cfg: &InitConfig,
    rng: &mut SimRng,
) -> Result<Vec<Vec<Vec<f64>>>> {
    cfg.validate()?;
    let dims = xi.dims().to_vec();
    if dims.len() < 2 {
        return Err(Error::InvalidModeSet("randomized projection needs order ≥ 2".into()));
    }
    if s == 0 {
        return Ok(Vec::new());
    }
    let p = projection_mode(&dims);
    let rest: Vec<usize> = (0..dims.len()).filter(|&m| m != p).collect();
    let (s1, s1c): (Vec<usize>, Vec<usize>) = if rest.len() == 1 {
        (rest.clone(), Vec::new())
    } else {
        let sub_dims: Vec<usize> = rest.iter().map(|&m| dims[m]).collect();
        let pick = choose_split(&sub_dims)?;
        rest.iter()
            .enumerate()
            .partition_map_modes(|k| pick.contains(&k))
    };
    let n_proj = cfg.projections_for(dims[p]);
    if n_proj < s {
        return Err(Error::InvalidConfig(format!(
            "{n_proj} projections cannot yield {s} components"
        )));
    }

    let base_seed = rng.next_u64();
    let candidates: Vec<Candidate> = (0..n_proj)
        .into_par_iter()
        .map(|l| {
            let mut sub = SimRng::substream(base_seed, l as u64);
            project_once(xi, p, &s1, &s1c, &mut sub)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut alive = vec![true; candidates.len()];
    let mut chosen = Vec::with_capacity(s);
    for _ in 0..s {
        let mut best: Option<usize> = None;
        for (l, c) in candidates.iter().enumerate() {
            if alive[l] && best.is_none_or(|b| c.score > candidates[b].score) {
                best = Some(l);
            }
        }
        let Some(b) = best else {
            return Err(Error::PoolExhausted {
                needed: s,
                found: chosen.len(),
            });
        };
        let pick = &candidates[b].bases;
        for (l, c) in candidates.iter().enumerate() {
            if alive[l] {
                let overlap = c
                    .bases
                    .iter()
                    .zip(pick)
                    .map(|(x, y)| crate::linalg::dot(x, y).abs())
                    .fold(0.0_f64, f64::max);
                if overlap > cfg.nu {
                    alive[l] = false;
                }
            }
        }
        alive[b] = false;
        chosen.push(pick.clone());
    }
    Ok(chosen)
}

trait PartitionModes {
    fn partition_map_modes(self, f: impl Fn(usize) -> bool) -> (Vec<usize>, Vec<usize>);
}

impl<'a, I: Iterator<Item = (usize, &'a usize)>> PartitionModes for I {
    fn partition_map_modes(self, f: impl Fn(usize) -> bool) -> (Vec<usize>, Vec<usize>) {
        let mut yes = Vec::new();
        let mut no = Vec::new();
        for (k, &m) in self {
            if f(k) {
                yes.push(m);
            } else {
                no.push(m);
            }
        }
        (yes, no)
    }
}

fn project_once(
    xi: &DenseTensor,
    p: usize,
    s1: &[usize],
    s1c: &[usize],
    rng: &mut SimRng,
) -> Result<Candidate> {
    let dims = xi.dims();
    let theta = rng.normal_vec(dims[p]);
    let y = xi.contract(p, &theta)?;
    // Mode p now has size 1 and contributes nothing to either index.
    let unf = y.mat_s(s1)?;
    let svd = top_k_svd(&unf.matrix, 1)?;

    let mut bases: Vec<Vec<f64>> = vec![Vec::new(); dims.len()];
    let s1_dims: Vec<usize> = s1.iter().map(|&m| dims[m]).collect();
    for (m, a) in s1.iter().zip(cpca_extract(svd.left.col(0), &s1_dims)?) {
        bases[*m] = a;
    }
    if !s1c.is_empty() {
        let s1c_dims: Vec<usize> = s1c.iter().map(|&m| dims[m]).collect();
        for (m, a) in s1c.iter().zip(cpca_extract(svd.right.col(0), &s1c_dims)?) {
            bases[*m] = a;
        }
    }
    let refs: Vec<&[f64]> = bases.iter().map(Vec::as_slice).collect();
    bases[p] = normalized(xi.contract_all_but(p, &refs)?)?;
    let refs: Vec<&[f64]> = bases.iter().map(Vec::as_slice).collect();
    let score = xi.contract_all(&refs)?.abs();
    Ok(Candidate { bases, score })
}

/// Warm-start CP bases for `b_hat` at rank `cfg.rank`.
pub fn rcpca(b_hat: &DenseTensor, cfg: &InitConfig, rng: &mut SimRng) -> Result<WarmStart> {
    cfg.validate()?;
    let dims = b_hat.dims().to_vec();
    let split = match &cfg.split {
        Some(s) => {
            let mut s = s.clone();
            s.sort_unstable();
            s
        }
        None => choose_split(&dims)?,
    };
    let unf = b_hat.mat_s(&split)?;
    let max_rank = unf.matrix.rows().min(unf.matrix.cols());
    if cfg.rank > max_rank {
        return Err(Error::RankOutOfRange {
            requested: cfg.rank,
            max: max_rank,
        });
    }
    let svd = top_k_svd(&unf.matrix, cfg.rank)?;
    let lambda = svd.singular_values.clone();
    let groups = eigengap_groups(&lambda, cfg.c0);

    let row_modes = unf.row_modes.clone();
    let col_modes = unf.col_modes();
    let row_dims: Vec<usize> = row_modes.iter().map(|&m| dims[m]).collect();
    let col_dims: Vec<usize> = col_modes.iter().map(|&m| dims[m]).collect();

    let mut bases: Vec<Vec<Vec<f64>>> = vec![Vec::new(); cfg.rank];
    let mut records = Vec::with_capacity(groups.len());
    for group in groups {
        if group.len() == 1 {
            let r = group[0];
            let mut comp = vec![Vec::new(); dims.len()];
            for (m, a) in row_modes.iter().zip(cpca_extract(svd.left.col(r), &row_dims)?) {
                comp[*m] = a;
            }
            for (m, a) in col_modes.iter().zip(cpca_extract(svd.right.col(r), &col_dims)?) {
                comp[*m] = a;
            }
            bases[r] = comp;
            records.push(GroupRecord {
                indices: group,
                branch: Branch::Cpca,
            });
        } else {
            let xi = group_tensor(&svd.singular_values, &svd.left, &svd.right, &group, &unf)?;
            let tuples = randomized_projection(&xi, group.len(), cfg, rng)?;
            for (&r, t) in group.iter().zip(tuples) {
                bases[r] = t;
            }
            records.push(GroupRecord {
                indices: group,
                branch: Branch::Randomized,
            });
        }
    }
    Ok(WarmStart {
        bases,
        groups: records,
        singular_values: lambda,
        split,
    })
}

/// `Ξ_j = Σ_{ℓ∈I_j} λ_ℓ u_ℓ v_ℓᵀ`, folded back into tensor shape.
fn group_tensor(
    lambda: &[f64],
    u: &Matrix,
    v: &Matrix,
    group: &[usize],
    unf: &ModeMatrix,
) -> Result<DenseTensor> {
    let (rows, cols) = (u.rows(), v.rows());
    let mut m = Matrix::zeros(rows, cols);
    for &l in group {
        let (ul, vl) = (u.col(l), v.col(l));
        for j in 0..cols {
            let c = lambda[l] * vl[j];
            for (x, &ui) in m.col_mut(j).iter_mut().zip(ul) {
                *x += c * ui;
            }
        }
    }
    Ok(ModeMatrix::new(m, &unf.row_modes, &unf.dims)?.fold())
}
