//! Iterative projection refinement of CP bases.
//!
//! Each basis vector is updated by contracting `B̂` against the right-inverse
//! columns `b_{rℓ}` of every other mode, which cancels the cross-component
//! leakage a plain power step would pick up when bases are not orthogonal.
//! Modes are swept in ascending order and the right inverse of a mode is
//! refreshed once all its components are updated.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cp_init::WarmStart;
use crate::error::{Error, Result};
use crate::linalg::{min_singular_value, norm2, right_inverse, sin_angle, Matrix};
use crate::model::CpModel;
use crate::tensor::DenseTensor;

pub const DEFAULT_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_MAX_ITERATIONS: usize = 50;
/// Projections with norm below this are treated as annihilated.
pub const DEGENERATE_NORM: f64 = 1e-14;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub model: CpModel,
    pub iterations_run: usize,
    /// Largest sign-invariant basis change of each iteration.
    pub basis_changes: Vec<f64>,
    pub converged: bool,
    /// Smallest singular value over the basis matrices after each iteration.
    pub min_singular_values: Vec<f64>,
}

impl FitReport {
    /// CSV with columns `iteration,basis_change,min_singular_value`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_report_csv(self, std::fs::File::create(path)?)
    }
}

/// Largest `√(1 − (uᵀv)²)` over matching basis vectors.
pub fn basis_change(prev: &[Vec<Vec<f64>>], next: &[Vec<Vec<f64>>]) -> f64 {
    prev.iter()
        .zip(next)
        .flat_map(|(p, n)| p.iter().zip(n).map(|(u, v)| sin_angle(u, v)))
        .fold(0.0, f64::max)
}

fn mode_matrix(bases: &[Vec<Vec<f64>>], mode: usize) -> Result<Matrix> {
    let cols: Vec<Vec<f64>> = bases.iter().map(|c| c[mode].clone()).collect();
    Matrix::from_columns(&cols)
}

fn check_warm(b_hat: &DenseTensor, warm: &WarmStart) -> Result<()> {
    if warm.bases.is_empty() {
        return Err(Error::RankMismatch("warm start has no components".into()));
    }
    for (r, comp) in warm.bases.iter().enumerate() {
        if comp.len() != b_hat.order() {
            return Err(Error::DimensionMismatch(format!(
                "warm component {r} has {} modes, tensor has {}",
                comp.len(),
                b_hat.order()
            )));
        }
        for (m, a) in comp.iter().enumerate() {
            if a.len() != b_hat.dims()[m] {
                return Err(Error::DimensionMismatch(format!(
                    "warm basis ({r},{m}) has length {}, expected {}",
                    a.len(),
                    b_hat.dims()[m]
                )));
            }
            if (norm2(a) - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidConfig(format!("warm basis ({r},{m}) is not unit norm")));
            }
        }
    }
    Ok(())
}

/// Refines `warm` against `b_hat` until the basis change drops to `eps` or
/// `t_max` iterations have run.
pub fn distip_cp(b_hat: &DenseTensor, warm: &WarmStart, eps: f64, t_max: usize) -> Result<FitReport> {
    check_warm(b_hat, warm)?;
    if !(eps > 0.0) {
        return Err(Error::InvalidConfig(format!("tolerance must be positive, got {eps}")));
    }
    if t_max == 0 {
        return Err(Error::InvalidConfig("need at least one iteration".into()));
    }
    let order = b_hat.order();
    let rank = warm.rank();

    let mut bases = warm.bases.clone();
    // inverses[m] holds the columns b_{1m}, …, b_{Rm}.
    let mut inverses: Vec<Matrix> = (0..order)
        .map(|m| {
            right_inverse(&mode_matrix(&bases, m)?)
                .map_err(|_| Error::SingularBasis { mode: m, iteration: 0 })
        })
        .collect::<Result<_>>()?;

    let mut changes = Vec::new();
    let mut min_svs = Vec::new();
    let mut converged = false;
    for t in 1..=t_max {
        let prev = bases.clone();
        let mut smallest = f64::INFINITY;
        for m in 0..order {
            let updated: Vec<Vec<f64>> = (0..rank)
                .into_par_iter()
                .map(|r| {
                    let vecs: Vec<&[f64]> = inverses.iter().map(|b| b.col(r)).collect();
                    let z = b_hat.contract_all_but(m, &vecs)?;
                    let n = norm2(&z);
                    if !(n >= DEGENERATE_NORM) {
                        return Err(Error::DegenerateComponent {
                            component: r,
                            mode: m,
                            iteration: t,
                        });
                    }
                    Ok(z.into_iter().map(|x| x / n).collect())
                })
                .collect::<Result<_>>()?;
            for (comp, a) in bases.iter_mut().zip(updated) {
                comp[m] = a;
            }
            let a_m = mode_matrix(&bases, m)?;
            inverses[m] =
                right_inverse(&a_m).map_err(|_| Error::SingularBasis { mode: m, iteration: t })?;
            smallest = smallest.min(min_singular_value(&a_m)?);
        }
        let change = basis_change(&prev, &bases);
        changes.push(change);
        min_svs.push(smallest);
        if change <= eps {
            converged = true;
            break;
        }
    }

    let mut weights = Vec::with_capacity(rank);
    for (r, comp) in bases.iter_mut().enumerate() {
        let vecs: Vec<&[f64]> = inverses.iter().map(|b| b.col(r)).collect();
        let w = b_hat.contract_all(&vecs)?;
        if w < 0.0 {
            comp[0].iter_mut().for_each(|x| *x = -*x);
        }
        weights.push(w.abs());
    }
    Ok(FitReport {
        model: CpModel::new(weights, bases)?,
        iterations_run: changes.len(),
        basis_changes: changes,
        converged,
        min_singular_values: min_svs,
    })
}

impl CpModel {
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_json(path, self)
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let model: CpModel = crate::io::read_json(path)?;
        model.validate()?;
        Ok(model)
    }
}

/// Writes the report's diagnostics as CSV to any writer.
pub fn write_report_csv<W: Write>(report: &FitReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "basis_change", "min_singular_value"])?;
    for (t, (c, s)) in report
        .basis_changes
        .iter()
        .zip(&report.min_singular_values)
        .enumerate()
    {
        w.write_record([(t + 1).to_string(), c.to_string(), s.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
