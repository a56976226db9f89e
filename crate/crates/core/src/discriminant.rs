//! Sample discriminant tensor `B̂ = (X̄⁽²⁾ − X̄⁽¹⁾) ×_m Σ̂_m⁻¹`.
//!
//! Per-mode covariances are pooled over both classes after within-class
//! centring and divided by `(n₁+n₂) d_{−m}`. Because the Kronecker product
//! only identifies the covariance up to per-mode scale, the last mode is
//! rescaled by `Ĉ_σ⁻¹` with `Ĉ_σ = ∏_m Σ̂_{m,11} / Var̂(X_{1…1})`, where
//! `Var̂` is the pooled within-class variance of the first entry (divisor
//! `n₁+n₂`).
//!
//! All sums run in a fixed order (class 1 then class 2, samples in input
//! order), so outputs are bitwise reproducible for a given input ordering.
//! Floating-point addition is not associative, so reordering the samples may
//! change the last bits.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::linalg::{sym_inverse, top_k_svd, Matrix};
use crate::tensor::DenseTensor;

/// Sample variance of the first entry below this is treated as degenerate.
pub const MIN_FIRST_ENTRY_VARIANCE: f64 = 1e-14;
/// Default ridge is this fraction of the mean diagonal of `Σ̂_m`.
pub const DEFAULT_RIDGE_FRACTION: f64 = 0.01;
/// Eigenvalue-ratio floor below which a covariance is treated as singular.
pub const CONDITION_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct ModeCovariances {
    pub covs: Vec<Matrix>,
    pub c_sigma: f64,
}

#[derive(Debug, Clone)]
pub struct DiscriminantEstimate {
    pub b_hat: DenseTensor,
    pub precisions: Vec<Matrix>,
    pub mean1: DenseTensor,
    pub mean2: DenseTensor,
    pub prior1: f64,
    pub prior2: f64,
    pub c_sigma: f64,
    /// Ridge added to each `Σ̂_m` before inversion; zero when unused.
    pub ridge_used: Vec<f64>,
}

pub fn sample_mean(samples: &[DenseTensor]) -> Result<DenseTensor> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InvalidShape("mean of an empty sample".into()))?;
    let mut acc = DenseTensor::zeros(first.dims())?;
    for x in samples {
        acc.axpy(1.0, x)?;
    }
    Ok(acc.scale(1.0 / samples.len() as f64))
}

fn check_classes(samples1: &[DenseTensor], samples2: &[DenseTensor]) -> Result<()> {
    for (class, s) in [(1u8, samples1), (2u8, samples2)] {
        if s.len() < 2 {
            return Err(Error::InsufficientSamples {
                class,
                count: s.len(),
                required: 2,
            });
        }
    }
    let dims = samples1[0].dims();
    if samples1.iter().chain(samples2).any(|x| x.dims() != dims) {
        return Err(Error::DimensionMismatch("samples differ in shape".into()));
    }
    Ok(())
}

/// Pooled per-mode covariances and the scale correction `Ĉ_σ`, with the
/// last mode already rescaled.
pub fn mode_covariances(
    samples1: &[DenseTensor],
    samples2: &[DenseTensor],
) -> Result<ModeCovariances> {
    check_classes(samples1, samples2)?;
    let means = [sample_mean(samples1)?, sample_mean(samples2)?];
    mode_covariances_with_means(samples1, samples2, &means)
}

fn mode_covariances_with_means(
    samples1: &[DenseTensor],
    samples2: &[DenseTensor],
    means: &[DenseTensor; 2],
) -> Result<ModeCovariances> {
    let dims = means[0].dims().to_vec();
    let order = dims.len();
    let total: usize = dims.iter().product();
    let n = (samples1.len() + samples2.len()) as f64;

    let mut grams: Vec<Matrix> = dims.iter().map(|&d| Matrix::zeros(d, d)).collect();
    let mut first_entry_ss = 0.0;
    for (samples, mean) in [(samples1, &means[0]), (samples2, &means[1])] {
        for x in samples {
            let dev = x.sub(mean)?;
            first_entry_ss += dev.as_slice()[0] * dev.as_slice()[0];
            for (m, g) in grams.iter_mut().enumerate() {
                dev.accumulate_mode_gram(m, g)?;
            }
        }
    }

    let covs: Vec<Matrix> = grams
        .into_iter()
        .zip(&dims)
        .map(|(g, &d)| {
            let scale = 1.0 / (n * (total / d) as f64);
            Matrix::from_fn(d, d, |i, j| {
                let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
                g[(lo, hi)] * scale
            })
        })
        .collect();

    let var11 = first_entry_ss / n;
    if var11 <= MIN_FIRST_ENTRY_VARIANCE {
        return Err(Error::DegenerateNormalization(var11));
    }
    let c_sigma = covs.iter().map(|s| s[(0, 0)]).product::<f64>() / var11;
    if !(c_sigma > 0.0) || !c_sigma.is_finite() {
        return Err(Error::DegenerateNormalization(var11));
    }
    let mut covs = covs;
    covs[order - 1] = covs[order - 1].scale(1.0 / c_sigma);
    Ok(ModeCovariances { covs, c_sigma })
}

/// Inverts each `Σ̂_m`, adding a ridge `γ_m I` when the direct inverse is not
/// trustworthy.
///
/// The direct inverse is used when `n_min > d_m / d_{−m}` and the eigenvalue
/// ratio exceeds [`CONDITION_FLOOR`]. Otherwise
/// `γ_m = max(override, 0.01 · tr(Σ̂_m)/d_m)`.
pub fn safe_precisions(
    covs: &[Matrix],
    samples_per_class: usize,
    ridge_override: Option<f64>,
) -> Result<(Vec<Matrix>, Vec<f64>)> {
    let total: usize = covs.iter().map(Matrix::rows).product();
    let mut precisions = Vec::with_capacity(covs.len());
    let mut ridges = Vec::with_capacity(covs.len());
    for (m, s) in covs.iter().enumerate() {
        let d = s.rows();
        let d_rest = total / d.max(1);
        let well_posed = samples_per_class as f64 > d as f64 / d_rest as f64;
        let svd = top_k_svd(s, d)?;
        let (hi, lo) = (svd.singular_values[0], svd.singular_values[d - 1]);
        let well_conditioned = hi > 0.0 && lo > CONDITION_FLOOR * hi;

        if well_posed && well_conditioned {
            if let Ok(inv) = sym_inverse(s) {
                precisions.push(inv);
                ridges.push(0.0);
                continue;
            }
        }
        let gamma = ridge_override
            .unwrap_or(0.0)
            .max(DEFAULT_RIDGE_FRACTION * s.trace() / d as f64);
        if !(gamma > 0.0) {
            return Err(Error::Singular(format!(
                "Σ̂_{m} is singular and has zero trace; ridge cannot help"
            )));
        }
        let inv = sym_inverse(&s.add_diag(gamma))
            .map_err(|e| Error::Singular(format!("Σ̂_{m} after ridge {gamma:e}: {e}")))?;
        precisions.push(inv);
        ridges.push(gamma);
    }
    Ok((precisions, ridges))
}

/// Estimates `B̂` together with the fitted means, priors and precisions.
pub fn sample_discriminant(
    samples1: &[DenseTensor],
    samples2: &[DenseTensor],
    ridge_override: Option<f64>,
) -> Result<DiscriminantEstimate> {
    check_classes(samples1, samples2)?;
    let means = [sample_mean(samples1)?, sample_mean(samples2)?];
    let ModeCovariances { covs, c_sigma } =
        mode_covariances_with_means(samples1, samples2, &means)?;
    let n_min = samples1.len().min(samples2.len());
    let (precisions, ridge_used) = safe_precisions(&covs, n_min, ridge_override)?;

    let [mean1, mean2] = means;
    let mut b_hat = mean2.sub(&mean1)?;
    for (m, p) in precisions.iter().enumerate() {
        b_hat = b_hat.mode_product(m, p)?;
    }
    let n = (samples1.len() + samples2.len()) as f64;
    Ok(DiscriminantEstimate {
        b_hat,
        precisions,
        mean1,
        mean2,
        prior1: samples1.len() as f64 / n,
        prior2: samples2.len() as f64 / n,
        c_sigma,
        ridge_used,
    })
}

#[derive(Serialize, Deserialize)]
struct EstimateSidecar {
    dims: Vec<usize>,
    prior1: f64,
    prior2: f64,
    c_sigma: f64,
    ridge_used: Vec<f64>,
    /// Row-major nested arrays.
    precisions: Vec<Vec<Vec<f64>>>,
}

impl DiscriminantEstimate {
    /// Writes `b_hat.dten`, `mean1.dten`, `mean2.dten` and `estimate.json`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        io::write_tensor(dir.join("b_hat.dten"), &self.b_hat)?;
        io::write_tensor(dir.join("mean1.dten"), &self.mean1)?;
        io::write_tensor(dir.join("mean2.dten"), &self.mean2)?;
        let sidecar = EstimateSidecar {
            dims: self.b_hat.dims().to_vec(),
            prior1: self.prior1,
            prior2: self.prior2,
            c_sigma: self.c_sigma,
            ridge_used: self.ridge_used.clone(),
            precisions: self.precisions.iter().map(Matrix::to_rows).collect(),
        };
        io::write_json(dir.join("estimate.json"), &sidecar)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let sidecar: EstimateSidecar = io::read_json(dir.join("estimate.json"))?;
        let b_hat = io::read_tensor(dir.join("b_hat.dten"))?;
        let mean1 = io::read_tensor(dir.join("mean1.dten"))?;
        let mean2 = io::read_tensor(dir.join("mean2.dten"))?;
        if b_hat.dims() != sidecar.dims.as_slice()
            || mean1.dims() != b_hat.dims()
            || mean2.dims() != b_hat.dims()
        {
            return Err(Error::Format("estimate files disagree on dims".into()));
        }
        let precisions = sidecar
            .precisions
            .iter()
            .map(|rows| Matrix::from_rows(rows))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            b_hat,
            precisions,
            mean1,
            mean2,
            prior1: sidecar.prior1,
            prior2: sidecar.prior2,
            c_sigma: sidecar.c_sigma,
            ridge_used: sidecar.ridge_used,
        })
    }
}
