//! Tensor-normal and two-class TGMM sampling, and the Bayes-optimal error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{chol_factor, Matrix};
use crate::tensor::{frob_norm, inner, DenseTensor};

/// Multiplier used to spread substream indices across the seed space.
pub const SEED_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

/// Seed for substream `index` of `base`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    base ^ index.wrapping_mul(SEED_STRIDE)
}

/// Seeded ChaCha8 generator with Box–Muller standard normals.
#[derive(Debug, Clone)]
pub struct SimRng {
    inner: ChaCha8Rng,
    spare: Option<f64>,
}

impl SimRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    /// Independent generator for substream `index` of `base`.
    pub fn substream(base: u64, index: u64) -> Self {
        Self::new(derive_seed(base, index))
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random::<u64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // 1 - U lies in (0, 1], keeping the log finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        self.spare = Some(radius * angle.sin());
        radius * angle.cos()
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = self.standard_normal());
    }

    pub fn normal_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.standard_normal()).collect()
    }
}

/// Tensor-normal law `M + Z ×_1 L_1 ⋯ ×_M L_M` with `L_m L_mᵀ = Σ_m`.
#[derive(Debug, Clone)]
pub struct TensorNormal {
    mean: DenseTensor,
    factors: Vec<Option<Matrix>>,
}

impl TensorNormal {
    pub fn new(mean: &DenseTensor, covs: &[Matrix]) -> Result<Self> {
        check_covs(mean.dims(), covs)?;
        let factors = covs
            .iter()
            .map(|s| {
                if s.is_identity() {
                    Ok(None)
                } else {
                    chol_factor(s).map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            mean: mean.clone(),
            factors,
        })
    }

    pub fn sample(&self, rng: &mut SimRng) -> DenseTensor {
        let mut z = DenseTensor::zeros(self.mean.dims()).expect("mean dims are valid");
        rng.fill_normal(z.as_mut_slice());
        for (m, f) in self.factors.iter().enumerate() {
            if let Some(l) = f {
                z = z.mode_product(m, l).expect("factor dims checked");
            }
        }
        z.axpy(1.0, &self.mean).expect("same dims");
        z
    }
}

fn check_covs(dims: &[usize], covs: &[Matrix]) -> Result<()> {
    if covs.len() != dims.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} covariance matrices for an order-{} tensor",
            covs.len(),
            dims.len()
        )));
    }
    for (m, (s, &d)) in covs.iter().zip(dims).enumerate() {
        if s.rows() != d || s.cols() != d {
            return Err(Error::DimensionMismatch(format!(
                "Σ_{m} is {}x{}, expected {d}x{d}",
                s.rows(),
                s.cols()
            )));
        }
    }
    Ok(())
}

/// One draw from `TN(mean; covs)`.
pub fn sample_tensor_normal(
    mean: &DenseTensor,
    covs: &[Matrix],
    rng: &mut SimRng,
) -> Result<DenseTensor> {
    Ok(TensorNormal::new(mean, covs)?.sample(rng))
}

/// Class label of a two-class TGMM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    One,
    Two,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::One => 1,
            Label::Two => 2,
        }
    }

    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Label::One),
            2 => Ok(Label::Two),
            other => Err(Error::Format(format!("class label must be 1 or 2, got {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub x: DenseTensor,
    pub y: Label,
}

/// Two-class tensor Gaussian mixture with shared per-mode covariances.
#[derive(Debug, Clone)]
pub struct TgmmParams {
    pub mean1: DenseTensor,
    pub mean2: DenseTensor,
    pub covs: Vec<Matrix>,
    pub prior1: f64,
    pub prior2: f64,
}

impl TgmmParams {
    pub fn validate(&self) -> Result<()> {
        if self.mean1.dims() != self.mean2.dims() {
            return Err(Error::DimensionMismatch("class means differ in shape".into()));
        }
        check_covs(self.mean1.dims(), &self.covs)?;
        let ok = |p: f64| (0.0..=1.0).contains(&p);
        if !ok(self.prior1) || !ok(self.prior2) || (self.prior1 + self.prior2 - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "priors ({}, {}) must lie in [0,1] and sum to 1",
                self.prior1, self.prior2
            )));
        }
        Ok(())
    }

    /// `D = M_2 − M_1`.
    pub fn mean_difference(&self) -> Result<DenseTensor> {
        self.mean2.sub(&self.mean1)
    }

    /// `B = D ×_m Σ_m⁻¹`.
    pub fn discriminant(&self) -> Result<DenseTensor> {
        let mut b = self.mean_difference()?;
        for (m, s) in self.covs.iter().enumerate() {
            if !s.is_identity() {
                b = b.mode_product(m, &crate::linalg::sym_inverse(s)?)?;
            }
        }
        Ok(b)
    }

    /// Signal-to-noise ratio `Δ = √⟨B, D⟩`.
    pub fn snr(&self) -> Result<f64> {
        snr(&self.discriminant()?, &self.mean_difference()?)
    }
}

/// `n` labelled draws; each label is `One` with probability `prior1`.
pub fn sample_tgmm(params: &TgmmParams, n: usize, rng: &mut SimRng) -> Result<Vec<LabeledSample>> {
    params.validate()?;
    let class1 = TensorNormal::new(&params.mean1, &params.covs)?;
    let class2 = TensorNormal::new(&params.mean2, &params.covs)?;
    Ok((0..n)
        .map(|_| {
            if rng.uniform() < params.prior1 {
                LabeledSample {
                    x: class1.sample(rng),
                    y: Label::One,
                }
            } else {
                LabeledSample {
                    x: class2.sample(rng),
                    y: Label::Two,
                }
            }
        })
        .collect())
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Misclassification error of the Bayes rule at signal-to-noise ratio `delta`.
pub fn bayes_error(delta: f64, prior1: f64, prior2: f64) -> Result<f64> {
    if !(prior1 > 0.0 && prior2 > 0.0) || (prior1 + prior2 - 1.0).abs() > 1e-12 {
        return Err(Error::Domain(format!("invalid priors ({prior1}, {prior2})")));
    }
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::Domain(format!("Δ must be finite and nonnegative, got {delta}")));
    }
    let log_ratio = (prior2 / prior1).ln();
    if delta == 0.0 {
        return if log_ratio == 0.0 {
            Ok(0.5)
        } else {
            Err(Error::Domain("Δ = 0 with unequal priors".into()))
        };
    }
    let shift = log_ratio / delta;
    // 1 − Φ(x) is evaluated as Φ(−x) to keep tail accuracy.
    Ok(prior1 * normal_cdf(shift - delta / 2.0) + prior2 * normal_cdf(-(shift + delta / 2.0)))
}

/// `Δ = √⟨B, D⟩`, with roundoff-level negatives clamped to zero.
pub fn snr(b: &DenseTensor, d: &DenseTensor) -> Result<f64> {
    let ip = inner(b, d)?;
    if ip < -1e-6 * frob_norm(b) * frob_norm(d) {
        return Err(Error::ModelInconsistency(format!(
            "⟨B, D⟩ = {ip:e} is negative"
        )));
    }
    Ok(ip.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_reproducible() {
        let mut a = SimRng::new(42);
        let mut b = SimRng::new(42);
        let xa: Vec<f64> = (0..10).map(|_| a.standard_normal()).collect();
        let xb: Vec<f64> = (0..10).map(|_| b.standard_normal()).collect();
        assert_eq!(xa, xb);
        assert_ne!(SimRng::substream(42, 1).next_u64(), SimRng::substream(42, 2).next_u64());
        assert_eq!(derive_seed(7, 0), 7);
    }

    #[test]
    fn bayes_error_edges() {
        assert_eq!(bayes_error(0.0, 0.5, 0.5).unwrap(), 0.5);
        assert!(matches!(bayes_error(0.0, 0.3, 0.7), Err(Error::Domain(_))));
        assert!(bayes_error(20.0, 0.5, 0.5).unwrap() < 1e-20);
        assert!(bayes_error(-1.0, 0.5, 0.5).is_err());
        assert!(bayes_error(1.0, 0.2, 0.2).is_err());
    }

    #[test]
    fn bayes_error_is_monotone() {
        for priors in [(0.5, 0.5), (0.3, 0.7)] {
            let vals: Vec<f64> = (1..=100)
                .map(|k| bayes_error(k as f64 * 0.1, priors.0, priors.1).unwrap())
                .collect();
            assert!(vals.windows(2).all(|w| w[1] < w[0]));
        }
    }

    #[test]
    fn snr_edges() {
        let b = DenseTensor::new(vec![2, 2], vec![1.0, 2.0, 0.0, -1.0]).unwrap();
        assert!((snr(&b, &b).unwrap() - frob_norm(&b)).abs() < 1e-15);
        let z = DenseTensor::zeros(&[2, 2]).unwrap();
        assert_eq!(snr(&z, &b).unwrap(), 0.0);
        assert!(matches!(
            snr(&b, &b.scale(-1.0)),
            Err(Error::ModelInconsistency(_))
        ));
    }

    #[test]
    fn all_class_one_when_prior_is_one() {
        let zero = DenseTensor::zeros(&[2, 2]).unwrap();
        let params = TgmmParams {
            mean1: zero.clone(),
            mean2: zero,
            covs: vec![Matrix::identity(2), Matrix::identity(2)],
            prior1: 1.0,
            prior2: 0.0,
        };
        let s = sample_tgmm(&params, 200, &mut SimRng::new(1)).unwrap();
        assert!(s.iter().all(|x| x.y == Label::One));
    }
}
