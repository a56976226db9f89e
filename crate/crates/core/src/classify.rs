//! The plug-in linear discriminant rule and evaluation metrics.

use std::io::Write;

use rayon::prelude::*;

use crate::discriminant::DiscriminantEstimate;
use crate::error::{Error, Result};
use crate::linalg::{dot, sin_angle};
use crate::model::CpModel;
use crate::tensor::{cp_compose, frob_norm, DenseTensor};
use crate::tnorm::{Label, TgmmParams};

/// `Z ↦ 2` iff `⟨Z − midpoint, B⟩ + log(π₂/π₁) ≥ 0`.
#[derive(Debug, Clone)]
pub struct LdaRule {
    pub discriminant: DenseTensor,
    pub midpoint: DenseTensor,
    pub log_prior_ratio: f64,
}

impl LdaRule {
    pub fn new(discriminant: DenseTensor, midpoint: DenseTensor, log_prior_ratio: f64) -> Result<Self> {
        if discriminant.dims() != midpoint.dims() {
            return Err(Error::DimensionMismatch(format!(
                "discriminant {:?} vs midpoint {:?}",
                discriminant.dims(),
                midpoint.dims()
            )));
        }
        if !log_prior_ratio.is_finite() {
            return Err(Error::Domain("log prior ratio must be finite".into()));
        }
        Ok(Self {
            discriminant,
            midpoint,
            log_prior_ratio,
        })
    }

    /// Rule using the fitted means and priors with an arbitrary discriminant.
    pub fn from_estimate(est: &DiscriminantEstimate, discriminant: DenseTensor) -> Result<Self> {
        let midpoint = est.mean1.add(&est.mean2)?.scale(0.5);
        Self::new(discriminant, midpoint, (est.prior2 / est.prior1).ln())
    }

    /// Rule with `B̂^cp = cp_compose(model)`.
    pub fn from_cp(est: &DiscriminantEstimate, model: &CpModel) -> Result<Self> {
        Self::from_estimate(est, cp_compose(model)?)
    }

    /// Rule with the raw sample discriminant `B̂`.
    pub fn from_sample(est: &DiscriminantEstimate) -> Result<Self> {
        Self::from_estimate(est, est.b_hat.clone())
    }

    /// The Bayes rule of a known mixture.
    pub fn oracle(params: &TgmmParams) -> Result<Self> {
        let midpoint = params.mean1.add(&params.mean2)?.scale(0.5);
        Self::new(params.discriminant()?, midpoint, (params.prior2 / params.prior1).ln())
    }

    pub fn statistic(&self, z: &DenseTensor) -> Result<f64> {
        if z.dims() != self.midpoint.dims() {
            return Err(Error::DimensionMismatch(format!(
                "input {:?} vs rule {:?}",
                z.dims(),
                self.midpoint.dims()
            )));
        }
        let centred: f64 = z
            .as_slice()
            .iter()
            .zip(self.midpoint.as_slice())
            .zip(self.discriminant.as_slice())
            .map(|((x, m), b)| (x - m) * b)
            .sum();
        Ok(centred + self.log_prior_ratio)
    }

    pub fn predict(&self, z: &DenseTensor) -> Result<Label> {
        Ok(if self.statistic(z)? >= 0.0 { Label::Two } else { Label::One })
    }
}

/// Fraction of class-1 points labelled 2 plus class-2 points labelled 1.
pub fn misclassification_rate(
    rule: &LdaRule,
    test1: &[DenseTensor],
    test2: &[DenseTensor],
) -> Result<f64> {
    let total = test1.len() + test2.len();
    if total == 0 {
        return Err(Error::EmptyTestSet);
    }
    let wrong1 = count_labelled(rule, test1, Label::Two)?;
    let wrong2 = count_labelled(rule, test2, Label::One)?;
    Ok((wrong1 + wrong2) as f64 / total as f64)
}

fn count_labelled(rule: &LdaRule, xs: &[DenseTensor], label: Label) -> Result<usize> {
    xs.par_iter()
        .map(|x| rule.predict(x).map(|l| usize::from(l == label)))
        .try_reduce(|| 0, |a, b| Ok(a + b))
}

/// Greedy component matching on `∏_m |â_rmᵀ a_qm|`; returns `pairs[r] = q`.
pub fn match_components(model: &CpModel, truth: &CpModel) -> Result<Vec<usize>> {
    if model.rank() != truth.rank() {
        return Err(Error::RankMismatch(format!(
            "model has rank {}, truth has rank {}",
            model.rank(),
            truth.rank()
        )));
    }
    if model.dims()? != truth.dims()? {
        return Err(Error::DimensionMismatch("models differ in dims".into()));
    }
    let r = model.rank();
    let sim: Vec<Vec<f64>> = model
        .bases
        .iter()
        .map(|est| {
            truth
                .bases
                .iter()
                .map(|tr| est.iter().zip(tr).map(|(a, b)| dot(a, b).abs()).product())
                .collect()
        })
        .collect();
    let mut pairs = vec![usize::MAX; r];
    let mut taken = vec![false; r];
    for _ in 0..r {
        let mut best: Option<(usize, usize)> = None;
        for i in (0..r).filter(|&i| pairs[i] == usize::MAX) {
            for j in (0..r).filter(|&j| !taken[j]) {
                if best.is_none_or(|(bi, bj)| sim[i][j] > sim[bi][bj]) {
                    best = Some((i, j));
                }
            }
        }
        let (i, j) = best.expect("unmatched pair remains");
        pairs[i] = j;
        taken[j] = true;
    }
    Ok(pairs)
}

/// Largest `√(1 − (âᵀa)²)` over matched components and all modes.
pub fn basis_error(model: &CpModel, truth: &CpModel) -> Result<f64> {
    let pairs = match_components(model, truth)?;
    Ok(pairs
        .iter()
        .enumerate()
        .flat_map(|(r, &q)| {
            model.bases[r]
                .iter()
                .zip(&truth.bases[q])
                .map(|(a, b)| sin_angle(a, b))
        })
        .fold(0.0, f64::max))
}

/// `‖B̂ − B‖_F / ‖B‖_F`.
pub fn rel_tensor_error(b_est: &DenseTensor, b_true: &DenseTensor) -> Result<f64> {
    let norm = frob_norm(b_true);
    if norm == 0.0 {
        return Err(Error::Domain("reference tensor is zero".into()));
    }
    Ok(frob_norm(&b_est.sub(b_true)?) / norm)
}

/// Writes `index,statistic,label` rows.
pub fn write_predictions<W: Write>(rule: &LdaRule, xs: &[DenseTensor], out: W) -> Result<()> {
    let stats: Vec<f64> = xs
        .par_iter()
        .map(|x| rule.statistic(x))
        .collect::<Result<_>>()?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["index", "statistic", "label"])?;
    for (i, s) in stats.iter().enumerate() {
        let label = if *s >= 0.0 { Label::Two } else { Label::One };
        w.write_record([i.to_string(), s.to_string(), label.as_u8().to_string()])?;
    }
    w.flush()?;
    Ok(())
}
