//! End-to-end fitting and leave-k-out rank selection.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{misclassification_rate, LdaRule};
use crate::cp_init::{rcpca, InitConfig, WarmStart};
use crate::cp_refine::{distip_cp, FitReport, DEFAULT_MAX_ITERATIONS, DEFAULT_TOLERANCE};
use crate::discriminant::{sample_discriminant, DiscriminantEstimate};
use crate::error::{Error, Result};
use crate::tensor::DenseTensor;
use crate::tnorm::{derive_seed, SimRng};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitConfig {
    pub init: InitConfig,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub ridge: Option<f64>,
}

impl FitConfig {
    pub fn new(rank: usize) -> Self {
        Self {
            init: InitConfig::new(rank),
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            ridge: None,
        }
    }

    pub fn with_rank(&self, rank: usize) -> Self {
        let mut cfg = self.clone();
        cfg.init.rank = rank;
        cfg
    }
}

#[derive(Debug, Clone)]
pub struct FittedModel {
    pub estimate: DiscriminantEstimate,
    pub warm: WarmStart,
    pub report: FitReport,
}

impl FittedModel {
    pub fn rule(&self) -> Result<LdaRule> {
        LdaRule::from_cp(&self.estimate, &self.report.model)
    }
}

/// CP low-rank refinement of an already estimated discriminant.
pub fn fit_estimate(
    estimate: DiscriminantEstimate,
    cfg: &FitConfig,
    rng: &mut SimRng,
) -> Result<FittedModel> {
    let warm = rcpca(&estimate.b_hat, &cfg.init, rng)?;
    let report = distip_cp(&estimate.b_hat, &warm, cfg.tolerance, cfg.max_iterations)?;
    Ok(FittedModel {
        estimate,
        warm,
        report,
    })
}

pub fn fit(
    samples1: &[DenseTensor],
    samples2: &[DenseTensor],
    cfg: &FitConfig,
    rng: &mut SimRng,
) -> Result<FittedModel> {
    let estimate = sample_discriminant(samples1, samples2, cfg.ridge)?;
    fit_estimate(estimate, cfg, rng)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvConfig {
    pub candidates: Vec<usize>,
    pub folds: usize,
    /// Held-out samples per class in each fold.
    pub holdout_per_class: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            candidates: vec![1, 2, 3],
            folds: 10,
            holdout_per_class: 5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankSelection {
    pub chosen: usize,
    /// Mean held-out error for each candidate, in candidate order.
    pub mean_errors: Vec<(usize, f64)>,
}

fn shuffled(n: usize, rng: &mut SimRng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = (rng.uniform() * (i + 1) as f64) as usize;
        idx.swap(i, j.min(i));
    }
    idx
}

/// Picks the candidate rank with the smallest mean held-out
/// misclassification; ties go to the smaller rank. A fit that fails on a
/// fold counts as error 1 for that fold.
pub fn select_rank(
    samples1: &[DenseTensor],
    samples2: &[DenseTensor],
    base: &FitConfig,
    cv: &CvConfig,
    seed: u64,
) -> Result<RankSelection> {
    let mut candidates = cv.candidates.clone();
    candidates.sort_unstable();
    candidates.dedup();
    if candidates.is_empty() || candidates[0] == 0 {
        return Err(Error::InvalidConfig("candidate ranks must be at least 1".into()));
    }
    if cv.folds == 0 || cv.holdout_per_class == 0 {
        return Err(Error::InvalidConfig("need at least one fold and one held-out sample".into()));
    }
    if candidates.len() == 1 {
        return Ok(RankSelection {
            chosen: candidates[0],
            mean_errors: vec![(candidates[0], f64::NAN)],
        });
    }
    let held = cv.folds * cv.holdout_per_class;
    for (class, s) in [(1u8, samples1), (2u8, samples2)] {
        // Each training split must keep at least two samples per class.
        if s.len() < held + 2 {
            return Err(Error::InsufficientSamples {
                class,
                count: s.len(),
                required: held + 2,
            });
        }
    }
    let perm1 = shuffled(samples1.len(), &mut SimRng::substream(seed, 1));
    let perm2 = shuffled(samples2.len(), &mut SimRng::substream(seed, 2));

    let split = |samples: &[DenseTensor], perm: &[usize], fold: usize| {
        let lo = fold * cv.holdout_per_class;
        let hi = lo + cv.holdout_per_class;
        let test: Vec<DenseTensor> = perm[lo..hi].iter().map(|&i| samples[i].clone()).collect();
        let train: Vec<DenseTensor> = perm
            .iter()
            .enumerate()
            .filter(|(k, _)| *k < lo || *k >= hi)
            .map(|(_, &i)| samples[i].clone())
            .collect();
        (train, test)
    };

    // Misclassified counts keep ties exact; folds all hold the same number of points.
    let fold_size = 2 * cv.holdout_per_class;
    let fold_wrong: Vec<Vec<usize>> = (0..cv.folds)
        .into_par_iter()
        .map(|fold| {
            let (train1, test1) = split(samples1, &perm1, fold);
            let (train2, test2) = split(samples2, &perm2, fold);
            let Ok(estimate) = sample_discriminant(&train1, &train2, base.ridge) else {
                return vec![fold_size; candidates.len()];
            };
            candidates
                .iter()
                .map(|&r| {
                    let mut rng = SimRng::substream(derive_seed(seed, 1000 + fold as u64), r as u64);
                    fit_estimate(estimate.clone(), &base.with_rank(r), &mut rng)
                        .and_then(|fitted| misclassification_rate(&fitted.rule()?, &test1, &test2))
                        .map_or(fold_size, |rate| (rate * fold_size as f64).round() as usize)
                })
                .collect()
        })
        .collect();

    let totals: Vec<usize> = (0..candidates.len())
        .map(|k| fold_wrong.iter().map(|w| w[k]).sum())
        .collect();
    let mut best = 0;
    for k in 1..candidates.len() {
        if totals[k] < totals[best] {
            best = k;
        }
    }
    let evaluated = (cv.folds * fold_size) as f64;
    let mean_errors = candidates
        .iter()
        .zip(&totals)
        .map(|(&r, &t)| (r, t as f64 / evaluated))
        .collect();
    Ok(RankSelection {
        chosen: candidates[best],
        mean_errors,
    })
}
