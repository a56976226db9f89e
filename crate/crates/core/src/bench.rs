//! Simulation scenarios and the Monte-Carlo harness.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{basis_error, rel_tensor_error, LdaRule};
use crate::cp_init::InitConfig;
use crate::error::{Error, Result};
use crate::linalg::{orthonormalize_columns, Matrix};
use crate::model::CpModel;
use crate::pipeline::{fit, FitConfig};
use crate::tensor::{cp_compose, DenseTensor};
use crate::tnorm::{derive_seed, Label, SimRng, TensorNormal, TgmmParams};

pub const DEFAULT_REPLICATIONS: usize = 10;
pub const DEFAULT_SEED: u64 = 20_240_601;
pub const GEOMETRIC_RATIO: f64 = 1.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightSchedule {
    Equal { w: f64 },
    /// `w_r/w_{r+1} = ratio`, with `w_max` on the first component.
    Geometric { w_max: f64, ratio: f64 },
}

impl WeightSchedule {
    pub fn weights(&self, rank: usize) -> Vec<f64> {
        match *self {
            WeightSchedule::Equal { w } => vec![w; rank],
            WeightSchedule::Geometric { w_max, ratio } => (1..=rank)
                .map(|r| w_max / ratio.powi((r - 1) as i32))
                .collect(),
        }
    }

    pub fn w_max(&self) -> f64 {
        match *self {
            WeightSchedule::Equal { w } => w,
            WeightSchedule::Geometric { w_max, .. } => w_max,
        }
    }

    fn label(&self) -> &'static str {
        match self {
            WeightSchedule::Equal { .. } => "equal",
            WeightSchedule::Geometric { .. } => "geometric",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisKind {
    Orthogonal,
    NonOrthogonal { delta: f64 },
}

/// How the collinearity target `ϑ` is set for component `r ≥ 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaRule {
    /// `ϑ_r = δ/(r−1)`.
    #[default]
    PerComponent,
    /// `ϑ = δ/(R−1)` for every component.
    FixedRank,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovKind {
    Identity,
    /// Unit diagonal with off-diagonal entries `2/d_m`.
    General,
}

fn default_replications() -> usize {
    DEFAULT_REPLICATIONS
}
fn default_c0() -> f64 {
    0.1
}
fn default_nu() -> f64 {
    0.5
}
fn default_tolerance() -> f64 {
    crate::cp_refine::DEFAULT_TOLERANCE
}
fn default_max_iterations() -> usize {
    crate::cp_refine::DEFAULT_MAX_ITERATIONS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub dims: Vec<usize>,
    pub rank: usize,
    pub n1: usize,
    pub n2: usize,
    /// Test points per class.
    pub n_test: usize,
    pub weights: WeightSchedule,
    pub basis: BasisKind,
    #[serde(default)]
    pub theta_rule: ThetaRule,
    pub cov: CovKind,
    #[serde(default = "default_replications")]
    pub replications: usize,
    pub seed: u64,
    #[serde(default = "default_c0")]
    pub c0: f64,
    #[serde(default = "default_nu")]
    pub nu: f64,
    #[serde(default)]
    pub projections: Option<usize>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.dims.len() < 2 || self.dims.contains(&0) {
            return bad(format!("dims {:?} must have order ≥ 2 and positive sizes", self.dims));
        }
        if self.rank == 0 || self.dims.iter().any(|&d| d < self.rank) {
            return bad(format!("rank {} must be in 1..=min d_m", self.rank));
        }
        if self.n1 < 2 || self.n2 < 2 || self.n_test == 0 {
            return bad("need n1, n2 ≥ 2 and n_test ≥ 1".into());
        }
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if !(self.weights.w_max() > 0.0) {
            return bad("w_max must be positive".into());
        }
        if let WeightSchedule::Geometric { ratio, .. } = self.weights {
            if !(ratio >= 1.0) {
                return bad(format!("geometric ratio {ratio} must be at least 1"));
            }
        }
        if let BasisKind::NonOrthogonal { delta } = self.basis {
            if !(delta > 0.0 && delta < 1.0) {
                return bad(format!("δ = {delta} not in (0,1)"));
            }
        }
        Ok(())
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            init: InitConfig {
                rank: self.rank,
                split: None,
                c0: self.c0,
                projections: self.projections,
                nu: self.nu,
            },
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            ridge: None,
        }
    }

    /// Builds a scenario from a preset name such as `t1-orth-id-w5`,
    /// `t2-orth-gen-wmax6` or `t3-nonorth-id-w2.5`.
    ///
    /// `t1`/`t3` use identity covariances, `t2`/`t4` general ones; `t3` and
    /// `t4` differ from `t1` and `t2` only in which metrics are read off.
    pub fn preset(name: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("unknown preset '{name}'"));
        let parts: Vec<&str> = name.split('-').collect();
        let [table, basis, cov, weight] = parts.as_slice() else {
            return Err(bad());
        };
        let cov = match (*table, *cov) {
            ("t1" | "t3", "id") => CovKind::Identity,
            ("t2" | "t4", "gen") => CovKind::General,
            _ => return Err(bad()),
        };
        let basis = match *basis {
            "orth" => BasisKind::Orthogonal,
            "nonorth" => BasisKind::NonOrthogonal { delta: 0.1 },
            _ => return Err(bad()),
        };
        let weights = if let Some(v) = weight.strip_prefix("wmax") {
            let w_max: f64 = v.parse().map_err(|_| bad())?;
            WeightSchedule::Geometric {
                w_max,
                ratio: GEOMETRIC_RATIO,
            }
        } else if let Some(v) = weight.strip_prefix('w') {
            WeightSchedule::Equal {
                w: v.parse().map_err(|_| bad())?,
            }
        } else {
            return Err(bad());
        };
        let scn = Scenario {
            id: name.to_string(),
            dims: vec![30, 30, 30],
            rank: 5,
            n1: 200,
            n2: 200,
            n_test: 500,
            weights,
            basis,
            theta_rule: ThetaRule::PerComponent,
            cov,
            replications: DEFAULT_REPLICATIONS,
            seed: DEFAULT_SEED,
            c0: default_c0(),
            nu: default_nu(),
            projections: None,
            tolerance: default_tolerance(),
            max_iterations: default_max_iterations(),
        };
        scn.validate().map_err(|_| bad())?;
        Ok(scn)
    }
}

/// Per-mode `d_m × R` basis matrices.
///
/// Orthogonal bases are the thin-QR factor of a `U(0,1)` matrix. The
/// non-orthogonal construction keeps the first column and mixes every other
/// column toward it: `ã_r = (a_1 + η a_r)/‖·‖` with `η = (ϑ^{−2/M} − 1)^{1/2}`,
/// so that `∏_m ã_{rm}ᵀ ã_{1m} = ϑ`.
pub fn make_bases(
    dims: &[usize],
    rank: usize,
    kind: BasisKind,
    theta_rule: ThetaRule,
    rng: &mut SimRng,
) -> Result<Vec<Matrix>> {
    if let Some(&d) = dims.iter().find(|&&d| d < rank) {
        return Err(Error::RankOutOfRange {
            requested: rank,
            max: d,
        });
    }
    let order = dims.len() as f64;
    dims.iter()
        .map(|&d| {
            let raw: Vec<f64> = (0..d * rank).map(|_| rng.uniform()).collect();
            let q = orthonormalize_columns(&Matrix::from_col_major(d, rank, raw)?)?;
            let BasisKind::NonOrthogonal { delta } = kind else {
                return Ok(q);
            };
            let first = q.col(0).to_vec();
            let mut cols = vec![first.clone()];
            for r in 1..rank {
                let theta = match theta_rule {
                    ThetaRule::PerComponent => delta / r as f64,
                    ThetaRule::FixedRank => delta / (rank - 1) as f64,
                };
                let eta = (theta.powf(-2.0 / order) - 1.0).sqrt();
                let mut v: Vec<f64> = first.iter().zip(q.col(r)).map(|(a, b)| a + eta * b).collect();
                let n = crate::linalg::norm2(&v);
                v.iter_mut().for_each(|x| *x /= n);
                cols.push(v);
            }
            Matrix::from_columns(&cols)
        })
        .collect()
}

/// Unit diagonal, off-diagonal `2/d`.
pub fn general_covariance(d: usize) -> Matrix {
    let off = 2.0 / d as f64;
    Matrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { off })
}

/// True CP discriminant and the mixture that realises it.
pub fn make_scenario_params(scn: &Scenario, rng: &mut SimRng) -> Result<(CpModel, TgmmParams)> {
    scn.validate()?;
    let bases = make_bases(&scn.dims, scn.rank, scn.basis, scn.theta_rule, rng)?;
    let components: Vec<Vec<Vec<f64>>> = (0..scn.rank)
        .map(|r| bases.iter().map(|a| a.col(r).to_vec()).collect())
        .collect();
    let truth = CpModel::new(scn.weights.weights(scn.rank), components)?;
    let b = cp_compose(&truth)?;
    let covs: Vec<Matrix> = match scn.cov {
        CovKind::Identity => scn.dims.iter().map(|&d| Matrix::identity(d)).collect(),
        CovKind::General => scn.dims.iter().map(|&d| general_covariance(d)).collect(),
    };
    let mut mean2 = b;
    for (m, s) in covs.iter().enumerate() {
        if !s.is_identity() {
            crate::linalg::chol_factor(s)?;
            mean2 = mean2.mode_product(m, s)?;
        }
    }
    let params = TgmmParams {
        mean1: DenseTensor::zeros(&scn.dims)?,
        mean2,
        covs,
        prior1: 0.5,
        prior2: 0.5,
    };
    Ok((truth, params))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub sample_rel_error: f64,
    pub cp_rel_error: f64,
    pub basis_error: f64,
    pub misclass_sample: f64,
    pub misclass_cp: f64,
    pub runtime_seconds: f64,
}

pub const METRIC_NAMES: [&str; 6] = [
    "sample_rel_error",
    "cp_rel_error",
    "basis_error",
    "misclass_sample",
    "misclass_cp",
    "runtime_seconds",
];

impl ReplicationResult {
    pub fn values(&self) -> [f64; 6] {
        [
            self.sample_rel_error,
            self.cp_rel_error,
            self.basis_error,
            self.misclass_sample,
            self.misclass_cp,
            self.runtime_seconds,
        ]
    }
}

/// One replication with its own seed.
pub fn run_replication(scn: &Scenario, seed: u64) -> Result<ReplicationResult> {
    let start = Instant::now();
    let mut rng = SimRng::new(seed);
    let (truth, params) = make_scenario_params(scn, &mut rng)?;
    let class1 = TensorNormal::new(&params.mean1, &params.covs)?;
    let class2 = TensorNormal::new(&params.mean2, &params.covs)?;
    let train1: Vec<DenseTensor> = (0..scn.n1).map(|_| class1.sample(&mut rng)).collect();
    let train2: Vec<DenseTensor> = (0..scn.n2).map(|_| class2.sample(&mut rng)).collect();
    let fitted = fit(&train1, &train2, &scn.fit_config(), &mut rng)?;
    drop((train1, train2));

    let b_true = params.discriminant()?;
    let cp_rule = fitted.rule()?;
    let sample_rule = LdaRule::from_sample(&fitted.estimate)?;
    let mut wrong = [0usize; 2];
    for (dist, truth_label) in [(&class1, Label::One), (&class2, Label::Two)] {
        for _ in 0..scn.n_test {
            let z = dist.sample(&mut rng);
            for (k, rule) in [&sample_rule, &cp_rule].into_iter().enumerate() {
                if rule.predict(&z)? != truth_label {
                    wrong[k] += 1;
                }
            }
        }
    }
    let n_test = (2 * scn.n_test) as f64;
    Ok(ReplicationResult {
        sample_rel_error: rel_tensor_error(&fitted.estimate.b_hat, &b_true)?,
        cp_rel_error: rel_tensor_error(&cp_rule.discriminant, &b_true)?,
        basis_error: basis_error(&fitted.report.model, &truth)?,
        misclass_sample: wrong[0] as f64 / n_test,
        misclass_cp: wrong[1] as f64 / n_test,
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
}

/// Mean and sample standard deviation (divisor `n − 1`; zero for one value).
pub fn summarize(values: &[f64]) -> MetricSummary {
    let n = values.len();
    if n == 0 {
        return MetricSummary {
            mean: f64::NAN,
            std: f64::NAN,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n == 1 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    MetricSummary { mean, std }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub scenario: Scenario,
    pub results: Vec<ReplicationResult>,
    /// `(replication, error message)` for excluded replications.
    pub failures: Vec<(usize, String)>,
    pub metrics: Vec<(String, MetricSummary)>,
    pub wall_seconds: f64,
}

impl ScenarioSummary {
    pub fn metric(&self, name: &str) -> Option<MetricSummary> {
        self.metrics.iter().find(|(n, _)| n == name).map(|(_, s)| *s)
    }
}

/// Runs every replication and aggregates. Failed replications are dropped if
/// fewer than 10% fail; otherwise the scenario aborts.
pub fn run_scenario(scn: &Scenario) -> Result<ScenarioSummary> {
    scn.validate()?;
    let start = Instant::now();
    let outcomes: Vec<Result<ReplicationResult>> = (0..scn.replications)
        .into_par_iter()
        .map(|rep| run_replication(scn, derive_seed(scn.seed, rep as u64)))
        .collect();
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for (rep, out) in outcomes.into_iter().enumerate() {
        match out {
            Ok(r) => results.push(r),
            Err(e) => failures.push((rep, e.to_string())),
        }
    }
    if !failures.is_empty() && 10 * failures.len() >= scn.replications {
        return Err(Error::ScenarioAborted {
            failed: failures.len(),
            total: scn.replications,
            first: failures[0].1.clone(),
        });
    }
    let metrics = METRIC_NAMES
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let vals: Vec<f64> = results.iter().map(|r| r.values()[k]).collect();
            (name.to_string(), summarize(&vals))
        })
        .collect();
    Ok(ScenarioSummary {
        scenario: scn.clone(),
        results,
        failures,
        metrics,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

pub const CSV_HEADER: [&str; 11] = [
    "scenario_id",
    "basis_kind",
    "cov_kind",
    "weight_schedule",
    "w_max",
    "metric",
    "mean",
    "std",
    "replications",
    "seed",
    "wall_seconds",
];

/// One row per metric; `replications` counts the replications aggregated.
pub fn write_summary_csv<W: Write>(summaries: &[ScenarioSummary], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for s in summaries {
        let scn = &s.scenario;
        let basis = match scn.basis {
            BasisKind::Orthogonal => "orthogonal",
            BasisKind::NonOrthogonal { .. } => "non_orthogonal",
        };
        let cov = match scn.cov {
            CovKind::Identity => "identity",
            CovKind::General => "general",
        };
        for (name, m) in &s.metrics {
            w.write_record([
                scn.id.clone(),
                basis.to_string(),
                cov.to_string(),
                scn.weights.label().to_string(),
                scn.weights.w_max().to_string(),
                name.clone(),
                m.mean.to_string(),
                m.std.to_string(),
                s.results.len().to_string(),
                scn.seed.to_string(),
                format!("{:.3}", s.wall_seconds),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
