use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use cplda::bench::{make_scenario_params, run_scenario, write_summary_csv, Scenario, DEFAULT_SEED};
use cplda::classify::{misclassification_rate, write_predictions};
use cplda::discriminant::{sample_discriminant, DiscriminantEstimate};
use cplda::io::{read_json, read_tensor, write_json, write_tensor};
use cplda::pipeline::{fit_estimate, select_rank, CvConfig, FitConfig};
use cplda::tnorm::{Label, SimRng, TensorNormal};
use cplda::{CpModel, DenseTensor, Error, LdaRule};

#[derive(Parser)]
#[command(name = "cplda", version, about = "Tensor LDA with a CP low-rank discriminant")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a labelled dataset from a scenario.
    Simulate(Common),
    /// Fit the discriminant and its CP refinement on a dataset.
    Fit(Common),
    /// Label every tensor of a dataset with a fitted model.
    Classify(Common),
    /// Run simulation replications and write the summary CSV.
    Bench(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration; flags override its top-level fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    rank: Option<usize>,
    /// Comma-separated candidate ranks for cross-validation.
    #[arg(long, value_delimiter = ',')]
    cv_ranks: Option<Vec<usize>>,
    /// Dataset directory.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Model directory written by `fit`.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    scenario: Option<Scenario>,
    preset: Option<String>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    reps: Option<usize>,
    rank: Option<usize>,
    cv_ranks: Option<Vec<usize>>,
    cv_folds: Option<usize>,
    cv_holdout_per_class: Option<usize>,
    data: Option<PathBuf>,
    model: Option<PathBuf>,
    tolerance: Option<f64>,
    max_iterations: Option<usize>,
    c0: Option<f64>,
    nu: Option<f64>,
    projections: Option<usize>,
    ridge: Option<f64>,
}

impl RunConfig {
    fn load(args: &Common) -> Result<Self, Error> {
        let mut cfg: RunConfig = match &args.config {
            Some(p) => read_json(p)?,
            None => RunConfig::default(),
        };
        macro_rules! over {
            ($($f:ident),*) => { $( if args.$f.is_some() { cfg.$f = args.$f.clone(); } )* };
        }
        over!(seed, out, reps, preset, rank, cv_ranks, data, model);
        Ok(cfg)
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    fn out(&self) -> Result<&Path, Error> {
        self.out
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig("--out is required".into()))
    }

    fn data(&self) -> Result<&Path, Error> {
        self.data
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig("--data is required".into()))
    }

    fn scenario(&self) -> Result<Scenario, Error> {
        let mut scn = match (&self.scenario, &self.preset) {
            (_, Some(name)) => Scenario::preset(name)?,
            (Some(s), None) => s.clone(),
            (None, None) => {
                return Err(Error::InvalidConfig("a scenario or --preset is required".into()))
            }
        };
        if let Some(s) = self.seed {
            scn.seed = s;
        }
        if let Some(r) = self.reps {
            scn.replications = r;
        }
        if let Some(r) = self.rank {
            scn.rank = r;
        }
        scn.validate()?;
        Ok(scn)
    }

    fn fit_config(&self, rank: usize) -> FitConfig {
        let mut fc = FitConfig::new(rank);
        if let Some(v) = self.tolerance {
            fc.tolerance = v;
        }
        if let Some(v) = self.max_iterations {
            fc.max_iterations = v;
        }
        if let Some(v) = self.c0 {
            fc.init.c0 = v;
        }
        if let Some(v) = self.nu {
            fc.init.nu = v;
        }
        fc.init.projections = self.projections;
        fc.ridge = self.ridge;
        fc
    }
}

fn create_out_dir(dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir)?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct LabelRow {
    index: usize,
    file: String,
    label: u8,
}

fn read_dataset(dir: &Path) -> Result<Vec<(DenseTensor, Option<Label>)>, Error> {
    let mut rdr = csv::Reader::from_path(dir.join("labels.csv"))?;
    rdr.deserialize::<LabelRow>()
        .map(|row| {
            let row = row?;
            let x = read_tensor(dir.join(&row.file))?;
            let label = match row.label {
                0 => None,
                v => Some(Label::from_u8(v)?),
            };
            Ok((x, label))
        })
        .collect()
}

fn split_classes(data: Vec<(DenseTensor, Option<Label>)>) -> (Vec<DenseTensor>, Vec<DenseTensor>) {
    let mut c1 = Vec::new();
    let mut c2 = Vec::new();
    for (x, y) in data {
        match y {
            Some(Label::One) => c1.push(x),
            Some(Label::Two) => c2.push(x),
            None => {}
        }
    }
    (c1, c2)
}

fn simulate(cfg: &RunConfig) -> Result<(), Error> {
    let scn = cfg.scenario()?;
    let out = cfg.out()?;
    create_out_dir(out)?;
    let mut rng = SimRng::new(scn.seed);
    let (truth, params) = make_scenario_params(&scn, &mut rng)?;
    let classes = [
        (Label::One, TensorNormal::new(&params.mean1, &params.covs)?, scn.n1),
        (Label::Two, TensorNormal::new(&params.mean2, &params.covs)?, scn.n2),
    ];
    let mut w = csv::Writer::from_path(out.join("labels.csv"))?;
    let mut index = 0;
    for (label, dist, n) in &classes {
        for _ in 0..*n {
            let file = format!("x_{index:04}.dten");
            write_tensor(out.join(&file), &dist.sample(&mut rng))?;
            w.serialize(LabelRow {
                index,
                file,
                label: label.as_u8(),
            })?;
            index += 1;
        }
    }
    w.flush()?;
    truth.write_json(out.join("truth.json"))?;
    write_json(out.join("scenario.json"), &scn)?;
    println!("wrote {index} samples to {}", out.display());
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct FitSummary {
    rank: usize,
    cross_validated: bool,
    cv_errors: Vec<(usize, f64)>,
    iterations_run: usize,
    converged: bool,
}

fn fit(cfg: &RunConfig) -> Result<(), Error> {
    let data_dir = cfg.data()?;
    let out = cfg.out()?;
    create_out_dir(out)?;
    let (c1, c2) = split_classes(read_dataset(data_dir)?);
    let seed = cfg.seed();

    let (rank, cv_errors) = match (&cfg.cv_ranks, cfg.rank) {
        (Some(cands), _) => {
            let mut cv = CvConfig {
                candidates: cands.clone(),
                ..CvConfig::default()
            };
            if let Some(f) = cfg.cv_folds {
                cv.folds = f;
            }
            if let Some(h) = cfg.cv_holdout_per_class {
                cv.holdout_per_class = h;
            }
            let base = cfg.fit_config(1);
            let sel = select_rank(&c1, &c2, &base, &cv, seed)?;
            (sel.chosen, sel.mean_errors)
        }
        (None, Some(r)) => (r, Vec::new()),
        (None, None) => {
            return Err(Error::InvalidConfig("give --rank or --cv-ranks".into()));
        }
    };
    let fc = cfg.fit_config(rank);
    let estimate = sample_discriminant(&c1, &c2, fc.ridge)?;
    let fitted = fit_estimate(estimate, &fc, &mut SimRng::new(seed))?;

    fitted.estimate.save(out.join("discriminant"))?;
    fitted.report.model.write_json(out.join("cp_model.json"))?;
    write_json(out.join("warm_start.json"), &fitted.warm)?;
    fitted.report.write_csv(out.join("fit_report.csv"))?;
    let summary = FitSummary {
        rank,
        cross_validated: !cv_errors.is_empty(),
        cv_errors,
        iterations_run: fitted.report.iterations_run,
        converged: fitted.report.converged,
    };
    write_json(out.join("fit.json"), &summary)?;
    println!("rank {rank}");
    Ok(())
}

fn classify(cfg: &RunConfig) -> Result<(), Error> {
    let model_dir = cfg
        .model
        .as_deref()
        .ok_or_else(|| Error::InvalidConfig("--model is required".into()))?;
    let data_dir = cfg.data()?;
    let out = cfg.out()?;
    create_out_dir(out)?;
    let estimate = DiscriminantEstimate::load(model_dir.join("discriminant"))?;
    let model = CpModel::read_json(model_dir.join("cp_model.json"))?;
    let rule = LdaRule::from_cp(&estimate, &model)?;

    let data = read_dataset(data_dir)?;
    let xs: Vec<DenseTensor> = data.iter().map(|(x, _)| x.clone()).collect();
    write_predictions(&rule, &xs, fs::File::create(out.join("predictions.csv"))?)?;
    let (c1, c2) = split_classes(data);
    if !c1.is_empty() || !c2.is_empty() {
        let rate = misclassification_rate(&rule, &c1, &c2)?;
        println!("misclassification {rate:.6}");
    }
    Ok(())
}

fn bench(cfg: &RunConfig) -> Result<(), Error> {
    let scn = cfg.scenario()?;
    let out = cfg.out()?;
    create_out_dir(out)?;
    let summary = run_scenario(&scn)?;
    let path = out.join(format!("{}.csv", scn.id));
    write_summary_csv(std::slice::from_ref(&summary), fs::File::create(&path)?)?;
    for (name, m) in &summary.metrics {
        println!("{name}: {:.4} ({:.4})", m.mean, m.std);
    }
    if !summary.failures.is_empty() {
        eprintln!("{} replication(s) failed", summary.failures.len());
    }
    Ok(())
}

fn configure_threads() -> Result<(), Error> {
    if let Ok(v) = std::env::var("CPLDA_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("CPLDA_THREADS={v} is not a count")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    configure_threads()?;
    match cli.command {
        Command::Simulate(a) => simulate(&RunConfig::load(&a)?),
        Command::Fit(a) => fit(&RunConfig::load(&a)?),
        Command::Classify(a) => classify(&RunConfig::load(&a)?),
        Command::Bench(a) => bench(&RunConfig::load(&a)?),
    }
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors.
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
