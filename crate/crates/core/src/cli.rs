//! Command-line front end. The binary is a thin wrapper around [`run`].

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::baselines::MiEstimator;
use crate::data::{load_csv, load_features_csv, write_csv, Dataset, Matrix, PositiveLabel};
use crate::density::{Bandwidth, Clamp, DensityConfig, GridSpec};
use crate::error::{Error, ErrorKind, Result};
use crate::eval::{
    cross_validate_method, fit_method, parse_methods, run_factorial, write_cv_csv, Classifier, FittedModel, MethodConfig,
    MethodKind,
};
use crate::features::{screen_pairs, ScreenConfig, ScreenRule};
use crate::model_file::{load_model, save_model};
use crate::rng::Rng;
use crate::slb::{CvCriterion, HsicRule, DEFAULT_QUANTILE_GRID};
use crate::svm::{hinge_risk, TrainConfig};
use crate::synth::{gen_experiment, Balance, CpdFamily, ExperimentDesign, Shared, Structure};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_FIT: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "slb", version, about = "Sparse log-bivariate density classifier and baselines")]
pub struct Cli {
    /// Master seed; every random choice derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true, env = "SLB_THREADS")]
    pub threads: Option<usize>,
    /// Suppress summaries on stdout.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model on a labeled CSV and save it.
    Train(TrainArgs),
    /// Score a CSV with a saved model.
    Predict(PredictArgs),
    /// Stratified k-fold cross-validation of one or more methods.
    Eval(EvalArgs),
    /// Run a synthetic factorial experiment.
    Simulate(SimulateArgs),
    /// Report per-pair HSIC statistics and the screening decision.
    Screen(ScreenArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Name of the label column.
    #[arg(long, default_value = "label")]
    pub label: String,
    /// Label value treated as +1 (`auto`: the lexicographically larger value).
    #[arg(long, default_value = "auto")]
    pub positive: String,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        let pos: PositiveLabel = self.positive.parse().expect("infallible");
        load_csv(&self.data, &self.label, &pos)
    }
}

#[derive(Debug, Args, Clone)]
pub struct ModelArgs {
    /// Screening rule: cv, quantile:Q, pvalue:A, threshold:T or top:F.
    #[arg(long, default_value = "cv")]
    pub hsic_rule: String,
    /// Selection criterion when --hsic-rule cv.
    #[arg(long, default_value = "error", value_parser = ["error", "ber"])]
    pub cv_criterion: String,
    /// Folds used by --hsic-rule cv.
    #[arg(long, default_value_t = 5)]
    pub cv_folds: usize,
    /// Permutations per HSIC p-value (pvalue rule only).
    #[arg(long, default_value_t = 199)]
    pub permutations: usize,
    /// Tikhonov regularization strength.
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,
    /// KDE bandwidth: silverman (Scott in 2D) or fixed:H.
    #[arg(long, default_value = "silverman")]
    pub bandwidth: String,
    /// Lower clamp on density values before the log.
    #[arg(long, default_value_t = 1e-10)]
    pub clamp_floor: f64,
    /// Fit densities on this fraction of each class and the SVM on the rest.
    #[arg(long)]
    pub split: Option<f64>,
    /// Standardize features (training mean and population sd) before fitting.
    #[arg(long)]
    pub standardize: bool,
    /// Tabulate every density on a grid after training (drops training samples).
    #[arg(long)]
    pub grid: bool,
    /// Neighbours for knn.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Mutual-information floor below which TAN drops a tree edge.
    #[arg(long)]
    pub mi_floor: Option<f64>,
}

impl ModelArgs {
    pub fn method_config(&self) -> Result<MethodConfig> {
        let mut cfg = MethodConfig::default();
        cfg.slb.rule = parse_hsic_rule(&self.hsic_rule, self.cv_folds, &self.cv_criterion)?;
        cfg.slb.screen = ScreenConfig {
            permutations: self.permutations,
            ..ScreenConfig::default()
        };
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("--lambda must be positive, got {}", self.lambda)));
        }
        cfg.slb.train = TrainConfig::with_lambda(self.lambda);
        cfg.slb.density = DensityConfig {
            bandwidth: parse_bandwidth(&self.bandwidth)?,
            clamp: Clamp::new(self.clamp_floor, None)?,
        };
        if let Some(f) = self.split {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::InvalidArgument(format!("--split must lie in (0, 1), got {f}")));
            }
        }
        cfg.slb.split = self.split;
        cfg.slb.grid = self.grid.then(GridSpec::default);
        cfg.standardize = self.standardize;
        if self.k == 0 {
            return Err(Error::InvalidArgument("--k must be at least 1".into()));
        }
        cfg.knn_k = self.k;
        cfg.chow_liu.mi_floor = self.mi_floor;
        cfg.chow_liu.estimator = MiEstimator::GaussianCopula;
        cfg.chow_liu.density = cfg.slb.density;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// slb, slb-minus, lu, nb, tan or knn.
    #[arg(long, default_value = "slb")]
    pub method: String,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Output model file (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the TAN edge list as CSV.
    #[arg(long)]
    pub tan_edges: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Model file written by `slb train`.
    #[arg(long)]
    pub model: PathBuf,
    /// CSV with the model's feature columns; a label column is ignored.
    #[arg(long)]
    pub data: PathBuf,
    /// Column to ignore if present.
    #[arg(long, default_value = "label")]
    pub label: String,
    /// Output CSV (default stdout): row_index, prediction, decision_value.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Comma-separated methods.
    #[arg(long, default_value = "slb,slb-minus,lu,nb,tan,knn")]
    pub methods: String,
    /// Metric used for the summary ranking.
    #[arg(long, default_value = "ber", value_parser = ["ber", "error"])]
    pub metric: String,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Output CSV (default stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// forest or general (comma list allowed).
    #[arg(long, default_value = "forest")]
    pub structure: String,
    /// gaussian or complex (comma list allowed).
    #[arg(long, default_value = "gaussian")]
    pub cpd: String,
    /// balanced or imbalanced (comma list allowed).
    #[arg(long, default_value = "balanced")]
    pub balance: String,
    /// none or one-third (comma list allowed).
    #[arg(long, default_value = "none")]
    pub shared: String,
    /// Training sizes (comma list).
    #[arg(long, default_value = "1000")]
    pub n: String,
    #[arg(long, default_value_t = 10)]
    pub replicates: usize,
    /// Comma-separated methods; `oracle` is available here.
    #[arg(long, default_value = "slb,slb-minus,lu,nb,tan,knn,oracle")]
    pub methods: String,
    /// Probability that a spanning-tree edge survives (forest designs).
    #[arg(long, default_value_t = ExperimentDesign::DEFAULT_EDGE_DENSITY)]
    pub edge_density: f64,
    #[arg(long, default_value = "slb-out")]
    pub out_dir: PathBuf,
    /// Also write every replicate's train/test CSVs and network manifest.
    #[arg(long)]
    pub emit_data: bool,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct ScreenArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// quantile:Q, pvalue:A, threshold:T or top:F.
    #[arg(long, default_value = "pvalue:0.05")]
    pub rule: String,
    #[arg(long, default_value_t = 199)]
    pub permutations: usize,
    /// Output CSV (default stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_number(s: &str, what: &str) -> Result<f64> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::InvalidArgument(format!("bad {what} `{s}`")))
}

/// A fixed screening rule: quantile:Q, pvalue:A, threshold:T or top:F.
pub fn parse_screen_rule(s: &str) -> Result<ScreenRule> {
    let (kind, v) = s
        .split_once(':')
        .ok_or_else(|| Error::InvalidArgument(format!("bad screening rule `{s}`")))?;
    let v = parse_number(v, "screening rule value")?;
    let unit = |v: f64| {
        if (0.0..=1.0).contains(&v) {
            Ok(v)
        } else {
            Err(Error::InvalidArgument(format!("`{s}`: value must lie in [0, 1]")))
        }
    };
    match kind {
        "quantile" => Ok(ScreenRule::Quantile(unit(v)?)),
        "pvalue" => Ok(ScreenRule::PValueBh(unit(v)?)),
        "top" => Ok(ScreenRule::TopFraction(unit(v)?)),
        "threshold" => Ok(ScreenRule::Threshold(v)),
        _ => Err(Error::InvalidArgument(format!("unknown screening rule `{kind}`"))),
    }
}

pub fn parse_hsic_rule(s: &str, folds: usize, criterion: &str) -> Result<HsicRule> {
    if s == "cv" {
        let criterion = match criterion {
            "ber" => CvCriterion::Ber,
            _ => CvCriterion::Error,
        };
        if folds < 2 {
            return Err(Error::InvalidArgument("--cv-folds must be at least 2".into()));
        }
        return Ok(HsicRule::Cv {
            grid: DEFAULT_QUANTILE_GRID.to_vec(),
            folds,
            criterion,
        });
    }
    Ok(HsicRule::Fixed {
        rule: parse_screen_rule(s)?,
    })
}

pub fn parse_bandwidth(s: &str) -> Result<Bandwidth> {
    match s {
        "silverman" | "rule" => Ok(Bandwidth::Rule),
        _ => match s.strip_prefix("fixed:") {
            Some(h) => {
                let h = parse_number(h, "bandwidth")?;
                if h > 0.0 {
                    Ok(Bandwidth::Fixed(h))
                } else {
                    Err(Error::InvalidArgument(format!("bandwidth must be positive, got {h}")))
                }
            }
            None => Err(Error::InvalidArgument(format!("bad bandwidth `{s}`"))),
        },
    }
}

fn parse_list<T: std::str::FromStr<Err = Error>>(s: &str) -> Result<Vec<T>> {
    s.split(',').map(|t| t.trim().parse()).collect()
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn cmd_train(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let method: MethodKind = a.method.parse()?;
    if method == MethodKind::Oracle {
        return Err(Error::InvalidArgument("the oracle is only available in `simulate`".into()));
    }
    let cfg = a.model.method_config()?;
    let ds = a.data.load()?;
    let rng = Rng::new(cli.seed);
    let trained = fit_method(method, &ds, &cfg, None, &rng)?;
    save_model(&trained, ds.feature_names(), &a.out)?;
    if let (Some(path), FittedModel::Tan(t)) = (&a.tan_edges, &trained.model) {
        t.write_edges_csv(path)?;
    }
    if !cli.quiet {
        let pred = trained.predict(ds.features())?;
        let errors = pred.iter().zip(ds.labels()).filter(|(p, y)| p != y).count();
        println!("method: {method}");
        println!("training rows: {}", ds.n());
        if let FittedModel::Slb(m) = &trained.model {
            let x = match &trained.standardizer {
                Some(s) => s.apply_matrix(ds.features())?,
                None => ds.features().clone(),
            };
            let t = crate::features::FeatureMapping::map_matrix(&m.feature_map, &x)?;
            println!("retained pairs: {}", m.retained_pairs().len());
            if let Some(sel) = &m.selection {
                println!("selected quantile: {}", sel.chosen);
            }
            println!("training hinge risk: {}", hinge_risk(&m.linear, &t, ds.labels())?);
        }
        println!("training error: {}", errors as f64 / ds.n() as f64);
        println!("model: {}", a.out.display());
    }
    Ok(())
}

/// Reorder the columns of `x` to the model's feature order when the header
/// names allow it.
fn align_columns(x: Matrix, names: &[String], model_names: &[String]) -> Result<Matrix> {
    if x.cols() != model_names.len() {
        return Err(Error::Data(format!(
            "data has {} feature columns, the model expects {}",
            x.cols(),
            model_names.len()
        )));
    }
    if names == model_names {
        return Ok(x);
    }
    let idx: Option<Vec<usize>> = model_names.iter().map(|m| names.iter().position(|n| n == m)).collect();
    match idx {
        Some(idx) => Ok(x.select_cols(&idx)),
        None => Ok(x),
    }
}

fn cmd_predict(a: &PredictArgs) -> Result<()> {
    let (model, model_names) = load_model(&a.model)?;
    let (x, names, _) = load_features_csv(&a.data, Some(&a.label))?;
    let x = align_columns(x, &names, &model_names)?;
    let scores = model.decision_values(&x)?;
    let mut out = csv::Writer::from_writer(output(&a.out)?);
    out.write_record(["row_index", "prediction", "decision_value"])?;
    for (i, s) in scores.iter().enumerate() {
        let p = crate::data::Label::from_score(*s);
        out.write_record([i.to_string(), p.to_string(), format!("{s:?}")])?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_eval(cli: &Cli, a: &EvalArgs) -> Result<()> {
    let methods = parse_methods(&a.methods)?;
    if methods.contains(&MethodKind::Oracle) {
        return Err(Error::InvalidArgument("the oracle is only available in `simulate`".into()));
    }
    if a.folds < 2 {
        return Err(Error::InvalidArgument("--folds must be at least 2".into()));
    }
    let cfg = a.model.method_config()?;
    let ds = a.data.load()?;
    let rng = Rng::new(cli.seed);
    let mut reports = Vec::new();
    for &m in &methods {
        let r = cross_validate_method(&ds, m, &cfg, a.folds, &rng).map_err(|e| e.in_step(m.name()))?;
        reports.push((m, r));
    }
    write_cv_csv(&reports, output(&a.out)?)?;
    if !cli.quiet && a.out.is_some() {
        let metric = |r: &crate::eval::CvReport| if a.metric == "ber" { (r.mean_ber, r.sd_ber) } else { (r.mean_error, r.sd_error) };
        let mut order: Vec<&(MethodKind, crate::eval::CvReport)> = reports.iter().collect();
        order.sort_by(|x, y| metric(&x.1).0.total_cmp(&metric(&y.1).0));
        for (m, r) in order {
            let (mu, sd) = metric(r);
            println!("{m:>10}  {} {:.2} ± {:.2}", a.metric, 100.0 * mu, 100.0 * sd);
        }
    }
    Ok(())
}

fn cmd_simulate(cli: &Cli, a: &SimulateArgs) -> Result<()> {
    let structures: Vec<Structure> = parse_list(&a.structure)?;
    let cpds: Vec<CpdFamily> = parse_list(&a.cpd)?;
    let balances: Vec<Balance> = parse_list(&a.balance)?;
    let shared: Vec<Shared> = parse_list(&a.shared)?;
    let ns: Vec<usize> = a
        .n
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidArgument(format!("bad --n value `{t}`")))
        })
        .collect::<Result<_>>()?;
    let methods = parse_methods(&a.methods)?;
    let cfg = a.model.method_config()?;
    let mut designs = Vec::new();
    for &st in &structures {
        for &c in &cpds {
            for &b in &balances {
                for &sh in &shared {
                    for &n in &ns {
                        let mut d = ExperimentDesign::new(st, c, b, sh, n);
                        d.edge_density = a.edge_density;
                        d.validate()?;
                        designs.push(d);
                    }
                }
            }
        }
    }
    let rng = Rng::new(cli.seed);
    let results = run_factorial(&designs, &methods, a.replicates, &cfg, &rng)?;
    fs::create_dir_all(&a.out_dir)?;
    results.write_long(BufWriter::new(File::create(a.out_dir.join("results.csv"))?))?;
    results.write_wide(BufWriter::new(File::create(a.out_dir.join("results_wide.csv"))?))?;
    results.write_raw(BufWriter::new(File::create(a.out_dir.join("results_raw.csv"))?))?;
    let manifest = serde_json::json!({
        "seed": cli.seed,
        "replicates": a.replicates,
        "methods": methods,
        "designs": designs,
        "cells": results.summary.iter().map(|s| &s.cell).collect::<std::collections::BTreeSet<_>>(),
    });
    fs::write(a.out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    if a.emit_data {
        emit_data(&designs, a.replicates, &rng, &a.out_dir)?;
    }
    if !cli.quiet {
        let mut w = io::stdout().lock();
        results.write_wide(&mut w)?;
    }
    Ok(())
}

/// Regenerates exactly the experiments `run_factorial` used.
fn emit_data(designs: &[ExperimentDesign], replicates: usize, rng: &Rng, dir: &Path) -> Result<()> {
    for d in designs {
        let id = d.cell_id();
        for r in 0..replicates {
            let rep = crate::eval::replicate_rng(rng, &id, r);
            let exp = gen_experiment(d, &rep.derive(0))?;
            let sub = dir.join("data").join(id.replace('/', "_")).join(format!("rep{r:03}"));
            fs::create_dir_all(&sub)?;
            write_csv(&exp.train, sub.join("train.csv"), "label")?;
            write_csv(&exp.test, sub.join("test.csv"), "label")?;
            fs::write(
                sub.join("manifest.json"),
                serde_json::to_string_pretty(&exp.manifest())? + "\n",
            )?;
        }
    }
    Ok(())
}

fn cmd_screen(cli: &Cli, a: &ScreenArgs) -> Result<()> {
    let rule = parse_screen_rule(&a.rule)?;
    let ds = a.data.load()?;
    let cfg = ScreenConfig {
        permutations: a.permutations,
        ..Default::default()
    };
    let screen = screen_pairs(&ds, &cfg, rule, &Rng::new(cli.seed).derive(1))?;
    let names = ds.feature_names();
    let mut out = csv::Writer::from_writer(output(&a.out)?);
    out.write_record(["i", "j", "feature_i", "feature_j", "hsic_neg", "hsic_pos", "p_neg", "p_pos", "retained"])?;
    for s in &screen.stats {
        let (pn, pp) = match s.p_value {
            Some([a, b]) => (a.to_string(), b.to_string()),
            None => (String::new(), String::new()),
        };
        out.write_record([
            s.i.to_string(),
            s.j.to_string(),
            names[s.i].clone(),
            names[s.j].clone(),
            format!("{:?}", s.statistic[0]),
            format!("{:?}", s.statistic[1]),
            pn,
            pp,
            screen.retained.binary_search(&(s.i, s.j)).is_ok().to_string(),
        ])?;
    }
    out.flush()?;
    if !cli.quiet && a.out.is_some() {
        println!("retained {} of {} pairs", screen.retained.len(), screen.stats.len());
    }
    Ok(())
}

pub fn exit_code(e: &Error) -> i32 {
    match e.kind() {
        ErrorKind::Usage => EXIT_USAGE,
        ErrorKind::Data => EXIT_DATA,
        ErrorKind::Fit => EXIT_FIT,
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::InvalidArgument("--threads must be at least 1".into()));
        }
        // a pool may already exist when called repeatedly in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match &cli.command {
        Command::Train(a) => cmd_train(cli, a),
        Command::Predict(a) => cmd_predict(a),
        Command::Eval(a) => cmd_eval(cli, a),
        Command::Simulate(a) => cmd_simulate(cli, a),
        Command::Screen(a) => cmd_screen(cli, a),
    }
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
