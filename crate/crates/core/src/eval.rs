//! Metrics, cross-validation and the factorial experiment runner.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{self, ChowLiuConfig, KnnModel, NaiveBayes, OracleBayes, TanModel};
use crate::data::{stratified_kfold, Dataset, Label, Matrix, Standardizer};
use crate::density::DensityConfig;
use crate::error::{Error, Result};
use crate::features::FeatureMapping;
use crate::rng::Rng;
use crate::slb::{self, SlbConfig, SlbModel};
use crate::synth::{gen_experiment, BnSpec, ExperimentDesign};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub error: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub ber: f64,
}

impl EvalReport {
    pub fn n(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Confusion counts and rates. Both classes must be present in `labels`.
pub fn score(pred: &[Label], labels: &[Label]) -> Result<EvalReport> {
    if pred.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            got: pred.len(),
        });
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &y) in pred.iter().zip(labels) {
        match (p, y) {
            (Label::Pos, Label::Pos) => tp += 1,
            (Label::Pos, Label::Neg) => fp += 1,
            (Label::Neg, Label::Neg) => tn += 1,
            (Label::Neg, Label::Pos) => fn_ += 1,
        }
    }
    let (pos, neg) = (tp + fn_, tn + fp);
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateLabels("BER needs both classes in the labels".into()));
    }
    let n = pos + neg;
    let sensitivity = tp as f64 / pos as f64;
    let specificity = tn as f64 / neg as f64;
    Ok(EvalReport {
        tp,
        fp,
        tn,
        fn_,
        error: (fp + fn_) as f64 / n as f64,
        sensitivity,
        specificity,
        ber: 1.0 - (sensitivity + specificity) / 2.0,
    })
}

pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (m, sd)
}

/// Anything that produces real decision values, positive meaning +1.
pub trait Classifier: Send + Sync {
    fn decision_values(&self, x: &Matrix) -> Result<Vec<f64>>;

    fn predict(&self, x: &Matrix) -> Result<Vec<Label>> {
        Ok(self.decision_values(x)?.into_iter().map(Label::from_score).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodKind {
    Slb,
    SlbMinus,
    Lu,
    Nb,
    Tan,
    Knn,
    Oracle,
}

impl MethodKind {
    pub const ALL: [MethodKind; 7] = [
        MethodKind::Slb,
        MethodKind::SlbMinus,
        MethodKind::Lu,
        MethodKind::Nb,
        MethodKind::Tan,
        MethodKind::Knn,
        MethodKind::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MethodKind::Slb => "slb",
            MethodKind::SlbMinus => "slb-minus",
            MethodKind::Lu => "lu",
            MethodKind::Nb => "nb",
            MethodKind::Tan => "tan",
            MethodKind::Knn => "knn",
            MethodKind::Oracle => "oracle",
        }
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MethodKind::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method `{s}`")))
    }
}

pub fn parse_methods(s: &str) -> Result<Vec<MethodKind>> {
    s.split(',').map(|t| t.trim().parse()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodConfig {
    /// Used for `slb`; `slb-minus` and `lu` override only the screening rule.
    pub slb: SlbConfig,
    pub chow_liu: ChowLiuConfig,
    pub knn_k: usize,
    /// Standardize features (fit on the training data) before kNN.
    pub standardize_knn: bool,
    /// Standardize features before every method.
    pub standardize: bool,
}

impl Default for MethodConfig {
    fn default() -> Self {
        MethodConfig {
            slb: SlbConfig::default(),
            chow_liu: ChowLiuConfig::default(),
            knn_k: 5,
            standardize_knn: true,
            standardize: false,
        }
    }
}

impl MethodConfig {
    pub fn density(&self) -> &DensityConfig {
        &self.slb.density
    }

    pub fn slb_for(&self, method: MethodKind) -> SlbConfig {
        match method {
            MethodKind::SlbMinus => SlbConfig {
                rule: SlbConfig::minus().rule,
                ..self.slb.clone()
            },
            MethodKind::Lu => SlbConfig {
                rule: SlbConfig::lu().rule,
                ..self.slb.clone()
            },
            _ => self.slb.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel {
    Slb(Box<SlbModel>),
    Nb(NaiveBayes),
    Tan(TanModel),
    Knn(KnnModel),
    Oracle(OracleBayes),
}

impl FittedModel {
    pub fn d(&self) -> usize {
        match self {
            FittedModel::Slb(m) => m.d(),
            FittedModel::Nb(m) => m.map.d(),
            FittedModel::Tan(m) => m.map.d(),
            FittedModel::Knn(m) => m.x.cols(),
            FittedModel::Oracle(m) => m.pos.d,
        }
    }
}

impl Classifier for FittedModel {
    fn decision_values(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.d() {
            return Err(Error::DimensionMismatch {
                expected: self.d(),
                got: x.cols(),
            });
        }
        match self {
            FittedModel::Slb(m) => m.decision_values(x),
            FittedModel::Nb(m) => m.decision_values(x),
            FittedModel::Tan(m) => m.decision_values(x),
            FittedModel::Knn(m) => m.decision_values(x),
            FittedModel::Oracle(m) => m.decision_values(x),
        }
    }
}

/// A fitted model with the input standardization it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub method: MethodKind,
    pub standardizer: Option<Standardizer>,
    pub model: FittedModel,
}

impl Classifier for Trained {
    fn decision_values(&self, x: &Matrix) -> Result<Vec<f64>> {
        match &self.standardizer {
            Some(s) => self.model.decision_values(&s.apply_matrix(x)?),
            None => self.model.decision_values(x),
        }
    }
}

fn log_prior_ratio(ds: &Dataset) -> f64 {
    let (neg, pos) = ds.class_counts();
    (pos as f64 / neg as f64).ln()
}

/// Fit one method. `truth` is the (positive, negative) network pair and is
/// only needed by the oracle.
pub fn fit_method(
    method: MethodKind,
    ds: &Dataset,
    cfg: &MethodConfig,
    truth: Option<(&BnSpec, &BnSpec)>,
    rng: &Rng,
) -> Result<Trained> {
    let standardize = cfg.standardize || (method == MethodKind::Knn && cfg.standardize_knn);
    let (owned, standardizer);
    let ds = if standardize && method != MethodKind::Oracle {
        let s = Standardizer::fit(ds.features());
        owned = s.apply(ds)?;
        standardizer = Some(s);
        &owned
    } else {
        standardizer = None;
        ds
    };
    let model = match method {
        MethodKind::Slb | MethodKind::SlbMinus | MethodKind::Lu => {
            FittedModel::Slb(Box::new(slb::fit_slb(ds, &cfg.slb_for(method), rng)?))
        }
        MethodKind::Nb => FittedModel::Nb(baselines::fit_naive_bayes(ds, cfg.density())?),
        MethodKind::Tan => FittedModel::Tan(baselines::fit_tan(ds, cfg.density(), &cfg.chow_liu)?),
        MethodKind::Knn => FittedModel::Knn(baselines::fit_knn(ds, cfg.knn_k)?),
        MethodKind::Oracle => {
            let (pos, neg) = truth.ok_or_else(|| {
                Error::InvalidArgument("the oracle needs the generating networks (synthetic data only)".into())
            })?;
            FittedModel::Oracle(OracleBayes {
                pos: pos.clone(),
                neg: neg.clone(),
                log_prior_ratio: log_prior_ratio(ds),
            })
        }
    };
    Ok(Trained {
        method,
        standardizer,
        model,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<EvalReport>,
    pub mean_error: f64,
    pub sd_error: f64,
    pub mean_ber: f64,
    pub sd_ber: f64,
}

impl CvReport {
    pub fn from_folds(folds: Vec<EvalReport>) -> CvReport {
        let (mean_error, sd_error) = mean_sd(&folds.iter().map(|r| r.error).collect::<Vec<_>>());
        let (mean_ber, sd_ber) = mean_sd(&folds.iter().map(|r| r.ber).collect::<Vec<_>>());
        CvReport {
            folds,
            mean_error,
            sd_error,
            mean_ber,
            sd_ber,
        }
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        self.folds.iter().map(EvalReport::n).collect()
    }
}

/// Stratified k-fold CV. Fold assignments come from `rng.derive(0)` alone, so
/// every factory evaluated with the same `rng` sees the same folds; fold `f`
/// hands `rng.derive(1 + f)` to the factory.
pub fn cross_validate<F, C>(ds: &Dataset, k: usize, rng: &Rng, fit: F) -> Result<CvReport>
where
    F: Fn(&Dataset, &Rng) -> Result<C> + Sync,
    C: Classifier,
{
    let folds = stratified_kfold(ds, k, &rng.derive(0))?;
    let reports = (0..k)
        .into_par_iter()
        .map(|f| {
            let run = || -> Result<EvalReport> {
                let train = ds.subset(&folds.train_indices(f));
                let test = ds.subset(&folds.test_indices(f));
                let model = fit(&train, &rng.derive(1 + f as u64))?;
                score(&model.predict(test.features())?, test.labels())
            };
            run().map_err(|e| Error::Fold {
                fold: f,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CvReport::from_folds(reports))
}

pub fn cross_validate_method(ds: &Dataset, method: MethodKind, cfg: &MethodConfig, k: usize, rng: &Rng) -> Result<CvReport> {
    cross_validate(ds, k, rng, |train, r| fit_method(method, train, cfg, None, r))
}

/// Stable 64-bit hash of a cell id so a cell's seeds do not depend on which
/// other cells share the grid.
fn cell_stream(id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Generator of replicate `r` of cell `id`; its `derive(0)` stream draws the
/// experiment and `derive(1)` seeds the methods.
pub fn replicate_rng(rng: &Rng, id: &str, r: usize) -> Rng {
    rng.derive(cell_stream(id)).derive(r as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawResult {
    pub cell: String,
    pub design: ExperimentDesign,
    pub replicate: usize,
    pub seed: u64,
    pub method: MethodKind,
    pub error: f64,
    pub ber: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: String,
    pub design: ExperimentDesign,
    pub method: MethodKind,
    pub mean_error: f64,
    pub sd_error: f64,
    pub replicates: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorialResults {
    pub methods: Vec<MethodKind>,
    pub raw: Vec<RawResult>,
    pub summary: Vec<CellSummary>,
}

/// Run every method on `replicates` fresh experiments of every design cell.
///
/// Replicate `r` of a cell draws its experiment from a seed determined by the
/// cell id, `r` and `rng` only. Results are sorted by cell id.
pub fn run_factorial(
    designs: &[ExperimentDesign],
    methods: &[MethodKind],
    replicates: usize,
    cfg: &MethodConfig,
    rng: &Rng,
) -> Result<FactorialResults> {
    if designs.is_empty() || methods.is_empty() || replicates == 0 {
        return Err(Error::InvalidArgument("empty design grid, method list or replicate count".into()));
    }
    let mut cells: Vec<(String, ExperimentDesign)> = designs.iter().map(|d| (d.cell_id(), *d)).collect();
    cells.sort_by(|a, b| a.0.cmp(&b.0));
    if cells.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::InvalidArgument("duplicate design cell".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..replicates).map(move |r| (c, r))).collect();
    let per_job = jobs
        .par_iter()
        .map(|&(c, r)| {
            let (id, design) = &cells[c];
            let rep = replicate_rng(rng, id, r);
            let seed = rep.seed();
            let run = || -> Result<Vec<RawResult>> {
                let exp = gen_experiment(design, &rep.derive(0))?;
                methods
                    .iter()
                    .map(|&m| {
                        let model = fit_method(m, &exp.train, cfg, Some((&exp.pos, &exp.neg)), &rep.derive(1))
                            .map_err(|e| e.in_step(m.name()))?;
                        let rep_score = score(&model.predict(exp.test.features())?, exp.test.labels())?;
                        Ok(RawResult {
                            cell: id.clone(),
                            design: *design,
                            replicate: r,
                            seed,
                            method: m,
                            error: rep_score.error,
                            ber: rep_score.ber,
                        })
                    })
                    .collect()
            };
            run().map_err(|e| Error::Cell {
                cell: format!("{id} replicate {r}"),
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let raw: Vec<RawResult> = per_job.into_iter().flatten().collect();
    let mut summary = Vec::new();
    for (id, design) in &cells {
        for &m in methods {
            let errs: Vec<f64> = raw.iter().filter(|x| &x.cell == id && x.method == m).map(|x| x.error).collect();
            let (mean_error, sd_error) = mean_sd(&errs);
            summary.push(CellSummary {
                cell: id.clone(),
                design: *design,
                method: m,
                mean_error,
                sd_error,
                replicates: errs.len(),
                seed: rng.seed(),
            });
        }
    }
    Ok(FactorialResults {
        methods: methods.to_vec(),
        raw,
        summary,
    })
}

impl FactorialResults {
    pub fn summary_for(&self, cell: &str, method: MethodKind) -> Option<&CellSummary> {
        self.summary.iter().find(|s| s.cell == cell && s.method == method)
    }

    /// One row per cell and method; errors as fractions.
    pub fn write_long<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "structure",
            "cpd",
            "balance",
            "shared",
            "n",
            "method",
            "mean_error",
            "sd_error",
            "replicates",
            "seed",
        ])?;
        for s in &self.summary {
            let d = &s.design;
            out.write_record([
                d.structure.to_string(),
                d.cpd.to_string(),
                d.balance.to_string(),
                d.shared.to_string(),
                d.n.to_string(),
                s.method.to_string(),
                s.mean_error.to_string(),
                s.sd_error.to_string(),
                s.replicates.to_string(),
                s.seed.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// One row per cell, one "mean ± sd" column per method, in percent.
    pub fn write_wide<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = ["structure", "cpd", "balance", "shared", "n"].map(String::from).to_vec();
        header.extend(self.methods.iter().map(|m| m.to_string()));
        out.write_record(&header)?;
        let mut cells: Vec<&CellSummary> = Vec::new();
        for s in &self.summary {
            if cells.last().is_none_or(|c| c.cell != s.cell) {
                cells.push(s);
            }
        }
        for c in cells {
            let d = &c.design;
            let mut row = vec![
                d.structure.to_string(),
                d.cpd.to_string(),
                d.balance.to_string(),
                d.shared.to_string(),
                d.n.to_string(),
            ];
            for &m in &self.methods {
                let s = self.summary_for(&c.cell, m).expect("summary row per method");
                row.push(format!("{:.2} ± {:.2}", 100.0 * s.mean_error, 100.0 * s.sd_error));
            }
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Every replicate and method, for external significance tests.
    pub fn write_raw<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "structure",
            "cpd",
            "balance",
            "shared",
            "n",
            "replicate",
            "seed",
            "method",
            "error",
            "ber",
        ])?;
        for r in &self.raw {
            let d = &r.design;
            out.write_record([
                d.structure.to_string(),
                d.cpd.to_string(),
                d.balance.to_string(),
                d.shared.to_string(),
                d.n.to_string(),
                r.replicate.to_string(),
                r.seed.to_string(),
                r.method.to_string(),
                r.error.to_string(),
                r.ber.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// CV summary rows plus per-fold rows, for several methods sharing folds.
pub fn write_cv_csv<W: Write>(reports: &[(MethodKind, CvReport)], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "method",
        "fold",
        "n",
        "error",
        "ber",
        "sensitivity",
        "specificity",
        "sd_error",
        "sd_ber",
    ])?;
    for (m, r) in reports {
        for (f, e) in r.folds.iter().enumerate() {
            out.write_record([
                m.to_string(),
                f.to_string(),
                e.n().to_string(),
                e.error.to_string(),
                e.ber.to_string(),
                e.sensitivity.to_string(),
                e.specificity.to_string(),
                String::new(),
                String::new(),
            ])?;
        }
        let n: usize = r.fold_sizes().iter().sum();
        out.write_record([
            m.to_string(),
            "mean".into(),
            n.to_string(),
            r.mean_error.to_string(),
            r.mean_ber.to_string(),
            String::new(),
            String::new(),
            r.sd_error.to_string(),
            r.sd_ber.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Constant classifier, handy as a degenerate reference.
#[derive(Debug, Clone, Copy)]
pub struct Constant(pub Label);

impl Classifier for Constant {
    fn decision_values(&self, x: &Matrix) -> Result<Vec<f64>> {
        Ok(vec![self.0.sign(); x.rows()])
    }
}

/// Fixed linear weights over any feature mapping.
#[derive(Debug, Clone)]
pub struct LinearOnMap<T> {
    pub map: T,
    pub weights: Vec<f64>,
}

impl<T: FeatureMapping + Sync + Send> Classifier for LinearOnMap<T> {
    fn decision_values(&self, x: &Matrix) -> Result<Vec<f64>> {
        let t = self.map.map_matrix(x)?;
        Ok(t.iter_rows().map(|r| crate::svm::dot(&self.weights, r)).collect())
    }
}
