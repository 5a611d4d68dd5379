//! The end-to-end classifier: pair screening, per-class density estimation,
//! log-density feature map and linear hinge-loss SVM.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{stratified_kfold, stratified_split, Dataset, Label, Matrix};
use crate::density::{DensityConfig, GridSpec};
use crate::error::{Error, Result, StepContext};
use crate::eval::score;
use crate::features::{
    apply_rule, build_feature_map, build_feature_map_for_pairs, layout_columns, pair_statistics, FeatureMap, FeatureMapping,
    Pair, PairScreen, ScreenConfig, ScreenRule,
};
use crate::hsic;
use crate::rng::Rng;
use crate::svm::{train_hinge, LinearModel, TrainConfig};

/// Quantile grid searched by default when the screening threshold is cross-validated.
pub const DEFAULT_QUANTILE_GRID: [f64; 6] = [0.0, 0.25, 0.5, 0.75, 0.9, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CvCriterion {
    /// Plain misclassification rate.
    #[default]
    Error,
    Ber,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HsicRule {
    /// Choose a pooled-statistic quantile threshold by stratified cross-validation.
    Cv {
        grid: Vec<f64>,
        folds: usize,
        criterion: CvCriterion,
    },
    Fixed { rule: ScreenRule },
}

impl Default for HsicRule {
    fn default() -> Self {
        HsicRule::Cv {
            grid: DEFAULT_QUANTILE_GRID.to_vec(),
            folds: 5,
            criterion: CvCriterion::Error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SlbConfig {
    pub rule: HsicRule,
    pub screen: ScreenConfig,
    pub density: DensityConfig,
    pub train: TrainConfig,
    /// Fraction of each class used for densities; the rest trains the SVM.
    pub split: Option<f64>,
    /// Tabulate every density after training and drop the training samples.
    pub grid: Option<GridSpec>,
}

impl SlbConfig {
    pub fn with_rule(rule: ScreenRule) -> Self {
        SlbConfig {
            rule: HsicRule::Fixed { rule },
            ..Default::default()
        }
    }

    /// All pairs retained.
    pub fn minus() -> Self {
        Self::with_rule(ScreenRule::RETAIN_ALL)
    }

    /// No pairs retained.
    pub fn lu() -> Self {
        Self::with_rule(ScreenRule::RETAIN_NONE)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub quantile: f64,
    pub mean_error: f64,
    pub sd_error: f64,
    pub mean_ber: f64,
    pub sd_ber: f64,
    pub mean_pairs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSelection {
    pub chosen: f64,
    pub criterion: CvCriterion,
    pub table: Vec<CvRow>,
}

impl ThresholdSelection {
    pub fn rule(&self) -> ScreenRule {
        ScreenRule::Quantile(self.chosen)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlbModel {
    pub feature_map: FeatureMap,
    pub linear: LinearModel,
    pub screen: PairScreen,
    pub config: SlbConfig,
    pub selection: Option<ThresholdSelection>,
}

impl SlbModel {
    pub fn d(&self) -> usize {
        self.feature_map.d()
    }

    pub fn retained_pairs(&self) -> &[Pair] {
        self.feature_map.pairs()
    }

    pub fn decision_values(&self, x: &Matrix) -> Result<Vec<f64>> {
        let t = self.feature_map.map_matrix(x)?;
        self.linear.decision_values(&t)
    }

    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        let t = self.feature_map.map_point(x)?;
        self.linear.decision_value(&t)
    }
}

pub fn predict(model: &SlbModel, x: &Matrix) -> Result<Vec<Label>> {
    Ok(model.decision_values(x)?.into_iter().map(Label::from_score).collect())
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (m, sd)
}

fn screen_for(ds: &Dataset, cfg: &ScreenConfig, rule: ScreenRule, rng: &Rng) -> Result<PairScreen> {
    if rule == ScreenRule::RETAIN_NONE || rule == ScreenRule::TopFraction(0.0) {
        // Statistics cannot change the outcome; skip the quadratic work.
        return Ok(PairScreen {
            d: ds.d(),
            stats: Vec::new(),
            rule,
            retained: Vec::new(),
        });
    }
    crate::features::screen_pairs(ds, cfg, rule, rng)
}

/// Fit the classifier with a fixed screening rule.
pub fn fit_slb_with_rule(ds: &Dataset, cfg: &SlbConfig, rule: ScreenRule, rng: &Rng) -> Result<SlbModel> {
    ds.require_classes(hsic::MIN_SAMPLES)?;
    let (dens, svm_ds) = match cfg.split {
        Some(f) => {
            let (a, b) = stratified_split(ds, f, &rng.derive(3))?;
            let (d0, d1) = (ds.subset(&a), ds.subset(&b));
            d0.require_classes(hsic::MIN_SAMPLES).step("split")?;
            d1.require_classes(1).step("split")?;
            (d0, Some(d1))
        }
        None => (ds.clone(), None),
    };
    let screen = screen_for(&dens, &cfg.screen, rule, &rng.derive(1)).step("screen")?;
    let fm = build_feature_map(&dens, &screen, &cfg.density).step("density")?;
    let svm_ds = svm_ds.as_ref().unwrap_or(&dens);
    let t = fm.map_matrix(svm_ds.features()).step("feature map")?;
    let train = TrainConfig {
        seed: cfg.train.seed ^ rng.derive_seed(4),
        ..cfg.train
    };
    let linear = train_hinge(&t, svm_ds.labels(), &train).step("svm")?;
    let feature_map = match cfg.grid {
        Some(spec) => fm.with_grid(spec).step("grid")?,
        None => fm,
    };
    Ok(SlbModel {
        feature_map,
        linear,
        screen,
        config: cfg.clone(),
        selection: None,
    })
}

/// Fit the classifier; a cross-validated rule is resolved first.
pub fn fit_slb(ds: &Dataset, cfg: &SlbConfig, rng: &Rng) -> Result<SlbModel> {
    match &cfg.rule {
        HsicRule::Fixed { rule } => fit_slb_with_rule(ds, cfg, *rule, rng),
        HsicRule::Cv { grid, folds, criterion } => {
            let sel = select_threshold_cv(ds, grid, *folds, *criterion, cfg, &rng.derive(2)).step("threshold selection")?;
            let mut model = fit_slb_with_rule(ds, cfg, sel.rule(), rng)?;
            model.selection = Some(sel);
            Ok(model)
        }
    }
}

struct FoldOutcome {
    error: Vec<f64>,
    ber: Vec<f64>,
    pairs: Vec<usize>,
}

fn evaluate_fold(train: &Dataset, test: &Dataset, grid: &[f64], cfg: &SlbConfig, rng: &Rng) -> Result<FoldOutcome> {
    let needs_stats = grid.iter().any(|&q| q < 1.0);
    let stats = if needs_stats && train.d() >= 2 {
        train.require_classes(hsic::MIN_SAMPLES)?;
        pair_statistics(train, &cfg.screen, false, &rng.derive(1))?
    } else {
        Vec::new()
    };
    let retained: Vec<Vec<Pair>> = grid
        .iter()
        .map(|&q| apply_rule(&stats, &ScreenRule::Quantile(q)))
        .collect::<Result<_>>()?;
    let mut union: Vec<Pair> = retained.iter().flatten().copied().collect();
    union.sort_unstable();
    union.dedup();
    let fm = build_feature_map_for_pairs(train, &union, &cfg.density)?;
    let t_train = fm.map_matrix(train.features())?;
    let t_test = fm.map_matrix(test.features())?;
    let train_cfg = TrainConfig {
        seed: cfg.train.seed ^ rng.derive_seed(4),
        ..cfg.train
    };
    let mut out = FoldOutcome {
        error: Vec::new(),
        ber: Vec::new(),
        pairs: Vec::new(),
    };
    for pairs in &retained {
        let cols = layout_columns(train.d(), &union, pairs)?;
        let xtr = t_train.select_cols(&cols);
        let xte = t_test.select_cols(&cols);
        let model = train_hinge(&xtr, train.labels(), &train_cfg)?;
        let pred: Vec<Label> = model.decision_values(&xte)?.into_iter().map(Label::from_score).collect();
        let report = score(&pred, test.labels())?;
        out.error.push(report.error);
        out.ber.push(report.ber);
        out.pairs.push(pairs.len());
    }
    Ok(out)
}

/// Cross-validate the pooled-quantile screening threshold over `grid`.
///
/// Folds share stratified assignments; within a fold the statistics, KDEs and
/// mapped features are computed once and each grid point selects its columns.
/// The smallest mean criterion wins, ties going to the larger quantile.
pub fn select_threshold_cv(
    ds: &Dataset,
    grid: &[f64],
    k: usize,
    criterion: CvCriterion,
    cfg: &SlbConfig,
    rng: &Rng,
) -> Result<ThresholdSelection> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("threshold grid is empty".into()));
    }
    if let Some(q) = grid.iter().find(|q| !(0.0..=1.0).contains(*q)) {
        return Err(Error::InvalidArgument(format!("grid quantile {q} outside [0, 1]")));
    }
    let folds = stratified_kfold(ds, k, &rng.derive(0))?;
    let outcomes: Vec<FoldOutcome> = (0..k)
        .into_par_iter()
        .map(|f| {
            let train = ds.subset(&folds.train_indices(f));
            let test = ds.subset(&folds.test_indices(f));
            evaluate_fold(&train, &test, grid, cfg, &rng.derive(100 + f as u64)).map_err(|e| Error::Fold {
                fold: f,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    let table: Vec<CvRow> = grid
        .iter()
        .enumerate()
        .map(|(g, &q)| {
            let err: Vec<f64> = outcomes.iter().map(|o| o.error[g]).collect();
            let ber: Vec<f64> = outcomes.iter().map(|o| o.ber[g]).collect();
            let (mean_error, sd_error) = mean_sd(&err);
            let (mean_ber, sd_ber) = mean_sd(&ber);
            CvRow {
                quantile: q,
                mean_error,
                sd_error,
                mean_ber,
                sd_ber,
                mean_pairs: outcomes.iter().map(|o| o.pairs[g] as f64).sum::<f64>() / k as f64,
            }
        })
        .collect();
    let chosen = choose(&table, criterion);
    Ok(ThresholdSelection {
        chosen,
        criterion,
        table,
    })
}

fn choose(table: &[CvRow], criterion: CvCriterion) -> f64 {
    let value = |r: &CvRow| match criterion {
        CvCriterion::Error => r.mean_error,
        CvCriterion::Ber => r.mean_ber,
    };
    let mut order: Vec<&CvRow> = table.iter().collect();
    order.sort_by(|a, b| b.quantile.total_cmp(&a.quantile));
    let mut best = order[0];
    for r in &order[1..] {
        if value(r) < value(best) - 1e-12 {
            best = r;
        }
    }
    best.quantile
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;
    use rand_distr::StandardNormal;

    fn toy(n_per: usize, d: usize, seed: u64) -> Dataset {
        let mut r = Rng::new(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for l in Label::BOTH {
            for _ in 0..n_per {
                rows.push((0..d).map(|_| r.sample::<f64, _>(StandardNormal) + 1.5 * l.sign()).collect());
                y.push(l);
            }
        }
        Dataset::from_matrix(Matrix::from_rows(&rows).unwrap(), y).unwrap()
    }

    #[test]
    fn tie_goes_to_larger_quantile() {
        let row = |q: f64, e: f64| CvRow {
            quantile: q,
            mean_error: e,
            sd_error: 0.0,
            mean_ber: e,
            sd_ber: 0.0,
            mean_pairs: 0.0,
        };
        let t = vec![row(0.0, 0.1), row(0.5, 0.1), row(0.9, 0.2)];
        assert_eq!(choose(&t, CvCriterion::Error), 0.5);
        let t = vec![row(0.0, 0.05), row(0.5, 0.1)];
        assert_eq!(choose(&t, CvCriterion::Error), 0.0);
    }

    #[test]
    fn single_point_grid() {
        let ds = toy(10, 2, 1);
        let s = select_threshold_cv(&ds, &[0.75], 5, CvCriterion::Error, &SlbConfig::default(), &Rng::new(1)).unwrap();
        assert_eq!(s.chosen, 0.75);
        assert_eq!(s.table.len(), 1);
    }

    #[test]
    fn d1_has_no_pairs() {
        let ds = toy(20, 1, 2);
        let m = fit_slb(&ds, &SlbConfig::default(), &Rng::new(3)).unwrap();
        assert!(m.retained_pairs().is_empty());
        assert_eq!(m.linear.dim(), 3);
    }

    #[test]
    fn retain_all_is_minus() {
        let ds = toy(15, 3, 4);
        let a = fit_slb_with_rule(&ds, &SlbConfig::default(), ScreenRule::RETAIN_ALL, &Rng::new(5)).unwrap();
        let b = fit_slb(&ds, &SlbConfig::minus(), &Rng::new(5)).unwrap();
        assert_eq!(a.linear.weights, b.linear.weights);
        assert_eq!(a.retained_pairs().len(), 3);
    }

    #[test]
    fn separable_training_error_zero() {
        let ds = toy(20, 2, 6);
        let m = fit_slb(&ds, &SlbConfig::default(), &Rng::new(7)).unwrap();
        let p = predict(&m, ds.features()).unwrap();
        assert_eq!(p, ds.labels());
        assert!(predict(&m, &Matrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn split_mode_fits() {
        let ds = toy(30, 2, 8);
        let cfg = SlbConfig {
            split: Some(0.5),
            ..SlbConfig::minus()
        };
        let m = fit_slb(&ds, &cfg, &Rng::new(9)).unwrap();
        assert_eq!(m.feature_map.class(Label::Pos).samples(), 15);
    }

    #[test]
    fn errors_name_the_step() {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for k in 0..10 {
            rows.push(vec![k as f64, 2.0]);
            y.push(if k < 5 { Label::Neg } else { Label::Pos });
        }
        let ds = Dataset::from_matrix(Matrix::from_rows(&rows).unwrap(), y).unwrap();
        let err = fit_slb(&ds, &SlbConfig::lu(), &Rng::new(1)).unwrap_err();
        assert!(err.to_string().starts_with("density"), "{err}");
    }
}
