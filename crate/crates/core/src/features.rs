//! Pair screening by per-class HSIC and the log-density feature map.
//!
//! Feature layout (dimension `2 (d + |pairs|) + 1`): class −1 univariate
//! log-densities for variables `0..d`, class −1 bivariate log-densities for
//! each retained pair in lexicographic `(i < j)` order, the same two blocks for
//! class +1, then the constant 1.

use std::collections::HashMap;
use std::sync::Arc;

use rand::seq::index::sample as sample_indices;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Label, Matrix};
use crate::density::{Bandwidth, Density, DensityConfig, GridKde, GridSpec, Kde1d, Kde2d, LogDensity};
use crate::error::{Error, Result};
use crate::hsic::{self, CenteredGram, KernelSpec};
use crate::rng::Rng;

pub type Pair = (usize, usize);

/// All unordered pairs `(i < j)` of `0..d` in lexicographic order.
pub fn all_pairs(d: usize) -> Vec<Pair> {
    (0..d)
        .flat_map(|i| ((i + 1)..d).map(move |j| (i, j)))
        .collect()
}

/// How retained pairs are chosen from the screening statistics.
///
/// A pair's score is the larger of its two per-class statistics (for p-value
/// rules: it is retained when either class's test rejects).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "value")]
pub enum ScreenRule {
    /// Retain pairs whose score exceeds the raw statistic threshold.
    Threshold(f64),
    /// Threshold at the `q`-quantile of the pooled per-class statistics.
    /// `q = 0` retains every pair and `q = 1` none.
    Quantile(f64),
    /// Retain the `ceil(f · P)` highest-scoring pairs; ties go to the
    /// lexicographically smaller pair.
    TopFraction(f64),
    /// Benjamini–Hochberg at level `alpha` over all per-class permutation p-values.
    PValueBh(f64),
}

impl ScreenRule {
    pub const RETAIN_ALL: ScreenRule = ScreenRule::Quantile(0.0);
    pub const RETAIN_NONE: ScreenRule = ScreenRule::Quantile(1.0);

    pub fn needs_pvalues(&self) -> bool {
        matches!(self, ScreenRule::PValueBh(_))
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            ScreenRule::Threshold(t) => !t.is_nan(),
            ScreenRule::Quantile(q) | ScreenRule::TopFraction(q) => (0.0..=1.0).contains(&q),
            ScreenRule::PValueBh(a) => a > 0.0 && a < 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid screening rule {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreenConfig {
    pub kernel: KernelSpec,
    /// Permutations per test when p-values are needed.
    pub permutations: usize,
    /// Classes larger than this are subsampled (seeded) before computing HSIC.
    pub max_samples: Option<usize>,
    /// Upper bound on cached Gram entries per class; beyond it Grams are recomputed per pair.
    pub gram_cache_entries: usize,
}

impl Default for ScreenConfig {
    fn default() -> Self {
        ScreenConfig {
            kernel: KernelSpec::median(),
            permutations: 199,
            max_samples: Some(1000),
            gram_cache_entries: 32_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairStat {
    pub i: usize,
    pub j: usize,
    /// Indexed by [`Label::index`].
    pub statistic: [f64; 2],
    pub p_value: Option<[f64; 2]>,
}

impl PairStat {
    pub fn score(&self) -> f64 {
        self.statistic[0].max(self.statistic[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScreen {
    pub d: usize,
    pub stats: Vec<PairStat>,
    pub rule: ScreenRule,
    pub retained: Vec<Pair>,
}

impl PairScreen {
    /// Re-apply a different rule to the same statistics.
    pub fn with_rule(&self, rule: ScreenRule) -> Result<PairScreen> {
        let retained = apply_rule(&self.stats, &rule)?;
        Ok(PairScreen {
            d: self.d,
            stats: self.stats.clone(),
            rule,
            retained,
        })
    }

    /// Pairs ordered by decreasing score, ties broken lexicographically.
    pub fn ranked(&self) -> Vec<Pair> {
        ranked(&self.stats)
    }
}

fn ranked(stats: &[PairStat]) -> Vec<Pair> {
    let mut order: Vec<&PairStat> = stats.iter().collect();
    order.sort_by(|a, b| b.score().total_cmp(&a.score()).then((a.i, a.j).cmp(&(b.i, b.j))));
    order.into_iter().map(|s| (s.i, s.j)).collect()
}

/// Linear-interpolation sample quantile of `values` (sorted copy), `q ∈ [0, 1]`.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Benjamini–Hochberg rejections at level `alpha`.
pub fn benjamini_hochberg(p: &[f64], alpha: f64) -> Vec<bool> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    let mut cutoff = None;
    for (rank, &idx) in order.iter().enumerate() {
        if p[idx] <= alpha * (rank + 1) as f64 / m as f64 {
            cutoff = Some(rank);
        }
    }
    let mut reject = vec![false; m];
    if let Some(c) = cutoff {
        for &idx in &order[..=c] {
            reject[idx] = true;
        }
    }
    reject
}

pub fn apply_rule(stats: &[PairStat], rule: &ScreenRule) -> Result<Vec<Pair>> {
    rule.validate()?;
    if stats.is_empty() {
        return Ok(Vec::new());
    }
    let mut keep: Vec<Pair> = match *rule {
        ScreenRule::Threshold(t) => stats.iter().filter(|s| s.score() > t).map(|s| (s.i, s.j)).collect(),
        ScreenRule::Quantile(q) => {
            if q == 0.0 {
                stats.iter().map(|s| (s.i, s.j)).collect()
            } else {
                let pooled: Vec<f64> = stats.iter().flat_map(|s| s.statistic).collect();
                let t = quantile(&pooled, q);
                stats.iter().filter(|s| s.score() > t).map(|s| (s.i, s.j)).collect()
            }
        }
        ScreenRule::TopFraction(f) => {
            let count = ((f * stats.len() as f64) - 1e-9).ceil().max(0.0) as usize;
            ranked(stats).into_iter().take(count).collect()
        }
        ScreenRule::PValueBh(alpha) => {
            let mut p = Vec::with_capacity(2 * stats.len());
            for s in stats {
                let pv = s.p_value.ok_or_else(|| {
                    Error::InvalidArgument("p-value rule needs permutation p-values".into())
                })?;
                p.extend_from_slice(&pv);
            }
            let reject = benjamini_hochberg(&p, alpha);
            stats
                .iter()
                .enumerate()
                .filter(|(k, _)| reject[2 * k] || reject[2 * k + 1])
                .map(|(_, s)| (s.i, s.j))
                .collect()
        }
    };
    keep.sort_unstable();
    Ok(keep)
}

/// Per-class HSIC statistics (and optionally p-values) for all pairs.
pub fn pair_statistics(ds: &Dataset, cfg: &ScreenConfig, with_pvalues: bool, rng: &Rng) -> Result<Vec<PairStat>> {
    let d = ds.d();
    ds.require_classes(hsic::MIN_SAMPLES)?;
    let pairs = all_pairs(d);
    if pairs.is_empty() {
        return Ok(Vec::new());
    }
    let mut stats: Vec<PairStat> = pairs
        .iter()
        .map(|&(i, j)| PairStat {
            i,
            j,
            statistic: [0.0; 2],
            p_value: with_pvalues.then_some([1.0; 2]),
        })
        .collect();
    for label in Label::BOTH {
        let c = label.index();
        let mut idx = ds.class_indices(label);
        if let Some(m) = cfg.max_samples {
            if idx.len() > m {
                let mut r = rng.derive(1000 + c as u64);
                let mut pick: Vec<usize> = sample_indices(&mut r, idx.len(), m).into_vec();
                pick.sort_unstable();
                idx = pick.into_iter().map(|k| idx[k]).collect();
            }
        }
        let x = ds.features().select_rows(&idx);
        let cols: Vec<Vec<f64>> = (0..d).map(|j| x.column(j)).collect();
        let sigmas: Vec<f64> = cols
            .iter()
            .map(|col| cfg.kernel.resolve(col))
            .collect::<Result<_>>()?;
        let n = idx.len();
        let prng = rng.derive(2000 + c as u64);
        let pvalue = |gi: &CenteredGram, gj: &CenteredGram, k: usize| -> Result<f64> {
            hsic::permutation_pvalue_grams(gi, gj, cfg.permutations, &prng.derive(k as u64))
        };
        let results: Vec<(f64, Option<f64>)> = if d * n * n <= cfg.gram_cache_entries {
            let grams: Vec<CenteredGram> = cols
                .par_iter()
                .zip(&sigmas)
                .map(|(col, &s)| CenteredGram::with_sigma(col, s))
                .collect();
            pairs
                .par_iter()
                .enumerate()
                .map(|(k, &(i, j))| {
                    let s = grams[i].hsic(&grams[j]);
                    let p = if with_pvalues { Some(pvalue(&grams[i], &grams[j], k)?) } else { None };
                    Ok((s, p))
                })
                .collect::<Result<_>>()?
        } else {
            let mut out = vec![(0.0, None); pairs.len()];
            let index: HashMap<Pair, usize> = pairs.iter().enumerate().map(|(k, &p)| (p, k)).collect();
            for i in 0..d {
                let gi = CenteredGram::with_sigma(&cols[i], sigmas[i]);
                let row: Vec<(usize, (f64, Option<f64>))> = ((i + 1)..d)
                    .into_par_iter()
                    .map(|j| {
                        let gj = CenteredGram::with_sigma(&cols[j], sigmas[j]);
                        let k = index[&(i, j)];
                        let s = gi.hsic(&gj);
                        let p = if with_pvalues { Some(pvalue(&gi, &gj, k)?) } else { None };
                        Ok((k, (s, p)))
                    })
                    .collect::<Result<_>>()?;
                for (k, v) in row {
                    out[k] = v;
                }
            }
            out
        };
        for (st, (s, p)) in stats.iter_mut().zip(results) {
            st.statistic[c] = s;
            if let (Some(pv), Some(p)) = (st.p_value.as_mut(), p) {
                pv[c] = p;
            }
        }
    }
    Ok(stats)
}

/// Compute per-class HSIC for every pair and apply `rule`.
pub fn screen_pairs(ds: &Dataset, cfg: &ScreenConfig, rule: ScreenRule, rng: &Rng) -> Result<PairScreen> {
    rule.validate()?;
    let stats = pair_statistics(ds, cfg, rule.needs_pvalues(), rng)?;
    let retained = apply_rule(&stats, &rule)?;
    Ok(PairScreen {
        d: ds.d(),
        stats,
        rule,
        retained,
    })
}

/// Coordinate meaning in a feature map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureTag {
    Univariate { class: Label, i: usize },
    Bivariate { class: Label, i: usize, j: usize },
    Constant,
}

/// Tags for the standard layout.
pub fn layout_tags(d: usize, pairs: &[Pair]) -> Vec<FeatureTag> {
    let mut tags = Vec::with_capacity(2 * (d + pairs.len()) + 1);
    for class in Label::BOTH {
        tags.extend((0..d).map(|i| FeatureTag::Univariate { class, i }));
        tags.extend(pairs.iter().map(|&(i, j)| FeatureTag::Bivariate { class, i, j }));
    }
    tags.push(FeatureTag::Constant);
    tags
}

/// Column indices, in a layout over `full` pairs, of the layout over `subset`.
pub fn layout_columns(d: usize, full: &[Pair], subset: &[Pair]) -> Result<Vec<usize>> {
    let pos: HashMap<Pair, usize> = full.iter().enumerate().map(|(k, &p)| (p, k)).collect();
    let block = d + full.len();
    let mut cols = Vec::with_capacity(2 * (d + subset.len()) + 1);
    for c in 0..2 {
        cols.extend((0..d).map(|i| c * block + i));
        for p in subset {
            let k = pos
                .get(p)
                .ok_or_else(|| Error::InvalidArgument(format!("pair {p:?} not in the full layout")))?;
            cols.push(c * block + d + k);
        }
    }
    cols.push(2 * block);
    Ok(cols)
}

/// A map from `R^d` to feature vectors; implemented by the estimated map and by oracle maps.
pub trait FeatureMapping: Sync {
    fn input_dim(&self) -> usize;
    fn dim(&self) -> usize;
    fn map_into(&self, x: &[f64], out: &mut Vec<f64>);

    fn map_point(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("input point must be finite".into()));
        }
        let mut out = Vec::with_capacity(self.dim());
        self.map_into(x, &mut out);
        Ok(out)
    }

    fn map_matrix(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.cols(),
            });
        }
        let rows: Vec<f64> = (0..x.rows())
            .into_par_iter()
            .flat_map_iter(|r| {
                let mut out = Vec::with_capacity(self.dim());
                self.map_into(x.row(r), &mut out);
                out
            })
            .collect();
        Matrix::from_vec(x.rows(), self.dim(), rows)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassDensities {
    /// Class training columns shared by the KDEs; empty once every density is tabulated.
    columns: Vec<Arc<[f64]>>,
    univariate: Vec<Density>,
    bivariate: Vec<Density>,
}

impl ClassDensities {
    pub fn univariate(&self) -> &[Density] {
        &self.univariate
    }

    pub fn bivariate(&self) -> &[Density] {
        &self.bivariate
    }

    pub fn samples(&self) -> usize {
        self.columns.first().map_or(0, |c| c.len())
    }

    fn map_into(&self, pairs: &[Pair], x: &[f64], out: &mut Vec<f64>) {
        for (i, dens) in self.univariate.iter().enumerate() {
            out.push(dens.log_eval(&[x[i]]));
        }
        // Kernel factors are shared across all pairs touching a coordinate.
        let mut cache: HashMap<(usize, u64), Vec<f64>> = HashMap::new();
        for (&(i, j), dens) in pairs.iter().zip(&self.bivariate) {
            let v = match dens {
                Density::Kde2(k) if self.shares(i, j, k) => {
                    let (hu, hv) = k.bandwidths();
                    let a = kernel_factors(&mut cache, i, x[i], &self.columns[i], hu);
                    let b = kernel_factors(&mut cache, j, x[j], &self.columns[j], hv);
                    let s = crate::svm::dot(&cache[&a], &cache[&b]);
                    k.clamp_log(s * k.norm())
                }
                other => other.log_eval(&[x[i], x[j]]),
            };
            out.push(v);
        }
    }

    fn shares(&self, i: usize, j: usize, k: &Kde2d) -> bool {
        self.columns.len() > i.max(j) && Arc::ptr_eq(k.u(), &self.columns[i]) && Arc::ptr_eq(k.v(), &self.columns[j])
    }
}

fn kernel_factors(cache: &mut HashMap<(usize, u64), Vec<f64>>, coord: usize, x: f64, col: &[f64], h: f64) -> (usize, u64) {
    let key = (coord, h.to_bits());
    cache.entry(key).or_insert_with(|| {
        let inv = 1.0 / h;
        col.iter()
            .map(|&p| {
                let z = (x - p) * inv;
                (-0.5 * z * z).exp()
            })
            .collect()
    });
    key
}

impl Kde2d {
    fn clamp_log(&self, p: f64) -> f64 {
        LogDensity::clamp(self).apply(p).ln()
    }
}

/// Estimated log-density feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    d: usize,
    pairs: Vec<Pair>,
    config: DensityConfig,
    /// Indexed by [`Label::index`].
    classes: [ClassDensities; 2],
}

/// Fit univariate KDEs for every variable and bivariate KDEs for `pairs`, per class.
pub fn build_feature_map_for_pairs(ds: &Dataset, pairs: &[Pair], cfg: &DensityConfig) -> Result<FeatureMap> {
    let d = ds.d();
    let mut pairs = pairs.to_vec();
    pairs.sort_unstable();
    pairs.dedup();
    if let Some(&(i, j)) = pairs.iter().find(|&&(i, j)| i >= j || j >= d) {
        return Err(Error::InvalidArgument(format!("invalid pair ({i}, {j}) for d = {d}")));
    }
    let build_class = |label: Label| -> Result<ClassDensities> {
        let x = ds.class_features(label);
        let columns: Vec<Arc<[f64]>> = (0..d).map(|j| Arc::from(x.column(j))).collect();
        let named = |e: Error, i: usize| match e {
            Error::DegenerateFeature { reason, .. } => Error::DegenerateFeature {
                name: format!("{} (class {label})", ds.feature_names()[i]),
                reason,
            },
            other => other,
        };
        let univariate = (0..d)
            .map(|i| {
                Kde1d::from_shared(columns[i].clone(), cfg.bandwidth, cfg.clamp)
                    .map(Density::Kde1)
                    .map_err(|e| named(e, i))
            })
            .collect::<Result<Vec<_>>>()?;
        let bivariate = pairs
            .iter()
            .map(|&(i, j)| {
                Kde2d::from_shared(
                    columns[i].clone(),
                    columns[j].clone(),
                    (cfg.bandwidth, cfg.bandwidth),
                    cfg.clamp,
                )
                .map(Density::Kde2)
                .map_err(|e| named(e, i))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ClassDensities {
            columns,
            univariate,
            bivariate,
        })
    };
    let neg = build_class(Label::Neg)?;
    let pos = build_class(Label::Pos)?;
    Ok(FeatureMap {
        d,
        pairs,
        config: *cfg,
        classes: [neg, pos],
    })
}

pub fn build_feature_map(ds: &Dataset, screen: &PairScreen, cfg: &DensityConfig) -> Result<FeatureMap> {
    if screen.d != ds.d() {
        return Err(Error::DimensionMismatch {
            expected: ds.d(),
            got: screen.d,
        });
    }
    build_feature_map_for_pairs(ds, &screen.retained, cfg)
}

impl FeatureMap {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn pairs(&self) -> &[Pair] {
        &self.pairs
    }

    pub fn config(&self) -> &DensityConfig {
        &self.config
    }

    pub fn class(&self, label: Label) -> &ClassDensities {
        &self.classes[label.index()]
    }

    pub fn tags(&self) -> Vec<FeatureTag> {
        layout_tags(self.d, &self.pairs)
    }

    /// Drop the bivariate densities of pairs not in `subset`.
    pub fn restrict(&self, subset: &[Pair]) -> Result<FeatureMap> {
        let pos: HashMap<Pair, usize> = self.pairs.iter().enumerate().map(|(k, &p)| (p, k)).collect();
        let mut subset = subset.to_vec();
        subset.sort_unstable();
        subset.dedup();
        let keep = subset
            .iter()
            .map(|p| {
                pos.get(p)
                    .copied()
                    .ok_or_else(|| Error::InvalidArgument(format!("pair {p:?} not in feature map")))
            })
            .collect::<Result<Vec<usize>>>()?;
        let restrict_class = |c: &ClassDensities| ClassDensities {
            columns: c.columns.clone(),
            univariate: c.univariate.clone(),
            bivariate: keep.iter().map(|&k| c.bivariate[k].clone()).collect(),
        };
        Ok(FeatureMap {
            d: self.d,
            pairs: subset,
            config: self.config,
            classes: [restrict_class(&self.classes[0]), restrict_class(&self.classes[1])],
        })
    }

    /// Replace every KDE by a tabulated version; the training samples are dropped.
    pub fn with_grid(&self, spec: GridSpec) -> Result<FeatureMap> {
        let tab = |dens: &Density| -> Result<Density> {
            Ok(match dens {
                Density::Kde1(k) => Density::Grid(GridKde::from_kde1d(k, spec)?),
                Density::Kde2(k) => Density::Grid(GridKde::from_kde2d(k, spec)?),
                Density::Grid(g) => Density::Grid(g.clone()),
            })
        };
        let tab_class = |c: &ClassDensities| -> Result<ClassDensities> {
            Ok(ClassDensities {
                columns: Vec::new(),
                univariate: c.univariate.iter().map(tab).collect::<Result<_>>()?,
                bivariate: c.bivariate.iter().map(tab).collect::<Result<_>>()?,
            })
        };
        Ok(FeatureMap {
            d: self.d,
            pairs: self.pairs.clone(),
            config: self.config,
            classes: [tab_class(&self.classes[0])?, tab_class(&self.classes[1])?],
        })
    }

    pub fn to_file(&self) -> FeatureMapFile {
        let class_file = |label: Label| {
            let c = &self.classes[label.index()];
            let density = |dens: &Density, cols: (usize, usize)| match dens {
                Density::Kde1(k) if c.columns.get(cols.0).is_some_and(|col| Arc::ptr_eq(col, k.points())) => {
                    DensityFile::Kde1 {
                        column: cols.0,
                        bandwidth: k.bandwidth(),
                    }
                }
                Density::Kde2(k) if c.columns.len() > cols.1 && Arc::ptr_eq(k.u(), &c.columns[cols.0]) && Arc::ptr_eq(k.v(), &c.columns[cols.1]) => {
                    DensityFile::Kde2 {
                        columns: cols,
                        bandwidths: k.bandwidths(),
                    }
                }
                Density::Kde1(k) => DensityFile::Kde1Points {
                    points: k.points().to_vec(),
                    bandwidth: k.bandwidth(),
                },
                Density::Kde2(k) => DensityFile::Kde2Points {
                    u: k.u().to_vec(),
                    v: k.v().to_vec(),
                    bandwidths: k.bandwidths(),
                },
                Density::Grid(g) => DensityFile::Grid(g.clone()),
            };
            ClassDensitiesFile {
                label,
                samples: c.columns.iter().map(|col| col.to_vec()).collect(),
                univariate: c.univariate.iter().enumerate().map(|(i, k)| density(k, (i, i))).collect(),
                bivariate: c.bivariate.iter().zip(&self.pairs).map(|(k, &p)| density(k, p)).collect(),
            }
        };
        FeatureMapFile {
            d: self.d,
            pairs: self.pairs.clone(),
            config: self.config,
            classes: vec![class_file(Label::Neg), class_file(Label::Pos)],
        }
    }

    pub fn from_file(file: &FeatureMapFile) -> Result<FeatureMap> {
        if file.classes.len() != 2 {
            return Err(Error::Format("feature map needs exactly two classes".into()));
        }
        let clamp = file.config.clamp;
        let load_class = |cf: &ClassDensitiesFile| -> Result<ClassDensities> {
            let columns: Vec<Arc<[f64]>> = cf.samples.iter().map(|c| Arc::from(c.as_slice())).collect();
            let col = |k: usize| -> Result<Arc<[f64]>> {
                columns
                    .get(k)
                    .cloned()
                    .ok_or_else(|| Error::Format(format!("density references missing column {k}")))
            };
            let load = |df: &DensityFile| -> Result<Density> {
                Ok(match df {
                    DensityFile::Kde1 { column, bandwidth } => {
                        Density::Kde1(Kde1d::from_shared(col(*column)?, Bandwidth::Fixed(*bandwidth), clamp)?)
                    }
                    DensityFile::Kde2 { columns: (a, b), bandwidths: (hu, hv) } => Density::Kde2(Kde2d::from_shared(
                        col(*a)?,
                        col(*b)?,
                        (Bandwidth::Fixed(*hu), Bandwidth::Fixed(*hv)),
                        clamp,
                    )?),
                    DensityFile::Kde1Points { points, bandwidth } => {
                        Density::Kde1(Kde1d::from_shared(Arc::from(points.as_slice()), Bandwidth::Fixed(*bandwidth), clamp)?)
                    }
                    DensityFile::Kde2Points { u, v, bandwidths: (hu, hv) } => Density::Kde2(Kde2d::from_shared(
                        Arc::from(u.as_slice()),
                        Arc::from(v.as_slice()),
                        (Bandwidth::Fixed(*hu), Bandwidth::Fixed(*hv)),
                        clamp,
                    )?),
                    DensityFile::Grid(g) => Density::Grid(g.clone()),
                })
            };
            let univariate = cf.univariate.iter().map(load).collect::<Result<Vec<_>>>()?;
            let bivariate = cf.bivariate.iter().map(load).collect::<Result<Vec<_>>>()?;
            if univariate.len() != file.d || bivariate.len() != file.pairs.len() {
                return Err(Error::Format("feature map density counts do not match layout".into()));
            }
            Ok(ClassDensities {
                columns,
                univariate,
                bivariate,
            })
        };
        let neg = file
            .classes
            .iter()
            .find(|c| c.label == Label::Neg)
            .ok_or_else(|| Error::Format("missing class -1".into()))?;
        let pos = file
            .classes
            .iter()
            .find(|c| c.label == Label::Pos)
            .ok_or_else(|| Error::Format("missing class +1".into()))?;
        Ok(FeatureMap {
            d: file.d,
            pairs: file.pairs.clone(),
            config: file.config,
            classes: [load_class(neg)?, load_class(pos)?],
        })
    }
}

impl FeatureMapping for FeatureMap {
    fn input_dim(&self) -> usize {
        self.d
    }

    fn dim(&self) -> usize {
        2 * (self.d + self.pairs.len()) + 1
    }

    fn map_into(&self, x: &[f64], out: &mut Vec<f64>) {
        for c in &self.classes {
            c.map_into(&self.pairs, x, out);
        }
        out.push(1.0);
    }
}

/// Serialized form of a [`FeatureMap`]: training samples stored once per class,
/// densities reference sample columns by index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMapFile {
    pub d: usize,
    pub pairs: Vec<Pair>,
    pub config: DensityConfig,
    pub classes: Vec<ClassDensitiesFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDensitiesFile {
    pub label: Label,
    /// Column-major training samples (`d` columns).
    pub samples: Vec<Vec<f64>>,
    pub univariate: Vec<DensityFile>,
    pub bivariate: Vec<DensityFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensityFile {
    Kde1 { column: usize, bandwidth: f64 },
    Kde2 { columns: (usize, usize), bandwidths: (f64, f64) },
    Kde1Points { points: Vec<f64>, bandwidth: f64 },
    Kde2Points { u: Vec<f64>, v: Vec<f64>, bandwidths: (f64, f64) },
    Grid(GridKde),
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;
    use rand_distr::StandardNormal;

    fn gaussian_ds(n_per: usize, d: usize, seed: u64, duplicate: bool) -> Dataset {
        let mut r = Rng::new(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for label in Label::BOTH {
            for _ in 0..n_per {
                let mut x: Vec<f64> = (0..d).map(|_| r.sample::<f64, _>(StandardNormal) + 0.5 * label.sign()).collect();
                if duplicate && d >= 2 {
                    x[1] = x[0];
                }
                rows.push(x);
                labels.push(label);
            }
        }
        Dataset::from_matrix(Matrix::from_rows(&rows).unwrap(), labels).unwrap()
    }

    #[test]
    fn pairs_enumeration() {
        assert_eq!(all_pairs(3), vec![(0, 1), (0, 2), (1, 2)]);
        assert!(all_pairs(1).is_empty());
    }

    #[test]
    fn duplicated_feature_is_retained() {
        let ds = gaussian_ds(40, 3, 1, true);
        let cfg = ScreenConfig {
            permutations: 99,
            ..Default::default()
        };
        let screen = screen_pairs(&ds, &cfg, ScreenRule::PValueBh(0.05), &Rng::new(2)).unwrap();
        assert!(screen.retained.contains(&(0, 1)));
        let top = screen.with_rule(ScreenRule::TopFraction(1.0 / 3.0)).unwrap();
        assert_eq!(top.retained, vec![(0, 1)]);
        assert_eq!(screen.ranked()[0], (0, 1));
        for q in [0.25, 0.5, 0.75, 0.9] {
            assert!(screen.with_rule(ScreenRule::Quantile(q)).unwrap().retained.contains(&(0, 1)));
        }
    }

    #[test]
    fn extreme_rules() {
        let ds = gaussian_ds(20, 4, 3, false);
        let cfg = ScreenConfig::default();
        let s = screen_pairs(&ds, &cfg, ScreenRule::TopFraction(0.0), &Rng::new(1)).unwrap();
        assert!(s.retained.is_empty());
        assert_eq!(s.with_rule(ScreenRule::TopFraction(1.0)).unwrap().retained, all_pairs(4));
        assert_eq!(s.with_rule(ScreenRule::RETAIN_ALL).unwrap().retained, all_pairs(4));
        assert!(s.with_rule(ScreenRule::RETAIN_NONE).unwrap().retained.is_empty());
        assert!(s.with_rule(ScreenRule::PValueBh(0.05)).is_err());
        assert!(s.with_rule(ScreenRule::Quantile(1.5)).is_err());
    }

    #[test]
    fn screening_needs_four_per_class() {
        let ds = gaussian_ds(3, 2, 3, false);
        assert!(matches!(
            screen_pairs(&ds, &ScreenConfig::default(), ScreenRule::RETAIN_ALL, &Rng::new(1)),
            Err(Error::InsufficientSamples(_))
        ));
    }

    #[test]
    fn cached_and_streamed_grams_agree() {
        let ds = gaussian_ds(30, 4, 8, false);
        let a = pair_statistics(&ds, &ScreenConfig::default(), false, &Rng::new(1)).unwrap();
        let cfg = ScreenConfig {
            gram_cache_entries: 0,
            ..Default::default()
        };
        let b = pair_statistics(&ds, &cfg, false, &Rng::new(1)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x.statistic[0] - y.statistic[0]).abs() < 1e-14);
            assert!((x.statistic[1] - y.statistic[1]).abs() < 1e-14);
        }
    }

    #[test]
    fn bh_procedure() {
        let p = [0.01, 0.04, 0.03, 0.5];
        // sorted: .01 (<= .0125), .03 (<= .025? no), .04 (<= .0375? no) -> only first
        assert_eq!(benjamini_hochberg(&p, 0.05), vec![true, false, false, false]);
        let p = [0.001, 0.002, 0.003, 0.04];
        assert_eq!(benjamini_hochberg(&p, 0.05), vec![true; 4]);
    }

    #[test]
    fn dimension_formula_and_constant() {
        let ds = gaussian_ds(25, 3, 4, false);
        let fm = build_feature_map_for_pairs(&ds, &[(0, 2)], &DensityConfig::default()).unwrap();
        assert_eq!(fm.dim(), 9);
        assert_eq!(fm.tags().len(), 9);
        let t = fm.map_point(&[0.1, -0.2, 0.3]).unwrap();
        assert_eq!(t.len(), 9);
        assert_eq!(*t.last().unwrap(), 1.0);
        assert!(fm.map_point(&[0.0, 1.0]).is_err());
        let empty = build_feature_map_for_pairs(&ds, &[], &DensityConfig::default()).unwrap();
        assert_eq!(empty.dim(), 7);
    }

    #[test]
    fn d1_map_is_log_univariates() {
        let ds = gaussian_ds(30, 1, 6, false);
        let fm = build_feature_map_for_pairs(&ds, &[], &DensityConfig::default()).unwrap();
        let x = 0.37;
        let t = fm.map_point(&[x]).unwrap();
        let neg = crate::density::fit_kde1d(&ds.class_features(Label::Neg).column(0), Bandwidth::Rule, Default::default()).unwrap();
        let pos = crate::density::fit_kde1d(&ds.class_features(Label::Pos).column(0), Bandwidth::Rule, Default::default()).unwrap();
        assert_eq!(t, vec![neg.log_eval(&[x]), pos.log_eval(&[x]), 1.0]);
    }

    #[test]
    fn fast_path_matches_direct_kde() {
        let ds = gaussian_ds(40, 4, 9, false);
        let pairs = all_pairs(4);
        let fm = build_feature_map_for_pairs(&ds, &pairs, &DensityConfig::default()).unwrap();
        let x = [0.3, -1.0, 2.0, 0.0];
        let t = fm.map_point(&x).unwrap();
        for (k, &(i, j)) in pairs.iter().enumerate() {
            for label in Label::BOTH {
                let direct = fm.class(label).bivariate()[k].log_eval(&[x[i], x[j]]);
                let col = label.index() * (4 + pairs.len()) + 4 + k;
                assert!((t[col] - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn all_finite_even_far_away() {
        let ds = gaussian_ds(30, 3, 10, false);
        let fm = build_feature_map_for_pairs(&ds, &all_pairs(3), &DensityConfig::default()).unwrap();
        for x in [[0.0, 0.0, 0.0], [1e4, -1e4, 3e3]] {
            assert!(fm.map_point(&x).unwrap().iter().all(|v| v.is_finite()));
        }
        let mapped = fm.map_matrix(ds.features()).unwrap();
        assert!(mapped.as_slice().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn constant_feature_error_names_feature() {
        let mut rows = vec![];
        let mut labels = vec![];
        for k in 0..10 {
            rows.push(vec![k as f64, 1.0]);
            labels.push(if k < 5 { Label::Neg } else { Label::Pos });
        }
        let ds = Dataset::from_matrix(Matrix::from_rows(&rows).unwrap(), labels).unwrap();
        let err = build_feature_map_for_pairs(&ds, &[], &DensityConfig::default()).unwrap_err();
        assert!(err.to_string().contains("x2"), "{err}");
    }

    #[test]
    fn restrict_and_layout_columns_agree() {
        let ds = gaussian_ds(30, 4, 11, false);
        let full = all_pairs(4);
        let fm = build_feature_map_for_pairs(&ds, &full, &DensityConfig::default()).unwrap();
        let subset = vec![(0, 3), (1, 2)];
        let small = fm.restrict(&subset).unwrap();
        let cols = layout_columns(4, &full, &subset).unwrap();
        let x = [0.2, 0.1, -0.4, 1.1];
        let a = fm.map_point(&x).unwrap();
        let b = small.map_point(&x).unwrap();
        let picked: Vec<f64> = cols.iter().map(|&c| a[c]).collect();
        assert_eq!(picked, b);
        assert!(fm.restrict(&[(0, 0)]).is_err());
    }

    #[test]
    fn file_round_trip_is_exact() {
        let ds = gaussian_ds(20, 3, 12, false);
        let fm = build_feature_map_for_pairs(&ds, &[(0, 1), (1, 2)], &DensityConfig::default()).unwrap();
        let json = serde_json::to_string(&fm.to_file()).unwrap();
        let back = FeatureMap::from_file(&serde_json::from_str(&json).unwrap()).unwrap();
        for r in 0..ds.n() {
            assert_eq!(fm.map_point(ds.row(r)).unwrap(), back.map_point(ds.row(r)).unwrap());
        }
        let grid = fm.with_grid(GridSpec { nodes: 32, margin_bandwidths: 3.0 }).unwrap();
        let json = serde_json::to_string(&grid.to_file()).unwrap();
        let gback = FeatureMap::from_file(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(grid.map_point(&[0.1, 0.2, 0.3]).unwrap(), gback.map_point(&[0.1, 0.2, 0.3]).unwrap());
    }
}
