//! Comparison classifiers: naive Bayes and TAN over the same KDE primitives,
//! Chow–Liu structure learning, k-nearest neighbours and the exact-density
//! Bayes rule for synthetic networks.

use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{Dataset, Label, Matrix};
use crate::density::DensityConfig;
use crate::error::{Error, Result};
use crate::features::{build_feature_map_for_pairs, FeatureMap, FeatureMapping, Pair};
use crate::svm::dot;
use crate::synth::BnSpec;

fn log_prior_ratio(ds: &Dataset) -> Result<f64> {
    let (neg, pos) = ds.class_counts();
    if neg == 0 || pos == 0 {
        return Err(Error::DegenerateLabels("training data must contain both classes".into()));
    }
    Ok((pos as f64 / neg as f64).ln())
}

/// Per-class forest over the variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestStructure {
    pub d: usize,
    /// Undirected edges `(i < j)`, sorted.
    pub edges: Vec<Pair>,
    /// Mutual-information estimate of each edge.
    pub edge_weights: Vec<f64>,
    pub degrees: Vec<usize>,
    pub log_prior: f64,
}

impl ForestStructure {
    pub fn empty(d: usize) -> Self {
        ForestStructure {
            d,
            edges: Vec::new(),
            edge_weights: Vec::new(),
            degrees: vec![0; d],
            log_prior: 0.0,
        }
    }

    fn from_edges(d: usize, mut weighted: Vec<(Pair, f64)>) -> Self {
        weighted.sort_by(|a, b| a.0.cmp(&b.0));
        let mut degrees = vec![0; d];
        for &((i, j), _) in &weighted {
            degrees[i] += 1;
            degrees[j] += 1;
        }
        ForestStructure {
            d,
            edges: weighted.iter().map(|e| e.0).collect(),
            edge_weights: weighted.iter().map(|e| e.1).collect(),
            degrees,
            log_prior: 0.0,
        }
    }

    pub fn is_acyclic(&self) -> bool {
        let mut uf = UnionFind::new(self.d);
        self.edges.iter().all(|&(i, j)| uf.union(i, j))
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut v: usize) -> usize {
        while self.parent[v] != v {
            self.parent[v] = self.parent[self.parent[v]];
            v = self.parent[v];
        }
        v
    }

    /// Returns false when `a` and `b` were already connected.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra.max(rb)] = ra.min(rb);
        true
    }
}

/// Maximum-weight spanning forest by Kruskal; equal weights are taken in
/// lexicographic edge order.
pub fn maximum_spanning_tree(d: usize, weights: &[(Pair, f64)]) -> Vec<(Pair, f64)> {
    let mut sorted = weights.to_vec();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut uf = UnionFind::new(d);
    sorted.into_iter().filter(|&((i, j), _)| uf.union(i, j)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MiEstimator {
    /// Normal scores of ranks, `MI = −½ log(1 − ρ²)`.
    #[default]
    GaussianCopula,
    /// Resubstitution plug-in of per-class KDEs.
    Kde,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct ChowLiuConfig {
    pub estimator: MiEstimator,
    /// Drop tree edges whose MI estimate does not exceed this value.
    pub mi_floor: Option<f64>,
    pub density: DensityConfig,
}

/// Average ranks (1-based) with ties sharing their mean rank.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut k = 0;
    while k < idx.len() {
        let mut m = k;
        while m + 1 < idx.len() && values[idx[m + 1]] == values[idx[k]] {
            m += 1;
        }
        let r = (k + m) as f64 / 2.0 + 1.0;
        for &i in &idx[k..=m] {
            out[i] = r;
        }
        k = m + 1;
    }
    out
}

fn normal_scores(values: &[f64]) -> Vec<f64> {
    let std = Normal::standard();
    let n = values.len() as f64;
    ranks(values).into_iter().map(|r| std.inverse_cdf(r / (n + 1.0))).collect()
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Pairwise mutual-information estimates for all `(i < j)`, lexicographic.
pub fn mutual_information(x: &Matrix, cfg: &ChowLiuConfig, names: &[String]) -> Result<Vec<(Pair, f64)>> {
    let d = x.cols();
    let pairs = crate::features::all_pairs(d);
    match cfg.estimator {
        MiEstimator::GaussianCopula => {
            let scores: Vec<Vec<f64>> = (0..d).map(|j| normal_scores(&x.column(j))).collect();
            for (j, s) in scores.iter().enumerate() {
                if s.iter().all(|v| *v == s[0]) {
                    return Err(Error::DegenerateFeature {
                        name: names.get(j).cloned().unwrap_or_else(|| format!("x{}", j + 1)),
                        reason: "constant within class; mutual information undefined".into(),
                    });
                }
            }
            Ok(pairs
                .into_iter()
                .map(|(i, j)| {
                    let rho = pearson(&scores[i], &scores[j]).clamp(-1.0, 1.0);
                    let mi = -0.5 * (1.0 - rho * rho).max(f64::MIN_POSITIVE).ln();
                    ((i, j), mi)
                })
                .collect())
        }
        MiEstimator::Kde => {
            let labels = vec![Label::Pos; x.rows()];
            let names = if names.len() == d {
                names.to_vec()
            } else {
                crate::data::default_feature_names(d)
            };
            let one = Dataset::new(x.clone(), labels, names)?;
            let fm = build_feature_map_for_pairs_single(&one, &pairs, &cfg.density)?;
            let mut sums = vec![0.0; pairs.len()];
            for r in 0..x.rows() {
                let t = fm.map_point(x.row(r))?;
                for (k, &(i, j)) in pairs.iter().enumerate() {
                    sums[k] += t[d + k] - t[i] - t[j];
                }
            }
            let n = x.rows() as f64;
            Ok(pairs.into_iter().zip(sums).map(|(p, s)| (p, s / n)).collect())
        }
    }
}

/// Single-class feature map: builds the map on a one-class dataset by
/// duplicating it as both classes and reading the positive block.
fn build_feature_map_for_pairs_single(ds: &Dataset, pairs: &[Pair], cfg: &DensityConfig) -> Result<SingleClassMap> {
    let both = Dataset::new(
        stack(ds.features(), ds.features()),
        ds.labels().iter().map(|_| Label::Neg).chain(ds.labels().iter().map(|_| Label::Pos)).collect(),
        ds.feature_names().to_vec(),
    )?;
    let map = build_feature_map_for_pairs(&both, pairs, cfg)?;
    Ok(SingleClassMap { map })
}

fn stack(a: &Matrix, b: &Matrix) -> Matrix {
    let mut v = a.as_slice().to_vec();
    v.extend_from_slice(b.as_slice());
    Matrix::from_vec(a.rows() + b.rows(), a.cols(), v).expect("stacked shapes agree")
}

struct SingleClassMap {
    map: FeatureMap,
}

impl SingleClassMap {
    fn map_point(&self, x: &[f64]) -> Result<Vec<f64>> {
        let t = self.map.map_point(x)?;
        let block = self.map.d() + self.map.pairs().len();
        Ok(t[block..2 * block].to_vec())
    }
}

/// Chow–Liu maximum spanning tree of one class's samples.
pub fn chow_liu_forest(x: &Matrix, cfg: &ChowLiuConfig, names: &[String]) -> Result<ForestStructure> {
    if x.rows() < 2 {
        return Err(Error::InsufficientSamples(format!(
            "Chow-Liu needs at least 2 samples, got {}",
            x.rows()
        )));
    }
    if x.cols() < 2 {
        return Err(Error::InvalidArgument("Chow-Liu needs at least 2 variables".into()));
    }
    let mi = mutual_information(x, cfg, names)?;
    let mut tree = maximum_spanning_tree(x.cols(), &mi);
    if let Some(floor) = cfg.mi_floor {
        tree.retain(|e| e.1 > floor);
    }
    Ok(ForestStructure::from_edges(x.cols(), tree))
}

/// Weights over the standard layout realizing
/// `Σ_y ±[Σ_i (1 − deg_y(i)) log p_y(x_i) + Σ_{(i,j)∈E_y} log p_y(x_i, x_j)] + offset`.
pub fn lemma1_weights(d: usize, pairs: &[Pair], neg: &ForestStructure, pos: &ForestStructure, offset: f64) -> Vec<f64> {
    let mut w = Vec::with_capacity(2 * (d + pairs.len()) + 1);
    for (s, sign) in [(neg, -1.0), (pos, 1.0)] {
        w.extend(s.degrees.iter().map(|&k| sign * (1.0 - k as f64)));
        w.extend(pairs.iter().map(|p| if s.edges.binary_search(p).is_ok() { sign } else { 0.0 }));
    }
    w.push(offset);
    w
}

/// Tree-augmented naive Bayes: per-class Chow–Liu trees with KDE factors.
#[derive(Debug, Clone, PartialEq)]
pub struct TanModel {
    pub map: FeatureMap,
    /// Indexed by [`Label::index`].
    pub structures: [ForestStructure; 2],
    pub log_prior_ratio: f64,
    weights: Vec<f64>,
}

impl TanModel {
    pub fn from_parts(map: FeatureMap, structures: [ForestStructure; 2], log_prior_ratio: f64) -> Result<TanModel> {
        for s in &structures {
            if s.d != map.d() || s.edges.iter().any(|e| map.pairs().binary_search(e).is_err()) {
                return Err(Error::InvalidArgument("TAN structure edges must be covered by the feature map".into()));
            }
        }
        let weights = lemma1_weights(map.d(), map.pairs(), &structures[0], &structures[1], log_prior_ratio);
        Ok(TanModel {
            map,
            structures,
            log_prior_ratio,
            weights,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        Ok(dot(&self.weights, &self.map.map_point(x)?))
    }

    pub fn decision_values(&self, x: &Matrix) -> Result<Vec<f64>> {
        let t = self.map.map_matrix(x)?;
        Ok(t.iter_rows().map(|r| dot(&self.weights, r)).collect())
    }

    /// Edge lists per class as CSV `(class, i, j, mutual_information)`, 1-based indices.
    pub fn write_edges_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["class", "i", "j", "mutual_information"])?;
        for label in Label::BOTH {
            let s = &self.structures[label.index()];
            for (&(i, j), mi) in s.edges.iter().zip(&s.edge_weights) {
                w.write_record([label.to_string(), (i + 1).to_string(), (j + 1).to_string(), format!("{mi:?}")])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub fn tan_decide(model: &TanModel, x: &[f64]) -> Result<Label> {
    Ok(Label::from_score(model.decision_value(x)?))
}

pub fn fit_tan(ds: &Dataset, density: &DensityConfig, cl: &ChowLiuConfig) -> Result<TanModel> {
    ds.require_classes(2)?;
    let lpr = log_prior_ratio(ds)?;
    let (neg_n, pos_n) = ds.class_counts();
    let n = ds.n() as f64;
    let mut structures = Vec::with_capacity(2);
    for label in Label::BOTH {
        let mut s = if ds.d() >= 2 {
            chow_liu_forest(&ds.class_features(label), cl, ds.feature_names())?
        } else {
            ForestStructure::empty(ds.d())
        };
        s.log_prior = match label {
            Label::Neg => (neg_n as f64 / n).ln(),
            Label::Pos => (pos_n as f64 / n).ln(),
        };
        structures.push(s);
    }
    let mut pairs: Vec<Pair> = structures.iter().flat_map(|s| s.edges.iter().copied()).collect();
    pairs.sort_unstable();
    pairs.dedup();
    let map = build_feature_map_for_pairs(ds, &pairs, density)?;
    let pos = structures.pop().expect("two classes");
    let neg = structures.pop().expect("two classes");
    TanModel::from_parts(map, [neg, pos], lpr)
}

/// TAN with both classes' edge sets forced empty.
pub fn fit_tan_empty(ds: &Dataset, density: &DensityConfig) -> Result<TanModel> {
    let lpr = log_prior_ratio(ds)?;
    let map = build_feature_map_for_pairs(ds, &[], density)?;
    TanModel::from_parts(map, [ForestStructure::empty(ds.d()), ForestStructure::empty(ds.d())], lpr)
}

/// KDE naive Bayes with empirical priors.
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveBayes {
    pub map: FeatureMap,
    pub log_prior_ratio: f64,
}

impl NaiveBayes {
    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        let t = self.map.map_point(x)?;
        let d = self.map.d();
        let neg: f64 = t[..d].iter().sum();
        let pos: f64 = t[d..2 * d].iter().sum();
        Ok(pos - neg + self.log_prior_ratio)
    }

    pub fn decision_values(&self, x: &Matrix) -> Result<Vec<f64>> {
        x.iter_rows().map(|r| self.decision_value(r)).collect()
    }
}

pub fn fit_naive_bayes(ds: &Dataset, density: &DensityConfig) -> Result<NaiveBayes> {
    let lpr = log_prior_ratio(ds)?;
    Ok(NaiveBayes {
        map: build_feature_map_for_pairs(ds, &[], density)?,
        log_prior_ratio: lpr,
    })
}

/// Euclidean k-nearest-neighbour majority vote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub x: Matrix,
    pub y: Vec<Label>,
}

pub fn fit_knn(ds: &Dataset, k: usize) -> Result<KnnModel> {
    if k == 0 || k > ds.n() {
        return Err(Error::InvalidArgument(format!("k must lie in [1, {}], got {k}", ds.n())));
    }
    Ok(KnnModel {
        k,
        x: ds.features().clone(),
        y: ds.labels().to_vec(),
    })
}

impl KnnModel {
    /// Indices of the `k` nearest training points, ordered by (distance, index).
    pub fn neighbours(&self, q: &[f64]) -> Result<Vec<usize>> {
        if q.len() != self.x.cols() {
            return Err(Error::DimensionMismatch {
                expected: self.x.cols(),
                got: q.len(),
            });
        }
        let mut d: Vec<(f64, usize)> = self
            .x
            .iter_rows()
            .enumerate()
            .map(|(i, r)| (r.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum(), i))
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < d.len() {
            d.select_nth_unstable_by(self.k - 1, cmp);
            d.truncate(self.k);
        }
        d.sort_by(cmp);
        Ok(d.into_iter().map(|e| e.1).collect())
    }

    /// `(votes₊ − votes₋) / k`; zero is a tie and maps to +1.
    pub fn decision_value(&self, q: &[f64]) -> Result<f64> {
        let votes: f64 = self.neighbours(q)?.into_iter().map(|i| self.y[i].sign()).sum();
        Ok(votes / self.k as f64)
    }

    pub fn decision_values(&self, x: &Matrix) -> Result<Vec<f64>> {
        use rayon::prelude::*;
        (0..x.rows()).into_par_iter().map(|r| self.decision_value(x.row(r))).collect()
    }
}

pub fn knn_decide(model: &KnnModel, q: &[f64]) -> Result<Label> {
    Ok(Label::from_score(model.decision_value(q)?))
}

/// `log p₊(x) − log p₋(x) + log(π₊/π₋)` under exact network densities.
pub fn oracle_log_ratio(pos: &BnSpec, neg: &BnSpec, log_prior_ratio: f64, x: &[f64]) -> Result<f64> {
    Ok(pos.log_density(x)? - neg.log_density(x)? + log_prior_ratio)
}

pub fn oracle_bayes(pos: &BnSpec, neg: &BnSpec, log_prior_ratio: f64, x: &[f64]) -> Result<Label> {
    Ok(Label::from_score(oracle_log_ratio(pos, neg, log_prior_ratio, x)?))
}

/// Oracle classifier bundled with its networks.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleBayes {
    pub pos: BnSpec,
    pub neg: BnSpec,
    pub log_prior_ratio: f64,
}

impl OracleBayes {
    pub fn decision_values(&self, x: &Matrix) -> Result<Vec<f64>> {
        x.iter_rows()
            .map(|r| oracle_log_ratio(&self.pos, &self.neg, self.log_prior_ratio, r))
            .collect()
    }
}
