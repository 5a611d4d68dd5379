//! Synthetic Bayesian-network benchmarks: forest-structured and 3-parent
//! networks with Gaussian or heavy-tailed mixture CPDs, the class-pair and
//! factorial-design plumbing, a Ringnorm generator, and exact-density oracles.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Label, Matrix};
use crate::error::{Error, Result};
use crate::features::{FeatureMapping, Pair};
use crate::rng::Rng;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
/// Normalizing constant of the Student-t density with 5 degrees of freedom.
const T5_NORM: f64 = 8.0 / (3.0 * PI * 2.236_067_977_499_79);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    Forest,
    General,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CpdFamily {
    /// `X | parents ~ N(Σ z, 1)`.
    Gaussian,
    /// With probability ½ `t₅ + Σ z`, otherwise an equal two-component normal mixture.
    Complex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Balance {
    /// 50/50.
    Balanced,
    /// 75% class +1, 25% class −1.
    Imbalanced,
}

impl Balance {
    pub fn positive_fraction(self) -> f64 {
        match self {
            Balance::Balanced => 0.5,
            Balance::Imbalanced => 0.75,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shared {
    None,
    OneThird,
}

macro_rules! str_enum {
    ($t:ty { $($v:ident => $s:literal),+ $(,)? }) => {
        impl std::fmt::Display for $t {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(match self { $(<$t>::$v => $s),+ })
            }
        }
        impl std::str::FromStr for $t {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.to_ascii_lowercase().as_str() {
                    $($s => Ok(<$t>::$v),)+
                    other => Err(Error::InvalidArgument(format!(
                        "unknown {} `{other}`", stringify!($t).to_ascii_lowercase()
                    ))),
                }
            }
        }
    };
}

str_enum!(Structure { Forest => "forest", General => "general" });
str_enum!(CpdFamily { Gaussian => "gaussian", Complex => "complex" });
str_enum!(Balance { Balanced => "balanced", Imbalanced => "imbalanced" });
str_enum!(Shared { None => "none", OneThird => "one-third" });

/// A DAG over `d` variables with one CPD family shared by all non-root nodes.
/// Roots are standard normal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BnSpec {
    pub d: usize,
    /// Parents of each node, ascending.
    pub parents: Vec<Vec<usize>>,
    /// A topological order.
    pub order: Vec<usize>,
    pub family: CpdFamily,
}

impl BnSpec {
    /// Validate acyclicity against the stored order.
    pub fn new(parents: Vec<Vec<usize>>, family: CpdFamily) -> Result<BnSpec> {
        let d = parents.len();
        let mut indeg: Vec<usize> = parents.iter().map(|p| p.len()).collect();
        let mut children = vec![Vec::new(); d];
        for (i, ps) in parents.iter().enumerate() {
            for &p in ps {
                if p >= d || p == i {
                    return Err(Error::InvalidArgument(format!("invalid parent {p} of node {i}")));
                }
                children[p].push(i);
            }
        }
        let mut ready: Vec<usize> = (0..d).filter(|&i| indeg[i] == 0).rev().collect();
        let mut order = Vec::with_capacity(d);
        while let Some(v) = ready.pop() {
            order.push(v);
            for &c in children[v].iter().rev() {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.push(c);
                }
            }
        }
        if order.len() != d {
            return Err(Error::InvalidArgument("parent structure contains a cycle".into()));
        }
        let parents = parents
            .into_iter()
            .map(|mut p| {
                p.sort_unstable();
                p
            })
            .collect();
        Ok(BnSpec {
            d,
            parents,
            order,
            family,
        })
    }

    pub fn is_forest(&self) -> bool {
        self.parents.iter().all(|p| p.len() <= 1)
    }

    /// Undirected edges `(min, max)`, sorted.
    pub fn edges(&self) -> Vec<Pair> {
        let mut e: Vec<Pair> = self
            .parents
            .iter()
            .enumerate()
            .flat_map(|(i, ps)| ps.iter().map(move |&p| (p.min(i), p.max(i))))
            .collect();
        e.sort_unstable();
        e
    }

    /// Undirected degree of each node.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.d];
        for (i, j) in self.edges() {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    fn mixture_means(parents: &[f64]) -> (f64, f64) {
        match parents.len() {
            1 => (parents[0] + 1.0, parents[0] - 1.0),
            k => (parents[..k - 1].iter().sum(), parents[1..].iter().sum()),
        }
    }

    /// Draw one value of node `i` given its parent values.
    fn sample_node(&self, parent_values: &[f64], rng: &mut Rng, t5: &StudentT<f64>) -> f64 {
        let s: f64 = parent_values.iter().sum();
        let z: f64 = rng.sample(StandardNormal);
        if parent_values.is_empty() {
            return z;
        }
        match self.family {
            CpdFamily::Gaussian => s + z,
            CpdFamily::Complex => {
                if rng.random_bool(0.5) {
                    s + t5.sample(rng)
                } else {
                    let (m1, m2) = Self::mixture_means(parent_values);
                    if rng.random_bool(0.5) {
                        m1 + z
                    } else {
                        m2 + z
                    }
                }
            }
        }
    }

    /// Log conditional density of node value `x` given parent values.
    fn log_cpd(&self, x: f64, parent_values: &[f64]) -> f64 {
        if parent_values.is_empty() {
            return log_normal(x, 0.0, 1.0);
        }
        let s: f64 = parent_values.iter().sum();
        match self.family {
            CpdFamily::Gaussian => log_normal(x, s, 1.0),
            CpdFamily::Complex => {
                let (m1, m2) = Self::mixture_means(parent_values);
                let r = x - s;
                let t = T5_NORM * (1.0 + r * r / 5.0).powi(-3);
                let p = 0.5 * t + 0.25 * log_normal(x, m1, 1.0).exp() + 0.25 * log_normal(x, m2, 1.0).exp();
                p.ln()
            }
        }
    }

    /// Exact joint log-density by the factor product over nodes.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: x.len(),
            });
        }
        let mut buf = Vec::with_capacity(3);
        Ok((0..self.d)
            .map(|i| {
                buf.clear();
                buf.extend(self.parents[i].iter().map(|&p| x[p]));
                self.log_cpd(x[i], &buf)
            })
            .sum())
    }

    /// Ancestral sampling of `n` rows.
    pub fn sample(&self, n: usize, rng: &mut Rng) -> Matrix {
        let t5 = StudentT::new(5.0).expect("valid degrees of freedom");
        let mut out = Matrix::zeros(n, self.d);
        let mut buf = Vec::with_capacity(3);
        for r in 0..n {
            for &i in &self.order {
                buf.clear();
                buf.extend(self.parents[i].iter().map(|&p| out.get(r, p)));
                let v = self.sample_node(&buf, rng, &t5);
                out.set(r, i, v);
            }
        }
        out
    }

    /// Covariance of a Gaussian network (zero mean): `x = A ε`, `Σ = A Aᵀ`.
    pub fn implied_covariance(&self) -> Result<Vec<Vec<f64>>> {
        if self.family != CpdFamily::Gaussian {
            return Err(Error::InvalidArgument("implied covariance needs Gaussian CPDs".into()));
        }
        let d = self.d;
        let mut a = vec![vec![0.0; d]; d];
        for &i in &self.order {
            let mut row = vec![0.0; d];
            row[i] = 1.0;
            for &p in &self.parents[i] {
                for (rk, apk) in row.iter_mut().zip(&a[p]) {
                    *rk += apk;
                }
            }
            a[i] = row;
        }
        Ok((0..d)
            .map(|i| (0..d).map(|j| a[i].iter().zip(&a[j]).map(|(x, y)| x * y).sum()).collect())
            .collect())
    }
}

pub fn sample_bn(spec: &BnSpec, n: usize, rng: &mut Rng) -> Matrix {
    spec.sample(n, rng)
}

pub fn log_normal(x: f64, mean: f64, var: f64) -> f64 {
    let r = x - mean;
    -0.5 * (LN_2PI + var.ln() + r * r / var)
}

/// Log-density of a zero-mean bivariate normal with covariance `[[a, c], [c, b]]`.
pub fn log_normal2(x: f64, y: f64, a: f64, b: f64, c: f64) -> f64 {
    let det = a * b - c * c;
    let q = (b * x * x - 2.0 * c * x * y + a * y * y) / det;
    -LN_2PI - 0.5 * det.ln() - 0.5 * q
}

/// Uniform random labelled tree on `d` nodes (Prüfer decoding), as undirected edges.
fn random_spanning_tree(d: usize, rng: &mut Rng) -> Vec<Pair> {
    if d < 2 {
        return Vec::new();
    }
    if d == 2 {
        return vec![(0, 1)];
    }
    let code: Vec<usize> = (0..d - 2).map(|_| rng.random_range(0..d)).collect();
    let mut degree = vec![1usize; d];
    for &c in &code {
        degree[c] += 1;
    }
    let mut edges = Vec::with_capacity(d - 1);
    for &c in &code {
        let leaf = (0..d).find(|&v| degree[v] == 1).expect("a leaf exists");
        edges.push((leaf.min(c), leaf.max(c)));
        degree[leaf] -= 1;
        degree[c] -= 1;
    }
    let rest: Vec<usize> = (0..d).filter(|&v| degree[v] == 1).collect();
    edges.push((rest[0], rest[1]));
    edges
}

/// Orient an undirected forest away from a uniformly chosen root in each component.
fn orient_forest(d: usize, edges: &[Pair], rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); d];
    for &(i, j) in edges {
        adj[i].push(j);
        adj[j].push(i);
    }
    let mut comp = vec![usize::MAX; d];
    let mut members: Vec<Vec<usize>> = Vec::new();
    for s in 0..d {
        if comp[s] != usize::MAX {
            continue;
        }
        let id = members.len();
        let mut stack = vec![s];
        comp[s] = id;
        let mut m = Vec::new();
        while let Some(v) = stack.pop() {
            m.push(v);
            for &u in &adj[v] {
                if comp[u] == usize::MAX {
                    comp[u] = id;
                    stack.push(u);
                }
            }
        }
        m.sort_unstable();
        members.push(m);
    }
    let mut parents = vec![Vec::new(); d];
    let mut seen = vec![false; d];
    for m in &members {
        let root = m[rng.random_range(0..m.len())];
        let mut queue = std::collections::VecDeque::from([root]);
        seen[root] = true;
        while let Some(v) = queue.pop_front() {
            for &u in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    parents[u].push(v);
                    queue.push_back(u);
                }
            }
        }
    }
    parents
}

/// Random forest-structured network: a uniform spanning tree whose edges are
/// each kept with probability `edge_density`, oriented from random roots.
pub fn random_forest_bn(d: usize, edge_density: f64, family: CpdFamily, rng: &mut Rng) -> Result<BnSpec> {
    if d == 0 {
        return Err(Error::InvalidArgument("network needs at least one node".into()));
    }
    if !(0.0..=1.0).contains(&edge_density) {
        return Err(Error::InvalidArgument(format!("edge density must lie in [0, 1], got {edge_density}")));
    }
    let tree = random_spanning_tree(d, rng);
    let kept: Vec<Pair> = tree.into_iter().filter(|_| rng.random_bool(edge_density)).collect();
    BnSpec::new(orient_forest(d, &kept, rng), family)
}

/// Random network in which, along a random topological order, the first three
/// nodes are roots and every later node has three parents drawn uniformly
/// from its predecessors.
pub fn random_general_bn(d: usize, family: CpdFamily, rng: &mut Rng) -> Result<BnSpec> {
    if d == 0 {
        return Err(Error::InvalidArgument("network needs at least one node".into()));
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.shuffle(rng);
    Ok(general_from_order(&order, family, &[], &vec![Vec::new(); d], rng))
}

fn general_from_order(order: &[usize], family: CpdFamily, fixed: &[usize], template: &[Vec<usize>], rng: &mut Rng) -> BnSpec {
    let d = order.len();
    let mut parents = vec![Vec::new(); d];
    for (pos, &v) in order.iter().enumerate() {
        if fixed.contains(&v) {
            parents[v] = template[v].clone();
        } else if pos >= 3 {
            let mut p: Vec<usize> = rand::seq::index::sample(rng, pos, 3).into_iter().map(|k| order[k]).collect();
            p.sort_unstable();
            parents[v] = p;
        }
    }
    BnSpec {
        d,
        parents,
        order: order.to_vec(),
        family,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentDesign {
    pub structure: Structure,
    pub cpd: CpdFamily,
    pub balance: Balance,
    pub shared: Shared,
    /// Training sample size.
    pub n: usize,
    pub d: usize,
    /// Edge retention probability of forest structures.
    pub edge_density: f64,
    /// Test rows per class.
    pub test_per_class: usize,
}

impl ExperimentDesign {
    pub const DEFAULT_EDGE_DENSITY: f64 = 0.8;

    pub fn new(structure: Structure, cpd: CpdFamily, balance: Balance, shared: Shared, n: usize) -> Self {
        ExperimentDesign {
            structure,
            cpd,
            balance,
            shared,
            n,
            d: 20,
            edge_density: Self::DEFAULT_EDGE_DENSITY,
            test_per_class: 500,
        }
    }

    /// Training counts `(positives, negatives)`, rounding toward class +1.
    pub fn train_counts(&self) -> (usize, usize) {
        let pos = (self.n as f64 * self.balance.positive_fraction()).ceil() as usize;
        (pos, self.n - pos)
    }

    /// Cell identifier `structure/cpd/balance/shared/n`.
    pub fn cell_id(&self) -> String {
        format!("{}/{}/{}/{}/{}", self.structure, self.cpd, self.balance, self.shared, self.n)
    }

    pub fn validate(&self) -> Result<()> {
        let (p, q) = self.train_counts();
        if p == 0 || q == 0 || self.test_per_class == 0 || self.d == 0 {
            return Err(Error::InvalidArgument(format!("design {} leaves a class empty", self.cell_id())));
        }
        Ok(())
    }
}

/// The two class networks of a design, `(positive, negative)`.
pub fn make_class_pair(design: &ExperimentDesign, rng: &mut Rng) -> Result<(BnSpec, BnSpec)> {
    let pair = class_pair(design, rng)?;
    Ok((pair.pos, pair.neg))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassPair {
    pub pos: BnSpec,
    pub neg: BnSpec,
    /// Nodes whose parent sets were copied from the positive network.
    pub copied: Vec<usize>,
}

/// As [`make_class_pair`], also reporting which nodes were copied.
pub fn class_pair(design: &ExperimentDesign, rng: &mut Rng) -> Result<ClassPair> {
    design.validate()?;
    let d = design.d;
    let draw = |rng: &mut Rng| match design.structure {
        Structure::Forest => random_forest_bn(d, design.edge_density, design.cpd, rng),
        Structure::General => random_general_bn(d, design.cpd, rng),
    };
    let pos = draw(rng)?;
    let mut copied = Vec::new();
    let neg = match design.shared {
        // general networks of one design share the topological order
        Shared::None if design.structure == Structure::General => {
            general_from_order(&pos.order, design.cpd, &[], &pos.parents, rng)
        }
        Shared::None => draw(rng)?,
        Shared::OneThird => {
            let k = d / 3;
            let mut non_roots: Vec<usize> = (0..d).filter(|&i| !pos.parents[i].is_empty()).collect();
            let mut roots: Vec<usize> = (0..d).filter(|&i| pos.parents[i].is_empty()).collect();
            non_roots.shuffle(rng);
            roots.shuffle(rng);
            copied = non_roots.into_iter().chain(roots).take(k).collect();
            copied.sort_unstable();
            match design.structure {
                Structure::General => general_from_order(&pos.order, design.cpd, &copied, &pos.parents, rng),
                Structure::Forest => {
                    let mut parents = vec![Vec::new(); d];
                    for (at, &v) in pos.order.iter().enumerate() {
                        if copied.contains(&v) {
                            parents[v] = pos.parents[v].clone();
                        } else if at > 0 && rng.random_bool(design.edge_density) {
                            parents[v] = vec![pos.order[rng.random_range(0..at)]];
                        }
                    }
                    BnSpec {
                        d,
                        parents,
                        order: pos.order.clone(),
                        family: design.cpd,
                    }
                }
            }
        }
    };
    Ok(ClassPair { pos, neg, copied })
}

/// Nodes of `neg` whose parent sets equal those in `pos`, excluding roots of both.
pub fn shared_nodes(pos: &BnSpec, neg: &BnSpec) -> Vec<usize> {
    (0..pos.d)
        .filter(|&i| !pos.parents[i].is_empty() && pos.parents[i] == neg.parents[i])
        .collect()
}

fn labelled(pos: &BnSpec, neg: &BnSpec, n_pos: usize, n_neg: usize, rng: &Rng, stream: u64) -> Result<Dataset> {
    let xp = pos.sample(n_pos, &mut rng.derive(stream));
    let xn = neg.sample(n_neg, &mut rng.derive(stream + 1));
    stack_shuffled(&xp, &xn, &mut rng.derive(stream + 2))
}

fn stack_shuffled(xp: &Matrix, xn: &Matrix, rng: &mut Rng) -> Result<Dataset> {
    let mut rows: Vec<(Vec<f64>, Label)> = xp
        .iter_rows()
        .map(|r| (r.to_vec(), Label::Pos))
        .chain(xn.iter_rows().map(|r| (r.to_vec(), Label::Neg)))
        .collect();
    rows.shuffle(rng);
    let labels = rows.iter().map(|r| r.1).collect();
    let x: Vec<Vec<f64>> = rows.into_iter().map(|r| r.0).collect();
    Dataset::from_matrix(Matrix::from_rows(&x)?, labels)
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub design: ExperimentDesign,
    pub seed: u64,
    pub pos: BnSpec,
    pub neg: BnSpec,
    pub train: Dataset,
    pub test: Dataset,
}

impl Experiment {
    /// Log prior ratio `log(π₊/π₋)` of the training design.
    pub fn log_prior_ratio(&self) -> f64 {
        let (p, q) = self.design.train_counts();
        (p as f64 / q as f64).ln()
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            design: self.design,
            seed: self.seed,
            positive: self.pos.clone(),
            negative: self.neg.clone(),
        }
    }
}

/// Structured record of a generated cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub design: ExperimentDesign,
    pub seed: u64,
    pub positive: BnSpec,
    pub negative: BnSpec,
}

/// Generate the class networks, a training set with the design's balance and
/// a 50/50 test set.
pub fn gen_experiment(design: &ExperimentDesign, rng: &Rng) -> Result<Experiment> {
    design.validate()?;
    let (pos, neg) = make_class_pair(design, &mut rng.derive(0))?;
    let (np, nn) = design.train_counts();
    let train = labelled(&pos, &neg, np, nn, rng, 10)?;
    let test = labelled(&pos, &neg, design.test_per_class, design.test_per_class, rng, 20)?;
    Ok(Experiment {
        design: *design,
        seed: rng.seed(),
        pos,
        neg,
        train,
        test,
    })
}

pub const RINGNORM_D: usize = 20;
pub const RINGNORM_COUNTS: (usize, usize) = (3664, 3736);

/// Ringnorm: class +1 ~ N(0, 4I), class −1 ~ N(a·1, I) with `a = 2/√20`.
pub fn gen_ringnorm(n_pos: usize, n_neg: usize, d: usize, rng: &Rng) -> Result<Dataset> {
    if d != RINGNORM_D {
        return Err(Error::InvalidArgument(format!("ringnorm is defined for d = 20, got {d}")));
    }
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidArgument("ringnorm needs samples of both classes".into()));
    }
    let a = 2.0 / (d as f64).sqrt();
    let mut r = rng.derive(0);
    let mut xp = Matrix::zeros(n_pos, d);
    for i in 0..n_pos {
        for v in xp.row_mut(i) {
            *v = 2.0 * r.sample::<f64, _>(StandardNormal);
        }
    }
    let mut r = rng.derive(1);
    let mut xn = Matrix::zeros(n_neg, d);
    for i in 0..n_neg {
        for v in xn.row_mut(i) {
            *v = a + r.sample::<f64, _>(StandardNormal);
        }
    }
    stack_shuffled(&xp, &xn, &mut rng.derive(2))
}

/// Exact log-density feature map of two Gaussian networks, in the same layout
/// as an estimated feature map over `pairs`.
#[derive(Debug, Clone)]
pub struct OracleMap {
    d: usize,
    pairs: Vec<Pair>,
    /// Covariances indexed by [`Label::index`].
    cov: [Vec<Vec<f64>>; 2],
}

impl OracleMap {
    pub fn new(neg: &BnSpec, pos: &BnSpec, pairs: &[Pair]) -> Result<OracleMap> {
        if neg.d != pos.d {
            return Err(Error::DimensionMismatch {
                expected: pos.d,
                got: neg.d,
            });
        }
        let mut pairs = pairs.to_vec();
        pairs.sort_unstable();
        Ok(OracleMap {
            d: pos.d,
            pairs,
            cov: [neg.implied_covariance()?, pos.implied_covariance()?],
        })
    }

    pub fn pairs(&self) -> &[Pair] {
        &self.pairs
    }

    pub fn log_marginal(&self, label: Label, i: usize, x: f64) -> f64 {
        log_normal(x, 0.0, self.cov[label.index()][i][i])
    }

    pub fn log_bivariate(&self, label: Label, i: usize, j: usize, xi: f64, xj: f64) -> f64 {
        let s = &self.cov[label.index()];
        log_normal2(xi, xj, s[i][i], s[j][j], s[i][j])
    }
}

impl FeatureMapping for OracleMap {
    fn input_dim(&self) -> usize {
        self.d
    }

    fn dim(&self) -> usize {
        2 * (self.d + self.pairs.len()) + 1
    }

    fn map_into(&self, x: &[f64], out: &mut Vec<f64>) {
        for label in Label::BOTH {
            out.extend((0..self.d).map(|i| self.log_marginal(label, i, x[i])));
            out.extend(self.pairs.iter().map(|&(i, j)| self.log_bivariate(label, i, j, x[i], x[j])));
        }
        out.push(1.0);
    }
}

/// Lemma-1 weights for forest networks over the standard layout with `pairs`:
/// `(1 − deg)` on univariates and 1 on edge bivariates, signed by class, plus
/// the log prior ratio on the constant.
pub fn forest_oracle_weights(neg: &BnSpec, pos: &BnSpec, pairs: &[Pair], log_prior_ratio: f64) -> Result<Vec<f64>> {
    if !neg.is_forest() || !pos.is_forest() {
        return Err(Error::InvalidArgument("oracle weights need forest networks".into()));
    }
    let d = pos.d;
    let mut w = Vec::with_capacity(2 * (d + pairs.len()) + 1);
    for (spec, sign) in [(neg, -1.0), (pos, 1.0)] {
        let deg = spec.degrees();
        let edges = spec.edges();
        w.extend(deg.iter().map(|&k| sign * (1.0 - k as f64)));
        for p in pairs {
            w.push(if edges.binary_search(p).is_ok() { sign } else { 0.0 });
        }
    }
    w.push(log_prior_ratio);
    Ok(w)
}

/// Union of the two networks' undirected edges, sorted.
pub fn edge_union(a: &BnSpec, b: &BnSpec) -> Vec<Pair> {
    let mut e = a.edges();
    e.extend(b.edges());
    e.sort_unstable();
    e.dedup();
    e
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corr(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
        sxy / (sxx * syy).sqrt()
    }

    #[test]
    fn forest_density_extremes() {
        let mut r = Rng::new(1);
        let empty = random_forest_bn(10, 0.0, CpdFamily::Gaussian, &mut r).unwrap();
        assert!(empty.edges().is_empty());
        let tree = random_forest_bn(10, 1.0, CpdFamily::Gaussian, &mut r).unwrap();
        assert_eq!(tree.edges().len(), 9);
    }

    #[test]
    fn forests_are_acyclic_single_parent() {
        let mut r = Rng::new(2);
        for _ in 0..1000 {
            let s = random_forest_bn(8, 0.7, CpdFamily::Gaussian, &mut r).unwrap();
            assert!(s.is_forest());
            assert!(BnSpec::new(s.parents.clone(), s.family).is_ok());
            let pos: Vec<usize> = {
                let mut p = vec![0; s.d];
                for (k, &v) in s.order.iter().enumerate() {
                    p[v] = k;
                }
                p
            };
            for (i, ps) in s.parents.iter().enumerate() {
                assert!(ps.iter().all(|&q| pos[q] < pos[i]));
            }
        }
    }

    #[test]
    fn general_bn_has_three_parents() {
        let mut r = Rng::new(3);
        let s = random_general_bn(20, CpdFamily::Gaussian, &mut r).unwrap();
        let roots = s.parents.iter().filter(|p| p.is_empty()).count();
        assert_eq!(roots, 3);
        assert!(s.parents.iter().all(|p| p.is_empty() || p.len() == 3));
        assert!(BnSpec::new(s.parents.clone(), s.family).is_ok());
    }

    #[test]
    fn empty_graph_samples_are_independent_normals() {
        let s = BnSpec::new(vec![vec![]; 3], CpdFamily::Gaussian).unwrap();
        let x = s.sample(10_000, &mut Rng::new(4));
        for j in 0..3 {
            let c = x.column(j);
            let m = c.iter().sum::<f64>() / c.len() as f64;
            assert!(m.abs() < 0.03, "{m}");
        }
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            assert!(corr(&x.column(i), &x.column(j)).abs() < 0.05);
        }
    }

    #[test]
    fn single_edge_correlation() {
        let s = BnSpec::new(vec![vec![], vec![0]], CpdFamily::Gaussian).unwrap();
        let x = s.sample(100_000, &mut Rng::new(5));
        let r = corr(&x.column(0), &x.column(1));
        assert!((r - 0.5f64.sqrt()).abs() < 0.01, "{r}");
    }

    #[test]
    fn complex_root_is_standard_normal() {
        let s = BnSpec::new(vec![vec![], vec![0]], CpdFamily::Complex).unwrap();
        let x = s.sample(20_000, &mut Rng::new(6));
        let c = x.column(0);
        let m = c.iter().sum::<f64>() / c.len() as f64;
        let v = c.iter().map(|a| (a - m).powi(2)).sum::<f64>() / c.len() as f64;
        assert!(m.abs() < 0.05 && (v - 1.0).abs() < 0.05);
        assert!((s.log_cpd(0.3, &[]) - log_normal(0.3, 0.0, 1.0)).abs() < 1e-15);
    }

    #[test]
    fn complex_cpd_integrates_to_one() {
        let s = BnSpec::new(vec![vec![], vec![], vec![], vec![0, 1, 2]], CpdFamily::Complex).unwrap();
        let h = 1e-3;
        for parents in [vec![0.7], vec![0.2, -1.0, 2.0]] {
            let total: f64 = (-60_000..60_000).map(|k| s.log_cpd(k as f64 * h, &parents).exp() * h).sum();
            assert!((total - 1.0).abs() < 2e-3, "{total}");
        }
    }

    #[test]
    fn one_third_sharing_copies_floor_d_over_3() {
        let design = ExperimentDesign::new(Structure::General, CpdFamily::Gaussian, Balance::Balanced, Shared::OneThird, 200);
        for seed in 0..50 {
            let pair = class_pair(&design, &mut Rng::new(seed)).unwrap();
            assert_eq!(pair.copied.len(), 6);
            for &v in &pair.copied {
                assert!(!pair.pos.parents[v].is_empty());
                assert_eq!(pair.pos.parents[v], pair.neg.parents[v]);
            }
            // re-drawn nodes may coincide by chance, so this is only a lower bound
            assert!(shared_nodes(&pair.pos, &pair.neg).len() >= 6);
            assert!(pair.neg.parents.iter().all(|q| q.is_empty() || q.len() == 3));
            assert_eq!(pair.neg.parents.iter().filter(|q| q.is_empty()).count(), 3);
        }
        let design = ExperimentDesign {
            structure: Structure::Forest,
            ..design
        };
        let (p, n) = make_class_pair(&design, &mut Rng::new(8)).unwrap();
        assert!(n.is_forest() && BnSpec::new(n.parents.clone(), n.family).is_ok());
        let copied = (0..20).filter(|&i| !p.parents[i].is_empty() && p.parents[i] == n.parents[i]).count();
        assert!(copied >= 6.min(p.parents.iter().filter(|q| !q.is_empty()).count()));
    }

    #[test]
    fn independent_pairs_rarely_coincide() {
        let design = ExperimentDesign::new(Structure::General, CpdFamily::Gaussian, Balance::Balanced, Shared::None, 200);
        let same = (0..100)
            .filter(|&s| {
                let (p, n) = make_class_pair(&design, &mut Rng::new(s)).unwrap();
                p.parents == n.parents
            })
            .count();
        assert!(same < 5);
    }

    #[test]
    fn experiment_counts_and_determinism() {
        let design = ExperimentDesign::new(Structure::Forest, CpdFamily::Gaussian, Balance::Imbalanced, Shared::None, 200);
        let e = gen_experiment(&design, &Rng::new(9)).unwrap();
        assert_eq!(e.train.class_counts(), (50, 150));
        assert_eq!(e.test.class_counts(), (500, 500));
        let f = gen_experiment(&design, &Rng::new(9)).unwrap();
        assert_eq!(e.train, f.train);
        assert_eq!(e.test, f.test);
        assert_eq!(e.pos.roots_are_standard(), true);
    }

    impl BnSpec {
        fn roots_are_standard(&self) -> bool {
            (0..self.d).filter(|&i| self.parents[i].is_empty()).all(|i| {
                let mut x = vec![0.0; self.d];
                x[i] = 0.4;
                (self.log_cpd(0.4, &[]) - log_normal(0.4, 0.0, 1.0)).abs() < 1e-15
            })
        }
    }

    #[test]
    fn ringnorm_moments() {
        let ds = gen_ringnorm(3000, 3000, 20, &Rng::new(10)).unwrap();
        let neg = ds.class_features(Label::Neg);
        let pos = ds.class_features(Label::Pos);
        let a = 2.0 / 20f64.sqrt();
        for j in 0..20 {
            let c = neg.column(j);
            let m = c.iter().sum::<f64>() / 3000.0;
            assert!((m - a).abs() < 4.0 / 3000f64.sqrt(), "{m}");
            let c = pos.column(j);
            let v = c.iter().map(|x| x * x).sum::<f64>() / 3000.0;
            assert!((v - 4.0).abs() < 0.4, "{v}");
        }
        assert!(gen_ringnorm(10, 10, 19, &Rng::new(1)).is_err());
    }

    #[test]
    fn oracle_weights_reproduce_log_ratio() {
        let mut r = Rng::new(11);
        let pos = random_forest_bn(6, 0.8, CpdFamily::Gaussian, &mut r).unwrap();
        let neg = random_forest_bn(6, 0.8, CpdFamily::Gaussian, &mut r).unwrap();
        let pairs = edge_union(&pos, &neg);
        let map = OracleMap::new(&neg, &pos, &pairs).unwrap();
        let w = forest_oracle_weights(&neg, &pos, &pairs, 0.0).unwrap();
        let x = pos.sample(50, &mut r);
        for row in x.iter_rows() {
            let t = map.map_point(row).unwrap();
            let lin: f64 = w.iter().zip(&t).map(|(a, b)| a * b).sum();
            let direct = pos.log_density(row).unwrap() - neg.log_density(row).unwrap();
            assert!((lin - direct).abs() < 1e-8, "{lin} vs {direct}");
        }
    }
}
