//! Gaussian kernel density estimation in one and two dimensions.
//!
//! Estimates are evaluated through a clamp `[floor, ceiling]` before taking
//! logs, so [`LogDensity::log_eval`] is finite everywhere. The raw (unclamped)
//! estimate is available through [`LogDensity::density`] and integrates to one.
//!
//! Default bandwidths:
//! * 1D: Silverman's rule `h = 1.06 σ̂ n^(-1/5)`.
//! * 2D: Scott's rule per coordinate, `h_k = σ̂_k n^(-1/6)`, diagonal bandwidth matrix.
//!
//! `σ̂` is the sample standard deviation (divisor `n - 1`).

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    /// Silverman (1D) or Scott (2D) rule of thumb.
    Rule,
    Fixed(f64),
}

/// Bounds applied to density values before the log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Clamp {
    pub floor: f64,
    pub ceiling: Option<f64>,
}

impl Default for Clamp {
    fn default() -> Self {
        Clamp {
            floor: 1e-10,
            ceiling: None,
        }
    }
}

impl Clamp {
    pub fn new(floor: f64, ceiling: Option<f64>) -> Result<Clamp> {
        if !(floor > 0.0 && floor.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "clamp floor must be positive and finite, got {floor}"
            )));
        }
        if let Some(c) = ceiling {
            if !(c >= floor && c.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "clamp ceiling {c} must be finite and >= floor {floor}"
                )));
            }
        }
        Ok(Clamp { floor, ceiling })
    }

    pub fn apply(&self, p: f64) -> f64 {
        // NaN cannot arise from kernel sums, but max() also maps it to the floor.
        let p = p.max(self.floor);
        match self.ceiling {
            Some(c) => p.min(c),
            None => p,
        }
    }
}

/// Density settings shared by every estimate in a feature map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityConfig {
    pub bandwidth: Bandwidth,
    pub clamp: Clamp,
}

impl Default for DensityConfig {
    fn default() -> Self {
        DensityConfig {
            bandwidth: Bandwidth::Rule,
            clamp: Clamp::default(),
        }
    }
}

pub trait LogDensity {
    fn dim(&self) -> usize;
    /// Unclamped estimate at `x` (`x.len() == dim()`).
    fn density(&self, x: &[f64]) -> f64;
    fn clamp(&self) -> Clamp;

    fn log_eval(&self, x: &[f64]) -> f64 {
        self.clamp().apply(self.density(x)).ln()
    }
}

pub(crate) fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (ss / (n - 1.0)).sqrt()
}

pub fn silverman_bandwidth(sd: f64, n: usize) -> f64 {
    1.06 * sd * (n as f64).powf(-0.2)
}

pub fn scott_bandwidth_2d(sd: f64, n: usize) -> f64 {
    sd * (n as f64).powf(-1.0 / 6.0)
}

fn check_fixed(h: f64) -> Result<f64> {
    if h > 0.0 && h.is_finite() {
        Ok(h)
    } else {
        Err(Error::InvalidArgument(format!(
            "bandwidth must be positive and finite, got {h}"
        )))
    }
}

fn rule_sd(values: &[f64], what: &str) -> Result<f64> {
    let sd = sample_sd(values);
    if sd > 0.0 && sd.is_finite() {
        Ok(sd)
    } else {
        Err(Error::DegenerateFeature {
            name: what.to_string(),
            reason: "zero sample standard deviation; rule-based bandwidth undefined".into(),
        })
    }
}

/// Univariate Gaussian KDE.
#[derive(Debug, Clone, PartialEq)]
pub struct Kde1d {
    points: Arc<[f64]>,
    bandwidth: f64,
    clamp: Clamp,
}

impl Kde1d {
    /// Share an existing column of points.
    pub fn from_shared(points: Arc<[f64]>, bandwidth: Bandwidth, clamp: Clamp) -> Result<Kde1d> {
        if points.len() < 2 {
            return Err(Error::InsufficientSamples(format!(
                "KDE needs at least 2 points, got {}",
                points.len()
            )));
        }
        let h = match bandwidth {
            Bandwidth::Fixed(h) => check_fixed(h)?,
            Bandwidth::Rule => silverman_bandwidth(rule_sd(&points, "values")?, points.len()),
        };
        Ok(Kde1d {
            points,
            bandwidth: h,
            clamp,
        })
    }

    pub fn points(&self) -> &Arc<[f64]> {
        &self.points
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn eval(&self, x: f64) -> f64 {
        let inv_h = 1.0 / self.bandwidth;
        let s: f64 = self
            .points
            .iter()
            .map(|&p| {
                let z = (x - p) * inv_h;
                (-0.5 * z * z).exp()
            })
            .sum();
        s * INV_SQRT_2PI * inv_h / self.points.len() as f64
    }
}

pub fn fit_kde1d(values: &[f64], bandwidth: Bandwidth, clamp: Clamp) -> Result<Kde1d> {
    Kde1d::from_shared(Arc::from(values), bandwidth, clamp)
}

impl LogDensity for Kde1d {
    fn dim(&self) -> usize {
        1
    }
    fn density(&self, x: &[f64]) -> f64 {
        self.eval(x[0])
    }
    fn clamp(&self) -> Clamp {
        self.clamp
    }
}

/// Bivariate Gaussian KDE with a diagonal bandwidth matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Kde2d {
    u: Arc<[f64]>,
    v: Arc<[f64]>,
    bandwidths: (f64, f64),
    clamp: Clamp,
}

impl Kde2d {
    pub fn from_shared(u: Arc<[f64]>, v: Arc<[f64]>, bandwidth: (Bandwidth, Bandwidth), clamp: Clamp) -> Result<Kde2d> {
        if u.len() != v.len() {
            return Err(Error::DimensionMismatch {
                expected: u.len(),
                got: v.len(),
            });
        }
        if u.len() < 2 {
            return Err(Error::InsufficientSamples(format!(
                "KDE needs at least 2 points, got {}",
                u.len()
            )));
        }
        let pick = |b: Bandwidth, col: &[f64], what: &str| -> Result<f64> {
            match b {
                Bandwidth::Fixed(h) => check_fixed(h),
                Bandwidth::Rule => Ok(scott_bandwidth_2d(rule_sd(col, what)?, col.len())),
            }
        };
        let hu = pick(bandwidth.0, &u, "first coordinate")?;
        let hv = pick(bandwidth.1, &v, "second coordinate")?;
        Ok(Kde2d {
            u,
            v,
            bandwidths: (hu, hv),
            clamp,
        })
    }

    pub fn u(&self) -> &Arc<[f64]> {
        &self.u
    }

    pub fn v(&self) -> &Arc<[f64]> {
        &self.v
    }

    pub fn bandwidths(&self) -> (f64, f64) {
        self.bandwidths
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// Normalizing constant `1 / (n 2π h_u h_v)`.
    pub(crate) fn norm(&self) -> f64 {
        1.0 / (self.u.len() as f64 * 2.0 * PI * self.bandwidths.0 * self.bandwidths.1)
    }

    pub fn eval(&self, a: f64, b: f64) -> f64 {
        let (iu, iv) = (1.0 / self.bandwidths.0, 1.0 / self.bandwidths.1);
        let s: f64 = self
            .u
            .iter()
            .zip(self.v.iter())
            .map(|(&p, &q)| {
                let zu = (a - p) * iu;
                let zv = (b - q) * iv;
                (-0.5 * (zu * zu + zv * zv)).exp()
            })
            .sum();
        s * self.norm()
    }
}

pub fn fit_kde2d(pairs: &[(f64, f64)], bandwidth: Bandwidth, clamp: Clamp) -> Result<Kde2d> {
    let u: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let v: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    Kde2d::from_shared(u.into(), v.into(), (bandwidth, bandwidth), clamp)
}

impl LogDensity for Kde2d {
    fn dim(&self) -> usize {
        2
    }
    fn density(&self, x: &[f64]) -> f64 {
        self.eval(x[0], x[1])
    }
    fn clamp(&self) -> Clamp {
        self.clamp
    }
}

/// Resolution and extent of a [`GridKde`] table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Nodes per axis (>= 2).
    pub nodes: usize,
    /// Grid extends this many bandwidths beyond the data range.
    pub margin_bandwidths: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            nodes: 256,
            margin_bandwidths: 3.0,
        }
    }
}

/// Tabulated log-density with linear (1D) or bilinear (2D) interpolation.
///
/// Points outside the grid evaluate to the clamp floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridKde {
    lo: Vec<f64>,
    hi: Vec<f64>,
    nodes: usize,
    clamp: Clamp,
    /// Row-major over axes (first axis slowest); log of the clamped estimate.
    table: Vec<f64>,
}

fn range(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)))
}

impl GridKde {
    fn axis(values: &[f64], h: f64, spec: &GridSpec) -> (f64, f64) {
        let (a, b) = range(values);
        (a - spec.margin_bandwidths * h, b + spec.margin_bandwidths * h)
    }

    fn check(spec: &GridSpec) -> Result<()> {
        if spec.nodes < 2 || !(spec.margin_bandwidths >= 0.0) {
            return Err(Error::InvalidArgument(format!("invalid grid spec {spec:?}")));
        }
        Ok(())
    }

    pub fn node(&self, axis: usize, k: usize) -> f64 {
        let step = (self.hi[axis] - self.lo[axis]) / (self.nodes - 1) as f64;
        if k + 1 == self.nodes {
            self.hi[axis]
        } else {
            self.lo[axis] + k as f64 * step
        }
    }

    pub fn from_kde1d(kde: &Kde1d, spec: GridSpec) -> Result<GridKde> {
        Self::check(&spec)?;
        let (lo, hi) = Self::axis(kde.points(), kde.bandwidth(), &spec);
        let mut g = GridKde {
            lo: vec![lo],
            hi: vec![hi],
            nodes: spec.nodes,
            clamp: kde.clamp,
            table: Vec::with_capacity(spec.nodes),
        };
        for k in 0..spec.nodes {
            let x = g.node(0, k);
            g.table.push(kde.log_eval(&[x]));
        }
        Ok(g)
    }

    pub fn from_kde2d(kde: &Kde2d, spec: GridSpec) -> Result<GridKde> {
        Self::check(&spec)?;
        let (hu, hv) = kde.bandwidths();
        let (lu, uu) = Self::axis(kde.u(), hu, &spec);
        let (lv, uv) = Self::axis(kde.v(), hv, &spec);
        let mut g = GridKde {
            lo: vec![lu, lv],
            hi: vec![uu, uv],
            nodes: spec.nodes,
            clamp: kde.clamp,
            table: Vec::with_capacity(spec.nodes * spec.nodes),
        };
        for a in 0..spec.nodes {
            let x = g.node(0, a);
            for b in 0..spec.nodes {
                let y = g.node(1, b);
                g.table.push(kde.log_eval(&[x, y]));
            }
        }
        Ok(g)
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    /// Cell index and interpolation weight along `axis`, or `None` outside the grid.
    fn locate(&self, axis: usize, x: f64) -> Option<(usize, f64)> {
        let (lo, hi) = (self.lo[axis], self.hi[axis]);
        if !(x >= lo && x <= hi) {
            return None;
        }
        let t = (x - lo) / (hi - lo) * (self.nodes - 1) as f64;
        let k = (t.floor() as usize).min(self.nodes - 2);
        Some((k, (t - k as f64).clamp(0.0, 1.0)))
    }

    pub fn log_eval_grid(&self, x: &[f64]) -> f64 {
        let floor = self.clamp.floor.ln();
        match self.lo.len() {
            1 => match self.locate(0, x[0]) {
                None => floor,
                Some((k, t)) => {
                    let (a, b) = (self.table[k], self.table[k + 1]);
                    if t == 0.0 {
                        a
                    } else if t == 1.0 {
                        b
                    } else {
                        a + t * (b - a)
                    }
                }
            },
            _ => match (self.locate(0, x[0]), self.locate(1, x[1])) {
                (Some((i, s)), Some((j, t))) => {
                    let n = self.nodes;
                    let at = |a: usize, b: usize| self.table[a * n + b];
                    let f00 = at(i, j);
                    let f01 = at(i, j + 1);
                    let f10 = at(i + 1, j);
                    let f11 = at(i + 1, j + 1);
                    let lerp = |a: f64, b: f64, w: f64| {
                        if w == 0.0 {
                            a
                        } else if w == 1.0 {
                            b
                        } else {
                            a + w * (b - a)
                        }
                    };
                    lerp(lerp(f00, f01, t), lerp(f10, f11, t), s)
                }
                _ => floor,
            },
        }
    }
}

impl LogDensity for GridKde {
    fn dim(&self) -> usize {
        self.lo.len()
    }
    fn density(&self, x: &[f64]) -> f64 {
        self.log_eval_grid(x).exp()
    }
    fn clamp(&self) -> Clamp {
        self.clamp
    }
    fn log_eval(&self, x: &[f64]) -> f64 {
        self.log_eval_grid(x)
    }
}

/// Any of the estimators, for storage in feature maps.
#[derive(Debug, Clone, PartialEq)]
pub enum Density {
    Kde1(Kde1d),
    Kde2(Kde2d),
    Grid(GridKde),
}

impl LogDensity for Density {
    fn dim(&self) -> usize {
        match self {
            Density::Kde1(k) => k.dim(),
            Density::Kde2(k) => k.dim(),
            Density::Grid(g) => g.dim(),
        }
    }
    fn density(&self, x: &[f64]) -> f64 {
        match self {
            Density::Kde1(k) => k.density(x),
            Density::Kde2(k) => k.density(x),
            Density::Grid(g) => g.density(x),
        }
    }
    fn clamp(&self) -> Clamp {
        match self {
            Density::Kde1(k) => k.clamp,
            Density::Kde2(k) => k.clamp,
            Density::Grid(g) => g.clamp,
        }
    }
    fn log_eval(&self, x: &[f64]) -> f64 {
        match self {
            Density::Kde1(k) => k.log_eval(x),
            Density::Kde2(k) => k.log_eval(x),
            Density::Grid(g) => g.log_eval(x),
        }
    }
}

/// `max |p̂(x) − p(x)|` over `grid`, using the unclamped estimate.
pub fn sup_error<D, F>(kde: &D, truth: F, grid: &[Vec<f64>]) -> Result<f64>
where
    D: LogDensity + ?Sized,
    F: Fn(&[f64]) -> f64,
{
    if grid.is_empty() {
        return Err(Error::InvalidArgument("sup_error needs a non-empty grid".into()));
    }
    Ok(grid
        .iter()
        .map(|x| (kde.density(x) - truth(x)).abs())
        .fold(0.0, f64::max))
}
