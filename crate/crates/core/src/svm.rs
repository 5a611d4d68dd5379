//! Linear hinge-loss SVM over mapped features.
//!
//! Tikhonov form: minimize `(1/n) Σ max(0, 1 − y_ℓ wᵀt_ℓ) + λ‖w‖²`, the
//! intercept living in the weight of a constant feature (and regularized with
//! the rest). Ivanov form: minimize the empirical hinge risk subject to
//! `‖w‖₂ ≤ B`.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{Label, Matrix};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lambda: f64,
    pub max_epochs: usize,
    /// Relative duality-gap tolerance.
    pub tol: f64,
    pub seed: u64,
    /// Standardize non-constant feature columns before training; the transform
    /// is folded back into the weights through the constant-1 column.
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 0.5,
            max_epochs: 2000,
            tol: 1e-5,
            seed: 0,
            standardize: false,
        }
    }
}

impl TrainConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        TrainConfig {
            lambda,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", self.tol)));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidArgument("max_epochs must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regularization {
    Tikhonov { lambda: f64 },
    Ivanov { radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainDiagnostics {
    /// Tikhonov objective (or hinge risk for Ivanov) at the returned weights.
    pub objective: f64,
    pub hinge_risk: f64,
    pub epochs: usize,
    pub converged: bool,
    /// Relative duality gap at the last epoch (Tikhonov only).
    pub duality_gap: Option<f64>,
    /// Best objective seen after each epoch.
    #[serde(skip)]
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub regularization: Regularization,
    pub diagnostics: TrainDiagnostics,
}

impl LinearModel {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn decision_value(&self, t: &[f64]) -> Result<f64> {
        check_dim(self.weights.len(), t.len())?;
        Ok(dot(&self.weights, t))
    }

    /// Decision values for every row of `x`.
    pub fn decision_values(&self, x: &Matrix) -> Result<Vec<f64>> {
        check_dim(self.weights.len(), x.cols())?;
        Ok(x.iter_rows().map(|t| dot(&self.weights, t)).collect())
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Four interleaved partial sums so the loop vectorizes; the order is fixed.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn sq_norm(a: &[f64]) -> f64 {
    dot(a, a)
}

/// Sign of `wᵀt`; an exact zero maps to +1.
pub fn decide(model: &LinearModel, t: &[f64]) -> Result<Label> {
    Ok(Label::from_score(model.decision_value(t)?))
}

fn hinge_sum(w: &[f64], x: &Matrix, y: &[Label]) -> f64 {
    x.iter_rows()
        .zip(y)
        .map(|(t, l)| (1.0 - l.sign() * dot(w, t)).max(0.0))
        .sum()
}

/// Empirical hinge risk `(1/n) Σ max(0, 1 − y wᵀt)`.
pub fn hinge_risk(model: &LinearModel, x: &Matrix, y: &[Label]) -> Result<f64> {
    check_dim(model.weights.len(), x.cols())?;
    risk_of(&model.weights, x, y)
}

/// Hinge risk of raw weights.
pub fn risk_of(w: &[f64], x: &Matrix, y: &[Label]) -> Result<f64> {
    check_dim(w.len(), x.cols())?;
    check_dim(x.rows(), y.len())?;
    if y.is_empty() {
        return Err(Error::InsufficientSamples("hinge risk of an empty sample".into()));
    }
    Ok(hinge_sum(w, x, y) / y.len() as f64)
}

/// Empirical 0-1 risk of raw weights (ties classified +1).
pub fn zero_one_risk(w: &[f64], x: &Matrix, y: &[Label]) -> Result<f64> {
    check_dim(w.len(), x.cols())?;
    check_dim(x.rows(), y.len())?;
    let wrong = x
        .iter_rows()
        .zip(y)
        .filter(|(t, l)| Label::from_score(dot(w, t)) != **l)
        .count();
    Ok(wrong as f64 / y.len().max(1) as f64)
}

/// Tikhonov objective `(1/n) Σ hinge + λ‖w‖²`.
pub fn objective(w: &[f64], x: &Matrix, y: &[Label], lambda: f64) -> Result<f64> {
    Ok(risk_of(w, x, y)? + lambda * sq_norm(w))
}

fn validate_problem(x: &Matrix, y: &[Label]) -> Result<()> {
    check_dim(x.rows(), y.len())?;
    if x.rows() < 2 {
        return Err(Error::InsufficientSamples(format!(
            "SVM training needs at least 2 samples, got {}",
            x.rows()
        )));
    }
    if !(y.contains(&Label::Pos) && y.contains(&Label::Neg)) {
        return Err(Error::DegenerateLabels("SVM training needs both classes".into()));
    }
    if x.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite feature value in SVM input".into()));
    }
    Ok(())
}

/// Column transform for standardized training: `(t_j − m_j) / s_j` on
/// non-constant columns, identity on constant ones.
struct ColumnScaling {
    means: Vec<f64>,
    scales: Vec<f64>,
    /// Index and value of a constant non-zero column that absorbs the shift.
    anchor: (usize, f64),
}

impl ColumnScaling {
    fn fit(x: &Matrix) -> Result<ColumnScaling> {
        let n = x.rows() as f64;
        let mut means = vec![0.0; x.cols()];
        let mut scales = vec![1.0; x.cols()];
        let mut anchor = None;
        for j in 0..x.cols() {
            let col = x.column(j);
            let m = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            if var > 0.0 {
                means[j] = m;
                scales[j] = var.sqrt();
            } else if col[0] != 0.0 && anchor.is_none() {
                anchor = Some((j, col[0]));
            }
        }
        let anchor = anchor.ok_or_else(|| {
            Error::InvalidArgument("standardized SVM training needs a constant non-zero feature".into())
        })?;
        Ok(ColumnScaling { means, scales, anchor })
    }

    fn apply(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        for r in 0..out.rows() {
            for (j, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = (*v - self.means[j]) / self.scales[j];
            }
        }
        out
    }

    fn unfold(&self, w: &[f64]) -> Vec<f64> {
        let mut raw: Vec<f64> = w.iter().zip(&self.scales).map(|(w, s)| w / s).collect();
        let shift: f64 = raw.iter().zip(&self.means).map(|(w, m)| w * m).sum();
        raw[self.anchor.0] -= shift / self.anchor.1;
        raw
    }
}

/// Minimize the Tikhonov objective by dual coordinate descent.
///
/// Stops when the relative duality gap falls below `cfg.tol` or after
/// `cfg.max_epochs` passes. The returned weights are the best primal iterate
/// seen at an epoch boundary, so the recorded trace is non-increasing.
pub fn train_hinge(x: &Matrix, y: &[Label], cfg: &TrainConfig) -> Result<LinearModel> {
    cfg.validate()?;
    validate_problem(x, y)?;
    if cfg.standardize {
        let scaling = ColumnScaling::fit(x)?;
        let xs = scaling.apply(x);
        let mut model = dual_cd(&xs, y, cfg);
        model.weights = scaling.unfold(&model.weights);
        model.diagnostics.hinge_risk = risk_of(&model.weights, x, y)?;
        return Ok(model);
    }
    Ok(dual_cd(x, y, cfg))
}

fn dual_cd(x: &Matrix, y: &[Label], cfg: &TrainConfig) -> LinearModel {
    let (n, p) = (x.rows(), x.cols());
    let lambda = cfg.lambda;
    let c = 1.0 / (2.0 * lambda * n as f64);
    let q: Vec<f64> = x.iter_rows().map(sq_norm).collect();
    let ys: Vec<f64> = y.iter().map(|l| l.sign()).collect();
    let primal = |w: &[f64]| hinge_sum(w, x, y) / n as f64 + lambda * sq_norm(w);

    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; p];
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = Rng::new(cfg.seed);
    let mut best_w = w.clone();
    let mut best = primal(&w);
    let mut trace = vec![best];
    let mut converged = false;
    let mut gap = None;
    let mut epochs = 0;

    for _ in 0..cfg.max_epochs {
        epochs += 1;
        order.shuffle(&mut rng);
        for &i in &order {
            if q[i] == 0.0 {
                continue;
            }
            let t = x.row(i);
            let g = ys[i] * dot(&w, t) - 1.0;
            let pg = if alpha[i] <= 0.0 {
                g.min(0.0)
            } else if alpha[i] >= c {
                g.max(0.0)
            } else {
                g
            };
            if pg == 0.0 {
                continue;
            }
            let next = (alpha[i] - g / q[i]).clamp(0.0, c);
            let step = (next - alpha[i]) * ys[i];
            alpha[i] = next;
            if step != 0.0 {
                for (wk, tk) in w.iter_mut().zip(t) {
                    *wk += step * tk;
                }
            }
        }
        let p_val = primal(&w);
        // Dual of the rescaled problem, mapped back to the objective's units.
        let d_val = 2.0 * lambda * (alpha.iter().sum::<f64>() - 0.5 * sq_norm(&w));
        if p_val < best {
            best = p_val;
            best_w.clone_from(&w);
        }
        trace.push(best);
        let rel = (best - d_val).max(0.0) / best.abs().max(f64::MIN_POSITIVE);
        gap = Some(rel);
        if rel <= cfg.tol {
            converged = true;
            break;
        }
    }
    let hinge = hinge_sum(&best_w, x, y) / n as f64;
    LinearModel {
        regularization: Regularization::Tikhonov { lambda },
        diagnostics: TrainDiagnostics {
            objective: hinge + lambda * sq_norm(&best_w),
            hinge_risk: hinge,
            epochs,
            converged,
            duality_gap: gap,
            trace,
        },
        weights: best_w,
    }
}

fn smoothed_hinge(m: f64, mu: f64) -> (f64, f64) {
    if m >= 1.0 {
        (0.0, 0.0)
    } else if m <= 1.0 - mu {
        (1.0 - m - 0.5 * mu, -1.0)
    } else {
        let r = 1.0 - m;
        (r * r / (2.0 * mu), -r / mu)
    }
}

fn project_ball(w: &mut [f64], radius: f64) {
    let norm = sq_norm(w).sqrt();
    if norm > radius {
        let s = radius / norm;
        for v in w.iter_mut() {
            *v *= s;
        }
    }
}

/// Largest eigenvalue of `XᵀX / n` by power iteration.
fn gram_spectral_bound(x: &Matrix) -> f64 {
    let p = x.cols();
    let mut v = vec![1.0 / (p as f64).sqrt(); p];
    let mut est = 0.0;
    for _ in 0..50 {
        let mut u = vec![0.0; p];
        for t in x.iter_rows() {
            let a = dot(t, &v);
            for (uk, tk) in u.iter_mut().zip(t) {
                *uk += a * tk;
            }
        }
        let norm = sq_norm(&u).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        est = norm / x.rows() as f64;
        for (vk, uk) in v.iter_mut().zip(&u) {
            *vk = uk / norm;
        }
    }
    est
}

/// Minimize the empirical hinge risk subject to `‖w‖₂ ≤ radius`.
///
/// Accelerated projected gradient on a smoothed hinge with a decreasing
/// smoothing schedule; the returned iterate is the feasible point with the
/// smallest exact hinge risk among those visited.
pub fn train_hinge_ivanov(x: &Matrix, y: &[Label], radius: f64, cfg: &TrainConfig) -> Result<LinearModel> {
    cfg.validate()?;
    validate_problem(x, y)?;
    if !(radius >= 0.0 && radius.is_finite()) {
        return Err(Error::InvalidArgument(format!("radius must be non-negative, got {radius}")));
    }
    let (n, p) = (x.rows(), x.cols());
    let ys: Vec<f64> = y.iter().map(|l| l.sign()).collect();
    let true_risk = |w: &[f64]| hinge_sum(w, x, y) / n as f64;
    let mut best_w = vec![0.0; p];
    let mut best = true_risk(&best_w);
    let mut trace = vec![best];
    if radius == 0.0 {
        return Ok(ivanov_model(best_w, best, radius, 0, trace));
    }
    let smooth = |w: &[f64], mu: f64, grad: &mut Vec<f64>| -> f64 {
        grad.clear();
        grad.resize(p, 0.0);
        let mut f = 0.0;
        for (t, &yi) in x.iter_rows().zip(&ys) {
            let (h, dh) = smoothed_hinge(yi * dot(w, t), mu);
            f += h;
            if dh != 0.0 {
                for (gk, tk) in grad.iter_mut().zip(t) {
                    *gk += dh * yi * tk;
                }
            }
        }
        for g in grad.iter_mut() {
            *g /= n as f64;
        }
        f / n as f64
    };
    let spectral = gram_spectral_bound(x).max(1e-300);
    let mut w = best_w.clone();
    let mut grad = Vec::new();
    let mut iters = 0;
    for mu in [1e-2, 1e-3, 1e-4, 1e-5] {
        let mut lip = spectral / mu;
        let mut z = w.clone();
        let mut tk: f64 = 1.0;
        for _ in 0..cfg.max_epochs {
            iters += 1;
            let fz = smooth(&z, mu, &mut grad);
            let mut next;
            loop {
                next = z.iter().zip(&grad).map(|(a, g)| a - g / lip).collect::<Vec<f64>>();
                project_ball(&mut next, radius);
                let diff: Vec<f64> = next.iter().zip(&z).map(|(a, b)| a - b).collect();
                let mut scratch = Vec::new();
                let fnext = smooth(&next, mu, &mut scratch);
                if fnext <= fz + dot(&grad, &diff) + 0.5 * lip * sq_norm(&diff) + 1e-15 {
                    break;
                }
                lip *= 2.0;
            }
            let risk = true_risk(&next);
            if risk < best {
                best = risk;
                best_w.clone_from(&next);
            }
            trace.push(best);
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * tk * tk).sqrt());
            let momentum = (tk - 1.0) / t_next;
            let moved: f64 = next.iter().zip(&w).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            z = next.iter().zip(&w).map(|(a, b)| a + momentum * (a - b)).collect();
            w = next;
            tk = t_next;
            if moved <= 1e-12 * radius.max(1.0) {
                break;
            }
        }
        w.clone_from(&best_w);
    }
    Ok(ivanov_model(best_w, best, radius, iters, trace))
}

fn ivanov_model(weights: Vec<f64>, risk: f64, radius: f64, epochs: usize, trace: Vec<f64>) -> LinearModel {
    LinearModel {
        weights,
        regularization: Regularization::Ivanov { radius },
        diagnostics: TrainDiagnostics {
            objective: risk,
            hinge_risk: risk,
            epochs,
            converged: true,
            duality_gap: None,
            trace,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;
    use rand_distr::StandardNormal;

    fn labels(v: &[i32]) -> Vec<Label> {
        v.iter().map(|&s| Label::from_i32(s).unwrap()).collect()
    }

    fn separable() -> (Matrix, Vec<Label>) {
        let x = Matrix::from_rows(&[vec![-2.0, 1.0], vec![-1.0, 1.0], vec![1.0, 1.0], vec![2.0, 1.0]]).unwrap();
        (x, labels(&[-1, -1, 1, 1]))
    }

    fn random_problem(n: usize, p: usize, seed: u64) -> (Matrix, Vec<Label>) {
        let mut r = Rng::new(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for k in 0..n {
            let l = if k % 2 == 0 { Label::Pos } else { Label::Neg };
            let mut row: Vec<f64> = (0..p - 1).map(|_| r.sample::<f64, _>(StandardNormal) + 0.4 * l.sign()).collect();
            row.push(1.0);
            rows.push(row);
            y.push(l);
        }
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn separable_toy_small_lambda() {
        let (x, y) = separable();
        let m = train_hinge(&x, &y, &TrainConfig::with_lambda(1e-4)).unwrap();
        assert_eq!(zero_one_risk(&m.weights, &x, &y).unwrap(), 0.0);
        assert!(hinge_risk(&m, &x, &y).unwrap() < 0.05);
    }

    #[test]
    fn uninformative_features_give_zero_weights() {
        let x = Matrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 1.0], vec![0.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let y = labels(&[1, -1, 1, -1]);
        let m = train_hinge(&x, &y, &TrainConfig::default()).unwrap();
        assert!(m.weights.iter().all(|w| w.abs() < 1e-9));
        assert!((m.diagnostics.objective - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_input() {
        let (x, _) = separable();
        let y = labels(&[1, 1, 1, 1]);
        assert!(matches!(train_hinge(&x, &y, &TrainConfig::default()), Err(Error::DegenerateLabels(_))));
        let mut bad = x.clone();
        bad.set(0, 0, f64::NAN);
        assert!(train_hinge(&bad, &labels(&[-1, -1, 1, 1]), &TrainConfig::default()).is_err());
        assert!(train_hinge(&x, &labels(&[-1, -1, 1, 1]), &TrainConfig::with_lambda(0.0)).is_err());
    }

    #[test]
    fn stored_objective_matches_recomputed() {
        let (x, y) = random_problem(40, 6, 3);
        let m = train_hinge(&x, &y, &TrainConfig::default()).unwrap();
        let o = objective(&m.weights, &x, &y, 0.5).unwrap();
        assert!((o - m.diagnostics.objective).abs() <= 1e-8 * o);
        assert!(m.diagnostics.converged);
        assert!(m.diagnostics.trace.windows(2).all(|w| w[1] <= w[0] + 1e-10));
    }

    #[test]
    fn deterministic_given_seed() {
        let (x, y) = random_problem(30, 5, 4);
        let a = train_hinge(&x, &y, &TrainConfig::default()).unwrap();
        let b = train_hinge(&x, &y, &TrainConfig::default()).unwrap();
        assert_eq!(a.weights, b.weights);
    }

    #[test]
    fn decide_rules() {
        let m = LinearModel {
            weights: vec![0.0, 0.0, -5.0],
            regularization: Regularization::Tikhonov { lambda: 0.5 },
            diagnostics: TrainDiagnostics::default(),
        };
        assert_eq!(decide(&m, &[3.0, 4.0, 1.0]).unwrap(), Label::Neg);
        let zero = LinearModel {
            weights: vec![0.0; 3],
            ..m.clone()
        };
        assert_eq!(decide(&zero, &[3.0, 4.0, 1.0]).unwrap(), Label::Pos);
        assert!(decide(&m, &[1.0]).is_err());
    }

    #[test]
    fn hinge_risk_of_zero_is_one() {
        let (x, y) = random_problem(10, 3, 5);
        assert_eq!(risk_of(&[0.0; 3], &x, &y).unwrap(), 1.0);
    }

    #[test]
    fn standardized_training_keeps_raw_scale_weights() {
        let (x, y) = random_problem(40, 4, 6);
        let cfg = TrainConfig {
            standardize: true,
            ..Default::default()
        };
        let m = train_hinge(&x, &y, &cfg).unwrap();
        let scaling = ColumnScaling::fit(&x).unwrap();
        let xs = scaling.apply(&x);
        let inner = dual_cd(&xs, &y, &cfg);
        for r in 0..x.rows() {
            let a = dot(&m.weights, x.row(r));
            let b = dot(&inner.weights, xs.row(r));
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn ivanov_degenerate_and_inactive() {
        let (x, y) = separable();
        let m = train_hinge_ivanov(&x, &y, 0.0, &TrainConfig::default()).unwrap();
        assert!(m.weights.iter().all(|&w| w == 0.0));
        assert_eq!(m.diagnostics.hinge_risk, 1.0);
        let big = train_hinge_ivanov(&x, &y, 1e6, &TrainConfig::default()).unwrap();
        assert_eq!(zero_one_risk(&big.weights, &x, &y).unwrap(), 0.0);
        assert!(big.diagnostics.hinge_risk < 1e-3);
    }

    #[test]
    fn ivanov_respects_radius() {
        let (x, y) = random_problem(30, 5, 7);
        for b in [0.1, 0.5, 2.0] {
            let m = train_hinge_ivanov(&x, &y, b, &TrainConfig::default()).unwrap();
            assert!(sq_norm(&m.weights).sqrt() <= b + 1e-9);
        }
    }
}
