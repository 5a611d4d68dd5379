//! Empirical Hilbert-Schmidt independence criterion for pairs of scalar variables.
//!
//! The statistic is the biased estimator `(n-1)^-2 Tr(K H L H)` with Gaussian
//! Gram matrices `K`, `L` and centering matrix `H = I - n^-1 1 1ᵀ`. Because
//! `H` is idempotent this equals `(n-1)^-2 Σ_ab (HKH)_ab (HLH)_ab`, so callers
//! that test many pairs can center each Gram matrix once ([`CenteredGram`]) and
//! pay `O(n²)` per pair.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

pub const MIN_SAMPLES: usize = 4;
pub const MIN_PERMUTATIONS: usize = 19;

/// Gaussian kernel `k(a, b) = exp(-(a-b)² / (2σ²))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct KernelSpec {
    /// `None` selects σ by the median heuristic.
    pub bandwidth: Option<f64>,
}

impl KernelSpec {
    pub fn median() -> Self {
        KernelSpec { bandwidth: None }
    }

    pub fn fixed(sigma: f64) -> Self {
        KernelSpec {
            bandwidth: Some(sigma),
        }
    }

    /// σ for `values`. A constant sample under the median heuristic gets σ = 1;
    /// its Gram matrix is all ones either way and centers to zero.
    pub fn resolve(&self, values: &[f64]) -> Result<f64> {
        match self.bandwidth {
            Some(s) if s > 0.0 && s.is_finite() => Ok(s),
            Some(s) => Err(Error::InvalidArgument(format!(
                "kernel bandwidth must be positive, got {s}"
            ))),
            None => match median_heuristic(values) {
                Ok(s) => Ok(s),
                Err(Error::DegenerateFeature { .. }) => Ok(1.0),
                Err(e) => Err(e),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HsicResult {
    pub statistic: f64,
    pub n: usize,
    pub p_value: Option<f64>,
}

/// Median of the non-zero pairwise absolute differences.
pub fn median_heuristic(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::InsufficientSamples(
            "median heuristic needs at least 2 values".into(),
        ));
    }
    let mut diffs = Vec::with_capacity(values.len() * (values.len() - 1) / 2);
    for (i, &a) in values.iter().enumerate() {
        for &b in &values[i + 1..] {
            let d = (a - b).abs();
            if d > 0.0 {
                diffs.push(d);
            }
        }
    }
    if diffs.is_empty() {
        return Err(Error::DegenerateFeature {
            name: "values".into(),
            reason: "all values identical; median heuristic undefined".into(),
        });
    }
    let m = diffs.len();
    let cmp = |a: &f64, b: &f64| a.total_cmp(b);
    if m % 2 == 1 {
        Ok(*diffs.select_nth_unstable_by(m / 2, cmp).1)
    } else {
        let (lower, hi, _) = diffs.select_nth_unstable_by(m / 2, cmp);
        let hi = *hi;
        let lo = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(0.5 * (lo + hi))
    }
}

/// Doubly centered Gram matrix `HKH` of one variable.
#[derive(Debug, Clone)]
pub struct CenteredGram {
    n: usize,
    data: Vec<f64>,
}

impl CenteredGram {
    pub fn new(values: &[f64], kernel: &KernelSpec) -> Result<Self> {
        let sigma = kernel.resolve(values)?;
        Ok(Self::with_sigma(values, sigma))
    }

    pub fn with_sigma(values: &[f64], sigma: f64) -> Self {
        let n = values.len();
        let c = -0.5 / (sigma * sigma);
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
            for j in (i + 1)..n {
                let d = values[i] - values[j];
                let k = (c * d * d).exp();
                data[i * n + j] = k;
                data[j * n + i] = k;
            }
        }
        let row_means: Vec<f64> = (0..n)
            .map(|i| data[i * n..(i + 1) * n].iter().sum::<f64>() / n as f64)
            .collect();
        let grand = row_means.iter().sum::<f64>() / n as f64;
        // K is symmetric, so column means equal row means.
        for i in 0..n {
            for j in 0..n {
                data[i * n + j] += grand - row_means[i] - row_means[j];
            }
        }
        CenteredGram { n, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `(n-1)^-2 Σ_ab self_ab other_ab`.
    pub fn hsic(&self, other: &CenteredGram) -> f64 {
        crate::svm::dot(&self.data, &other.data) / ((self.n - 1) as f64).powi(2)
    }

    /// Statistic with `other` relabeled by `perm` (`other_{perm[a], perm[b]}`).
    pub fn hsic_permuted(&self, other: &CenteredGram, perm: &[usize]) -> f64 {
        let n = self.n;
        let mut s = 0.0;
        for a in 0..n {
            let row = &self.data[a * n..(a + 1) * n];
            let orow = &other.data[perm[a] * n..(perm[a] + 1) * n];
            s += row
                .iter()
                .zip(perm)
                .map(|(k, &pb)| k * orow[pb])
                .sum::<f64>();
        }
        s / ((n - 1) as f64).powi(2)
    }
}

fn check_inputs(z: &[f64], w: &[f64]) -> Result<()> {
    if z.len() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: z.len(),
            got: w.len(),
        });
    }
    if z.len() < MIN_SAMPLES {
        return Err(Error::InsufficientSamples(format!(
            "HSIC needs at least {MIN_SAMPLES} samples, got {}",
            z.len()
        )));
    }
    if z.iter().chain(w).any(|v| !v.is_finite()) {
        return Err(Error::Data("HSIC inputs must be finite".into()));
    }
    Ok(())
}

pub fn hsic_statistic(z: &[f64], w: &[f64], kz: &KernelSpec, kw: &KernelSpec) -> Result<HsicResult> {
    check_inputs(z, w)?;
    let gz = CenteredGram::new(z, kz)?;
    let gw = CenteredGram::new(w, kw)?;
    Ok(HsicResult {
        statistic: gz.hsic(&gw),
        n: z.len(),
        p_value: None,
    })
}

/// Add-one permutation p-value from pre-centered Grams; `w` is permuted, `z` fixed.
///
/// Permutation `b` draws from `rng.derive(b)`, so the result does not depend on
/// how the permutations are scheduled across threads.
pub fn permutation_pvalue_grams(gz: &CenteredGram, gw: &CenteredGram, permutations: usize, rng: &Rng) -> Result<f64> {
    if permutations < MIN_PERMUTATIONS {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_PERMUTATIONS} permutations, got {permutations}"
        )));
    }
    let observed = gz.hsic(gw);
    let n = gz.n();
    let exceed: usize = (0..permutations)
        .into_par_iter()
        .map(|b| {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng.derive(b as u64));
            usize::from(gz.hsic_permuted(gw, &perm) >= observed)
        })
        .sum();
    Ok((1 + exceed) as f64 / (permutations + 1) as f64)
}

pub fn hsic_permutation_pvalue(
    z: &[f64],
    w: &[f64],
    kz: &KernelSpec,
    kw: &KernelSpec,
    permutations: usize,
    rng: &Rng,
) -> Result<HsicResult> {
    check_inputs(z, w)?;
    let gz = CenteredGram::new(z, kz)?;
    let gw = CenteredGram::new(w, kw)?;
    let p = permutation_pvalue_grams(&gz, &gw, permutations, rng)?;
    Ok(HsicResult {
        statistic: gz.hsic(&gw),
        n: z.len(),
        p_value: Some(p),
    })
}
