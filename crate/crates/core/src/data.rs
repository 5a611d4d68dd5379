//! Datasets, CSV ingestion, stratified fold assignment and standardization.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Binary class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "-1")]
    Neg,
    #[serde(rename = "+1")]
    Pos,
}

impl Label {
    pub const BOTH: [Label; 2] = [Label::Neg, Label::Pos];

    pub fn sign(self) -> f64 {
        match self {
            Label::Neg => -1.0,
            Label::Pos => 1.0,
        }
    }

    pub fn as_i32(self) -> i32 {
        match self {
            Label::Neg => -1,
            Label::Pos => 1,
        }
    }

    pub fn from_i32(v: i32) -> Option<Label> {
        match v {
            -1 => Some(Label::Neg),
            1 => Some(Label::Pos),
            _ => None,
        }
    }

    /// Sign rule with ties (exactly zero) mapped to `Pos`.
    pub fn from_score(score: f64) -> Label {
        if score >= 0.0 {
            Label::Pos
        } else {
            Label::Neg
        }
    }

    /// 0 for `Neg`, 1 for `Pos`.
    pub fn index(self) -> usize {
        match self {
            Label::Neg => 0,
            Label::Pos => 1,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_i32())
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn select_cols(&self, cols: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(self.rows * cols.len());
        for r in self.iter_rows() {
            data.extend(cols.iter().map(|&c| r[c]));
        }
        Matrix {
            rows: self.rows,
            cols: cols.len(),
            data,
        }
    }
}

/// Labeled sample: `n × d` finite features, labels in {−1, +1}.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<Label>,
    feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<Label>, feature_names: Vec<String>) -> Result<Self> {
        if features.rows() == 0 || features.cols() == 0 {
            return Err(Error::Data("dataset needs n >= 1 and d >= 1".into()));
        }
        if labels.len() != features.rows() {
            return Err(Error::DimensionMismatch {
                expected: features.rows(),
                got: labels.len(),
            });
        }
        if feature_names.len() != features.cols() {
            return Err(Error::DimensionMismatch {
                expected: features.cols(),
                got: feature_names.len(),
            });
        }
        if let Some(pos) = features.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value at row {}, column `{}`",
                pos / features.cols(),
                feature_names[pos % features.cols()]
            )));
        }
        Ok(Dataset {
            features,
            labels,
            feature_names,
        })
    }

    /// Dataset with generated feature names `x1..xd`.
    pub fn from_matrix(features: Matrix, labels: Vec<Label>) -> Result<Self> {
        let names = default_feature_names(features.cols());
        Dataset::new(features, labels, names)
    }

    pub fn n(&self) -> usize {
        self.features.rows()
    }

    pub fn d(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    pub fn class_indices(&self, label: Label) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.labels[i] == label).collect()
    }

    /// `(negatives, positives)`.
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&l| l == Label::Pos).count();
        (self.n() - pos, pos)
    }

    /// Feature matrix restricted to one class.
    pub fn class_features(&self, label: Label) -> Matrix {
        self.features.select_rows(&self.class_indices(label))
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Fails unless both classes have at least `min` samples.
    pub fn require_classes(&self, min: usize) -> Result<()> {
        let (neg, pos) = self.class_counts();
        if neg == 0 || pos == 0 {
            return Err(Error::DegenerateLabels(
                "both classes must be present".into(),
            ));
        }
        if neg < min || pos < min {
            return Err(Error::InsufficientSamples(format!(
                "each class needs at least {min} samples (have {neg} negative, {pos} positive)"
            )));
        }
        Ok(())
    }
}

pub fn default_feature_names(d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("x{i}")).collect()
}

/// How the label column's two values map to {−1, +1}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PositiveLabel {
    /// Lexicographically larger label string is positive.
    Auto,
    Value(String),
}

impl std::str::FromStr for PositiveLabel {
    type Err = std::convert::Infallible;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(if s == "auto" {
            PositiveLabel::Auto
        } else {
            PositiveLabel::Value(s.to_string())
        })
    }
}

/// Raw CSV contents with the label column split out.
struct RawTable {
    names: Vec<String>,
    rows: Vec<Vec<f64>>,
    labels: Option<Vec<String>>,
}

fn read_table(path: &Path, label_column: Option<&str>) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let label_idx = match label_column {
        Some(name) => Some(
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Data(format!("label column `{name}` not found")))?,
        ),
        None => None,
    };
    let names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != label_idx)
        .map(|(_, h)| h.clone())
        .collect();
    let mut rows = Vec::new();
    let mut labels = label_idx.map(|_| Vec::new());
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let mut row = Vec::with_capacity(names.len());
        for (c, cell) in record.iter().enumerate() {
            if Some(c) == label_idx {
                if cell.is_empty() || cell.eq_ignore_ascii_case("na") {
                    return Err(Error::Data(format!("missing label at data row {}", r + 1)));
                }
                labels.as_mut().unwrap().push(cell.to_string());
                continue;
            }
            if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan") {
                return Err(Error::Data(format!(
                    "missing value at data row {}, column `{}`",
                    r + 1,
                    header[c]
                )));
            }
            let v: f64 = cell.parse().map_err(|_| {
                Error::Data(format!(
                    "non-numeric value `{cell}` at data row {}, column `{}`",
                    r + 1,
                    header[c]
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Data(format!(
                    "non-finite value at data row {}, column `{}`",
                    r + 1,
                    header[c]
                )));
            }
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Data("no data rows".into()));
    }
    Ok(RawTable {
        names,
        rows,
        labels,
    })
}

/// Load a labeled dataset. Rows with missing cells are rejected, not imputed.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str, positive: &PositiveLabel) -> Result<Dataset> {
    let table = read_table(path.as_ref(), Some(label_column))?;
    let raw_labels = table.labels.unwrap_or_default();
    let distinct: BTreeSet<&str> = raw_labels.iter().map(String::as_str).collect();
    if distinct.len() != 2 {
        return Err(Error::DegenerateLabels(format!(
            "label column `{label_column}` has {} distinct values, expected 2",
            distinct.len()
        )));
    }
    let pos_value = match positive {
        PositiveLabel::Auto => distinct.iter().next_back().unwrap().to_string(),
        PositiveLabel::Value(v) => {
            if !distinct.contains(v.as_str()) {
                return Err(Error::DegenerateLabels(format!(
                    "positive label `{v}` does not occur in column `{label_column}`"
                )));
            }
            v.clone()
        }
    };
    let labels = raw_labels
        .iter()
        .map(|l| if *l == pos_value { Label::Pos } else { Label::Neg })
        .collect();
    let features = Matrix::from_rows(&table.rows)?;
    Dataset::new(features, labels, table.names)
}

/// Load an unlabeled feature matrix. If `drop_column` is present in the header it is ignored.
pub fn load_features_csv(path: impl AsRef<Path>, drop_column: Option<&str>) -> Result<(Matrix, Vec<String>, Option<Vec<String>>)> {
    let path = path.as_ref();
    let header: Vec<String> = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?
        .headers()?
        .iter()
        .map(str::to_string)
        .collect();
    let label = drop_column.filter(|c| header.iter().any(|h| h == c));
    let table = read_table(path, label)?;
    Ok((Matrix::from_rows(&table.rows)?, table.names, table.labels))
}

/// Write the dataset with labels as `-1` / `1` in a trailing `label_column`.
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>, label_column: &str) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = ds.feature_names().iter().map(String::as_str).collect();
    header.push(label_column);
    w.write_record(&header)?;
    for i in 0..ds.n() {
        let mut rec: Vec<String> = ds.row(i).iter().map(|v| format!("{v:?}")).collect();
        rec.push(ds.labels()[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Fold assignment for k-fold cross-validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StratifiedFolds {
    k: usize,
    assignments: Vec<usize>,
}

impl StratifiedFolds {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] != fold)
            .collect()
    }
}

/// Assign each sample a fold in `0..k` so that per-class fold counts differ by at most one.
pub fn stratified_kfold(ds: &Dataset, k: usize, rng: &Rng) -> Result<StratifiedFolds> {
    stratified_kfold_labels(ds.labels(), k, rng)
}

pub fn stratified_kfold_labels(labels: &[Label], k: usize, rng: &Rng) -> Result<StratifiedFolds> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k must be >= 2, got {k}")));
    }
    let mut assignments = vec![0usize; labels.len()];
    let mut offset = 0usize;
    for (c, label) in Label::BOTH.into_iter().enumerate() {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == label).collect();
        if idx.len() < k {
            return Err(Error::InsufficientSamples(format!(
                "class {label} has {} samples, fewer than k = {k}",
                idx.len()
            )));
        }
        let mut r = rng.derive(c as u64);
        idx.shuffle(&mut r);
        for (pos, &i) in idx.iter().enumerate() {
            assignments[i] = (offset + pos) % k;
        }
        offset = (offset + idx.len()) % k;
    }
    Ok(StratifiedFolds { k, assignments })
}

/// Stratified split into `(first, second)` index sets with `fraction` of each class in `first`.
pub fn stratified_split(ds: &Dataset, fraction: f64, rng: &Rng) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let mut first = Vec::new();
    let mut second = Vec::new();
    for (c, label) in Label::BOTH.into_iter().enumerate() {
        let mut idx = ds.class_indices(label);
        idx.shuffle(&mut rng.derive(c as u64));
        let cut = ((idx.len() as f64) * fraction).round() as usize;
        first.extend_from_slice(&idx[..cut]);
        second.extend_from_slice(&idx[cut..]);
    }
    first.sort_unstable();
    second.sort_unstable();
    Ok((first, second))
}

/// Per-feature affine transform recorded by [`standardize`].
///
/// Scales are population standard deviations (divisor `n`). Constant columns
/// get scale 1 so they map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Matrix) -> Standardizer {
        let n = x.rows() as f64;
        let mut means = vec![0.0; x.cols()];
        let mut scales = vec![1.0; x.cols()];
        for j in 0..x.cols() {
            let col = x.column(j);
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            means[j] = mean;
            let sd = var.sqrt();
            scales[j] = if sd > 0.0 { sd } else { 1.0 };
        }
        Standardizer { means, scales }
    }

    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.means.iter().zip(&self.scales))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn apply_matrix(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.means.len() {
            return Err(Error::DimensionMismatch {
                expected: self.means.len(),
                got: x.cols(),
            });
        }
        let mut out = x.clone();
        for i in 0..x.rows() {
            let r = self.apply_row(x.row(i));
            out.row_mut(i).copy_from_slice(&r);
        }
        Ok(out)
    }

    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        Dataset::new(
            self.apply_matrix(ds.features())?,
            ds.labels().to_vec(),
            ds.feature_names().to_vec(),
        )
    }
}

pub fn standardize(ds: &Dataset) -> Result<(Dataset, Standardizer)> {
    let rec = Standardizer::fit(ds.features());
    Ok((rec.apply(ds)?, rec))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use crate::rng::Rng;
    use std::io::Write;

    fn write(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn labels(pos: usize, neg: usize) -> Vec<Label> {
        let mut v = vec![Label::Pos; pos];
        v.extend(vec![Label::Neg; neg]);
        v
    }

    #[test]
    fn auto_label_is_lexicographic() {
        let f = write("x,y\n1,a\n2,b\n3,a\n");
        let ds = load_csv(f.path(), "y", &PositiveLabel::Auto).unwrap();
        assert_eq!(ds.labels(), &[Label::Neg, Label::Pos, Label::Neg]);
    }

    #[test]
    fn explicit_positive_label() {
        let f = write("x,y\n1,a\n2,b\n");
        let ds = load_csv(f.path(), "y", &PositiveLabel::Value("a".into())).unwrap();
        assert_eq!(ds.labels(), &[Label::Pos, Label::Neg]);
    }

    #[test]
    fn one_distinct_label_is_degenerate() {
        let f = write("x,y\n1,a\n2,a\n");
        let err = load_csv(f.path(), "y", &PositiveLabel::Auto).unwrap_err();
        assert!(err.to_string().contains("degenerate labels"), "{err}");
    }

    #[test]
    fn three_distinct_labels_rejected() {
        let f = write("x,y\n1,a\n2,b\n3,c\n");
        assert!(matches!(
            load_csv(f.path(), "y", &PositiveLabel::Auto),
            Err(Error::DegenerateLabels(_))
        ));
    }

    #[test]
    fn label_column_is_excluded_from_features() {
        let f = write("a,y,b,c\n1,p,2,3\n4,q,5,6\n");
        let ds = load_csv(f.path(), "y", &PositiveLabel::Auto).unwrap();
        assert_eq!(ds.d(), 3);
        assert_eq!(ds.feature_names(), &["a", "b", "c"]);
        assert_eq!(ds.row(1), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn bad_cells_are_rejected() {
        let f = write("x,y\n1,a\nfoo,b\n");
        assert!(load_csv(f.path(), "y", &PositiveLabel::Auto)
            .unwrap_err()
            .to_string()
            .contains("non-numeric"));
        let f = write("x,y\n1,a\n,b\n");
        assert!(load_csv(f.path(), "y", &PositiveLabel::Auto)
            .unwrap_err()
            .to_string()
            .contains("missing"));
        assert!(matches!(
            load_csv("/nonexistent/file.csv", "y", &PositiveLabel::Auto),
            Err(Error::Csv(_) | Error::Io(_))
        ));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let x = Matrix::from_rows(&[vec![0.1, -1e-300, 3.0], vec![1.0 / 3.0, 2.5e10, -0.0]]).unwrap();
        let ds = Dataset::from_matrix(x, vec![Label::Neg, Label::Pos]).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_csv(&ds, f.path(), "label").unwrap();
        let back = load_csv(f.path(), "label", &PositiveLabel::Auto).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn kfold_divisible_case() {
        let y = labels(10, 10);
        let folds = stratified_kfold_labels(&y, 5, &Rng::new(1)).unwrap();
        for f in 0..5 {
            let idx = folds.test_indices(f);
            let pos = idx.iter().filter(|&&i| y[i] == Label::Pos).count();
            assert_eq!((pos, idx.len() - pos), (2, 2));
        }
    }

    #[test]
    fn kfold_uneven_case() {
        let y = labels(7, 5);
        let folds = stratified_kfold_labels(&y, 5, &Rng::new(3)).unwrap();
        for f in 0..5 {
            let idx = folds.test_indices(f);
            let pos = idx.iter().filter(|&&i| y[i] == Label::Pos).count();
            assert!((1..=2).contains(&pos));
            assert_eq!(idx.len() - pos, 1);
        }
    }

    #[test]
    fn kfold_deterministic_and_validated() {
        let y = labels(9, 8);
        let a = stratified_kfold_labels(&y, 3, &Rng::new(11)).unwrap();
        let b = stratified_kfold_labels(&y, 3, &Rng::new(11)).unwrap();
        assert_eq!(a, b);
        assert!(stratified_kfold_labels(&y, 1, &Rng::new(0)).is_err());
        assert!(matches!(
            stratified_kfold_labels(&labels(3, 10), 5, &Rng::new(0)),
            Err(Error::InsufficientSamples(_))
        ));
    }

    proptest! {
        #[test]
        fn kfold_balance(n in 20usize..200, kk in prop::sample::select(vec![2usize, 5, 10]), frac in 0.3f64..0.7, seed in any::<u64>()) {
            let pos = ((n as f64) * frac).round() as usize;
            let y = labels(pos, n - pos);
            prop_assume!(pos >= kk && n - pos >= kk);
            let folds = stratified_kfold_labels(&y, kk, &Rng::new(seed)).unwrap();
            prop_assert_eq!(folds.assignments().len(), n);
            for label in Label::BOTH {
                let total = y.iter().filter(|&&l| l == label).count() as f64;
                let counts: Vec<usize> = (0..kk)
                    .map(|f| folds.test_indices(f).iter().filter(|&&i| y[i] == label).count())
                    .collect();
                let (mn, mx) = (*counts.iter().min().unwrap(), *counts.iter().max().unwrap());
                prop_assert!(mx - mn <= 1);
                for c in counts {
                    prop_assert!((c as f64 - total / kk as f64).abs() <= 1.0);
                }
            }
        }
    }

    #[test]
    fn standardize_population_sd() {
        let x = Matrix::from_rows(&[vec![1.0, 5.0], vec![2.0, 5.0], vec![3.0, 5.0]]).unwrap();
        let ds = Dataset::from_matrix(x, vec![Label::Neg, Label::Pos, Label::Pos]).unwrap();
        let (out, rec) = standardize(&ds).unwrap();
        // direct computation: mean 2, population sd sqrt(2/3)
        let sd = (2.0f64 / 3.0).sqrt();
        let expected = [-1.0 / sd, 0.0, 1.0 / sd];
        for i in 0..3 {
            assert!((out.row(i)[0] - expected[i]).abs() < 1e-12);
            assert_eq!(out.row(i)[1], 0.0);
        }
        assert!((expected[2] - 1.2247).abs() < 1e-4);
        assert_eq!(rec.scales[1], 1.0);
        // replaying the record reproduces the first output exactly; re-fitting the output does not
        assert_eq!(rec.apply(&ds.clone()).unwrap(), out);
        let twice = rec.apply(&out).unwrap();
        assert_ne!(twice, out);
    }
}
