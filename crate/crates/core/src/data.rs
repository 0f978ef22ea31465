//! Tabular data: loading, typing, splitting and standardization.
//!
//! Every other module indexes features by their 0-based column position in
//! [`Dataset::x`]. Categorical columns hold category codes (`0.0, 1.0, ...`)
//! that index into [`FeatureKind::Categorical::categories`]; codes are never
//! scaled.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{RamError, Result};

/// Columns with at most this many distinct non-numeric values are inferred
/// categorical.
pub const CATEGORICAL_MAX_DISTINCT: usize = 12;

const MISSING_MARKERS: [&str; 5] = ["", "NA", "na", "NaN", "?"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric { min: f64, max: f64 },
    Categorical { categories: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub name: String,
    pub index: usize,
    #[serde(flatten)]
    pub kind: FeatureKind,
}

impl FeatureMeta {
    pub fn numeric(name: impl Into<String>, index: usize, min: f64, max: f64) -> Self {
        FeatureMeta {
            name: name.into(),
            index,
            kind: FeatureKind::Numeric { min, max },
        }
    }

    pub fn categorical(name: impl Into<String>, index: usize, categories: Vec<String>) -> Self {
        FeatureMeta {
            name: name.into(),
            index,
            kind: FeatureKind::Categorical { categories },
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, FeatureKind::Categorical { .. })
    }

    /// Observed `[min, max]` for numeric features.
    pub fn range(&self) -> Option<(f64, f64)> {
        match self.kind {
            FeatureKind::Numeric { min, max } => Some((min, max)),
            FeatureKind::Categorical { .. } => None,
        }
    }

    pub fn categories(&self) -> Option<&[String]> {
        match &self.kind {
            FeatureKind::Categorical { categories } => Some(categories),
            FeatureKind::Numeric { .. } => None,
        }
    }

    /// Renders a stored value: category label for categoricals, the number otherwise.
    pub fn render_value(&self, value: f64) -> String {
        match &self.kind {
            FeatureKind::Categorical { categories } => categories
                .get(value as usize)
                .cloned()
                .unwrap_or_else(|| format!("#{value}")),
            FeatureKind::Numeric { .. } => format_number(value),
        }
    }
}

pub(crate) fn format_number(v: f64) -> String {
    if v == v.round() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else if v.abs() < 1e-3 {
        format!("{v:.2e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Immutable column-typed tabular dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<FeatureMeta>,
    pub x: Array2<f64>,
    pub y: Array1<f64>,
    pub target: String,
}

impl Dataset {
    /// Builds a dataset, recomputing numeric ranges from `x` and validating codes.
    pub fn new(
        features: Vec<FeatureMeta>,
        x: Array2<f64>,
        y: Array1<f64>,
        target: impl Into<String>,
    ) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(RamError::LengthMismatch {
                left: x.nrows(),
                right: y.len(),
            });
        }
        if x.ncols() != features.len() {
            return Err(RamError::ArityMismatch {
                expected: features.len(),
                got: x.ncols(),
            });
        }
        if x.nrows() == 0 {
            return Err(RamError::EmptyFile);
        }
        let mut ds = Dataset {
            features,
            x,
            y,
            target: target.into(),
        };
        for (i, f) in ds.features.iter_mut().enumerate() {
            f.index = i;
            let col = ds.x.column(i);
            match &f.kind {
                FeatureKind::Numeric { .. } => {
                    let (min, max) = min_max(col);
                    f.kind = FeatureKind::Numeric { min, max };
                }
                FeatureKind::Categorical { categories } => {
                    if categories.is_empty() {
                        return Err(RamError::InvalidArgument(format!(
                            "categorical feature `{}` has no categories",
                            f.name
                        )));
                    }
                    let k = categories.len() as f64;
                    if let Some(bad) = col.iter().find(|&&c| c < 0.0 || c >= k || c.fract() != 0.0)
                    {
                        return Err(RamError::InvalidArgument(format!(
                            "feature `{}` holds invalid category code {bad}",
                            f.name
                        )));
                    }
                }
            }
        }
        Ok(ds)
    }

    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn column(&self, s: usize) -> ArrayView1<'_, f64> {
        self.x.column(s)
    }

    pub fn is_categorical(&self, s: usize) -> bool {
        self.features[s].is_categorical()
    }

    pub fn feature_index(&self, name: &str) -> Result<usize> {
        self.features
            .iter()
            .position(|f| f.name == name)
            .ok_or_else(|| RamError::UnknownFeature(name.to_string()))
    }

    /// Rows `rows` (in the given order) as a new dataset; numeric ranges are recomputed.
    pub fn subset(&self, rows: &[usize]) -> Result<Dataset> {
        let x = self.x.select(Axis(0), rows);
        let y = self.y.select(Axis(0), rows);
        Dataset::new(self.features.clone(), x, y, self.target.clone())
    }

    /// Writes the dataset as CSV (features then target); categories as their labels.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| RamError::io(path, e))?;
        let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
        let mut header: Vec<&str> = self.features.iter().map(|f| f.name.as_str()).collect();
        header.push(&self.target);
        w.write_record(&header)?;
        for (row, y) in self.x.rows().into_iter().zip(self.y.iter()) {
            let mut rec: Vec<String> = row
                .iter()
                .zip(&self.features)
                .map(|(&v, f)| match f.categories() {
                    Some(cats) => cats[v as usize].clone(),
                    None => format!("{v}"),
                })
                .collect();
            rec.push(format!("{y}"));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| RamError::io(path, e))?;
        Ok(())
    }
}

fn min_max(col: ArrayView1<'_, f64>) -> (f64, f64) {
    col.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}

fn is_missing(cell: &str) -> bool {
    MISSING_MARKERS.contains(&cell.trim())
}

/// Orders category labels numerically when every label parses as a number.
fn ordered_categories(values: &BTreeSet<String>) -> Vec<String> {
    let mut cats: Vec<String> = values.iter().cloned().collect();
    let numeric: Option<Vec<f64>> = cats.iter().map(|c| c.parse::<f64>().ok()).collect();
    if let Some(nums) = numeric {
        let mut paired: Vec<(f64, String)> = nums.into_iter().zip(cats).collect();
        paired.sort_by(|a, b| a.0.total_cmp(&b.0));
        cats = paired.into_iter().map(|(_, c)| c).collect();
    }
    cats
}

/// Loads a headed, comma-separated file.
///
/// A column is categorical if named in `categorical`, or if it holds at most
/// [`CATEGORICAL_MAX_DISTINCT`] distinct values and at least one of them does
/// not parse as a number. Rows with any missing cell are dropped.
pub fn load_csv(path: &Path, target: &str, categorical: &[String]) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| RamError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header: Vec<String> = match reader.headers() {
        Ok(h) => h.iter().map(str::to_string).collect(),
        Err(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => return Err(e.into()),
        Err(_) => return Err(RamError::EmptyFile),
    };
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(RamError::EmptyFile);
    }
    let target_col = header
        .iter()
        .position(|h| h == target)
        .ok_or_else(|| RamError::TargetNotFound(target.to_string()))?;
    for name in categorical {
        if name == target || !header.contains(name) {
            return Err(RamError::UnknownFeature(name.clone()));
        }
    }

    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut dropped = 0usize;
    for rec in reader.records() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(RamError::ArityMismatch {
                expected: header.len(),
                got: rec.len(),
            });
        }
        if rec.iter().any(is_missing) {
            dropped += 1;
            continue;
        }
        rows.push(rec.iter().map(str::to_string).collect());
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} rows with missing cells from {}", path.display());
    }
    if rows.is_empty() {
        return Err(RamError::EmptyFile);
    }
    let n = rows.len();

    let mut y = Array1::zeros(n);
    for (i, row) in rows.iter().enumerate() {
        y[i] = row[target_col]
            .parse::<f64>()
            .map_err(|_| RamError::UnparseableCell {
                column: target.to_string(),
                row: i + 1,
                value: row[target_col].clone(),
            })?;
    }
    if n >= 2 && y.iter().all(|&v| v == y[0]) {
        return Err(RamError::ConstantTarget(target.to_string()));
    }

    let feature_cols: Vec<usize> = (0..header.len()).filter(|&c| c != target_col).collect();
    let mut x = Array2::zeros((n, feature_cols.len()));
    let mut features = Vec::with_capacity(feature_cols.len());
    for (j, &c) in feature_cols.iter().enumerate() {
        let name = &header[c];
        let parsed: Vec<Option<f64>> = rows.iter().map(|r| r[c].parse::<f64>().ok()).collect();
        let all_numeric = parsed.iter().all(Option::is_some);
        let listed = categorical.contains(name);
        if !listed && all_numeric {
            for (i, v) in parsed.iter().enumerate() {
                x[[i, j]] = v.unwrap();
            }
            let (min, max) = min_max(x.column(j));
            features.push(FeatureMeta::numeric(name.clone(), j, min, max));
            continue;
        }
        let distinct: BTreeSet<String> = rows.iter().map(|r| r[c].clone()).collect();
        if !listed && distinct.len() > CATEGORICAL_MAX_DISTINCT {
            let i = parsed.iter().position(Option::is_none).unwrap();
            return Err(RamError::UnparseableCell {
                column: name.clone(),
                row: i + 1,
                value: rows[i][c].clone(),
            });
        }
        let categories = ordered_categories(&distinct);
        for (i, r) in rows.iter().enumerate() {
            x[[i, j]] = categories.iter().position(|cat| cat == &r[c]).unwrap() as f64;
        }
        features.push(FeatureMeta::categorical(name.clone(), j, categories));
    }
    Dataset::new(features, x, y, target)
}

/// Shuffled row indices `(train, test)`, each sorted ascending.
pub fn split_indices(n: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(RamError::InvalidArgument(format!(
            "test fraction {test_fraction} outside (0, 1)"
        )));
    }
    if n < 2 {
        return Err(RamError::InsufficientData { needed: 2, got: n });
    }
    let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test = perm[..n_test].to_vec();
    let mut train = perm[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

pub fn train_test_split(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_indices(ds.n_rows(), test_fraction, seed)?;
    Ok((ds.subset(&train)?, ds.subset(&test)?))
}

/// Per-column standardization parameters. Categorical columns carry `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub features: Vec<Option<ColumnScale>>,
    pub target: ColumnScale,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub mean: f64,
    pub sd: f64,
}

impl ColumnScale {
    fn fit(values: ArrayView1<'_, f64>) -> Option<Self> {
        let n = values.len() as f64;
        let mean = values.sum() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        (sd > 0.0 && sd.is_finite()).then_some(ColumnScale { mean, sd })
    }

    pub fn forward(&self, v: f64) -> f64 {
        (v - self.mean) / self.sd
    }

    pub fn inverse(&self, v: f64) -> f64 {
        v * self.sd + self.mean
    }
}

pub fn fit_scaler(ds: &Dataset) -> Result<Scaler> {
    let features = ds
        .features
        .iter()
        .map(|f| {
            if f.is_categorical() {
                Ok(None)
            } else {
                ColumnScale::fit(ds.column(f.index))
                    .map(Some)
                    .ok_or_else(|| RamError::ConstantColumn(f.name.clone()))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let target = ColumnScale::fit(ds.y.view()).ok_or_else(|| RamError::ConstantTarget(ds.target.clone()))?;
    Ok(Scaler { features, target })
}

impl Scaler {
    fn check_arity(&self, ds: &Dataset) -> Result<()> {
        if ds.n_features() != self.features.len() {
            return Err(RamError::ArityMismatch {
                expected: self.features.len(),
                got: ds.n_features(),
            });
        }
        Ok(())
    }

    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        self.check_arity(ds)?;
        let mut x = ds.x.clone();
        self.transform_features(&mut x);
        let y = ds.y.mapv(|v| self.target.forward(v));
        Dataset::new(ds.features.clone(), x, y, ds.target.clone())
    }

    pub fn inverse(&self, ds: &Dataset) -> Result<Dataset> {
        self.check_arity(ds)?;
        let mut x = ds.x.clone();
        for (j, scale) in self.features.iter().enumerate() {
            if let Some(sc) = scale {
                x.column_mut(j).mapv_inplace(|v| sc.inverse(v));
            }
        }
        let y = ds.y.mapv(|v| self.target.inverse(v));
        Dataset::new(ds.features.clone(), x, y, ds.target.clone())
    }

    /// Standardizes numeric columns of a raw feature matrix in place.
    pub fn transform_features(&self, x: &mut Array2<f64>) {
        for (j, scale) in self.features.iter().enumerate() {
            if let Some(sc) = scale {
                x.column_mut(j).mapv_inplace(|v| sc.forward(v));
            }
        }
    }

    /// Feature value in original units (identity for categorical codes).
    pub fn feature_to_original(&self, s: usize, v: f64) -> f64 {
        self.features[s].map_or(v, |sc| sc.inverse(v))
    }

    pub fn feature_to_standard(&self, s: usize, v: f64) -> f64 {
        self.features[s].map_or(v, |sc| sc.forward(v))
    }

    pub fn target_to_original(&self, v: f64) -> f64 {
        self.target.inverse(v)
    }

    /// Converts an error magnitude (MAE/RMSE) to original target units.
    pub fn error_to_original(&self, e: f64) -> f64 {
        e * self.target.sd
    }
}

/// Distinct values of a column in ascending order.
pub(crate) fn distinct_sorted(col: ArrayView1<'_, f64>) -> Vec<f64> {
    let mut v: Vec<f64> = col.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Checks the category-code bijection for every categorical column.
pub fn codes_are_bijective(ds: &Dataset) -> bool {
    ds.features.iter().all(|f| match f.categories() {
        None => true,
        Some(cats) => {
            let unique: HashSet<&String> = cats.iter().collect();
            unique.len() == cats.len()
                && ds
                    .column(f.index)
                    .iter()
                    .all(|&c| c.fract() == 0.0 && (c as usize) < cats.len())
        }
    })
}
