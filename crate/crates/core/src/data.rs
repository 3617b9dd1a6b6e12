//! Dataset representation, CSV ingestion and preprocessing.
//!
//! Missing cells are stored as `NaN` inside the feature matrix and reported
//! through [`Dataset::is_missing`]. Class labels are ordinal indices
//! `0..n_classes` obtained by sorting the distinct label strings (numerically
//! when every label parses as a number).

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Token (besides an empty cell) that marks a missing value.
pub const MISSING_TOKEN: &str = "?";

/// An `n x u` feature matrix with optional ordinal labels and feature weights.
#[derive(Debug, Clone)]
pub struct Dataset {
    n_rows: usize,
    n_features: usize,
    values: Vec<f64>,
    labels: Option<Vec<usize>>,
    class_names: Vec<String>,
    feature_names: Vec<String>,
    weights: Vec<f64>,
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.n_rows == other.n_rows
            && self.n_features == other.n_features
            && self.labels == other.labels
            && self.class_names == other.class_names
            && self.feature_names == other.feature_names
            && self.weights == other.weights
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a == b || (a.is_nan() && b.is_nan()))
    }
}

impl Dataset {
    /// Builds a dataset from rows. Every row must have the same length.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_rows = rows.len();
        let n_features = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(n_rows * n_features);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n_features {
                return Err(Error::RaggedRow {
                    line: i + 1,
                    expected: n_features,
                    found: row.len(),
                });
            }
            values.extend(row);
        }
        Self::from_flat(n_rows, n_features, values)
    }

    /// Builds a dataset from a row-major buffer.
    pub fn from_flat(n_rows: usize, n_features: usize, values: Vec<f64>) -> Result<Self> {
        if n_rows == 0 || n_features == 0 {
            return Err(Error::invalid("dataset needs at least one row and one feature"));
        }
        if values.len() != n_rows * n_features {
            return Err(Error::DimensionMismatch {
                left: values.len(),
                right: n_rows * n_features,
            });
        }
        Ok(Self {
            n_rows,
            n_features,
            values,
            labels: None,
            class_names: Vec::new(),
            feature_names: (1..=n_features).map(|d| format!("f{d}")).collect(),
            weights: vec![1.0; n_features],
        })
    }

    /// Attaches ordinal labels. Class names default to the label numbers.
    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.n_rows {
            return Err(Error::DimensionMismatch {
                left: labels.len(),
                right: self.n_rows,
            });
        }
        let n_classes = labels.iter().max().map_or(0, |m| m + 1);
        if self.class_names.len() < n_classes {
            self.class_names = (0..n_classes).map(|c| c.to_string()).collect();
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Result<Self> {
        if let Some(labels) = &self.labels {
            if labels.iter().any(|&l| l >= names.len()) {
                return Err(Error::invalid("class names do not cover every label"));
            }
        }
        self.class_names = names;
        Ok(self)
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                left: names.len(),
                right: self.n_features,
            });
        }
        self.feature_names = names;
        Ok(self)
    }

    /// Sets per-feature weights; each must lie in `[0, 1]`.
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                left: weights.len(),
                right: self.n_features,
            });
        }
        if weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::invalid("feature weights must lie in [0, 1]"));
        }
        self.weights = weights;
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.n_features)
    }

    pub fn get(&self, i: usize, d: usize) -> f64 {
        self.values[i * self.n_features + d]
    }

    pub fn is_missing(&self, i: usize, d: usize) -> bool {
        self.get(i, d).is_nan()
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_nan()).count()
    }

    pub fn has_missing(&self) -> bool {
        self.values.iter().any(|v| v.is_nan())
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Number of distinct classes, or 0 when unlabeled.
    pub fn n_classes(&self) -> usize {
        self.labels
            .as_ref()
            .map_or(0, |l| l.iter().max().map_or(0, |m| m + 1))
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Keeps only the listed feature columns, in the given order.
    pub fn select_features(&self, columns: &[usize]) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::invalid("cannot select zero features"));
        }
        if let Some(&bad) = columns.iter().find(|&&c| c >= self.n_features) {
            return Err(Error::invalid(format!("feature column {bad} out of range")));
        }
        let mut values = Vec::with_capacity(self.n_rows * columns.len());
        for row in self.rows() {
            values.extend(columns.iter().map(|&c| row[c]));
        }
        Ok(Self {
            n_rows: self.n_rows,
            n_features: columns.len(),
            values,
            labels: self.labels.clone(),
            class_names: self.class_names.clone(),
            feature_names: columns.iter().map(|&c| self.feature_names[c].clone()).collect(),
            weights: columns.iter().map(|&c| self.weights[c]).collect(),
        })
    }

    /// Flips the sign of a feature so that higher values are better.
    pub fn negate_feature(&self, column: usize) -> Result<Self> {
        if column >= self.n_features {
            return Err(Error::invalid(format!("feature column {column} out of range")));
        }
        let mut out = self.clone();
        for i in 0..self.n_rows {
            out.values[i * self.n_features + column] *= -1.0;
        }
        Ok(out)
    }

    fn column(&self, d: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows().map(move |r| r[d])
    }
}

/// Which CSV column holds the class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelColumn {
    None,
    #[default]
    Last,
    Index(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsvOptions {
    pub label_column: LabelColumn,
    pub has_header: bool,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            label_column: LabelColumn::Last,
            has_header: true,
        }
    }
}

fn parse_cell(raw: &str, line: usize, column: usize) -> Result<f64> {
    let cell = raw.trim();
    if cell.is_empty() || cell == MISSING_TOKEN {
        return Ok(f64::NAN);
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::NonNumeric {
            line,
            column,
            value: cell.to_string(),
        }),
    }
}

/// Sorts distinct label strings: numerically when all parse, else lexically.
fn ordinal_classes(raw: &[String]) -> Vec<String> {
    let mut names: Vec<String> = raw.to_vec();
    names.sort();
    names.dedup();
    let numeric: Option<Vec<f64>> = names.iter().map(|s| s.parse::<f64>().ok()).collect();
    if let Some(nums) = numeric {
        let mut paired: Vec<(f64, String)> = nums.into_iter().zip(names).collect();
        paired.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));
        paired.into_iter().map(|(_, s)| s).collect()
    } else {
        names
    }
}

/// Parses CSV text. Lines starting with `@` (KEEL headers) and blank lines are skipped.
pub fn parse_csv(text: &str, opts: CsvOptions) -> Result<Dataset> {
    let body: String = text
        .lines()
        .filter(|l| {
            let t = l.trim_start();
            !t.is_empty() && !t.starts_with('@')
        })
        .flat_map(|l| [l, "\n"])
        .collect();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(body.as_bytes());

    let mut header: Option<Vec<String>> = None;
    let mut width: Option<usize> = None;
    let mut values = Vec::new();
    let mut raw_labels = Vec::new();
    let mut n_rows = 0usize;
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        let line = idx + 1;
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(Error::RaggedRow {
                line,
                expected,
                found: record.len(),
            });
        }
        let label_idx = match opts.label_column {
            LabelColumn::None => None,
            LabelColumn::Last => Some(expected - 1),
            LabelColumn::Index(c) if c < expected => Some(c),
            LabelColumn::Index(c) => {
                return Err(Error::invalid(format!("label column {c} out of range")))
            }
        };
        if opts.has_header && header.is_none() {
            header = Some(
                record
                    .iter()
                    .enumerate()
                    .filter(|(c, _)| Some(*c) != label_idx)
                    .map(|(_, s)| s.trim().to_string())
                    .collect(),
            );
            continue;
        }
        for (c, cell) in record.iter().enumerate() {
            if Some(c) == label_idx {
                raw_labels.push(cell.trim().to_string());
            } else {
                values.push(parse_cell(cell, line, c + 1)?);
            }
        }
        n_rows += 1;
    }
    let width = width.unwrap_or(0);
    let n_features = width - usize::from(opts.label_column != LabelColumn::None && width > 0);
    let mut ds = Dataset::from_flat(n_rows, n_features, values)?;
    if let Some(names) = header {
        ds = ds.with_feature_names(names)?;
    }
    if opts.label_column != LabelColumn::None {
        let classes = ordinal_classes(&raw_labels);
        let labels = raw_labels
            .iter()
            .map(|s| classes.iter().position(|c| c == s).unwrap_or(0))
            .collect();
        ds = ds.with_labels(labels)?.with_class_names(classes)?;
    }
    Ok(ds)
}

/// Loads a dataset from a CSV file.
pub fn load_csv(path: impl AsRef<Path>, opts: CsvOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, opts)
}

/// Serializes with a header row and the label (if any) as the last column.
pub fn to_csv_string(d: &Dataset) -> String {
    let mut out = String::new();
    let mut header: Vec<&str> = d.feature_names.iter().map(String::as_str).collect();
    if d.labels.is_some() {
        header.push("class");
    }
    out.push_str(&header.join(","));
    out.push('\n');
    for (i, row) in d.rows().enumerate() {
        let mut cells: Vec<String> = row
            .iter()
            .map(|v| {
                if v.is_nan() {
                    MISSING_TOKEN.to_string()
                } else {
                    v.to_string()
                }
            })
            .collect();
        if let Some(labels) = &d.labels {
            cells.push(d.class_names[labels[i]].clone());
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn write_csv(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_csv_string(d)).map_err(|e| Error::io(path, e))
}

/// Z-scores every feature column using the population standard deviation.
/// Constant columns become all zeros.
pub fn standardize(d: &Dataset) -> Result<Dataset> {
    if d.has_missing() {
        return Err(Error::MissingValues);
    }
    let n = d.n_rows as f64;
    let mut out = d.clone();
    for col in 0..d.n_features {
        let mean = d.column(col).sum::<f64>() / n;
        let var = d.column(col).map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        let constant = std <= 1e-12 * mean.abs().max(1.0);
        for i in 0..d.n_rows {
            let slot = &mut out.values[i * d.n_features + col];
            *slot = if constant { 0.0 } else { (*slot - mean) / std };
        }
    }
    Ok(out)
}

/// Fills each missing cell with the mean of that feature over the
/// `k_neighbors` nearest rows observing it. Distance is Euclidean over the
/// features observed in both rows; ties go to the lower row index. When fewer
/// than `k_neighbors` donors exist, all of them are used.
pub fn knn_impute(d: &Dataset, k_neighbors: usize) -> Result<Dataset> {
    if k_neighbors == 0 {
        return Err(Error::invalid("k_neighbors must be positive"));
    }
    for col in 0..d.n_features {
        if d.column(col).all(f64::is_nan) {
            return Err(Error::ColumnAllMissing(col));
        }
    }
    let mut out = d.clone();
    for i in 0..d.n_rows {
        let row = d.row(i);
        if !row.iter().any(|v| v.is_nan()) {
            continue;
        }
        let mut dists: Vec<(f64, usize)> = (0..d.n_rows)
            .filter(|&j| j != i)
            .map(|j| {
                let other = d.row(j);
                let mut sum = 0.0;
                let mut shared = 0usize;
                for (a, b) in row.iter().zip(other) {
                    if !a.is_nan() && !b.is_nan() {
                        sum += (a - b) * (a - b);
                        shared += 1;
                    }
                }
                let dist = if shared == 0 { f64::INFINITY } else { sum.sqrt() };
                (dist, j)
            })
            .collect();
        dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for col in (0..d.n_features).filter(|&c| row[c].is_nan()) {
            let donors: Vec<f64> = dists
                .iter()
                .map(|&(_, j)| d.get(j, col))
                .filter(|v| !v.is_nan())
                .take(k_neighbors)
                .collect();
            out.values[i * d.n_features + col] = donors.iter().sum::<f64>() / donors.len() as f64;
        }
    }
    Ok(out)
}
