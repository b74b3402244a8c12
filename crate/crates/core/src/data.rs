//! Binary-labelled tabular datasets: schema, validation, CSV ingestion and
//! summary statistics.
//!
//! The CSV dialect is deliberately narrow: comma separator, `.` decimal
//! point, surrounding whitespace trimmed, no quoting. The first line is the
//! header. LF and CRLF line endings are both accepted.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Largest number of distinct integer values for a column to count as ordinal.
pub const ORDINAL_MAX_DISTINCT: usize = 16;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("input is empty (no header line)")]
    Empty,
    #[error("header has no column named {0:?}")]
    MissingTarget(String),
    #[error("line {line}: malformed CSV: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: expected {expected} fields, found {found}")]
    RaggedRow { line: usize, expected: usize, found: usize },
    #[error("line {line}, column {column:?}: cannot parse {value:?} as a number")]
    NonNumericCell { line: usize, column: String, value: String },
    #[error("line {line}, column {column:?}: value {value:?} is not finite")]
    NonFiniteCell { line: usize, column: String, value: String },
    #[error("line {line}: label {value:?} is not 0 or 1")]
    NonBinaryLabel { line: usize, value: String },
    #[error("line {line}, column {column:?}: missing value")]
    MissingValue { line: usize, column: String },
    #[error("column {0:?} has no non-missing value to impute from")]
    AllMissingColumn(String),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("invalid table: {0}")]
    InvalidTable(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Binary,
    Ordinal,
    Continuous,
}

impl FeatureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Binary => "binary",
            FeatureKind::Ordinal => "ordinal",
            FeatureKind::Continuous => "continuous",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    feature_names: Vec<String>,
    feature_kinds: Vec<FeatureKind>,
    target_name: String,
}

impl Schema {
    pub fn new(
        feature_names: Vec<String>,
        feature_kinds: Vec<FeatureKind>,
        target_name: impl Into<String>,
    ) -> Result<Self, DataError> {
        let target_name = target_name.into();
        if feature_names.len() != feature_kinds.len() {
            return Err(DataError::InvalidSchema(format!(
                "{} feature names but {} kinds",
                feature_names.len(),
                feature_kinds.len()
            )));
        }
        if target_name.is_empty() {
            return Err(DataError::InvalidSchema("empty target name".into()));
        }
        let mut seen = HashSet::new();
        for name in &feature_names {
            if name.is_empty() {
                return Err(DataError::InvalidSchema("empty feature name".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(DataError::InvalidSchema(format!("duplicate feature name {name:?}")));
            }
        }
        if seen.contains(target_name.as_str()) {
            return Err(DataError::InvalidSchema(format!(
                "target {target_name:?} is also a feature"
            )));
        }
        Ok(Self { feature_names, feature_kinds, target_name })
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_kinds(&self) -> &[FeatureKind] {
        &self.feature_kinds
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    pub fn len(&self) -> usize {
        self.feature_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.feature_names.is_empty()
    }

    /// Schema restricted to `columns`, in the given order.
    pub fn project(&self, columns: &[usize]) -> Schema {
        Schema {
            feature_names: columns.iter().map(|&c| self.feature_names[c].clone()).collect(),
            feature_kinds: columns.iter().map(|&c| self.feature_kinds[c]).collect(),
            target_name: self.target_name.clone(),
        }
    }
}

/// Row-major feature matrix with binary labels.
///
/// Immutable once constructed; every cell is finite and every label is 0 or 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct Table<F> {
    features: Vec<F>,
    n_rows: usize,
    labels: Vec<u8>,
    schema: Schema,
}

impl<F: Scalar> Table<F> {
    pub fn new(rows: Vec<Vec<F>>, labels: Vec<u8>, schema: Schema) -> Result<Self, DataError> {
        let p = schema.len();
        let mut flat = Vec::with_capacity(rows.len() * p);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(DataError::InvalidTable(format!(
                    "row {i} has {} entries, schema has {p}",
                    row.len()
                )));
            }
            flat.extend_from_slice(row);
        }
        Self::from_flat(flat, labels, schema)
    }

    pub fn from_flat(features: Vec<F>, labels: Vec<u8>, schema: Schema) -> Result<Self, DataError> {
        let p = schema.len();
        let n = labels.len();
        if features.len() != n * p {
            return Err(DataError::InvalidTable(format!(
                "{} cells for {n} rows x {p} columns",
                features.len()
            )));
        }
        if let Some(bad) = labels.iter().position(|&l| l > 1) {
            return Err(DataError::InvalidTable(format!("label {} at row {bad}", labels[bad])));
        }
        if let Some(bad) = features.iter().position(|v| !v.is_finite()) {
            return Err(DataError::InvalidTable(format!(
                "non-finite cell at row {} column {}",
                bad / p.max(1),
                bad % p.max(1)
            )));
        }
        Ok(Self { features, n_rows: n, labels, schema })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.schema.len()
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn features(&self) -> &[F] {
        &self.features
    }

    pub fn matrix(&self) -> Matrix<'_, F> {
        Matrix::new(&self.features, self.n_rows, self.n_features())
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[F] {
        let p = self.n_features();
        &self.features[i * p..(i + 1) * p]
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> F {
        self.features[row * self.n_features() + col]
    }

    pub fn column(&self, col: usize) -> impl ExactSizeIterator<Item = F> + '_ {
        let p = self.n_features();
        (0..self.n_rows).map(move |i| self.features[i * p + col])
    }

    /// New table holding `rows` (in the given order, repeats allowed).
    pub fn select_rows(&self, rows: &[usize]) -> Table<F> {
        let mut features = Vec::with_capacity(rows.len() * self.n_features());
        let mut labels = Vec::with_capacity(rows.len());
        for &r in rows {
            features.extend_from_slice(self.row(r));
            labels.push(self.labels[r]);
        }
        Table { features, n_rows: rows.len(), labels, schema: self.schema.clone() }
    }

    /// New table keeping only `columns`, in the given order.
    pub fn select_columns(&self, columns: &[usize]) -> Table<F> {
        let mut features = Vec::with_capacity(self.n_rows * columns.len());
        for i in 0..self.n_rows {
            let row = self.row(i);
            features.extend(columns.iter().map(|&c| row[c]));
        }
        Table {
            features,
            n_rows: self.n_rows,
            labels: self.labels.clone(),
            schema: self.schema.project(columns),
        }
    }

    /// Append rows (flat, row-major) with their labels.
    pub(crate) fn with_appended(&self, extra: Vec<F>, extra_labels: Vec<u8>) -> Table<F> {
        debug_assert_eq!(extra.len(), extra_labels.len() * self.n_features());
        let mut features = Vec::with_capacity(self.features.len() + extra.len());
        features.extend_from_slice(&self.features);
        features.extend(extra);
        let mut labels = self.labels.clone();
        labels.extend(extra_labels);
        Table { n_rows: labels.len(), features, labels, schema: self.schema.clone() }
    }
}

/// Borrowed row-major view of a numeric matrix.
#[derive(Clone, Copy, Debug)]
pub struct Matrix<'a, F> {
    data: &'a [F],
    n_rows: usize,
    n_cols: usize,
}

impl<'a, F: Copy> Matrix<'a, F> {
    pub fn new(data: &'a [F], n_rows: usize, n_cols: usize) -> Self {
        assert_eq!(data.len(), n_rows * n_cols, "matrix data does not match its shape");
        Self { data, n_rows, n_cols }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn data(&self) -> &'a [F] {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &'a [F] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> F {
        self.data[row * self.n_cols + col]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub n_total: usize,
    pub n_positive: usize,
    pub n_negative: usize,
}

impl ClassCounts {
    pub fn from_labels(labels: &[u8]) -> Self {
        let n_positive = labels.iter().filter(|&&l| l == 1).count();
        Self { n_total: labels.len(), n_positive, n_negative: labels.len() - n_positive }
    }

    /// Label of the smaller class, `None` when both classes are equally sized.
    pub fn minority_label(&self) -> Option<u8> {
        use std::cmp::Ordering::*;
        match self.n_positive.cmp(&self.n_negative) {
            Less => Some(1),
            Greater => Some(0),
            Equal => None,
        }
    }

    pub fn count_of(&self, label: u8) -> usize {
        if label == 1 {
            self.n_positive
        } else {
            self.n_negative
        }
    }
}

pub fn class_counts<F: Scalar>(table: &Table<F>) -> ClassCounts {
    ClassCounts::from_labels(table.labels())
}

#[derive(Clone, Debug, Default)]
pub struct LoadOptions {
    /// Per-column kind overrides; columns not listed are inferred.
    pub kind_hints: BTreeMap<String, FeatureKind>,
    /// Replace empty cells by their column mean instead of rejecting them.
    pub impute_missing: bool,
}

pub fn load_csv<F: Scalar>(
    path: impl AsRef<Path>,
    target_name: &str,
    options: &LoadOptions,
) -> Result<Table<F>, DataError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| DataError::Io { path: path.display().to_string(), source })?;
    parse_csv(&text, target_name, options)
}

pub fn parse_csv<F: Scalar>(
    text: &str,
    target_name: &str,
    options: &LoadOptions,
) -> Result<Table<F>, DataError> {
    let malformed = |e: csv::Error| DataError::Malformed {
        line: e.position().map_or(0, |p| p.line() as usize),
        message: e.to_string(),
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();

    let header = records.next().ok_or(DataError::Empty)?.map_err(malformed)?;
    if header.iter().all(str::is_empty) {
        return Err(DataError::Empty);
    }
    let columns: Vec<String> = header.iter().map(str::to_string).collect();
    let target_col = columns
        .iter()
        .position(|c| c == target_name)
        .ok_or_else(|| DataError::MissingTarget(target_name.to_string()))?;
    let feature_names: Vec<String> =
        columns.iter().enumerate().filter(|&(i, _)| i != target_col).map(|(_, c)| c.clone()).collect();
    let p = feature_names.len();

    let mut features: Vec<F> = Vec::new();
    let mut labels: Vec<u8> = Vec::new();
    let mut missing: Vec<(usize, usize)> = Vec::new();

    for record in records {
        let record = record.map_err(malformed)?;
        let line_no = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let fields: Vec<&str> = record.iter().collect();
        if fields.len() != columns.len() {
            return Err(DataError::RaggedRow { line: line_no, expected: columns.len(), found: fields.len() });
        }
        let row_index = labels.len();
        let mut feature_col = 0;
        for (col, &field) in fields.iter().enumerate() {
            if field.is_empty() {
                if col == target_col || !options.impute_missing {
                    return Err(DataError::MissingValue { line: line_no, column: columns[col].clone() });
                }
                missing.push((row_index, feature_col));
                features.push(F::zero());
                feature_col += 1;
                continue;
            }
            if col == target_col {
                labels.push(parse_label(field, line_no)?);
                continue;
            }
            let value: F = field.parse().map_err(|_| DataError::NonNumericCell {
                line: line_no,
                column: columns[col].clone(),
                value: field.to_string(),
            })?;
            if !value.is_finite() {
                return Err(DataError::NonFiniteCell {
                    line: line_no,
                    column: columns[col].clone(),
                    value: field.to_string(),
                });
            }
            features.push(value);
            feature_col += 1;
        }
    }

    // Kinds are provisional until imputation has filled the placeholders.
    let provisional = Schema::new(feature_names.clone(), vec![FeatureKind::Continuous; p], target_name)?;
    let mut table = Table::from_flat(features, labels, provisional)?;
    if !missing.is_empty() {
        let mut mask = vec![vec![false; p]; table.n_rows()];
        for (r, c) in missing {
            mask[r][c] = true;
        }
        table = impute_mean(&table, &mask)?;
    }

    let kinds = (0..p)
        .map(|c| {
            options
                .kind_hints
                .get(&feature_names[c])
                .copied()
                .unwrap_or_else(|| infer_kind(table.column(c)))
        })
        .collect();
    let schema = Schema::new(feature_names, kinds, target_name)?;
    Ok(Table { schema, ..table })
}

fn parse_label(field: &str, line: usize) -> Result<u8, DataError> {
    match field.parse::<f64>() {
        Ok(v) if v == 0.0 => Ok(0),
        Ok(v) if v == 1.0 => Ok(1),
        _ => Err(DataError::NonBinaryLabel { line, value: field.to_string() }),
    }
}

/// Binary when the value set is within {0, 1}; ordinal for at most
/// [`ORDINAL_MAX_DISTINCT`] distinct integers; continuous otherwise.
pub fn infer_kind<F: Scalar>(values: impl Iterator<Item = F>) -> FeatureKind {
    let mut distinct: BTreeSet<u64> = BTreeSet::new();
    let mut all_integer = true;
    for v in values {
        let v = v.as_f64();
        if v.fract() != 0.0 {
            all_integer = false;
        }
        distinct.insert(v.to_bits());
        if !all_integer && distinct.len() > ORDINAL_MAX_DISTINCT {
            return FeatureKind::Continuous;
        }
    }
    let binary = distinct.iter().all(|&b| {
        let v = f64::from_bits(b);
        v == 0.0 || v == 1.0
    });
    if binary {
        FeatureKind::Binary
    } else if all_integer && distinct.len() <= ORDINAL_MAX_DISTINCT {
        FeatureKind::Ordinal
    } else {
        FeatureKind::Continuous
    }
}

/// Serialize as CSV: feature columns in schema order, target column last.
pub fn to_csv<F: Scalar>(table: &Table<F>) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = table.schema().feature_names().iter().map(String::as_str).collect();
    header.push(table.schema().target_name());
    writer.write_record(&header).expect("in-memory write");
    let mut record = Vec::with_capacity(header.len());
    for i in 0..table.n_rows() {
        record.clear();
        record.extend(table.row(i).iter().map(ToString::to_string));
        record.push(table.labels()[i].to_string());
        writer.write_record(&record).expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

/// Replace every masked cell by the mean of the unmasked cells of its column.
///
/// `mask` is indexed `[row][column]`. Unmasked cells, labels and the schema
/// are carried over unchanged.
pub fn impute_mean<F: Scalar>(table: &Table<F>, mask: &[Vec<bool>]) -> Result<Table<F>, DataError> {
    let p = table.n_features();
    if mask.len() != table.n_rows() || mask.iter().any(|r| r.len() != p) {
        return Err(DataError::InvalidTable("missing-value mask shape does not match the table".into()));
    }
    let mut features = table.features.clone();
    for c in 0..p {
        if !mask.iter().any(|r| r[c]) {
            continue;
        }
        let mut sum = F::zero();
        let mut count = 0usize;
        for (i, row_mask) in mask.iter().enumerate() {
            if !row_mask[c] {
                sum += table.get(i, c);
                count += 1;
            }
        }
        if count == 0 {
            return Err(DataError::AllMissingColumn(table.schema().feature_names()[c].clone()));
        }
        let mean = sum / F::from_usize_lossy(count);
        for (i, row_mask) in mask.iter().enumerate() {
            if row_mask[c] {
                features[i * p + c] = mean;
            }
        }
    }
    Ok(Table { features, ..table.clone() })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeatureSummary {
    pub name: String,
    pub kind: FeatureKind,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub counts: ClassCounts,
    pub n_features: usize,
    pub features: Vec<FeatureSummary>,
}

pub fn summarize<F: Scalar>(table: &Table<F>) -> DatasetSummary {
    let features = (0..table.n_features())
        .map(|c| {
            let (mut min, mut max, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
            for v in table.column(c) {
                let v = v.as_f64();
                min = min.min(v);
                max = max.max(v);
                sum += v;
            }
            let n = table.n_rows();
            FeatureSummary {
                name: table.schema().feature_names()[c].clone(),
                kind: table.schema().feature_kinds()[c],
                min: if n == 0 { 0.0 } else { min },
                max: if n == 0 { 0.0 } else { max },
                mean: if n == 0 { 0.0 } else { sum / n as f64 },
            }
        })
        .collect();
    DatasetSummary { counts: class_counts(table), n_features: table.n_features(), features }
}

impl DatasetSummary {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let c = &self.counts;
        let _ = writeln!(out, "rows: {}", c.n_total);
        let _ = writeln!(out, "features: {}", self.n_features);
        let _ = writeln!(out, "positive (1): {}", c.n_positive);
        let _ = writeln!(out, "negative (0): {}", c.n_negative);
        let width = self.features.iter().map(|f| f.name.len()).max().unwrap_or(4).max(7);
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<width$}  {:<10}  {:>14}  {:>14}  {:>14}", "feature", "kind", "min", "max", "mean");
        for f in &self.features {
            let _ = writeln!(
                out,
                "{:<width$}  {:<10}  {:>14.6}  {:>14.6}  {:>14.6}",
                f.name,
                f.kind.as_str(),
                f.min,
                f.max,
                f.mean
            );
        }
        out
    }
}
