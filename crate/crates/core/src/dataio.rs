//! Dataset ingestion, schema inference, leakage-safe splitting, and the
//! invertible mixed-type preprocessing transforms.
//!
//! Numeric columns are mapped through the empirical CDF to standard-normal
//! values (rank / (n+1) with linear interpolation between grid points, so the
//! extremes stay finite); categorical columns are integer-encoded against a
//! lexicographically sorted vocabulary. Both transforms fit on the train
//! split only and invert exactly up to quantile-grid resolution.

use std::collections::BTreeSet;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::ContinuousCDF;

use crate::error::{Error, Result};

/// How a column participates in the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ColumnKind {
    Numeric,
    /// Vocabulary is sorted lexicographically and deduplicated at fit time.
    Categorical { vocab: Vec<String> },
}

impl ColumnKind {
    pub fn is_numeric(&self) -> bool {
        matches!(self, ColumnKind::Numeric)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
}

/// Column layout contract shared by every downstream module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub columns: Vec<ColumnSpec>,
    /// Class-label column, excluded from generative features.
    pub label: Option<String>,
}

impl FeatureSchema {
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column name {:?}", c.name)));
            }
            if let ColumnKind::Categorical { vocab } = &c.kind {
                let mut sorted = vocab.clone();
                sorted.sort();
                sorted.dedup();
                if sorted != *vocab {
                    return Err(Error::Schema(format!(
                        "vocab of column {:?} must be sorted and unique",
                        c.name
                    )));
                }
            }
        }
        if let Some(label) = &self.label {
            if !self.columns.iter().any(|c| &c.name == label) {
                return Err(Error::Schema(format!("label column {:?} not present", label)));
            }
        }
        Ok(())
    }

    /// Generative feature columns: everything except the label.
    pub fn feature_columns(&self) -> Vec<&ColumnSpec> {
        self.columns
            .iter()
            .filter(|c| self.label.as_deref() != Some(c.name.as_str()))
            .collect()
    }

    pub fn column(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// Width of the encoded feature matrix (one slot per feature column).
    pub fn n_features(&self) -> usize {
        self.feature_columns().len()
    }
}

/// Raw column storage straight out of the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ColumnData {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A loaded dataset: schema plus per-column data, columns parallel to
/// `schema.columns`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Table {
    pub schema: FeatureSchema,
    pub columns: Vec<ColumnData>,
}

impl Table {
    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, |c| c.len())
    }

    /// Select a subset of rows (by index) into a new table.
    pub fn select(&self, rows: &[usize]) -> Table {
        let columns = self
            .columns
            .iter()
            .map(|c| match c {
                ColumnData::Numeric(v) => ColumnData::Numeric(rows.iter().map(|&i| v[i]).collect()),
                ColumnData::Categorical(v) => {
                    ColumnData::Categorical(rows.iter().map(|&i| v[i].clone()).collect())
                }
            })
            .collect();
        Table {
            schema: self.schema.clone(),
            columns,
        }
    }

    /// Label value per row, if a label column is configured.
    pub fn labels(&self) -> Option<Vec<String>> {
        let label = self.schema.label.as_deref()?;
        let idx = self.schema.columns.iter().position(|c| c.name == label)?;
        Some(match &self.columns[idx] {
            ColumnData::Categorical(v) => v.clone(),
            ColumnData::Numeric(v) => v.iter().map(|x| format!("{x}")).collect(),
        })
    }

    /// Distinct label values in sorted order.
    pub fn classes(&self) -> Option<Vec<String>> {
        let labels = self.labels()?;
        Some(labels.into_iter().collect::<BTreeSet<_>>().into_iter().collect())
    }
}

/// Options controlling CSV loading and schema inference.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoadOptions {
    /// A numeric-parseable column with at most this many distinct values is
    /// treated as categorical during inference.
    pub categorical_threshold: usize,
    /// Name of the label column, if any.
    pub label: Option<String>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            categorical_threshold: 16,
            label: None,
        }
    }
}

/// Load a headered CSV. With a schema, columns are validated by name and
/// parsed per their declared kind; without one, kinds are inferred (a column
/// is categorical if any cell fails to parse as a number or if its distinct
/// count is at most the configured threshold).
pub fn load_csv(path: &Path, schema: Option<&FeatureSchema>, opts: &LoadOptions) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::io(path.display().to_string(), std::io::Error::other(e)))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .iter()
        .map(|s| s.to_string())
        .collect();
    if headers.is_empty() {
        return Err(Error::Csv("empty header row".into()));
    }
    let mut cells: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Csv(format!("row {}: {e}", row_idx + 1)))?;
        if record.len() != headers.len() {
            return Err(Error::Csv(format!(
                "row {}: expected {} fields, found {}",
                row_idx + 1,
                headers.len(),
                record.len()
            )));
        }
        for (col, field) in record.iter().enumerate() {
            if field.is_empty() {
                return Err(Error::MissingValue {
                    row: row_idx + 1,
                    column: headers[col].clone(),
                });
            }
            cells[col].push(field.to_string());
        }
    }

    match schema {
        Some(schema) => {
            let names: Vec<&str> = schema.columns.iter().map(|c| c.name.as_str()).collect();
            if names != headers.iter().map(|s| s.as_str()).collect::<Vec<_>>() {
                return Err(Error::Schema(format!(
                    "csv columns {headers:?} do not match schema columns {names:?}"
                )));
            }
            let mut columns = Vec::with_capacity(schema.columns.len());
            for (ci, spec) in schema.columns.iter().enumerate() {
                columns.push(parse_column(&cells[ci], spec)?);
            }
            Ok(Table {
                schema: schema.clone(),
                columns,
            })
        }
        None => {
            let mut columns = Vec::with_capacity(headers.len());
            let mut specs = Vec::with_capacity(headers.len());
            for (ci, name) in headers.iter().enumerate() {
                let is_label = opts.label.as_deref() == Some(name.as_str());
                let parsed: Option<Vec<f64>> =
                    cells[ci].iter().map(|s| parse_f64(s)).collect::<Option<Vec<f64>>>();
                let distinct = cells[ci].iter().collect::<BTreeSet<_>>().len();
                let categorical =
                    is_label || parsed.is_none() || distinct <= opts.categorical_threshold;
                if categorical {
                    let vocab: Vec<String> =
                        cells[ci].iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
                    specs.push(ColumnSpec {
                        name: name.clone(),
                        kind: ColumnKind::Categorical { vocab },
                    });
                    columns.push(ColumnData::Categorical(cells[ci].clone()));
                } else {
                    specs.push(ColumnSpec {
                        name: name.clone(),
                        kind: ColumnKind::Numeric,
                    });
                    columns.push(ColumnData::Numeric(parsed.unwrap()));
                }
            }
            let schema = FeatureSchema {
                columns: specs,
                label: opts.label.clone(),
            };
            schema.validate()?;
            Ok(Table { schema, columns })
        }
    }
}

fn parse_f64(s: &str) -> Option<f64> {
    let v: f64 = s.parse().ok()?;
    v.is_finite().then_some(v)
}

fn parse_column(cells: &[String], spec: &ColumnSpec) -> Result<ColumnData> {
    match &spec.kind {
        ColumnKind::Numeric => {
            let mut out = Vec::with_capacity(cells.len());
            for (row, s) in cells.iter().enumerate() {
                match parse_f64(s) {
                    Some(v) => out.push(v),
                    None => {
                        return Err(Error::BadNumericCell {
                            row: row + 1,
                            column: spec.name.clone(),
                            value: s.clone(),
                        })
                    }
                }
            }
            Ok(ColumnData::Numeric(out))
        }
        ColumnKind::Categorical { .. } => Ok(ColumnData::Categorical(cells.to_vec())),
    }
}

/// Write a table back to CSV in schema column order.
pub fn write_csv(path: &Path, table: &Table) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::io(path.display().to_string(), std::io::Error::other(e)))?;
    let headers: Vec<&str> = table.schema.columns.iter().map(|c| c.name.as_str()).collect();
    writer.write_record(&headers).map_err(|e| Error::Csv(e.to_string()))?;
    for row in 0..table.n_rows() {
        let mut record: Vec<String> = Vec::with_capacity(table.columns.len());
        for col in &table.columns {
            match col {
                ColumnData::Numeric(v) => record.push(format_f64(v[row])),
                ColumnData::Categorical(v) => record.push(v[row].clone()),
            }
        }
        writer.write_record(&record).map_err(|e| Error::Csv(e.to_string()))?;
    }
    writer.flush().map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

/// Shortest representation that round-trips; integers keep a trailing ".0"
/// so reloading infers the column as numeric.
fn format_f64(v: f64) -> String {
    let mut s = format!("{v}");
    if !s.contains('.') && !s.contains('e') && !s.contains("inf") && !s.contains("NaN") {
        s.push_str(".0");
    }
    s
}

/// Disjoint 70/15/15 row-index sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

/// Deterministic shuffle-split: floor(0.70 n) train, floor(0.15 n) val,
/// remainder test. Index lists are sorted for stable downstream iteration.
pub fn split(n_rows: usize, seed: u64) -> Result<DatasetSplit> {
    if n_rows < 10 {
        return Err(Error::invalid(format!(
            "need at least 10 rows to split, got {n_rows}"
        )));
    }
    let mut order: Vec<usize> = (0..n_rows).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n_train = (n_rows as f64 * 0.70).floor() as usize;
    let n_val = (n_rows as f64 * 0.15).floor() as usize;
    let mut train: Vec<usize> = order[..n_train].to_vec();
    let mut val: Vec<usize> = order[n_train..n_train + n_val].to_vec();
    let mut test: Vec<usize> = order[n_train + n_val..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(DatasetSplit {
        train,
        val,
        test,
        seed,
    })
}

/// Policy for categorical values never seen at fit time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnseenPolicy {
    Reject,
    /// Map to the reserved index `vocab.len()`; inverse yields "<unknown>".
    Unknown,
}

/// Per-numeric-column empirical quantile map. Grid values are the distinct
/// sorted train values with averaged rank probabilities for duplicates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuantileMap {
    /// Distinct train values, ascending.
    grid: Vec<f64>,
    /// Rank probability per grid value, strictly increasing in (0, 1).
    probs: Vec<f64>,
    /// Constant columns transform to 0 and invert to the constant.
    constant: bool,
}

impl QuantileMap {
    pub fn fit(values: &[f64]) -> Self {
        let n = values.len();
        let mut sorted: Vec<f64> = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut grid = Vec::new();
        let mut probs = Vec::new();
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && sorted[j + 1] == sorted[i] {
                j += 1;
            }
            // average 1-based rank of the duplicate run
            let rank = (i + 1 + j + 1) as f64 / 2.0;
            grid.push(sorted[i]);
            probs.push(rank / (n as f64 + 1.0));
            i = j + 1;
        }
        let constant = grid.len() <= 1;
        QuantileMap {
            grid,
            probs,
            constant,
        }
    }

    pub fn forward(&self, x: f64) -> f64 {
        if self.constant {
            return 0.0;
        }
        let p = if x <= self.grid[0] {
            self.probs[0]
        } else if x >= *self.grid.last().unwrap() {
            *self.probs.last().unwrap()
        } else {
            match self.grid.binary_search_by(|g| g.total_cmp(&x)) {
                Ok(i) => self.probs[i],
                Err(i) => {
                    let (x0, x1) = (self.grid[i - 1], self.grid[i]);
                    let (p0, p1) = (self.probs[i - 1], self.probs[i]);
                    p0 + (p1 - p0) * (x - x0) / (x1 - x0)
                }
            }
        };
        normal_ppf(p)
    }

    pub fn inverse(&self, z: f64) -> f64 {
        if self.constant {
            return self.grid.first().copied().unwrap_or(0.0);
        }
        let p = normal_cdf(z);
        if p <= self.probs[0] {
            return self.grid[0];
        }
        if p >= *self.probs.last().unwrap() {
            return *self.grid.last().unwrap();
        }
        match self.probs.binary_search_by(|q| q.total_cmp(&p)) {
            Ok(i) => self.grid[i],
            Err(i) => {
                let (p0, p1) = (self.probs[i - 1], self.probs[i]);
                let (x0, x1) = (self.grid[i - 1], self.grid[i]);
                x0 + (x1 - x0) * (p - p0) / (p1 - p0)
            }
        }
    }

    /// Largest gap between adjacent grid values (round-trip resolution).
    pub fn grid_spacing(&self) -> f64 {
        self.grid.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }
}

fn standard_normal() -> statrs::distribution::Normal {
    statrs::distribution::Normal::new(0.0, 1.0).unwrap()
}

fn normal_ppf(p: f64) -> f64 {
    if p == 0.5 {
        return 0.0;
    }
    standard_normal().inverse_cdf(p)
}

fn normal_cdf(z: f64) -> f64 {
    standard_normal().cdf(z)
}

/// Per-column transform state fitted on the train split.
#[derive(Debug, Clone, Serialize, Deserialize)]
enum ColumnTransform {
    Quantile(QuantileMap),
    /// value -> index per the schema vocab order.
    Integer { vocab: Vec<String> },
}

/// Fitted mixed-type preprocessing: quantile-Gaussian numerics, integer
/// categoricals. Refuses to fit on anything but the train split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Preprocessor {
    schema: FeatureSchema,
    transforms: Vec<ColumnTransform>,
    /// Feature-column names in encoded order.
    feature_names: Vec<String>,
    pub fit_split: String,
    pub unseen_policy: UnseenPolicy,
    /// Names of constant numeric columns found at fit time.
    pub constant_columns: Vec<String>,
}

/// Fit the preprocessor on train-split rows. `fit_split` must be "train";
/// anything else is rejected to keep the leakage contract explicit.
pub fn fit_preprocessor(
    train: &Table,
    fit_split: &str,
    unseen_policy: UnseenPolicy,
) -> Result<Preprocessor> {
    if fit_split != "train" {
        return Err(Error::invalid(format!(
            "preprocessor must fit on the train split, got {fit_split:?}"
        )));
    }
    train.schema.validate()?;
    let mut transforms = Vec::new();
    let mut feature_names = Vec::new();
    let mut constant_columns = Vec::new();
    for (spec, data) in train.schema.columns.iter().zip(&train.columns) {
        if train.schema.label.as_deref() == Some(spec.name.as_str()) {
            continue;
        }
        feature_names.push(spec.name.clone());
        match (&spec.kind, data) {
            (ColumnKind::Numeric, ColumnData::Numeric(values)) => {
                let qm = QuantileMap::fit(values);
                if qm.constant {
                    log::warn!(
                        "numeric column {:?} is constant on train; mapping to zeros",
                        spec.name
                    );
                    constant_columns.push(spec.name.clone());
                }
                transforms.push(ColumnTransform::Quantile(qm));
            }
            (ColumnKind::Categorical { vocab }, ColumnData::Categorical(_)) => {
                transforms.push(ColumnTransform::Integer { vocab: vocab.clone() });
            }
            _ => {
                return Err(Error::Schema(format!(
                    "column {:?}: data does not match declared kind",
                    spec.name
                )))
            }
        }
    }
    Ok(Preprocessor {
        schema: train.schema.clone(),
        transforms,
        feature_names,
        fit_split: fit_split.to_string(),
        unseen_policy,
        constant_columns,
    })
}

impl Preprocessor {
    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Indices (in encoded order) of numeric features.
    pub fn numeric_feature_indices(&self) -> Vec<usize> {
        self.transforms
            .iter()
            .enumerate()
            .filter(|(_, t)| matches!(t, ColumnTransform::Quantile(_)))
            .map(|(i, _)| i)
            .collect()
    }

    /// (index in encoded order, vocab) of categorical features.
    pub fn categorical_features(&self) -> Vec<(usize, &Vec<String>)> {
        self.transforms
            .iter()
            .enumerate()
            .filter_map(|(i, t)| match t {
                ColumnTransform::Integer { vocab } => Some((i, vocab)),
                _ => None,
            })
            .collect()
    }

    /// Round-trip resolution per numeric feature (largest quantile-grid gap).
    pub fn grid_spacing(&self, feature_idx: usize) -> Option<f64> {
        match &self.transforms[feature_idx] {
            ColumnTransform::Quantile(q) => Some(q.grid_spacing()),
            _ => None,
        }
    }

    /// Encode a table's feature columns into an [n_rows, n_features] matrix:
    /// numerics to standard-normal values, categoricals to integer indices.
    pub fn transform(&self, table: &Table) -> Result<Array2<f64>> {
        if table.schema.columns != self.schema.columns {
            return Err(Error::Schema("table schema does not match fitted schema".into()));
        }
        let n = table.n_rows();
        let mut out = Array2::zeros((n, self.n_features()));
        let mut fi = 0;
        for (spec, data) in table.schema.columns.iter().zip(&table.columns) {
            if table.schema.label.as_deref() == Some(spec.name.as_str()) {
                continue;
            }
            match (&self.transforms[fi], data) {
                (ColumnTransform::Quantile(q), ColumnData::Numeric(values)) => {
                    for (r, &v) in values.iter().enumerate() {
                        if !v.is_finite() {
                            return Err(Error::NonFinite {
                                context: format!("column {:?} row {r}", spec.name),
                            });
                        }
                        out[[r, fi]] = q.forward(v);
                    }
                }
                (ColumnTransform::Integer { vocab }, ColumnData::Categorical(values)) => {
                    for (r, v) in values.iter().enumerate() {
                        match vocab.binary_search(v) {
                            Ok(idx) => out[[r, fi]] = idx as f64,
                            Err(_) => match self.unseen_policy {
                                UnseenPolicy::Reject => {
                                    return Err(Error::UnseenCategory {
                                        column: spec.name.clone(),
                                        value: v.clone(),
                                    })
                                }
                                UnseenPolicy::Unknown => out[[r, fi]] = vocab.len() as f64,
                            },
                        }
                    }
                }
                _ => {
                    return Err(Error::Schema(format!(
                        "column {:?}: data does not match fitted transform",
                        spec.name
                    )))
                }
            }
            fi += 1;
        }
        Ok(out)
    }

    /// Decode an encoded matrix back to original-space feature columns.
    /// The result has no label column.
    pub fn inverse_transform(&self, encoded: &Array2<f64>) -> Result<Vec<ColumnData>> {
        if encoded.ncols() != self.n_features() {
            return Err(Error::shape(format!(
                "encoded width {} != feature count {}",
                encoded.ncols(),
                self.n_features()
            )));
        }
        let mut out = Vec::with_capacity(self.n_features());
        for (fi, transform) in self.transforms.iter().enumerate() {
            match transform {
                ColumnTransform::Quantile(q) => {
                    let col = encoded.column(fi).iter().map(|&z| q.inverse(z)).collect();
                    out.push(ColumnData::Numeric(col));
                }
                ColumnTransform::Integer { vocab } => {
                    let mut col = Vec::with_capacity(encoded.nrows());
                    for &z in encoded.column(fi) {
                        let idx = z.round() as i64;
                        if idx >= 0 && (idx as usize) < vocab.len() {
                            col.push(vocab[idx as usize].clone());
                        } else if self.unseen_policy == UnseenPolicy::Unknown
                            && idx == vocab.len() as i64
                        {
                            col.push("<unknown>".to_string());
                        } else {
                            return Err(Error::invalid(format!(
                                "categorical index {idx} out of range for vocab of {}",
                                vocab.len()
                            )));
                        }
                    }
                    out.push(ColumnData::Categorical(col));
                }
            }
        }
        Ok(out)
    }

    /// One-hot expand an encoded matrix for metric geometry: numerics copied
    /// through, each categorical index expanded to an indicator block.
    pub fn one_hot_expand(&self, encoded: &Array2<f64>) -> Result<Array2<f64>> {
        if encoded.ncols() != self.n_features() {
            return Err(Error::shape(format!(
                "encoded width {} != feature count {}",
                encoded.ncols(),
                self.n_features()
            )));
        }
        let width: usize = self
            .transforms
            .iter()
            .map(|t| match t {
                ColumnTransform::Quantile(_) => 1,
                ColumnTransform::Integer { vocab } => vocab.len(),
            })
            .sum();
        let mut out = Array2::zeros((encoded.nrows(), width));
        for r in 0..encoded.nrows() {
            let mut c = 0;
            for (fi, t) in self.transforms.iter().enumerate() {
                match t {
                    ColumnTransform::Quantile(_) => {
                        out[[r, c]] = encoded[[r, fi]];
                        c += 1;
                    }
                    ColumnTransform::Integer { vocab } => {
                        let idx = encoded[[r, fi]].round() as usize;
                        if idx < vocab.len() {
                            out[[r, c + idx]] = 1.0;
                        }
                        c += vocab.len();
                    }
                }
            }
        }
        Ok(out)
    }

    /// Rebuild a full table (features + optional label column) from decoded
    /// feature columns and per-row labels.
    pub fn rebuild_table(
        &self,
        features: Vec<ColumnData>,
        labels: Option<Vec<String>>,
    ) -> Result<Table> {
        let mut columns = Vec::with_capacity(self.schema.columns.len());
        let mut fi = 0;
        for spec in &self.schema.columns {
            if self.schema.label.as_deref() == Some(spec.name.as_str()) {
                let labels = labels
                    .clone()
                    .ok_or_else(|| Error::invalid("labels required to rebuild a labeled table"))?;
                columns.push(ColumnData::Categorical(labels));
            } else {
                columns.push(features[fi].clone());
                fi += 1;
            }
        }
        Ok(Table {
            schema: self.schema.clone(),
            columns,
        })
    }
}
