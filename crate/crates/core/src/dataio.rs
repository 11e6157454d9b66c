//! Circuit datasets: feature schema, CSV/TOML ingestion, min-max scaling to
//! the generator's tanh range and seeded train/test splits.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use log::warn;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureRole {
    SimulatorInput,
    SimulatorOutput,
}

/// MOSFET process corner. The numeric code is what a dataset row stores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Corner {
    TT,
    FF,
    SS,
    FS,
    SF,
}

impl Corner {
    pub const ALL: [Corner; 5] = [Corner::TT, Corner::FF, Corner::SS, Corner::FS, Corner::SF];

    pub fn code(self) -> f64 {
        self as u8 as f64
    }

    /// Nearest valid corner for a (possibly generated, non-integer) code.
    pub fn from_code(code: f64) -> Corner {
        let idx = code.round().clamp(0.0, 4.0) as usize;
        Corner::ALL[idx]
    }

    pub fn name(self) -> &'static str {
        match self {
            Corner::TT => "TT",
            Corner::FF => "FF",
            Corner::SS => "SS",
            Corner::FS => "FS",
            Corner::SF => "SF",
        }
    }
}

impl fmt::Display for Corner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Corner {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Corner::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::validation(format!("unknown process corner `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    pub role: FeatureRole,
    #[serde(default)]
    pub unit: String,
    #[serde(default)]
    pub categorical: bool,
}

impl Feature {
    pub fn input(name: &str, unit: &str) -> Self {
        Self {
            name: name.to_string(),
            role: FeatureRole::SimulatorInput,
            unit: unit.to_string(),
            categorical: false,
        }
    }

    pub fn output(name: &str, unit: &str) -> Self {
        Self {
            name: name.to_string(),
            role: FeatureRole::SimulatorOutput,
            unit: unit.to_string(),
            categorical: false,
        }
    }

    pub fn corner(name: &str) -> Self {
        Self {
            name: name.to_string(),
            role: FeatureRole::SimulatorInput,
            unit: String::new(),
            categorical: true,
        }
    }
}

/// Ordered feature list; column `i` of a dataset is feature `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    #[serde(rename = "feature")]
    features: Vec<Feature>,
}

impl FeatureSchema {
    pub fn new(features: Vec<Feature>) -> Result<Self> {
        let mut seen = HashSet::new();
        for f in &features {
            if f.name.is_empty() {
                return Err(Error::validation("feature names must be non-empty"));
            }
            if !seen.insert(f.name.as_str()) {
                return Err(Error::validation(format!("duplicate feature name `{}`", f.name)));
            }
        }
        if !features.iter().any(|f| f.role == FeatureRole::SimulatorInput) {
            return Err(Error::validation("schema needs at least one simulator_input feature"));
        }
        if !features.iter().any(|f| f.role == FeatureRole::SimulatorOutput) {
            return Err(Error::validation("schema needs at least one simulator_output feature"));
        }
        Ok(Self { features })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: FeatureSchema = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        Self::new(raw.features)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("schema serializes to TOML")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.features.iter().map(|f| f.name.as_str()).collect()
    }

    pub fn indices_with_role(&self, role: FeatureRole) -> Vec<usize> {
        (0..self.features.len()).filter(|&i| self.features[i].role == role).collect()
    }

    pub fn input_indices(&self) -> Vec<usize> {
        self.indices_with_role(FeatureRole::SimulatorInput)
    }

    pub fn output_indices(&self) -> Vec<usize> {
        self.indices_with_role(FeatureRole::SimulatorOutput)
    }

    pub fn categorical_mask(&self) -> Vec<bool> {
        self.features.iter().map(|f| f.categorical).collect()
    }
}

/// Rows of circuit samples in physical units.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: FeatureSchema,
    rows: Matrix,
}

impl Dataset {
    pub fn new(schema: FeatureSchema, rows: Matrix) -> Result<Self> {
        if rows.cols() != schema.len() {
            return Err(Error::Dimension {
                context: "dataset columns vs schema",
                expected: schema.len(),
                got: rows.cols(),
            });
        }
        if !rows.is_finite() {
            return Err(Error::validation("dataset contains non-finite values"));
        }
        Ok(Self { schema, rows })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn rows(&self) -> &Matrix {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.rows() == 0
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let idx = self
            .schema
            .index_of(name)
            .ok_or_else(|| Error::validation(format!("unknown feature `{name}`")))?;
        Ok(self.rows.col(idx))
    }

    pub fn select_rows(&self, idx: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            rows: self.rows.select_rows(idx),
        }
    }

    /// Appends the rows of `other`, which must share this schema.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.schema != other.schema {
            return Err(Error::validation("cannot concatenate datasets with different schemas"));
        }
        Ok(Dataset {
            schema: self.schema.clone(),
            rows: self.rows.vstack(&other.rows)?,
        })
    }

    pub fn input_matrix(&self) -> Matrix {
        self.rows.select_cols(&self.schema.input_indices())
    }

    pub fn output_matrix(&self) -> Matrix {
        self.rows.select_cols(&self.schema.output_indices())
    }

    /// Writes the header plus one line per row. Categorical columns are
    /// written by corner name; numbers use the shortest round-trip form.
    pub fn to_csv_string(&self) -> String {
        let mut out = self.schema.names().join(",");
        out.push('\n');
        let cat = self.schema.categorical_mask();
        for r in 0..self.rows.rows() {
            let cells: Vec<String> = self
                .rows
                .row(r)
                .iter()
                .zip(&cat)
                .map(|(&v, &is_cat)| {
                    if is_cat {
                        Corner::from_code(v).name().to_string()
                    } else {
                        format!("{v:?}")
                    }
                })
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }
}

/// Reads a dataset CSV whose header names every schema feature. Columns may
/// appear in any order; extra columns are ignored.
pub fn load_csv(path: &Path, schema_path: &Path) -> Result<Dataset> {
    let schema = FeatureSchema::load(schema_path)?;
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, schema, path)
}

pub fn parse_csv(text: &str, schema: FeatureSchema, path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?
        .clone();
    let positions: HashMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let mut columns = Vec::with_capacity(schema.len());
    for f in schema.features() {
        match positions.get(f.name.as_str()) {
            Some(&i) => columns.push(i),
            None => {
                return Err(Error::Csv {
                    path: path.to_path_buf(),
                    row: 1,
                    column: f.name.clone(),
                    detail: "column missing from header".into(),
                })
            }
        }
    }
    if header.len() > schema.len() {
        warn!("{}: ignoring {} column(s) not in the schema", path.display(), header.len() - schema.len());
    }

    let mut data = Vec::new();
    let mut n = 0usize;
    for (r, record) in reader.records().enumerate() {
        // header is line 1
        let line = r + 2;
        let record = record.map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            row: line,
            column: String::new(),
            detail: e.to_string(),
        })?;
        for (f, &ci) in schema.features().iter().zip(&columns) {
            let cell = record.get(ci).unwrap_or("");
            let bad = |detail: String| Error::Csv {
                path: path.to_path_buf(),
                row: line,
                column: f.name.clone(),
                detail,
            };
            let value = if f.categorical {
                match cell.parse::<Corner>() {
                    Ok(c) => c.code(),
                    Err(_) => {
                        let v: f64 = cell.parse().map_err(|_| bad(format!("`{cell}` is not a process corner")))?;
                        if v.fract() != 0.0 || !(0.0..=4.0).contains(&v) {
                            return Err(bad(format!("`{cell}` is not a valid corner code")));
                        }
                        v
                    }
                }
            } else {
                cell.parse::<f64>().map_err(|_| bad(format!("cannot parse `{cell}` as a number")))?
            };
            if !value.is_finite() {
                return Err(bad(format!("non-finite value `{cell}`")));
            }
            data.push(value);
        }
        n += 1;
    }
    let rows = Matrix::new(n, schema.len(), data)?;
    Dataset::new(schema, rows)
}

/// Per-feature affine map of `[min, max]` onto `[-1, 1]`.
///
/// A default-constructed scaler is unfitted and refuses to transform.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    min: Vec<f64>,
    max: Vec<f64>,
    categorical: Vec<bool>,
}

impl MinMaxScaler {
    pub fn fit(data: &Dataset) -> Result<Self> {
        Self::fit_matrix(data.rows(), data.schema().categorical_mask())
    }

    pub fn fit_matrix(rows: &Matrix, categorical: Vec<bool>) -> Result<Self> {
        if rows.rows() == 0 {
            return Err(Error::validation("cannot fit a scaler on an empty dataset"));
        }
        if categorical.len() != rows.cols() {
            return Err(Error::Dimension {
                context: "scaler categorical mask",
                expected: rows.cols(),
                got: categorical.len(),
            });
        }
        let mut min = vec![f64::INFINITY; rows.cols()];
        let mut max = vec![f64::NEG_INFINITY; rows.cols()];
        for r in 0..rows.rows() {
            for (c, &v) in rows.row(r).iter().enumerate() {
                min[c] = min[c].min(v);
                max[c] = max[c].max(v);
            }
        }
        Ok(Self { min, max, categorical })
    }

    pub fn is_fitted(&self) -> bool {
        !self.min.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn min(&self) -> &[f64] {
        &self.min
    }

    pub fn max(&self) -> &[f64] {
        &self.max
    }

    pub fn is_degenerate(&self, feature: usize) -> bool {
        self.max[feature] == self.min[feature]
    }

    /// Scaler restricted to a subset of columns, in the given order.
    pub fn select(&self, idx: &[usize]) -> MinMaxScaler {
        MinMaxScaler {
            min: idx.iter().map(|&i| self.min[i]).collect(),
            max: idx.iter().map(|&i| self.max[i]).collect(),
            categorical: idx.iter().map(|&i| self.categorical[i]).collect(),
        }
    }

    fn check(&self, rows: &Matrix) -> Result<()> {
        if !self.is_fitted() {
            return Err(Error::validation("scaler used before it was fitted"));
        }
        if rows.cols() != self.dim() {
            return Err(Error::Dimension {
                context: "scaler columns",
                expected: self.dim(),
                got: rows.cols(),
            });
        }
        Ok(())
    }

    /// Maps physical values into `[-1, 1]`, clamping anything outside the
    /// fitted range. Degenerate features map to 0.
    pub fn transform(&self, rows: &Matrix) -> Result<Matrix> {
        self.transform_impl(rows, true)
    }

    /// [`transform`](Self::transform) without the clamping warning, for
    /// data that is expected to leave the fitted range.
    pub fn transform_quiet(&self, rows: &Matrix) -> Result<Matrix> {
        self.transform_impl(rows, false)
    }

    fn transform_impl(&self, rows: &Matrix, warn_clamp: bool) -> Result<Matrix> {
        self.check(rows)?;
        let mut clamped = 0usize;
        let mut out = rows.clone();
        for r in 0..out.rows() {
            for (c, v) in out.row_mut(r).iter_mut().enumerate() {
                let (lo, hi) = (self.min[c], self.max[c]);
                if hi == lo {
                    *v = 0.0;
                    continue;
                }
                let s = 2.0 * (*v - lo) / (hi - lo) - 1.0;
                if !(-1.0..=1.0).contains(&s) {
                    clamped += 1;
                }
                *v = s.clamp(-1.0, 1.0);
            }
        }
        if clamped > 0 && warn_clamp {
            warn!("scaler clamped {clamped} out-of-range value(s) to [-1, 1]");
        }
        Ok(out)
    }

    /// Inverse map back to physical units. Degenerate features return their
    /// constant; categorical features snap to the nearest valid code.
    pub fn inverse_transform(&self, rows: &Matrix) -> Result<Matrix> {
        self.check(rows)?;
        let mut out = rows.clone();
        for r in 0..out.rows() {
            for (c, v) in out.row_mut(r).iter_mut().enumerate() {
                let (lo, hi) = (self.min[c], self.max[c]);
                let x = if hi == lo { lo } else { (*v + 1.0) * 0.5 * (hi - lo) + lo };
                *v = if self.categorical[c] {
                    Corner::from_code(x).code().clamp(lo, hi.max(lo))
                } else {
                    x
                };
            }
        }
        Ok(out)
    }
}

/// Seeded disjoint split. `round(n · test_fraction)` rows go to the test
/// side, kept within `[1, n - 1]` when `n >= 2`.
pub fn split(data: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::validation(format!(
            "test_fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let n = data.len();
    if n < 2 {
        return Err(Error::validation("need at least two rows to split"));
    }
    let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, "split"));
    let (test_idx, train_idx) = idx.split_at(n_test);
    Ok((data.select_rows(train_idx), data.select_rows(test_idx)))
}
