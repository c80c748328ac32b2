//! CSV ingestion, NHANES-style row filtering and seeded train/test splits.
//!
//! Missing values are explicit per-cell flags (`None`), never magic numbers:
//! NHANES mixes blanks and special codes, and conflating them with data
//! corrupts every downstream statistic.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Column holding the paper's gender coding: 1 = male, 0 = female.
pub const GENDER_COLUMN: &str = "RIAGENDR";
/// Column holding age in years.
pub const AGE_COLUMN: &str = "RIDAGEYR";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("column {name} not found in the CSV header")]
    MissingColumn { name: String },
    #[error("column {name} is required by the requested filter")]
    RequiredColumn { name: String },
    #[error("the target column {name} cannot also be a feature")]
    TargetIsFeature { name: String },
    #[error("no usable data rows")]
    NoRows,
    #[error("split leaves the {side} side empty")]
    EmptySplit { side: &'static str },
    #[error("train fraction {value} is outside (0, 1)")]
    BadFraction { value: f64 },
    #[error("row {row} has a missing value in column {column}")]
    MissingValue { row: usize, column: String },
}

/// Which gender subset a split works on, per the dataset's 1=male/0=female
/// coding.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Default)]
pub enum GenderFilter {
    #[default]
    All,
    Male,
    Female,
}

impl GenderFilter {
    pub fn parse(text: &str) -> Option<GenderFilter> {
        match text.to_ascii_lowercase().as_str() {
            "all" => Some(GenderFilter::All),
            "male" | "m" => Some(GenderFilter::Male),
            "female" | "f" => Some(GenderFilter::Female),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            GenderFilter::All => "all",
            GenderFilter::Male => "male",
            GenderFilter::Female => "female",
        }
    }
}

/// Seeded train/test segmentation parameters.
#[derive(Clone, Debug)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub gender_filter: GenderFilter,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.8,
            seed: 0,
            gender_filter: GenderFilter::All,
        }
    }
}

/// Named numeric columns with explicit per-cell missingness, a designated
/// target column and an ordered feature list. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    columns: Vec<String>,
    cells: Vec<Vec<Option<f64>>>,
    target: String,
    features: Vec<String>,
}

impl Dataset {
    pub fn new(
        columns: Vec<String>,
        cells: Vec<Vec<Option<f64>>>,
        target: impl Into<String>,
        features: Vec<String>,
    ) -> Result<Dataset, DataError> {
        let target = target.into();
        if features.contains(&target) {
            return Err(DataError::TargetIsFeature { name: target });
        }
        for name in features.iter().chain(std::iter::once(&target)) {
            if !columns.contains(name) {
                return Err(DataError::MissingColumn { name: name.clone() });
            }
        }
        debug_assert!(cells.iter().all(|row| row.len() == columns.len()));
        Ok(Dataset {
            columns,
            cells,
            target,
            features,
        })
    }

    /// Loads the named columns from a CSV file with a header row. Cells that
    /// are empty or fail numeric parsing are marked missing; unrequested
    /// columns are ignored. `extras` are loaded for filtering only (for
    /// example a pregnancy-status column) and do not join the feature set.
    pub fn load_csv(
        path: impl AsRef<Path>,
        target: &str,
        features: &[String],
        extras: &[String],
    ) -> Result<Dataset, DataError> {
        let path = path.as_ref();
        if features.iter().any(|f| f == target) {
            return Err(DataError::TargetIsFeature {
                name: target.to_string(),
            });
        }

        let mut columns: Vec<String> = Vec::new();
        for name in features.iter().chain(extras) {
            if !columns.iter().any(|c| c == name) {
                columns.push(name.clone());
            }
        }
        if !columns.iter().any(|c| c == target) {
            columns.push(target.to_string());
        }

        let file = std::fs::File::open(path).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(file);

        let headers = reader.headers()?.clone();
        let mut positions = Vec::with_capacity(columns.len());
        for name in &columns {
            let pos = headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| DataError::MissingColumn { name: name.clone() })?;
            positions.push(pos);
        }

        let mut cells = Vec::new();
        for record in reader.records() {
            let record = record?;
            let row: Vec<Option<f64>> = positions
                .iter()
                .map(|&pos| record.get(pos).and_then(parse_cell))
                .collect();
            cells.push(row);
        }
        if cells.is_empty() {
            return Err(DataError::NoRows);
        }
        Dataset::new(columns, cells, target, features.to_vec())
    }

    pub fn n_rows(&self) -> usize {
        self.cells.len()
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn feature_columns(&self) -> &[String] {
        &self.features
    }

    pub fn target_column(&self) -> &str {
        &self.target
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn value(&self, row: usize, column: usize) -> Option<f64> {
        self.cells[row][column]
    }

    fn retain_rows(&self, keep: impl Fn(usize) -> bool) -> Dataset {
        Dataset {
            columns: self.columns.clone(),
            cells: self
                .cells
                .iter()
                .enumerate()
                .filter(|(i, _)| keep(*i))
                .map(|(_, row)| row.clone())
                .collect(),
            target: self.target.clone(),
            features: self.features.clone(),
        }
    }

    /// Drops minors (below `min_age`), rows flagged pregnant (value 1 in
    /// `pregnancy_column`) and every row missing a feature or target value.
    /// Rows with a missing age are dropped when the age filter is active.
    pub fn nhanes_filter(
        &self,
        min_age: Option<f64>,
        pregnancy_column: Option<&str>,
    ) -> Result<Dataset, DataError> {
        let age_idx = match min_age {
            Some(_) => Some(self.column_index(AGE_COLUMN).ok_or(DataError::RequiredColumn {
                name: AGE_COLUMN.to_string(),
            })?),
            None => None,
        };
        let preg_idx = match pregnancy_column {
            Some(name) => Some(self.column_index(name).ok_or_else(|| DataError::RequiredColumn {
                name: name.to_string(),
            })?),
            None => None,
        };
        let used: Vec<usize> = self
            .features
            .iter()
            .chain(std::iter::once(&self.target))
            .map(|name| self.column_index(name).expect("validated at construction"))
            .collect();

        Ok(self.retain_rows(|row| {
            if let (Some(idx), Some(age)) = (age_idx, min_age) {
                match self.cells[row][idx] {
                    Some(v) if v >= age => {}
                    _ => return false,
                }
            }
            if let Some(idx) = preg_idx {
                if self.cells[row][idx] == Some(1.0) {
                    return false;
                }
            }
            used.iter().all(|&c| self.cells[row][c].is_some())
        }))
    }

    /// Applies the gender filter, then a seeded uniform shuffle; the first
    /// `ceil(train_fraction * n)` rows become the training side.
    pub fn split(&self, spec: &SplitSpec) -> Result<(Dataset, Dataset), DataError> {
        if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
            return Err(DataError::BadFraction {
                value: spec.train_fraction,
            });
        }
        let filtered = match spec.gender_filter {
            GenderFilter::All => self.clone(),
            side => {
                let idx = self
                    .column_index(GENDER_COLUMN)
                    .ok_or(DataError::RequiredColumn {
                        name: GENDER_COLUMN.to_string(),
                    })?;
                let wanted = if side == GenderFilter::Male { 1.0 } else { 0.0 };
                self.retain_rows(|row| self.cells[row][idx] == Some(wanted))
            }
        };
        let n = filtered.n_rows();
        if n == 0 {
            return Err(DataError::EmptySplit { side: "train" });
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
        let n_train = (spec.train_fraction * n as f64).ceil() as usize;
        if n_train == 0 {
            return Err(DataError::EmptySplit { side: "train" });
        }
        if n_train >= n {
            return Err(DataError::EmptySplit { side: "test" });
        }
        let pick = |rows: &[usize]| Dataset {
            columns: filtered.columns.clone(),
            cells: rows.iter().map(|&r| filtered.cells[r].clone()).collect(),
            target: filtered.target.clone(),
            features: filtered.features.clone(),
        };
        Ok((pick(&order[..n_train]), pick(&order[n_train..])))
    }

    /// Dense feature matrix (feature order preserved) plus target vector.
    /// Fails on any missing cell; run `nhanes_filter` first.
    pub fn to_matrix(&self) -> Result<(Vec<Vec<f64>>, Vec<f64>), DataError> {
        let feature_idx: Vec<usize> = self
            .features
            .iter()
            .map(|name| self.column_index(name).expect("validated at construction"))
            .collect();
        let target_idx = self.column_index(&self.target).expect("validated at construction");
        let mut rows = Vec::with_capacity(self.cells.len());
        let mut target = Vec::with_capacity(self.cells.len());
        for (r, row) in self.cells.iter().enumerate() {
            let mut out = Vec::with_capacity(feature_idx.len());
            for (&c, name) in feature_idx.iter().zip(&self.features) {
                out.push(row[c].ok_or_else(|| DataError::MissingValue {
                    row: r,
                    column: name.clone(),
                })?);
            }
            target.push(row[target_idx].ok_or_else(|| DataError::MissingValue {
                row: r,
                column: self.target.clone(),
            })?);
            rows.push(out);
        }
        Ok((rows, target))
    }
}

fn parse_cell(text: &str) -> Option<f64> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return None;
    }
    trimmed.parse::<f64>().ok().filter(|v| v.is_finite())
}
