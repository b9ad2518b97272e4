use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Rows rejected during CSV ingestion may not exceed this share of the file.
pub const MAX_REJECTED_FRACTION: f64 = 0.1;

/// Feature matrix, target vector and column names.
///
/// Features are stored row-major in one buffer. All entries are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    features: Vec<T>,
    targets: Vec<T>,
    n_features: usize,
    pub feature_names: Vec<String>,
    pub target_name: String,
    /// Free-form origin, e.g. a file path or generator description.
    pub provenance: String,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(
        features: Vec<T>,
        targets: Vec<T>,
        feature_names: Vec<String>,
        target_name: impl Into<String>,
    ) -> Result<Self> {
        let d = feature_names.len();
        if targets.is_empty() {
            return Err(Error::MalformedData("dataset has no rows".into()));
        }
        if d == 0 {
            return Err(Error::MalformedData("dataset has no feature columns".into()));
        }
        if features.len() != targets.len() * d {
            return Err(Error::DimensionMismatch {
                expected: targets.len() * d,
                got: features.len(),
            });
        }
        if features.iter().chain(&targets).any(|v| !v.is_finite()) {
            return Err(Error::MalformedData("non-finite entry".into()));
        }
        Ok(Self {
            features,
            targets,
            n_features: d,
            feature_names,
            target_name: target_name.into(),
            provenance: String::new(),
        })
    }

    /// Builds a dataset from row vectors with generic column names
    /// `x0, x1, …` and `y`.
    pub fn from_rows(rows: &[Vec<T>], targets: Vec<T>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::MalformedData("ragged feature rows".into()));
        }
        let names = (0..d).map(|j| format!("x{j}")).collect();
        Self::new(rows.concat(), targets, names, "y")
    }

    pub fn with_provenance(mut self, p: impl Into<String>) -> Self {
        self.provenance = p.into();
        self
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.features.chunks_exact(self.n_features)
    }

    pub fn target(&self, i: usize) -> T {
        self.targets[i]
    }

    pub fn targets(&self) -> &[T] {
        &self.targets
    }

    pub fn features(&self) -> &[T] {
        &self.features
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = T> + '_ {
        self.rows().map(move |r| r[j])
    }

    /// Rows `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::SplitAudit(format!(
                "row {bad} out of range for {} rows",
                self.len()
            )));
        }
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        let targets = indices.iter().map(|&i| self.targets[i]).collect();
        Ok(Self {
            features,
            targets,
            n_features: self.n_features,
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
            provenance: self.provenance.clone(),
        })
    }

    /// Same shape with features and targets replaced.
    pub(crate) fn with_values(&self, features: Vec<T>, targets: Vec<T>) -> Self {
        debug_assert_eq!(features.len(), self.features.len());
        debug_assert_eq!(targets.len(), self.targets.len());
        Self {
            features,
            targets,
            ..self.clone()
        }
    }

    /// Writes a comma-separated file with a header row; target last.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        let mut header = self.feature_names.clone();
        header.push(self.target_name.clone());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.row(i).iter().map(|v| format!("{v:?}")).collect();
            rec.push(format!("{:?}", self.targets[i]));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Outcome of [`load_csv`].
#[derive(Debug, Clone, PartialEq)]
pub struct LoadReport<T> {
    pub dataset: Dataset<T>,
    /// Rows dropped for unparsable or non-finite fields, or wrong width.
    pub rejected: usize,
}

/// Reads a comma-separated file with a mandatory header row.
///
/// `target` names the target column; the last column is used when it is
/// `None`. Rows with a field that does not parse as a finite number are
/// dropped with a warning; more than [`MAX_REJECTED_FRACTION`] of them is
/// an error.
pub fn load_csv<T: Scalar>(path: impl AsRef<Path>, target: Option<&str>) -> Result<LoadReport<T>> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header.len() < 2 {
        return Err(Error::MalformedData(format!(
            "{}: need at least one feature and one target column",
            path.display()
        )));
    }
    let t_col = match target {
        Some(name) => header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_owned()))?,
        None => header.len() - 1,
    };
    let mut features = Vec::new();
    let mut targets = Vec::new();
    let mut rejected = 0;
    let mut total = 0;
    let mut row = Vec::with_capacity(header.len());
    for rec in rdr.records() {
        let rec = rec?;
        total += 1;
        row.clear();
        let ok = rec.len() == header.len()
            && rec.iter().all(|f| match f.parse::<f64>() {
                Ok(v) if v.is_finite() => {
                    row.push(v);
                    true
                }
                _ => false,
            });
        if !ok {
            rejected += 1;
            continue;
        }
        for (j, &v) in row.iter().enumerate() {
            if j == t_col {
                targets.push(T::lit(v));
            } else {
                features.push(T::lit(v));
            }
        }
    }
    if rejected > 0 {
        log::warn!("{}: rejected {rejected} of {total} rows", path.display());
    }
    if total == 0 || rejected as f64 > MAX_REJECTED_FRACTION * total as f64 {
        return Err(Error::TooManyRejected { rejected, total });
    }
    let mut names = header;
    let target_name = names.remove(t_col);
    let dataset = Dataset::new(features, targets, names, target_name)?.with_provenance(path.display().to_string());
    Ok(LoadReport { dataset, rejected })
}
