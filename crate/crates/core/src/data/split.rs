use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::iforest::{ForestParams, IsolationForest};
use super::Dataset;
use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::scalar::Scalar;

const MANIFEST_HEADER: &str = "# bvmreg split manifest v1";

/// Row indices of a train/test partition, each side sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub n_rows: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitIndices {
    /// Checks that the sides are disjoint, in range, and cover every row.
    pub fn audit(&self) -> Result<()> {
        let mut seen = vec![0u8; self.n_rows];
        for &i in self.train.iter().chain(&self.test) {
            if i >= self.n_rows {
                return Err(Error::SplitAudit(format!("row {i} out of range")));
            }
            seen[i] += 1;
        }
        if let Some(i) = seen.iter().position(|&c| c != 1) {
            return Err(Error::SplitAudit(if seen[i] == 0 {
                format!("row {i} is on neither side")
            } else {
                format!("row {i} is on both sides")
            }));
        }
        Ok(())
    }

    pub fn apply<T: Scalar>(&self, data: &Dataset<T>) -> Result<(Dataset<T>, Dataset<T>)> {
        if data.len() != self.n_rows {
            return Err(Error::SplitAudit(format!(
                "split covers {} rows, dataset has {}",
                self.n_rows,
                data.len()
            )));
        }
        self.audit()?;
        Ok((data.subset(&self.train)?, data.subset(&self.test)?))
    }

    fn from_test(n_rows: usize, mut test: Vec<usize>) -> Self {
        test.sort_unstable();
        let mut is_test = vec![false; n_rows];
        for &i in &test {
            is_test[i] = true;
        }
        let train = (0..n_rows).filter(|&i| !is_test[i]).collect();
        Self { n_rows, train, test }
    }

    /// Line-oriented text: a header, `rows N`, then one `train i` or
    /// `test i` per line.
    pub fn to_manifest(&self) -> String {
        let mut s = format!("{MANIFEST_HEADER}\nrows {}\n", self.n_rows);
        for &i in &self.train {
            let _ = writeln!(s, "train {i}");
        }
        for &i in &self.test {
            let _ = writeln!(s, "test {i}");
        }
        s
    }

    pub fn parse_manifest(text: &str) -> Result<Self> {
        let mut n_rows = None;
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (k, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = || Error::MalformedData(format!("manifest line {}: `{line}`", k + 1));
            let (tag, value) = line.split_once(char::is_whitespace).ok_or_else(bad)?;
            let value: usize = value.trim().parse().map_err(|_| bad())?;
            match tag {
                "rows" => n_rows = Some(value),
                "train" => train.push(value),
                "test" => test.push(value),
                _ => return Err(bad()),
            }
        }
        let n_rows = n_rows.ok_or_else(|| Error::MalformedData("manifest lacks a `rows` line".into()))?;
        train.sort_unstable();
        test.sort_unstable();
        let s = Self { n_rows, train, test };
        s.audit()?;
        Ok(s)
    }

    pub fn write_manifest(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_manifest())?;
        Ok(())
    }

    pub fn read_manifest(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::parse_manifest(&std::fs::read_to_string(path)?)
    }
}

/// Test-set size for a random split: `N·fraction` rounded half up.
pub fn random_test_size(n: usize, fraction: f64) -> usize {
    (n as f64 * fraction + 0.5).floor() as usize
}

/// Test-set size for an outlier split: `⌈N·fraction⌉`.
pub fn outlier_test_size(n: usize, fraction: f64) -> usize {
    // the slack absorbs products like 0.1·30 = 3.0000000000000004
    (n as f64 * fraction - 1e-9).ceil() as usize
}

/// Uniformly random partition with [`random_test_size`] test rows.
pub fn random_split(n: usize, fraction: f64, rng: &mut Rng) -> Result<SplitIndices> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::FractionOutOfRange(fraction));
    }
    let k = random_test_size(n, fraction);
    if k == 0 || k >= n {
        return Err(Error::FractionOutOfRange(fraction));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut perm);
    perm.truncate(k);
    Ok(SplitIndices::from_test(n, perm))
}

/// Shift of the test targets relative to the train targets, both mapped
/// with the training min–max scaling. Variances are population variances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatDiff {
    pub mean_diff: f64,
    pub var_diff: f64,
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n)
}

impl StatDiff {
    pub fn compute<T: Scalar>(train_targets: &[T], test_targets: &[T]) -> Result<Self> {
        if train_targets.is_empty() || test_targets.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let lo = train_targets.iter().map(|t| t.as_f64()).fold(f64::INFINITY, f64::min);
        let hi = train_targets
            .iter()
            .map(|t| t.as_f64())
            .fold(f64::NEG_INFINITY, f64::max);
        let range = if hi > lo { hi - lo } else { 1.0 };
        let scale = |v: &[T]| -> Vec<f64> { v.iter().map(|t| (t.as_f64() - lo) / range).collect() };
        let (m_tr, v_tr) = mean_var(&scale(train_targets));
        let (m_te, v_te) = mean_var(&scale(test_targets));
        Ok(Self {
            mean_diff: m_te - m_tr,
            var_diff: v_te - v_tr,
        })
    }
}

/// Puts the `⌈N·fraction⌉` most anomalous rows, by isolation-forest score
/// on the features alone, into the test set. Ties go to the lower index.
pub fn outlier_split<T: Scalar>(
    data: &Dataset<T>,
    fraction: f64,
    params: ForestParams,
    rng: &Rng,
) -> Result<(SplitIndices, StatDiff)> {
    if !(fraction > 0.0 && fraction < 0.5) {
        return Err(Error::FractionOutOfRange(fraction));
    }
    let n = data.len();
    let k = outlier_test_size(n, fraction);
    if k == 0 || k >= n {
        return Err(Error::FractionOutOfRange(fraction));
    }
    let forest = IsolationForest::fit(data, params, rng)?;
    let scores = forest.score_all(data)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    let split = SplitIndices::from_test(n, order);
    let tr: Vec<T> = split.train.iter().map(|&i| data.target(i)).collect();
    let te: Vec<T> = split.test.iter().map(|&i| data.target(i)).collect();
    let diff = StatDiff::compute(&tr, &te)?;
    Ok((split, diff))
}
