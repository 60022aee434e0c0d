//! Datasets, CSV ingestion and the train/calibration/test split.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::scalar::Real;

/// Dense row-major design matrix with its regression targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T: Real> {
    features: Vec<T>,
    targets: Vec<T>,
    n_features: usize,
    feature_names: Option<Vec<String>>,
}

impl<T: Real> Dataset<T> {
    /// Builds a dataset from row-major `features`. Rows holding a non-finite
    /// value anywhere are rejected.
    pub fn new(features: Vec<T>, targets: Vec<T>, n_features: usize) -> Result<Self> {
        if n_features == 0 {
            return Err(Error::Schema(
                "dataset needs at least one feature column".into(),
            ));
        }
        if targets.is_empty() {
            return Err(Error::EmptyInput("dataset has no rows"));
        }
        if features.len() != targets.len() * n_features {
            return Err(Error::LengthMismatch {
                left: features.len(),
                right: targets.len() * n_features,
            });
        }
        if features.iter().chain(&targets).any(|v| !v.is_finite()) {
            return Err(Error::Schema("non-finite value in dataset".into()));
        }
        Ok(Self {
            features,
            targets,
            n_features,
            feature_names: None,
        })
    }

    /// One-feature dataset.
    pub fn from_columns(x: Vec<T>, y: Vec<T>) -> Result<Self> {
        Self::new(x, y, 1)
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_features {
            return Err(Error::LengthMismatch {
                left: names.len(),
                right: self.n_features,
            });
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.targets.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        self.features.chunks_exact(self.n_features)
    }

    pub fn targets(&self) -> &[T] {
        &self.targets
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    /// Column `j` as an owned vector.
    pub fn column(&self, j: usize) -> Vec<T> {
        self.rows().map(|r| r[j]).collect()
    }

    /// New dataset holding `indices` in the given order.
    pub fn select(&self, indices: &[usize]) -> Dataset<T> {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        let mut targets = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            targets.push(self.targets[i]);
        }
        Dataset {
            features,
            targets,
            n_features: self.n_features,
            feature_names: self.feature_names.clone(),
        }
    }

    /// Same features with every target shifted by `c`.
    pub fn shift_targets(&self, c: T) -> Dataset<T> {
        let mut out = self.clone();
        out.targets.iter_mut().for_each(|y| *y += c);
        out
    }

    /// Writes the dataset as CSV with the target in the last column.
    pub fn write_csv<W: std::io::Write>(&self, out: W, target_name: &str) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = match &self.feature_names {
            Some(n) => n.clone(),
            None => (0..self.n_features).map(|j| format!("x{j}")).collect(),
        };
        header.push(target_name.to_string());
        w.write_record(&header)?;
        for (row, y) in self.rows().zip(&self.targets) {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            rec.push(y.to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::Io {
            path: "<csv writer>".into(),
            source: e,
        })?;
        Ok(())
    }
}

/// Reads a headered CSV. `target` names the response column; `None` takes
/// the last column. Rows with NaN or infinite cells are dropped and counted.
pub fn load_csv<T: Real>(path: impl AsRef<Path>, target: Option<&str>) -> Result<Dataset<T>> {
    let path = path.as_ref();
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
    parse_csv(&text, target)
}

/// [`load_csv`] over in-memory text.
pub fn parse_csv<T: Real>(text: &str, target: Option<&str>) -> Result<Dataset<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::Schema("missing header row".into()));
    }
    if header.len() < 2 {
        return Err(Error::Schema(
            "need at least one feature and one target column".into(),
        ));
    }
    let target_col = match target {
        Some(name) => header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("target column `{name}` not in header")))?,
        None => header.len() - 1,
    };
    let names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != target_col)
        .map(|(_, h)| h.clone())
        .collect();

    let mut features = Vec::new();
    let mut targets = Vec::new();
    let mut dropped = 0usize;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        if rec.len() != header.len() {
            return Err(Error::Schema(format!(
                "data row {row} has {} cells, header has {}",
                rec.len(),
                header.len()
            )));
        }
        let mut vals = Vec::with_capacity(rec.len());
        for (j, cell) in rec.iter().enumerate() {
            let v: T = cell.parse().map_err(|_| Error::Parse {
                row,
                column: header[j].clone(),
                value: cell.to_string(),
            })?;
            vals.push(v);
        }
        if vals.iter().any(|v| !v.is_finite()) {
            dropped += 1;
            continue;
        }
        for (j, v) in vals.into_iter().enumerate() {
            if j == target_col {
                targets.push(v);
            } else {
                features.push(v);
            }
        }
    }
    if dropped > 0 {
        warn!("dropped {dropped} rows containing NaN or infinite values");
    }
    if targets.is_empty() {
        return Err(Error::EmptyInput("csv has no usable data rows"));
    }
    let n_features = names.len();
    Dataset::new(features, targets, n_features)?.with_feature_names(names)
}

/// Split proportions plus the calibration-to-train transfer of the native
/// protocol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub cal_frac: f64,
    pub test_frac: f64,
    pub native_cal_transfer: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_frac: 0.4,
            cal_frac: 0.4,
            test_frac: 0.2,
            native_cal_transfer: 0.3,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let fracs = [self.train_frac, self.cal_frac, self.test_frac];
        if fracs.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return Err(Error::Config("split fractions must lie in (0, 1)".into()));
        }
        if (fracs.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::Config("split fractions must sum to 1".into()));
        }
        if !(0.0..1.0).contains(&self.native_cal_transfer) {
            return Err(Error::Config(
                "native_cal_transfer must lie in [0, 1)".into(),
            ));
        }
        Ok(())
    }

    /// Row counts `(train, cal, test)` for `n` rows.
    pub fn sizes(&self, n: usize, native: bool) -> (usize, usize, usize) {
        let n_test = floor_count(n as f64 * self.test_frac);
        let n_cal = floor_count(n as f64 * self.cal_frac);
        let n_train = n - n_test - n_cal;
        if native {
            let moved = floor_count(self.native_cal_transfer * n_cal as f64);
            (n_train + moved, n_cal - moved, n_test)
        } else {
            (n_train, n_cal, n_test)
        }
    }
}

// floor that forgives representation error such as 100 * 0.7 = 69.999...
fn floor_count(x: f64) -> usize {
    (x + 1e-9).floor().max(0.0) as usize
}

#[derive(Debug, Clone)]
pub struct DataSplit<T: Real> {
    pub train: Dataset<T>,
    pub cal: Dataset<T>,
    pub test: Dataset<T>,
    pub train_idx: Vec<usize>,
    pub cal_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
}

/// Shuffles rows with the `"split"` stream of `spec.seed`, then lays out
/// train, calibration and test blocks in that order. With `native`, the
/// leading calibration rows (post-shuffle order) move to train.
pub fn split<T: Real>(
    dataset: &Dataset<T>,
    spec: &SplitSpec,
    native: bool,
) -> Result<DataSplit<T>> {
    spec.validate()?;
    let n = dataset.n_rows();
    if n < 10 {
        return Err(Error::InsufficientData(format!(
            "split needs at least 10 rows, got {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut RngStream::new(spec.seed).derive("split").generator());

    let (n_train0, n_cal0, _) = spec.sizes(n, false);
    let mut train_idx = order[..n_train0].to_vec();
    let mut cal_idx = order[n_train0..n_train0 + n_cal0].to_vec();
    let test_idx = order[n_train0 + n_cal0..].to_vec();
    if native {
        let (n_train, _, _) = spec.sizes(n, true);
        let moved = n_train - n_train0;
        train_idx.extend(cal_idx.drain(..moved));
    }
    Ok(DataSplit {
        train: dataset.select(&train_idx),
        cal: dataset.select(&cal_idx),
        test: dataset.select(&test_idx),
        train_idx,
        cal_idx,
        test_idx,
    })
}
