//! Clustered dataset representation shared by every other module.
//!
//! Covariates are stored with a literal leading ones column, labels in
//! `{-1, +1}`, a binary sensitive attribute and dense 1-based cluster ids.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVectorView, RowDVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("csv line {line}, column {column}: {message}")]
    Csv {
        line: u64,
        column: String,
        message: String,
    },
    #[error("invalid dataset: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One broken dataset invariant, naming the offending row or cluster.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Empty,
    NoCovariates,
    InterceptNotOne { row: usize, value: f64 },
    InvalidLabel { row: usize, value: i8 },
    InvalidSensitive { row: usize, value: u8 },
    ClusterOutOfRange { row: usize, id: usize },
    UnusedCluster { id: usize },
    NonFinite { row: usize, column: usize },
}

impl Violation {
    /// Unused cluster ids are tolerated by the model assembly (their random
    /// effect is simply driven to zero); everything else is not.
    pub fn is_fatal(&self) -> bool {
        !matches!(self, Violation::UnusedCluster { .. })
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "dataset has no rows"),
            Violation::NoCovariates => write!(f, "dataset has no covariates besides the intercept"),
            Violation::InterceptNotOne { row, value } => {
                write!(f, "row {row}: intercept column is {value}, expected 1")
            }
            Violation::InvalidLabel { row, value } => {
                write!(f, "row {row}: label {value} not in {{-1, +1}}")
            }
            Violation::InvalidSensitive { row, value } => {
                write!(f, "row {row}: sensitive value {value} not in {{0, 1}}")
            }
            Violation::ClusterOutOfRange { row, id } => {
                write!(f, "row {row}: cluster id {id} outside 1..=K")
            }
            Violation::UnusedCluster { id } => write!(f, "cluster {id} unused"),
            Violation::NonFinite { row, column } => {
                write!(f, "row {row}, column {column}: non-finite covariate")
            }
        }
    }
}

/// Share of rows with `s = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SBar(pub f64);

impl SBar {
    pub fn value(self) -> f64 {
        self.0
    }

    /// True when every row falls in one sensitive group.
    pub fn is_degenerate(self) -> bool {
        self.0 <= 0.0 || self.0 >= 1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteredDataset {
    x: DMatrix<f64>,
    y: Vec<i8>,
    s: Vec<u8>,
    cluster: Vec<usize>,
    k: usize,
    names: Option<Vec<String>>,
    cluster_keys: Vec<String>,
}

impl ClusteredDataset {
    /// Builds a dataset from an `n x (p+1)` covariate matrix whose first column
    /// is the intercept. Only shapes are checked here; use [`validate`] for
    /// the value invariants.
    ///
    /// [`validate`]: ClusteredDataset::validate
    pub fn new(
        x: DMatrix<f64>,
        y: Vec<i8>,
        s: Vec<u8>,
        cluster: Vec<usize>,
        k: usize,
    ) -> Result<Self, DataError> {
        let n = x.nrows();
        if y.len() != n || s.len() != n || cluster.len() != n {
            return Err(DataError::Shape(format!(
                "x has {n} rows but y, s, cluster have {}, {}, {}",
                y.len(),
                s.len(),
                cluster.len()
            )));
        }
        let cluster_keys = (1..=k).map(|i| i.to_string()).collect();
        Ok(Self {
            x,
            y,
            s,
            cluster,
            k,
            names: None,
            cluster_keys,
        })
    }

    /// Same as [`new`](Self::new) but takes covariate rows without the
    /// intercept and prepends the ones column.
    pub fn from_features(
        features: &DMatrix<f64>,
        y: Vec<i8>,
        s: Vec<u8>,
        cluster: Vec<usize>,
        k: usize,
    ) -> Result<Self, DataError> {
        let x = features.clone().insert_column(0, 1.0);
        Self::new(x, y, s, cluster, k)
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self, DataError> {
        if names.len() != self.p() {
            return Err(DataError::Shape(format!(
                "{} feature names for {} features",
                names.len(),
                self.p()
            )));
        }
        self.names = Some(names);
        Ok(self)
    }

    pub fn with_cluster_keys(mut self, keys: Vec<String>) -> Result<Self, DataError> {
        if keys.len() != self.k {
            return Err(DataError::Shape(format!(
                "{} cluster keys for K = {}",
                keys.len(),
                self.k
            )));
        }
        self.cluster_keys = keys;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// Number of covariates, not counting the intercept.
    pub fn p(&self) -> usize {
        self.x.ncols().saturating_sub(1)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn row(&self, i: usize) -> RowDVector<f64> {
        self.x.row(i).into_owned()
    }

    pub fn column(&self, j: usize) -> DVectorView<'_, f64> {
        self.x.column(j)
    }

    pub fn y(&self) -> &[i8] {
        &self.y
    }

    pub fn s(&self) -> &[u8] {
        &self.s
    }

    /// 1-based cluster id per row.
    pub fn cluster(&self) -> &[usize] {
        &self.cluster
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    pub fn cluster_keys(&self) -> &[String] {
        &self.cluster_keys
    }

    pub fn cluster_key(&self, id: usize) -> Option<&str> {
        id.checked_sub(1)
            .and_then(|i| self.cluster_keys.get(i))
            .map(String::as_str)
    }

    /// Rows per cluster, indexed by `id - 1`.
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &c in &self.cluster {
            if (1..=self.k).contains(&c) {
                sizes[c - 1] += 1;
            }
        }
        sizes
    }

    /// Row indices grouped by cluster, indexed by `id - 1`.
    pub fn cluster_rows(&self) -> Vec<Vec<usize>> {
        let mut rows = vec![Vec::new(); self.k];
        for (i, &c) in self.cluster.iter().enumerate() {
            if (1..=self.k).contains(&c) {
                rows[c - 1].push(i);
            }
        }
        rows
    }

    pub fn s_bar(&self) -> SBar {
        let n = self.n();
        if n == 0 {
            return SBar(0.0);
        }
        let ones = self.s.iter().filter(|&&v| v == 1).count();
        SBar(ones as f64 / n as f64)
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.n();
        if n == 0 {
            out.push(Violation::Empty);
        }
        if self.p() < 1 {
            out.push(Violation::NoCovariates);
        }
        if self.x.ncols() >= 1 {
            for i in 0..n {
                let v = self.x[(i, 0)];
                if v != 1.0 {
                    out.push(Violation::InterceptNotOne { row: i, value: v });
                }
            }
        }
        for i in 0..n {
            for j in 0..self.x.ncols() {
                if !self.x[(i, j)].is_finite() {
                    out.push(Violation::NonFinite { row: i, column: j });
                }
            }
        }
        for (i, &v) in self.y.iter().enumerate() {
            if v != 1 && v != -1 {
                out.push(Violation::InvalidLabel { row: i, value: v });
            }
        }
        for (i, &v) in self.s.iter().enumerate() {
            if v > 1 {
                out.push(Violation::InvalidSensitive { row: i, value: v });
            }
        }
        let mut used = vec![false; self.k];
        for (i, &c) in self.cluster.iter().enumerate() {
            if c == 0 || c > self.k {
                out.push(Violation::ClusterOutOfRange { row: i, id: c });
            } else {
                used[c - 1] = true;
            }
        }
        for (i, u) in used.iter().enumerate() {
            if !u {
                out.push(Violation::UnusedCluster { id: i + 1 });
            }
        }
        out
    }

    /// Errors with every fatal violation, if any.
    pub fn ensure_usable(&self) -> Result<(), DataError> {
        let fatal: Vec<_> = self
            .validate()
            .into_iter()
            .filter(Violation::is_fatal)
            .collect();
        if fatal.is_empty() {
            Ok(())
        } else {
            Err(DataError::Invalid(fatal))
        }
    }

    /// Rows `rows` in the given order; K and cluster keys are kept so ids stay
    /// comparable with the parent dataset.
    pub fn subset(&self, rows: &[usize]) -> Self {
        let x = self.x.select_rows(rows);
        Self {
            x,
            y: rows.iter().map(|&i| self.y[i]).collect(),
            s: rows.iter().map(|&i| self.s[i]).collect(),
            cluster: rows.iter().map(|&i| self.cluster[i]).collect(),
            k: self.k,
            names: self.names.clone(),
            cluster_keys: self.cluster_keys.clone(),
        }
    }

    /// Replaces the covariate matrix, keeping everything else.
    pub fn with_x(&self, x: DMatrix<f64>) -> Result<Self, DataError> {
        if x.nrows() != self.n() {
            return Err(DataError::Shape(format!(
                "replacement x has {} rows, dataset has {}",
                x.nrows(),
                self.n()
            )));
        }
        let mut out = self.clone();
        if x.ncols() != self.x.ncols() {
            out.names = None;
        }
        out.x = x;
        Ok(out)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file)
    }

    /// Parses the `y,s,cluster,x1..xp` CSV layout. Integer cluster keys are
    /// used as ids directly (K = largest key); any other keys are sorted and
    /// mapped to dense ids.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self, DataError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| csv_error(1, "header", e.to_string()))?
            .clone();
        let cols: Vec<&str> = headers.iter().map(str::trim).collect();
        if cols.len() < 4 || cols[0] != "y" || cols[1] != "s" || cols[2] != "cluster" {
            return Err(csv_error(
                1,
                "header",
                "expected header `y,s,cluster,x1,...` with at least one feature".into(),
            ));
        }
        let names: Vec<String> = cols[3..].iter().map(|s| s.to_string()).collect();
        let p = names.len();

        let mut y = Vec::new();
        let mut s = Vec::new();
        let mut keys = Vec::new();
        let mut feats: Vec<f64> = Vec::new();
        for (idx, rec) in rdr.records().enumerate() {
            let line = idx as u64 + 2;
            let rec = rec.map_err(|e| csv_error(line, "-", e.to_string()))?;
            if rec.len() != p + 3 {
                return Err(csv_error(
                    line,
                    "-",
                    format!("expected {} fields, found {}", p + 3, rec.len()),
                ));
            }
            let yv: i8 = parse_field(&rec, 0, line, "y")?;
            let sv: u8 = parse_field(&rec, 1, line, "s")?;
            y.push(yv);
            s.push(sv);
            keys.push(rec[2].trim().to_string());
            for (j, name) in names.iter().enumerate() {
                let v: f64 = parse_field(&rec, 3 + j, line, name)?;
                feats.push(v);
            }
        }
        let n = y.len();
        let (cluster, cluster_keys) = densify_keys(&keys);
        let k = cluster_keys.len();
        let features = DMatrix::from_row_slice(n, p, &feats);
        Self::from_features(&features, y, s, cluster, k)?
            .with_names(names)?
            .with_cluster_keys(cluster_keys)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let file = std::fs::File::create(path)?;
        self.to_csv_writer(std::io::BufWriter::new(file))
    }

    pub fn to_csv_writer<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["y".to_string(), "s".to_string(), "cluster".to_string()];
        match &self.names {
            Some(names) => header.extend(names.iter().cloned()),
            None => header.extend((1..=self.p()).map(|j| format!("x{j}"))),
        }
        let map_err = |e: csv::Error| csv_error(0, "-", e.to_string());
        wtr.write_record(&header).map_err(map_err)?;
        let mut rec = Vec::with_capacity(header.len());
        for i in 0..self.n() {
            rec.clear();
            rec.push(self.y[i].to_string());
            rec.push(self.s[i].to_string());
            rec.push(
                self.cluster_key(self.cluster[i])
                    .map(str::to_string)
                    .unwrap_or_else(|| self.cluster[i].to_string()),
            );
            for j in 1..self.x.ncols() {
                rec.push(self.x[(i, j)].to_string());
            }
            wtr.write_record(&rec).map_err(map_err)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn csv_error(line: u64, column: &str, message: String) -> DataError {
    DataError::Csv {
        line,
        column: column.to_string(),
        message,
    }
}

fn parse_field<T: std::str::FromStr>(
    rec: &csv::StringRecord,
    idx: usize,
    line: u64,
    column: &str,
) -> Result<T, DataError> {
    let raw = rec[idx].trim();
    raw.parse::<T>()
        .map_err(|_| csv_error(line, column, format!("cannot parse `{raw}`")))
}

/// Maps raw cluster keys to 1-based ids. Returns the per-row ids and the key of
/// each id.
pub(crate) fn densify_keys(keys: &[String]) -> (Vec<usize>, Vec<String>) {
    let numeric: Option<Vec<usize>> = keys
        .iter()
        .map(|k| k.parse::<usize>().ok().filter(|&v| v >= 1))
        .collect();
    if let Some(ids) = numeric {
        let k = ids.iter().copied().max().unwrap_or(0);
        return (ids, (1..=k).map(|i| i.to_string()).collect());
    }
    let uniq: BTreeSet<&String> = keys.iter().collect();
    let sorted: Vec<String> = uniq.into_iter().cloned().collect();
    let ids = keys
        .iter()
        .map(|k| sorted.binary_search(k).map(|i| i + 1).unwrap_or(0))
        .collect();
    (ids, sorted)
}
