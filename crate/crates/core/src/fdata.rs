//! Gridded functional data: curves sampled on shared equispaced grids.
//!
//! A curve is stored as its `p` evaluations on the grid. Integrals use the
//! rectangle rule on `p` cells of width `h = |I| / p`, so row entry `j` is the
//! value of the curve on cell `j`. This matches the piecewise-constant basis
//! the node weight functions live in, which makes every integral of a
//! product `x(t) w(t)` exact for the discretized weights.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::scalar::Scalar;

/// Tolerance used when validating grid points read from a CSV header.
pub const GRID_TOLERANCE: f64 = 1e-9;

/// Equispaced evaluation grid over the domain `[start, end]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid<T> {
    start: T,
    end: T,
    p: usize,
}

impl<T: Scalar> Grid<T> {
    pub fn new(start: T, end: T, p: usize) -> Result<Self> {
        if !(start.is_finite() && end.is_finite()) || end <= start {
            return Err(Error::InvalidConfig(format!(
                "grid domain [{start}, {end}] must be finite with end > start"
            )));
        }
        if p < 2 {
            return Err(Error::InvalidConfig(format!("grid needs p >= 2, got {p}")));
        }
        let grid = Self { start, end, p };
        if grid.cell_width() <= T::zero() {
            return Err(Error::InvalidConfig("grid cell width underflows".into()));
        }
        Ok(grid)
    }

    pub fn start(&self) -> T {
        self.start
    }

    pub fn end(&self) -> T {
        self.end
    }

    /// Number of evaluation points.
    pub fn len(&self) -> usize {
        self.p
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Domain length `|I|`.
    pub fn domain_length(&self) -> T {
        self.end - self.start
    }

    /// Quadrature cell width `h = |I| / p`.
    pub fn cell_width(&self) -> T {
        self.domain_length() / T::count(self.p)
    }

    /// Evaluation points: `p` linearly spaced values including both endpoints.
    pub fn points(&self) -> Vec<T> {
        let step = self.domain_length() / T::count(self.p - 1);
        (0..self.p)
            .map(|j| {
                if j + 1 == self.p {
                    self.end
                } else {
                    self.start + step * T::count(j)
                }
            })
            .collect()
    }

    /// Rectangle-rule integral `h * sum(values)`.
    pub fn integrate(&self, values: &[T]) -> Result<T> {
        integrate(values, self)
    }
}

/// Rectangle-rule integral of a gridded function.
pub fn integrate<T: Scalar>(values: &[T], grid: &Grid<T>) -> Result<T> {
    check_len(grid.len(), values.len())?;
    Ok(grid.cell_width() * values.iter().copied().sum::<T>())
}

/// Dense row-major matrix of curve evaluations: one row per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Curves<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Curves<T> {
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            check_len(cols, row.len())?;
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_flat(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        check_len(rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn n_cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn as_flat(&self) -> &[T] {
        &self.data
    }

    /// Copies the given rows, in order, into a new matrix.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// Column-wise mean over the given rows.
    pub fn mean_of(&self, indices: &[usize]) -> Vec<T> {
        let mut mean = vec![T::zero(); self.cols];
        for &i in indices {
            for (m, &x) in mean.iter_mut().zip(self.row(i)) {
                *m = *m + x;
            }
        }
        let n = T::count(indices.len().max(1));
        mean.iter_mut().for_each(|m| *m = *m / n);
        mean
    }
}

/// One functional covariate: `N` curves on a common grid.
#[derive(Clone, Debug, PartialEq)]
pub struct FunctionalCovariate<T> {
    pub name: String,
    pub grid: Grid<T>,
    pub values: Curves<T>,
}

impl<T: Scalar> FunctionalCovariate<T> {
    pub fn new(name: impl Into<String>, grid: Grid<T>, values: Curves<T>) -> Result<Self> {
        check_len(grid.len(), values.n_cols())?;
        if let Some(pos) = values.as_flat().iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "non-finite curve value in sample {}",
                pos / values.n_cols()
            )));
        }
        Ok(Self {
            name: name.into(),
            grid,
            values,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.values.n_rows()
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            name: self.name.clone(),
            grid: self.grid,
            values: self.values.select(indices),
        }
    }
}

/// Learning task implied by the response type.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Regression,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Response<T> {
    /// Labels in `0..n_classes`.
    Categorical {
        n_classes: usize,
        labels: Vec<usize>,
    },
    Numeric(Vec<T>),
}

impl<T: Scalar> Response<T> {
    /// Categorical response with `K = max(label) + 1` classes.
    pub fn categorical(labels: Vec<usize>) -> Result<Self> {
        let n_classes = labels.iter().max().map_or(0, |&m| m + 1);
        Self::categorical_with_classes(labels, n_classes.max(2))
    }

    pub fn categorical_with_classes(labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::InvalidConfig("need at least two classes".into()));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::InvalidConfig(format!("label {bad} outside 0..{n_classes}")));
        }
        Ok(Self::Categorical { n_classes, labels })
    }

    pub fn numeric(values: Vec<T>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite target value".into()));
        }
        Ok(Self::Numeric(values))
    }

    pub fn len(&self) -> usize {
        match self {
            Self::Categorical { labels, .. } => labels.len(),
            Self::Numeric(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn task(&self) -> Task {
        match self {
            Self::Categorical { .. } => Task::Classification,
            Self::Numeric(_) => Task::Regression,
        }
    }

    pub fn n_classes(&self) -> Option<usize> {
        match self {
            Self::Categorical { n_classes, .. } => Some(*n_classes),
            Self::Numeric(_) => None,
        }
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        match self {
            Self::Categorical { n_classes, labels } => Self::Categorical {
                n_classes: *n_classes,
                labels: indices.iter().map(|&i| labels[i]).collect(),
            },
            Self::Numeric(v) => Self::Numeric(indices.iter().map(|&i| v[i]).collect()),
        }
    }
}

/// `N` samples of `Q >= 1` functional covariates with a scalar response.
#[derive(Clone, Debug, PartialEq)]
pub struct FunctionalDataset<T> {
    covariates: Vec<FunctionalCovariate<T>>,
    response: Response<T>,
}

impl<T: Scalar> FunctionalDataset<T> {
    pub fn new(covariates: Vec<FunctionalCovariate<T>>, response: Response<T>) -> Result<Self> {
        if covariates.is_empty() {
            return Err(Error::InvalidConfig("dataset needs at least one covariate".into()));
        }
        let n = response.len();
        for cov in &covariates {
            check_len(n, cov.n_samples())?;
        }
        Ok(Self { covariates, response })
    }

    pub fn n_samples(&self) -> usize {
        self.response.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.len()
    }

    pub fn covariates(&self) -> &[FunctionalCovariate<T>] {
        &self.covariates
    }

    pub fn covariate(&self, q: usize) -> &FunctionalCovariate<T> {
        &self.covariates[q]
    }

    pub fn response(&self) -> &Response<T> {
        &self.response
    }

    pub fn task(&self) -> Task {
        self.response.task()
    }

    pub fn grids(&self) -> Vec<Grid<T>> {
        self.covariates.iter().map(|c| c.grid).collect()
    }

    /// Row subset, preserving the class count of a categorical response.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            covariates: self.covariates.iter().map(|c| c.select(indices)).collect(),
            response: self.response.select(indices),
        }
    }

    /// The curves of sample `i`, one slice per covariate.
    pub fn sample(&self, i: usize) -> Vec<&[T]> {
        self.covariates.iter().map(|c| c.values.row(i)).collect()
    }
}

/// Per-grid-point mean and population standard deviation of one covariate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovariateStats<T> {
    pub mean: Vec<T>,
    pub std: Vec<T>,
}

impl<T: Scalar> CovariateStats<T> {
    /// Grid points with zero spread; they are divided by one when applied.
    pub fn flagged(&self) -> Vec<bool> {
        self.std.iter().map(|s| *s == T::zero()).collect()
    }

    pub fn apply_to(&self, curve: &[T], out: &mut [T]) {
        for (j, (o, &x)) in out.iter_mut().zip(curve).enumerate() {
            let s = self.std[j];
            let s = if s == T::zero() { T::one() } else { s };
            *o = (x - self.mean[j]) / s;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats<T> {
    pub covariates: Vec<CovariateStats<T>>,
}

/// Fits per-covariate, per-grid-point standardization statistics.
pub fn standardize_fit<T: Scalar>(dataset: &FunctionalDataset<T>) -> Result<StandardizationStats<T>> {
    let n = dataset.n_samples();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "standardization needs at least 2 samples, got {n}"
        )));
    }
    let all: Vec<usize> = (0..n).collect();
    let covariates = dataset
        .covariates()
        .iter()
        .map(|cov| {
            let mean = cov.values.mean_of(&all);
            let mut var = vec![T::zero(); mean.len()];
            for row in cov.values.rows() {
                for ((v, &x), &m) in var.iter_mut().zip(row).zip(&mean) {
                    let d = x - m;
                    *v = *v + d * d;
                }
            }
            let nf = T::count(n);
            let std = var.into_iter().map(|v| (v / nf).sqrt()).collect();
            CovariateStats { mean, std }
        })
        .collect();
    Ok(StandardizationStats { covariates })
}

/// Standardizes a matrix of curves of covariate `q`.
pub fn standardize_apply<T: Scalar>(curves: &Curves<T>, stats: &CovariateStats<T>) -> Result<Curves<T>> {
    check_len(stats.mean.len(), curves.n_cols())?;
    check_len(stats.std.len(), curves.n_cols())?;
    let mut out = Curves::zeros(curves.n_rows(), curves.n_cols());
    for i in 0..curves.n_rows() {
        stats.apply_to(curves.row(i), out.row_mut(i));
    }
    Ok(out)
}

/// How the grid of a covariate CSV is determined.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum GridSpec {
    /// Domain taken from the first and last header points; spacing validated.
    #[default]
    Infer,
    /// Header points must match `p` linearly spaced points over `[start, end]`.
    Domain { start: f64, end: f64 },
}

fn ingestion(path: &Path, row: usize, message: impl Into<String>) -> Error {
    Error::Ingestion {
        path: path.to_path_buf(),
        row,
        message: message.into(),
    }
}

fn parse_scalar<T: Scalar>(s: &str) -> Option<T> {
    T::from_str_radix(s.trim(), 10).ok().filter(|v| v.is_finite())
}

fn covariate_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "x".to_string())
}

/// Reads one covariate CSV: header `t=<v1>,...,t=<vp>`, then one row per sample.
pub fn load_covariate_csv<T: Scalar>(path: &Path, spec: GridSpec) -> Result<FunctionalCovariate<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| ingestion(path, 0, e.to_string()))?;
    let header = reader.headers().map_err(|e| ingestion(path, 0, e.to_string()))?.clone();
    let mut points = Vec::with_capacity(header.len());
    for field in header.iter() {
        let value = field
            .trim()
            .strip_prefix("t=")
            .and_then(|v| v.trim().parse::<f64>().ok())
            .filter(|v| v.is_finite())
            .ok_or_else(|| ingestion(path, 0, format!("bad header field {field:?}, expected t=<value>")))?;
        points.push(value);
    }
    let p = points.len();
    if p < 2 {
        return Err(ingestion(path, 0, "need at least two grid points"));
    }
    let (start, end) = match spec {
        GridSpec::Infer => (points[0], points[p - 1]),
        GridSpec::Domain { start, end } => (start, end),
    };
    let grid = Grid::new(T::lit(start), T::lit(end), p).map_err(|e| ingestion(path, 0, e.to_string()))?;
    let expected = Grid::new(start, end, p)?.points();
    let scale = (end - start).abs().max(1.0);
    for (j, (&got, &want)) in points.iter().zip(&expected).enumerate() {
        if (got - want).abs() > GRID_TOLERANCE * scale {
            return Err(ingestion(
                path,
                0,
                format!("grid point {j} is {got}, expected {want} for an equispaced grid"),
            ));
        }
    }

    let mut data = Vec::new();
    let mut rows = 0;
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| ingestion(path, row, e.to_string()))?;
        if record.len() != p {
            return Err(ingestion(path, row, format!("expected {p} values, found {}", record.len())));
        }
        for (j, field) in record.iter().enumerate() {
            let v = parse_scalar::<T>(field)
                .ok_or_else(|| ingestion(path, row, format!("column {j}: invalid or non-finite value {field:?}")))?;
            data.push(v);
        }
        rows += 1;
    }
    let values = Curves::from_flat(rows, p, data)?;
    FunctionalCovariate::new(covariate_name(path), grid, values)
}

/// Reads a response CSV with a single column headed `label` or `target`.
pub fn load_response_csv<T: Scalar>(path: &Path) -> Result<Response<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| ingestion(path, 0, e.to_string()))?;
    let header = reader.headers().map_err(|e| ingestion(path, 0, e.to_string()))?.clone();
    if header.len() != 1 {
        return Err(ingestion(path, 0, "response file must have exactly one column"));
    }
    let kind = header[0].trim().to_string();
    let mut fields = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| ingestion(path, i + 1, e.to_string()))?;
        if record.len() != 1 {
            return Err(ingestion(path, i + 1, "expected a single value"));
        }
        fields.push(record[0].trim().to_string());
    }
    match kind.as_str() {
        "label" => {
            let labels = fields
                .iter()
                .enumerate()
                .map(|(i, f)| {
                    f.parse::<usize>()
                        .map_err(|_| ingestion(path, i + 1, format!("invalid class label {f:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            Response::categorical(labels).map_err(|e| ingestion(path, 0, e.to_string()))
        }
        "target" => {
            let values = fields
                .iter()
                .enumerate()
                .map(|(i, f)| {
                    parse_scalar::<T>(f).ok_or_else(|| ingestion(path, i + 1, format!("invalid or non-finite target {f:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Response::Numeric(values))
        }
        other => Err(ingestion(
            path,
            0,
            format!("header must be `label` or `target`, found {other:?}"),
        )),
    }
}

/// Loads a dataset from one CSV per covariate plus a response CSV.
pub fn load_csv<T: Scalar, P: AsRef<Path>>(
    covariate_paths: &[P],
    response_path: &Path,
    spec: GridSpec,
) -> Result<FunctionalDataset<T>> {
    let response = load_response_csv::<T>(response_path)?;
    let mut covariates = Vec::with_capacity(covariate_paths.len());
    for path in covariate_paths {
        let path = path.as_ref();
        let cov = load_covariate_csv::<T>(path, spec)?;
        if cov.n_samples() != response.len() {
            return Err(ingestion(
                path,
                cov.n_samples().min(response.len()) + 1,
                format!("{} samples, but the response has {}", cov.n_samples(), response.len()),
            ));
        }
        covariates.push(cov);
    }
    FunctionalDataset::new(covariates, response)
}

/// Loads covariates only, for prediction on unlabeled data.
pub fn load_covariates_csv<T: Scalar, P: AsRef<Path>>(
    covariate_paths: &[P],
    spec: GridSpec,
) -> Result<Vec<FunctionalCovariate<T>>> {
    let covariates = covariate_paths
        .iter()
        .map(|p| load_covariate_csv::<T>(p.as_ref(), spec))
        .collect::<Result<Vec<_>>>()?;
    if let Some(first) = covariates.first() {
        for cov in &covariates[1..] {
            check_len(first.n_samples(), cov.n_samples())?;
        }
    }
    Ok(covariates)
}

pub fn write_covariate_csv<T: Scalar>(path: &Path, covariate: &FunctionalCovariate<T>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let header: Vec<String> = covariate.grid.points().iter().map(|t| format!("t={t}")).collect();
    writeln!(out, "{}", header.join(","))?;
    for row in covariate.values.rows() {
        write_row(&mut out, row)?;
    }
    out.flush()?;
    Ok(())
}

pub(crate) fn write_row<T: Scalar, W: Write>(out: &mut W, row: &[T]) -> std::io::Result<()> {
    for (j, v) in row.iter().enumerate() {
        if j > 0 {
            out.write_all(b",")?;
        }
        write!(out, "{v}")?;
    }
    out.write_all(b"\n")
}

pub fn write_response_csv<T: Scalar>(path: &Path, response: &Response<T>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    match response {
        Response::Categorical { labels, .. } => {
            writeln!(out, "label")?;
            for l in labels {
                writeln!(out, "{l}")?;
            }
        }
        Response::Numeric(values) => {
            writeln!(out, "target")?;
            for v in values {
                writeln!(out, "{v}")?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Writes `<name>.csv` per covariate and `y.csv` into `dir`; returns the paths.
pub fn write_csv<T: Scalar>(dataset: &FunctionalDataset<T>, dir: &Path) -> Result<(Vec<PathBuf>, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for cov in dataset.covariates() {
        let path = dir.join(format!("{}.csv", cov.name));
        write_covariate_csv(&path, cov)?;
        paths.push(path);
    }
    let response = dir.join("y.csv");
    write_response_csv(&response, dataset.response())?;
    Ok((paths, response))
}
