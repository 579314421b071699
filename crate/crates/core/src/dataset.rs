//! In-memory regression data, CSV ingestion and fold assignment.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
///
/// Missing covariate cells are carried as `NaN` only inside matrices that
/// were produced by [`DataMatrix::masked_x`]; everything else is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    actual: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Copy of the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &i in rows {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: rows.len(),
            cols: self.cols,
            data,
        }
    }

    /// Copy with column `skip` removed.
    pub fn without_column(&self, skip: usize) -> Matrix {
        let cols = self.cols - 1;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            let row = self.row(i);
            data.extend_from_slice(&row[..skip]);
            data.extend_from_slice(&row[skip + 1..]);
        }
        Matrix {
            rows: self.rows,
            cols,
            data,
        }
    }
}

/// Boolean observation indicator: `true` = observed, `false` = missing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MissMask {
    rows: usize,
    cols: usize,
    observed: Vec<bool>,
}

impl MissMask {
    pub fn all_observed(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            observed: vec![true; rows * cols],
        }
    }

    /// Builds a mask and checks that every row and every column keeps at
    /// least one observed cell.
    pub fn new(rows: usize, cols: usize, observed: Vec<bool>) -> Result<Self> {
        if observed.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                actual: observed.len(),
            });
        }
        let mask = Self {
            rows,
            cols,
            observed,
        };
        for i in 0..rows {
            if (0..cols).all(|j| !mask.is_observed(i, j)) {
                return Err(Error::invalid(format!("row {i} has no observed cell")));
            }
        }
        for j in 0..cols {
            if mask.observed_count(j) == 0 {
                return Err(Error::invalid(format!("column {j} has no observed cell")));
            }
        }
        Ok(mask)
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.observed[i * self.cols + j]
    }

    pub fn observed_count(&self, j: usize) -> usize {
        (0..self.rows).filter(|&i| self.is_observed(i, j)).count()
    }

    pub fn missing_count(&self, j: usize) -> usize {
        self.rows - self.observed_count(j)
    }

    pub fn total_missing(&self) -> usize {
        self.observed.iter().filter(|o| !**o).count()
    }

    /// Row-major list of `(row, column)` missing cells.
    pub fn missing_cells(&self) -> Vec<(usize, usize)> {
        let mut cells = Vec::new();
        for i in 0..self.rows {
            for j in 0..self.cols {
                if !self.is_observed(i, j) {
                    cells.push((i, j));
                }
            }
        }
        cells
    }

    pub fn observed_rows(&self, j: usize) -> Vec<usize> {
        (0..self.rows).filter(|&i| self.is_observed(i, j)).collect()
    }

    pub fn missing_rows(&self, j: usize) -> Vec<usize> {
        (0..self.rows).filter(|&i| !self.is_observed(i, j)).collect()
    }
}

/// Covariates, response and column names of one regression dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    pub x: Matrix,
    pub y: Vec<f64>,
    pub col_names: Vec<String>,
}

impl DataMatrix {
    /// Validates shape and finiteness.
    pub fn new(x: Matrix, y: Vec<f64>, col_names: Vec<String>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::Empty("data matrix needs n >= 1 and p >= 1".into()));
        }
        if y.len() != x.nrows() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                actual: y.len(),
            });
        }
        if col_names.len() != x.ncols() {
            return Err(Error::DimensionMismatch {
                expected: x.ncols(),
                actual: col_names.len(),
            });
        }
        if x.as_slice().iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::invalid("data contains non-finite values"));
        }
        Ok(Self { x, y, col_names })
    }

    /// Names columns `x1..xp`.
    pub fn with_default_names(x: Matrix, y: Vec<f64>) -> Result<Self> {
        let names = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
        Self::new(x, y, names)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Covariates with unobserved cells replaced by `NaN`.
    pub fn masked_x(&self, mask: &MissMask) -> Matrix {
        let mut x = self.x.clone();
        for (i, j) in mask.missing_cells() {
            x.set(i, j, f64::NAN);
        }
        x
    }

    pub fn subset(&self, rows: &[usize]) -> DataMatrix {
        DataMatrix {
            x: self.x.select_rows(rows),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            col_names: self.col_names.clone(),
        }
    }

    /// Z-scores every covariate column (population SD; constant columns are
    /// only centered).
    pub fn standardized(&self) -> DataMatrix {
        let mut x = self.x.clone();
        let n = self.n() as f64;
        for j in 0..self.p() {
            let col = self.x.column(j);
            let mean = col.iter().sum::<f64>() / n;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            for (i, v) in col.iter().enumerate() {
                let z = if sd > 0.0 { (v - mean) / sd } else { v - mean };
                x.set(i, j, z);
            }
        }
        DataMatrix {
            x,
            y: self.y.clone(),
            col_names: self.col_names.clone(),
        }
    }
}

/// Options for [`load_csv`].
#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub response: String,
    pub delimiter: u8,
    pub max_rows: Option<usize>,
}

impl CsvOptions {
    pub fn new(response: impl Into<String>) -> Self {
        Self {
            response: response.into(),
            delimiter: b',',
            max_rows: None,
        }
    }
}

/// Reads a headered numeric CSV. The response column becomes `y`; all other
/// columns become covariates in file order. Row numbers in errors are
/// 1-based data rows (the header is row 0); columns are 1-based.
pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<DataMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse {
            row: 0,
            column: 0,
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_owned)
        .collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(Error::Empty(format!("{} has no header", path.display())));
    }
    let response_col = headers
        .iter()
        .position(|h| *h == opts.response)
        .ok_or_else(|| Error::invalid(format!("response column '{}' not found", opts.response)))?;
    if headers.len() < 2 {
        return Err(Error::invalid("need at least one covariate column"));
    }

    let p = headers.len() - 1;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (r, record) in reader.records().enumerate() {
        if opts.max_rows.is_some_and(|m| ys.len() >= m) {
            break;
        }
        let row = r + 1;
        let record = record.map_err(|e| Error::Parse {
            row,
            column: 0,
            message: e.to_string(),
        })?;
        if record.len() != headers.len() {
            return Err(Error::Parse {
                row,
                column: record.len().min(headers.len()) + 1,
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        for (c, field) in record.iter().enumerate() {
            if c == response_col && field.is_empty() {
                return Err(Error::Parse {
                    row,
                    column: c + 1,
                    message: "missing response value".into(),
                });
            }
            let value: f64 = field.parse().map_err(|_| Error::Parse {
                row,
                column: c + 1,
                message: format!("cannot parse '{field}' as a number"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: c + 1,
                    message: format!("non-finite value '{field}'"),
                });
            }
            if c == response_col {
                ys.push(value);
            } else {
                xs.push(value);
            }
        }
    }
    if ys.is_empty() {
        return Err(Error::Empty(format!("{} has no data rows", path.display())));
    }
    let names = headers
        .iter()
        .enumerate()
        .filter(|(c, _)| *c != response_col)
        .map(|(_, h)| h.clone())
        .collect();
    DataMatrix::new(Matrix::from_vec(ys.len(), p, xs)?, ys, names)
}

/// Writes covariates followed by the response column. Values use the
/// shortest representation that parses back to the same `f64`.
pub fn write_csv(data: &DataMatrix, response: &str, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    let mut header = data.col_names.join(",");
    header.push(',');
    header.push_str(response);
    writeln!(out, "{header}").map_err(io_err)?;
    for i in 0..data.n() {
        let mut line = String::new();
        for v in data.x.row(i) {
            line.push_str(&format!("{v},"));
        }
        line.push_str(&format!("{}", data.y[i]));
        writeln!(out, "{line}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Partition of `0..n` into `k` folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub fold_of: Vec<usize>,
    pub k: usize,
}

impl FoldAssignment {
    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] == fold)
            .collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] != fold)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.fold_of {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Shuffles `0..n` and deals the permutation round-robin into `k` folds,
/// so fold sizes differ by at most one.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::invalid(format!("need k >= 2 folds, got {k}")));
    }
    if k > n {
        return Err(Error::invalid(format!("k = {k} exceeds n = {n}")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_of = vec![0; n];
    for (pos, &i) in perm.iter().enumerate() {
        fold_of[i] = pos % k;
    }
    Ok(FoldAssignment { fold_of, k })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn one_row_file() {
        let f = write_tmp("a,b\n1,2\n");
        let d = load_csv(f.path(), &CsvOptions::new("b")).unwrap();
        assert_eq!((d.n(), d.p()), (1, 1));
        assert_eq!(d.y, vec![2.0]);
        assert_eq!(d.x.get(0, 0), 1.0);
        assert_eq!(d.col_names, vec!["a".to_string()]);
    }

    #[test]
    fn response_in_middle_keeps_file_order() {
        let f = write_tmp("a,y,b\n1,2,3\n4,5,6\n");
        let d = load_csv(f.path(), &CsvOptions::new("y")).unwrap();
        assert_eq!(d.col_names, vec!["a", "b"]);
        assert_eq!(d.x.row(1), &[4.0, 6.0]);
        assert_eq!(d.y, vec![2.0, 5.0]);
    }

    #[test]
    fn parse_error_reports_position() {
        let f = write_tmp("a,b\n1,2\n3,oops\n");
        match load_csv(f.path(), &CsvOptions::new("b")) {
            Err(Error::Parse { row, column, .. }) => assert_eq!((row, column), (2, 2)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_response_cell_rejected() {
        let f = write_tmp("a,b\n1,\n");
        assert!(matches!(
            load_csv(f.path(), &CsvOptions::new("b")),
            Err(Error::Parse { row: 1, column: 2, .. })
        ));
    }

    #[test]
    fn non_finite_rejected() {
        let f = write_tmp("a,b\nNaN,1\n");
        assert!(matches!(
            load_csv(f.path(), &CsvOptions::new("b")),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn empty_file_rejected() {
        let f = write_tmp("");
        assert!(load_csv(f.path(), &CsvOptions::new("b")).is_err());
        let f = write_tmp("a,b\n");
        assert!(matches!(
            load_csv(f.path(), &CsvOptions::new("b")),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn max_rows_truncates() {
        let f = write_tmp("a,b\n1,2\n3,4\n5,6\n");
        let mut opts = CsvOptions::new("b");
        opts.max_rows = Some(2);
        assert_eq!(load_csv(f.path(), &opts).unwrap().y, vec![2.0, 4.0]);
    }

    #[test]
    fn semicolon_delimiter() {
        let f = write_tmp("a;b\n1.5;2\n");
        let mut opts = CsvOptions::new("b");
        opts.delimiter = b';';
        assert_eq!(load_csv(f.path(), &opts).unwrap().x.get(0, 0), 1.5);
    }

    #[test]
    fn fold_sizes() {
        let f = make_folds(10, 5, 1).unwrap();
        assert_eq!(f.fold_sizes(), vec![2; 5]);
        let mut sizes = make_folds(11, 5, 1).unwrap().fold_sizes();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 2, 2, 2, 3]);
    }

    #[test]
    fn fold_errors() {
        assert!(make_folds(3, 4, 0).is_err());
        assert!(make_folds(3, 1, 0).is_err());
    }

    #[test]
    fn folds_deterministic() {
        assert_eq!(make_folds(50, 5, 9).unwrap(), make_folds(50, 5, 9).unwrap());
        assert_ne!(make_folds(50, 5, 9).unwrap(), make_folds(50, 5, 10).unwrap());
    }

    #[test]
    fn mask_rejects_empty_row_or_column() {
        assert!(MissMask::new(2, 2, vec![false, false, true, true]).is_err());
        assert!(MissMask::new(2, 2, vec![false, true, false, true]).is_err());
        assert!(MissMask::new(2, 2, vec![false, true, true, false]).is_ok());
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_bitwise(
            rows in prop::collection::vec(prop::collection::vec(-1e12f64..1e12, 3), 1..20)
        ) {
            let x = Matrix::from_rows(&rows.iter().map(|r| r[..2].to_vec()).collect::<Vec<_>>()).unwrap();
            let y: Vec<f64> = rows.iter().map(|r| r[2]).collect();
            let d = DataMatrix::with_default_names(x, y).unwrap();
            let f = tempfile::NamedTempFile::new().unwrap();
            write_csv(&d, "y", f.path()).unwrap();
            let back = load_csv(f.path(), &CsvOptions::new("y")).unwrap();
            prop_assert_eq!(back.x.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                            d.x.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
            prop_assert_eq!(back.y.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                            d.y.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }

        #[test]
        fn folds_partition(n in 2usize..200, k in 2usize..10, seed in any::<u64>()) {
            prop_assume!(k <= n);
            let f = make_folds(n, k, seed).unwrap();
            let mut seen = vec![0; n];
            for fold in 0..k {
                for i in f.test_rows(fold) {
                    seen[i] += 1;
                }
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
            let target = n as f64 / k as f64;
            prop_assert!(f.fold_sizes().iter().all(|&s| (s as f64 - target).abs() <= 1.0));
        }
    }
}
