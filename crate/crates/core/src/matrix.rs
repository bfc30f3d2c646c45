//! Dense real matrices.
//!
//! [`DenseMatrix`] is an immutable value type: every operation returns a new
//! matrix. Storage is delegated to `faer`, but the public contract is
//! row-major (`new`, `to_row_major`, the CSV format).

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::ops::{Add, Mul, Neg, Sub};
use std::path::Path;

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    inner: Mat<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl Serialize for DenseMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        RawMatrix {
            rows: self.rows(),
            cols: self.cols(),
            entries: self.to_row_major(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DenseMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = RawMatrix::deserialize(d)?;
        DenseMatrix::new(raw.rows, raw.cols, raw.entries).map_err(serde::de::Error::custom)
    }
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows(), self.cols())?;
        for i in 0..self.rows().min(8) {
            let row: Vec<String> = (0..self.cols().min(8))
                .map(|j| format!("{:.4e}", self.get(i, j)))
                .collect();
            writeln!(f, "  {}", row.join(", "))?;
        }
        write!(f, "]")
    }
}

impl DenseMatrix {
    /// Builds a matrix from row-major entries, rejecting NaN/Inf.
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(shape_err(
                "DenseMatrix::new",
                format!("{} entries", rows * cols),
                format!("{} entries", entries.len()),
            ));
        }
        if let Some(k) = entries.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: k / cols.max(1),
                col: k % cols.max(1),
            });
        }
        Ok(Self {
            inner: Mat::from_fn(rows, cols, |i, j| entries[i * cols + j]),
        })
    }

    /// Builds a matrix from a slice of equally long rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
            return Err(shape_err(
                "DenseMatrix::from_rows",
                format!("{cols} columns"),
                format!("row {bad} with {} columns", rows[bad].len()),
            ));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            inner: Mat::zeros(rows, cols),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            inner: Mat::identity(n, n),
        }
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        Self::from_fn(n, n, |i, j| if i == j { values[i] } else { 0.0 })
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> f64) -> Self {
        Self {
            inner: Mat::from_fn(rows, cols, f),
        }
    }

    /// Column vector.
    pub fn column(values: &[f64]) -> Self {
        Self::from_fn(values.len(), 1, |i, _| values[i])
    }

    pub(crate) fn from_faer(inner: Mat<f64>) -> Self {
        Self { inner }
    }

    pub(crate) fn as_faer(&self) -> MatRef<'_, f64> {
        self.inner.as_ref()
    }

    pub(crate) fn into_faer(self) -> Mat<f64> {
        self.inner
    }

    pub fn rows(&self) -> usize {
        self.inner.nrows()
    }

    pub fn cols(&self) -> usize {
        self.inner.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows(), self.cols())
    }

    pub fn len(&self) -> usize {
        self.rows() * self.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner[(i, j)]
    }

    /// Returns a copy with entry `(i, j)` replaced.
    pub fn with_entry(&self, i: usize, j: usize, value: f64) -> Self {
        let mut inner = self.inner.clone();
        inner[(i, j)] = value;
        Self { inner }
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                out.push(self.get(i, j));
            }
        }
        out
    }

    /// Column-major vectorization, `vec(M)`.
    pub fn vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for j in 0..self.cols() {
            for i in 0..self.rows() {
                out.push(self.get(i, j));
            }
        }
        out
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.cols()).map(|j| self.get(i, j)).collect()
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows()).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Self {
        Self {
            inner: self.inner.transpose().to_owned(),
        }
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self::from_fn(self.rows(), self.cols(), |i, j| f(self.get(i, j)))
    }

    pub fn scale(&self, k: f64) -> Self {
        Self {
            inner: &self.inner * faer::Scale(k),
        }
    }

    pub fn try_matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols() != rhs.rows() {
            return Err(shape_err(
                "matmul",
                format!("{} rows on the right", self.cols()),
                format!("{}x{}", rhs.rows(), rhs.cols()),
            ));
        }
        Ok(Self {
            inner: &self.inner * &rhs.inner,
        })
    }

    pub fn try_add(&self, rhs: &Self) -> Result<Self> {
        self.same_shape("add", rhs)?;
        Ok(Self {
            inner: &self.inner + &rhs.inner,
        })
    }

    pub fn try_sub(&self, rhs: &Self) -> Result<Self> {
        self.same_shape("sub", rhs)?;
        Ok(Self {
            inner: &self.inner - &rhs.inner,
        })
    }

    pub(crate) fn same_shape(&self, op: &'static str, rhs: &Self) -> Result<()> {
        if self.shape() != rhs.shape() {
            return Err(shape_err(
                op,
                format!("{}x{}", self.rows(), self.cols()),
                format!("{}x{}", rhs.rows(), rhs.cols()),
            ));
        }
        Ok(())
    }

    /// Trace inner product `tr(AᵀB)`.
    pub fn inner(&self, rhs: &Self) -> f64 {
        assert_eq!(self.shape(), rhs.shape(), "inner product shape mismatch");
        let mut acc = 0.0;
        for j in 0..self.cols() {
            for i in 0..self.rows() {
                acc += self.get(i, j) * rhs.get(i, j);
            }
        }
        acc
    }

    pub fn frobenius(&self) -> f64 {
        self.inner.norm_l2()
    }

    pub fn max_abs(&self) -> f64 {
        self.inner.norm_max()
    }

    /// Number of entries with magnitude above `cutoff`.
    pub fn count_above(&self, cutoff: f64) -> usize {
        let mut n = 0;
        for j in 0..self.cols() {
            for i in 0..self.rows() {
                if self.get(i, j).abs() > cutoff {
                    n += 1;
                }
            }
        }
        n
    }

    /// Rows `rows` of the matrix, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self::from_fn(rows.len(), self.cols(), |i, j| self.get(rows[i], j))
    }

    /// Columns `cols` of the matrix, in the given order.
    pub fn select_cols(&self, cols: &[usize]) -> Self {
        Self::from_fn(self.rows(), cols.len(), |i, j| self.get(i, cols[j]))
    }

    pub fn is_finite(&self) -> bool {
        (0..self.cols()).all(|j| (0..self.rows()).all(|i| self.get(i, j).is_finite()))
    }

    /// Parses the plain CSV matrix format: one row per line, comma
    /// separated, no header. Blank lines and lines starting with `#` are
    /// skipped.
    pub fn parse_csv(text: &str, path: &Path) -> Result<Self> {
        let parse_err = |line: usize, field: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            field,
            msg,
        };
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut width = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut row = Vec::new();
            for (k, field) in line.split(',').enumerate() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|e| parse_err(lineno + 1, k + 1, format!("cannot parse {field:?}: {e}")))?;
                if !v.is_finite() {
                    return Err(parse_err(lineno + 1, k + 1, "non-finite value".into()));
                }
                row.push(v);
            }
            match width {
                None => width = Some(row.len()),
                Some(w) if w != row.len() => {
                    return Err(parse_err(
                        lineno + 1,
                        row.len().min(w) + 1,
                        format!("ragged row: expected {w} fields, found {}", row.len()),
                    ));
                }
                _ => {}
            }
            rows.push(row);
        }
        Self::from_rows(&rows)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_csv(&text, path)
    }

    /// CSV text with 17 significant digits per entry, so values round-trip
    /// exactly.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.len() * 24);
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                if j > 0 {
                    out.push(',');
                }
                out.push_str(&format!("{:.16e}", self.get(i, j)));
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut f = fs::File::create(path).map_err(io)?;
        f.write_all(self.to_csv().as_bytes()).map_err(io)
    }
}

impl Add for &DenseMatrix {
    type Output = DenseMatrix;
    fn add(self, rhs: &DenseMatrix) -> DenseMatrix {
        self.try_add(rhs).expect("shape mismatch in add")
    }
}

impl Sub for &DenseMatrix {
    type Output = DenseMatrix;
    fn sub(self, rhs: &DenseMatrix) -> DenseMatrix {
        self.try_sub(rhs).expect("shape mismatch in sub")
    }
}

impl Mul for &DenseMatrix {
    type Output = DenseMatrix;
    fn mul(self, rhs: &DenseMatrix) -> DenseMatrix {
        self.try_matmul(rhs).expect("shape mismatch in matmul")
    }
}

impl Mul<f64> for &DenseMatrix {
    type Output = DenseMatrix;
    fn mul(self, k: f64) -> DenseMatrix {
        self.scale(k)
    }
}

impl Neg for &DenseMatrix {
    type Output = DenseMatrix;
    fn neg(self) -> DenseMatrix {
        self.scale(-1.0)
    }
}
