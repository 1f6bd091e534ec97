//! Sample points on a box `[lo, hi]^n` and their CSV representation.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Closed interval `[lo, hi]` with `lo < hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Scalar> Interval<T> {
    pub fn new(lo: T, hi: T) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid(format!(
                "interval needs lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn unit() -> Self {
        Self {
            lo: T::zero(),
            hi: T::one(),
        }
    }

    /// Width `hi - lo`.
    pub fn width(&self) -> T {
        self.hi - self.lo
    }

    pub fn contains(&self, x: T) -> bool {
        x >= self.lo && x <= self.hi
    }

    /// Midpoints of `cells` equal cells.
    pub fn cell_centers(&self, cells: usize) -> Vec<T> {
        let h = self.width() / T::from_count(cells);
        (0..cells)
            .map(|k| self.lo + (T::from_count(k) + T::lit(0.5)) * h)
            .collect()
    }
}

/// `N` points of dimension `n`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    n: usize,
    values: Vec<T>,
    interval: Interval<T>,
}

impl<T: Scalar> Dataset<T> {
    /// Builds a dataset from row-major values, validating shape and range.
    pub fn new(n: usize, values: Vec<T>, interval: Interval<T>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("n >= 1 violated"));
        }
        if values.is_empty() {
            return Err(Error::invalid("N >= 1 violated"));
        }
        if !values.len().is_multiple_of(n) {
            return Err(Error::invalid(format!(
                "{} values do not form rows of length {n}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|&v| !interval.contains(v)) {
            return Err(Error::Domain(format!(
                "row {}, column {}: value {} outside [{}, {}]",
                pos / n,
                pos % n,
                values[pos],
                interval.lo,
                interval.hi
            )));
        }
        Ok(Self {
            n,
            values,
            interval,
        })
    }

    pub fn from_rows(rows: &[Vec<T>], interval: Interval<T>) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("rows have different lengths"));
        }
        Self::new(n.max(1), rows.concat(), interval)
    }

    /// Variables per point.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of points.
    pub fn len(&self) -> usize {
        self.values.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn interval(&self) -> Interval<T> {
        self.interval
    }

    pub fn row(&self, mu: usize) -> &[T] {
        &self.values[mu * self.n..(mu + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> + '_ {
        self.values.chunks_exact(self.n)
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// One point per line, comma separated, shortest round-trip decimal form.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 20);
        for row in self.rows() {
            for (k, v) in row.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }

    /// Parses CSV text; `origin` is only used in error messages.
    pub fn parse_csv(text: &str, interval: Interval<T>, origin: &Path) -> Result<Self> {
        let mut n = 0;
        let mut values = Vec::new();
        let mut rows = 0;
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let lineno = idx + 1;
            let start = values.len();
            for field in line.split(',') {
                let v: T = field.trim().parse().map_err(|_| Error::Parse {
                    path: origin.to_path_buf(),
                    line: lineno,
                    message: format!("cannot parse '{}' as a number", field.trim()),
                })?;
                values.push(v);
            }
            let width = values.len() - start;
            if rows == 0 {
                n = width;
            } else if width != n {
                return Err(Error::Parse {
                    path: origin.to_path_buf(),
                    line: lineno,
                    message: format!("expected {n} fields, found {width}"),
                });
            }
            for (column, &v) in values[start..].iter().enumerate() {
                if !interval.contains(v) {
                    return Err(Error::Validation {
                        path: origin.to_path_buf(),
                        row: rows,
                        column,
                        value: v.to_string(),
                        lo: interval.lo.to_string(),
                        hi: interval.hi.to_string(),
                    });
                }
            }
            rows += 1;
        }
        if rows == 0 {
            return Err(Error::Format {
                path: origin.to_path_buf(),
                message: "no data rows: N >= 1 violated".into(),
            });
        }
        Self::new(n, values, interval)
    }
}

pub fn load_dataset<T: Scalar>(
    path: impl AsRef<Path>,
    interval: Interval<T>,
) -> Result<Dataset<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Dataset::parse_csv(&text, interval, path)
}

pub fn save_dataset<T: Scalar>(data: &Dataset<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, data.to_csv()).map_err(|e| Error::io(path, e))
}
