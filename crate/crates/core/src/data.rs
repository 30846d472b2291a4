//! Dense point matrices and the CSV formats used for data, labels and traces.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// An N×D matrix of points stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    values: Vec<f64>,
    n: usize,
    d: usize,
}

impl Dataset {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * d);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::InvalidData(format!("row {i} has {} columns, expected {d}", row.len())));
            }
            values.extend_from_slice(row);
        }
        Self::from_flat(values, rows.len(), d)
    }

    pub fn from_flat(values: Vec<f64>, n: usize, d: usize) -> Result<Self> {
        if values.len() != n * d {
            return Err(Error::InvalidData(format!("{} values cannot form a {n}x{d} matrix", values.len())));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite value at row {}, column {}",
                pos / d.max(1),
                pos % d.max(1)
            )));
        }
        Ok(Self { values, n, d })
    }

    /// An empty matrix with `d` columns.
    pub fn empty(d: usize) -> Self {
        Self { values: Vec::new(), n: 0, d }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        (0..self.n).map(move |i| self.row(i))
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.values
    }

    /// Copies the selected rows, in the given order, into a new matrix.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Self { values, n: indices.len(), d: self.d }
    }

    /// Appends the rows of `other`; dimensions must agree.
    pub fn extend(&mut self, other: &Dataset) -> Result<()> {
        if other.d != self.d && other.n > 0 {
            return Err(Error::DimensionMismatch { expected: self.d, got: other.d });
        }
        self.values.extend_from_slice(&other.values);
        self.n += other.n;
        Ok(())
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.d];
        for row in self.rows() {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        let n = self.n.max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    /// Sample covariance (divisor N−1), row-major D×D.
    pub fn covariance(&self) -> Vec<f64> {
        let d = self.d;
        let mean = self.mean();
        let mut cov = vec![0.0; d * d];
        for row in self.rows() {
            for a in 0..d {
                let da = row[a] - mean[a];
                for b in 0..d {
                    cov[a * d + b] += da * (row[b] - mean[b]);
                }
            }
        }
        let denom = (self.n.max(2) - 1) as f64;
        cov.iter_mut().for_each(|c| *c /= denom);
        cov
    }
}

/// Reads a headerless CSV of floats, one point per row.
pub fn read_points_csv(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path)?;
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .map(|field| {
                field.parse::<f64>().map_err(|e| {
                    Error::InvalidData(format!("line {}: cannot parse {field:?}: {e}", line + 1))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Dataset::from_rows(&rows)
}

pub fn write_points_csv(path: &Path, data: &Dataset) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for row in data.rows() {
        let line = row.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",");
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads one non-negative integer label per row.
pub fn read_labels_csv(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse::<usize>()
                .map_err(|e| Error::InvalidData(format!("label line {}: cannot parse {l:?}: {e}", i + 1)))
        })
        .collect()
}

pub fn write_labels_csv(path: &Path, labels: &[usize]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for l in labels {
        writeln!(out, "{l}")?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_ragged_and_non_finite() {
        assert!(Dataset::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
        assert!(matches!(Dataset::from_rows(&[vec![1.0, f64::NAN]]), Err(Error::InvalidData(_))));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let data = Dataset::from_rows(&[vec![0.1, -2.5e-300], vec![1.0 / 3.0, 7.0]]).unwrap();
        write_points_csv(&path, &data).unwrap();
        assert_eq!(read_points_csv(&path).unwrap(), data);

        let lpath = dir.path().join("l.csv");
        write_labels_csv(&lpath, &[0, 3, 1]).unwrap();
        assert_eq!(read_labels_csv(&lpath).unwrap(), vec![0, 3, 1]);
    }

    #[test]
    fn covariance_of_simple_set() {
        let data = Dataset::from_rows(&[vec![0.0, 0.0], vec![2.0, 2.0]]).unwrap();
        assert_eq!(data.mean(), vec![1.0, 1.0]);
        assert_eq!(data.covariance(), vec![2.0, 2.0, 2.0, 2.0]);
    }
}
