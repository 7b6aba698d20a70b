//! Samples of i.i.d. observations and their CSV interchange format.
//!
//! A [`SampleSet`] stores `n` observations of fixed dimension `m` in one
//! row-major buffer. Construction validates finiteness once so every
//! downstream estimator can assume clean data. The CSV format is one
//! observation per row, columns as coordinates, with an optional header
//! line that is detected by attempting to parse the first row as numbers.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Result, RiskError};
use crate::scalar::Scalar;

/// Where a sample came from; carried into reports for traceability.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Provenance {
    /// Drawn from a named generator with a seed.
    Generator { name: String, seed: u64 },
    /// Loaded from a file on disk.
    File { path: String },
    /// Built in memory.
    Literal,
}

/// An i.i.d. sample of `n` observations in `R^m`, stored row-major.
#[derive(Clone, Debug)]
pub struct SampleSet<T> {
    data: Vec<T>,
    n: usize,
    dim: usize,
    provenance: Provenance,
    header: Option<Vec<String>>,
}

impl<T: Scalar> SampleSet<T> {
    /// Builds a sample from a flat row-major buffer.
    ///
    /// # Errors
    /// * [`RiskError::EmptySample`] when `data` is empty or `dim` is zero.
    /// * [`RiskError::DimensionMismatch`] when `data.len()` is not a
    ///   multiple of `dim`.
    /// * [`RiskError::NonFiniteInput`] when any entry is NaN or infinite.
    pub fn from_flat(data: Vec<T>, dim: usize, provenance: Provenance) -> Result<Self> {
        if dim == 0 {
            return Err(RiskError::EmptySample {
                context: "observation dimension is zero".into(),
            });
        }
        if data.is_empty() {
            return Err(RiskError::EmptySample {
                context: "no observations".into(),
            });
        }
        if data.len() % dim != 0 {
            return Err(RiskError::DimensionMismatch {
                context: format!(
                    "{} values do not form whole rows of dimension {dim}",
                    data.len()
                ),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(RiskError::non_finite(format!(
                "observation {} coordinate {} is {}",
                pos / dim,
                pos % dim,
                data[pos]
            )));
        }
        let n = data.len() / dim;
        Ok(SampleSet {
            data,
            n,
            dim,
            provenance,
            header: None,
        })
    }

    /// Builds a one-dimensional sample from scalar observations.
    pub fn from_scalars(values: Vec<T>, provenance: Provenance) -> Result<Self> {
        Self::from_flat(values, 1, provenance)
    }

    /// Number of observations.
    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    /// True when the sample holds no observations. Construction forbids
    /// this, so the method exists for API completeness.
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Observation dimension `m`.
    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Borrows observation `i` as a coordinate slice.
    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Iterates over observations in order.
    pub fn rows(&self) -> impl Iterator<Item = &[T]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    /// Borrows the whole buffer as scalars; only valid for dimension 1.
    ///
    /// # Panics
    /// Panics when the sample is multivariate.
    #[inline]
    pub fn scalars(&self) -> &[T] {
        assert_eq!(self.dim, 1, "scalars() on a multivariate sample");
        &self.data
    }

    /// Copies coordinate `j` of every observation.
    pub fn column(&self, j: usize) -> Vec<T> {
        assert!(j < self.dim, "column index out of range");
        (0..self.n).map(|i| self.data[i * self.dim + j]).collect()
    }

    /// Per-coordinate minimum over all observations.
    pub fn coordinate_min(&self) -> Vec<T> {
        let mut out = self.row(0).to_vec();
        for r in self.rows().skip(1) {
            for (o, &v) in out.iter_mut().zip(r) {
                if v < *o {
                    *o = v;
                }
            }
        }
        out
    }

    /// Per-coordinate maximum over all observations.
    pub fn coordinate_max(&self) -> Vec<T> {
        let mut out = self.row(0).to_vec();
        for r in self.rows().skip(1) {
            for (o, &v) in out.iter_mut().zip(r) {
                if v > *o {
                    *o = v;
                }
            }
        }
        out
    }

    /// Provenance record.
    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Column names when the source file had a header line.
    pub fn header(&self) -> Option<&[String]> {
        self.header.as_deref()
    }

    /// Applies `f` to every observation, yielding a new sample of the same
    /// shape. Used by the coherence checks for shifts and rescalings.
    pub fn map_observations(&self, f: impl Fn(&[T]) -> Vec<T>) -> Result<Self> {
        let mut data = Vec::with_capacity(self.data.len());
        for r in self.rows() {
            let v = f(r);
            if v.len() != self.dim {
                return Err(RiskError::DimensionMismatch {
                    context: format!(
                        "map produced dimension {} on a dimension-{} sample",
                        v.len(),
                        self.dim
                    ),
                });
            }
            data.extend(v);
        }
        Self::from_flat(data, self.dim, Provenance::Literal)
    }

    /// Reads a CSV file: one observation per row, optional header.
    ///
    /// A first line whose cells all parse as numbers is data; otherwise it
    /// is kept as the header. Blank lines are skipped.
    ///
    /// # Errors
    /// I/O failures, ragged rows, unparseable or non-finite cells; all
    /// diagnostics carry the path and 1-based line number.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let path_str = path.display().to_string();
        let text = fs::read_to_string(path).map_err(|source| RiskError::Io {
            path: path_str.clone(),
            source,
        })?;
        let mut header: Option<Vec<String>> = None;
        let mut data: Vec<T> = Vec::new();
        let mut dim: Option<usize> = None;
        let mut saw_rows = false;
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let cells: Vec<&str> = trimmed.split(',').map(str::trim).collect();
            let parsed: std::result::Result<Vec<f64>, _> =
                cells.iter().map(|c| c.parse::<f64>()).collect();
            match parsed {
                Err(_) if !saw_rows && header.is_none() => {
                    header = Some(cells.into_iter().map(String::from).collect());
                    continue;
                }
                Err(_) => {
                    let bad = cells
                        .iter()
                        .find(|c| c.parse::<f64>().is_err())
                        .copied()
                        .unwrap_or("");
                    return Err(RiskError::Parse {
                        path: path_str,
                        line: line_no,
                        message: format!("cell {bad:?} is not a number"),
                    });
                }
                Ok(values) => {
                    match dim {
                        None => dim = Some(values.len()),
                        Some(d) if d != values.len() => {
                            return Err(RiskError::Parse {
                                path: path_str,
                                line: line_no,
                                message: format!(
                                    "row has {} cells, expected {d}",
                                    values.len()
                                ),
                            });
                        }
                        Some(_) => {}
                    }
                    for v in values {
                        if !v.is_finite() {
                            return Err(RiskError::Parse {
                                path: path_str,
                                line: line_no,
                                message: format!("non-finite value {v}"),
                            });
                        }
                        data.push(T::of(v));
                    }
                    saw_rows = true;
                }
            }
        }
        let dim = dim.ok_or_else(|| RiskError::EmptySample {
            context: format!("{path_str} holds no data rows"),
        })?;
        let mut s = Self::from_flat(
            data,
            dim,
            Provenance::File {
                path: path_str,
            },
        )?;
        s.header = header;
        Ok(s)
    }

    /// Writes the sample as CSV, emitting the stored header when present.
    ///
    /// Values are printed with Rust's shortest round-trip formatting, so a
    /// read-write-read cycle reproduces the numbers bit for bit.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let path_str = path.display().to_string();
        let mut out = String::new();
        if let Some(h) = &self.header {
            out.push_str(&h.join(","));
            out.push('\n');
        }
        for r in self.rows() {
            let cells: Vec<String> = r.iter().map(|v| format!("{}", v.as_f64())).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        let mut file = fs::File::create(path).map_err(|source| RiskError::Io {
            path: path_str.clone(),
            source,
        })?;
        file.write_all(out.as_bytes()).map_err(|source| RiskError::Io {
            path: path_str,
            source,
        })?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp_path(name: &str) -> std::path::PathBuf {
        let mut p = std::env::temp_dir();
        p.push(format!("riskclt_sample_{}_{name}", std::process::id()));
        p
    }

    #[test]
    fn construction_validates_shape_and_finiteness() {
        assert!(SampleSet::from_flat(vec![1.0f64, 2.0, 3.0], 2, Provenance::Literal).is_err());
        assert!(SampleSet::from_flat(Vec::<f64>::new(), 1, Provenance::Literal).is_err());
        assert!(
            SampleSet::from_flat(vec![1.0f64, f64::NAN], 1, Provenance::Literal).is_err()
        );
        assert!(
            SampleSet::from_flat(vec![1.0f64, f64::INFINITY], 1, Provenance::Literal).is_err()
        );
        let s = SampleSet::from_flat(vec![1.0f64, 2.0, 3.0, 4.0], 2, Provenance::Literal).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.dim(), 2);
        assert_eq!(s.row(1), &[3.0, 4.0]);
    }

    #[test]
    fn coordinate_extrema_cover_all_rows() {
        let s = SampleSet::from_flat(
            vec![1.0f64, 10.0, -3.0, 4.0, 2.0, 7.0],
            2,
            Provenance::Literal,
        )
        .unwrap();
        assert_eq!(s.coordinate_min(), vec![-3.0, 4.0]);
        assert_eq!(s.coordinate_max(), vec![2.0, 10.0]);
    }

    #[test]
    fn csv_round_trip_with_header() {
        let p = tmp_path("header.csv");
        fs::write(&p, "loss,weight\n1.5,2\n-0.25,4\n").unwrap();
        let s: SampleSet<f64> = SampleSet::read_csv(&p).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.dim(), 2);
        assert_eq!(s.header().unwrap(), &["loss".to_string(), "weight".into()]);
        assert_eq!(s.row(0), &[1.5, 2.0]);

        let q = tmp_path("header_echo.csv");
        s.write_csv(&q).unwrap();
        let echoed: SampleSet<f64> = SampleSet::read_csv(&q).unwrap();
        assert_eq!(echoed.row(0), s.row(0));
        assert_eq!(echoed.row(1), s.row(1));
        assert_eq!(echoed.header(), s.header());
        fs::remove_file(&p).ok();
        fs::remove_file(&q).ok();
    }

    #[test]
    fn csv_without_header_and_with_blank_lines() {
        let p = tmp_path("plain.csv");
        fs::write(&p, "1\n\n2\n3\n").unwrap();
        let s: SampleSet<f64> = SampleSet::read_csv(&p).unwrap();
        assert_eq!(s.scalars(), &[1.0, 2.0, 3.0]);
        assert!(s.header().is_none());
        fs::remove_file(&p).ok();
    }

    #[test]
    fn csv_rejects_ragged_and_non_numeric_rows() {
        let p = tmp_path("ragged.csv");
        fs::write(&p, "1,2\n3\n").unwrap();
        let err = SampleSet::<f64>::read_csv(&p).unwrap_err();
        assert!(err.to_string().contains(":2"), "diagnostic should carry the line: {err}");
        fs::remove_file(&p).ok();

        let q = tmp_path("words.csv");
        fs::write(&q, "1,2\n3,oops\n").unwrap();
        assert!(SampleSet::<f64>::read_csv(&q).is_err());
        fs::remove_file(&q).ok();
    }

    #[test]
    fn csv_read_write_read_is_bit_exact() {
        let p = tmp_path("bits.csv");
        fs::write(&p, "0.1\n0.2\n0.30000000000000004\n1e-300\n").unwrap();
        let s: SampleSet<f64> = SampleSet::read_csv(&p).unwrap();
        let q = tmp_path("bits_echo.csv");
        s.write_csv(&q).unwrap();
        let t: SampleSet<f64> = SampleSet::read_csv(&q).unwrap();
        assert_eq!(s.scalars(), t.scalars());
        fs::remove_file(&p).ok();
        fs::remove_file(&q).ok();
    }

    #[test]
    fn map_observations_preserves_shape() {
        let s = SampleSet::from_scalars(vec![1.0f64, 2.0], Provenance::Literal).unwrap();
        let shifted = s.map_observations(|r| vec![r[0] + 5.0]).unwrap();
        assert_eq!(shifted.scalars(), &[6.0, 7.0]);
        let bad = s.map_observations(|r| vec![r[0], r[0]]);
        assert!(bad.is_err());
    }

    #[test]
    fn missing_file_reports_path() {
        let err = SampleSet::<f64>::read_csv("/nonexistent/risk.csv").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/risk.csv"));
    }
}
