//! Sampled trajectory data: measured states, reference inputs, and the
//! derivatives of the measured states.
//!
//! Column order is fixed: time, then the 9 measured states, then the 3
//! reference inputs, then the 9 derivatives. The CSV encoding uses 17
//! significant digits so that write → read round-trips every f64 exactly.

use crate::error::{Error, Result};
use crate::plant::MEASURED_NAMES;
use nalgebra::DMatrix;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::Path;

/// Reference input column names, in dataset order.
pub const INPUT_NAMES: [&str; 3] = ["p_ref", "q_ref", "v_ref"];

/// Number of measured states.
pub const N_MEASURED: usize = 9;
/// Number of reference inputs.
pub const N_INPUTS: usize = 3;
/// Measured states plus inputs: the regression variables.
pub const N_VARS: usize = N_MEASURED + N_INPUTS;

/// Index of theta_oc among the regression variables (for trig library terms).
pub const THETA_OC_COL: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Sample times, s.
    pub time: Vec<f64>,
    /// Measured states, samples × 9.
    pub x: DMatrix<f64>,
    /// Reference inputs, samples × 3.
    pub u: DMatrix<f64>,
    /// Derivatives of the measured states, samples × 9.
    pub dx: DMatrix<f64>,
}

impl Dataset {
    pub fn n_samples(&self) -> usize {
        self.time.len()
    }

    /// Header names in file order.
    pub fn column_names() -> Vec<String> {
        let mut names = vec!["t".to_string()];
        names.extend(MEASURED_NAMES.iter().map(|s| s.to_string()));
        names.extend(INPUT_NAMES.iter().map(|s| s.to_string()));
        names.extend(MEASURED_NAMES.iter().map(|s| format!("d_{s}")));
        names
    }

    /// Names of the 12 regression variables (states then inputs).
    pub fn var_names() -> Vec<String> {
        MEASURED_NAMES
            .iter()
            .chain(INPUT_NAMES.iter())
            .map(|s| s.to_string())
            .collect()
    }

    /// Names of the 9 regression targets.
    pub fn target_names() -> Vec<String> {
        MEASURED_NAMES.iter().map(|s| format!("d_{s}")).collect()
    }

    /// Samples × 12 matrix of regression variables: [X | U].
    pub fn var_matrix(&self) -> DMatrix<f64> {
        let n = self.n_samples();
        let mut m = DMatrix::zeros(n, N_VARS);
        m.view_mut((0, 0), (n, N_MEASURED)).copy_from(&self.x);
        m.view_mut((0, N_MEASURED), (n, N_INPUTS)).copy_from(&self.u);
        m
    }

    /// One target column (derivative of measured state `idx`).
    pub fn target(&self, idx: usize) -> Vec<f64> {
        self.dx.column(idx).iter().copied().collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_samples();
        if n == 0 {
            return Err(Error::DegenerateData("dataset has no samples".into()));
        }
        if self.x.nrows() != n || self.u.nrows() != n || self.dx.nrows() != n {
            return Err(Error::Mismatch(format!(
                "row counts differ: time {n}, X {}, U {}, dX {}",
                self.x.nrows(),
                self.u.nrows(),
                self.dx.nrows()
            )));
        }
        if self.x.ncols() != N_MEASURED || self.dx.ncols() != N_MEASURED || self.u.ncols() != N_INPUTS
        {
            return Err(Error::Mismatch("unexpected column counts".into()));
        }
        let all_finite = self.time.iter().all(|v| v.is_finite())
            && self.x.iter().all(|v| v.is_finite())
            && self.u.iter().all(|v| v.is_finite())
            && self.dx.iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::NonFinite {
                context: "dataset".into(),
            });
        }
        Ok(())
    }

    /// CSV serialization: header plus one row per sample, 17 significant
    /// digits, LF line endings.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.n_samples() * 22 * 26);
        out.push_str(&Dataset::column_names().join(","));
        out.push('\n');
        for k in 0..self.n_samples() {
            write!(out, "{:.16e}", self.time[k]).unwrap();
            for j in 0..N_MEASURED {
                write!(out, ",{:.16e}", self.x[(k, j)]).unwrap();
            }
            for j in 0..N_INPUTS {
                write!(out, ",{:.16e}", self.u[(k, j)]).unwrap();
            }
            for j in 0..N_MEASURED {
                write!(out, ",{:.16e}", self.dx[(k, j)]).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            detail: "empty file".into(),
        })?;
        let expected = Dataset::column_names();
        let got: Vec<&str> = header.split(',').collect();
        if got.len() != expected.len() {
            return Err(Error::Parse {
                line: 1,
                detail: format!("expected {} columns, found {}", expected.len(), got.len()),
            });
        }
        for (g, e) in got.iter().zip(expected.iter()) {
            if g != e {
                return Err(Error::Parse {
                    line: 1,
                    detail: format!("header column mismatch: expected '{e}', found '{g}'"),
                });
            }
        }

        let mut time = Vec::new();
        let mut x = Vec::new();
        let mut u = Vec::new();
        let mut dx = Vec::new();
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let lineno = i + 1;
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != expected.len() {
                return Err(Error::Parse {
                    line: lineno,
                    detail: format!("expected {} cells, found {}", expected.len(), cells.len()),
                });
            }
            let mut vals = [0.0f64; 22];
            for (j, c) in cells.iter().enumerate() {
                vals[j] = c.parse::<f64>().map_err(|_| Error::Parse {
                    line: lineno,
                    detail: format!("non-numeric cell '{c}' in column '{}'", expected[j]),
                })?;
            }
            time.push(vals[0]);
            x.extend_from_slice(&vals[1..10]);
            u.extend_from_slice(&vals[10..13]);
            dx.extend_from_slice(&vals[13..22]);
        }
        if time.is_empty() {
            return Err(Error::Parse {
                line: 1,
                detail: "file contains a header but no data rows".into(),
            });
        }
        let n = time.len();
        let ds = Dataset {
            time,
            x: DMatrix::from_row_iterator(n, N_MEASURED, x),
            u: DMatrix::from_row_iterator(n, N_INPUTS, u),
            dx: DMatrix::from_row_iterator(n, N_MEASURED, dx),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.display().to_string()));
        }
        let text = std::fs::read_to_string(path)?;
        Self::from_csv(&text)
    }

    /// SHA-256 over the canonical CSV encoding, hex-encoded. Identifies the
    /// dataset content independent of where the file lives.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_csv().as_bytes());
        let mut s = String::with_capacity(64);
        for b in digest {
            write!(s, "{b:02x}").unwrap();
        }
        s
    }

    /// Every `stride`-th row (row 0 always included). Used to thin data for
    /// expression search.
    pub fn subsample(&self, stride: usize) -> Dataset {
        let stride = stride.max(1);
        let idx: Vec<usize> = (0..self.n_samples()).step_by(stride).collect();
        Dataset {
            time: idx.iter().map(|&k| self.time[k]).collect(),
            x: self.x.select_rows(idx.iter()),
            u: self.u.select_rows(idx.iter()),
            dx: self.dx.select_rows(idx.iter()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_dataset() -> Dataset {
        let n = 3;
        Dataset {
            time: vec![0.0, 0.1, 0.2],
            x: DMatrix::from_fn(n, N_MEASURED, |i, j| (i as f64) * 0.1 + (j as f64)),
            u: DMatrix::from_fn(n, N_INPUTS, |i, j| 1.0 / (1.0 + i as f64 + j as f64)),
            dx: DMatrix::from_fn(n, N_MEASURED, |i, j| ((i * 9 + j) as f64).sin()),
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let ds = tiny_dataset();
        let back = Dataset::from_csv(&ds.to_csv()).unwrap();
        assert_eq!(ds.time, back.time);
        assert_eq!(ds.x, back.x);
        assert_eq!(ds.u, back.u);
        assert_eq!(ds.dx, back.dx);
    }

    #[test]
    fn header_mismatch_names_offending_column() {
        let ds = tiny_dataset();
        let csv = ds.to_csv().replacen("v_filt_r", "bogus", 1);
        let err = Dataset::from_csv(&csv).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("v_filt_r"), "got: {msg}");
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(Dataset::from_csv("").is_err());
        // Header only, no rows: also an error.
        let header = Dataset::column_names().join(",");
        assert!(Dataset::from_csv(&format!("{header}\n")).is_err());
    }

    #[test]
    fn ragged_row_reports_line_number() {
        let ds = tiny_dataset();
        let mut csv = ds.to_csv();
        csv.push_str("1.0,2.0\n");
        let err = Dataset::from_csv(&csv).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 5, .. }), "got: {err}");
    }

    #[test]
    fn non_numeric_cell_reports_column() {
        let ds = tiny_dataset();
        let csv = ds.to_csv().replacen("0.0000000000000000e0", "abc", 1);
        let err = Dataset::from_csv(&csv).unwrap_err();
        assert!(err.to_string().contains("non-numeric"), "got: {err}");
    }

    #[test]
    fn fingerprint_is_content_addressed() {
        let ds = tiny_dataset();
        let mut ds2 = ds.clone();
        assert_eq!(ds.fingerprint(), ds2.fingerprint());
        ds2.x[(0, 0)] += 1e-12;
        assert_ne!(ds.fingerprint(), ds2.fingerprint());
    }

    #[test]
    fn subsample_keeps_first_row_and_stride() {
        let ds = tiny_dataset();
        let s = ds.subsample(2);
        assert_eq!(s.time, vec![0.0, 0.2]);
        assert_eq!(s.x.nrows(), 2);
    }
}
