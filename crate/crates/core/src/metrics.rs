//! Per-target scoring (MSE, R²), fit reports, and method comparison.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Identification method a report belongs to. The enum order is the
/// canonical report ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Sindy,
    Dsr,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Sindy => write!(f, "sindy"),
            Method::Dsr => write!(f, "dsr"),
        }
    }
}

/// Mean squared error.
pub fn mse(pred: &[f64], actual: &[f64]) -> Result<f64> {
    if pred.len() != actual.len() || pred.is_empty() {
        return Err(Error::Mismatch(format!(
            "mse: prediction has {} samples, actual has {}",
            pred.len(),
            actual.len()
        )));
    }
    let n = pred.len() as f64;
    Ok(pred
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a) * (p - a))
        .sum::<f64>()
        / n)
}

/// Coefficient of determination, 1 − SS_res/SS_tot.
pub fn r2(pred: &[f64], actual: &[f64]) -> Result<f64> {
    if pred.len() != actual.len() || pred.is_empty() {
        return Err(Error::Mismatch(format!(
            "r2: prediction has {} samples, actual has {}",
            pred.len(),
            actual.len()
        )));
    }
    let n = actual.len() as f64;
    let mean = actual.iter().sum::<f64>() / n;
    let ss_tot: f64 = actual.iter().map(|a| (a - mean) * (a - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::DegenerateData(
            "r2: actual values have zero variance".into(),
        ));
    }
    let ss_res: f64 = pred
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a) * (p - a))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Per-target scores for one method.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetReport {
    pub target: String,
    pub mse: f64,
    pub r2: f64,
    /// Active terms (SINDy) or expression length (DSR).
    pub complexity: usize,
}

/// Scores for all 9 targets plus the training wall-clock.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub method: Method,
    pub rows: Vec<TargetReport>,
    pub runtime_s: f64,
    pub fingerprint: String,
}

impl FitReport {
    pub fn validate(&self) -> Result<()> {
        let expected = Dataset::target_names();
        if self.rows.len() != expected.len() {
            return Err(Error::Mismatch(format!(
                "report has {} rows, expected {}",
                self.rows.len(),
                expected.len()
            )));
        }
        for (row, name) in self.rows.iter().zip(&expected) {
            if &row.target != name {
                return Err(Error::Mismatch(format!(
                    "report row '{}' does not match target '{name}'",
                    row.target
                )));
            }
            if !(row.mse >= 0.0) || !(row.r2 <= 1.0) {
                return Err(Error::Mismatch(format!(
                    "report row '{}' has invalid scores (mse {}, r2 {})",
                    row.target, row.mse, row.r2
                )));
            }
        }
        Ok(())
    }
}

/// Score one-step derivative predictions (samples × 9) against a dataset.
/// `complexity` supplies the per-target model size; `runtime_s` is copied
/// from the training record.
pub fn evaluate_predictions(
    predictions: &DMatrix<f64>,
    ds: &Dataset,
    method: Method,
    complexity: &[usize],
    runtime_s: f64,
) -> Result<FitReport> {
    if predictions.nrows() != ds.n_samples() || predictions.ncols() != ds.dx.ncols() {
        return Err(Error::Mismatch(format!(
            "prediction matrix is {}×{}, dataset wants {}×{}",
            predictions.nrows(),
            predictions.ncols(),
            ds.n_samples(),
            ds.dx.ncols()
        )));
    }
    if complexity.len() != ds.dx.ncols() {
        return Err(Error::Mismatch("complexity list length".into()));
    }
    let names = Dataset::target_names();
    let mut rows = Vec::with_capacity(names.len());
    for (t, name) in names.iter().enumerate() {
        let actual = ds.target(t);
        let pred: Vec<f64> = predictions.column(t).iter().copied().collect();
        rows.push(TargetReport {
            target: name.clone(),
            mse: mse(&pred, &actual)?,
            r2: r2(&pred, &actual)?,
            complexity: complexity[t],
        });
    }
    let report = FitReport {
        method,
        rows,
        runtime_s,
        fingerprint: ds.fingerprint(),
    };
    report.validate()?;
    Ok(report)
}

/// Side-by-side comparison of ≥2 reports over the same dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Comparison {
    /// Methods in canonical order.
    pub methods: Vec<Method>,
    /// One row per target: scores per method, in `methods` order.
    pub rows: Vec<ComparisonRow>,
    /// DSR wall-clock divided by SINDy wall-clock, when both are present.
    pub runtime_ratio: Option<f64>,
    pub fingerprint: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub target: String,
    pub mse: Vec<f64>,
    pub r2: Vec<f64>,
    pub complexity: Vec<usize>,
}

/// Compare reports computed on the same dataset fingerprint. Input order is
/// irrelevant; methods are sorted canonically.
pub fn compare(reports: &[FitReport]) -> Result<Comparison> {
    if reports.len() < 2 {
        return Err(Error::Mismatch(
            "comparison needs at least two reports".into(),
        ));
    }
    for r in reports {
        r.validate()?;
    }
    let fp = &reports[0].fingerprint;
    for r in &reports[1..] {
        if &r.fingerprint != fp {
            return Err(Error::FingerprintMismatch {
                a: fp.clone(),
                b: r.fingerprint.clone(),
            });
        }
    }
    let mut ordered: Vec<&FitReport> = reports.iter().collect();
    ordered.sort_by_key(|r| r.method);

    let names = Dataset::target_names();
    let rows = names
        .iter()
        .enumerate()
        .map(|(t, name)| ComparisonRow {
            target: name.clone(),
            mse: ordered.iter().map(|r| r.rows[t].mse).collect(),
            r2: ordered.iter().map(|r| r.rows[t].r2).collect(),
            complexity: ordered.iter().map(|r| r.rows[t].complexity).collect(),
        })
        .collect();

    let sindy_rt = ordered
        .iter()
        .find(|r| r.method == Method::Sindy)
        .map(|r| r.runtime_s);
    let dsr_rt = ordered
        .iter()
        .find(|r| r.method == Method::Dsr)
        .map(|r| r.runtime_s);
    let runtime_ratio = match (sindy_rt, dsr_rt) {
        (Some(s), Some(d)) if s > 0.0 => Some(d / s),
        _ => None,
    };

    Ok(Comparison {
        methods: ordered.iter().map(|r| r.method).collect(),
        rows,
        runtime_ratio,
        fingerprint: fp.clone(),
    })
}

impl Comparison {
    /// Comma-separated table: target, then mse/r2/complexity per method.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("target");
        for m in &self.methods {
            write!(out, ",{m}_mse,{m}_r2,{m}_complexity").unwrap();
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.target);
            for i in 0..self.methods.len() {
                write!(
                    out,
                    ",{:.12e},{:.12},{}",
                    row.mse[i], row.r2[i], row.complexity[i]
                )
                .unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// Aligned plain-text table.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        write!(out, "{:<12}", "target").unwrap();
        for m in &self.methods {
            write!(out, "{:>14} {:>10} {:>7}", format!("{m}_mse"), format!("{m}_r2"), "terms")
                .unwrap();
        }
        out.push('\n');
        for row in &self.rows {
            write!(out, "{:<12}", row.target).unwrap();
            for i in 0..self.methods.len() {
                write!(
                    out,
                    "{:>14.4e} {:>10.5} {:>7}",
                    row.mse[i], row.r2[i], row.complexity[i]
                )
                .unwrap();
            }
            out.push('\n');
        }
        out
    }
}
