//! Orchestration of the full experiment: simulate → identify (both
//! methods) → compare. Every artifact lands in the configured output
//! directory together with a manifest that pins the exact configuration.
//!
//! Wall-clock timings are deliberately kept out of the model and report
//! files (they go to `*_timing.json` sidecars) so that a rerun with the
//! same seed reproduces every non-timing artifact byte for byte.

use crate::config::RunConfig;
use crate::dataset::Dataset;
use crate::dsr::{self, DsrConfig, Expression, TokenSet};
use crate::error::{Error, Result};
use crate::metrics::{self, Comparison, FitReport, Method};
use crate::simulator;
use crate::sindy::{self, SparseModel};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const DATASET_FILE: &str = "dataset.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SINDY_MODEL_FILE: &str = "sindy_model.json";
pub const SINDY_EQUATIONS_FILE: &str = "sindy_equations.txt";
pub const SINDY_REPORT_FILE: &str = "sindy_report.csv";
pub const SINDY_TIMING_FILE: &str = "sindy_timing.json";
pub const DSR_MODEL_FILE: &str = "dsr_model.json";
pub const DSR_REPORT_FILE: &str = "dsr_report.csv";
pub const DSR_TIMING_FILE: &str = "dsr_timing.json";
pub const REPORT_CSV_FILE: &str = "report.csv";
pub const REPORT_TXT_FILE: &str = "report.txt";
pub const REPORT_TIMING_FILE: &str = "report_timing.json";

/// Everything needed to re-run the experiment that produced a directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub package: String,
    pub version: String,
    pub config: RunConfig,
    pub dataset_fingerprint: String,
}

/// Stored SINDy model plus the dataset it was fitted on.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SindyModelFile {
    pub fingerprint: String,
    pub model: SparseModel,
}

/// One stored best expression per target.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DsrTargetModel {
    pub target: String,
    pub token_names: Vec<String>,
    pub constants: Vec<f64>,
    pub infix: String,
    /// Training reward on the (thinned) training rows.
    pub reward: f64,
    /// R² of the expression over the full dataset.
    pub r2: f64,
    pub rounds: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DsrModelFile {
    pub fingerprint: String,
    pub targets: Vec<DsrTargetModel>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TimingFile {
    runtime_s: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    per_target_s: Vec<f64>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::MissingFile(path.display().to_string()));
    }
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

fn report_csv(report: &FitReport) -> String {
    let mut out = String::from("target,mse,r2,complexity\n");
    for row in &report.rows {
        writeln!(
            out,
            "{},{:.12e},{:.12},{}",
            row.target, row.mse, row.r2, row.complexity
        )
        .unwrap();
    }
    out
}

/// Pipeline over one output directory.
pub struct Pipeline {
    pub cfg: RunConfig,
}

impl Pipeline {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.cfg.out_dir.join(name)
    }

    fn load_dataset(&self) -> Result<Dataset> {
        Dataset::read(&self.path(DATASET_FILE))
    }

    /// Simulate the disturbance response and write the dataset + manifest.
    pub fn simulate(&self) -> Result<Dataset> {
        std::fs::create_dir_all(&self.cfg.out_dir)?;
        let params = self.cfg.params();
        let sim = self.cfg.effective_sim();
        let ds = simulator::simulate(&sim, &params)?;
        ds.write(&self.path(DATASET_FILE))?;
        let manifest = Manifest {
            package: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: self.cfg.clone(),
            dataset_fingerprint: ds.fingerprint(),
        };
        write_json(&self.path(MANIFEST_FILE), &manifest)?;
        println!(
            "simulate: {} samples over {} s -> {}",
            ds.n_samples(),
            sim.t_end,
            self.path(DATASET_FILE).display()
        );
        Ok(ds)
    }

    /// Fit the sparse model and write model, equations, report and timing.
    pub fn identify_sindy(&self) -> Result<FitReport> {
        let ds = self.load_dataset()?;
        let fit = sindy::fit(&ds, &self.cfg.library, &self.cfg.sindy)?;
        let preds = fit.model.predict(&ds.var_matrix());
        let report = metrics::evaluate_predictions(
            &preds,
            &ds,
            Method::Sindy,
            &fit.model.active_counts(),
            fit.runtime_s,
        )?;

        write_json(
            &self.path(SINDY_MODEL_FILE),
            &SindyModelFile {
                fingerprint: ds.fingerprint(),
                model: fit.model.clone(),
            },
        )?;
        std::fs::write(
            self.path(SINDY_EQUATIONS_FILE),
            sindy::to_equations(&fit.model),
        )?;
        std::fs::write(self.path(SINDY_REPORT_FILE), report_csv(&report))?;
        write_json(
            &self.path(SINDY_TIMING_FILE),
            &TimingFile {
                runtime_s: fit.runtime_s,
                per_target_s: vec![],
            },
        )?;
        println!(
            "sindy: fitted 9 targets in {:.2} s; worst R² {:.4}",
            fit.runtime_s,
            report.rows.iter().map(|r| r.r2).fold(f64::MAX, f64::min)
        );
        Ok(report)
    }

    /// Train one expression per target and write model, report and timing.
    pub fn identify_dsr(&self) -> Result<FitReport> {
        let ds = self.load_dataset()?;
        let vars_full = ds.var_matrix();
        let ts = self.cfg.dsr.token_set(Dataset::var_names())?;
        let names = Dataset::target_names();

        let mut targets = Vec::with_capacity(names.len());
        let mut preds = DMatrix::zeros(ds.n_samples(), names.len());
        let mut per_target_s = Vec::with_capacity(names.len());
        let mut complexity = Vec::with_capacity(names.len());
        let mut total = 0.0;
        for (t, name) in names.iter().enumerate() {
            let cfg_t: DsrConfig = self.cfg.effective_dsr(name);
            let out = dsr::train_on_dataset(&ds, t, &cfg_t)?;
            let (col, bad) = out.best.expression.eval_lenient(&vars_full);
            if bad > 0 {
                println!("dsr: {name}: {bad} rows evaluated non-finite; scored as 0");
            }
            for (k, v) in col.iter().enumerate() {
                preds[(k, t)] = *v;
            }
            let r2 = metrics::r2(&col, &ds.target(t))?;
            println!(
                "dsr: {name}: reward {:.5}, R² {:.5}, {} rounds, {:.1} s",
                out.best.reward,
                r2,
                out.reward_trace.len(),
                out.runtime_s
            );
            total += out.runtime_s;
            per_target_s.push(out.runtime_s);
            complexity.push(out.best.expression.len());
            targets.push(DsrTargetModel {
                target: name.clone(),
                token_names: out.best.expression.token_names(&ts),
                constants: out.best.expression.constants.clone(),
                infix: out.best.infix,
                reward: out.best.reward,
                r2,
                rounds: out.reward_trace.len(),
            });
        }
        let report =
            metrics::evaluate_predictions(&preds, &ds, Method::Dsr, &complexity, total)?;

        write_json(
            &self.path(DSR_MODEL_FILE),
            &DsrModelFile {
                fingerprint: ds.fingerprint(),
                targets,
            },
        )?;
        std::fs::write(self.path(DSR_REPORT_FILE), report_csv(&report))?;
        write_json(
            &self.path(DSR_TIMING_FILE),
            &TimingFile {
                runtime_s: total,
                per_target_s,
            },
        )?;
        println!("dsr: trained 9 targets in {total:.1} s");
        Ok(report)
    }

    /// Rebuild both reports from the stored models, compare them, and write
    /// the comparison tables plus per-target plot data.
    pub fn report(&self) -> Result<Comparison> {
        let ds = self.load_dataset()?;
        let vars = ds.var_matrix();
        let fp = ds.fingerprint();

        let sindy_file: SindyModelFile = read_json(&self.path(SINDY_MODEL_FILE))?;
        if sindy_file.fingerprint != fp {
            return Err(Error::FingerprintMismatch {
                a: sindy_file.fingerprint,
                b: fp,
            });
        }
        let sindy_preds = sindy_file.model.predict(&vars);
        let sindy_timing: TimingFile = read_json(&self.path(SINDY_TIMING_FILE))?;
        let sindy_report = metrics::evaluate_predictions(
            &sindy_preds,
            &ds,
            Method::Sindy,
            &sindy_file.model.active_counts(),
            sindy_timing.runtime_s,
        )?;

        let dsr_file: DsrModelFile = read_json(&self.path(DSR_MODEL_FILE))?;
        if dsr_file.fingerprint != fp {
            return Err(Error::FingerprintMismatch {
                a: dsr_file.fingerprint,
                b: fp,
            });
        }
        let ts = self.cfg.dsr.token_set(Dataset::var_names())?;
        let mut dsr_preds = DMatrix::zeros(ds.n_samples(), 9);
        let mut complexity = Vec::with_capacity(9);
        for (t, target) in dsr_file.targets.iter().enumerate() {
            let expr = expression_from_names(&ts, &target.token_names, &target.constants)?;
            let (col, _) = expr.eval_lenient(&vars);
            for (k, v) in col.iter().enumerate() {
                dsr_preds[(k, t)] = *v;
            }
            complexity.push(expr.len());
        }
        let dsr_timing: TimingFile = read_json(&self.path(DSR_TIMING_FILE))?;
        let dsr_report = metrics::evaluate_predictions(
            &dsr_preds,
            &ds,
            Method::Dsr,
            &complexity,
            dsr_timing.runtime_s,
        )?;

        let comparison = metrics::compare(&[sindy_report, dsr_report])?;
        std::fs::write(self.path(REPORT_CSV_FILE), comparison.to_csv())?;
        std::fs::write(self.path(REPORT_TXT_FILE), comparison.to_text())?;
        write_json(
            &self.path(REPORT_TIMING_FILE),
            &serde_json::json!({
                "sindy_runtime_s": sindy_timing.runtime_s,
                "dsr_runtime_s": dsr_timing.runtime_s,
                "dsr_over_sindy_runtime_ratio": comparison.runtime_ratio,
                "paper_reference_ratio": "approximately 11",
            }),
        )?;

        // Plot-ready per-target series.
        let names = Dataset::target_names();
        for (t, name) in names.iter().enumerate() {
            let mut out = String::from("t,actual,sindy_pred,dsr_pred\n");
            for k in 0..ds.n_samples() {
                writeln!(
                    out,
                    "{:.16e},{:.16e},{:.16e},{:.16e}",
                    ds.time[k],
                    ds.dx[(k, t)],
                    sindy_preds[(k, t)],
                    dsr_preds[(k, t)]
                )
                .unwrap();
            }
            std::fs::write(self.path(&format!("plot_{name}.csv")), out)?;
        }

        println!("{}", comparison.to_text());
        if let Some(ratio) = comparison.runtime_ratio {
            println!(
                "runtime: dsr/sindy = {ratio:.1}x (paper reports approximately 11x; \
                 implementation-dependent, no tolerance asserted)"
            );
        }
        Ok(comparison)
    }

    /// Full experiment end to end.
    pub fn all(&self) -> Result<Comparison> {
        self.simulate()?;
        self.identify_sindy()?;
        self.identify_dsr()?;
        self.report()
    }
}

/// Rebuild an expression from stored token names and constants.
pub fn expression_from_names(
    ts: &TokenSet,
    names: &[String],
    constants: &[f64],
) -> Result<Expression> {
    let tokens = names
        .iter()
        .map(|n| {
            ts.token_by_name(n)
                .ok_or_else(|| Error::Parse {
                    line: 0,
                    detail: format!("unknown token '{n}' in stored expression"),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut expr = Expression::new(tokens);
    if expr.constants.len() != constants.len() {
        return Err(Error::Mismatch(format!(
            "expression has {} constant slots, file provides {}",
            expr.constants.len(),
            constants.len()
        )));
    }
    expr.constants = constants.to_vec();
    if !expr.is_valid() {
        return Err(Error::Parse {
            line: 0,
            detail: "stored token sequence is not a complete pre-order".into(),
        });
    }
    Ok(expr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsr::Op;

    #[test]
    fn expression_round_trips_through_names() {
        let ts = TokenSet::standard(vec!["a".into(), "b".into()]);
        let mut expr = Expression::new(vec![
            crate::dsr::Token::Op(Op::Mul),
            crate::dsr::Token::Const,
            crate::dsr::Token::Var(1),
        ]);
        expr.constants = vec![2.5];
        let names = expr.token_names(&ts);
        let back = expression_from_names(&ts, &names, &expr.constants).unwrap();
        assert_eq!(back, expr);
    }

    #[test]
    fn malformed_stored_expression_is_rejected() {
        let ts = TokenSet::standard(vec!["a".into()]);
        let err = expression_from_names(&ts, &["+".into(), "a".into()], &[]);
        assert!(err.is_err());
        let err = expression_from_names(&ts, &["nope".into()], &[]);
        assert!(err.is_err());
    }
}
