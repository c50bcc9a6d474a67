//! Sparse identification of the measured-state dynamics.
//!
//! A candidate function library is evaluated over the dataset variables
//! (9 measured states and 3 reference inputs) and each recorded derivative
//! is regressed on it with a sparsity-promoting solver. The result is an
//! explicit equation per state derivative.

mod solvers;

pub use solvers::{lasso, stlsq, stlsq_multi, LassoConfig, StlsqConfig};

use crate::dataset::{Dataset, THETA_OC_COL};
use crate::error::{Error, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::time::Instant;

/// Column normalization applied before regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    None,
    #[default]
    MaxAbs,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LibrarySpec {
    /// Maximum total degree of the monomial terms (1..=3).
    pub poly_degree: u8,
    /// Append sin/cos of the angle variable and their products with the
    /// degree-1 terms.
    pub include_trig: bool,
    pub include_bias: bool,
    pub normalization: Normalization,
}

impl Default for LibrarySpec {
    fn default() -> Self {
        Self {
            poly_degree: 2,
            include_trig: false,
            include_bias: true,
            normalization: Normalization::MaxAbs,
        }
    }
}

impl LibrarySpec {
    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.poly_degree) {
            return Err(Error::Config("library.poly_degree must be in [1, 3]".into()));
        }
        Ok(())
    }
}

/// Trigonometric tag on a library term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrigTag {
    #[default]
    None,
    Sin,
    Cos,
}

/// One candidate function: a monomial exponent vector over the variables,
/// optionally multiplied by sin/cos of the designated angle variable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Term {
    pub powers: Vec<u8>,
    pub trig: TrigTag,
}

impl Term {
    pub fn bias(n_vars: usize) -> Self {
        Self {
            powers: vec![0; n_vars],
            trig: TrigTag::None,
        }
    }

    pub fn degree(&self) -> u32 {
        self.powers.iter().map(|&p| p as u32).sum()
    }

    /// Evaluate on one row of variables; `trig_var` is the angle column.
    pub fn eval_row(&self, row: &[f64], trig_var: Option<usize>) -> f64 {
        let mut v = 1.0;
        for (j, &p) in self.powers.iter().enumerate() {
            for _ in 0..p {
                v *= row[j];
            }
        }
        match self.trig {
            TrigTag::None => v,
            TrigTag::Sin => v * row[trig_var.expect("trig term without angle variable")].sin(),
            TrigTag::Cos => v * row[trig_var.expect("trig term without angle variable")].cos(),
        }
    }

    /// Human-readable rendering, e.g. `v_filt_r*i_filt_r` or `sin(theta_oc)*p_m`.
    pub fn name(&self, var_names: &[String], trig_var: Option<usize>) -> String {
        let mut parts: Vec<String> = Vec::new();
        if let TrigTag::Sin = self.trig {
            parts.push(format!("sin({})", var_names[trig_var.unwrap()]));
        }
        if let TrigTag::Cos = self.trig {
            parts.push(format!("cos({})", var_names[trig_var.unwrap()]));
        }
        for (j, &p) in self.powers.iter().enumerate() {
            match p {
                0 => {}
                1 => parts.push(var_names[j].clone()),
                _ => parts.push(format!("{}^{p}", var_names[j])),
            }
        }
        if parts.is_empty() {
            "1".to_string()
        } else {
            parts.join("*")
        }
    }
}

/// Evaluated candidate library over a dataset.
#[derive(Debug, Clone)]
pub struct CandidateLibrary {
    pub terms: Vec<Term>,
    /// Raw (unnormalized) term evaluations, samples × terms.
    pub theta: DMatrix<f64>,
    /// Per-column max-abs scale (all 1.0 when normalization is `None`).
    pub scales: Vec<f64>,
    /// Terms removed because they evaluate to identically zero.
    pub dropped: Vec<Term>,
    pub var_names: Vec<String>,
    pub trig_var: Option<usize>,
    pub normalization: Normalization,
    /// The variable matrix the columns were evaluated on; solvers use it to
    /// re-evaluate terms in deviation coordinates.
    pub vars: DMatrix<f64>,
}

/// Monomial exponent vectors of exactly `degree` over `n_vars` variables in
/// lexicographic order of the index multiset.
fn monomials_of_degree(n_vars: usize, degree: u8) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    let mut stack = vec![0u8; n_vars];
    fn rec(out: &mut Vec<Vec<u8>>, stack: &mut Vec<u8>, start: usize, left: u8, n_vars: usize) {
        if left == 0 {
            out.push(stack.clone());
            return;
        }
        for j in start..n_vars {
            stack[j] += 1;
            rec(out, stack, j, left - 1, n_vars);
            stack[j] -= 1;
        }
    }
    rec(&mut out, &mut stack, 0, degree, n_vars);
    out
}

impl CandidateLibrary {
    /// Build the library over an arbitrary variable matrix. Terms appear in
    /// graded lexicographic order: bias, then degree 1, 2, …; trig terms
    /// (sin, cos, then their degree-1 products) come after the monomials.
    pub fn build(
        vars: &DMatrix<f64>,
        var_names: &[String],
        trig_var: Option<usize>,
        spec: &LibrarySpec,
    ) -> Result<Self> {
        spec.validate()?;
        let n = vars.nrows();
        let n_vars = vars.ncols();
        if n == 0 {
            return Err(Error::DegenerateData("empty dataset".into()));
        }
        if var_names.len() != n_vars {
            return Err(Error::Mismatch("variable name count".into()));
        }
        if spec.include_trig && trig_var.is_none() {
            return Err(Error::Config(
                "include_trig requires an angle variable".into(),
            ));
        }

        let mut terms = Vec::new();
        if spec.include_bias {
            terms.push(Term::bias(n_vars));
        }
        for d in 1..=spec.poly_degree {
            for powers in monomials_of_degree(n_vars, d) {
                terms.push(Term {
                    powers,
                    trig: TrigTag::None,
                });
            }
        }
        if spec.include_trig {
            for trig in [TrigTag::Sin, TrigTag::Cos] {
                terms.push(Term {
                    powers: vec![0; n_vars],
                    trig,
                });
            }
            for trig in [TrigTag::Sin, TrigTag::Cos] {
                for powers in monomials_of_degree(n_vars, 1) {
                    terms.push(Term { powers, trig });
                }
            }
        }

        // Evaluate columns, dropping identically-zero ones.
        let mut kept = Vec::new();
        let mut dropped = Vec::new();
        let mut cols: Vec<f64> = Vec::new();
        let mut row = vec![0.0; n_vars];
        let mut col = vec![0.0; n];
        for term in terms {
            let mut all_zero = true;
            for k in 0..n {
                for j in 0..n_vars {
                    row[j] = vars[(k, j)];
                }
                let v = term.eval_row(&row, trig_var);
                col[k] = v;
                if v != 0.0 {
                    all_zero = false;
                }
            }
            if all_zero {
                dropped.push(term);
            } else {
                kept.push(term);
                cols.extend_from_slice(&col);
            }
        }
        if kept.is_empty() {
            return Err(Error::DegenerateData(
                "every candidate column is identically zero".into(),
            ));
        }

        let theta = DMatrix::from_vec(n, kept.len(), cols);
        let scales = match spec.normalization {
            Normalization::None => vec![1.0; kept.len()],
            Normalization::MaxAbs => (0..kept.len())
                .map(|j| theta.column(j).iter().fold(0.0f64, |m, v| m.max(v.abs())))
                .collect(),
        };
        Ok(Self {
            terms: kept,
            theta,
            scales,
            dropped,
            var_names: var_names.to_vec(),
            trig_var,
            normalization: spec.normalization,
            vars: vars.clone(),
        })
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn n_samples(&self) -> usize {
        self.theta.nrows()
    }

    pub fn term_names(&self) -> Vec<String> {
        self.terms
            .iter()
            .map(|t| t.name(&self.var_names, self.trig_var))
            .collect()
    }
}

/// Build the standard library over a dataset's 12 regression variables.
pub fn build_library(ds: &Dataset, spec: &LibrarySpec) -> Result<CandidateLibrary> {
    ds.validate()?;
    CandidateLibrary::build(
        &ds.var_matrix(),
        &Dataset::var_names(),
        Some(THETA_OC_COL),
        spec,
    )
}

/// Solver selection for [`fit`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SolverKind {
    Stlsq(StlsqConfig),
    Lasso(LassoConfig),
}

impl Default for SolverKind {
    fn default() -> Self {
        SolverKind::Stlsq(StlsqConfig::default())
    }
}

/// Identified sparse model: one coefficient column per target derivative.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SparseModel {
    pub terms: Vec<Term>,
    pub var_names: Vec<String>,
    pub target_names: Vec<String>,
    pub trig_var: Option<usize>,
    /// Unnormalized coefficients, n_terms × n_targets.
    pub xi: DMatrix<f64>,
    pub library: LibrarySpec,
    pub solver: SolverKind,
}

impl SparseModel {
    /// Nonzero coefficients per target.
    pub fn active_counts(&self) -> Vec<usize> {
        (0..self.xi.ncols())
            .map(|t| self.xi.column(t).iter().filter(|v| **v != 0.0).count())
            .collect()
    }

    /// Derivative predictions over a variable matrix, samples × targets.
    /// Uses exactly the stored terms and raw (unnormalized) evaluations.
    pub fn predict(&self, vars: &DMatrix<f64>) -> DMatrix<f64> {
        let n = vars.nrows();
        let n_vars = vars.ncols();
        let mut out = DMatrix::zeros(n, self.xi.ncols());
        let mut row = vec![0.0; n_vars];
        for k in 0..n {
            for j in 0..n_vars {
                row[j] = vars[(k, j)];
            }
            for (ti, term) in self.terms.iter().enumerate() {
                let v = term.eval_row(&row, self.trig_var);
                for t in 0..self.xi.ncols() {
                    out[(k, t)] += v * self.xi[(ti, t)];
                }
            }
        }
        out
    }

    pub fn index_of(&self, term: &Term) -> Option<usize> {
        self.terms.iter().position(|t| t == term)
    }
}

/// Fit result with the training wall-clock time.
#[derive(Debug, Clone)]
pub struct SindyFit {
    pub model: SparseModel,
    pub runtime_s: f64,
}

/// Fit all 9 target derivatives with the chosen solver.
pub fn fit(ds: &Dataset, spec: &LibrarySpec, solver: &SolverKind) -> Result<SindyFit> {
    ds.validate()?;
    // Regression on an unexcited (constant) trajectory is ill-posed.
    let excited = (0..ds.x.ncols()).any(|j| {
        let col = ds.x.column(j);
        let (mut lo, mut hi) = (f64::MAX, f64::MIN);
        for v in col.iter() {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
        hi - lo > 1e-9 * (1.0 + hi.abs())
    });
    if !excited {
        return Err(Error::DegenerateData(
            "no excitation: every measured state is constant over the record".into(),
        ));
    }

    let start = Instant::now();
    let lib = build_library(ds, spec)?;
    let n_targets = ds.dx.ncols();
    let targets: Vec<Vec<f64>> = (0..n_targets).map(|t| ds.target(t)).collect();
    let all_coefs: Vec<Vec<f64>> = match solver {
        SolverKind::Stlsq(cfg) => stlsq_multi(&lib, &targets, cfg)?,
        SolverKind::Lasso(cfg) => targets
            .iter()
            .map(|y| lasso(&lib, y, cfg))
            .collect::<Result<_>>()?,
    };
    let mut xi = DMatrix::zeros(lib.n_terms(), n_targets);
    for (t, coefs) in all_coefs.iter().enumerate() {
        for (j, c) in coefs.iter().enumerate() {
            xi[(j, t)] = *c;
        }
    }
    let runtime_s = start.elapsed().as_secs_f64();
    Ok(SindyFit {
        model: SparseModel {
            terms: lib.terms.clone(),
            var_names: lib.var_names.clone(),
            target_names: Dataset::target_names(),
            trig_var: lib.trig_var,
            xi,
            library: spec.clone(),
            solver: solver.clone(),
        },
        runtime_s,
    })
}

/// Render the model as one equation line per target; zero terms omitted,
/// coefficients printed with six decimal places.
pub fn to_equations(model: &SparseModel) -> String {
    let names = model
        .terms
        .iter()
        .map(|t| t.name(&model.var_names, model.trig_var))
        .collect::<Vec<_>>();
    let mut out = String::new();
    for t in 0..model.xi.ncols() {
        write!(out, "d/dt {} = ", model.target_names[t]).unwrap();
        let mut first = true;
        for (j, name) in names.iter().enumerate() {
            let c = model.xi[(j, t)];
            if c == 0.0 {
                continue;
            }
            if first {
                write!(out, "{c:.6}").unwrap();
                first = false;
            } else if c >= 0.0 {
                write!(out, " + {c:.6}").unwrap();
            } else {
                write!(out, " - {:.6}", -c).unwrap();
            }
            if name != "1" {
                write!(out, "*{name}").unwrap();
            }
        }
        if first {
            out.push('0');
        }
        out.push('\n');
    }
    out
}
