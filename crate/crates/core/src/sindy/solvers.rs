//! Sparse regression solvers: sequential thresholded ridge least squares
//! and an iterative soft-thresholding (proximal gradient) l1 path.
//!
//! Both solvers work on the max-abs-normalized library and target, so the
//! threshold and l1 weight are scale-free; returned coefficients are always
//! unnormalized.

use super::CandidateLibrary;
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Sequential thresholded least squares settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StlsqConfig {
    /// Coefficient cutoff in normalized (centered, max-abs-scaled) units.
    pub threshold: f64,
    /// Tikhonov term added to the normalized Gram diagonal.
    pub ridge: f64,
    pub max_iter: usize,
}

impl Default for StlsqConfig {
    fn default() -> Self {
        Self {
            // The weakly-excited trajectories this solver sees put the
            // smallest physical coefficients a few times 1e-3 in normalized
            // units; numerical junk sits many decades below.
            threshold: 5e-4,
            // Keep the Tikhonov term far below the square of the smallest
            // informative singular value so it only suppresses genuine
            // rank deficiency.
            ridge: 1e-12,
            max_iter: 20,
        }
    }
}

impl StlsqConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold >= 0.0 && self.threshold.is_finite()) {
            return Err(Error::Config("stlsq.threshold must be >= 0".into()));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(Error::Config("stlsq.ridge must be >= 0".into()));
        }
        if self.max_iter < 1 {
            return Err(Error::Config("stlsq.max_iter must be >= 1".into()));
        }
        Ok(())
    }
}

/// Proximal-gradient l1 settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LassoConfig {
    /// l1 weight in normalized units.
    pub lambda: f64,
    /// Step size; `None` selects 0.9 / L from the Gram spectral norm.
    pub step: Option<f64>,
    pub max_iter: usize,
    /// Relative coefficient-change stopping criterion.
    pub tol: f64,
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            step: None,
            max_iter: 5000,
            tol: 1e-10,
        }
    }
}

impl LassoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config("lasso.lambda must be >= 0".into()));
        }
        if let Some(s) = self.step {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config("lasso.step must be > 0".into()));
            }
        }
        if self.max_iter < 1 {
            return Err(Error::Config("lasso.max_iter must be >= 1".into()));
        }
        Ok(())
    }
}

/// Regression problem in solver coordinates.
///
/// With max-abs normalization and a bias term in the library, the problem
/// is solved in deviation coordinates: every non-bias column and the target
/// are centered, then scaled to unit max-abs. Centering removes the shared
/// operating-point component that otherwise makes weakly-excited library
/// columns nearly collinear; the intercept is recovered exactly afterwards
/// from the means. Without a bias term the columns cannot absorb an
/// intercept, so only scaling is applied (and none at all when
/// normalization is disabled).
/// Expansion of a deviation-variable monomial into raw monomials:
/// Π (x_i − m_i)^{p_i} = Σ c_k · Π x_i^{k_i} with binomial coefficients.
/// The trig tag passes through unchanged.
fn expand_deviation_term(
    term: &super::Term,
    var_means: &[f64],
) -> Vec<(Vec<u8>, super::TrigTag, f64)> {
    use std::collections::BTreeMap;
    let n_vars = term.powers.len();
    let mut poly: BTreeMap<Vec<u8>, f64> = BTreeMap::new();
    poly.insert(vec![0u8; n_vars], 1.0);
    for (i, &p) in term.powers.iter().enumerate() {
        for _ in 0..p {
            let mut next: BTreeMap<Vec<u8>, f64> = BTreeMap::new();
            for (mono, c) in &poly {
                let mut up = mono.clone();
                up[i] += 1;
                *next.entry(up).or_insert(0.0) += c;
                *next.entry(mono.clone()).or_insert(0.0) += -var_means[i] * c;
            }
            poly = next;
        }
    }
    poly.into_iter()
        .map(|(powers, c)| (powers, term.trig, c))
        .collect()
}

struct PreparedColumns {
    /// Solver-coordinate columns, one per retained term: deviation-variable
    /// evaluations when `deviation` is set, raw otherwise; centered and
    /// max-abs scaled when the library is normalized.
    theta: DMatrix<f64>,
    /// Original term index per solver column.
    term_idx: Vec<usize>,
    /// Per-column scale in solver coordinates.
    scale: Vec<f64>,
    /// Solver-column means removed by centering.
    col_mean: Vec<f64>,
    /// Variable means defining the deviation coordinates.
    var_means: Vec<f64>,
    bias: Option<usize>,
    deviation: bool,
    centered: bool,
    /// Max-abs of each centered raw library column (bias → 1); used to
    /// express final raw coefficients in normalized units.
    raw_scale: Vec<f64>,
    /// Columns surviving the dependency screen.
    screened: Vec<usize>,
}

struct PreparedTarget {
    y: DVector<f64>,
    y_scale: f64,
    y_mean: f64,
}

impl PreparedColumns {
    /// `use_deviation` switches the solve basis to monomials of the
    /// mean-removed variables. Products of weakly-excited variables are
    /// near-duplicates of their cofactors in the raw basis (the variables
    /// ride on large operating-point values), which makes the true support
    /// numerically unidentifiable; the deviation basis removes that shared
    /// component while spanning exactly the same polynomial space.
    fn new(lib: &CandidateLibrary, use_deviation: bool) -> Self {
        let n = lib.n_samples();
        let m = lib.n_terms();
        let bias = lib
            .terms
            .iter()
            .position(|t| t.degree() == 0 && t.trig == super::TrigTag::None);
        let scaled = matches!(lib.normalization, super::Normalization::MaxAbs);
        // Centering/deviation requires a bias term to absorb the constants.
        let deviation = use_deviation && scaled && bias.is_some();
        let centered = scaled && bias.is_some();

        let n_vars = lib.vars.ncols();
        let var_means: Vec<f64> = if deviation {
            (0..n_vars)
                .map(|i| lib.vars.column(i).iter().sum::<f64>() / n as f64)
                .collect()
        } else {
            vec![0.0; n_vars]
        };

        // Max-abs of the centered raw columns, for normalized-unit tests on
        // the final raw coefficients.
        let mut raw_scale = vec![1.0; m];
        if scaled {
            for j in 0..m {
                let col = lib.theta.column(j);
                let mu = if centered {
                    col.iter().sum::<f64>() / n as f64
                } else {
                    0.0
                };
                let mut maxabs = 0.0f64;
                for v in col.iter() {
                    maxabs = maxabs.max((v - mu).abs());
                }
                raw_scale[j] = if Some(j) == bias { 1.0 } else { maxabs };
            }
        }

        let mut term_idx = Vec::new();
        let mut scale = Vec::new();
        let mut col_mean = Vec::new();
        let mut cols: Vec<f64> = Vec::new();
        let mut row = vec![0.0; n_vars];
        let mut dev_row = vec![0.0; n_vars];
        let mut col = vec![0.0; n];
        for j in 0..m {
            if Some(j) == bias && centered {
                continue; // absorbed by the intercept
            }
            if deviation {
                let term = &lib.terms[j];
                for k in 0..n {
                    for i in 0..n_vars {
                        row[i] = lib.vars[(k, i)];
                        dev_row[i] = row[i] - var_means[i];
                    }
                    // Trig factors stay on the raw angle; only the monomial
                    // part moves to deviation coordinates.
                    let trig = match term.trig {
                        super::TrigTag::None => 1.0,
                        super::TrigTag::Sin => row[lib.trig_var.unwrap()].sin(),
                        super::TrigTag::Cos => row[lib.trig_var.unwrap()].cos(),
                    };
                    let mut v = trig;
                    for (i, &p) in term.powers.iter().enumerate() {
                        for _ in 0..p {
                            v *= dev_row[i];
                        }
                    }
                    col[k] = v;
                }
            } else {
                for (k, v) in lib.theta.column(j).iter().enumerate() {
                    col[k] = *v;
                }
            }
            let mu = if centered {
                col.iter().sum::<f64>() / n as f64
            } else {
                0.0
            };
            let mut maxabs = 0.0f64;
            for v in &col {
                maxabs = maxabs.max((v - mu).abs());
            }
            if maxabs <= 1e-12 * (1.0 + mu.abs()) {
                // Constant column under centering: representable by the
                // intercept alone.
                continue;
            }
            let s = if scaled { maxabs } else { 1.0 };
            for v in &col {
                cols.push((v - mu) / s);
            }
            term_idx.push(j);
            scale.push(s);
            col_mean.push(mu);
        }
        let theta = DMatrix::from_vec(n, term_idx.len(), cols);
        let screened = independent_columns(&theta, 1e-6);
        Self {
            theta,
            term_idx,
            scale,
            col_mean,
            var_means,
            bias,
            deviation,
            centered,
            raw_scale,
            screened,
        }
    }

    fn prepare_target(&self, y: &[f64]) -> PreparedTarget {
        let n = y.len();
        let y_mean = if self.centered {
            y.iter().sum::<f64>() / n as f64
        } else {
            0.0
        };
        let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
        let y_scale = yc.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let y = if y_scale > 0.0 {
            DVector::from_iterator(n, yc.iter().map(|v| v / y_scale))
        } else {
            DVector::zeros(n)
        };
        PreparedTarget { y, y_scale, y_mean }
    }

    /// Map solver coefficients back to coefficients over the raw library
    /// terms. In the deviation basis this expands each fitted term through
    /// the binomial theorem; `snap_threshold` zeroes any resulting raw
    /// coefficient that falls below the solver's resolution in normalized
    /// units (expansion cancellations land there).
    fn unscale(
        &self,
        lib: &CandidateLibrary,
        target: &PreparedTarget,
        w: &DVector<f64>,
        active: &[usize],
        snap_threshold: Option<f64>,
    ) -> Vec<f64> {
        let n_terms = lib.n_terms();
        let mut xi = vec![0.0; n_terms];
        let centered = self.centered;

        // Solver-basis coefficients in raw units plus the intercept.
        let coefs: Vec<(usize, f64)> = active
            .iter()
            .enumerate()
            .map(|(i, &col)| (col, w[i] * target.y_scale / self.scale[col]))
            .collect();
        let mut intercept = if centered {
            let mut c = target.y_mean;
            for &(col, xi_t) in &coefs {
                c -= xi_t * self.col_mean[col];
            }
            c
        } else {
            0.0
        };

        if self.deviation {
            use std::collections::HashMap;
            let lookup: HashMap<(Vec<u8>, super::TrigTag), usize> = lib
                .terms
                .iter()
                .enumerate()
                .map(|(j, t)| ((t.powers.clone(), t.trig), j))
                .collect();
            for &(col, xi_t) in &coefs {
                let term = &lib.terms[self.term_idx[col]];
                for (powers, trig, factor) in expand_deviation_term(term, &self.var_means) {
                    let degree: u32 = powers.iter().map(|&p| p as u32).sum();
                    if degree == 0 && trig == super::TrigTag::None {
                        intercept += xi_t * factor;
                    } else if let Some(&j) = lookup.get(&(powers, trig)) {
                        xi[j] += xi_t * factor;
                    }
                    // Sub-monomials absent from the library can only come
                    // from identically-zero columns; they contribute nothing
                    // on the data.
                }
            }
        } else {
            for &(col, xi_t) in &coefs {
                xi[self.term_idx[col]] = xi_t;
            }
        }

        if let Some(b) = self.bias {
            if centered {
                xi[b] = intercept;
            }
        }

        if let Some(t) = snap_threshold {
            let denom = if target.y_scale > 0.0 {
                target.y_scale
            } else {
                1.0
            };
            for j in 0..n_terms {
                if xi[j] != 0.0 && xi[j].abs() * self.raw_scale[j] / denom < t {
                    xi[j] = 0.0;
                }
            }
        }
        xi
    }
}

/// Precomputed normal-equation pieces of the normalized problem
/// min ‖yN − ΘN w‖² (+ regularization).
struct GramSystem {
    gram: DMatrix<f64>,
    theta_t_y: DVector<f64>,
    y_ty: f64,
}

impl GramSystem {
    fn new(theta_n: &DMatrix<f64>, y_n: &DVector<f64>) -> Self {
        Self {
            gram: theta_n.transpose() * theta_n,
            theta_t_y: theta_n.transpose() * y_n,
            y_ty: y_n.dot(y_n),
        }
    }

    fn objective_ls(&self, w: &DVector<f64>) -> f64 {
        // ‖y − Θw‖² expanded through the Gram matrix.
        self.y_ty - 2.0 * w.dot(&self.theta_t_y) + w.dot(&(&self.gram * w))
    }
}

/// Indices of columns that are numerically independent of the earlier
/// columns along this dataset (modified Gram-Schmidt with re-orthogonal-
/// ization). Structural collinearity shows up whenever the inputs are
/// piecewise constant: products of inputs coincide pointwise with affine
/// combinations of lower-order terms, and keeping them would make the
/// recovered coefficients non-unique.
fn independent_columns(theta_n: &DMatrix<f64>, tol: f64) -> Vec<usize> {
    let n = theta_n.nrows();
    let m = theta_n.ncols();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut keep = Vec::new();
    for j in 0..m {
        let col = DVector::from_column_slice(theta_n.column(j).as_slice());
        let norm0 = col.norm();
        if norm0 == 0.0 {
            continue;
        }
        let mut r = col.clone();
        for _ in 0..2 {
            for q in &basis {
                let proj = q.dot(&r);
                r.axpy(-proj, q, 1.0);
            }
        }
        if r.norm() > tol * norm0 {
            keep.push(j);
            let rn = r.norm();
            basis.push(r / rn);
        }
        let _ = n;
    }
    keep
}

/// Thin-SVD factorization used for Tikhonov least squares on the actual
/// columns. Working on the columns rather than the Gram matrix keeps the
/// attainable accuracy at O(cond·ε) instead of O(cond²·ε), which matters
/// here: distinguishing a state column from its product with the
/// near-constant filter voltage is a sub-percent effect.
struct SvdSolver {
    u_t: DMatrix<f64>,
    v_t: DMatrix<f64>,
    sigma: DVector<f64>,
}

impl SvdSolver {
    fn factor(theta: &DMatrix<f64>, active: &[usize]) -> Result<Self> {
        let sub = theta.select_columns(active.iter());
        let svd = sub.svd(true, true);
        let u = svd
            .u
            .ok_or_else(|| Error::Solver("SVD did not produce U".into()))?;
        let v_t = svd
            .v_t
            .ok_or_else(|| Error::Solver("SVD did not produce V^T".into()))?;
        Ok(Self {
            u_t: u.transpose(),
            v_t,
            sigma: svd.singular_values,
        })
    }

    fn solve(&self, y: &DVector<f64>, ridge: f64) -> DVector<f64> {
        let uty = &self.u_t * y;
        let mut z = DVector::zeros(self.sigma.len());
        for i in 0..z.len() {
            let s = self.sigma[i];
            let denom = s * s + ridge;
            z[i] = if denom > 0.0 { s * uty[i] / denom } else { 0.0 };
        }
        self.v_t.transpose() * z
    }
}

/// Sequential thresholded ridge least squares on every supplied target.
/// Targets share the library preparation and the expensive first-iteration
/// factorization of the full screened column set.
pub fn stlsq_multi(
    lib: &CandidateLibrary,
    targets: &[Vec<f64>],
    cfg: &StlsqConfig,
) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    for y in targets {
        if y.len() != lib.n_samples() {
            return Err(Error::Mismatch(format!(
                "target has {} rows, library has {}",
                y.len(),
                lib.n_samples()
            )));
        }
    }
    let prep = PreparedColumns::new(lib, true);
    let mut full_svd: Option<SvdSolver> = None;
    let mut out = Vec::with_capacity(targets.len());
    for y in targets {
        let target = prep.prepare_target(y);
        if target.y_scale == 0.0 {
            // Constant target: nothing to regress beyond the intercept.
            out.push(prep.unscale(lib, &target, &DVector::zeros(0), &[], Some(cfg.threshold)));
            continue;
        }
        let mut active = prep.screened.clone();
        let mut w = DVector::zeros(0);
        for _ in 0..cfg.max_iter {
            if active.is_empty() {
                break;
            }
            w = if active == prep.screened {
                // The screened set is target-independent, so its
                // factorization is shared across targets.
                if full_svd.is_none() {
                    full_svd = Some(SvdSolver::factor(&prep.theta, &active)?);
                }
                full_svd.as_ref().unwrap().solve(&target.y, cfg.ridge)
            } else {
                SvdSolver::factor(&prep.theta, &active)?.solve(&target.y, cfg.ridge)
            };
            let next: Vec<usize> = active
                .iter()
                .zip(w.iter())
                .filter(|(_, c)| c.abs() >= cfg.threshold)
                .map(|(&j, _)| j)
                .collect();
            if next == active {
                break;
            }
            active = next;
        }
        if active.is_empty() {
            w = DVector::zeros(0);
        }
        out.push(prep.unscale(lib, &target, &w, &active, Some(cfg.threshold)));
    }
    Ok(out)
}

/// Sequential thresholded ridge least squares on one target column.
pub fn stlsq(lib: &CandidateLibrary, y: &[f64], cfg: &StlsqConfig) -> Result<Vec<f64>> {
    Ok(stlsq_multi(lib, std::slice::from_ref(&y.to_vec()), cfg)?
        .pop()
        .expect("one target in, one result out"))
}

/// Iterative soft thresholding for min ‖yN − ΘN w‖² + λ‖w‖₁.
/// The intercept (when the library carries a bias term) is unpenalized and
/// recovered from the means.
pub fn lasso(lib: &CandidateLibrary, y: &[f64], cfg: &LassoConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if y.len() != lib.n_samples() {
        return Err(Error::Mismatch(format!(
            "target has {} rows, library has {}",
            y.len(),
            lib.n_samples()
        )));
    }
    let prep = PreparedColumns::new(lib, false);
    let target = prep.prepare_target(y);
    if target.y_scale == 0.0 {
        let xi = prep.unscale(lib, &target, &DVector::zeros(0), &[], None);
        return Ok(xi);
    }
    let theta_n = &prep.theta;
    let y_n = &target.y;
    let m = theta_n.ncols();
    let sys = GramSystem::new(theta_n, y_n);

    // Lipschitz constant of the gradient is 2·λmax(Gram); power iteration
    // with a deterministic start is plenty here.
    let step = match cfg.step {
        Some(s) => s,
        None => {
            let mut v = DVector::from_element(m, 1.0 / (m as f64).sqrt());
            let mut lam = 1.0f64;
            for _ in 0..50 {
                let w = &sys.gram * &v;
                lam = w.norm();
                if lam == 0.0 {
                    break;
                }
                v = w / lam;
            }
            if lam > 0.0 {
                0.9 / (2.0 * lam)
            } else {
                1.0
            }
        }
    };

    let soft = |v: f64, t: f64| {
        if v > t {
            v - t
        } else if v < -t {
            v + t
        } else {
            0.0
        }
    };

    let mut w = DVector::zeros(m);
    let mut prev_obj = sys.objective_ls(&w) + cfg.lambda * w.abs().sum();
    let mut rises = 0usize;
    for _ in 0..cfg.max_iter {
        let grad = 2.0 * (&sys.gram * &w - &sys.theta_t_y);
        let mut w_next = DVector::zeros(m);
        for j in 0..m {
            w_next[j] = soft(w[j] - step * grad[j], step * cfg.lambda);
        }
        let obj = sys.objective_ls(&w_next) + cfg.lambda * w_next.abs().sum();
        if obj > prev_obj + 1e-12 {
            rises += 1;
            if rises >= 10 {
                return Err(Error::Solver(
                    "lasso objective increased for 10 consecutive iterations; reduce step".into(),
                ));
            }
        } else {
            rises = 0;
        }
        let change = (&w_next - &w).norm();
        let scale = w.norm().max(1e-30);
        w = w_next;
        prev_obj = obj;
        if change / scale < cfg.tol {
            break;
        }
    }

    let active: Vec<usize> = (0..m).collect();
    Ok(prep.unscale(lib, &target, &w, &active, None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sindy::{LibrarySpec, Normalization};
    use nalgebra::DMatrix;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// Two-variable random data with a library of [a, b, ab] (no bias).
    fn toy_library(n: usize, seed: u64) -> (CandidateLibrary, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vars = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-2.0..2.0));
        let spec = LibrarySpec {
            poly_degree: 2,
            include_trig: false,
            include_bias: false,
            normalization: Normalization::MaxAbs,
        };
        let names = vec!["a".to_string(), "b".to_string()];
        let lib = CandidateLibrary::build(&vars, &names, None, &spec).unwrap();
        (lib, vars)
    }

    /// Plain least squares oracle (full library, no sparsity) for checking
    /// solver output on noiseless exactly-representable targets.
    fn lstsq_oracle(lib: &CandidateLibrary, y: &[f64]) -> Vec<f64> {
        let theta = &lib.theta;
        let yv = nalgebra::DVector::from_column_slice(y);
        let svd = theta.clone().svd(true, true);
        let sol = svd.solve(&yv, 1e-12).unwrap();
        sol.iter().copied().collect()
    }

    #[test]
    fn stlsq_recovers_sparse_linear_combination() {
        let (lib, vars) = toy_library(400, 1);
        // ẏ = −2a + 0.5b over library [a, b, a², ab, b²]
        let y: Vec<f64> = (0..400)
            .map(|k| -2.0 * vars[(k, 0)] + 0.5 * vars[(k, 1)])
            .collect();
        let oracle = lstsq_oracle(&lib, &y);
        let xi = stlsq(&lib, &y, &StlsqConfig::default()).unwrap();
        // term order: a, b, a^2, ab, b^2
        assert!((xi[0] - -2.0).abs() < 1e-8, "xi = {xi:?}");
        assert!((xi[1] - 0.5).abs() < 1e-8);
        for j in 2..lib.n_terms() {
            assert_eq!(xi[j], 0.0);
        }
        assert!((oracle[0] - -2.0).abs() < 1e-8 && (oracle[1] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn stlsq_zero_target_gives_zero_model() {
        let (lib, _) = toy_library(100, 2);
        let xi = stlsq(&lib, &vec![0.0; 100], &StlsqConfig::default()).unwrap();
        assert!(xi.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stlsq_huge_threshold_empties_model() {
        let (lib, vars) = toy_library(200, 3);
        let y: Vec<f64> = (0..200).map(|k| 0.3 * vars[(k, 0)]).collect();
        let cfg = StlsqConfig {
            threshold: 10.0,
            ..Default::default()
        };
        let xi = stlsq(&lib, &y, &cfg).unwrap();
        assert!(xi.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stlsq_support_shrinks_with_threshold() {
        let (lib, vars) = toy_library(300, 4);
        let y: Vec<f64> = (0..300)
            .map(|k| 1.0 * vars[(k, 0)] + 0.2 * vars[(k, 1)] + 0.05 * vars[(k, 0)] * vars[(k, 1)])
            .collect();
        let mut last = usize::MAX;
        for threshold in [0.0, 0.01, 0.1, 0.3, 1.0] {
            let cfg = StlsqConfig {
                threshold,
                ..Default::default()
            };
            let xi = stlsq(&lib, &y, &cfg).unwrap();
            let count = xi.iter().filter(|v| **v != 0.0).count();
            assert!(count <= last, "support grew at threshold {threshold}");
            last = count;
        }
    }

    #[test]
    fn lasso_matches_least_squares_at_zero_lambda() {
        let (lib, vars) = toy_library(250, 5);
        let y: Vec<f64> = (0..250)
            .map(|k| -2.0 * vars[(k, 0)] + 0.5 * vars[(k, 1)])
            .collect();
        let cfg = LassoConfig {
            lambda: 0.0,
            max_iter: 20000,
            tol: 1e-14,
            ..Default::default()
        };
        let xi = lasso(&lib, &y, &cfg).unwrap();
        let xi_ref = stlsq(
            &lib,
            &y,
            &StlsqConfig {
                threshold: 0.0,
                ridge: 1e-12,
                max_iter: 1,
            },
        )
        .unwrap();
        for j in 0..lib.n_terms() {
            assert!(
                (xi[j] - xi_ref[j]).abs() < 1e-6,
                "term {j}: {} vs {}",
                xi[j],
                xi_ref[j]
            );
        }
    }

    #[test]
    fn lasso_large_lambda_kills_everything() {
        let (lib, vars) = toy_library(150, 6);
        let y: Vec<f64> = (0..150).map(|k| vars[(k, 0)]).collect();
        let cfg = LassoConfig {
            lambda: 1e6,
            ..Default::default()
        };
        let xi = lasso(&lib, &y, &cfg).unwrap();
        assert!(xi.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lasso_objective_never_increases() {
        // Indirect check: a valid auto step must not trip the divergence
        // guard even with many iterations.
        let (lib, vars) = toy_library(200, 7);
        let y: Vec<f64> = (0..200)
            .map(|k| 0.7 * vars[(k, 1)] - 0.1 * vars[(k, 0)] * vars[(k, 1)])
            .collect();
        let cfg = LassoConfig {
            lambda: 0.05,
            max_iter: 5000,
            ..Default::default()
        };
        assert!(lasso(&lib, &y, &cfg).is_ok());
    }

    #[test]
    fn lasso_oversized_step_reports_divergence() {
        let (lib, vars) = toy_library(200, 8);
        let y: Vec<f64> = (0..200).map(|k| vars[(k, 0)]).collect();
        let cfg = LassoConfig {
            lambda: 0.01,
            step: Some(1e3),
            max_iter: 200,
            ..Default::default()
        };
        let err = lasso(&lib, &y, &cfg);
        assert!(err.is_err());
    }

    #[test]
    fn independent_columns_drops_duplicates() {
        let a = DMatrix::from_fn(50, 3, |i, j| match j {
            0 => (i as f64).sin(),
            1 => (i as f64).cos(),
            _ => 2.0 * (i as f64).sin(),
        });
        let keep = independent_columns(&a, 1e-7);
        assert_eq!(keep, vec![0, 1]);
    }
}
