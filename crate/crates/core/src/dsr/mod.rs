//! Deep symbolic regression at desk scale.
//!
//! Expressions are sampled token-by-token from a recurrent policy, their
//! constants are fitted by multi-start Nelder-Mead, and the policy is
//! trained with a risk-seeking policy gradient: only the top reward
//! quantile of each batch contributes to the update, with the quantile
//! value as the baseline.

mod constopt;
pub mod expr;
pub mod policy;
pub mod token;

pub use expr::Expression;
pub use policy::{
    batch_gradient, masked_softmax, sample_expression, sequence_stats, Adam, PolicyNet,
    SampleLimits, SeqBuilder,
};
pub use token::{Op, Token, TokenSet};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::time::Instant;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DsrConfig {
    pub batch_size: usize,
    /// Policy-update iterations. Zero still evaluates one untrained batch
    /// and reports its best expression.
    pub epochs: usize,
    /// Risk quantile: only rewards at or above the (1−ε) empirical
    /// quantile drive the update.
    pub epsilon: f64,
    pub learning_rate: f64,
    pub entropy_weight: f64,
    pub max_length: usize,
    /// Recurrent state size.
    pub hidden: usize,
    /// Nelder-Mead restarts for constant fitting.
    pub const_restarts: usize,
    /// Total constant-fitting evaluation budget per expression, split
    /// across the restarts.
    pub const_max_evals: usize,
    /// Constant placeholders allowed per expression.
    pub max_consts: usize,
    /// Training-data thinning stride over the dataset rows.
    pub train_stride: usize,
    /// Stop early once the best training reward reaches this value.
    pub early_stop_reward: Option<f64>,
    pub operators: Vec<Op>,
    pub seed: u64,
}

impl Default for DsrConfig {
    fn default() -> Self {
        Self {
            batch_size: 500,
            epochs: 200,
            epsilon: 0.05,
            learning_rate: 5e-4,
            entropy_weight: 0.005,
            max_length: 32,
            hidden: 32,
            const_restarts: 3,
            const_max_evals: 200,
            max_consts: 5,
            train_stride: 10,
            early_stop_reward: Some(0.99999),
            operators: Op::ALL.to_vec(),
            seed: 0,
        }
    }
}

impl DsrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::Config("dsr.batch_size must be >= 1".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::Config("dsr.epsilon must be in (0, 1]".into()));
        }
        if self.max_length < 1 {
            return Err(Error::Config("dsr.max_length must be >= 1".into()));
        }
        if self.hidden < 1 {
            return Err(Error::Config("dsr.hidden must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("dsr.learning_rate must be > 0".into()));
        }
        if self.train_stride < 1 {
            return Err(Error::Config("dsr.train_stride must be >= 1".into()));
        }
        if self.operators.is_empty() {
            return Err(Error::Config("dsr.operators must not be empty".into()));
        }
        if let Some(r) = self.early_stop_reward {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Config("dsr.early_stop_reward must be in [0, 1]".into()));
            }
        }
        Ok(())
    }

    pub fn limits(&self) -> SampleLimits {
        SampleLimits {
            max_length: self.max_length,
            max_consts: self.max_consts,
        }
    }

    pub fn token_set(&self, var_names: Vec<String>) -> Result<TokenSet> {
        TokenSet::new(self.operators.clone(), var_names, true)
    }
}

/// Population standard deviation.
pub fn std_dev(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// Root-mean-square error normalized by the target standard deviation.
pub fn nrmse(pred: &[f64], target: &[f64], target_std: f64) -> f64 {
    let n = pred.len() as f64;
    let mse = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n;
    mse.sqrt() / target_std
}

/// Reward = 1 / (1 + NRMSE); invalid evaluations score zero.
pub fn reward(expr: &Expression, vars: &DMatrix<f64>, target: &[f64], target_std: f64) -> f64 {
    match expr.eval(vars) {
        Some(pred) => 1.0 / (1.0 + nrmse(&pred, target, target_std)),
        None => 0.0,
    }
}

/// Indices whose reward reaches the empirical (1−ε) quantile, plus the
/// quantile value R_ε itself. Ties at the threshold are retained.
pub fn risk_filter(rewards: &[f64], epsilon: f64) -> (Vec<usize>, f64) {
    assert!(!rewards.is_empty(), "risk filter on empty batch");
    let n = rewards.len();
    let mut sorted: Vec<f64> = rewards.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let k = (((1.0 - epsilon) * n as f64).floor() as usize).min(n - 1);
    let r_eps = sorted[k];
    let keep: Vec<usize> = (0..n).filter(|&i| rewards[i] >= r_eps).collect();
    (keep, r_eps)
}

/// Fit the expression's constants by multi-start Nelder-Mead (seeds 1.0,
/// −1.0, 0.1 plus an optional warm start), maximizing the reward within the
/// total evaluation budget. Expressions without constants pass through.
pub fn optimize_constants(
    expr: &Expression,
    vars: &DMatrix<f64>,
    target: &[f64],
    target_std: f64,
    restarts: usize,
    max_evals: usize,
    warm_start: Option<&[f64]>,
) -> (Expression, f64) {
    let k = expr.n_consts();
    if k == 0 {
        let r = reward(expr, vars, target, target_std);
        return (expr.clone(), r);
    }
    let mut starts: Vec<Vec<f64>> = [1.0, -1.0, 0.1]
        .iter()
        .take(restarts.max(1))
        .map(|s| vec![*s; k])
        .collect();
    if let Some(w) = warm_start {
        starts.push(w.to_vec());
    }
    let budget = (max_evals / starts.len()).max(10);

    let mut scratch = expr.clone();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for x0 in &starts {
        let mut objective = |c: &[f64]| -> f64 {
            scratch.constants.copy_from_slice(c);
            match scratch.eval(vars) {
                Some(pred) => nrmse(&pred, target, target_std),
                None => f64::INFINITY,
            }
        };
        let (x, f) = constopt::nelder_mead(&mut objective, x0, budget);
        if best.as_ref().map(|(_, bf)| f < *bf).unwrap_or(true) {
            best = Some((x, f));
        }
    }
    let (consts, f) = best.expect("at least one start");
    if f.is_finite() {
        let mut out = expr.clone();
        out.constants = consts;
        (out, 1.0 / (1.0 + f))
    } else {
        (expr.clone(), 0.0)
    }
}

/// Best expression found by a training run.
#[derive(Debug, Clone)]
pub struct BestExpression {
    pub expression: Expression,
    pub infix: String,
    pub reward: f64,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub best: BestExpression,
    /// Best-so-far training reward after each round.
    pub reward_trace: Vec<f64>,
    pub runtime_s: f64,
    /// Policy updates skipped because of a non-finite gradient.
    pub skipped_updates: usize,
}

fn fit_and_score(
    ids: &[usize],
    ts: &TokenSet,
    vars: &DMatrix<f64>,
    target: &[f64],
    target_std: f64,
    cfg: &DsrConfig,
) -> (Vec<f64>, f64) {
    let expr = Expression::new(ids.iter().map(|&id| ts.token(id)).collect());
    let (fitted, r) = optimize_constants(
        &expr,
        vars,
        target,
        target_std,
        cfg.const_restarts,
        cfg.const_max_evals,
        None,
    );
    (fitted.constants, r)
}

/// Run the sample → fit → filter → update loop against one target column.
pub fn train_matrix(
    vars: &DMatrix<f64>,
    ts: &TokenSet,
    target: &[f64],
    cfg: &DsrConfig,
) -> Result<TrainResult> {
    cfg.validate()?;
    if vars.nrows() != target.len() {
        return Err(Error::Mismatch(format!(
            "vars has {} rows, target has {}",
            vars.nrows(),
            target.len()
        )));
    }
    let target_std = std_dev(target);
    if !(target_std > 0.0) {
        return Err(Error::DegenerateData(
            "target column has zero variance".into(),
        ));
    }

    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut policy = PolicyNet::new(cfg.hidden, ts.vocab(), &mut rng);
    let mut adam = Adam::new(policy.params.len());
    let limits = cfg.limits();

    let mut memo: HashMap<Vec<usize>, (Vec<f64>, f64)> = HashMap::new();
    let mut best: Option<(Expression, f64)> = None;
    let mut trace = Vec::new();
    let mut skipped_updates = 0usize;

    let rounds = cfg.epochs.max(1);
    for _ in 0..rounds {
        let batch_ids: Vec<Vec<usize>> = (0..cfg.batch_size)
            .map(|_| {
                let e = sample_expression(&policy, ts, limits, &mut rng);
                e.tokens
                    .iter()
                    .map(|t| ts.id(*t).expect("sampled token in set"))
                    .collect()
            })
            .collect();

        // Constant fitting is the expensive part; compute each distinct new
        // structure once, in parallel, and merge deterministically.
        let mut fresh: Vec<Vec<usize>> = Vec::new();
        let mut seen: HashSet<&[usize]> = HashSet::new();
        for ids in &batch_ids {
            if !memo.contains_key(ids.as_slice()) && seen.insert(ids.as_slice()) {
                fresh.push(ids.clone());
            }
        }
        let computed: Vec<(Vec<f64>, f64)> = fresh
            .par_iter()
            .map(|ids| fit_and_score(ids, ts, vars, target, target_std, cfg))
            .collect();
        for (ids, entry) in fresh.into_iter().zip(computed) {
            memo.insert(ids, entry);
        }

        let rewards: Vec<f64> = batch_ids.iter().map(|ids| memo[ids.as_slice()].1).collect();
        for (ids, &r) in batch_ids.iter().zip(&rewards) {
            if best.as_ref().map(|(_, br)| r > *br).unwrap_or(true) {
                let mut e = Expression::new(ids.iter().map(|&id| ts.token(id)).collect());
                e.constants = memo[ids.as_slice()].0.clone();
                best = Some((e, r));
            }
        }
        let best_reward = best.as_ref().map(|(_, r)| *r).unwrap_or(0.0);
        trace.push(best_reward);

        if cfg.epochs == 0 {
            break;
        }
        if let Some(stop) = cfg.early_stop_reward {
            if best_reward >= stop {
                break;
            }
        }

        let (keep, r_eps) = risk_filter(&rewards, cfg.epsilon);
        let scale = keep.len() as f64;
        let sequences: Vec<(Vec<usize>, f64)> = keep
            .iter()
            .map(|&i| (batch_ids[i].clone(), (rewards[i] - r_eps) / scale))
            .collect();
        let grad = batch_gradient(
            &policy,
            ts,
            limits,
            &sequences,
            cfg.entropy_weight / scale,
        );
        if grad.iter().all(|g| g.is_finite()) {
            adam.ascent_step(&mut policy.params, &grad, cfg.learning_rate);
        } else {
            skipped_updates += 1;
        }
    }

    // Final polish of the winning constants with a larger budget, warm-
    // started from the training fit.
    let (mut best_expr, mut best_reward) = best.expect("at least one round ran");
    if best_expr.n_consts() > 0 {
        let warm = best_expr.constants.clone();
        let (polished, r) = optimize_constants(
            &best_expr,
            vars,
            target,
            target_std,
            cfg.const_restarts,
            cfg.const_max_evals * 10,
            Some(&warm),
        );
        if r > best_reward {
            best_expr = polished;
            best_reward = r;
        }
    }

    let infix = best_expr.infix(ts);
    Ok(TrainResult {
        best: BestExpression {
            expression: best_expr,
            infix,
            reward: best_reward,
        },
        reward_trace: trace,
        runtime_s: start.elapsed().as_secs_f64(),
        skipped_updates,
    })
}

/// Train against one dataset target, thinning rows by `cfg.train_stride`.
pub fn train_on_dataset(ds: &Dataset, target_idx: usize, cfg: &DsrConfig) -> Result<TrainResult> {
    ds.validate()?;
    if target_idx >= ds.dx.ncols() {
        return Err(Error::Mismatch(format!(
            "target index {target_idx} out of range"
        )));
    }
    let thin = ds.subsample(cfg.train_stride);
    let vars = thin.var_matrix();
    let target = thin.target(target_idx);
    let ts = cfg.token_set(Dataset::var_names())?;
    train_matrix(&vars, &ts, &target, cfg)
}
