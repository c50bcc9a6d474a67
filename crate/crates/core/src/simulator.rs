//! Fixed-step simulation of the plant: equilibrium initialization, RK4
//! integration through a step-disturbance schedule, and dataset recording.

use crate::dataset::{Dataset, N_INPUTS, N_MEASURED};
use crate::error::{Error, Result};
use crate::plant::{self, Params, PlantState, ReferenceInput, N_STATES};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Which reference a disturbance steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceTarget {
    PRef,
    QRef,
    VRef,
}

/// A step change applied to one reference at a given time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceEvent {
    /// Event time, s.
    pub time: f64,
    pub target: DisturbanceTarget,
    /// New reference value, p.u.
    pub value: f64,
}

/// How the recorded derivatives are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeMode {
    /// Evaluate the exact right-hand side at each sample.
    #[default]
    Exact,
    /// Centered finite differences of the recorded (possibly noisy) states.
    FiniteDifference,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Integration step, s.
    pub dt: f64,
    /// End time, s.
    pub t_end: f64,
    /// Record every `sample_stride`-th step.
    pub sample_stride: usize,
    /// Step-change schedule, sorted by time.
    pub schedule: Vec<DisturbanceEvent>,
    /// Std of Gaussian measurement noise added to X (never U); 0 disables.
    pub noise_std: f64,
    /// Noise seed.
    pub seed: u64,
    pub derivative_mode: DerivativeMode,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-5,
            t_end: 2.0,
            sample_stride: 10,
            schedule: vec![
                DisturbanceEvent {
                    time: 0.5,
                    target: DisturbanceTarget::PRef,
                    value: 0.7,
                },
                DisturbanceEvent {
                    time: 1.0,
                    target: DisturbanceTarget::QRef,
                    value: 0.2,
                },
                DisturbanceEvent {
                    time: 1.5,
                    target: DisturbanceTarget::VRef,
                    value: 0.9,
                },
            ],
            noise_std: 0.0,
            seed: 0,
            derivative_mode: DerivativeMode::Exact,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Config("sim.dt must be > 0".into()));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(Error::Config("sim.t_end must be > 0".into()));
        }
        if self.sample_stride < 1 {
            return Err(Error::Config("sim.sample_stride must be >= 1".into()));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::Config("sim.noise_std must be >= 0".into()));
        }
        let mut prev = 0.0f64;
        for (i, ev) in self.schedule.iter().enumerate() {
            if !(ev.time.is_finite() && ev.time >= 0.0) {
                return Err(Error::Config(format!("sim.schedule[{i}].time must be >= 0")));
            }
            if !ev.value.is_finite() {
                return Err(Error::Config(format!(
                    "sim.schedule[{i}].value must be finite"
                )));
            }
            if ev.time < prev {
                return Err(Error::Config("sim.schedule must be sorted by time".into()));
            }
            if ev.time > self.t_end {
                return Err(Error::Config(format!(
                    "sim.schedule[{i}].time = {} exceeds t_end = {}",
                    ev.time, self.t_end
                )));
            }
            prev = ev.time;
        }
        Ok(())
    }
}

/// One classical RK4 update on a fixed-size array system.
pub fn rk4_generic<const N: usize>(
    f: &mut dyn FnMut(&[f64; N]) -> Result<[f64; N]>,
    y: &[f64; N],
    dt: f64,
) -> Result<[f64; N]> {
    let k1 = f(y)?;
    let mut y2 = *y;
    for i in 0..N {
        y2[i] = y[i] + 0.5 * dt * k1[i];
    }
    let k2 = f(&y2)?;
    for i in 0..N {
        y2[i] = y[i] + 0.5 * dt * k2[i];
    }
    let k3 = f(&y2)?;
    for i in 0..N {
        y2[i] = y[i] + dt * k3[i];
    }
    let k4 = f(&y2)?;
    let mut out = *y;
    for i in 0..N {
        out[i] = y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        if !out[i].is_finite() {
            return Err(Error::NonFinite {
                context: format!("RK4 update of component {i}"),
            });
        }
    }
    Ok(out)
}

/// RK4 step of the full plant with the references held constant.
pub fn rk4_step(
    state: &PlantState,
    u: &ReferenceInput,
    params: &Params,
    dt: f64,
) -> Result<PlantState> {
    let mut f = |y: &[f64; N_STATES]| -> Result<[f64; N_STATES]> {
        let s = PlantState::from_array(*y);
        Ok(plant::rhs(&s, u, &params.ctl, &params.net)?.as_array())
    };
    let next = rk4_generic(&mut f, &state.as_array(), dt)?;
    Ok(PlantState::from_array(next))
}

fn rhs_vec(state: &PlantState, u: &ReferenceInput, params: &Params) -> Result<[f64; N_STATES]> {
    Ok(plant::rhs(state, u, &params.ctl, &params.net)?.as_array())
}

fn max_abs(v: &[f64; N_STATES]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Initial guess for the Newton solve: unity PCC voltage, current matching
/// the power setpoints, capacitor current absorbed by the converter side.
fn equilibrium_guess(u0: &ReferenceInput, params: &Params) -> PlantState {
    let v = u0.v_ref.max(0.5);
    let i_filt_r = u0.p_ref / v;
    let i_filt_i = -u0.q_ref / v;
    let ws = params.net.omega_s;
    let cf = params.net.c_f;
    PlantState {
        i_cv_r: i_filt_r,
        i_cv_i: i_filt_i + ws * cf * v,
        v_filt_r: v,
        v_filt_i: 0.0,
        i_filt_r,
        i_filt_i,
        theta_oc: 0.0,
        p_m: u0.p_ref,
        q_m: u0.q_ref,
        xi_d: 0.0,
        xi_q: 0.0,
        gamma_d: 0.0,
        gamma_q: 0.0,
        phi_d: v,
        phi_q: 0.0,
    }
}

/// Damped Newton iteration on rhs = 0 with a finite-difference Jacobian.
fn newton_solve(
    start: &PlantState,
    u0: &ReferenceInput,
    params: &Params,
    tol: f64,
    max_iter: usize,
) -> Result<PlantState> {
    let mut x = start.as_array();
    let mut f = rhs_vec(&PlantState::from_array(x), u0, params)?;
    for _ in 0..max_iter {
        if max_abs(&f) < tol {
            return Ok(PlantState::from_array(x));
        }
        // Central-difference Jacobian, column by column.
        let mut jac = DMatrix::<f64>::zeros(N_STATES, N_STATES);
        for j in 0..N_STATES {
            let h = 1e-7 * (1.0 + x[j].abs());
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            let fp = rhs_vec(&PlantState::from_array(xp), u0, params)?;
            let fm = rhs_vec(&PlantState::from_array(xm), u0, params)?;
            for i in 0..N_STATES {
                jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        let rhs_vec_neg = DVector::from_iterator(N_STATES, f.iter().map(|v| -v));
        let lu = jac.lu();
        let Some(step) = lu.solve(&rhs_vec_neg) else {
            return Err(Error::NoConvergence {
                detail: "singular Jacobian in Newton iteration".into(),
            });
        };
        // Backtracking line search on the residual norm.
        let f_norm = max_abs(&f);
        let mut lambda = 1.0f64;
        let mut improved = false;
        while lambda >= 1e-4 {
            let mut xt = x;
            for i in 0..N_STATES {
                xt[i] = x[i] + lambda * step[i];
            }
            if let Ok(ft) = rhs_vec(&PlantState::from_array(xt), u0, params) {
                if max_abs(&ft) < f_norm {
                    x = xt;
                    f = ft;
                    improved = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !improved {
            break;
        }
    }
    if max_abs(&f) < tol {
        Ok(PlantState::from_array(x))
    } else {
        let mut worst: Vec<(usize, f64)> = f.iter().copied().enumerate().collect();
        worst.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()));
        let detail: Vec<String> = worst
            .iter()
            .take(3)
            .map(|(i, v)| format!("d{}/dt = {v:.3e}", plant::STATE_NAMES[*i]))
            .collect();
        Err(Error::NoConvergence {
            detail: format!("worst residual components: {}", detail.join(", ")),
        })
    }
}

/// Find the pre-disturbance equilibrium: damped Newton from an analytic
/// guess, falling back to a 2 s settling integration followed by Newton.
pub fn find_equilibrium(u0: &ReferenceInput, params: &Params) -> Result<PlantState> {
    params.validate()?;
    u0.validate()?;
    let tol = 1e-9;
    let guess = equilibrium_guess(u0, params);
    if let Ok(state) = newton_solve(&guess, u0, params, tol, 50) {
        return Ok(state);
    }
    // Fallback: let the closed loop settle, then polish with Newton.
    let mut state = guess;
    let dt = 1e-5;
    for k in 0..200_000u64 {
        state = rk4_step(&state, u0, params, dt).map_err(|e| Error::NoConvergence {
            detail: format!("settling integration diverged at t = {:.4} s: {e}", k as f64 * dt),
        })?;
    }
    newton_solve(&state, u0, params, tol, 50)
}

/// Integrate through the disturbance schedule and record the dataset.
///
/// Events take effect at the first step whose time is at or after the event
/// time; a sample falling on the event instant records the post-event
/// references. Derivatives are exact rhs evaluations unless
/// [`DerivativeMode::FiniteDifference`] is selected.
pub fn simulate(cfg: &SimConfig, params: &Params) -> Result<Dataset> {
    cfg.validate()?;
    params.validate()?;

    let u0 = params.ctl.nominal_input();
    let mut state = find_equilibrium(&u0, params)?;
    let mut u = u0;

    // Event times resolved to integer step indices up front so that the
    // "changes exactly at its event sample" contract is never subject to
    // accumulated float comparisons.
    let event_steps: Vec<(u64, DisturbanceTarget, f64)> = cfg
        .schedule
        .iter()
        .map(|ev| {
            let idx = (ev.time / cfg.dt - 1e-9).ceil().max(0.0) as u64;
            (idx, ev.target, ev.value)
        })
        .collect();

    let n_steps = (cfg.t_end / cfg.dt).round() as u64;
    let n_rows = (n_steps / cfg.sample_stride as u64) as usize + 1;

    let mut time = Vec::with_capacity(n_rows);
    let mut x = DMatrix::zeros(n_rows, N_MEASURED);
    let mut uu = DMatrix::zeros(n_rows, N_INPUTS);
    let mut dx = DMatrix::zeros(n_rows, N_MEASURED);

    let mut next_event = 0usize;
    let mut row = 0usize;
    for k in 0..=n_steps {
        while next_event < event_steps.len() && event_steps[next_event].0 == k {
            let (_, target, value) = event_steps[next_event];
            match target {
                DisturbanceTarget::PRef => u.p_ref = value,
                DisturbanceTarget::QRef => u.q_ref = value,
                DisturbanceTarget::VRef => u.v_ref = value,
            }
            next_event += 1;
        }
        if k % cfg.sample_stride as u64 == 0 && row < n_rows {
            let t = k as f64 * cfg.dt;
            let deriv = plant::rhs(&state, &u, &params.ctl, &params.net).map_err(|e| {
                Error::BlowUp {
                    t,
                    detail: e.to_string(),
                }
            })?;
            time.push(t);
            let m = state.measured();
            let dm = deriv.measured();
            for j in 0..N_MEASURED {
                x[(row, j)] = m[j];
                dx[(row, j)] = dm[j];
            }
            uu[(row, 0)] = u.p_ref;
            uu[(row, 1)] = u.q_ref;
            uu[(row, 2)] = u.v_ref;
            row += 1;
        }
        if k < n_steps {
            state = rk4_step(&state, &u, params, cfg.dt).map_err(|e| Error::BlowUp {
                t: k as f64 * cfg.dt,
                detail: e.to_string(),
            })?;
        }
    }

    if cfg.noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let normal = Normal::new(0.0, cfg.noise_std)
            .map_err(|e| Error::Config(format!("noise_std: {e}")))?;
        for k in 0..n_rows {
            for j in 0..N_MEASURED {
                x[(k, j)] += normal.sample(&mut rng);
            }
        }
    }

    if cfg.derivative_mode == DerivativeMode::FiniteDifference {
        let h = cfg.dt * cfg.sample_stride as f64;
        let mut fd = DMatrix::zeros(n_rows, N_MEASURED);
        for j in 0..N_MEASURED {
            for k in 0..n_rows {
                fd[(k, j)] = if k == 0 {
                    (x[(1, j)] - x[(0, j)]) / h
                } else if k == n_rows - 1 {
                    (x[(k, j)] - x[(k - 1, j)]) / h
                } else {
                    (x[(k + 1, j)] - x[(k - 1, j)]) / (2.0 * h)
                };
            }
        }
        dx = fd;
    }

    let ds = Dataset { time, x, u: uu, dx };
    ds.validate()?;
    Ok(ds)
}
