//! Converter–infinite-bus plant under grid-forming control.
//!
//! The plant is an averaged voltage-source converter behind an LCL filter,
//! tied to an infinite bus through a series line. Grid-forming control
//! consists of active/reactive droop (outer loop) and cascaded voltage and
//! current PI regulators with virtual impedance and active damping (inner
//! loop). Everything is expressed in per-unit on the converter base; the
//! time scaling of the electrical states carries the base frequency
//! `omega_b`.
//!
//! The 15 dynamic states and their ordering are fixed by [`PlantState`];
//! that ordering is the column contract for every dataset this crate
//! produces.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Number of dynamic states.
pub const N_STATES: usize = 15;

/// Rectangular phasor in per-unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phasor {
    pub re: f64,
    pub im: f64,
}

impl Phasor {
    pub fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    pub fn from_polar(mag: f64, angle: f64) -> Self {
        Self {
            re: mag * angle.cos(),
            im: mag * angle.sin(),
        }
    }

    pub fn magnitude(&self) -> f64 {
        self.re.hypot(self.im)
    }

    /// Angle in (−π, π].
    pub fn angle(&self) -> f64 {
        let a = self.im.atan2(self.re);
        // atan2 returns −π for (−x, −0.0); fold onto the (−π, π] branch.
        if a <= -std::f64::consts::PI {
            a + 2.0 * std::f64::consts::PI
        } else {
            a
        }
    }

    pub fn is_finite(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

/// Network-side parameters: series line, LCL filter branches, infinite bus,
/// and the frequency bases.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkParams {
    /// Line resistance, p.u.
    pub r_line: f64,
    /// Line reactance, p.u.
    pub x_line: f64,
    /// Grid-side filter resistance, p.u.
    pub r_g: f64,
    /// Grid-side filter inductance, p.u.
    pub l_g: f64,
    /// Converter-side filter resistance, p.u.
    pub r_f: f64,
    /// Converter-side filter inductance, p.u.
    pub l_f: f64,
    /// Filter capacitance, p.u.
    pub c_f: f64,
    /// Infinite-bus voltage magnitude, p.u.
    pub v2_mag: f64,
    /// Infinite-bus angle, rad.
    pub theta2: f64,
    /// Base angular frequency, rad/s.
    pub omega_b: f64,
    /// Synchronous speed, p.u.
    pub omega_s: f64,
}

impl Default for NetworkParams {
    fn default() -> Self {
        Self {
            r_line: 0.0,
            x_line: 0.0020625,
            r_g: 0.003,
            l_g: 0.002,
            r_f: 0.016,
            l_f: 0.009,
            c_f: 2.5,
            v2_mag: 1.0,
            theta2: 0.0,
            omega_b: 2.0 * std::f64::consts::PI * 60.0,
            omega_s: 1.0,
        }
    }
}

impl NetworkParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("r_line", self.r_line),
            ("x_line", self.x_line),
            ("r_g", self.r_g),
            ("l_g", self.l_g),
            ("r_f", self.r_f),
            ("l_f", self.l_f),
            ("c_f", self.c_f),
            ("v2_mag", self.v2_mag),
            ("theta2", self.theta2),
            ("omega_b", self.omega_b),
            ("omega_s", self.omega_s),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::Config(format!("network.{name} must be finite")));
            }
        }
        if self.l_f <= 0.0 || self.l_g <= 0.0 || self.c_f <= 0.0 || self.omega_b <= 0.0 {
            return Err(Error::Config(
                "network: l_f, l_g, c_f and omega_b must be > 0".into(),
            ));
        }
        if self.r_line < 0.0 || self.r_f < 0.0 || self.r_g < 0.0 {
            return Err(Error::Config("network: resistances must be >= 0".into()));
        }
        Ok(())
    }

    /// Series-line admittance (G11, B11) = 1/(R + jX).
    pub fn line_admittance(&self) -> (f64, f64) {
        let d = self.r_line * self.r_line + self.x_line * self.x_line;
        (self.r_line / d, -self.x_line / d)
    }

    /// Grid-side filter branch admittance (Gff, Bff) = 1/(r_g + jω_s·l_g).
    pub fn filter_branch_admittance(&self) -> (f64, f64) {
        let x = self.omega_s * self.l_g;
        let d = self.r_g * self.r_g + x * x;
        (self.r_g / d, -x / d)
    }
}

/// Grid-forming control parameters: droop gains, measurement filters, and
/// the cascaded voltage/current loop gains.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlParams {
    /// Frequency reference, p.u.
    pub omega_ref: f64,
    /// Active-power droop gain, p.u.
    pub k_p: f64,
    /// Reactive-power droop gain, p.u.
    pub k_q: f64,
    /// Active-power measurement filter cutoff, rad/s.
    pub omega_z: f64,
    /// Reactive-power measurement filter cutoff, rad/s.
    pub omega_f: f64,
    /// Voltage-loop proportional gain.
    pub k_p_v: f64,
    /// Voltage-loop integral gain.
    pub k_i_v: f64,
    /// Grid-current feed-forward gain in the voltage loop.
    pub k_ffi: f64,
    /// Current-loop proportional gain.
    pub k_p_c: f64,
    /// Current-loop integral gain.
    pub k_i_c: f64,
    /// Filter-voltage feed-forward gain in the current loop.
    pub k_ffv: f64,
    /// Active-damping gain.
    pub k_ad: f64,
    /// Active-damping filter cutoff, rad/s.
    pub omega_ad: f64,
    /// Virtual resistance, p.u.
    pub r_v: f64,
    /// Virtual inductance, p.u.
    pub l_v: f64,
    /// Pre-disturbance voltage setpoint, p.u.
    pub v_ref_nominal: f64,
    /// Pre-disturbance active-power setpoint, p.u.
    pub p_ref_nominal: f64,
    /// Pre-disturbance reactive-power setpoint, p.u.
    pub q_ref_nominal: f64,
}

impl Default for ControlParams {
    fn default() -> Self {
        let omega_b = 2.0 * std::f64::consts::PI * 60.0;
        Self {
            omega_ref: 1.0,
            k_p: 0.02,
            k_q: 0.05,
            omega_z: 2.0 * std::f64::consts::PI * 5.0,
            omega_f: 2.0 * std::f64::consts::PI * 5.0,
            k_p_v: 0.52,
            // The integrator states are plain integrals of per-unit errors,
            // so the conventional normalized integral gains are scaled by
            // ω_b to act at the intended loop bandwidth.
            k_i_v: 1.74 * omega_b,
            k_ffi: 0.0,
            k_p_c: 0.74,
            k_i_c: 1.19 * omega_b,
            k_ffv: 1.0,
            k_ad: 0.2,
            omega_ad: 50.0,
            // Virtual resistance damps the droop swing mode; the slowest
            // closed-loop eigenvalue sits near −15 1/s across the operating
            // envelope with these values.
            r_v: 0.03,
            l_v: 0.2,
            v_ref_nominal: 1.0,
            p_ref_nominal: 0.5,
            q_ref_nominal: 0.0,
        }
    }
}

impl ControlParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("omega_ref", self.omega_ref),
            ("k_p", self.k_p),
            ("k_q", self.k_q),
            ("omega_z", self.omega_z),
            ("omega_f", self.omega_f),
            ("k_p_v", self.k_p_v),
            ("k_i_v", self.k_i_v),
            ("k_ffi", self.k_ffi),
            ("k_p_c", self.k_p_c),
            ("k_i_c", self.k_i_c),
            ("k_ffv", self.k_ffv),
            ("k_ad", self.k_ad),
            ("omega_ad", self.omega_ad),
            ("r_v", self.r_v),
            ("l_v", self.l_v),
            ("v_ref_nominal", self.v_ref_nominal),
            ("p_ref_nominal", self.p_ref_nominal),
            ("q_ref_nominal", self.q_ref_nominal),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::Config(format!("control.{name} must be finite")));
            }
        }
        if self.omega_z <= 0.0 || self.omega_f <= 0.0 || self.omega_ad <= 0.0 {
            return Err(Error::Config(
                "control: omega_z, omega_f, omega_ad must be > 0".into(),
            ));
        }
        // Zero integral gain would leave the loop references untracked at
        // steady state.
        if self.k_i_v <= 0.0 || self.k_i_c <= 0.0 {
            return Err(Error::Config("control: k_i_v and k_i_c must be > 0".into()));
        }
        Ok(())
    }

    /// Pre-disturbance reference triple.
    pub fn nominal_input(&self) -> ReferenceInput {
        ReferenceInput {
            p_ref: self.p_ref_nominal,
            q_ref: self.q_ref_nominal,
            v_ref: self.v_ref_nominal,
        }
    }
}

/// Full parameter bundle for the plant.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Params {
    pub net: NetworkParams,
    pub ctl: ControlParams,
}

impl Params {
    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        self.ctl.validate()
    }
}

/// Reference inputs (the exogenous signals stepped by the disturbance
/// schedule).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceInput {
    pub p_ref: f64,
    pub q_ref: f64,
    pub v_ref: f64,
}

impl ReferenceInput {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("p_ref", self.p_ref),
            ("q_ref", self.q_ref),
            ("v_ref", self.v_ref),
        ] {
            if !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite")));
            }
            if v.abs() > 2.0 {
                return Err(Error::Config(format!(
                    "{name} = {v} exceeds the 2 p.u. sanity bound"
                )));
            }
        }
        Ok(())
    }
}

/// The 15 plant states. Field order is the canonical state ordering and
/// defines dataset column order; do not reorder.
///
/// `i_cv` is the converter-side current, `v_filt` the capacitor voltage,
/// `i_filt` the grid-side current (all rectangular, p.u.). `theta_oc` is the
/// outer-control angle (rad), `p_m`/`q_m` the filtered power measurements,
/// `xi`/`gamma` the voltage/current loop integrators, `phi` the active-
/// damping filter states.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlantState {
    pub i_cv_r: f64,
    pub i_cv_i: f64,
    pub v_filt_r: f64,
    pub v_filt_i: f64,
    pub i_filt_r: f64,
    pub i_filt_i: f64,
    pub theta_oc: f64,
    pub p_m: f64,
    pub q_m: f64,
    pub xi_d: f64,
    pub xi_q: f64,
    pub gamma_d: f64,
    pub gamma_q: f64,
    pub phi_d: f64,
    pub phi_q: f64,
}

/// Names of the 9 measured states, in dataset column order.
pub const MEASURED_NAMES: [&str; 9] = [
    "i_cv_r", "i_cv_i", "v_filt_r", "v_filt_i", "i_filt_r", "i_filt_i", "theta_oc", "p_m", "q_m",
];

/// Names of all 15 states, in state-vector order.
pub const STATE_NAMES: [&str; N_STATES] = [
    "i_cv_r", "i_cv_i", "v_filt_r", "v_filt_i", "i_filt_r", "i_filt_i", "theta_oc", "p_m", "q_m",
    "xi_d", "xi_q", "gamma_d", "gamma_q", "phi_d", "phi_q",
];

impl PlantState {
    pub fn as_array(&self) -> [f64; N_STATES] {
        [
            self.i_cv_r,
            self.i_cv_i,
            self.v_filt_r,
            self.v_filt_i,
            self.i_filt_r,
            self.i_filt_i,
            self.theta_oc,
            self.p_m,
            self.q_m,
            self.xi_d,
            self.xi_q,
            self.gamma_d,
            self.gamma_q,
            self.phi_d,
            self.phi_q,
        ]
    }

    pub fn from_array(a: [f64; N_STATES]) -> Self {
        Self {
            i_cv_r: a[0],
            i_cv_i: a[1],
            v_filt_r: a[2],
            v_filt_i: a[3],
            i_filt_r: a[4],
            i_filt_i: a[5],
            theta_oc: a[6],
            p_m: a[7],
            q_m: a[8],
            xi_d: a[9],
            xi_q: a[10],
            gamma_d: a[11],
            gamma_q: a[12],
            phi_d: a[13],
            phi_q: a[14],
        }
    }

    /// The 9 measured states, in dataset column order.
    pub fn measured(&self) -> [f64; 9] {
        [
            self.i_cv_r,
            self.i_cv_i,
            self.v_filt_r,
            self.v_filt_i,
            self.i_filt_r,
            self.i_filt_i,
            self.theta_oc,
            self.p_m,
            self.q_m,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite())
    }
}

/// PCC voltage from current continuity: v_grid = v2 + (R + jX)·i_filt.
///
/// The grid-side branch current equals the line current at the point of
/// common coupling, which eliminates the PCC node algebraically and keeps
/// the model an explicit ODE.
pub fn pcc_voltage(i_filt: Phasor, net: &NetworkParams) -> Phasor {
    let v2 = Phasor::from_polar(net.v2_mag, net.theta2);
    Phasor {
        re: v2.re + net.r_line * i_filt.re - net.x_line * i_filt.im,
        im: v2.im + net.r_line * i_filt.im + net.x_line * i_filt.re,
    }
}

/// Park transform at the outer-control angle.
///
/// d = sin(θ+π/2)·r − cos(θ+π/2)·i,  q = cos(θ+π/2)·r + sin(θ+π/2)·i.
pub fn park(theta_oc: f64, r: f64, i: f64) -> (f64, f64) {
    let s = (theta_oc + std::f64::consts::FRAC_PI_2).sin();
    let c = (theta_oc + std::f64::consts::FRAC_PI_2).cos();
    (s * r - c * i, c * r + s * i)
}

/// Inverse Park transform.
///
/// r = sin(θ+π/2)·d + cos(θ+π/2)·q,  i = −cos(θ+π/2)·d + sin(θ+π/2)·q.
pub fn inverse_park(theta_oc: f64, d: f64, q: f64) -> (f64, f64) {
    let s = (theta_oc + std::f64::consts::FRAC_PI_2).sin();
    let c = (theta_oc + std::f64::consts::FRAC_PI_2).cos();
    (s * d + c * q, -c * d + s * q)
}

/// Droop laws: ω_oc = ω_ref + k_p(p_ref − p_m), v_oc = v_ref + k_q(q_ref − q_m).
pub fn outer_signals(state: &PlantState, u: &ReferenceInput, ctl: &ControlParams) -> (f64, f64) {
    let omega_oc = ctl.omega_ref + ctl.k_p * (u.p_ref - state.p_m);
    let v_oc = u.v_ref + ctl.k_q * (u.q_ref - state.q_m);
    (omega_oc, v_oc)
}

/// Measured phasors rotated into the outer-control dq frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DqMeasurements {
    pub v_filt_d: f64,
    pub v_filt_q: f64,
    pub i_filt_d: f64,
    pub i_filt_q: f64,
    pub i_cv_d: f64,
    pub i_cv_q: f64,
}

/// Park-transform the filter voltage and both currents at the current θ_oc.
pub fn dq_measurements(state: &PlantState) -> DqMeasurements {
    let (v_filt_d, v_filt_q) = park(state.theta_oc, state.v_filt_r, state.v_filt_i);
    let (i_filt_d, i_filt_q) = park(state.theta_oc, state.i_filt_r, state.i_filt_i);
    let (i_cv_d, i_cv_q) = park(state.theta_oc, state.i_cv_r, state.i_cv_i);
    DqMeasurements {
        v_filt_d,
        v_filt_q,
        i_filt_d,
        i_filt_q,
        i_cv_d,
        i_cv_q,
    }
}

/// Inner-loop cascade outputs, including the intermediate references.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerRefs {
    /// Virtual-impedance voltage reference, d axis.
    pub v_vi_d: f64,
    /// Virtual-impedance voltage reference, q axis.
    pub v_vi_q: f64,
    /// Converter current reference, d axis.
    pub i_cv_ref_d: f64,
    /// Converter current reference, q axis.
    pub i_cv_ref_q: f64,
    /// Converter voltage reference, d axis.
    pub v_cv_ref_d: f64,
    /// Converter voltage reference, q axis.
    pub v_cv_ref_q: f64,
}

/// Inner control cascade: virtual impedance, voltage PI with capacitor
/// feed-forward, current PI with inductor cross-coupling, voltage
/// feed-forward and active damping.
pub fn inner_references(
    state: &PlantState,
    omega_oc: f64,
    v_oc: f64,
    dq: &DqMeasurements,
    ctl: &ControlParams,
    net: &NetworkParams,
) -> InnerRefs {
    let v_vi_d = v_oc - ctl.r_v * dq.i_filt_d + omega_oc * ctl.l_v * dq.i_filt_q;
    let v_vi_q = -ctl.r_v * dq.i_filt_q - omega_oc * ctl.l_v * dq.i_filt_d;

    let i_cv_ref_d = ctl.k_p_v * (v_vi_d - dq.v_filt_d) + ctl.k_i_v * state.xi_d
        - net.c_f * omega_oc * dq.v_filt_q
        + ctl.k_ffi * dq.i_filt_d;
    let i_cv_ref_q = ctl.k_p_v * (v_vi_q - dq.v_filt_q)
        + ctl.k_i_v * state.xi_q
        + net.c_f * omega_oc * dq.v_filt_d
        + ctl.k_ffi * dq.i_filt_q;

    let v_cv_ref_d = ctl.k_p_c * (i_cv_ref_d - dq.i_cv_d) - omega_oc * net.l_f * dq.i_cv_q
        + ctl.k_i_c * state.gamma_d
        + ctl.k_ffv * dq.v_filt_d
        - ctl.k_ad * (dq.v_filt_d - state.phi_d);
    let v_cv_ref_q = ctl.k_p_c * (i_cv_ref_q - dq.i_cv_q)
        + omega_oc * net.l_f * dq.i_cv_d
        + ctl.k_i_c * state.gamma_q
        + ctl.k_ffv * dq.v_filt_q
        - ctl.k_ad * (dq.v_filt_q - state.phi_q);

    InnerRefs {
        v_vi_d,
        v_vi_q,
        i_cv_ref_d,
        i_cv_ref_q,
        v_cv_ref_d,
        v_cv_ref_q,
    }
}

/// Exact time derivative of every plant state.
///
/// Filter equations use ω_s for the rotational cross-coupling; inner-loop
/// decoupling terms use ω_oc. The converter terminal voltage is the
/// inverse-Park of the inner current-loop output (average converter model),
/// and the PCC voltage comes from [`pcc_voltage`].
pub fn rhs(
    state: &PlantState,
    u: &ReferenceInput,
    ctl: &ControlParams,
    net: &NetworkParams,
) -> Result<PlantState> {
    if !state.is_finite() {
        return Err(Error::NonFinite {
            context: "plant state (numerical blow-up)".into(),
        });
    }

    let (omega_oc, v_oc) = outer_signals(state, u, ctl);
    let dq = dq_measurements(state);
    let refs = inner_references(state, omega_oc, v_oc, &dq, ctl, net);
    let (v_cv_r, v_cv_i) = inverse_park(state.theta_oc, refs.v_cv_ref_d, refs.v_cv_ref_q);
    let v_grid = pcc_voltage(
        Phasor::new(state.i_filt_r, state.i_filt_i),
        net,
    );

    let wb = net.omega_b;
    let ws = net.omega_s;

    let d_i_cv_r = wb / net.l_f
        * (v_cv_r - state.v_filt_r - net.r_f * state.i_cv_r + ws * net.l_f * state.i_cv_i);
    let d_i_cv_i = wb / net.l_f
        * (v_cv_i - state.v_filt_i - net.r_f * state.i_cv_i - ws * net.l_f * state.i_cv_r);

    let d_v_filt_r =
        wb / net.c_f * (state.i_cv_r - state.i_filt_r + ws * net.c_f * state.v_filt_i);
    let d_v_filt_i =
        wb / net.c_f * (state.i_cv_i - state.i_filt_i - ws * net.c_f * state.v_filt_r);

    let d_i_filt_r = wb / net.l_g
        * (state.v_filt_r - v_grid.re - net.r_g * state.i_filt_r + ws * net.l_g * state.i_filt_i);
    let d_i_filt_i = wb / net.l_g
        * (state.v_filt_i - v_grid.im - net.r_g * state.i_filt_i - ws * net.l_g * state.i_filt_r);

    let d_theta_oc = wb * (omega_oc - ws);
    let p_inst = state.v_filt_r * state.i_filt_r + state.v_filt_i * state.i_filt_i;
    let q_inst = -state.v_filt_r * state.i_filt_i + state.v_filt_i * state.i_filt_r;
    let d_p_m = ctl.omega_z * (p_inst - state.p_m);
    let d_q_m = ctl.omega_f * (q_inst - state.q_m);

    let d_xi_d = refs.v_vi_d - dq.v_filt_d;
    let d_xi_q = refs.v_vi_q - dq.v_filt_q;
    let d_gamma_d = refs.i_cv_ref_d - dq.i_cv_d;
    let d_gamma_q = refs.i_cv_ref_q - dq.i_cv_q;
    let d_phi_d = ctl.omega_ad * (dq.v_filt_d - state.phi_d);
    let d_phi_q = ctl.omega_ad * (dq.v_filt_q - state.phi_q);

    Ok(PlantState {
        i_cv_r: d_i_cv_r,
        i_cv_i: d_i_cv_i,
        v_filt_r: d_v_filt_r,
        v_filt_i: d_v_filt_i,
        i_filt_r: d_i_filt_r,
        i_filt_i: d_i_filt_i,
        theta_oc: d_theta_oc,
        p_m: d_p_m,
        q_m: d_q_m,
        xi_d: d_xi_d,
        xi_q: d_xi_q,
        gamma_d: d_gamma_d,
        gamma_q: d_gamma_q,
        phi_d: d_phi_d,
        phi_q: d_phi_q,
    })
}

/// Active-power nodal balance at the PCC in admittance form. Zero at any
/// operating point where the grid-side branch relation holds statically,
/// i.e. at equilibria; nonzero during transients.
pub fn power_balance_residual(v_grid: Phasor, v_filt: Phasor, net: &NetworkParams) -> f64 {
    let (g11, b11) = net.line_admittance();
    let (gff, bff) = net.filter_branch_admittance();
    let (g12, b12) = (-g11, -b11);
    let (g1f, b1f) = (-gff, -bff);

    let vg = v_grid.magnitude();
    let th_g = v_grid.angle();
    let vf = v_filt.magnitude();
    let th_f = v_filt.angle();

    vg * vg * g11
        + vg * net.v2_mag * g12 * (th_g - net.theta2).cos()
        + vg * net.v2_mag * b12 * (th_g - net.theta2).sin()
        + vg * vg * gff
        + vg * vf * g1f * (th_g - th_f).cos()
        + vg * vf * b1f * (th_g - th_f).sin()
}

/// Energy stored in the LCL filter: ½ℓ_f|i_cv|² + ½c_f|v_filt|² + ½ℓ_g|i_filt|².
pub fn stored_filter_energy(state: &PlantState, net: &NetworkParams) -> f64 {
    0.5 * net.l_f * (state.i_cv_r * state.i_cv_r + state.i_cv_i * state.i_cv_i)
        + 0.5 * net.c_f * (state.v_filt_r * state.v_filt_r + state.v_filt_i * state.v_filt_i)
        + 0.5 * net.l_g * (state.i_filt_r * state.i_filt_r + state.i_filt_i * state.i_filt_i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn default_net() -> NetworkParams {
        NetworkParams::default()
    }

    #[test]
    fn pcc_voltage_zero_current_is_bus_voltage() {
        let v = pcc_voltage(Phasor::new(0.0, 0.0), &default_net());
        assert_eq!(v.re, 1.0);
        assert_eq!(v.im, 0.0);
    }

    #[test]
    fn pcc_voltage_real_current_adds_quadrature_drop() {
        let v = pcc_voltage(Phasor::new(1.0, 0.0), &default_net());
        assert_relative_eq!(v.re, 1.0, max_relative = 1e-15);
        assert_relative_eq!(v.im, 0.0020625, max_relative = 1e-15);
    }

    #[test]
    fn pcc_voltage_imag_current_reduces_magnitude() {
        let v = pcc_voltage(Phasor::new(0.0, 1.0), &default_net());
        assert_relative_eq!(v.re, 1.0 - 0.0020625, max_relative = 1e-15);
        assert_relative_eq!(v.im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn park_identity_at_zero_angle() {
        let (d, q) = park(0.0, 1.0, 0.0);
        assert_relative_eq!(d, 1.0, epsilon = 1e-15);
        assert_relative_eq!(q, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn park_quarter_turn() {
        let (d, q) = park(std::f64::consts::FRAC_PI_2, 1.0, 0.0);
        assert_relative_eq!(d, 0.0, epsilon = 1e-15);
        assert_relative_eq!(q, -1.0, epsilon = 1e-15);
    }

    #[test]
    fn inverse_park_identity_at_zero_angle() {
        let (r, i) = inverse_park(0.0, 1.0, 0.0);
        assert_relative_eq!(r, 1.0, epsilon = 1e-15);
        assert_relative_eq!(i, 0.0, epsilon = 1e-15);
        let (r, i) = inverse_park(0.0, 0.0, 1.0);
        assert_relative_eq!(r, 0.0, epsilon = 1e-15);
        assert_relative_eq!(i, 1.0, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn park_round_trip(theta in -10.0f64..10.0, r in -5.0f64..5.0, i in -5.0f64..5.0) {
            let (d, q) = park(theta, r, i);
            let (r2, i2) = inverse_park(theta, d, q);
            prop_assert!((r2 - r).abs() < 1e-12);
            prop_assert!((i2 - i).abs() < 1e-12);
        }

        #[test]
        fn inverse_park_round_trip(theta in -10.0f64..10.0, d in -5.0f64..5.0, q in -5.0f64..5.0) {
            let (r, i) = inverse_park(theta, d, q);
            let (d2, q2) = park(theta, r, i);
            prop_assert!((d2 - d).abs() < 1e-12);
            prop_assert!((q2 - q).abs() < 1e-12);
        }
    }

    #[test]
    fn outer_signals_zero_error_returns_references() {
        let ctl = ControlParams::default();
        let state = PlantState {
            p_m: 0.5,
            q_m: 0.2,
            ..Default::default()
        };
        let u = ReferenceInput {
            p_ref: 0.5,
            q_ref: 0.2,
            v_ref: 1.0,
        };
        let (w, v) = outer_signals(&state, &u, &ctl);
        assert_eq!(w, ctl.omega_ref);
        assert_eq!(v, u.v_ref);
    }

    #[test]
    fn outer_signals_droop_offset() {
        let ctl = ControlParams::default();
        let state = PlantState {
            p_m: 0.5,
            ..Default::default()
        };
        let u = ReferenceInput {
            p_ref: 0.7,
            q_ref: 0.0,
            v_ref: 1.0,
        };
        let (w, _) = outer_signals(&state, &u, &ctl);
        assert_relative_eq!(w, 1.004, epsilon = 1e-12);
    }

    #[test]
    fn outer_signals_q_droop_at_setpoint() {
        let ctl = ControlParams::default();
        let state = PlantState {
            q_m: 0.2,
            ..Default::default()
        };
        let u = ReferenceInput {
            p_ref: 0.5,
            q_ref: 0.2,
            v_ref: 1.0,
        };
        let (_, v) = outer_signals(&state, &u, &ctl);
        assert_eq!(v, 1.0);
    }

    #[test]
    fn inner_references_all_zero_inputs_give_zero() {
        let ctl = ControlParams::default();
        let net = default_net();
        let state = PlantState::default();
        let dq = dq_measurements(&state);
        let refs = inner_references(&state, 1.0, 0.0, &dq, &ctl, &net);
        assert_eq!(refs.v_vi_d, 0.0);
        assert_eq!(refs.v_vi_q, 0.0);
        assert_eq!(refs.i_cv_ref_d, 0.0);
        assert_eq!(refs.i_cv_ref_q, 0.0);
        assert_eq!(refs.v_cv_ref_d, 0.0);
        assert_eq!(refs.v_cv_ref_q, 0.0);
    }

    #[test]
    fn inner_references_without_virtual_impedance() {
        let ctl = ControlParams {
            r_v: 0.0,
            l_v: 0.0,
            ..Default::default()
        };
        let net = default_net();
        let state = PlantState {
            v_filt_r: 0.9,
            ..Default::default()
        };
        let dq = dq_measurements(&state);
        let refs = inner_references(&state, 1.0, 0.97, &dq, &ctl, &net);
        assert_relative_eq!(refs.v_vi_d, 0.97, epsilon = 1e-15);
        assert_relative_eq!(refs.v_vi_q, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn inner_references_hand_evaluated_current_reference() {
        // k_p_v(v_vi_d − v_filt_d) + k_i_v·ξ_d with no capacitor or
        // feed-forward contribution: 0.52·0.1 + 1.16·0.1 = 0.168.
        let ctl = ControlParams {
            k_p_v: 0.52,
            k_i_v: 1.16,
            k_ffi: 0.0,
            r_v: 0.0,
            l_v: 0.0,
            ..Default::default()
        };
        let net = NetworkParams {
            c_f: 2.5,
            ..default_net()
        };
        let state = PlantState {
            xi_d: 0.1,
            v_filt_r: 0.9, // θ_oc = 0 so v_filt_d = v_filt_r, v_filt_q = v_filt_i
            v_filt_i: 0.0,
            i_filt_r: 0.3,
            ..Default::default()
        };
        let dq = dq_measurements(&state);
        // v_oc = 1 makes v_vi_d = 1 with the virtual impedance disabled.
        let refs = inner_references(&state, 1.0, 1.0, &dq, &ctl, &net);
        assert_relative_eq!(refs.i_cv_ref_d, 0.168, epsilon = 1e-12);
    }

    #[test]
    fn rhs_theta_frozen_when_droop_balanced() {
        let ctl = ControlParams::default();
        let net = default_net();
        let state = PlantState {
            v_filt_r: 1.0,
            p_m: 0.5,
            ..Default::default()
        };
        let u = ReferenceInput {
            p_ref: 0.5,
            q_ref: 0.0,
            v_ref: 1.0,
        };
        let d = rhs(&state, &u, &ctl, &net).unwrap();
        assert_eq!(d.theta_oc, 0.0);
    }

    #[test]
    fn rhs_power_measurement_filter_line() {
        let ctl = ControlParams::default();
        let net = default_net();
        let state = PlantState {
            v_filt_r: 1.0,
            v_filt_i: 0.0,
            i_filt_r: 0.5,
            i_filt_i: 0.0,
            p_m: 0.4,
            ..Default::default()
        };
        let u = ReferenceInput {
            p_ref: 0.5,
            q_ref: 0.0,
            v_ref: 1.0,
        };
        let d = rhs(&state, &u, &ctl, &net).unwrap();
        // ω_z(p_inst − p_m) = 2π·5·(0.5 − 0.4) = π
        assert_relative_eq!(d.p_m, std::f64::consts::PI, epsilon = 1e-12);
    }

    #[test]
    fn rhs_rejects_non_finite_state() {
        let state = PlantState {
            i_cv_r: f64::NAN,
            ..Default::default()
        };
        let u = ReferenceInput {
            p_ref: 0.5,
            q_ref: 0.0,
            v_ref: 1.0,
        };
        let err = rhs(&state, &u, &ControlParams::default(), &default_net());
        assert!(err.is_err());
    }

    #[test]
    fn rhs_is_deterministic() {
        let ctl = ControlParams::default();
        let net = default_net();
        let state = PlantState {
            i_cv_r: 0.31,
            i_cv_i: -2.4,
            v_filt_r: 0.99,
            v_filt_i: 0.02,
            i_filt_r: 0.52,
            i_filt_i: -0.07,
            theta_oc: 0.013,
            p_m: 0.5,
            q_m: 0.01,
            xi_d: 0.2,
            xi_q: -0.04,
            gamma_d: 0.9,
            gamma_q: 0.03,
            phi_d: 0.99,
            phi_q: -0.01,
        };
        let u = ReferenceInput {
            p_ref: 0.7,
            q_ref: 0.2,
            v_ref: 0.9,
        };
        let a = rhs(&state, &u, &ctl, &net).unwrap().as_array();
        let b = rhs(&state, &u, &ctl, &net).unwrap().as_array();
        assert_eq!(a, b, "rhs must be bitwise reproducible");
    }

    #[test]
    fn power_balance_zero_at_flat_profile() {
        // Equal voltages, equal angles, R = 0: every trig difference is zero
        // and the conductance terms cancel exactly.
        let net = default_net();
        let v = Phasor::new(1.0, 0.0);
        let r = power_balance_residual(v, v, &net);
        assert_relative_eq!(r, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn network_admittance_sign_conventions() {
        let net = default_net();
        let (g11, b11) = net.line_admittance();
        assert_eq!(g11, 0.0);
        assert_relative_eq!(b11, -1.0 / 0.0020625, max_relative = 1e-15);
        let (gff, bff) = net.filter_branch_admittance();
        assert!(gff > 0.0);
        assert!(bff < 0.0);
    }

    #[test]
    fn validation_rejects_bad_params() {
        let mut net = default_net();
        net.l_f = 0.0;
        assert!(net.validate().is_err());
        let mut ctl = ControlParams::default();
        ctl.k_i_v = 0.0;
        assert!(ctl.validate().is_err());
        let u = ReferenceInput {
            p_ref: 3.0,
            q_ref: 0.0,
            v_ref: 1.0,
        };
        assert!(u.validate().is_err());
    }

    #[test]
    fn phasor_angle_branch() {
        assert!(Phasor::new(-1.0, 0.0).angle() > 0.0);
        assert_relative_eq!(
            Phasor::new(-1.0, 0.0).angle(),
            std::f64::consts::PI,
            epsilon = 1e-15
        );
    }
}
