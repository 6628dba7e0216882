//! Cascaded tracking controller.
//!
//! The high-level loop turns position and velocity errors plus the flatness
//! reference into a desired attitude, a thrust command, and desired body
//! rates and accelerations. The inner loop turns body-rate errors into
//! torques. [`Controller`] runs the two at different rates.

use std::collections::VecDeque;

use nalgebra::{Rotation3, UnitQuaternion};

use crate::dynamics::{thrust_from_command, ControlInput, DragParams, PlantParams, QuadState};
use crate::error::{Error, Result};
use crate::flatness::{flat_to_setpoint, heading_axes, FlatSample, ReferenceSetpoint, AXIS_EPS};
use crate::geom::{z_world, Rotation, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerGains {
    /// Diagonal of K_pos, 1/s².
    pub kpos: Vec3,
    /// Diagonal of K_vel, 1/s.
    pub kvel: Vec3,
    /// Attitude P-law time constant, s.
    pub att_time_const: f64,
    pub krate_p: Vec3,
    pub krate_d: Vec3,
}

impl Default for ControllerGains {
    fn default() -> Self {
        ControllerGains {
            kpos: Vec3::repeat(10.0),
            kvel: Vec3::repeat(6.0),
            att_time_const: 0.15,
            krate_p: Vec3::repeat(40.0),
            krate_d: Vec3::zeros(),
        }
    }
}

impl ControllerGains {
    pub fn validate(&self) -> Result<()> {
        let non_neg = |key: &str, v: &Vec3| {
            if v.iter().all(|x| *x >= 0.0 && x.is_finite()) {
                Ok(())
            } else {
                Err(Error::Range { key: key.into(), reason: "gains must be finite and >= 0".into() })
            }
        };
        non_neg("kpos", &self.kpos)?;
        non_neg("kvel", &self.kvel)?;
        non_neg("krate_p", &self.krate_p)?;
        non_neg("krate_d", &self.krate_d)?;
        if !(self.att_time_const > 0.0 && self.att_time_const.is_finite()) {
            return Err(Error::Range { key: "att_time_const".into(), reason: "must be positive".into() });
        }
        Ok(())
    }
}

/// What the controller believes about drag, and which feed-forward terms
/// it applies. Zeroing `drag` turns drag compensation off.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompensationConfig {
    pub drag: DragParams,
    pub enable_ff_rates: bool,
    pub enable_ff_accel: bool,
}

impl Default for CompensationConfig {
    fn default() -> Self {
        CompensationConfig { drag: DragParams::ZERO, enable_ff_rates: true, enable_ff_accel: true }
    }
}

impl CompensationConfig {
    pub fn with_drag(drag: DragParams) -> Self {
        CompensationConfig { drag, ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionCommand {
    pub a_des: Vec3,
    pub r_des: Rotation,
    pub c_cmd: f64,
    /// `‖a_des‖` vanished; attitude held, thrust cut.
    pub degenerate: bool,
}

/// Outer loop. `last_r_des` is held when the desired acceleration vanishes
/// (identity if none).
pub fn position_control(
    state: &QuadState,
    sp: &ReferenceSetpoint,
    fs: &FlatSample,
    gains: &ControllerGains,
    comp: &CompensationConfig,
    g: f64,
    last_r_des: Option<&Rotation>,
) -> PositionCommand {
    let a_fb = -gains.kpos.component_mul(&(state.p - fs.p)) - gains.kvel.component_mul(&(state.v - fs.v));
    let rm = sp.r.matrix();
    let a_rd = -(rm * comp.drag.matrix() * rm.transpose() * fs.v);
    let a_des = a_fb + fs.a - a_rd + g * z_world();

    let norm = a_des.norm();
    if norm < AXIS_EPS {
        return PositionCommand {
            a_des,
            r_des: last_r_des.copied().unwrap_or_default(),
            c_cmd: 0.0,
            degenerate: true,
        };
    }
    let z_b = a_des / norm;
    let (x_c, y_c) = heading_axes(fs.psi);
    let xt = y_c.cross(&z_b);
    let x_b = if xt.norm() >= AXIS_EPS { xt.normalize() } else { x_c };
    let y_b = z_b.cross(&x_b);
    let r_des = Rotation::from_axes(x_b, y_b, z_b);

    // thrust projected on the actual body z axis
    let vh = state.v.dot(&(state.r.x_axis() + state.r.y_axis()));
    let c_cmd = a_des.dot(&state.r.z_axis()) - comp.drag.kh * vh * vh;
    PositionCommand { a_des, r_des, c_cmd, degenerate: false }
}

/// Quaternion-error P law, `ω_fb = (2/τ) sign(q_w) q_vec` with
/// `q = quat(RᵀR_des)`.
pub fn attitude_control(r: &Rotation, r_des: &Rotation, att_time_const: f64) -> Vec3 {
    let err = r.matrix().transpose() * r_des.matrix();
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(err));
    let sign = if q.w < 0.0 { -1.0 } else { 1.0 };
    q.imag() * (2.0 / att_time_const * sign)
}

/// Inner-loop torque. `w_dot_est` feeds the K_D term; pass `None` to drop
/// it (the default configuration has K_D = 0 anyway).
#[allow(clippy::too_many_arguments)]
pub fn bodyrate_control(
    w: &Vec3,
    w_des: &Vec3,
    w_dot_des: &Vec3,
    w_dot_est: Option<&Vec3>,
    gains: &ControllerGains,
    plant: &PlantParams,
    r: &Rotation,
    v: &Vec3,
) -> Vec3 {
    let mut acc = w_dot_des + gains.krate_p.component_mul(&(w_des - w));
    if let Some(wd) = w_dot_est {
        acc += gains.krate_d.component_mul(&(w_dot_des - wd));
    }
    let j = &plant.inertia;
    j * acc + w.cross(&(j * w)) + plant.tau_g.torque() + plant.b * w + plant.a * r.apply_inverse(v)
}

/// Output of one high-level tick, held by the inner loop until the next.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HighLevelOutput {
    pub t: f64,
    pub c_cmd: f64,
    pub c_dot: f64,
    pub w_des: Vec3,
    pub w_dot_des: Vec3,
    pub r_des: Rotation,
    pub setpoint: ReferenceSetpoint,
    pub degenerate: bool,
}

fn high_level(
    state: &QuadState,
    fs: &FlatSample,
    gains: &ControllerGains,
    comp: &CompensationConfig,
    plant: &PlantParams,
    fallback: Option<&Rotation>,
    last_r_des: Option<&Rotation>,
) -> Result<HighLevelOutput> {
    let sp = flat_to_setpoint(fs, &comp.drag, plant, fallback)?;
    let pc = position_control(state, &sp, fs, gains, comp, plant.g, last_r_des);
    let w_fb = attitude_control(&state.r, &pc.r_des, gains.att_time_const);
    let w_ff = if comp.enable_ff_rates { sp.w } else { Vec3::zeros() };
    let w_dot_des = if comp.enable_ff_accel { sp.w_dot } else { Vec3::zeros() };
    Ok(HighLevelOutput {
        t: fs.t,
        c_cmd: pc.c_cmd,
        c_dot: if comp.enable_ff_rates { sp.c_dot } else { 0.0 },
        w_des: w_fb + w_ff,
        w_dot_des,
        r_des: pc.r_des,
        setpoint: sp,
        degenerate: pc.degenerate || sp.degenerate(),
    })
}

/// Both loops evaluated at once on the same state, no memory.
pub fn control_step(
    state: &QuadState,
    fs: &FlatSample,
    gains: &ControllerGains,
    comp: &CompensationConfig,
    plant: &PlantParams,
) -> Result<ControlInput> {
    let hl = high_level(state, fs, gains, comp, plant, None, None)?;
    let tau = bodyrate_control(&state.w, &hl.w_des, &hl.w_dot_des, None, gains, plant, &state.r, &state.v);
    Ok(ControlInput::new(hl.c_cmd.max(0.0), tau))
}

/// How the inner loop uses a held high-level output between ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HoldMode {
    /// Constant until the next high-level tick.
    Zero,
    /// Extrapolate `ω_des` with `ω̇_des` and `c_cmd` with `ċ`.
    #[default]
    FirstOrder,
}

/// Stateful two-rate controller. Owns the flatness fallback attitude, the
/// last desired attitude and an optional measurement delay line.
#[derive(Debug, Clone)]
pub struct Controller {
    pub gains: ControllerGains,
    pub comp: CompensationConfig,
    /// Model the controller uses for inertia, `g` and the torque terms.
    pub model: PlantParams,
    pub hold: HoldMode,
    latency: f64,
    delay: VecDeque<(f64, QuadState)>,
    fallback: Option<Rotation>,
    last_r_des: Option<Rotation>,
    held: Option<HighLevelOutput>,
    prev_w: Option<(f64, Vec3)>,
}

impl Controller {
    pub fn new(gains: ControllerGains, comp: CompensationConfig, model: PlantParams) -> Self {
        Controller {
            gains,
            comp,
            model,
            hold: HoldMode::default(),
            latency: 0.0,
            delay: VecDeque::new(),
            fallback: None,
            last_r_des: None,
            held: None,
            prev_w: None,
        }
    }

    /// Pure delay, in seconds, on the state seen by the high-level loop.
    pub fn with_latency(mut self, latency: f64) -> Self {
        self.latency = latency.max(0.0);
        self
    }

    pub fn with_hold(mut self, hold: HoldMode) -> Self {
        self.hold = hold;
        self
    }

    /// Records a measurement for the delay line. Call at the inner rate.
    pub fn observe(&mut self, t: f64, state: &QuadState) {
        if self.latency <= 0.0 {
            return;
        }
        self.delay.push_back((t, *state));
        // keep one sample at or before t - latency
        while self.delay.len() > 1 && self.delay[1].0 <= t - self.latency + 1e-12 {
            self.delay.pop_front();
        }
    }

    fn delayed(&self, state: &QuadState) -> QuadState {
        match self.delay.front() {
            Some((_, s)) if self.latency > 0.0 => *s,
            _ => *state,
        }
    }

    pub fn held(&self) -> Option<&HighLevelOutput> {
        self.held.as_ref()
    }

    /// High-level tick on reference `fs`.
    pub fn update_high_level(&mut self, state: &QuadState, fs: &FlatSample) -> Result<HighLevelOutput> {
        let seen = self.delayed(state);
        let hl = high_level(
            &seen,
            fs,
            &self.gains,
            &self.comp,
            &self.model,
            self.fallback.as_ref(),
            self.last_r_des.as_ref(),
        )?;
        self.fallback = Some(hl.setpoint.r);
        self.last_r_des = Some(hl.r_des);
        self.held = Some(hl);
        Ok(hl)
    }

    /// Inner-loop tick at time `t`. Zero input before the first high-level
    /// tick.
    pub fn update_inner(&mut self, t: f64, state: &QuadState) -> ControlInput {
        let Some(hl) = self.held else {
            return ControlInput::new(0.0, Vec3::zeros());
        };
        let dt = t - hl.t;
        let (w_des, c_cmd) = match self.hold {
            HoldMode::Zero => (hl.w_des, hl.c_cmd),
            HoldMode::FirstOrder => (hl.w_des + hl.w_dot_des * dt, hl.c_cmd + hl.c_dot * dt),
        };
        let w_dot_est = match self.prev_w {
            Some((tp, wp)) if t > tp => Some((state.w - wp) / (t - tp)),
            _ => None,
        };
        self.prev_w = Some((t, state.w));
        let tau = bodyrate_control(
            &state.w,
            &w_des,
            &hl.w_dot_des,
            w_dot_est.as_ref(),
            &self.gains,
            &self.model,
            &state.r,
            &state.v,
        );
        ControlInput::new(c_cmd.max(0.0), tau)
    }
}

/// Collective thrust the plant actually produces for `c_cmd`.
pub fn realized_thrust(c_cmd: f64, state: &QuadState, plant: &PlantParams) -> f64 {
    thrust_from_command(c_cmd.clamp(0.0, plant.max_thrust()), state, &plant.drag)
}
