//! Quadrotor rigid-body plant with linear rotor drag and a
//! velocity-dependent thrust disturbance.
//!
//! ```text
//! ṗ = v
//! v̇ = −g z_W + c z_B − R D Rᵀ v,        c = c_cmd + k_h (vᵀ(x_B + y_B))²
//! Ṙ = R ω̂
//! ω̇ = J⁻¹ (τ − ω × Jω − τ_g − A Rᵀ v − B ω)
//! ```

use crate::error::{Error, Result};
use crate::geom::{hat, rot_exp, z_world, Mat3, Rotation, Vec3};

/// Standard gravity used as the default `g`.
pub const GRAVITY: f64 = 9.81;

/// Thrust-to-weight ratio of the modelled vehicle; commands are clamped to
/// `[0, THRUST_TO_WEIGHT · g]`.
pub const THRUST_TO_WEIGHT: f64 = 4.0;

/// Any state component beyond this magnitude counts as a blow-up.
pub const BLOWUP_LIMIT: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadState {
    pub p: Vec3,
    pub v: Vec3,
    pub r: Rotation,
    /// Body rates in body coordinates.
    pub w: Vec3,
}

impl QuadState {
    pub fn hover_at(p: Vec3) -> Self {
        QuadState {
            p,
            v: Vec3::zeros(),
            r: Rotation::identity(),
            w: Vec3::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.p.iter().chain(self.v.iter()).chain(self.w.iter()).all(|x| x.is_finite())
            && self.r.is_finite()
    }

    fn max_abs(&self) -> f64 {
        self.p
            .iter()
            .chain(self.v.iter())
            .chain(self.w.iter())
            .chain(self.r.matrix().iter())
            .fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

/// Mass-normalized rotor-drag coefficients and the thrust-model constant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DragParams {
    /// 1/s
    pub dx: f64,
    /// 1/s
    pub dy: f64,
    /// 1/s
    pub dz: f64,
    /// 1/m
    pub kh: f64,
}

impl DragParams {
    pub const ZERO: DragParams = DragParams { dx: 0.0, dy: 0.0, dz: 0.0, kh: 0.0 };

    pub fn new(dx: f64, dy: f64, dz: f64, kh: f64) -> Self {
        DragParams { dx, dy, dz, kh }
    }

    /// Horizontal drag only, `dz = kh = 0`.
    pub fn planar(dx: f64, dy: f64) -> Self {
        DragParams { dx, dy, dz: 0.0, kh: 0.0 }
    }

    pub fn matrix(&self) -> Mat3 {
        Mat3::from_diagonal(&Vec3::new(self.dx, self.dy, self.dz))
    }

    pub fn is_valid(&self) -> bool {
        [self.dx, self.dy, self.dz, self.kh]
            .iter()
            .all(|x| x.is_finite() && *x >= 0.0)
    }
}

/// Model of the propeller gyroscopic torque `τ_g`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GyroTorqueModel {
    #[default]
    Zero,
}

impl GyroTorqueModel {
    pub fn torque(&self) -> Vec3 {
        match self {
            GyroTorqueModel::Zero => Vec3::zeros(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantParams {
    pub drag: DragParams,
    /// Inertia, kg·m².
    pub inertia: Mat3,
    /// Coupling of body velocity into the body-rate dynamics.
    pub a: Mat3,
    /// Body-rate damping.
    pub b: Mat3,
    pub tau_g: GyroTorqueModel,
    pub g: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        PlantParams {
            drag: DragParams::ZERO,
            inertia: Mat3::from_diagonal(&Vec3::new(2.5e-3, 2.1e-3, 4.3e-3)),
            a: Mat3::zeros(),
            b: Mat3::zeros(),
            tau_g: GyroTorqueModel::Zero,
            g: GRAVITY,
        }
    }
}

impl PlantParams {
    pub fn with_drag(drag: DragParams) -> Self {
        PlantParams { drag, ..Default::default() }
    }

    /// Symmetric and positive definite inertia, finite everything else.
    pub fn validate(&self) -> Result<()> {
        let j = &self.inertia;
        if (j - j.transpose()).amax() > 1e-12 * j.amax().max(1.0) {
            return Err(Error::Range {
                key: "inertia".into(),
                reason: "must be symmetric".into(),
            });
        }
        if j.cholesky().is_none() {
            return Err(Error::SingularInertia);
        }
        if !self.drag.is_valid() {
            return Err(Error::Range {
                key: "drag".into(),
                reason: "coefficients must be finite and non-negative".into(),
            });
        }
        if !(self.g.is_finite() && self.g > 0.0) {
            return Err(Error::Range { key: "g".into(), reason: "must be positive".into() });
        }
        Ok(())
    }

    pub fn max_thrust(&self) -> f64 {
        THRUST_TO_WEIGHT * self.g
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlInput {
    /// Commanded mass-normalized collective thrust, m/s².
    pub c_cmd: f64,
    /// Torque, N·m.
    pub tau: Vec3,
}

impl ControlInput {
    pub fn new(c_cmd: f64, tau: Vec3) -> Self {
        ControlInput { c_cmd, tau }
    }
}

/// Time derivative of a [`QuadState`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative {
    pub p_dot: Vec3,
    pub v_dot: Vec3,
    pub r_dot: Mat3,
    pub w_dot: Vec3,
}

/// `c = c_cmd + k_h v_h²` with `v_h = vᵀ(x_B + y_B)`.
pub fn thrust_from_command(c_cmd: f64, state: &QuadState, drag: &DragParams) -> f64 {
    let vh = state.v.dot(&(state.r.x_axis() + state.r.y_axis()));
    c_cmd + drag.kh * vh * vh
}

pub fn state_derivative(
    state: &QuadState,
    u: &ControlInput,
    plant: &PlantParams,
) -> Result<StateDerivative> {
    let j_inv = plant.inertia.try_inverse().ok_or(Error::SingularInertia)?;
    Ok(derivative_with(state, u, plant, &j_inv))
}

fn derivative_with(
    state: &QuadState,
    u: &ControlInput,
    plant: &PlantParams,
    j_inv: &Mat3,
) -> StateDerivative {
    let r = state.r.matrix();
    let c_cmd = u.c_cmd.clamp(0.0, plant.max_thrust());
    let c = thrust_from_command(c_cmd, state, &plant.drag);
    let v_body = r.transpose() * state.v;
    let drag_acc = r * (plant.drag.matrix() * v_body);
    let v_dot = -plant.g * z_world() + c * state.r.z_axis() - drag_acc;

    let w = &state.w;
    let jw = plant.inertia * w;
    let net = u.tau - w.cross(&jw) - plant.tau_g.torque() - plant.a * v_body - plant.b * w;
    StateDerivative {
        p_dot: state.v,
        v_dot,
        r_dot: r * hat(w),
        w_dot: j_inv * net,
    }
}

/// Inverse right Jacobian of SO(3) applied to `w`, truncated after the
/// second-order term.
fn dexp_inv(u: &Vec3, w: &Vec3) -> Vec3 {
    let uw = u.cross(w);
    w + 0.5 * uw + u.cross(&uw) / 12.0
}

/// One fixed step of a Runge–Kutta–Munthe-Kaas scheme: classical RK4 on
/// `(p, v, ω)` and on the attitude increment `φ`, with `R ← R · exp(φ)`.
pub fn step_rk4(
    state: &QuadState,
    u: &ControlInput,
    plant: &PlantParams,
    dt: f64,
) -> Result<QuadState> {
    if !(dt > 0.0 && dt <= 0.01) {
        return Err(Error::InvalidStep(dt));
    }
    let j_inv = plant.inertia.try_inverse().ok_or(Error::SingularInertia)?;

    let stage = |dp: Vec3, dv: Vec3, dw: Vec3, phi: Vec3| {
        let s = QuadState {
            p: state.p + dp,
            v: state.v + dv,
            r: state.r.compose(&rot_exp(&phi)),
            w: state.w + dw,
        };
        let d = derivative_with(&s, u, plant, &j_inv);
        (d.p_dot, d.v_dot, d.w_dot, dexp_inv(&phi, &s.w))
    };

    let h2 = 0.5 * dt;
    let k1 = stage(Vec3::zeros(), Vec3::zeros(), Vec3::zeros(), Vec3::zeros());
    let k2 = stage(k1.0 * h2, k1.1 * h2, k1.2 * h2, k1.3 * h2);
    let k3 = stage(k2.0 * h2, k2.1 * h2, k2.2 * h2, k2.3 * h2);
    let k4 = stage(k3.0 * dt, k3.1 * dt, k3.2 * dt, k3.3 * dt);

    let w6 = dt / 6.0;
    let comb = |a: Vec3, b: Vec3, c: Vec3, d: Vec3| (a + 2.0 * b + 2.0 * c + d) * w6;
    let next = QuadState {
        p: state.p + comb(k1.0, k2.0, k3.0, k4.0),
        v: state.v + comb(k1.1, k2.1, k3.1, k4.1),
        r: state.r.compose(&rot_exp(&comb(k1.3, k2.3, k3.3, k4.3))),
        w: state.w + comb(k1.2, k2.2, k3.2, k4.2),
    };

    if !next.is_finite() || next.max_abs() > BLOWUP_LIMIT {
        return Err(Error::NumericalBlowup {
            t: f64::NAN,
            what: "plant state left the finite range".into(),
        });
    }
    Ok(next)
}

/// Integrates `steps` RK4 substeps of length `dt` under a constant input.
pub fn integrate(
    state: &QuadState,
    u: &ControlInput,
    plant: &PlantParams,
    dt: f64,
    steps: usize,
) -> Result<QuadState> {
    let mut s = *state;
    for _ in 0..steps {
        s = step_rk4(&s, u, plant, dt)?;
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, s: f64) -> Vec3 {
        Vec3::new(rng.random_range(-s..s), rng.random_range(-s..s), rng.random_range(-s..s))
    }

    fn full_plant() -> PlantParams {
        PlantParams {
            drag: DragParams::new(0.544, 0.386, 0.1, 0.009),
            inertia: Mat3::new(2.5e-3, 1e-5, 0.0, 1e-5, 2.1e-3, 2e-5, 0.0, 2e-5, 4.3e-3),
            a: Mat3::new(1e-4, 0.0, 2e-5, 0.0, 1e-4, 0.0, 0.0, 3e-5, 0.0),
            b: Mat3::from_diagonal(&Vec3::new(2e-4, 2e-4, 1e-4)),
            ..Default::default()
        }
    }

    #[test]
    fn thrust_model_examples() {
        let hover = QuadState::hover_at(Vec3::zeros());
        let drag = DragParams::new(0.0, 0.0, 0.0, 0.009);
        assert_eq!(thrust_from_command(9.81, &hover, &drag), 9.81);

        let mut s = hover;
        s.v = Vec3::new(1.0, -2.0, 0.5);
        s.r = rot_exp(&Vec3::new(0.1, 0.2, 0.3));
        assert_eq!(thrust_from_command(13.0, &s, &DragParams::ZERO), 13.0);

        let mut s = hover;
        s.v = Vec3::new(4.0, 0.0, 0.0);
        let c = thrust_from_command(10.0, &s, &drag);
        assert_abs_diff_eq!(c, 10.144, epsilon = 1e-12);
    }

    #[test]
    fn hover_is_an_equilibrium() {
        let plant = PlantParams::default();
        let s = QuadState::hover_at(Vec3::new(1.0, 2.0, 3.0));
        let u = ControlInput::new(plant.g, Vec3::zeros());
        let d = state_derivative(&s, &u, &plant).unwrap();
        assert_eq!(d.p_dot, Vec3::zeros());
        assert_eq!(d.v_dot, Vec3::zeros());
        assert_eq!(d.r_dot, Mat3::zeros());
        assert_eq!(d.w_dot, Vec3::zeros());

        let next = step_rk4(&s, &u, &plant, 1e-3).unwrap();
        assert_abs_diff_eq!(next.p, s.p, epsilon = 1e-12);
        assert_abs_diff_eq!(next.v, s.v, epsilon = 1e-12);
        assert_abs_diff_eq!(*next.r.matrix(), *s.r.matrix(), epsilon = 1e-12);
    }

    #[test]
    fn isolated_drag_term() {
        let plant = PlantParams::with_drag(DragParams::new(0.5, 0.0, 0.0, 0.0));
        let mut s = QuadState::hover_at(Vec3::zeros());
        s.v = Vec3::new(1.0, 0.0, 0.0);
        let u = ControlInput::new(plant.g, Vec3::zeros());
        let d = state_derivative(&s, &u, &plant).unwrap();
        assert_abs_diff_eq!(d.v_dot, Vec3::new(-0.5, 0.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn singular_inertia_is_reported() {
        let plant = PlantParams { inertia: Mat3::zeros(), ..Default::default() };
        let s = QuadState::hover_at(Vec3::zeros());
        let u = ControlInput::new(9.81, Vec3::zeros());
        assert!(matches!(state_derivative(&s, &u, &plant), Err(Error::SingularInertia)));
        assert!(plant.validate().is_err());
    }

    #[test]
    fn step_size_is_checked() {
        let plant = PlantParams::default();
        let s = QuadState::hover_at(Vec3::zeros());
        let u = ControlInput::new(9.81, Vec3::zeros());
        assert!(matches!(step_rk4(&s, &u, &plant, 0.0), Err(Error::InvalidStep(_))));
        assert!(matches!(step_rk4(&s, &u, &plant, 0.02), Err(Error::InvalidStep(_))));
    }

    #[test]
    fn blowup_is_detected() {
        let plant = PlantParams::default();
        let mut s = QuadState::hover_at(Vec3::zeros());
        s.p.x = 2e9;
        let u = ControlInput::new(9.81, Vec3::zeros());
        assert!(matches!(step_rk4(&s, &u, &plant, 1e-3), Err(Error::NumericalBlowup { .. })));
    }

    #[test]
    fn drag_free_reduction() {
        let plant = PlantParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let s = QuadState {
                p: random_vec(&mut rng, 3.0),
                v: random_vec(&mut rng, 5.0),
                r: rot_exp(&random_vec(&mut rng, 2.0)),
                w: random_vec(&mut rng, 2.0),
            };
            let c = rng.random_range(0.0..30.0);
            let d = state_derivative(&s, &ControlInput::new(c, Vec3::zeros()), &plant).unwrap();
            let expected = -plant.g * z_world() + c * s.r.z_axis();
            assert_eq!(d.v_dot, expected);
        }
    }

    #[test]
    fn thrust_is_clamped() {
        let plant = PlantParams::default();
        let s = QuadState::hover_at(Vec3::zeros());
        let hi = state_derivative(&s, &ControlInput::new(1e3, Vec3::zeros()), &plant).unwrap();
        assert_abs_diff_eq!(hi.v_dot.z, 3.0 * plant.g, epsilon = 1e-12);
        let lo = state_derivative(&s, &ControlInput::new(-5.0, Vec3::zeros()), &plant).unwrap();
        assert_abs_diff_eq!(lo.v_dot.z, -plant.g, epsilon = 1e-12);
    }

    #[test]
    fn ballistic_matches_closed_form() {
        let plant = PlantParams::default();
        let p0 = Vec3::new(0.5, -1.0, 2.0);
        let v0 = Vec3::new(3.0, 1.0, 4.0);
        let mut s = QuadState::hover_at(p0);
        s.v = v0;
        let u = ControlInput::new(0.0, Vec3::zeros());
        let s = integrate(&s, &u, &plant, 1e-3, 1000).unwrap();
        let exact = p0 + v0 - 0.5 * plant.g * z_world();
        assert_abs_diff_eq!(s.p, exact, epsilon = 1e-9);
    }

    #[test]
    fn translational_energy_is_conserved_in_free_flight() {
        let plant = PlantParams::default();
        let mut s = QuadState::hover_at(Vec3::zeros());
        s.v = Vec3::new(2.0, -1.0, 5.0);
        s.w = Vec3::new(0.3, -0.2, 0.1);
        let energy = |s: &QuadState| 0.5 * s.v.norm_squared() + plant.g * s.p.z;
        let e0 = energy(&s);
        let s1 = integrate(&s, &ControlInput::new(0.0, Vec3::zeros()), &plant, 1e-3, 1000).unwrap();
        assert!(((energy(&s1) - e0) / e0).abs() < 1e-6);
    }

    #[test]
    fn velocity_derivative_matches_finite_difference_of_integration() {
        // Oracle: integrate with tiny RK4 micro-steps forward and backward in
        // time and difference the velocities.
        let plant = full_plant();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let s = QuadState {
                p: random_vec(&mut rng, 2.0),
                v: random_vec(&mut rng, 4.0),
                r: rot_exp(&random_vec(&mut rng, 1.0)),
                w: random_vec(&mut rng, 2.0),
            };
            let u = ControlInput::new(rng.random_range(5.0..15.0), random_vec(&mut rng, 1e-3));
            let d = state_derivative(&s, &u, &plant).unwrap();
            let h: f64 = 1e-4;
            let micro: f64 = 1e-5;
            let n = (h / micro).round() as usize;
            // step_rk4 only runs forward, so use the one-sided
            // second-order stencil instead of a central difference
            let fwd = integrate(&s, &u, &plant, micro, n).unwrap();
            let fwd2 = integrate(&s, &u, &plant, micro, 2 * n).unwrap();
            let fd = (-3.0 * s.v + 4.0 * fwd.v - fwd2.v) / (2.0 * h);
            assert_abs_diff_eq!(d.v_dot, fd, epsilon = 1e-5);
            let fdw = (-3.0 * s.w + 4.0 * fwd.w - fwd2.w) / (2.0 * h);
            assert!((d.w_dot - fdw).amax() < 1e-4 * d.w_dot.amax().max(1.0));
        }
    }

    /// Reference run with a closed-form-free input: smooth torque and thrust
    /// that depend on time only through the held input blocks.
    fn circle_segment(dt: f64) -> QuadState {
        let plant = full_plant();
        let mut s = QuadState::hover_at(Vec3::new(1.8, 0.0, 1.0));
        s.v = Vec3::new(0.0, 4.0, 0.0);
        s.r = rot_exp(&Vec3::new(0.3, -0.6, 0.1));
        s.w = Vec3::new(0.8, -1.2, 0.5);
        let u = ControlInput::new(13.24, Vec3::new(1e-3, -2e-3, 5e-4));
        let steps = (1.0 / dt).round() as usize;
        integrate(&s, &u, &plant, dt, steps).unwrap()
    }

    fn state_distance(a: &QuadState, b: &QuadState) -> f64 {
        (a.p - b.p)
            .norm()
            .max((a.v - b.v).norm())
            .max((a.w - b.w).norm())
            .max((a.r.matrix() - b.r.matrix()).norm())
    }

    #[test]
    fn fourth_order_convergence() {
        let reference = circle_segment(1e-4 / 8.0);
        let e1 = state_distance(&circle_segment(4e-3), &reference);
        let e2 = state_distance(&circle_segment(2e-3), &reference);
        let ratio = e1 / e2;
        assert!((12.0..20.0).contains(&ratio), "ratio {ratio} (e1 {e1:e}, e2 {e2:e})");
    }

    #[test]
    fn attitude_stays_orthonormal() {
        let plant = full_plant();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut s = QuadState::hover_at(Vec3::zeros());
        s.w = Vec3::new(3.0, -2.0, 5.0);
        // 10⁶ steps of 1e-4 s, input redrawn every 1000 steps
        for _ in 0..1000 {
            let u = ControlInput::new(rng.random_range(5.0..15.0), random_vec(&mut rng, 2e-3));
            s = integrate(&s, &u, &plant, 1e-4, 1000).unwrap();
            s.p = Vec3::zeros();
            s.v = s.v.map(|x| x.clamp(-20.0, 20.0));
            s.w = s.w.map(|x| x.clamp(-20.0, 20.0));
        }
        assert!(s.r.orthonormality_error() < 1e-8);
    }

    #[test]
    fn stepping_is_deterministic() {
        let a = circle_segment(1e-3);
        let b = circle_segment(1e-3);
        assert_eq!(a, b);
    }
}
