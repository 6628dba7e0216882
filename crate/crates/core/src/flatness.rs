//! Flat outputs → full reference.
//!
//! Position `p` and heading `ψ` (with their derivatives up to snap and
//! `ψ̈`) determine attitude, collective thrust, thrust command, body rates,
//! angular accelerations and torques of a quadrotor subject to linear rotor
//! drag `−R D Rᵀ v`. Body rates and angular accelerations each come out of a
//! 3×3 linear system with the same left-hand side, solved in closed form.
//!
//! Singular configurations (thrust direction undetermined, ballistic arcs)
//! are resolved rather than reported as errors; the returned
//! [`Degeneracy`] records which workaround fired.

use crate::dynamics::{DragParams, PlantParams};
use crate::error::{Error, Result};
use crate::geom::{hat, z_world, Mat3, Rotation, Vec3};

/// Cross-product norms below this leave the body axis undetermined.
pub const AXIS_EPS: f64 = 1e-6;
/// Denominators of the rate/acceleration solution below this are singular.
pub const SOLVER_EPS: f64 = 1e-9;

/// Flat outputs and their time derivatives at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatSample {
    pub t: f64,
    pub p: Vec3,
    pub v: Vec3,
    pub a: Vec3,
    pub j: Vec3,
    pub s: Vec3,
    pub psi: f64,
    pub psi_dot: f64,
    pub psi_ddot: f64,
}

impl FlatSample {
    /// Stationary sample at `p` with heading `psi`.
    pub fn hover(p: Vec3, psi: f64) -> Self {
        FlatSample {
            t: 0.0,
            p,
            v: Vec3::zeros(),
            a: Vec3::zeros(),
            j: Vec3::zeros(),
            s: Vec3::zeros(),
            psi,
            psi_dot: 0.0,
            psi_ddot: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.p, self.v, self.a, self.j, self.s]
            .iter()
            .all(|x| x.iter().all(|c| c.is_finite()))
            && [self.t, self.psi, self.psi_dot, self.psi_ddot].iter().all(|x| x.is_finite())
    }
}

/// Which singularity workarounds were applied to a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Degeneracy {
    /// `y_C × α` or `β × x_B` vanished; an axis came from the fallback
    /// attitude.
    pub attitude: bool,
    /// `z_Wᵀα < 0`: the heading ends up 180° off.
    pub inverted: bool,
    /// `A₂` or `B₁C₃ − B₃C₁` vanished; rates and accelerations zeroed.
    pub solver: bool,
}

impl Degeneracy {
    pub fn any(&self) -> bool {
        self.attitude || self.inverted || self.solver
    }

    fn merge(self, o: Degeneracy) -> Degeneracy {
        Degeneracy {
            attitude: self.attitude || o.attitude,
            inverted: self.inverted || o.inverted,
            solver: self.solver || o.solver,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceSetpoint {
    pub r: Rotation,
    /// Mass-normalized collective thrust.
    pub c: f64,
    /// Thrust command after removing the `k_h v_h²` disturbance.
    pub c_cmd: f64,
    pub c_dot: f64,
    pub w: Vec3,
    pub w_dot: Vec3,
    pub tau: Vec3,
    pub degeneracy: Degeneracy,
}

impl ReferenceSetpoint {
    pub fn degenerate(&self) -> bool {
        self.degeneracy.any()
    }
}

/// Coefficients of the linear systems
///
/// ```text
///            B₁ ω_y + C₁ ω_z = D₁        B₁ ω̇_y + C₁ ω̇_z = E₁
/// A₂ ω_x           + C₂ ω_z = D₂        A₂ ω̇_x + C₂ ω̇_z = E₂
///            B₃ ω_y + C₃ ω_z = D₃        B₃ ω̇_y + C₃ ω̇_z = E₃
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FlatnessCoefficients {
    pub b1: f64,
    pub c1: f64,
    pub d1: f64,
    pub a2: f64,
    pub c2: f64,
    pub d2: f64,
    pub b3: f64,
    pub c3: f64,
    pub d3: f64,
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
}

impl FlatnessCoefficients {
    /// Cramer solution for right-hand side `(r1, r2, r3)`, `None` when the
    /// system is singular.
    fn solve(&self, r1: f64, r2: f64, r3: f64) -> Option<Vec3> {
        let den = self.b1 * self.c3 - self.b3 * self.c1;
        if self.a2.abs() < SOLVER_EPS || den.abs() < SOLVER_EPS {
            return None;
        }
        let x = (-self.b1 * self.c2 * r3 + self.b1 * self.c3 * r2 - self.b3 * self.c1 * r2
            + self.b3 * self.c2 * r1)
            / (self.a2 * den);
        let y = (-self.c1 * r3 + self.c3 * r1) / den;
        let z = (self.b1 * r3 - self.b3 * r1) / den;
        Some(Vec3::new(x, y, z))
    }
}

/// Heading frame axes `x_C`, `y_C`.
pub fn heading_axes(psi: f64) -> (Vec3, Vec3) {
    let (s, c) = psi.sin_cos();
    (Vec3::new(c, s, 0.0), Vec3::new(-s, c, 0.0))
}

/// Attitude satisfying `x_Bᵀα = 0`, `y_Bᵀβ = 0` and `x_Bᵀy_C = 0`.
///
/// When `y_C × α` vanishes, `x_B` is the fallback x-axis projected onto the
/// `x_C`–`z_W` plane (or `x_C` if that projection vanishes too). When
/// `β × x_B` vanishes, `y_B` is built from the fallback z-axis (or `y_C`).
/// The fallback defaults to identity.
pub fn reference_attitude(
    fs: &FlatSample,
    drag: &DragParams,
    g: f64,
    fallback: Option<&Rotation>,
) -> (Rotation, Degeneracy) {
    let fallback = fallback.copied().unwrap_or_default();
    let (x_c, y_c) = heading_axes(fs.psi);
    let thrust_dir = fs.a + g * z_world();
    let alpha = thrust_dir + drag.dx * fs.v;
    let beta = thrust_dir + drag.dy * fs.v;
    let mut deg = Degeneracy { inverted: alpha.z < 0.0, ..Default::default() };

    let xa = y_c.cross(&alpha);
    let x_b = if xa.norm() >= AXIS_EPS {
        xa.normalize()
    } else {
        deg.attitude = true;
        let est = fallback.x_axis();
        let proj = est - est.dot(&y_c) * y_c;
        if proj.norm() >= AXIS_EPS {
            proj.normalize()
        } else {
            x_c
        }
    };

    let yb = beta.cross(&x_b);
    let y_b = if yb.norm() >= AXIS_EPS {
        yb.normalize()
    } else {
        deg.attitude = true;
        let zx = fallback.z_axis().cross(&x_b);
        if zx.norm() >= AXIS_EPS {
            zx.normalize()
        } else {
            y_c
        }
    };

    let z_b = x_b.cross(&y_b);
    (Rotation::from_axes(x_b, y_b, z_b), deg)
}

/// Collective thrust `c` and the command `c_cmd` that produces it.
pub fn reference_thrust(fs: &FlatSample, r: &Rotation, drag: &DragParams, g: f64) -> (f64, f64) {
    let c = r.z_axis().dot(&(fs.a + g * z_world() + drag.dz * fs.v));
    let vh = fs.v.dot(&(r.x_axis() + r.y_axis()));
    (c, c - drag.kh * vh * vh)
}

fn rate_coefficients(fs: &FlatSample, r: &Rotation, c: f64, drag: &DragParams) -> FlatnessCoefficients {
    let (x_c, y_c) = heading_axes(fs.psi);
    let (x_b, y_b, z_b) = (r.x_axis(), r.y_axis(), r.z_axis());
    let (dx, dy, dz) = (drag.dx, drag.dy, drag.dz);
    FlatnessCoefficients {
        b1: c - (dz - dx) * z_b.dot(&fs.v),
        c1: -(dx - dy) * y_b.dot(&fs.v),
        d1: x_b.dot(&fs.j) + dx * x_b.dot(&fs.a),
        a2: c + (dy - dz) * z_b.dot(&fs.v),
        c2: (dx - dy) * x_b.dot(&fs.v),
        d2: -y_b.dot(&fs.j) - dy * y_b.dot(&fs.a),
        b3: -y_c.dot(&z_b),
        c3: y_c.cross(&z_b).norm(),
        d3: fs.psi_dot * x_c.dot(&x_b),
        ..Default::default()
    }
}

/// Body rates from jerk and heading rate. Returns zero rates and `true` when
/// the system is singular.
pub fn reference_bodyrates(
    fs: &FlatSample,
    r: &Rotation,
    c: f64,
    drag: &DragParams,
) -> (Vec3, FlatnessCoefficients, bool) {
    let k = rate_coefficients(fs, r, c, drag);
    match k.solve(k.d1, k.d2, k.d3) {
        Some(w) => (w, k, false),
        None => (Vec3::zeros(), k, true),
    }
}

/// Time derivative of the collective thrust.
pub fn reference_thrust_dot(fs: &FlatSample, r: &Rotation, w: &Vec3, drag: &DragParams) -> f64 {
    let (x_b, y_b, z_b) = (r.x_axis(), r.y_axis(), r.z_axis());
    z_b.dot(&fs.j)
        + w.x * (drag.dy - drag.dz) * y_b.dot(&fs.v)
        + w.y * (drag.dz - drag.dx) * x_b.dot(&fs.v)
        + drag.dz * z_b.dot(&fs.a)
}

/// Angular accelerations from snap and `ψ̈`, reusing the left-hand side
/// of the body-rate system. Returns the coefficients with `E₁..E₃` filled
/// in, and `true` on a singular system (accelerations zeroed).
pub fn reference_angular_accel(
    fs: &FlatSample,
    r: &Rotation,
    c: f64,
    c_dot: f64,
    w: &Vec3,
    coeffs: &FlatnessCoefficients,
    drag: &DragParams,
) -> (Vec3, FlatnessCoefficients, bool) {
    let (x_c, y_c) = heading_axes(fs.psi);
    let (x_b, y_b, z_b) = (r.x_axis(), r.y_axis(), r.z_axis());
    let rm = r.matrix();
    let d = drag.matrix();
    let wh = hat(w);
    let wh2 = wh * wh;
    let xi = rm * (wh2 * d + d * wh2 + 2.0 * wh * d * wh.transpose()) * rm.transpose() * fs.v
        + 2.0 * rm * (wh * d + d * wh.transpose()) * rm.transpose() * fs.a
        + rm * d * rm.transpose() * fs.j;

    let mut k = *coeffs;
    k.e1 = x_b.dot(&fs.s) - 2.0 * c_dot * w.y - c * w.x * w.z + x_b.dot(&xi);
    k.e2 = -y_b.dot(&fs.s) - 2.0 * c_dot * w.x + c * w.y * w.z - y_b.dot(&xi);
    k.e3 = fs.psi_ddot * x_c.dot(&x_b) + 2.0 * fs.psi_dot * w.z * x_c.dot(&y_b)
        - 2.0 * fs.psi_dot * w.y * x_c.dot(&z_b)
        - w.x * w.y * y_c.dot(&y_b)
        - w.x * w.z * y_c.dot(&z_b);
    match k.solve(k.e1, k.e2, k.e3) {
        Some(wd) => (wd, k, false),
        None => (Vec3::zeros(), k, true),
    }
}

/// Torque that realizes `ω̇` at state `(R, v, ω)`.
pub fn reference_torques(w: &Vec3, w_dot: &Vec3, r: &Rotation, v: &Vec3, plant: &PlantParams) -> Vec3 {
    let j = &plant.inertia;
    j * w_dot + w.cross(&(j * w)) + plant.tau_g.torque() + plant.a * r.apply_inverse(v) + plant.b * w
}

/// Full reference for one flat sample. `drag` is the drag model used for
/// the flatness map (a controller may hold a different estimate than the
/// plant); `plant` supplies `g`, inertia and the torque-model matrices.
pub fn flat_to_setpoint(
    fs: &FlatSample,
    drag: &DragParams,
    plant: &PlantParams,
    fallback: Option<&Rotation>,
) -> Result<ReferenceSetpoint> {
    if !fs.is_finite() {
        return Err(Error::NumericalBlowup { t: fs.t, what: "non-finite flat sample".into() });
    }
    let g = plant.g;
    let (r, mut deg) = reference_attitude(fs, drag, g, fallback);
    let (c, c_cmd) = reference_thrust(fs, &r, drag, g);

    let (mut w, coeffs, singular) = reference_bodyrates(fs, &r, c, drag);
    deg.solver |= singular;
    if deg.attitude {
        w = Vec3::zeros();
    }
    let c_dot = reference_thrust_dot(fs, &r, &w, drag);
    let w_dot = if deg.attitude || deg.solver {
        Vec3::zeros()
    } else {
        let (wd, _, singular) = reference_angular_accel(fs, &r, c, c_dot, &w, &coeffs, drag);
        deg = deg.merge(Degeneracy { solver: singular, ..Default::default() });
        wd
    };
    let tau = reference_torques(&w, &w_dot, &r, &fs.v, plant);

    let sp = ReferenceSetpoint { r, c, c_cmd, c_dot, w, w_dot, tau, degeneracy: deg };
    let finite = [c, c_cmd, c_dot].iter().all(|x| x.is_finite())
        && w.iter().chain(w_dot.iter()).chain(tau.iter()).all(|x| x.is_finite())
        && r.is_finite();
    if !finite {
        return Err(Error::NumericalBlowup { t: fs.t, what: "non-finite setpoint".into() });
    }
    Ok(sp)
}

/// `RDRᵀ`, the world-frame drag matrix at attitude `r`.
pub fn world_drag(r: &Rotation, drag: &DragParams) -> Mat3 {
    r.matrix() * drag.matrix() * r.matrix().transpose()
}
