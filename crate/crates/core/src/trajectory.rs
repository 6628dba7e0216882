//! Analytic reference trajectories with exact derivatives through snap.
//!
//! Every path is a curve `p(θ)` in a phase variable. The phase advances
//! according to a [`PhaseWarp`], and the time derivatives of position follow
//! from the chain rule:
//!
//! ```text
//! v = p′θ̇
//! a = p″θ̇² + p′θ̈
//! j = p‴θ̇³ + 3p″θ̇θ̈ + p′θ⃛
//! s = p⁗θ̇⁴ + 6p‴θ̇²θ̈ + p″(3θ̈² + 4θ̇θ⃛) + p′θ⁗
//! ```

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::sync::{Arc, Mutex};

use crate::dynamics::{DragParams, PlantParams, GRAVITY};
use crate::error::{Error, Result};
use crate::flatness::{flat_to_setpoint, FlatSample};
use crate::geom::{wrap_angle, Vec3};

/// A user-supplied curve in a phase variable.
pub trait PhasePath: Send + Sync {
    /// `[p, p′, p″, p‴, p⁗]` at phase `theta`, relative to the centre.
    fn derivatives(&self, theta: f64) -> [Vec3; 5];
    /// `max ‖dp/dθ‖`; path speed equals `speed_gain · θ̇` at its maximum.
    fn speed_gain(&self) -> f64;
    /// Phase period, if the path is closed.
    fn phase_period(&self) -> Option<f64> {
        None
    }
}

#[derive(Clone)]
pub enum TrajectoryKind {
    Hover,
    /// Horizontal circle, `speed` is the constant path speed.
    Circle { radius: f64 },
    /// Horizontal Gerono lemniscate `x = A cos(√2θ)`, `y = A sin(√2θ)cos(√2θ)`,
    /// `speed` is the maximum path speed.
    Lemniscate { amplitude: f64 },
    /// Vertical oscillation `z = A sin θ`, `speed` is the maximum speed.
    Vertical { amplitude: f64 },
    CustomPhase(Arc<dyn PhasePath>),
}

impl fmt::Debug for TrajectoryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrajectoryKind::Hover => write!(f, "Hover"),
            TrajectoryKind::Circle { radius } => write!(f, "Circle {{ radius: {radius} }}"),
            TrajectoryKind::Lemniscate { amplitude } => write!(f, "Lemniscate {{ amplitude: {amplitude} }}"),
            TrajectoryKind::Vertical { amplitude } => write!(f, "Vertical {{ amplitude: {amplitude} }}"),
            TrajectoryKind::CustomPhase(_) => write!(f, "CustomPhase(..)"),
        }
    }
}

impl PartialEq for TrajectoryKind {
    fn eq(&self, other: &Self) -> bool {
        use TrajectoryKind::*;
        match (self, other) {
            (Hover, Hover) => true,
            (Circle { radius: a }, Circle { radius: b }) => a == b,
            (Lemniscate { amplitude: a }, Lemniscate { amplitude: b }) => a == b,
            (Vertical { amplitude: a }, Vertical { amplitude: b }) => a == b,
            (CustomPhase(a), CustomPhase(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HeadingMode {
    Constant(f64),
    /// Heading along the horizontal velocity.
    Tangent,
    /// Heading that keeps the drag-free reference body yaw rate `ω_z` at
    /// zero, starting from `psi0` at `t = 0`. Integrated numerically.
    YawFree { psi0: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WarpMode {
    Constant,
    /// Path speed grows linearly from `v_start`, reaching `v_end` at
    /// `ramp_duration` and continuing at the same rate afterwards.
    LinearRamp,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseWarp {
    pub mode: WarpMode,
    pub v_start: f64,
    pub v_end: f64,
    pub ramp_duration: f64,
}

impl Default for PhaseWarp {
    fn default() -> Self {
        PhaseWarp::constant()
    }
}

impl PhaseWarp {
    pub fn constant() -> Self {
        PhaseWarp { mode: WarpMode::Constant, v_start: 0.0, v_end: 0.0, ramp_duration: 1.0 }
    }

    pub fn ramp(v_start: f64, v_end: f64, ramp_duration: f64) -> Self {
        PhaseWarp { mode: WarpMode::LinearRamp, v_start, v_end, ramp_duration }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == WarpMode::LinearRamp {
            if !(self.ramp_duration > 0.0) {
                return Err(range("ramp_duration", "must be positive"));
            }
            if !(self.v_start >= 0.0 && self.v_end >= self.v_start) {
                return Err(range("v_end", "need v_end >= v_start >= 0"));
            }
        }
        Ok(())
    }
}

fn range(key: &str, reason: &str) -> Error {
    Error::Range { key: key.into(), reason: reason.into() }
}

/// Grid spacing of the integrated yaw-free heading.
const YAW_STEP: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct TrajectoryDef {
    pub kind: TrajectoryKind,
    pub center: Vec3,
    /// Path speed (circle) or maximum path speed (other kinds), m/s. Unused by
    /// ramp warps, which carry their own speeds.
    pub speed: f64,
    pub heading: HeadingMode,
    speed_gain: f64,
    yaw_cache: Arc<Mutex<Vec<(PhaseWarp, Vec<f64>)>>>,
}

impl PartialEq for TrajectoryDef {
    fn eq(&self, o: &Self) -> bool {
        self.kind == o.kind
            && self.center == o.center
            && self.speed == o.speed
            && self.heading == o.heading
    }
}

impl TrajectoryDef {
    pub fn new(kind: TrajectoryKind, center: Vec3, speed: f64, heading: HeadingMode) -> Result<Self> {
        let speed_gain = match &kind {
            TrajectoryKind::Hover => 1.0,
            TrajectoryKind::Circle { radius } => {
                check_positive("radius", *radius)?;
                *radius
            }
            TrajectoryKind::Lemniscate { amplitude } => {
                check_positive("amplitude", *amplitude)?;
                max_phase_speed(|th| lemniscate(*amplitude, th), 2.0 * PI / SQRT_2)
            }
            TrajectoryKind::Vertical { amplitude } => {
                check_positive("amplitude", *amplitude)?;
                *amplitude
            }
            TrajectoryKind::CustomPhase(path) => {
                check_positive("speed_gain", path.speed_gain())?;
                path.speed_gain()
            }
        };
        if !(speed >= 0.0 && speed.is_finite()) {
            return Err(range("speed", "must be finite and non-negative"));
        }
        Ok(TrajectoryDef {
            kind,
            center,
            speed,
            heading,
            speed_gain,
            yaw_cache: Arc::new(Mutex::new(Vec::new())),
        })
    }

    pub fn hover(center: Vec3) -> Self {
        Self::new(TrajectoryKind::Hover, center, 0.0, HeadingMode::Constant(0.0)).unwrap()
    }

    /// Horizontal circle around `center`, constant heading 0.
    pub fn circle(center: Vec3, radius: f64, speed: f64) -> Result<Self> {
        Self::new(TrajectoryKind::Circle { radius }, center, speed, HeadingMode::Constant(0.0))
    }

    /// Gerono lemniscate around `center`, constant heading 0.
    pub fn lemniscate(center: Vec3, amplitude: f64, max_speed: f64) -> Result<Self> {
        Self::new(TrajectoryKind::Lemniscate { amplitude }, center, max_speed, HeadingMode::Constant(0.0))
    }

    /// `max ‖dp/dθ‖` of the path.
    pub fn speed_gain(&self) -> f64 {
        self.speed_gain
    }

    fn phase_period(&self) -> Option<f64> {
        match &self.kind {
            TrajectoryKind::Hover => None,
            TrajectoryKind::Circle { .. } | TrajectoryKind::Vertical { .. } => Some(2.0 * PI),
            TrajectoryKind::Lemniscate { .. } => Some(2.0 * PI / SQRT_2),
            TrajectoryKind::CustomPhase(p) => p.phase_period(),
        }
    }

    /// Time for one loop under a constant warp.
    pub fn period(&self) -> Option<f64> {
        let rate = self.speed / self.speed_gain;
        self.phase_period().filter(|_| rate > 0.0).map(|p| p / rate)
    }

    fn path(&self, theta: f64) -> [Vec3; 5] {
        match &self.kind {
            TrajectoryKind::Hover => [Vec3::zeros(); 5],
            TrajectoryKind::Circle { radius } => circle(*radius, theta),
            TrajectoryKind::Lemniscate { amplitude } => lemniscate(*amplitude, theta),
            TrajectoryKind::Vertical { amplitude } => vertical(*amplitude, theta),
            TrajectoryKind::CustomPhase(p) => p.derivatives(theta),
        }
    }

    /// Phase and its first four time derivatives.
    fn phase(&self, warp: &PhaseWarp, t: f64) -> [f64; 5] {
        let k = self.speed_gain;
        match warp.mode {
            WarpMode::Constant => {
                let rate = self.speed / k;
                [rate * t, rate, 0.0, 0.0, 0.0]
            }
            WarpMode::LinearRamp => {
                let acc = (warp.v_end - warp.v_start) / warp.ramp_duration;
                [
                    (warp.v_start * t + 0.5 * acc * t * t) / k,
                    (warp.v_start + acc * t) / k,
                    acc / k,
                    0.0,
                    0.0,
                ]
            }
        }
    }

    /// Reference speed scale at `t` (path speed for circles, maximum speed
    /// otherwise).
    pub fn reference_speed(&self, warp: &PhaseWarp, t: f64) -> f64 {
        self.phase(warp, t)[1] * self.speed_gain
    }

    pub fn sample(&self, warp: &PhaseWarp, t: f64) -> FlatSample {
        let (p, v, a, j, s) = self.kinematics(warp, t);
        let (psi, psi_dot, psi_ddot) = match self.heading {
            HeadingMode::Constant(psi) => (wrap_angle(psi), 0.0, 0.0),
            HeadingMode::Tangent => tangent_heading(&v, &a, &j),
            HeadingMode::YawFree { psi0 } => {
                let psi = self.yaw_free_heading(warp, psi0, t);
                let (psi_dot, psi_ddot) = yaw_free_rates(psi, &a, &j, &s);
                (wrap_angle(psi), psi_dot, psi_ddot)
            }
        };
        FlatSample { t, p, v, a, j, s, psi, psi_dot, psi_ddot }
    }

    fn kinematics(&self, warp: &PhaseWarp, t: f64) -> (Vec3, Vec3, Vec3, Vec3, Vec3) {
        let [th, th1, th2, th3, th4] = self.phase(warp, t);
        let [p0, p1, p2, p3, p4] = self.path(th);
        let v = p1 * th1;
        let a = p2 * th1.powi(2) + p1 * th2;
        let j = p3 * th1.powi(3) + 3.0 * p2 * th1 * th2 + p1 * th3;
        let s = p4 * th1.powi(4)
            + 6.0 * p3 * th1.powi(2) * th2
            + p2 * (3.0 * th2 * th2 + 4.0 * th1 * th3)
            + p1 * th4;
        (self.center + p0, v, a, j, s)
    }

    fn yaw_rate_at(&self, warp: &PhaseWarp, psi: f64, t: f64) -> f64 {
        let (_, _, a, j, s) = self.kinematics(warp, t);
        yaw_free_rates(psi, &a, &j, &s).0
    }

    fn rk4_heading(&self, warp: &PhaseWarp, psi: f64, t: f64, h: f64) -> f64 {
        let k1 = self.yaw_rate_at(warp, psi, t);
        let k2 = self.yaw_rate_at(warp, psi + 0.5 * h * k1, t + 0.5 * h);
        let k3 = self.yaw_rate_at(warp, psi + 0.5 * h * k2, t + 0.5 * h);
        let k4 = self.yaw_rate_at(warp, psi + h * k3, t + h);
        psi + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    }

    /// Unwrapped yaw-free heading: RK4 on a fixed 1 ms grid from `t = 0`
    /// (memoized per warp), then one partial step to `t`.
    fn yaw_free_heading(&self, warp: &PhaseWarp, psi0: f64, t: f64) -> f64 {
        let t = t.max(0.0);
        let k = (t / YAW_STEP).floor() as usize;
        let base = {
            let mut cache = self.yaw_cache.lock().unwrap_or_else(|e| e.into_inner());
            let idx = match cache.iter().position(|(w, _)| w == warp) {
                Some(i) => i,
                None => {
                    cache.push((*warp, vec![psi0]));
                    cache.len() - 1
                }
            };
            let grid = &mut cache[idx].1;
            while grid.len() <= k {
                let n = grid.len() - 1;
                let next = self.rk4_heading(warp, grid[n], n as f64 * YAW_STEP, YAW_STEP);
                grid.push(next);
            }
            grid[k]
        };
        let tk = k as f64 * YAW_STEP;
        if t == tk {
            base
        } else {
            self.rk4_heading(warp, base, tk, t - tk)
        }
    }
}

/// `(ψ̇, ψ̈)` of the heading for which the drag-free reference has
/// `ω_z = 0` (and hence `ω̇_z = 0`) at heading `psi`.
fn yaw_free_rates(psi: f64, a: &Vec3, j: &Vec3, s: &Vec3) -> (f64, f64) {
    let (x_c, y_c) = crate::flatness::heading_axes(psi);
    let f = a + GRAVITY * Vec3::z();
    let c = f.norm();
    let z_b = f / c;
    let xt = y_c.cross(&z_b);
    let xt_norm = xt.norm();
    if c < 1e-9 || xt_norm < 1e-9 {
        return (0.0, 0.0);
    }
    let x_b = xt / xt_norm;
    let y_b = z_b.cross(&x_b);
    let xcxb = x_c.dot(&x_b);
    if xcxb.abs() < 1e-9 {
        return (0.0, 0.0);
    }
    let w_x = -y_b.dot(j) / c;
    let w_y = x_b.dot(j) / c;
    let psi_dot = -w_y * y_c.dot(&z_b) / xcxb;
    let c_dot = z_b.dot(j);
    let w_y_dot = (x_b.dot(s) - 2.0 * c_dot * w_y) / c;
    let psi_ddot = (-y_c.dot(&z_b) * w_y_dot + 2.0 * psi_dot * w_y * x_c.dot(&z_b)
        + w_x * w_y * y_c.dot(&y_b))
        / xcxb;
    (psi_dot, psi_ddot)
}

fn check_positive(key: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(range(key, "must be positive"))
    }
}

fn circle(r: f64, th: f64) -> [Vec3; 5] {
    let (s, c) = th.sin_cos();
    let e = Vec3::new(c, s, 0.0) * r;
    let f = Vec3::new(-s, c, 0.0) * r;
    [e, f, -e, -f, e]
}

fn lemniscate(amp: f64, th: f64) -> [Vec3; 5] {
    // x = A cos(kθ), y = (A/2) sin(2kθ)
    let k = SQRT_2;
    let (s1, c1) = (k * th).sin_cos();
    let (s2, c2) = (2.0 * k * th).sin_cos();
    let hx = amp;
    let hy = 0.5 * amp;
    let m = 2.0 * k;
    [
        Vec3::new(hx * c1, hy * s2, 0.0),
        Vec3::new(-hx * k * s1, hy * m * c2, 0.0),
        Vec3::new(-hx * k.powi(2) * c1, -hy * m.powi(2) * s2, 0.0),
        Vec3::new(hx * k.powi(3) * s1, -hy * m.powi(3) * c2, 0.0),
        Vec3::new(hx * k.powi(4) * c1, hy * m.powi(4) * s2, 0.0),
    ]
}

fn vertical(amp: f64, th: f64) -> [Vec3; 5] {
    let (s, c) = th.sin_cos();
    let z = |x: f64| Vec3::new(0.0, 0.0, amp * x);
    [z(s), z(c), z(-s), z(-c), z(s)]
}

/// Maximum of `‖p′(θ)‖` over one phase period: grid search followed by
/// bisection on `d/dθ ‖p′‖² = 2 p′·p″`.
fn max_phase_speed<F: Fn(f64) -> [Vec3; 5]>(path: F, period: f64) -> f64 {
    const GRID: usize = 4096;
    let step = period / GRID as f64;
    let best = (0..GRID)
        .map(|i| i as f64 * step)
        .max_by(|a, b| path(*a)[1].norm().total_cmp(&path(*b)[1].norm()))
        .unwrap_or(0.0);
    let slope = |th: f64| {
        let d = path(th);
        d[1].dot(&d[2])
    };
    let (mut lo, mut hi) = (best - step, best + step);
    if slope(lo) > 0.0 && slope(hi) < 0.0 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if slope(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-13 {
                break;
            }
        }
        path(0.5 * (lo + hi))[1].norm().max(path(best)[1].norm())
    } else {
        path(best)[1].norm()
    }
}

fn tangent_heading(v: &Vec3, a: &Vec3, j: &Vec3) -> (f64, f64, f64) {
    let n = v.x * v.x + v.y * v.y;
    if n < 1e-12 {
        return (0.0, 0.0, 0.0);
    }
    let cross = v.x * a.y - v.y * a.x;
    let cross_dot = v.x * j.y - v.y * j.x;
    let n_dot = 2.0 * (v.x * a.x + v.y * a.y);
    let psi = v.y.atan2(v.x);
    let psi_dot = cross / n;
    let psi_ddot = cross_dot / n - cross * n_dot / (n * n);
    (wrap_angle(psi), psi_dot, psi_ddot)
}

/// Peak nominal demands of a trajectory flown without drag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NominalStats {
    /// m/s²
    pub max_thrust: f64,
    /// rad/s
    pub max_bodyrate: f64,
}

impl NominalStats {
    pub fn max_bodyrate_deg(&self) -> f64 {
        self.max_bodyrate.to_degrees()
    }
}

/// Sweeps the drag-free flatness map over `[0, window]` at 1 ms and
/// returns the largest collective thrust and body-rate norm.
pub fn nominal_stats(def: &TrajectoryDef, warp: &PhaseWarp, window: f64, g: f64) -> Result<NominalStats> {
    if !(window > 0.0) {
        return Err(range("window", "must be positive"));
    }
    let plant = PlantParams { g, ..PlantParams::with_drag(DragParams::ZERO) };
    let n = (window / 1e-3).round() as usize;
    let mut stats = NominalStats { max_thrust: 0.0, max_bodyrate: 0.0 };
    let mut fallback = None;
    for i in 0..=n {
        let fs = def.sample(warp, i as f64 * 1e-3);
        let sp = flat_to_setpoint(&fs, &DragParams::ZERO, &plant, fallback.as_ref())?;
        stats.max_thrust = stats.max_thrust.max(sp.c);
        stats.max_bodyrate = stats.max_bodyrate.max(sp.w.norm());
        fallback = Some(sp.r);
    }
    Ok(stats)
}
