//! Finite-difference oracle suite for the flatness map.
//!
//! For random times on a trajectory, compares the analytic body rates,
//! angular accelerations and thrust rate against central differences of
//! the attitude, body rates and thrust.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{DragParams, PlantParams};
use crate::error::{Error, Result};
use crate::flatness::flat_to_setpoint;
use crate::geom::{vee, Vec3};
use crate::trajectory::{PhaseWarp, TrajectoryDef};

pub const W_TOL: f64 = 1e-4;
pub const W_DOT_TOL: f64 = 1e-3;
pub const C_DOT_TOL: f64 = 1e-4;
const H: f64 = 1e-5;

/// Drag settings the suite runs by default: none, and the two identified
/// sets for the circle and the lemniscate.
pub fn default_drag_settings() -> [DragParams; 3] {
    [DragParams::ZERO, DragParams::planar(0.544, 0.386), DragParams::planar(0.491, 0.236)]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    pub drag: DragParams,
    pub samples: usize,
    /// Samples skipped because the flatness map flagged them degenerate.
    pub skipped: usize,
    pub w: f64,
    pub w_dot: f64,
    pub c_dot: f64,
}

impl Residuals {
    pub fn passed(&self) -> bool {
        self.samples > 0 && self.w < W_TOL && self.w_dot < W_DOT_TOL && self.c_dot < C_DOT_TOL
    }
}

/// Runs `samples` random checks in `[h, window]` for each drag setting.
pub fn flatness_check(
    def: &TrajectoryDef,
    warp: &PhaseWarp,
    plant: &PlantParams,
    drags: &[DragParams],
    window: f64,
    samples: usize,
    seed: u64,
) -> Result<Vec<Residuals>> {
    if !(window > 2.0 * H) || samples == 0 {
        return Err(Error::Range { key: "check_samples".into(), reason: "need samples and a positive window".into() });
    }
    let mut out = Vec::with_capacity(drags.len());
    for drag in drags {
        let model = PlantParams { drag: *drag, ..*plant };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut res = Residuals { drag: *drag, samples: 0, skipped: 0, w: 0.0, w_dot: 0.0, c_dot: 0.0 };
        for _ in 0..samples {
            let t = rng.random_range(2.0 * H..window);
            let at = |t: f64| flat_to_setpoint(&def.sample(warp, t), drag, &model, None);
            let (lo, mid, hi) = (at(t - H)?, at(t)?, at(t + H)?);
            if lo.degenerate() || mid.degenerate() || hi.degenerate() {
                res.skipped += 1;
                continue;
            }
            let r_dot = (hi.r.matrix() - lo.r.matrix()) / (2.0 * H);
            let w_fd: Vec3 = vee(&(mid.r.matrix().transpose() * r_dot));
            let w_dot_fd = (hi.w - lo.w) / (2.0 * H);
            let c_dot_fd = (hi.c - lo.c) / (2.0 * H);
            res.w = res.w.max((mid.w - w_fd).amax());
            res.w_dot = res.w_dot.max((mid.w_dot - w_dot_fd).amax());
            res.c_dot = res.c_dot.max((mid.c_dot - c_dot_fd).abs());
            res.samples += 1;
        }
        out.push(res);
    }
    Ok(out)
}
