//! Finite-difference check of body rates, angular accelerations and thrust
//! rate on the lemniscate, for three drag settings.

use flatquad::check::{default_drag_settings, flatness_check};
use flatquad::dynamics::PlantParams;
use flatquad::geom::Vec3;
use flatquad::trajectory::{PhaseWarp, TrajectoryDef};

fn main() -> flatquad::Result<()> {
    let lem = TrajectoryDef::lemniscate(Vec3::new(0.0, 0.0, 1.5), 2.0, 4.0)?;
    let period = lem.period().expect("periodic");
    let res = flatness_check(&lem, &PhaseWarp::constant(), &PlantParams::default(), &default_drag_settings(), period, 1000, 1)?;
    for r in res {
        println!(
            "dx={:.3} dy={:.3}: |w| {:.1e}  |w_dot| {:.1e}  |c_dot| {:.1e}  ({} samples) {}",
            r.drag.dx,
            r.drag.dy,
            r.w,
            r.w_dot,
            r.c_dot,
            r.samples,
            if r.passed() { "ok" } else { "FAIL" }
        );
    }
    Ok(())
}
