//! Fly the 4 m/s circle on flatness inputs alone, no feedback.

use flatquad::dynamics::{DragParams, PlantParams};
use flatquad::geom::Vec3;
use flatquad::sim::replay_open_loop;
use flatquad::trajectory::{PhaseWarp, TrajectoryDef};

fn main() -> flatquad::Result<()> {
    let plant = PlantParams::with_drag(DragParams::planar(0.544, 0.386));
    let circle = TrajectoryDef::circle(Vec3::new(0.0, 0.0, 1.5), 1.8, 4.0)?;
    for duration in [0.5, 1.0, 2.0, 4.0] {
        let r = replay_open_loop(&circle, &PhaseWarp::constant(), &plant, 1e-3, 1e-4, duration)?;
        println!("{duration:>4} s: max position error {:.3e} m", r.max_err);
    }
    Ok(())
}
