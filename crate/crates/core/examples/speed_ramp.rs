//! Circle with path speed ramping 0 -> 5 m/s over 30 s. Prints the mean
//! error with and without drag compensation per 0.5 m/s speed bin.

use flatquad::dynamics::{DragParams, PlantParams};
use flatquad::geom::Vec3;
use flatquad::sim::{run_simulation, RunLength, Scenario};
use flatquad::trajectory::{HeadingMode, PhaseWarp, TrajectoryDef, TrajectoryKind};

fn main() -> flatquad::Result<()> {
    let plant = PlantParams::with_drag(DragParams::planar(0.544, 0.386));
    let circle = TrajectoryDef::new(
        TrajectoryKind::Circle { radius: 1.8 },
        Vec3::new(0.0, 0.0, 1.5),
        5.0,
        HeadingMode::YawFree { psi0: 0.0 },
    )?;
    let mut on = Scenario::new(plant, circle.clone(), RunLength::Seconds(30.0));
    on.warp = PhaseWarp::ramp(0.0, 5.0, 30.0);
    let mut off = on.clone();
    off.comp.drag = DragParams::ZERO;
    let (log_on, _) = run_simulation(&on)?;
    let (log_off, _) = run_simulation(&off)?;

    let mut bins = [(0.0, 0.0, 0usize); 10];
    for (a, b) in log_on.rows.iter().zip(&log_off.rows) {
        let v = circle.reference_speed(&on.warp, a.t);
        let bin = &mut bins[((v / 0.5) as usize).min(9)];
        bin.0 += a.err_norm;
        bin.1 += b.err_norm;
        bin.2 += 1;
    }
    println!("{:>11} {:>12} {:>12}", "speed", "err on [m]", "err off [m]");
    for (i, (on, off, n)) in bins.iter().enumerate() {
        let n = *n as f64;
        println!("{:>4.1}-{:<4.1}m/s {:>12.3e} {:>12.3e}", 0.5 * i as f64, 0.5 * (i + 1) as f64, on / n, off / n);
    }
    Ok(())
}
