//! Ten loops of the circle on a draggy plant, with and without the
//! controller knowing about drag.

use flatquad::dynamics::{DragParams, PlantParams};
use flatquad::geom::Vec3;
use flatquad::sim::{run_simulation, RunLength, Scenario};
use flatquad::trajectory::{HeadingMode, TrajectoryDef, TrajectoryKind};

fn main() -> flatquad::Result<()> {
    let plant = PlantParams::with_drag(DragParams::planar(0.544, 0.386));
    let circle = TrajectoryDef::new(
        TrajectoryKind::Circle { radius: 1.8 },
        Vec3::new(0.0, 0.0, 1.5),
        4.0,
        HeadingMode::YawFree { psi0: 0.0 },
    )?;
    let on = Scenario::new(plant, circle, RunLength::Loops(10.0));
    let mut off = on.clone();
    off.comp.drag = DragParams::ZERO;

    println!("{:<14} {:>12} {:>12} {:>12}", "compensation", "E_abs [m]", "max [m]", "sigma [m]");
    for (name, sc) in [("on", &on), ("off", &off)] {
        let (_, s) = run_simulation(sc)?;
        println!("{name:<14} {:>12.3e} {:>12.3e} {:>12.3e}", s.e_abs, s.max_err, s.std_err);
    }
    Ok(())
}
