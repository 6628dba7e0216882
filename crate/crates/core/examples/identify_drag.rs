//! Recover planted drag coefficients from closed-loop tracking error,
//! checkpointing every iteration.

use flatquad::dynamics::{DragParams, PlantParams};
use flatquad::geom::Vec3;
use flatquad::identify::{identify_drag, IdentConfig};
use flatquad::sim::{RunLength, Scenario};
use flatquad::trajectory::{HeadingMode, TrajectoryDef, TrajectoryKind};

fn main() -> flatquad::Result<()> {
    let plant = PlantParams::with_drag(DragParams::planar(0.544, 0.386));
    let circle = TrajectoryDef::new(
        TrajectoryKind::Circle { radius: 1.8 },
        Vec3::new(0.0, 0.0, 1.5),
        4.0,
        HeadingMode::YawFree { psi0: 0.0 },
    )?;
    let scenario = Scenario::new(plant, circle, RunLength::Loops(2.0));
    let ckpt = std::env::temp_dir().join("flatquad-identify.ckpt");
    let report = identify_drag(&scenario, &IdentConfig::default(), Some(&ckpt), None)?;
    for row in report.trace.iter().step_by(5) {
        println!("iter {:>3}  cost {:.3e}  best {:?}", row.iteration, row.cost, row.best);
    }
    print!("{}", report.summary());
    println!("checkpoint: {}", ckpt.display());
    Ok(())
}
