//! Peak thrust and body rates of the drag-free circle and lemniscate, for a
//! fixed heading and for the heading that never yaws the body.

use flatquad::dynamics::GRAVITY;
use flatquad::geom::Vec3;
use flatquad::trajectory::{nominal_stats, HeadingMode, PhaseWarp, TrajectoryDef, TrajectoryKind};

fn main() -> flatquad::Result<()> {
    let center = Vec3::new(0.0, 0.0, 1.5);
    let kinds = [
        ("circle r=1.8 m, 4 m/s", TrajectoryKind::Circle { radius: 1.8 }),
        ("lemniscate A=2 m, 4 m/s peak", TrajectoryKind::Lemniscate { amplitude: 2.0 }),
    ];
    for (name, kind) in kinds {
        for (hname, heading) in [("psi = 0", HeadingMode::Constant(0.0)), ("yaw-free", HeadingMode::YawFree { psi0: 0.0 })] {
            let def = TrajectoryDef::new(kind.clone(), center, 4.0, heading)?;
            let period = def.period().expect("periodic");
            let s = nominal_stats(&def, &PhaseWarp::constant(), period, GRAVITY)?;
            println!("{name:<30} {hname:<9} max c = {:.2} m/s^2, max |w| = {:.1} deg/s", s.max_thrust, s.max_bodyrate_deg());
        }
    }
    Ok(())
}
