//! Closed-loop and open-loop simulation runs, run logs and CSV output.
//!
//! The closed loop is event driven: high-level ticks at `i / f_hl`, inner
//! ticks at `k / f_in`, and the plant integrated between consecutive events
//! in equal substeps no longer than the configured substep. Event times come
//! from integer tick counters, so long runs do not drift.

use std::fmt::Write as _;

use crate::controller::{realized_thrust, CompensationConfig, Controller, ControllerGains, HoldMode};
use crate::dynamics::{step_rk4, ControlInput, PlantParams, QuadState};
use crate::error::{Error, Result};
use crate::flatness::flat_to_setpoint;
use crate::geom::Vec3;
use crate::identify::{tracking_stats, TrackingStats};
use crate::trajectory::{PhaseWarp, TrajectoryDef};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopRates {
    /// Position loop, Hz.
    pub high_level: f64,
    /// Body-rate loop, Hz.
    pub inner: f64,
    /// Largest plant integration step, s.
    pub substep: f64,
}

impl Default for LoopRates {
    fn default() -> Self {
        LoopRates { high_level: 55.0, inner: 4000.0, substep: 1e-4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunLength {
    Seconds(f64),
    /// Whole or fractional loops of a periodic trajectory.
    Loops(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StartMode {
    /// On the reference: position, velocity, attitude and body rates at t = 0.
    #[default]
    Reference,
    /// At rest at the reference position, level.
    Hover,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub plant: PlantParams,
    pub gains: ControllerGains,
    pub comp: CompensationConfig,
    pub rates: LoopRates,
    /// Measurement delay seen by the position loop, s.
    pub latency: f64,
    pub hold: HoldMode,
    pub trajectory: TrajectoryDef,
    pub warp: PhaseWarp,
    pub duration: RunLength,
    pub start: StartMode,
}

impl Scenario {
    /// Matched-model scenario with default gains and rates.
    pub fn new(plant: PlantParams, trajectory: TrajectoryDef, duration: RunLength) -> Self {
        Scenario {
            plant,
            gains: ControllerGains::default(),
            comp: CompensationConfig::with_drag(plant.drag),
            rates: LoopRates::default(),
            latency: 0.0,
            hold: HoldMode::default(),
            trajectory,
            warp: PhaseWarp::constant(),
            duration,
            start: StartMode::Reference,
        }
    }

    pub fn duration_seconds(&self) -> Result<f64> {
        let d = match self.duration {
            RunLength::Seconds(s) => s,
            RunLength::Loops(n) => {
                if self.warp != PhaseWarp::constant() {
                    return Err(range("loops", "needs a constant warp; give a duration instead"));
                }
                let period = self
                    .trajectory
                    .period()
                    .ok_or_else(|| range("loops", "trajectory is not periodic"))?;
                n * period
            }
        };
        if !(d > 0.0 && d.is_finite()) {
            return Err(range("duration", "must be positive"));
        }
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        self.plant.validate()?;
        self.gains.validate()?;
        self.warp.validate()?;
        if !self.comp.drag.is_valid() {
            return Err(range("comp_drag", "coefficients must be >= 0"));
        }
        let r = &self.rates;
        if !(r.high_level > 0.0 && r.inner > 0.0) {
            return Err(range("high_rate", "rates must be positive"));
        }
        if !(r.substep > 0.0 && r.substep <= 0.01) {
            return Err(range("substep", "must be in (0, 0.01]"));
        }
        if !(self.latency >= 0.0) {
            return Err(range("latency_ms", "must be >= 0"));
        }
        self.duration_seconds()?;
        Ok(())
    }

    fn initial_state(&self) -> Result<QuadState> {
        let fs = self.trajectory.sample(&self.warp, 0.0);
        Ok(match self.start {
            StartMode::Hover => QuadState::hover_at(fs.p),
            StartMode::Reference => {
                let sp = flat_to_setpoint(&fs, &self.plant.drag, &self.plant, None)?;
                QuadState { p: fs.p, v: fs.v, r: sp.r, w: sp.w }
            }
        })
    }
}

fn range(key: &str, reason: &str) -> Error {
    Error::Range { key: key.into(), reason: reason.into() }
}

/// One row per high-level tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub p_ref: Vec3,
    pub p: Vec3,
    pub v: Vec3,
    pub err_norm: f64,
    pub c_cmd: f64,
    /// Thrust the plant actually produced.
    pub c: f64,
    pub w: Vec3,
    pub w_ref: Vec3,
    pub degenerate: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLog {
    pub rows: Vec<LogRow>,
}

pub const CSV_HEADER: &str = "t,p_ref_x,p_ref_y,p_ref_z,p_x,p_y,p_z,v_x,v_y,v_z,err_norm,c_cmd,c,w_x,w_y,w_z,w_ref_x,w_ref_y,w_ref_z,degenerate";

impl RunLog {
    pub fn errors(&self) -> Vec<Vec3> {
        self.rows.iter().map(|r| r.p - r.p_ref).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 + self.rows.len() * 200);
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let mut first = true;
            let mut put = |x: f64| {
                if !first {
                    out.push(',');
                }
                first = false;
                out.push_str(&fmt_g9(x));
            };
            put(r.t);
            for v in [r.p_ref, r.p, r.v] {
                v.iter().for_each(|x| put(*x));
            }
            put(r.err_norm);
            put(r.c_cmd);
            put(r.c);
            for v in [r.w, r.w_ref] {
                v.iter().for_each(|x| put(*x));
            }
            let _ = writeln!(out, ",{}", r.degenerate as u8);
        }
        out
    }
}

/// C's `%.9g`.
pub fn fmt_g9(x: f64) -> String {
    const P: i32 = 9;
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.*e}", (P - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').unwrap_or((&sci, "0"));
    let exp: i32 = exp.parse().unwrap_or(0);
    if exp < -4 || exp >= P {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (P - 1 - exp).max(0) as usize;
        strip_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn blowup(t: f64, last: Option<&LogRow>, what: &str) -> Error {
    let ctx = match last {
        Some(r) => format!("{what}; last valid row t = {:.4}, p = ({:.4}, {:.4}, {:.4})", r.t, r.p.x, r.p.y, r.p.z),
        None => what.to_string(),
    };
    Error::NumericalBlowup { t, what: ctx }
}

fn advance(
    state: &QuadState,
    u: &ControlInput,
    plant: &PlantParams,
    t0: f64,
    t1: f64,
    max_step: f64,
    last: Option<&LogRow>,
) -> Result<QuadState> {
    let span = t1 - t0;
    if span <= 0.0 {
        return Ok(*state);
    }
    let n = (span / max_step - 1e-9).ceil().max(1.0) as usize;
    let h = span / n as f64;
    let mut s = *state;
    for i in 0..n {
        s = step_rk4(&s, u, plant, h).map_err(|e| match e {
            Error::NumericalBlowup { what, .. } => blowup(t0 + (i + 1) as f64 * h, last, &what),
            other => other,
        })?;
    }
    Ok(s)
}

/// Two-rate closed-loop run. Returns one log row per high-level tick
/// (`ceil(duration · f_hl)` rows) and the tracking statistics over them.
pub fn run_simulation(sc: &Scenario) -> Result<(RunLog, TrackingStats)> {
    sc.validate()?;
    let duration = sc.duration_seconds()?;
    let model = PlantParams { drag: sc.comp.drag, ..sc.plant };
    let mut ctl = Controller::new(sc.gains, sc.comp, model).with_latency(sc.latency).with_hold(sc.hold);
    let mut state = sc.initial_state()?;

    let f_hl = sc.rates.high_level;
    let f_in = sc.rates.inner;
    let n_hl = (duration * f_hl - 1e-9).ceil() as usize;
    let mut log = RunLog { rows: Vec::with_capacity(n_hl) };
    let (mut i, mut k) = (0usize, 0usize);
    let mut u = ControlInput::new(0.0, Vec3::zeros());
    let mut t = 0.0;
    const TIE: f64 = 1e-12;

    loop {
        let t_hl = if i < n_hl { i as f64 / f_hl } else { f64::INFINITY };
        let t_in = k as f64 / f_in;
        if t_hl.min(t_in) >= duration - TIE {
            break;
        }
        if t_hl <= t_in + TIE {
            let fs = sc.trajectory.sample(&sc.warp, t_hl);
            let hl = ctl.update_high_level(&state, &fs).map_err(|e| match e {
                Error::NumericalBlowup { what, .. } => blowup(t_hl, log.rows.last(), &what),
                other => other,
            })?;
            log.rows.push(LogRow {
                t: t_hl,
                p_ref: fs.p,
                p: state.p,
                v: state.v,
                err_norm: (state.p - fs.p).norm(),
                c_cmd: hl.c_cmd,
                c: realized_thrust(hl.c_cmd, &state, &sc.plant),
                w: state.w,
                w_ref: hl.setpoint.w,
                degenerate: hl.degenerate,
            });
            i += 1;
        }
        if t_in <= t_hl + TIE {
            ctl.observe(t_in, &state);
            u = ctl.update_inner(t_in, &state);
            k += 1;
        }
        let next_hl = if i < n_hl { i as f64 / f_hl } else { f64::INFINITY };
        let next = next_hl.min(k as f64 / f_in).min(duration);
        state = advance(&state, &u, &sc.plant, t, next, sc.rates.substep, log.rows.last())?;
        t = next;
    }

    let stats = tracking_stats(&log.errors())?;
    Ok((log, stats))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayReport {
    /// Largest ‖p − p_ref‖ over the control samples, m.
    pub max_err: f64,
    pub final_state: QuadState,
    pub samples: usize,
}

/// Drives the plant with flatness inputs `(c_cmd, τ)` alone, sampled every
/// `dt_ctrl` and linearly interpolated between samples (evaluated at each
/// substep midpoint). Starts on the reference.
pub fn replay_open_loop(
    def: &TrajectoryDef,
    warp: &PhaseWarp,
    plant: &PlantParams,
    dt_ctrl: f64,
    dt_sub: f64,
    duration: f64,
) -> Result<ReplayReport> {
    if !(dt_ctrl > 0.0 && dt_sub > 0.0 && duration > 0.0) {
        return Err(range("dt_ctrl", "steps and duration must be positive"));
    }
    let n = (duration / dt_ctrl).round() as usize;
    let mut fallback = None;
    let mut inputs = Vec::with_capacity(n + 1);
    let mut refs = Vec::with_capacity(n + 1);
    let mut state = None;
    for j in 0..=n {
        let fs = def.sample(warp, j as f64 * dt_ctrl);
        let sp = flat_to_setpoint(&fs, &plant.drag, plant, fallback.as_ref())?;
        fallback = Some(sp.r);
        state.get_or_insert(QuadState { p: fs.p, v: fs.v, r: sp.r, w: sp.w });
        refs.push(fs.p);
        inputs.push((sp.c_cmd, sp.tau));
    }
    let mut state = state.ok_or(Error::EmptyInput)?;
    let subs = (dt_ctrl / dt_sub - 1e-9).ceil().max(1.0) as usize;
    let h = dt_ctrl / subs as f64;
    let mut max_err: f64 = 0.0;
    for j in 0..n {
        let (c0, t0) = inputs[j];
        let (c1, t1) = inputs[j + 1];
        for m in 0..subs {
            let w = (m as f64 + 0.5) / subs as f64;
            let u = ControlInput::new(c0 + (c1 - c0) * w, t0 + (t1 - t0) * w);
            state = step_rk4(&state, &u, plant, h)?;
        }
        max_err = max_err.max((state.p - refs[j + 1]).norm());
    }
    Ok(ReplayReport { max_err, final_state: state, samples: n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{DragParams, GRAVITY};
    use crate::trajectory::HeadingMode;

    #[test]
    fn g9_matches_printf() {
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (-2.5, "-2.5"),
            (9.81, "9.81"),
            (1.0 / 3.0, "0.333333333"),
            (123456789.0, "123456789"),
            (1234567890.0, "1.23456789e+09"),
            (1e-5, "1e-05"),
            (0.0001, "0.0001"),
            (1.5e-7, "1.5e-07"),
            (2.0f64.sqrt() * 1e20, "1.41421356e+20"),
            (0.018181818181818, "0.0181818182"),
            (99999999.95, "100000000"),
        ];
        for (x, s) in cases {
            assert_eq!(fmt_g9(x), s, "{x}");
        }
    }

    fn circle() -> TrajectoryDef {
        TrajectoryDef::new(
            crate::trajectory::TrajectoryKind::Circle { radius: 1.8 },
            Vec3::new(0.0, 0.0, 1.5),
            4.0,
            HeadingMode::Constant(0.0),
        )
        .unwrap()
    }

    #[test]
    fn hover_stays_put() {
        let sc = Scenario::new(PlantParams::default(), TrajectoryDef::hover(Vec3::new(0.0, 0.0, 1.0)), RunLength::Seconds(5.0));
        let (log, stats) = run_simulation(&sc).unwrap();
        assert_eq!(log.rows.len(), (5.0f64 * 55.0).ceil() as usize);
        assert!(stats.e_abs < 1e-6, "{stats:?}");
        assert!((log.rows[10].c_cmd - GRAVITY).abs() < 1e-9);
    }

    #[test]
    fn rows_are_time_monotone_and_counted() {
        let mut sc = Scenario::new(PlantParams::default(), circle(), RunLength::Seconds(1.03));
        sc.rates.high_level = 50.0;
        let (log, _) = run_simulation(&sc).unwrap();
        assert_eq!(log.rows.len(), 52);
        assert!(log.rows.windows(2).all(|w| w[1].t > w[0].t));
        let csv = log.to_csv();
        assert_eq!(csv.lines().count(), 53);
        assert!(csv.lines().all(|l| l.split(',').count() == 20));
    }

    #[test]
    fn matched_circle_tracks_closely() {
        let plant = PlantParams::with_drag(DragParams::planar(0.544, 0.386));
        let sc = Scenario::new(plant, circle(), RunLength::Loops(2.0));
        let (_, stats) = run_simulation(&sc).unwrap();
        assert!(stats.e_abs < 1e-3, "{stats:?}");
    }

    #[test]
    fn replay_follows_circle() {
        let plant = PlantParams::with_drag(DragParams::planar(0.544, 0.386));
        let r = replay_open_loop(&circle(), &PhaseWarp::constant(), &plant, 1e-3, 1e-4, 2.0).unwrap();
        assert!(r.max_err < 1e-3, "{r:?}");
    }

    #[test]
    fn blowup_reports_context() {
        let mut sc = Scenario::new(PlantParams::default(), circle(), RunLength::Seconds(3.0));
        sc.gains.krate_p = Vec3::repeat(1e7);
        match run_simulation(&sc) {
            Err(Error::NumericalBlowup { what, .. }) => assert!(what.contains("last valid row"), "{what}"),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }
}
