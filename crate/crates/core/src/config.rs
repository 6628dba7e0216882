//! Experiment configuration: an INI-style text format.
//!
//! ```text
//! # comment
//! [section]
//! key = value        # trailing comment
//! ```
//!
//! Sections are `plant`, `controller`, `trajectory`, `run` and `identify`,
//! all optional. Vectors are comma separated. Unknown sections or keys, and
//! keys that do not apply to the chosen trajectory kind, are errors. See
//! `docs/config.md` for every key and its default.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::controller::{CompensationConfig, ControllerGains, HoldMode};
use crate::dynamics::{DragParams, GyroTorqueModel, PlantParams};
use crate::error::{Error, Result};
use crate::geom::{Mat3, Vec3};
use crate::identify::{DragParam, IdentConfig};
use crate::sim::{LoopRates, RunLength, Scenario, StartMode};
use crate::trajectory::{HeadingMode, PhaseWarp, TrajectoryDef, TrajectoryKind, WarpMode};

const SECTIONS: [(&str, &[&str]); 5] = [
    ("plant", &["g", "dx", "dy", "dz", "kh", "inertia", "a", "b", "tau_g"]),
    (
        "controller",
        &[
            "kpos", "kvel", "att_time_const", "krate_p", "krate_d", "high_rate", "inner_rate", "substep",
            "latency_ms", "hold", "compensation", "comp_drag", "ff_rates", "ff_accel",
        ],
    ),
    (
        "trajectory",
        &[
            "kind", "center", "radius", "amplitude", "speed", "heading", "psi0", "warp", "v_start", "v_end",
            "ramp_duration",
        ],
    ),
    ("run", &["duration", "loops", "start", "output", "seed", "check_samples"]),
    (
        "identify",
        &[
            "free", "start_dx", "start_dy", "start_dz", "start_kh", "scale", "loops", "diameter_tol", "cost_tol",
            "max_iterations", "trace", "checkpoint",
        ],
    ),
];

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    key: String,
    value: String,
    line: usize,
}

/// Syntax-level view of a config file: sections of `key = value` entries
/// with their line numbers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    sections: Vec<(String, Vec<Entry>)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut raw = RawConfig::default();
        let mut current: Option<usize> = None;
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            let line = match line.find('#') {
                Some(k) => &line[..k],
                None => line,
            };
            let line = line.trim();
            if line.is_empty() || line.starts_with(';') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| parse_err(n, "unterminated section header"))?
                    .trim();
                if !SECTIONS.iter().any(|(s, _)| *s == name) {
                    return Err(parse_err(n, &format!("unknown section [{name}]")));
                }
                if raw.sections.iter().any(|(s, _)| s == name) {
                    return Err(parse_err(n, &format!("duplicate section [{name}]")));
                }
                raw.sections.push((name.to_string(), Vec::new()));
                current = Some(raw.sections.len() - 1);
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| parse_err(n, "expected `key = value`"))?;
            let (key, value) = (key.trim(), value.trim());
            let idx = current.ok_or_else(|| parse_err(n, "key outside of any section"))?;
            let (section, entries) = &mut raw.sections[idx];
            let known = SECTIONS.iter().find(|(s, _)| s == section).map(|(_, k)| *k).unwrap_or(&[]);
            if !known.contains(&key) {
                return Err(parse_err(n, &format!("unknown key `{key}` in [{section}]")));
            }
            if entries.iter().any(|e| e.key == key) {
                return Err(parse_err(n, &format!("duplicate key `{key}`")));
            }
            if value.is_empty() {
                return Err(parse_err(n, &format!("empty value for `{key}`")));
            }
            entries.push(Entry { key: key.into(), value: value.into(), line: n });
        }
        Ok(raw)
    }

    /// Overrides `section.key` (used by sweeps). The key must be known.
    pub fn set(&mut self, path: &str, value: &str) -> Result<()> {
        let (section, key) = path
            .split_once('.')
            .ok_or_else(|| Error::Range { key: path.into(), reason: "expected `section.key`".into() })?;
        let known = SECTIONS
            .iter()
            .find(|(s, _)| *s == section)
            .ok_or_else(|| Error::Range { key: path.into(), reason: "unknown section".into() })?;
        if !known.1.contains(&key) {
            return Err(Error::Range { key: path.into(), reason: "unknown key".into() });
        }
        let idx = match self.sections.iter().position(|(s, _)| s == section) {
            Some(i) => i,
            None => {
                self.sections.push((section.into(), Vec::new()));
                self.sections.len() - 1
            }
        };
        let entries = &mut self.sections[idx].1;
        match entries.iter_mut().find(|e| e.key == key) {
            Some(e) => e.value = value.into(),
            None => entries.push(Entry { key: key.into(), value: value.into(), line: 0 }),
        }
        Ok(())
    }

    fn section(&self, name: &str) -> Section<'_> {
        let entries = self.sections.iter().find(|(s, _)| s == name).map(|(_, e)| e.as_slice()).unwrap_or(&[]);
        Section { entries, used: std::cell::RefCell::new(Vec::new()) }
    }
}

fn parse_err(line: usize, reason: &str) -> Error {
    Error::Parse { line, reason: reason.into() }
}

fn range(key: &str, reason: &str) -> Error {
    Error::Range { key: key.into(), reason: reason.into() }
}

struct Section<'a> {
    entries: &'a [Entry],
    used: std::cell::RefCell<Vec<&'a str>>,
}

impl<'a> Section<'a> {
    fn get(&self, key: &str) -> Option<&'a Entry> {
        let e = self.entries.iter().find(|e| e.key == key)?;
        self.used.borrow_mut().push(&e.key);
        Some(e)
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            Some(e) => parse_f64(e),
            None => Ok(default),
        }
    }

    fn f64_req(&self, key: &str) -> Result<f64> {
        let e = self.get(key).ok_or_else(|| Error::MissingKey(key.into()))?;
        parse_f64(e)
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(key)
            .map(|e| e.value.split(',').map(|v| parse_num(v.trim(), e)).collect::<Result<Vec<_>>>())
            .transpose()
    }

    /// One value repeated, or three.
    fn vec3_or(&self, key: &str, default: Vec3) -> Result<Vec3> {
        match self.list(key)? {
            None => Ok(default),
            Some(v) if v.len() == 1 => Ok(Vec3::repeat(v[0])),
            Some(v) if v.len() == 3 => Ok(Vec3::new(v[0], v[1], v[2])),
            Some(_) => Err(parse_err(self.line(key), &format!("`{key}` needs 1 or 3 values"))),
        }
    }

    /// Three values (diagonal) or nine (row major).
    fn mat3_or(&self, key: &str, default: Mat3) -> Result<Mat3> {
        match self.list(key)? {
            None => Ok(default),
            Some(v) if v.len() == 3 => Ok(Mat3::from_diagonal(&Vec3::new(v[0], v[1], v[2]))),
            Some(v) if v.len() == 9 => Ok(Mat3::from_row_slice(&v)),
            Some(_) => Err(parse_err(self.line(key), &format!("`{key}` needs 3 or 9 values"))),
        }
    }

    fn word(&self, key: &str) -> Option<(&'a str, usize)> {
        self.get(key).map(|e| (e.value.as_str(), e.line))
    }

    fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.word(key) {
            None => Ok(default),
            Some(("true" | "on" | "yes", _)) => Ok(true),
            Some(("false" | "off" | "no", _)) => Ok(false),
            Some((v, line)) => Err(parse_err(line, &format!("`{key}`: expected true/false, got `{v}`"))),
        }
    }

    fn line(&self, key: &str) -> usize {
        self.entries.iter().find(|e| e.key == key).map(|e| e.line).unwrap_or(0)
    }

    /// Errors on any present key that was not read.
    fn finish(&self, context: &str) -> Result<()> {
        let used = self.used.borrow();
        match self.entries.iter().find(|e| !used.contains(&e.key.as_str())) {
            Some(e) => Err(parse_err(e.line, &format!("`{}` does not apply {context}", e.key))),
            None => Ok(()),
        }
    }
}

fn parse_num(v: &str, e: &Entry) -> Result<f64> {
    let x: f64 = v
        .parse()
        .map_err(|_| parse_err(e.line, &format!("`{}`: `{v}` is not a number", e.key)))?;
    if !x.is_finite() {
        return Err(parse_err(e.line, &format!("`{}` must be finite", e.key)));
    }
    Ok(x)
}

fn parse_f64(e: &Entry) -> Result<f64> {
    parse_num(&e.value, e)
}

fn non_neg(key: &str, x: f64) -> Result<f64> {
    if x >= 0.0 {
        Ok(x)
    } else {
        Err(range(key, "must be >= 0"))
    }
}

fn positive(key: &str, x: f64) -> Result<f64> {
    if x > 0.0 {
        Ok(x)
    } else {
        Err(range(key, "must be positive"))
    }
}

fn non_neg3(key: &str, v: Vec3) -> Result<Vec3> {
    if v.iter().all(|x| *x >= 0.0) {
        Ok(v)
    } else {
        Err(range(key, "must be >= 0"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    /// CSV destination for `simulate`.
    pub output: Option<PathBuf>,
    /// Seed for randomized checks.
    pub seed: u64,
    /// Random samples per drag setting in `flatness-check`.
    pub check_samples: usize,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings { output: None, seed: 0, check_samples: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentSettings {
    pub config: IdentConfig,
    pub trace: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub run: RunSettings,
    pub identify: IdentSettings,
}

/// Parses and validates a config file.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    ExperimentConfig::from_raw(&RawConfig::parse(text)?)
}

impl ExperimentConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let plant = parse_plant(&raw.section("plant"))?;
        let ctl = raw.section("controller");
        let (gains, comp, rates, latency, hold) = parse_controller(&ctl, &plant)?;
        let (trajectory, warp) = parse_trajectory(&raw.section("trajectory"))?;
        let (duration, start, run) = parse_run(&raw.section("run"))?;
        let identify = parse_identify(&raw.section("identify"))?;
        let scenario = Scenario { plant, gains, comp, rates, latency, hold, trajectory, warp, duration, start };
        scenario.validate()?;
        identify.config.validate()?;
        Ok(ExperimentConfig { scenario, run, identify })
    }

    /// Canonical text form; `parse_config(cfg.to_ini())` gives `cfg` back.
    pub fn to_ini(&self) -> String {
        let sc = &self.scenario;
        let mut o = String::new();
        let p = &sc.plant;
        let _ = writeln!(o, "[plant]");
        let _ = writeln!(o, "g = {:?}", p.g);
        let _ = writeln!(o, "dx = {:?}\ndy = {:?}\ndz = {:?}\nkh = {:?}", p.drag.dx, p.drag.dy, p.drag.dz, p.drag.kh);
        let _ = writeln!(o, "inertia = {}", mat(&p.inertia));
        let _ = writeln!(o, "a = {}", mat(&p.a));
        let _ = writeln!(o, "b = {}", mat(&p.b));
        let _ = writeln!(o, "tau_g = zero");

        let g = &sc.gains;
        let _ = writeln!(o, "\n[controller]");
        let _ = writeln!(o, "kpos = {}\nkvel = {}", vec3(&g.kpos), vec3(&g.kvel));
        let _ = writeln!(o, "att_time_const = {:?}", g.att_time_const);
        let _ = writeln!(o, "krate_p = {}\nkrate_d = {}", vec3(&g.krate_p), vec3(&g.krate_d));
        let _ = writeln!(o, "high_rate = {:?}\ninner_rate = {:?}", sc.rates.high_level, sc.rates.inner);
        let _ = writeln!(o, "substep = {:?}", sc.rates.substep);
        let _ = writeln!(o, "latency_ms = {:?}", sc.latency * 1e3);
        let hold = match sc.hold {
            HoldMode::Zero => "zero",
            HoldMode::FirstOrder => "first-order",
        };
        let _ = writeln!(o, "hold = {hold}");
        let d = &sc.comp.drag;
        let _ = writeln!(o, "compensation = custom");
        let _ = writeln!(o, "comp_drag = {:?}, {:?}, {:?}, {:?}", d.dx, d.dy, d.dz, d.kh);
        let _ = writeln!(o, "ff_rates = {}\nff_accel = {}", sc.comp.enable_ff_rates, sc.comp.enable_ff_accel);

        let t = &sc.trajectory;
        let _ = writeln!(o, "\n[trajectory]");
        match &t.kind {
            TrajectoryKind::Hover => {
                let _ = writeln!(o, "kind = hover");
            }
            TrajectoryKind::Circle { radius } => {
                let _ = writeln!(o, "kind = circle\nradius = {radius:?}\nspeed = {:?}", t.speed);
            }
            TrajectoryKind::Lemniscate { amplitude } => {
                let _ = writeln!(o, "kind = lemniscate\namplitude = {amplitude:?}\nspeed = {:?}", t.speed);
            }
            TrajectoryKind::Vertical { amplitude } => {
                let _ = writeln!(o, "kind = vertical\namplitude = {amplitude:?}\nspeed = {:?}", t.speed);
            }
            TrajectoryKind::CustomPhase(_) => {
                let _ = writeln!(o, "# custom-phase paths cannot be written to a config file");
            }
        }
        let _ = writeln!(o, "center = {}", vec3(&t.center));
        match t.heading {
            HeadingMode::Constant(psi) => {
                let _ = writeln!(o, "heading = {psi:?}");
            }
            HeadingMode::Tangent => {
                let _ = writeln!(o, "heading = tangent");
            }
            HeadingMode::YawFree { psi0 } => {
                let _ = writeln!(o, "heading = yaw-free\npsi0 = {psi0:?}");
            }
        }
        match sc.warp.mode {
            WarpMode::Constant => {
                let _ = writeln!(o, "warp = constant");
            }
            WarpMode::LinearRamp => {
                let w = &sc.warp;
                let _ = writeln!(
                    o,
                    "warp = ramp\nv_start = {:?}\nv_end = {:?}\nramp_duration = {:?}",
                    w.v_start, w.v_end, w.ramp_duration
                );
            }
        }

        let _ = writeln!(o, "\n[run]");
        match sc.duration {
            RunLength::Seconds(s) => {
                let _ = writeln!(o, "duration = {s:?}");
            }
            RunLength::Loops(n) => {
                let _ = writeln!(o, "loops = {n:?}");
            }
        }
        let start = match sc.start {
            StartMode::Reference => "reference",
            StartMode::Hover => "hover",
        };
        let _ = writeln!(o, "start = {start}");
        if let Some(out) = &self.run.output {
            let _ = writeln!(o, "output = {}", out.display());
        }
        let _ = writeln!(o, "seed = {}\ncheck_samples = {}", self.run.seed, self.run.check_samples);

        let ic = &self.identify.config;
        let _ = writeln!(o, "\n[identify]");
        let names: Vec<&str> = ic.free.iter().map(|p| p.name()).collect();
        let _ = writeln!(o, "free = {}", names.join(", "));
        let b = &ic.base;
        let _ = writeln!(o, "start_dx = {:?}\nstart_dy = {:?}\nstart_dz = {:?}\nstart_kh = {:?}", b.dx, b.dy, b.dz, b.kh);
        let _ = writeln!(o, "scale = {:?}\nloops = {:?}", ic.scale, ic.loops);
        let _ = writeln!(o, "diameter_tol = {:?}\ncost_tol = {:?}", ic.diameter_tol, ic.cost_tol);
        let _ = writeln!(o, "max_iterations = {}", ic.max_iterations);
        if let Some(p) = &self.identify.trace {
            let _ = writeln!(o, "trace = {}", p.display());
        }
        if let Some(p) = &self.identify.checkpoint {
            let _ = writeln!(o, "checkpoint = {}", p.display());
        }
        o
    }
}

fn vec3(v: &Vec3) -> String {
    format!("{:?}, {:?}, {:?}", v.x, v.y, v.z)
}

fn mat(m: &Mat3) -> String {
    let diag = (0..3).all(|i| (0..3).all(|j| i == j || m[(i, j)] == 0.0));
    if diag {
        vec3(&m.diagonal())
    } else {
        let vals: Vec<String> = (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| format!("{:?}", m[(i, j)])).collect();
        vals.join(", ")
    }
}

fn parse_plant(s: &Section) -> Result<PlantParams> {
    let d = PlantParams::default();
    let drag = DragParams {
        dx: non_neg("dx", s.f64_or("dx", 0.0)?)?,
        dy: non_neg("dy", s.f64_or("dy", 0.0)?)?,
        dz: non_neg("dz", s.f64_or("dz", 0.0)?)?,
        kh: non_neg("kh", s.f64_or("kh", 0.0)?)?,
    };
    let tau_g = match s.word("tau_g") {
        None | Some(("zero", _)) => GyroTorqueModel::Zero,
        Some((v, line)) => return Err(parse_err(line, &format!("`tau_g`: unknown model `{v}`"))),
    };
    let plant = PlantParams {
        drag,
        inertia: s.mat3_or("inertia", d.inertia)?,
        a: s.mat3_or("a", d.a)?,
        b: s.mat3_or("b", d.b)?,
        tau_g,
        g: positive("g", s.f64_or("g", d.g)?)?,
    };
    s.finish("in [plant]")?;
    plant.validate()?;
    Ok(plant)
}

type ControllerParts = (ControllerGains, CompensationConfig, LoopRates, f64, HoldMode);

fn parse_controller(s: &Section, plant: &PlantParams) -> Result<ControllerParts> {
    let d = ControllerGains::default();
    let gains = ControllerGains {
        kpos: non_neg3("kpos", s.vec3_or("kpos", d.kpos)?)?,
        kvel: non_neg3("kvel", s.vec3_or("kvel", d.kvel)?)?,
        att_time_const: positive("att_time_const", s.f64_or("att_time_const", d.att_time_const)?)?,
        krate_p: non_neg3("krate_p", s.vec3_or("krate_p", d.krate_p)?)?,
        krate_d: non_neg3("krate_d", s.vec3_or("krate_d", d.krate_d)?)?,
    };
    let r = LoopRates::default();
    let rates = LoopRates {
        high_level: positive("high_rate", s.f64_or("high_rate", r.high_level)?)?,
        inner: positive("inner_rate", s.f64_or("inner_rate", r.inner)?)?,
        substep: positive("substep", s.f64_or("substep", r.substep)?)?,
    };
    let latency = non_neg("latency_ms", s.f64_or("latency_ms", 0.0)?)? * 1e-3;
    let hold = match s.word("hold") {
        None => HoldMode::default(),
        Some(("zero", _)) => HoldMode::Zero,
        Some(("first-order", _)) => HoldMode::FirstOrder,
        Some((v, line)) => return Err(parse_err(line, &format!("`hold`: expected zero or first-order, got `{v}`"))),
    };
    let drag = match s.word("compensation") {
        None | Some(("matched", _)) => plant.drag,
        Some(("none", _)) => DragParams::ZERO,
        Some(("custom", line)) => {
            let v = s.list("comp_drag")?.ok_or_else(|| Error::MissingKey("comp_drag".into()))?;
            if v.len() != 4 {
                return Err(parse_err(line, "`comp_drag` needs dx, dy, dz, kh"));
            }
            let d = DragParams::new(v[0], v[1], v[2], v[3]);
            if !d.is_valid() {
                return Err(range("comp_drag", "coefficients must be >= 0"));
            }
            d
        }
        Some((v, line)) => {
            return Err(parse_err(line, &format!("`compensation`: expected matched, none or custom, got `{v}`")))
        }
    };
    let comp = CompensationConfig {
        drag,
        enable_ff_rates: s.bool_or("ff_rates", true)?,
        enable_ff_accel: s.bool_or("ff_accel", true)?,
    };
    s.finish("in [controller] (comp_drag needs compensation = custom)")?;
    Ok((gains, comp, rates, latency, hold))
}

fn parse_trajectory(s: &Section) -> Result<(TrajectoryDef, PhaseWarp)> {
    let (kind_name, line) = s.word("kind").unwrap_or(("hover", 0));
    let kind = match kind_name {
        "hover" => TrajectoryKind::Hover,
        "circle" => TrajectoryKind::Circle { radius: positive("radius", s.f64_req("radius")?)? },
        "lemniscate" => TrajectoryKind::Lemniscate { amplitude: positive("amplitude", s.f64_req("amplitude")?)? },
        "vertical" => TrajectoryKind::Vertical { amplitude: positive("amplitude", s.f64_req("amplitude")?)? },
        other => return Err(parse_err(line, &format!("`kind`: unknown trajectory `{other}`"))),
    };
    let warp = match s.word("warp") {
        None | Some(("constant", _)) => PhaseWarp::constant(),
        Some(("ramp", _)) => PhaseWarp::ramp(
            non_neg("v_start", s.f64_or("v_start", 0.0)?)?,
            non_neg("v_end", s.f64_req("v_end")?)?,
            positive("ramp_duration", s.f64_req("ramp_duration")?)?,
        ),
        Some((v, line)) => return Err(parse_err(line, &format!("`warp`: expected constant or ramp, got `{v}`"))),
    };
    let speed = match (&kind, warp.mode) {
        (TrajectoryKind::Hover, _) => 0.0,
        // ramps carry their own speeds; `speed` is optional then
        (_, WarpMode::LinearRamp) => non_neg("speed", s.f64_or("speed", warp.v_end)?)?,
        _ => non_neg("speed", s.f64_req("speed")?)?,
    };
    let center = s.vec3_or("center", Vec3::new(0.0, 0.0, 1.0))?;
    let heading = match s.word("heading") {
        None => HeadingMode::Constant(0.0),
        Some(("tangent", _)) => HeadingMode::Tangent,
        Some(("yaw-free", _)) => HeadingMode::YawFree { psi0: s.f64_or("psi0", 0.0)? },
        Some((_, _)) => HeadingMode::Constant(s.f64_req("heading")?),
    };
    s.finish(&format!("to kind = {kind_name} with these heading/warp settings"))?;
    warp.validate()?;
    Ok((TrajectoryDef::new(kind, center, speed, heading)?, warp))
}

fn parse_run(s: &Section) -> Result<(RunLength, StartMode, RunSettings)> {
    let duration = match (s.get("duration"), s.get("loops")) {
        (Some(_), Some(e)) => return Err(parse_err(e.line, "give either `duration` or `loops`, not both")),
        (Some(e), None) => RunLength::Seconds(positive("duration", parse_f64(e)?)?),
        (None, Some(e)) => RunLength::Loops(positive("loops", parse_f64(e)?)?),
        (None, None) => return Err(Error::MissingKey("duration".into())),
    };
    let start = match s.word("start") {
        None | Some(("reference", _)) => StartMode::Reference,
        Some(("hover", _)) => StartMode::Hover,
        Some((v, line)) => return Err(parse_err(line, &format!("`start`: expected reference or hover, got `{v}`"))),
    };
    let seed = match s.get("seed") {
        None => 0,
        Some(e) => e.value.parse().map_err(|_| parse_err(e.line, "`seed` must be a non-negative integer"))?,
    };
    let check_samples = match s.get("check_samples") {
        None => 1000,
        Some(e) => e
            .value
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| range("check_samples", "must be a positive integer"))?,
    };
    let output = s.word("output").map(|(v, _)| PathBuf::from(v));
    s.finish("in [run]")?;
    Ok((duration, start, RunSettings { output, seed, check_samples }))
}

fn parse_identify(s: &Section) -> Result<IdentSettings> {
    let d = IdentConfig::default();
    let free = match s.get("free") {
        None => d.free.clone(),
        Some(e) => {
            let mut out = Vec::new();
            for name in e.value.split(',').map(str::trim) {
                let p = DragParam::parse(name)
                    .ok_or_else(|| parse_err(e.line, &format!("`free`: unknown coefficient `{name}`")))?;
                if out.contains(&p) {
                    return Err(parse_err(e.line, &format!("`free`: `{name}` listed twice")));
                }
                out.push(p);
            }
            out
        }
    };
    let base = DragParams {
        dx: non_neg("start_dx", s.f64_or("start_dx", 0.0)?)?,
        dy: non_neg("start_dy", s.f64_or("start_dy", 0.0)?)?,
        dz: non_neg("start_dz", s.f64_or("start_dz", 0.0)?)?,
        kh: non_neg("start_kh", s.f64_or("start_kh", 0.0)?)?,
    };
    let max_iterations = match s.get("max_iterations") {
        None => d.max_iterations,
        Some(e) => e.value.parse().map_err(|_| parse_err(e.line, "`max_iterations` must be an integer"))?,
    };
    let config = IdentConfig {
        free,
        base,
        scale: positive("scale", s.f64_or("scale", d.scale)?)?,
        loops: s.f64_or("loops", d.loops)?,
        diameter_tol: positive("diameter_tol", s.f64_or("diameter_tol", d.diameter_tol)?)?,
        cost_tol: positive("cost_tol", s.f64_or("cost_tol", d.cost_tol)?)?,
        max_iterations,
    };
    let trace = s.word("trace").map(|(v, _)| PathBuf::from(v));
    let checkpoint = s.word("checkpoint").map(|(v, _)| PathBuf::from(v));
    s.finish("in [identify]")?;
    Ok(IdentSettings { config, trace, checkpoint })
}
