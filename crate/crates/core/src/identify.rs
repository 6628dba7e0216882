//! Tracking metrics and drag-coefficient identification.
//!
//! Identification wraps a closed-loop run in a cost (the RMS position error
//! while the controller uses candidate coefficients) and minimizes it with a
//! plain Nelder-Mead simplex. The simplex can be checkpointed after every
//! iteration and resumed bit-exactly.

use std::fmt::Write as _;
use std::path::Path;

use log::{debug, info, warn};

use crate::dynamics::DragParams;
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::sim::{run_simulation, Scenario};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingStats {
    /// RMS of ‖e‖, m.
    pub e_abs: f64,
    pub max_err: f64,
    /// Population standard deviation of ‖e‖.
    pub std_err: f64,
    pub n_samples: usize,
}

pub fn tracking_stats(errors: &[Vec3]) -> Result<TrackingStats> {
    let norms: Vec<f64> = errors.iter().map(|e| e.norm()).collect();
    stats_from_norms(&norms)
}

/// Same as [`tracking_stats`] from precomputed error norms.
pub fn stats_from_norms(norms: &[f64]) -> Result<TrackingStats> {
    if norms.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = norms.len() as f64;
    let mean = norms.iter().sum::<f64>() / n;
    let mean_sq = norms.iter().map(|x| x * x).sum::<f64>() / n;
    let var = norms.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    Ok(TrackingStats {
        e_abs: mean_sq.sqrt(),
        max_err: norms.iter().copied().fold(0.0, f64::max),
        std_err: var.sqrt(),
        n_samples: norms.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DragParam {
    Dx,
    Dy,
    Dz,
    Kh,
}

impl DragParam {
    pub fn name(self) -> &'static str {
        match self {
            DragParam::Dx => "dx",
            DragParam::Dy => "dy",
            DragParam::Dz => "dz",
            DragParam::Kh => "kh",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "dx" => Some(DragParam::Dx),
            "dy" => Some(DragParam::Dy),
            "dz" => Some(DragParam::Dz),
            "kh" => Some(DragParam::Kh),
            _ => None,
        }
    }

    /// Search bounds: 1/s for drag, 1/m for `kh`.
    pub fn bounds(self) -> (f64, f64) {
        match self {
            DragParam::Kh => (0.0, 0.1),
            _ => (0.0, 2.0),
        }
    }

    fn get(self, d: &DragParams) -> f64 {
        match self {
            DragParam::Dx => d.dx,
            DragParam::Dy => d.dy,
            DragParam::Dz => d.dz,
            DragParam::Kh => d.kh,
        }
    }

    fn set(self, d: &mut DragParams, v: f64) {
        match self {
            DragParam::Dx => d.dx = v,
            DragParam::Dy => d.dy = v,
            DragParam::Dz => d.dz = v,
            DragParam::Kh => d.kh = v,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentConfig {
    /// Free coefficients; the rest stay at `base`.
    pub free: Vec<DragParam>,
    /// Values of the frozen coefficients and starting values of the free ones.
    pub base: DragParams,
    /// Axis offset of the initial simplex.
    pub scale: f64,
    /// Trajectory loops flown per evaluation.
    pub loops: f64,
    pub diameter_tol: f64,
    pub cost_tol: f64,
    pub max_iterations: usize,
}

impl Default for IdentConfig {
    fn default() -> Self {
        IdentConfig {
            free: vec![DragParam::Dx, DragParam::Dy],
            base: DragParams::ZERO,
            scale: 0.1,
            loops: 2.0,
            diameter_tol: 1e-3,
            cost_tol: 1e-5,
            max_iterations: 200,
        }
    }
}

impl IdentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: &str| Err(Error::Range { key: key.into(), reason: reason.into() });
        if self.free.is_empty() {
            return bad("free", "need at least one free coefficient");
        }
        if !(self.loops >= 1.0) {
            return bad("loops", "must be >= 1");
        }
        if !(self.scale > 0.0) {
            return bad("scale", "must be positive");
        }
        if !(self.diameter_tol > 0.0) {
            return bad("diameter_tol", "must be positive");
        }
        if !(self.cost_tol > 0.0) {
            return bad("cost_tol", "must be positive");
        }
        if !self.base.is_valid() {
            return bad("initial", "coefficients must be >= 0");
        }
        Ok(())
    }

    pub fn initial_point(&self) -> Vec<f64> {
        self.free.iter().map(|p| p.get(&self.base)).collect()
    }

    /// Full coefficient set for point `x`, clamped to bounds. The flag is set
    /// when clamping changed something.
    pub fn to_drag(&self, x: &[f64]) -> (DragParams, bool) {
        let mut d = self.base;
        let mut clamped = false;
        for (p, v) in self.free.iter().zip(x) {
            let (lo, hi) = p.bounds();
            let c = v.clamp(lo, hi);
            clamped |= c != *v;
            p.set(&mut d, c);
        }
        (d, clamped)
    }
}

/// Cost returned for runs that blow up.
pub const BLOWUP_COST: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub cost: f64,
    pub params: DragParams,
    pub clamped: bool,
    pub blew_up: bool,
}

/// E_abs of `loops` trajectory loops with the controller compensating
/// `params` (clamped to bounds). Plant drag stays whatever the scenario says.
pub fn evaluate_candidate(params: &DragParams, scenario: &Scenario, loops: f64) -> Result<Evaluation> {
    let mut p = *params;
    let mut clamped = false;
    for k in [DragParam::Dx, DragParam::Dy, DragParam::Dz, DragParam::Kh] {
        let (lo, hi) = k.bounds();
        let v = k.get(&p);
        let c = if v.is_nan() { lo } else { v.clamp(lo, hi) };
        clamped |= c != v;
        k.set(&mut p, c);
    }
    if clamped {
        debug!("candidate {params:?} clamped to {p:?}");
    }
    let mut sc = scenario.clone();
    sc.comp.drag = p;
    sc.duration = crate::sim::RunLength::Loops(loops);
    match run_simulation(&sc) {
        Ok((_, stats)) => Ok(Evaluation { cost: stats.e_abs, params: p, clamped, blew_up: false }),
        Err(Error::NumericalBlowup { t, what }) => {
            warn!("candidate {p:?} blew up at t = {t}: {what}");
            Ok(Evaluation { cost: BLOWUP_COST, params: p, clamped, blew_up: true })
        }
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    pub diameter_tol: f64,
    pub cost_tol: f64,
    pub max_iterations: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            diameter_tol: 1e-3,
            cost_tol: 1e-5,
            max_iterations: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub evaluations: usize,
    pub best: Vec<f64>,
    pub cost: f64,
    pub diameter: f64,
    pub spread: f64,
}

/// Simplex plus bookkeeping; everything needed to resume.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexState {
    /// `(point, cost)`, sorted by cost.
    pub vertices: Vec<(Vec<f64>, f64)>,
    pub iteration: usize,
    pub evaluations: usize,
    pub trace: Vec<TraceRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    MaxIterations,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::Converged => "converged",
            StopReason::MaxIterations => "max-iterations",
        }
    }
}

impl SimplexState {
    /// Evaluates the axis-aligned simplex `x0`, `x0 + scale·e_i`.
    pub fn new<F: FnMut(&[f64]) -> f64>(f: &mut F, x0: &[f64], scale: f64) -> Result<Self> {
        if x0.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut vertices = Vec::with_capacity(x0.len() + 1);
        vertices.push((x0.to_vec(), f(x0)));
        for i in 0..x0.len() {
            let mut x = x0.to_vec();
            x[i] += scale;
            let c = f(&x);
            vertices.push((x, c));
        }
        let mut s = SimplexState { vertices, iteration: 0, evaluations: x0.len() + 1, trace: Vec::new() };
        s.sort();
        s.record();
        Ok(s)
    }

    fn sort(&mut self) {
        self.vertices.sort_by(|a, b| a.1.total_cmp(&b.1));
    }

    pub fn best(&self) -> (&[f64], f64) {
        (&self.vertices[0].0, self.vertices[0].1)
    }

    /// Largest distance from the best vertex.
    pub fn diameter(&self) -> f64 {
        let b = &self.vertices[0].0;
        self.vertices
            .iter()
            .map(|(x, _)| x.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    pub fn spread(&self) -> f64 {
        self.vertices[self.vertices.len() - 1].1 - self.vertices[0].1
    }

    fn record(&mut self) {
        let row = TraceRow {
            iteration: self.iteration,
            evaluations: self.evaluations,
            best: self.vertices[0].0.clone(),
            cost: self.vertices[0].1,
            diameter: self.diameter(),
            spread: self.spread(),
        };
        self.trace.push(row);
    }

    pub fn converged(&self, opts: &NelderMeadOptions) -> bool {
        self.diameter() < opts.diameter_tol && self.spread() < opts.cost_tol
    }

    /// One reflect / expand / contract / shrink iteration.
    pub fn iterate<F: FnMut(&[f64]) -> f64>(&mut self, f: &mut F, opts: &NelderMeadOptions) {
        let n = self.vertices.len() - 1;
        let mut centroid = vec![0.0; n];
        for (x, _) in &self.vertices[..n] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / n as f64;
            }
        }
        let along = |from: &[f64], k: f64| -> Vec<f64> {
            centroid.iter().zip(from).map(|(c, x)| c + k * (x - c)).collect()
        };
        let worst = self.vertices[n].clone();
        let f_best = self.vertices[0].1;
        let f_second = self.vertices[n - 1].1;

        let xr = along(&worst.0, -opts.reflection);
        let fr = f(&xr);
        self.evaluations += 1;

        let mut replacement = None;
        if fr < f_best {
            let xe = along(&worst.0, -opts.reflection * opts.expansion);
            let fe = f(&xe);
            self.evaluations += 1;
            replacement = Some(if fe < fr { (xe, fe) } else { (xr, fr) });
        } else if fr < f_second {
            replacement = Some((xr, fr));
        } else if fr < worst.1 {
            let xc = along(&worst.0, -opts.reflection * opts.contraction);
            let fc = f(&xc);
            self.evaluations += 1;
            if fc <= fr {
                replacement = Some((xc, fc));
            }
        } else {
            let xc = along(&worst.0, opts.contraction);
            let fc = f(&xc);
            self.evaluations += 1;
            if fc < worst.1 {
                replacement = Some((xc, fc));
            }
        }

        match replacement {
            Some(v) => self.vertices[n] = v,
            None => {
                let best = self.vertices[0].0.clone();
                for (x, c) in self.vertices.iter_mut().skip(1) {
                    for (xi, bi) in x.iter_mut().zip(&best) {
                        *xi = bi + opts.shrink * (*xi - bi);
                    }
                    *c = f(x);
                }
                self.evaluations += n;
            }
        }
        self.sort();
        self.iteration += 1;
        self.record();
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub best: Vec<f64>,
    pub cost: f64,
    pub reason: StopReason,
    pub state: SimplexState,
}

/// Runs from `state` until convergence or the iteration cap. `after` sees the
/// state after every iteration (used for checkpoints).
pub fn nelder_mead_from<F, G>(
    mut state: SimplexState,
    f: &mut F,
    opts: &NelderMeadOptions,
    mut after: G,
) -> Result<NelderMeadResult>
where
    F: FnMut(&[f64]) -> f64,
    G: FnMut(&SimplexState) -> Result<()>,
{
    let reason = loop {
        if state.converged(opts) {
            break StopReason::Converged;
        }
        if state.iteration >= opts.max_iterations {
            warn!("Nelder-Mead stopped at the iteration cap ({})", opts.max_iterations);
            break StopReason::MaxIterations;
        }
        state.iterate(f, opts);
        after(&state)?;
    };
    let (best, cost) = state.best();
    Ok(NelderMeadResult { best: best.to_vec(), cost, reason, state })
}

/// Minimizes `f` from an axis-aligned simplex of size `scale` around `x0`.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    scale: f64,
    opts: &NelderMeadOptions,
) -> Result<NelderMeadResult> {
    let state = SimplexState::new(&mut f, x0, scale)?;
    nelder_mead_from(state, &mut f, opts, |_| Ok(()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentReport {
    pub free: Vec<DragParam>,
    pub best: DragParams,
    pub cost: f64,
    pub reason: StopReason,
    pub iterations: usize,
    pub evaluations: usize,
    pub trace: Vec<TraceRow>,
}

impl IdentReport {
    /// Per-iteration trace as CSV.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iteration,evaluations,cost,diameter,spread");
        for p in &self.free {
            out.push(',');
            out.push_str(p.name());
        }
        out.push('\n');
        for r in &self.trace {
            let _ = write!(
                out,
                "{},{},{},{},{}",
                r.iteration,
                r.evaluations,
                crate::sim::fmt_g9(r.cost),
                crate::sim::fmt_g9(r.diameter),
                crate::sim::fmt_g9(r.spread)
            );
            for x in &r.best {
                let _ = write!(out, ",{}", crate::sim::fmt_g9(*x));
            }
            out.push('\n');
        }
        out
    }

    pub fn summary(&self) -> String {
        let d = &self.best;
        format!(
            "reason: {}\niterations: {}\nevaluations: {}\ncost_e_abs_m: {}\ndx: {}\ndy: {}\ndz: {}\nkh: {}\n",
            self.reason.as_str(),
            self.iterations,
            self.evaluations,
            crate::sim::fmt_g9(self.cost),
            crate::sim::fmt_g9(d.dx),
            crate::sim::fmt_g9(d.dy),
            crate::sim::fmt_g9(d.dz),
            crate::sim::fmt_g9(d.kh),
        )
    }
}

/// Identification run: closed-loop cost plus Nelder-Mead, with optional
/// checkpointing after every iteration and optional resume.
pub fn identify_drag(
    scenario: &Scenario,
    cfg: &IdentConfig,
    checkpoint: Option<&Path>,
    resume: Option<SimplexState>,
) -> Result<IdentReport> {
    cfg.validate()?;
    let opts = NelderMeadOptions {
        diameter_tol: cfg.diameter_tol,
        cost_tol: cfg.cost_tol,
        max_iterations: cfg.max_iterations,
        ..Default::default()
    };
    let mut failure = None;
    let mut f = |x: &[f64]| {
        let (d, _) = cfg.to_drag(x);
        match evaluate_candidate(&d, scenario, cfg.loops) {
            Ok(ev) => {
                debug!("eval {:?} -> {}", x, ev.cost);
                ev.cost
            }
            Err(e) => {
                failure.get_or_insert(e);
                f64::INFINITY
            }
        }
    };
    let state = match resume {
        Some(s) => {
            if s.vertices.len() != cfg.free.len() + 1 {
                return Err(Error::Checkpoint("dimension does not match the free coefficients".into()));
            }
            info!("resuming at iteration {}", s.iteration);
            s
        }
        None => SimplexState::new(&mut f, &cfg.initial_point(), cfg.scale)?,
    };
    if let Some(path) = checkpoint {
        save_checkpoint(path, &state, &cfg.free)?;
    }
    let res = nelder_mead_from(state, &mut f, &opts, |s| {
        let (b, c) = s.best();
        info!("iteration {:>3}: cost {:.6e} at {:?}", s.iteration, c, b);
        match checkpoint {
            Some(path) => save_checkpoint(path, s, &cfg.free),
            None => Ok(()),
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let (best, _) = cfg.to_drag(&res.best);
    Ok(IdentReport {
        free: cfg.free.clone(),
        best,
        cost: res.cost,
        reason: res.reason,
        iterations: res.state.iteration,
        evaluations: res.state.evaluations,
        trace: res.state.trace,
    })
}

const CHECKPOINT_MAGIC: &str = "flatquad-simplex-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

/// Text checkpoint. Floats are written in shortest round-trip form so a
/// resumed run is bit-identical to an uninterrupted one.
pub fn checkpoint_to_string(s: &SimplexState, free: &[DragParam]) -> String {
    let mut out = format!("{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n");
    let names: Vec<&str> = free.iter().map(|p| p.name()).collect();
    let _ = writeln!(out, "free {}", names.join(" "));
    let _ = writeln!(out, "iteration {}", s.iteration);
    let _ = writeln!(out, "evaluations {}", s.evaluations);
    for (x, c) in &s.vertices {
        let _ = write!(out, "vertex {c:?}");
        for v in x {
            let _ = write!(out, " {v:?}");
        }
        out.push('\n');
    }
    for r in &s.trace {
        let _ = write!(out, "trace {} {} {:?} {:?} {:?}", r.iteration, r.evaluations, r.cost, r.diameter, r.spread);
        for v in &r.best {
            let _ = write!(out, " {v:?}");
        }
        out.push('\n');
    }
    out
}

pub fn checkpoint_from_str(text: &str) -> Result<(SimplexState, Vec<DragParam>)> {
    let bad = |m: String| Error::Checkpoint(m);
    let mut lines = text.lines().enumerate();
    let header = lines.next().map(|(_, l)| l).unwrap_or("");
    let mut h = header.split_whitespace();
    if h.next() != Some(CHECKPOINT_MAGIC) {
        return Err(bad("not a simplex checkpoint".into()));
    }
    match h.next().and_then(|v| v.parse::<u32>().ok()) {
        Some(CHECKPOINT_VERSION) => {}
        other => return Err(bad(format!("unsupported version {other:?}"))),
    }

    let mut free = Vec::new();
    let mut state = SimplexState { vertices: Vec::new(), iteration: 0, evaluations: 0, trace: Vec::new() };
    let num = |s: Option<&str>, line: usize| -> Result<f64> {
        s.and_then(|v| v.parse::<f64>().ok()).ok_or_else(|| bad(format!("line {}: bad number", line + 1)))
    };
    let int = |s: Option<&str>, line: usize| -> Result<usize> {
        s.and_then(|v| v.parse::<usize>().ok()).ok_or_else(|| bad(format!("line {}: bad integer", line + 1)))
    };
    for (i, line) in lines {
        let mut w = line.split_whitespace();
        match w.next() {
            None => continue,
            Some("free") => {
                for name in w {
                    free.push(DragParam::parse(name).ok_or_else(|| bad(format!("line {}: unknown `{name}`", i + 1)))?);
                }
            }
            Some("iteration") => state.iteration = int(w.next(), i)?,
            Some("evaluations") => state.evaluations = int(w.next(), i)?,
            Some("vertex") => {
                let c = num(w.next(), i)?;
                let x = w.map(|v| num(Some(v), i)).collect::<Result<Vec<_>>>()?;
                state.vertices.push((x, c));
            }
            Some("trace") => {
                let iteration = int(w.next(), i)?;
                let evaluations = int(w.next(), i)?;
                let cost = num(w.next(), i)?;
                let diameter = num(w.next(), i)?;
                let spread = num(w.next(), i)?;
                let best = w.map(|v| num(Some(v), i)).collect::<Result<Vec<_>>>()?;
                state.trace.push(TraceRow { iteration, evaluations, best, cost, diameter, spread });
            }
            Some(other) => return Err(bad(format!("line {}: unknown record `{other}`", i + 1))),
        }
    }
    let dim = free.len();
    if dim == 0 || state.vertices.len() != dim + 1 || state.vertices.iter().any(|(x, _)| x.len() != dim) {
        return Err(bad("simplex shape does not match the free list".into()));
    }
    Ok((state, free))
}

pub fn save_checkpoint(path: &Path, s: &SimplexState, free: &[DragParam]) -> Result<()> {
    // write-then-rename so an interrupted save never leaves a torn file
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, checkpoint_to_string(s, free))?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(SimplexState, Vec<DragParam>)> {
    checkpoint_from_str(&std::fs::read_to_string(path)?)
}
