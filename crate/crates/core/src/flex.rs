//! Aggregated P-Q flexibility at the primary substation.
//!
//! Each envelope point maximises `α·Δp_sl + β·Δq_sl` over the scheduling
//! constraint set with hard security limits, a fixed substation voltage
//! and per-step ramp caps. Sweeping unit directions gives an inner
//! polygon of the reachable region. `Δp_sl`, `Δq_sl` are changes of the
//! substation import against the baseline power flow.
//!
//! The objective carries a small loss term `c_reg·Σ(r + |x|)·l`. Without
//! it, directions that reward import could be served by inflating branch
//! currents inside the relaxed cone instead of moving resources.

use std::f64::consts::PI;

use thiserror::Error;

use crate::conic::{self, ConicError, ConicProgram, LinExpr, ProgramBuilder, SolveSettings, Status};
use crate::formulation::{self, FormulationOptions, Layout, SlackVoltage};
use crate::opf::Setpoints;
use crate::scenario::{OpfScenario, Resource, ScenarioError};

/// Tolerance (p.u.) of the containment verdict in [`envelope_report`].
pub const CONTAINMENT_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum FlexError {
    #[error("ramp threshold must be positive, got {0}")]
    InvalidThreshold(f64),
    #[error("direction ({0}, {1}) has no magnitude")]
    InvalidDirection(f64, f64),
    #[error("at least 4 directions are needed, got {0}")]
    TooFewDirections(usize),
    #[error("step {step} outside horizon of {steps} steps")]
    InvalidStep { step: usize, steps: usize },
    #[error("envelope window must cover at least one step")]
    EmptyWindow,
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Program(#[from] ConicError),
    #[error("infeasible: the baseline already violates a hard limit ({})", .0.as_deref().unwrap_or("no certificate"))]
    Infeasible(Option<String>),
    #[error("solver finished with {status:?}")]
    SolveFailed { status: Status, diagnostics: Option<String> },
    #[error("envelopes are not comparable: {0}")]
    MismatchedScenario(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ServiceLabel {
    Fast,
    Slow,
}

impl ServiceLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            ServiceLabel::Fast => "FAST",
            ServiceLabel::Slow => "SLOW",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServiceClass {
    pub label: ServiceLabel,
    /// kW/hr.
    pub ramp_threshold: f64,
}

impl ServiceClass {
    pub fn new(label: ServiceLabel, ramp_threshold: f64) -> Result<Self, FlexError> {
        if !(ramp_threshold > 0.0) || !ramp_threshold.is_finite() {
            return Err(FlexError::InvalidThreshold(ramp_threshold));
        }
        Ok(ServiceClass { label, ramp_threshold })
    }

    pub fn fast(sc: &OpfScenario) -> Result<Self, FlexError> {
        Self::new(ServiceLabel::Fast, sc.settings.ramp_threshold_kw_per_hr)
    }

    pub fn slow(sc: &OpfScenario) -> Result<Self, FlexError> {
        Self::new(ServiceLabel::Slow, sc.settings.ramp_threshold_kw_per_hr)
    }
}

/// Indices into the resource list. Every resource is slow-eligible.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResourceClasses {
    pub fast: Vec<usize>,
    pub slow_only: Vec<usize>,
}

pub fn classify_resources(resources: &[Resource], threshold: f64) -> Result<ResourceClasses, FlexError> {
    if !(threshold > 0.0) || !threshold.is_finite() {
        return Err(FlexError::InvalidThreshold(threshold));
    }
    let (fast, slow_only) = (0..resources.len()).partition(|&k| resources[k].ramp_kw_per_hr >= threshold);
    Ok(ResourceClasses { fast, slow_only })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction {
    pub alpha: f64,
    pub beta: f64,
}

impl Direction {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, FlexError> {
        if !(alpha.hypot(beta) > 0.0) || !alpha.is_finite() || !beta.is_finite() {
            return Err(FlexError::InvalidDirection(alpha, beta));
        }
        Ok(Direction { alpha, beta })
    }

    pub fn from_angle(theta: f64) -> Self {
        Direction { alpha: theta.cos(), beta: theta.sin() }
    }

    /// Angle in `[0, 2π)`.
    pub fn theta(&self) -> f64 {
        self.beta.atan2(self.alpha).rem_euclid(2.0 * PI)
    }

    pub fn dot(&self, (p, q): (f64, f64)) -> f64 {
        self.alpha * p + self.beta * q
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HorizonMode {
    /// Deviation at the target step; earlier window steps only carry
    /// ramp and SOC coupling.
    Step,
    /// Mean deviation over the window.
    HorizonSum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlexOptions {
    pub n_dirs: usize,
    /// Target step; `None` picks the middle of the horizon.
    pub step: Option<usize>,
    /// Steps up to and including the target.
    pub window: usize,
    pub mode: HorizonMode,
    pub c_reg: f64,
}

impl Default for FlexOptions {
    fn default() -> Self {
        FlexOptions { n_dirs: 32, step: None, window: 6, mode: HorizonMode::Step, c_reg: 2.0 }
    }
}

impl FlexOptions {
    pub fn target_step(&self, sc: &OpfScenario) -> usize {
        self.step.unwrap_or(sc.steps() / 2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopePoint {
    pub theta: f64,
    pub direction: Direction,
    pub status: Status,
    /// Achieved `(Δp_sl, Δq_sl)` in p.u.; `None` when the solve failed.
    pub delta: Option<(f64, f64)>,
    pub setpoints: Option<Setpoints>,
    pub max_gap: f64,
    pub diagnostics: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlexEnvelope {
    pub scenario: String,
    pub class: ServiceClass,
    pub n_dirs: usize,
    pub step: usize,
    pub mode: HorizonMode,
    /// Baseline substation import `(p, q)` in p.u.
    pub baseline: (f64, f64),
    /// Ordered by increasing θ.
    pub points: Vec<EnvelopePoint>,
}

impl FlexEnvelope {
    /// Achieved deviations of the successful directions, in θ order.
    pub fn vertices(&self) -> Vec<(f64, f64)> {
        self.points.iter().filter_map(|p| p.delta).collect()
    }

    pub fn failed(&self) -> usize {
        self.points.iter().filter(|p| p.delta.is_none()).count()
    }

    /// Shoelace area of the ordered vertices (p.u.²).
    pub fn area(&self) -> f64 {
        shoelace(&self.vertices())
    }

    pub fn diameter(&self) -> f64 {
        let v = self.vertices();
        let mut d: f64 = 0.0;
        for a in &v {
            for b in &v {
                d = d.max((a.0 - b.0).hypot(a.1 - b.1));
            }
        }
        d
    }
}

/// Constraint program shared by all directions of one sweep.
struct Prepared {
    prog: ConicProgram,
    layout: Layout,
    /// Baseline import per window step.
    base: Vec<(f64, f64)>,
    obj_steps: Vec<usize>,
    reg: LinExpr,
    step: usize,
    /// Some resource can move; otherwise the region is the baseline point.
    active: bool,
}

fn prepare(sc: &OpfScenario, class: ServiceClass, opts: &FlexOptions) -> Result<Prepared, FlexError> {
    sc.validate()?;
    let steps = sc.steps();
    let step = opts.target_step(sc);
    if step >= steps {
        return Err(FlexError::InvalidStep { step, steps });
    }
    if opts.window == 0 {
        return Err(FlexError::EmptyWindow);
    }
    let window: Vec<usize> = (step + 1 - opts.window.min(step + 1)..=step).collect();
    let classes = classify_resources(&sc.resources, class.ramp_threshold)?;
    let mut f = FormulationOptions::new(sc, window.clone());
    f.hard_limits = true;
    f.slack = SlackVoltage::Fixed;
    if class.label == ServiceLabel::Fast {
        for &k in &classes.slow_only {
            f.frozen[k] = true;
        }
    }
    let active =
        sc.resources.iter().enumerate().any(|(k, r)| {
            !f.frozen[k] && [r.dp_lo_kw, r.dp_hi_kw, r.dq_lo_kvar, r.dq_hi_kvar].iter().any(|&b| b != 0.0)
        });
    let dt_h = sc.dt_hours();
    f.ramp_caps = Some(sc.resources.iter().map(|r| sc.pu(r.ramp_kw_per_hr * dt_h)).collect());

    let mut b = ProgramBuilder::new();
    let layout = formulation::build(sc, &f, &mut b);
    let mut reg = LinExpr::new();
    for s in &layout.steps {
        for (k, br) in sc.mv.branches.iter().enumerate() {
            reg.add(s.l[k], opts.c_reg * (br.r + br.x.abs()));
        }
    }
    let base = window
        .iter()
        .map(|&t| {
            let draws: Vec<(f64, f64)> = (0..sc.lv.len()).map(|g| sc.lv_draw(g, t)).collect();
            sc.mv_flow(t, &draws, sc.slack_v0(t)).map(|st| (st.slack_p, st.slack_q))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let obj_steps = match opts.mode {
        HorizonMode::Step => vec![window.len() - 1],
        HorizonMode::HorizonSum => (0..window.len()).collect(),
    };
    Ok(Prepared { prog: b.build()?, layout, base, obj_steps, reg, step, active })
}

impl Prepared {
    fn baseline(&self) -> (f64, f64) {
        mean(self.obj_steps.iter().map(|&w| self.base[w]))
    }

    fn solve(&self, sc: &OpfScenario, d: Direction) -> Result<EnvelopePoint, FlexError> {
        let mut obj = self.reg.clone();
        for &w in &self.obj_steps {
            let s = &self.layout.steps[w];
            obj.add(s.p_sl, -d.alpha);
            obj.add(s.q_sl, -d.beta);
        }
        let mut prog = self.prog.clone();
        prog.objective = obj;
        let settings =
            SolveSettings { tol_feas: sc.settings.tol_feas, tol_gap: sc.settings.tol_gap, ..SolveSettings::default() };
        let sol = conic::solve(&prog, &settings);
        match sol.status {
            Status::Optimal => {}
            Status::Infeasible => return Err(FlexError::Infeasible(sol.diagnostics)),
            status => return Err(FlexError::SolveFailed { status, diagnostics: sol.diagnostics }),
        }
        let mut x = sol.x;
        if !self.active {
            for s in &self.layout.steps {
                for v in s.dp.iter().chain(&s.dq) {
                    x[v.0] = 0.0;
                }
            }
        }
        let x = &x;
        let delta = if !self.active {
            (0.0, 0.0)
        } else {
            mean(self.obj_steps.iter().map(|&w| {
                let s = &self.layout.steps[w];
                (x[s.p_sl.0] - self.base[w].0, x[s.q_sl.0] - self.base[w].1)
            }))
        };
        let steps = &self.layout.steps;
        let setpoints = Setpoints {
            steps: steps.iter().map(|s| s.t).collect(),
            dp: steps.iter().map(|s| s.dp.iter().map(|v| x[v.0]).collect()).collect(),
            dq: steps.iter().map(|s| s.dq.iter().map(|v| x[v.0]).collect()).collect(),
            slack_v: steps.iter().map(|s| sc.slack_v0(s.t)).collect(),
        };
        Ok(EnvelopePoint {
            theta: d.theta(),
            direction: d,
            status: Status::Optimal,
            delta: Some(delta),
            setpoints: Some(setpoints),
            max_gap: formulation::relaxation_gap(&self.layout, x),
            diagnostics: None,
        })
    }
}

fn mean(it: impl Iterator<Item = (f64, f64)>) -> (f64, f64) {
    let (mut n, mut p, mut q) = (0.0, 0.0, 0.0);
    for (a, b) in it {
        n += 1.0;
        p += a;
        q += b;
    }
    (p / n, q / n)
}

/// Support point of the reachable `(Δp_sl, Δq_sl)` region in direction `d`.
pub fn max_direction(
    sc: &OpfScenario,
    d: Direction,
    class: ServiceClass,
    opts: &FlexOptions,
) -> Result<EnvelopePoint, FlexError> {
    Direction::new(d.alpha, d.beta)?;
    prepare(sc, class, opts)?.solve(sc, d)
}

/// Evaluates `n_dirs` equally spaced directions. Failed directions are
/// kept with their status; setup errors abort.
pub fn sweep_envelope(sc: &OpfScenario, class: ServiceClass, opts: &FlexOptions) -> Result<FlexEnvelope, FlexError> {
    if opts.n_dirs < 4 {
        return Err(FlexError::TooFewDirections(opts.n_dirs));
    }
    let prep = prepare(sc, class, opts)?;
    let n = opts.n_dirs;
    let points = map_indexed(n, |j| {
        let d = Direction::from_angle(2.0 * PI * j as f64 / n as f64);
        let theta = 2.0 * PI * j as f64 / n as f64;
        match prep.solve(sc, d) {
            Ok(p) => EnvelopePoint { theta, ..p },
            Err(e) => {
                let status = match &e {
                    FlexError::Infeasible(_) => Status::Infeasible,
                    FlexError::SolveFailed { status, .. } => *status,
                    _ => Status::NumericalFailure,
                };
                EnvelopePoint {
                    theta,
                    direction: d,
                    status,
                    delta: None,
                    setpoints: None,
                    max_gap: 0.0,
                    diagnostics: Some(e.to_string()),
                }
            }
        }
    });
    Ok(FlexEnvelope {
        scenario: sc.name.clone(),
        class,
        n_dirs: n,
        step: prep.step,
        mode: opts.mode,
        baseline: prep.baseline(),
        points,
    })
}

#[cfg(feature = "parallel")]
fn map_indexed<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    let threads = std::env::var("GRIDFLEX_THREADS").ok().and_then(|s| s.trim().parse::<usize>().ok()).unwrap_or(0);
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
        Err(_) => (0..n).map(f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn map_indexed<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    (0..n).map(f).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeReport {
    pub fast_area: f64,
    pub slow_area: f64,
    /// Fast over slow support value per direction, relative to the
    /// baseline. `None` when only the slow support is zero.
    pub ratios: Vec<Option<f64>>,
    /// Largest distance (p.u.) of a fast vertex outside the convex hull of
    /// the slow vertices. The hull is an inner approximation, so curved
    /// boundary segments can put valid fast points slightly outside.
    pub hull_excursion: f64,
    /// Largest `d_j·p − h_slow(d_j)` over fast vertices `p` and sweep
    /// directions `d_j`: the support-function containment margin.
    pub support_excursion: f64,
    pub contained: bool,
}

pub fn envelope_report(fast: &FlexEnvelope, slow: &FlexEnvelope) -> Result<EnvelopeReport, FlexError> {
    let same = fast.scenario == slow.scenario
        && fast.n_dirs == slow.n_dirs
        && fast.step == slow.step
        && fast.mode == slow.mode
        && (fast.baseline.0 - slow.baseline.0).abs() <= 1e-12
        && (fast.baseline.1 - slow.baseline.1).abs() <= 1e-12;
    if !same {
        return Err(FlexError::MismatchedScenario(format!(
            "{} step {} ({} dirs) vs {} step {} ({} dirs)",
            fast.scenario, fast.step, fast.n_dirs, slow.scenario, slow.step, slow.n_dirs
        )));
    }
    let ratios = fast
        .points
        .iter()
        .zip(&slow.points)
        .map(|(f, s)| {
            let (f, s) = (f.delta.map(|p| f.direction.dot(p))?, s.delta.map(|p| s.direction.dot(p))?);
            if s.abs() < 1e-9 {
                (f.abs() < 1e-9).then_some(1.0)
            } else {
                Some(f / s)
            }
        })
        .collect();
    let hull = convex_hull(slow.vertices());
    let fv = fast.vertices();
    let hull_excursion = fv.iter().map(|&p| hull_distance(&hull, p)).fold(0.0, f64::max);
    let mut support_excursion: f64 = 0.0;
    for s in &slow.points {
        let Some(h) = s.delta.map(|p| s.direction.dot(p)) else { continue };
        for &p in &fv {
            support_excursion = support_excursion.max(s.direction.dot(p) - h);
        }
    }
    Ok(EnvelopeReport {
        fast_area: fast.area(),
        slow_area: slow.area(),
        ratios,
        hull_excursion,
        support_excursion,
        contained: support_excursion <= CONTAINMENT_TOL,
    })
}

fn shoelace(v: &[(f64, f64)]) -> f64 {
    let n = v.len();
    if n < 3 {
        return 0.0;
    }
    let s: f64 = (0..n).map(|i| v[i].0 * v[(i + 1) % n].1 - v[(i + 1) % n].0 * v[i].1).sum();
    0.5 * s.abs()
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Counter-clockwise hull (monotone chain).
pub fn convex_hull(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite points"));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn segment_distance(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 { (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p.0 - a.0 - t * dx).hypot(p.1 - a.1 - t * dy)
}

/// Distance from `p` to a counter-clockwise convex polygon (0 inside).
pub fn hull_distance(hull: &[(f64, f64)], p: (f64, f64)) -> f64 {
    match hull.len() {
        0 => f64::INFINITY,
        1 => (p.0 - hull[0].0).hypot(p.1 - hull[0].1),
        2 => segment_distance(hull[0], hull[1], p),
        n => {
            let inside = (0..n).all(|i| cross(hull[i], hull[(i + 1) % n], p) >= 0.0);
            if inside {
                0.0
            } else {
                (0..n).map(|i| segment_distance(hull[i], hull[(i + 1) % n], p)).fold(f64::INFINITY, f64::min)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lv::ReferenceOptions;
    use crate::opf::verify_setpoints;
    use crate::scenario::{assemble_from_reference, ResourceKind};
    use crate::synthetic;

    fn unit(id: &str, node: &str, kind: ResourceKind, dp: (f64, f64), dq: (f64, f64), ramp: f64) -> Resource {
        Resource {
            id: id.into(),
            lv_grid: "lv1".into(),
            lv_node: node.into(),
            kind,
            dp_lo_kw: dp.0,
            dp_hi_kw: dp.1,
            dq_lo_kvar: dq.0,
            dq_hi_kvar: dq.1,
            s_kva: 0.0,
            pf_lim: 0.95,
            ramp_kw_per_hr: ramp,
            eta: 1.0,
            cap_kwh: 0.0,
            soc_min: 0.0,
            soc_max: 1.0,
            soc0: 0.0,
        }
    }

    /// Tiny scenario with `res` in place of its PV unit; `base` gives each
    /// resource's constant baseline (kW, kvar).
    fn instance(res: Vec<Resource>, base: &[(f64, f64)]) -> OpfScenario {
        let mut sc = synthetic::tiny();
        sc.series.series.remove("pv1");
        for (r, &(p, q)) in res.iter().zip(base) {
            for t in 0..sc.steps() {
                sc.series.set(&r.id, t, p, q);
            }
        }
        sc.resources = res;
        assemble_from_reference(&mut sc, Some(ReferenceOptions::default())).unwrap();
        sc
    }

    fn opts(n_dirs: usize) -> FlexOptions {
        FlexOptions { n_dirs, step: Some(2), window: 1, ..FlexOptions::default() }
    }

    fn slow(sc: &OpfScenario) -> ServiceClass {
        ServiceClass::slow(sc).unwrap()
    }

    #[test]
    fn classification_follows_threshold() {
        let ev = unit("ev", "a", ResourceKind::EvStorage, (-8.0, 8.0), (0.0, 0.0), 8.0 * 6.0);
        let pv = unit("pv", "b", ResourceKind::Pv, (-3.0, 0.0), (0.0, 0.0), 3.0);
        let c = classify_resources(&[ev, pv], 4.0).unwrap();
        assert_eq!(c.fast, vec![0]);
        assert_eq!(c.slow_only, vec![1]);
        assert!(matches!(classify_resources(&[], 0.0), Err(FlexError::InvalidThreshold(_))));
        assert!(matches!(ServiceClass::new(ServiceLabel::Fast, -1.0), Err(FlexError::InvalidThreshold(_))));
    }

    #[test]
    fn direction_validation() {
        assert!(matches!(Direction::new(0.0, 0.0), Err(FlexError::InvalidDirection(..))));
        assert!((Direction::new(0.0, -1.0).unwrap().theta() - 1.5 * PI).abs() < 1e-15);
        let sc = synthetic::tiny();
        let d = Direction { alpha: 0.0, beta: 0.0 };
        assert!(matches!(max_direction(&sc, d, slow(&sc), &opts(4)), Err(FlexError::InvalidDirection(..))));
        assert!(matches!(sweep_envelope(&sc, slow(&sc), &opts(3)), Err(FlexError::TooFewDirections(3))));
        let bad = FlexOptions { step: Some(4), ..opts(4) };
        assert!(matches!(sweep_envelope(&sc, slow(&sc), &bad), Err(FlexError::InvalidStep { .. })));
    }

    #[test]
    fn zero_boxes_collapse_to_baseline() {
        let sc = instance(vec![unit("pv", "b", ResourceKind::Pv, (0.0, 0.0), (0.0, 0.0), 100.0)], &[(20.0, 0.0)]);
        let env = sweep_envelope(&sc, slow(&sc), &opts(8)).unwrap();
        assert_eq!(env.failed(), 0);
        for (p, q) in env.vertices() {
            assert!(p.abs() < 1e-7 && q.abs() < 1e-7, "({p}, {q})");
        }
        assert!(env.area() < 1e-12);
    }

    #[test]
    fn curtailment_raises_import() {
        let sc = instance(vec![unit("pv", "b", ResourceKind::Pv, (-10.0, 0.0), (0.0, 0.0), 100.0)], &[(25.0, 0.0)]);
        let up = max_direction(&sc, Direction::new(1.0, 0.0).unwrap(), slow(&sc), &opts(4)).unwrap();
        let (dp, _) = up.delta.unwrap();
        assert!((sc.kw(dp) - 10.0).abs() < 0.05, "{}", sc.kw(dp));
        let down = max_direction(&sc, Direction::new(-1.0, 0.0).unwrap(), slow(&sc), &opts(4)).unwrap();
        assert!(sc.kw(down.delta.unwrap().0).abs() < 1e-4);
    }

    #[test]
    fn axis_supports_match_box() {
        let (a, b) = (12.0, 6.0);
        let sc = instance(vec![unit("st", "a", ResourceKind::EvStorage, (-a, a), (-b, b), 100.0)], &[(0.0, 0.0)]);
        let env = sweep_envelope(&sc, slow(&sc), &opts(4)).unwrap();
        for (pt, expect) in env.points.iter().zip([a, b, a, b]) {
            let s = sc.kw(pt.direction.dot(pt.delta.unwrap()));
            // MV losses move the support by well under 1 %
            assert!((s - expect).abs() < 0.01 * expect, "θ {}: {s} vs {expect}", pt.theta);
        }
    }

    fn mixed() -> OpfScenario {
        let ev = unit("ev", "a", ResourceKind::EvStorage, (-8.0, 8.0), (-4.0, 4.0), 48.0);
        let mut pv = unit("pv", "b", ResourceKind::Pv, (-6.0, 0.0), (-8.0, 8.0), 3.0);
        pv.s_kva = 30.0;
        instance(vec![ev, pv], &[(0.0, 0.0), (25.0, 0.0)])
    }

    #[test]
    fn fast_inside_slow() {
        let sc = mixed();
        let o = FlexOptions { window: 4, step: Some(3), ..opts(16) };
        let f = sweep_envelope(&sc, ServiceClass::fast(&sc).unwrap(), &o).unwrap();
        let s = sweep_envelope(&sc, slow(&sc), &o).unwrap();
        let rep = envelope_report(&f, &s).unwrap();
        assert!(rep.contained, "excursion {}", rep.support_excursion);
        assert!(rep.hull_excursion < 1e-4);
        assert!(rep.fast_area > 0.0 && rep.fast_area < rep.slow_area);
        for r in rep.ratios.iter().flatten() {
            assert!(*r <= 1.0 + 1e-6);
        }
    }

    #[test]
    fn identical_classes_give_unit_ratios() {
        let ev = unit("ev", "a", ResourceKind::EvStorage, (-8.0, 8.0), (-4.0, 4.0), 48.0);
        let sc = instance(vec![ev], &[(0.0, 0.0)]);
        let f = sweep_envelope(&sc, ServiceClass::fast(&sc).unwrap(), &opts(8)).unwrap();
        let s = sweep_envelope(&sc, slow(&sc), &opts(8)).unwrap();
        let rep = envelope_report(&f, &s).unwrap();
        for r in &rep.ratios {
            assert!((r.unwrap() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn no_fast_resources_gives_point() {
        let pv = unit("pv", "b", ResourceKind::Pv, (-6.0, 0.0), (0.0, 0.0), 3.0);
        let sc = instance(vec![pv], &[(25.0, 0.0)]);
        let f = sweep_envelope(&sc, ServiceClass::fast(&sc).unwrap(), &opts(8)).unwrap();
        assert_eq!(f.area(), 0.0);
        assert!(f.vertices().iter().all(|v| v.0.abs() < 1e-7 && v.1.abs() < 1e-7));
        let s = sweep_envelope(&sc, slow(&sc), &opts(8)).unwrap();
        assert!(envelope_report(&f, &s).unwrap().contained);
    }

    #[test]
    fn mismatched_envelopes_rejected() {
        let sc = mixed();
        let a = sweep_envelope(&sc, slow(&sc), &opts(4)).unwrap();
        let b = sweep_envelope(&sc, slow(&sc), &FlexOptions { step: Some(1), ..opts(4) }).unwrap();
        assert!(matches!(envelope_report(&a, &b), Err(FlexError::MismatchedScenario(_))));
    }

    #[test]
    fn supports_are_consistent_and_prequalified() {
        let sc = mixed();
        let env = sweep_envelope(&sc, slow(&sc), &opts(16)).unwrap();
        let v = env.vertices();
        let tol = 1e-3 * env.diameter();
        for p in &env.points {
            let own = p.direction.dot(p.delta.unwrap());
            for o in &v {
                assert!(p.direction.dot(*o) <= own + tol, "θ {}", p.theta);
            }
            let rep = verify_setpoints(&sc, p.setpoints.as_ref().unwrap(), None, 2e-3).unwrap();
            assert_eq!(rep.hard_violations().count(), 0, "θ {}: {:?}", p.theta, rep.violations);
            assert!(p.max_gap < 1e-6, "θ {}: gap {}", p.theta, p.max_gap);
        }
    }

    #[test]
    fn binding_lv_limit_truncates() {
        let ev = unit("ev", "b", ResourceKind::EvStorage, (-20.0, 20.0), (0.0, 0.0), 1000.0);
        let mut sc = instance(vec![ev], &[(0.0, 0.0)]);
        let d = Direction::new(1.0, 0.0).unwrap();
        let free = max_direction(&sc, d, slow(&sc), &opts(4)).unwrap();
        sc.lv[0].imax = vec![0.05, 0.05];
        let cut = max_direction(&sc, d, slow(&sc), &opts(4)).unwrap();
        assert!((sc.kw(free.delta.unwrap().0) - 20.0).abs() < 0.1);
        assert!(cut.delta.unwrap().0 < free.delta.unwrap().0 - 1e-3);
    }

    #[test]
    fn infeasible_baseline_is_reported() {
        let mut sc = mixed();
        for lim in &mut sc.lv[0].node_limits {
            lim.1 = 0.5;
        }
        let d = Direction::new(1.0, 0.0).unwrap();
        assert!(matches!(max_direction(&sc, d, slow(&sc), &opts(4)), Err(FlexError::Infeasible(_))));
        let env = sweep_envelope(&sc, slow(&sc), &opts(4)).unwrap();
        assert_eq!(env.failed(), 4);
        assert!(env.points.iter().all(|p| p.status == Status::Infeasible));
    }

    #[test]
    fn horizon_mode_reports_window_mean() {
        let sc = mixed();
        let o = FlexOptions { window: 3, step: Some(3), mode: HorizonMode::HorizonSum, ..opts(4) };
        let env = sweep_envelope(&sc, slow(&sc), &o).unwrap();
        assert_eq!(env.failed(), 0);
        let step = sweep_envelope(&sc, slow(&sc), &FlexOptions { mode: HorizonMode::Step, ..o.clone() }).unwrap();
        // ramp-limited PV reaches less on average than at the window end
        assert!(env.points[0].delta.unwrap().0 <= step.points[0].delta.unwrap().0 + 1e-9);
    }

    #[test]
    fn sweep_is_deterministic() {
        let sc = mixed();
        let a = sweep_envelope(&sc, slow(&sc), &opts(8)).unwrap();
        let b = sweep_envelope(&sc, slow(&sc), &opts(8)).unwrap();
        assert_eq!(a, b);
        assert!(a.points.windows(2).all(|w| w[0].theta < w[1].theta));
    }

    #[test]
    fn hull_helpers() {
        let sq = convex_hull(vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.5, 0.5)]);
        assert_eq!(sq.len(), 4);
        assert_eq!(hull_distance(&sq, (0.5, 0.5)), 0.0);
        assert!((hull_distance(&sq, (2.0, 0.5)) - 1.0).abs() < 1e-15);
        assert!((shoelace(&sq) - 1.0).abs() < 1e-15);
        assert!((hull_distance(&[(0.0, 0.0)], (3.0, 4.0)) - 5.0).abs() < 1e-15);
    }
}
