//! Multi-period combined MV+LV scheduling.
//!
//! The objective prices MV losses, squared-voltage and squared-current
//! excursions (hinge epigraphs) and deviations of the P-SS flow from the
//! TSO schedule. MV limits are soft; LV limits and inverter limits are
//! hard.

use crate::conic::{self, ConicError, ConicProgram, LinExpr, ProgramBuilder, SolveSettings, Status};
use crate::formulation::{self, FormulationOptions, Layout, SlackVoltage};
use crate::lv::LvState;
use crate::scenario::{ObjectiveWeights, OpfScenario, ScenarioError};

#[derive(Debug, thiserror::Error)]
pub enum OpfError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Program(#[from] ConicError),
    #[error("solver returned {status}: {}", diagnostics.as_deref().unwrap_or("no diagnostics"))]
    SolveFailed { status: Status, diagnostics: Option<String> },
    #[error("setpoints cover {got} resources, scenario has {expected}")]
    SetpointShape { got: usize, expected: usize },
}

/// Exact-form MV quantities of one step (squared magnitudes).
#[derive(Debug, Clone, PartialEq)]
pub struct MvState {
    pub v: Vec<f64>,
    pub l: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// Import at the P-SS.
    pub p_sl: f64,
    pub q_sl: f64,
    /// P-SS voltage magnitude.
    pub slack_v: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub t: usize,
    /// Resource deviations (p.u.), scenario resource order.
    pub dp: Vec<f64>,
    pub dq: Vec<f64>,
    pub mv: MvState,
    pub lv: Vec<LvState>,
    /// Hinge values per MV node / branch.
    pub v_dev: Vec<f64>,
    pub l_dev: Vec<f64>,
    pub losses: f64,
    /// |P-SS flow − schedule|, zero without a schedule.
    pub dev_p: f64,
    pub dev_q: f64,
    /// SOC at the end of the step, for storage resources.
    pub soc: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BreakdownTerm {
    pub name: &'static str,
    pub raw: f64,
    pub weight: f64,
    pub weighted: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveBreakdown {
    pub terms: Vec<BreakdownTerm>,
}

impl ObjectiveBreakdown {
    pub fn total(&self) -> f64 {
        self.terms.iter().map(|t| t.weighted).sum()
    }

    pub fn term(&self, name: &str) -> Option<&BreakdownTerm> {
        self.terms.iter().find(|t| t.name == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleResult {
    pub steps: Vec<StepResult>,
    pub weights: ObjectiveWeights,
    /// Weighted sum of the breakdown terms.
    pub objective: f64,
    /// Objective reported by the solver (sum over windows).
    pub solver_objective: f64,
    pub breakdown: ObjectiveBreakdown,
    /// Largest `v·l − (P² + Q²)` at the optimum.
    pub max_gap: f64,
    pub relaxation_loose: bool,
    pub iterations: u32,
    pub solve_seconds: f64,
}

impl ScheduleResult {
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.relaxation_loose {
            w.push(format!("relaxation loose: max cone gap {:.3e}", self.max_gap));
        }
        w
    }

    pub fn setpoints(&self) -> Setpoints {
        Setpoints {
            steps: self.steps.iter().map(|s| s.t).collect(),
            dp: self.steps.iter().map(|s| s.dp.clone()).collect(),
            dq: self.steps.iter().map(|s| s.dq.clone()).collect(),
            slack_v: self.steps.iter().map(|s| s.mv.slack_v).collect(),
        }
    }
}

/// Controls per step (p.u.) and the P-SS voltage magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct Setpoints {
    pub steps: Vec<usize>,
    pub dp: Vec<Vec<f64>>,
    pub dq: Vec<Vec<f64>>,
    pub slack_v: Vec<f64>,
}

struct Built {
    prog: ConicProgram,
    layout: Layout,
}

/// With `near_optimum`, the priced objective becomes a constraint
/// (`≤ optimum·(1 + 1e-6) + 1e-9`) and the program minimises total
/// resource activation plus P-SS voltage movement instead. Variable
/// indices of the shared part are identical in both forms.
fn build_window(sc: &OpfScenario, opts: &FormulationOptions, near_optimum: Option<f64>) -> Result<Built, OpfError> {
    let mut b = ProgramBuilder::new();
    let layout = formulation::build(sc, opts, &mut b);
    let w = sc.weights;
    let mut obj = LinExpr::new();
    for s in &layout.steps {
        if w.w_l != 0.0 {
            for (k, br) in sc.mv.branches.iter().enumerate() {
                obj.add(s.l[k], w.w_l * br.r);
            }
        }
        if w.w_v != 0.0 {
            for (i, n) in sc.mv.nodes.iter().enumerate() {
                let d = b.var(format!("vdev[{},{}]", s.t, n.id), 0.0, f64::INFINITY);
                b.le(LinExpr::term(s.v[i], 1.0).with(d, -1.0).plus(-n.vmax * n.vmax), "vdev_hi");
                b.le(LinExpr::term(s.v[i], -1.0).with(d, -1.0).plus(n.vmin * n.vmin), "vdev_lo");
                obj.add(d, w.w_v);
            }
        }
        if w.w_lim != 0.0 {
            for (k, br) in sc.mv.branches.iter().enumerate() {
                if !br.imax.is_finite() {
                    continue;
                }
                let d = b.var(format!("ldev[{},{}]", s.t, br.id()), 0.0, f64::INFINITY);
                b.le(LinExpr::term(s.l[k], 1.0).with(d, -1.0).plus(-br.imax * br.imax), "ldev");
                obj.add(d, w.w_lim);
            }
        }
        if let Some((sp, sq)) = sc.schedule(s.t) {
            for (weight, flow, target, name) in [(w.w_p, s.p_sl, sp, "devp"), (w.w_q, s.q_sl, sq, "devq")] {
                if weight == 0.0 {
                    continue;
                }
                let d = b.var(format!("{name}[{}]", s.t), 0.0, f64::INFINITY);
                b.le(LinExpr::term(flow, 1.0).with(d, -1.0).plus(-target), "schedule_dev");
                b.le(LinExpr::term(flow, -1.0).with(d, -1.0).plus(target), "schedule_dev");
                obj.add(d, weight);
            }
        }
    }
    match near_optimum {
        None => b.minimize(&obj),
        Some(opt) => {
            b.le(obj.clone().plus(-(opt * (1.0 + 1e-6) + 1e-9)), "near_optimal");
            let mut act = LinExpr::new();
            let slack = layout.tree.slack;
            for s in &layout.steps {
                let v0 = sc.slack_v0(s.t).powi(2);
                let moves =
                    s.dp.iter()
                        .chain(&s.dq)
                        .map(|&v| LinExpr::from(v))
                        .chain([LinExpr::term(s.v[slack], 1.0).plus(-v0)]);
                for e in moves.collect::<Vec<_>>() {
                    let a = b.var(format!("act[{}]", s.t), 0.0, f64::INFINITY);
                    let mut hi = e.clone();
                    hi.add(a, -1.0);
                    b.le(hi, "activation");
                    let mut lo = e.scaled(-1.0);
                    lo.add(a, -1.0);
                    b.le(lo, "activation");
                    act.add(a, 1.0);
                }
            }
            b.minimize(&act);
        }
    }
    Ok(Built { prog: b.build()?, layout })
}

/// The full-horizon scheduling program.
pub fn build_combined_program(sc: &OpfScenario) -> Result<ConicProgram, OpfError> {
    sc.validate()?;
    let opts = FormulationOptions::new(sc, (0..sc.steps()).collect());
    Ok(build_window(sc, &opts, None)?.prog)
}

fn settings(sc: &OpfScenario) -> SolveSettings {
    SolveSettings { tol_feas: sc.settings.tol_feas, tol_gap: sc.settings.tol_gap, ..SolveSettings::default() }
}

/// Solves the schedule; with `minimal_activation`, ties are broken towards
/// the smallest total resource activation. `fixed_slack` holds the P-SS
/// voltage at the scenario baseline.
pub(crate) fn solve_schedule_with(
    sc: &OpfScenario,
    minimal_activation: bool,
    fixed_slack: bool,
) -> Result<ScheduleResult, OpfError> {
    sc.validate()?;
    let t_count = sc.steps();
    let window = sc.settings.window.unwrap_or(t_count).clamp(1, t_count.max(1));
    let mut steps = Vec::with_capacity(t_count);
    let mut soc_start: Vec<f64> = (0..sc.resources.len()).map(|k| sc.resources[k].soc0).collect();
    let (mut iterations, mut seconds, mut solver_obj, mut max_gap) = (0u32, 0.0, 0.0, 0.0f64);

    let mut start = 0;
    while start < t_count {
        let end = (start + window).min(t_count);
        let mut opts = FormulationOptions::new(sc, (start..end).collect());
        opts.soc_start = soc_start.clone();
        if fixed_slack {
            opts.slack = SlackVoltage::Fixed;
        }
        let built = build_window(sc, &opts, None)?;
        let sol = conic::solve(&built.prog, &settings(sc));
        if !sol.is_optimal() {
            return Err(OpfError::SolveFailed { status: sol.status, diagnostics: sol.diagnostics });
        }
        iterations += sol.iterations;
        seconds += sol.solve_seconds;
        solver_obj += sol.objective;
        let mut x = sol.x;
        if minimal_activation {
            let polished = build_window(sc, &opts, Some(sol.objective))?;
            let p = conic::solve(&polished.prog, &settings(sc));
            if p.is_optimal() {
                x = p.x;
            }
        }
        max_gap = max_gap.max(formulation::relaxation_gap(&built.layout, &x));
        for s in &built.layout.steps {
            steps.push(decode_step(sc, s, &x, built.layout.tree.slack));
        }
        for (k, v) in steps.last().expect("window has steps").soc.iter().enumerate() {
            if let Some(v) = v {
                soc_start[k] = *v;
            }
        }
        start = end;
    }

    let mut res = ScheduleResult {
        steps,
        weights: sc.weights,
        objective: 0.0,
        solver_objective: solver_obj,
        breakdown: ObjectiveBreakdown { terms: Vec::new() },
        max_gap,
        relaxation_loose: max_gap > sc.settings.relaxation_threshold,
        iterations,
        solve_seconds: seconds,
    };
    res.breakdown = objective_breakdown(&res);
    res.objective = res.breakdown.total();
    Ok(res)
}

pub fn solve_schedule(sc: &OpfScenario) -> Result<ScheduleResult, OpfError> {
    solve_schedule_with(sc, false, false)
}

fn decode_step(sc: &OpfScenario, s: &formulation::StepVars, x: &[f64], slack: usize) -> StepResult {
    let val = |v: conic::VarId| x[v.0];
    let l: Vec<f64> = s.l.iter().map(|&i| val(i)).collect();
    let mv_v: Vec<f64> = s.v.iter().map(|&i| val(i)).collect();
    let v_dev = sc
        .mv
        .nodes
        .iter()
        .zip(&mv_v)
        .map(|(n, &vi)| (vi - n.vmax * n.vmax).max(n.vmin * n.vmin - vi).max(0.0))
        .collect();
    let l_dev = sc
        .mv
        .branches
        .iter()
        .zip(&l)
        .map(|(b, &li)| if b.imax.is_finite() { (li - b.imax * b.imax).max(0.0) } else { 0.0 })
        .collect();
    let losses = sc.mv.branches.iter().zip(&l).map(|(b, li)| b.r * li).sum();
    let (p_sl, q_sl) = (val(s.p_sl), val(s.q_sl));
    let (dev_p, dev_q) = sc.schedule(s.t).map_or((0.0, 0.0), |(sp, sq)| ((p_sl - sp).abs(), (q_sl - sq).abs()));
    let lv = (0..sc.lv.len())
        .map(|g| LvState {
            v: s.lv_v[g].iter().map(|e| e.eval(x)).collect(),
            i: s.lv_i[g].iter().map(|e| e.eval(x)).collect(),
            dp_sl: s.lv_dp_sl[g].eval(x),
            dq_sl: s.lv_dq_sl[g].eval(x),
        })
        .collect();
    StepResult {
        t: s.t,
        dp: s.dp.iter().map(|&i| val(i)).collect(),
        dq: s.dq.iter().map(|&i| val(i)).collect(),
        mv: MvState {
            v: mv_v,
            l,
            p: s.p.iter().map(|&i| val(i)).collect(),
            q: s.q.iter().map(|&i| val(i)).collect(),
            p_sl,
            q_sl,
            slack_v: val(s.v[slack]).sqrt(),
        },
        lv,
        v_dev,
        l_dev,
        losses,
        dev_p,
        dev_q,
        soc: s.soc.iter().map(|o| o.map(val)).collect(),
    }
}

/// Per-term raw values, weights and weighted values of the objective.
pub fn objective_breakdown(res: &ScheduleResult) -> ObjectiveBreakdown {
    let w = res.weights;
    let sum = |f: &dyn Fn(&StepResult) -> f64| res.steps.iter().map(f).sum::<f64>();
    let raw = [
        ("losses", sum(&|s| s.losses), w.w_l),
        ("voltage", sum(&|s| s.v_dev.iter().sum()), w.w_v),
        ("current", sum(&|s| s.l_dev.iter().sum()), w.w_lim),
        ("schedule_p", sum(&|s| s.dev_p), w.w_p),
        ("schedule_q", sum(&|s| s.dev_q), w.w_q),
    ];
    ObjectiveBreakdown {
        terms: raw
            .iter()
            .map(|&(name, raw, weight)| BreakdownTerm { name, raw, weight, weighted: raw * weight })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ViolationKind {
    Overvoltage,
    Undervoltage,
    Overcurrent,
    /// Setpoint outside the resource's flexibility box.
    OutsideBox,
}

impl ViolationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationKind::Overvoltage => "overvoltage",
            ViolationKind::Undervoltage => "undervoltage",
            ViolationKind::Overcurrent => "overcurrent",
            ViolationKind::OutsideBox => "outside_box",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub step: usize,
    /// MV node/branch id, `grid/element` for LV, or resource id.
    pub element: String,
    pub kind: ViolationKind,
    pub value: f64,
    pub limit: f64,
    /// Hard limits are LV limits and resource boxes; MV limits are priced.
    pub hard: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    /// Max |V| difference between the schedule's MV state and the exact
    /// MV power flow with the same LV draws (p.u.).
    pub mv_voltage_discrepancy: f64,
    /// Max |I| difference on MV branches (p.u.).
    pub mv_current_discrepancy: f64,
    /// Max difference between the linear LV prediction and the full LV load
    /// flow, over grids with a reference network.
    pub lv_voltage_discrepancy: Option<f64>,
    pub lv_current_discrepancy: Option<f64>,
    pub violations: Vec<Violation>,
}

impl VerificationReport {
    pub fn hard_violations(&self) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(|v| v.hard)
    }
}

/// Allowance (p.u.) on resource boxes, above interior-point accuracy.
const BOX_TOL: f64 = 1e-6;

/// Re-simulates a schedule with the exact MV power flow and, where a
/// reference network exists, the full LV load flow.
pub fn verify_against_oracle(res: &ScheduleResult, sc: &OpfScenario) -> Result<VerificationReport, OpfError> {
    verify_setpoints(sc, &res.setpoints(), Some(res), 2e-3)
}

/// Re-simulates setpoints; `tol` (p.u.) is the allowance before a limit
/// excursion counts as a violation.
pub fn verify_setpoints(
    sc: &OpfScenario,
    sp: &Setpoints,
    expected: Option<&ScheduleResult>,
    tol: f64,
) -> Result<VerificationReport, OpfError> {
    sc.validate()?;
    let n = sc.resources.len();
    let mut rep = VerificationReport {
        mv_voltage_discrepancy: 0.0,
        mv_current_discrepancy: 0.0,
        lv_voltage_discrepancy: None,
        lv_current_discrepancy: None,
        violations: Vec::new(),
    };
    for (idx, &t) in sp.steps.iter().enumerate() {
        let (dp, dq) = (&sp.dp[idx], &sp.dq[idx]);
        if dp.len() != n || dq.len() != n {
            return Err(OpfError::SetpointShape { got: dp.len().min(dq.len()), expected: n });
        }
        let slack_v = sp.slack_v[idx];
        for (k, r) in sc.resources.iter().enumerate() {
            for (val, lo, hi) in [(dp[k], r.dp_lo_kw, r.dp_hi_kw), (dq[k], r.dq_lo_kvar, r.dq_hi_kvar)] {
                let (lo, hi) = (sc.pu(lo), sc.pu(hi));
                if val < lo - BOX_TOL || val > hi + BOX_TOL {
                    rep.violations.push(Violation {
                        step: t,
                        element: r.id.clone(),
                        kind: ViolationKind::OutsideBox,
                        value: val,
                        limit: if val < lo { lo } else { hi },
                        hard: true,
                    });
                }
            }
        }

        // MV with the linear LV draws, comparable to the schedule
        let linear = sc.linear_draw_deltas(t, dp, dq);
        let draws: Vec<(f64, f64)> = (0..sc.lv.len())
            .map(|g| {
                let b = sc.lv_draw(g, t);
                (b.0 + linear[g].0, b.1 + linear[g].1)
            })
            .collect();
        let mv = sc.mv_flow(t, &draws, slack_v)?;
        if let Some(step) = expected.and_then(|r| r.steps.iter().find(|s| s.t == t)) {
            for (a, b) in mv.v.iter().zip(&step.mv.v) {
                rep.mv_voltage_discrepancy = rep.mv_voltage_discrepancy.max((a.sqrt() - b.max(0.0).sqrt()).abs());
            }
            for (a, b) in mv.l.iter().zip(&step.mv.l) {
                rep.mv_current_discrepancy =
                    rep.mv_current_discrepancy.max((a.max(0.0).sqrt() - b.max(0.0).sqrt()).abs());
            }
        }

        // exact coupled state for the violation set
        let exact = sc.coupled_flow(t, dp, dq, slack_v)?;
        for (i, node) in sc.mv.nodes.iter().enumerate() {
            let v = exact.mv.v[i].sqrt();
            push_voltage(&mut rep.violations, t, node.id.clone(), v, node.vmin, node.vmax, tol, false);
        }
        for (k, br) in sc.mv.branches.iter().enumerate() {
            let i = exact.mv.l[k].max(0.0).sqrt();
            if i > br.imax + tol {
                rep.violations.push(Violation {
                    step: t,
                    element: br.id(),
                    kind: ViolationKind::Overcurrent,
                    value: i,
                    limit: br.imax,
                    hard: false,
                });
            }
        }
        for (g, grid) in sc.lv.iter().enumerate() {
            let m = grid.model(t);
            let src = exact.mv.v[sc.link_node(g)].sqrt();
            let (v, i) = match &exact.lv[g] {
                Some(st) => {
                    let net = grid.reference.as_ref().expect("reference present");
                    let v: Vec<f64> =
                        m.nodes.iter().map(|id| st.v[index_of(net.nodes.iter().map(|n| &n.id), id)].sqrt()).collect();
                    let i: Vec<f64> = m
                        .branches
                        .iter()
                        .map(|id| st.l[index_of(net.branches.iter().map(|b| b.id()), id)].max(0.0).sqrt())
                        .collect();
                    let deltas = node_deltas(sc, g, dp, dq);
                    let mut op = grid.op[t].clone();
                    op.v0 = op.drop.iter().map(|d| src - d).collect();
                    let pred = crate::lv::predict_state(m, &op, &deltas).map_err(ScenarioError::from)?;
                    let dv = pred.v.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    let di = pred.i.iter().zip(&i).map(|(a, b)| (a.abs() - b).abs()).fold(0.0, f64::max);
                    rep.lv_voltage_discrepancy = Some(rep.lv_voltage_discrepancy.unwrap_or(0.0).max(dv));
                    rep.lv_current_discrepancy = Some(rep.lv_current_discrepancy.unwrap_or(0.0).max(di));
                    (v, i)
                }
                None => {
                    let deltas = node_deltas(sc, g, dp, dq);
                    let mut op = grid.op[t].clone();
                    op.v0 = op.drop.iter().map(|d| src - d).collect();
                    let pred = crate::lv::predict_state(m, &op, &deltas).map_err(ScenarioError::from)?;
                    (pred.v, pred.i.iter().map(|x| x.abs()).collect())
                }
            };
            for (j, id) in m.nodes.iter().enumerate() {
                let (vmin, vmax) = grid.node_limits[j];
                push_voltage(&mut rep.violations, t, format!("{}/{id}", grid.id), v[j], vmin, vmax, tol, true);
            }
            for (j, id) in m.branches.iter().enumerate() {
                if i[j] > grid.imax[j] + tol {
                    rep.violations.push(Violation {
                        step: t,
                        element: format!("{}/{id}", grid.id),
                        kind: ViolationKind::Overcurrent,
                        value: i[j],
                        limit: grid.imax[j],
                        hard: true,
                    });
                }
            }
        }
    }
    Ok(rep)
}

fn index_of<S: AsRef<str>>(mut it: impl Iterator<Item = S>, id: &str) -> usize {
    it.position(|s| s.as_ref() == id).expect("model elements exist in the reference network")
}

fn node_deltas(sc: &OpfScenario, g: usize, dp: &[f64], dq: &[f64]) -> Vec<crate::lv::NodeDelta> {
    sc.resources
        .iter()
        .enumerate()
        .filter(|(_, r)| r.lv_grid == sc.lv[g].id)
        .map(|(k, r)| crate::lv::NodeDelta::new(r.lv_node.clone(), dp[k], dq[k]))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn push_voltage(
    out: &mut Vec<Violation>,
    step: usize,
    element: String,
    v: f64,
    vmin: f64,
    vmax: f64,
    tol: f64,
    hard: bool,
) {
    let (kind, limit) = if v > vmax + tol {
        (ViolationKind::Overvoltage, vmax)
    } else if v < vmin - tol {
        (ViolationKind::Undervoltage, vmin)
    } else {
        return;
    };
    out.push(Violation { step, element, kind, value: v, limit, hard });
}
