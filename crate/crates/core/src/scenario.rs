//! Scenario data shared by the scheduling, envelope and coordination
//! layers: the MV network, model-less LV grids, flexible resources, time
//! series and settings.
//!
//! Power quantities in files are kW/kvar; everything handed to the
//! formulations is p.u. on the MV base power. Injection convention
//! throughout (generation positive), except the LV transformer draw and
//! the TSO schedule, which are positive when power flows downstream.

use std::collections::BTreeMap;

use crate::grid::{DistflowSolver, FlowState, GridError, Network};
use crate::lv::{
    coefficients_from_reference, lv_load_flow, LvError, LvLoading, LvOperatingPoint, ReferenceOptions, SensitivityModel,
};

/// Series id carrying the TSO schedule (scheduled import at the P-SS).
pub const TSO_SERIES: &str = "@tso";

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("inconsistent scenario: {}", .0.join("; "))]
    Inconsistent(Vec<String>),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Lv(#[from] LvError),
    #[error("coupled MV/LV load flow did not settle at step {step}")]
    CouplingDiverged { step: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ResourceKind {
    Pv,
    Load,
    EvStorage,
}

impl ResourceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ResourceKind::Pv => "pv",
            ResourceKind::Load => "load",
            ResourceKind::EvStorage => "ev",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pv" => Some(ResourceKind::Pv),
            "load" => Some(ResourceKind::Load),
            "ev" | "storage" | "ess" => Some(ResourceKind::EvStorage),
            _ => None,
        }
    }
}

/// A controllable LV resource. Boxes are deviations from the resource's
/// own baseline series, in kW/kvar.
#[derive(Debug, Clone, PartialEq)]
pub struct Resource {
    pub id: String,
    pub lv_grid: String,
    pub lv_node: String,
    pub kind: ResourceKind,
    pub dp_lo_kw: f64,
    pub dp_hi_kw: f64,
    pub dq_lo_kvar: f64,
    pub dq_hi_kvar: f64,
    /// Inverter rating; 0 disables the apparent-power cone.
    pub s_kva: f64,
    pub pf_lim: f64,
    /// `f64::INFINITY` when the resource has no ramp limit.
    pub ramp_kw_per_hr: f64,
    pub eta: f64,
    /// Storage capacity; 0 disables the state-of-charge chain.
    pub cap_kwh: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    pub soc0: f64,
}

impl Resource {
    pub fn has_storage(&self) -> bool {
        self.kind == ResourceKind::EvStorage && self.cap_kwh > 0.0
    }

    fn issues(&self, out: &mut Vec<String>) {
        let id = &self.id;
        let nums = [
            self.dp_lo_kw,
            self.dp_hi_kw,
            self.dq_lo_kvar,
            self.dq_hi_kvar,
            self.s_kva,
            self.pf_lim,
            self.eta,
            self.cap_kwh,
            self.soc_min,
            self.soc_max,
            self.soc0,
        ];
        if nums.iter().any(|v| !v.is_finite()) {
            out.push(format!("resource {id}: non-finite parameter"));
            return;
        }
        if self.dp_lo_kw > self.dp_hi_kw || self.dq_lo_kvar > self.dq_hi_kvar {
            out.push(format!("resource {id}: flexibility box has lower > upper"));
        }
        if self.s_kva < 0.0 {
            out.push(format!("resource {id}: negative s_kva"));
        }
        if !(self.pf_lim > 0.0 && self.pf_lim <= 1.0) {
            out.push(format!("resource {id}: pf_lim {} outside (0, 1]", self.pf_lim));
        }
        if !(self.ramp_kw_per_hr >= 0.0) {
            out.push(format!("resource {id}: ramp must be non-negative (inf for none)"));
        }
        if self.has_storage() {
            if !(self.eta > 0.0 && self.eta <= 1.0) {
                out.push(format!("resource {id}: eta {} outside (0, 1]", self.eta));
            }
            if !(0.0 <= self.soc_min && self.soc_min <= self.soc0 && self.soc0 <= self.soc_max && self.soc_max <= 1.0) {
                out.push(format!("resource {id}: need 0 <= soc_min <= soc0 <= soc_max <= 1"));
            }
        }
        if self.cap_kwh < 0.0 {
            out.push(format!("resource {id}: negative cap_kwh"));
        }
    }
}

/// Weights of the scheduling objective: losses, voltage hinge, current
/// hinge, and P/Q deviations from the TSO schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveWeights {
    pub w_l: f64,
    pub w_v: f64,
    pub w_lim: f64,
    pub w_p: f64,
    pub w_q: f64,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        ObjectiveWeights { w_l: 1.0, w_v: 100.0, w_lim: 100.0, w_p: 0.0, w_q: 0.0 }
    }
}

impl ObjectiveWeights {
    pub fn losses_only() -> Self {
        ObjectiveWeights { w_l: 1.0, w_v: 0.0, w_lim: 0.0, w_p: 0.0, w_q: 0.0 }
    }

    pub fn zero() -> Self {
        ObjectiveWeights { w_l: 0.0, w_v: 0.0, w_lim: 0.0, w_p: 0.0, w_q: 0.0 }
    }
}

/// Per-element `(p_kw, q_kvar)` series. Element ids are MV node ids, LV
/// grid ids (net injection of the whole LV grid), `grid/node` for LV nodal
/// loads excluding resources, resource ids, and [`TSO_SERIES`].
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub steps: usize,
    pub series: BTreeMap<String, Vec<(f64, f64)>>,
}

impl TimeSeries {
    pub fn new(steps: usize) -> Self {
        TimeSeries { steps, series: BTreeMap::new() }
    }

    /// `(p_kw, q_kvar)` of `id` at `t`, zero when absent.
    pub fn get(&self, id: &str, t: usize) -> (f64, f64) {
        self.series.get(id).and_then(|s| s.get(t)).copied().unwrap_or((0.0, 0.0))
    }

    pub fn set(&mut self, id: &str, t: usize, p_kw: f64, q_kvar: f64) {
        let steps = self.steps;
        let s = self.series.entry(id.to_string()).or_insert_with(|| vec![(0.0, 0.0); steps]);
        s[t] = (p_kw, q_kvar);
    }

    pub fn has(&self, id: &str) -> bool {
        self.series.contains_key(id)
    }
}

/// A model-less LV grid behind one MV/LV transformer.
#[derive(Debug, Clone, PartialEq)]
pub struct LvGrid {
    pub id: String,
    pub rating_kva: f64,
    /// `(Vmin, Vmax)` magnitudes aligned with the model's nodes.
    pub node_limits: Vec<(f64, f64)>,
    /// Ampacity aligned with the model's branches.
    pub imax: Vec<f64>,
    /// One model for the whole horizon, or one per step.
    pub models: Vec<SensitivityModel>,
    /// One operating point per step.
    pub op: Vec<LvOperatingPoint>,
    /// Full LV network when available; used for verification and refresh.
    pub reference: Option<Network>,
}

impl LvGrid {
    pub fn model(&self, t: usize) -> &SensitivityModel {
        if self.models.len() == 1 {
            &self.models[0]
        } else {
            &self.models[t]
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSettings {
    pub dt_min: f64,
    pub ramp_threshold_kw_per_hr: f64,
    /// Bounds on the P-SS voltage magnitude when it is a decision variable.
    pub slack_v_min: f64,
    pub slack_v_max: f64,
    /// P-SS voltage magnitude of the baseline.
    pub slack_v0: f64,
    pub over_rating: f64,
    pub relaxation_threshold: f64,
    /// Trust radius for LV coefficients as a fraction of grid rating.
    pub trust_radius_frac: f64,
    /// Rolling-horizon window length in steps; `None` solves the horizon at once.
    pub window: Option<usize>,
    pub tol_feas: f64,
    pub tol_gap: f64,
}

impl Default for ScenarioSettings {
    fn default() -> Self {
        ScenarioSettings {
            dt_min: 10.0,
            ramp_threshold_kw_per_hr: 4.0,
            slack_v_min: 0.95,
            slack_v_max: 1.05,
            slack_v0: 1.0,
            over_rating: 1.1,
            relaxation_threshold: 1e-4,
            trust_radius_frac: 0.2,
            window: None,
            tol_feas: 1e-8,
            tol_gap: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpfScenario {
    pub name: String,
    pub mv: Network,
    pub lv: Vec<LvGrid>,
    pub resources: Vec<Resource>,
    pub series: TimeSeries,
    pub weights: ObjectiveWeights,
    pub settings: ScenarioSettings,
    /// Per-step P-SS voltage magnitude overriding `settings.slack_v0`.
    pub slack_v: Option<Vec<f64>>,
}

/// Resource position inside its LV grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResourceSite {
    pub grid: usize,
    pub injector: usize,
}

/// Exact state of the MV grid with each LV grid either solved by its
/// reference network or represented by its linear transformer-flow model.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledFlow {
    pub mv: FlowState,
    pub lv: Vec<Option<FlowState>>,
    /// Active/reactive draw of each LV grid from the MV grid (p.u.).
    pub draws: Vec<(f64, f64)>,
}

impl OpfScenario {
    pub fn steps(&self) -> usize {
        self.series.steps
    }

    pub fn dt_hours(&self) -> f64 {
        self.settings.dt_min / 60.0
    }

    pub fn pu(&self, kw: f64) -> f64 {
        kw / self.mv.base_kva
    }

    pub fn kw(&self, pu: f64) -> f64 {
        pu * self.mv.base_kva
    }

    pub fn slack_v0(&self, t: usize) -> f64 {
        self.slack_v.as_ref().map_or(self.settings.slack_v0, |v| v[t])
    }

    pub fn grid_index(&self, id: &str) -> Option<usize> {
        self.lv.iter().position(|g| g.id == id)
    }

    /// Every scenario defect, not just the first.
    pub fn issues(&self) -> Vec<String> {
        let mut out = Vec::new();
        let report = crate::grid::validate_network(&self.mv);
        out.extend(report.issues.iter().map(|i| format!("MV network: {i}")));
        let t_count = self.steps();
        if t_count == 0 {
            out.push("horizon has no steps".into());
        }
        if !(self.settings.dt_min > 0.0) {
            out.push("dt_min must be positive".into());
        }
        if !(self.settings.slack_v_min > 0.0 && self.settings.slack_v_min <= self.settings.slack_v_max) {
            out.push("slack voltage range is empty".into());
        }
        if let Some(v) = &self.slack_v {
            if v.len() != t_count || v.iter().any(|x| !(*x > 0.0)) {
                out.push("per-step slack voltage must be positive with one value per step".into());
            }
        }
        for (id, s) in &self.series.series {
            if s.len() != t_count {
                out.push(format!("series {id} has {} steps, horizon is {t_count}", s.len()));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for link in &self.mv.links {
            if self.grid_index(&link.lv_grid).is_none() {
                out.push(format!("link {} -> {}: unknown LV grid", link.mv_node, link.lv_grid));
            }
        }
        for g in &self.lv {
            if !seen.insert(g.id.clone()) {
                out.push(format!("LV grid {} defined twice", g.id));
            }
            if !self.mv.links.iter().any(|l| l.lv_grid == g.id) {
                out.push(format!("LV grid {} has no transformer link", g.id));
            }
            if g.models.is_empty() {
                out.push(format!("LV grid {} has no sensitivity model", g.id));
            } else if g.models.len() != 1 && g.models.len() != t_count {
                out.push(format!("LV grid {}: {} models for {t_count} steps", g.id, g.models.len()));
            }
            if g.op.len() != t_count {
                out.push(format!("LV grid {}: operating points for {} of {t_count} steps", g.id, g.op.len()));
            }
            for (i, m) in g.models.iter().enumerate() {
                if let Err(e) = m.validate() {
                    out.push(format!("LV grid {} model {i}: {e}", g.id));
                }
                if m.nodes.len() != g.node_limits.len() || m.branches.len() != g.imax.len() {
                    out.push(format!("LV grid {} model {i}: limits do not match observed elements", g.id));
                }
            }
            for (t, op) in g.op.iter().enumerate() {
                if op.step != t {
                    out.push(format!("LV grid {}: operating point {t} labelled step {}", g.id, op.step));
                }
                if g.models.is_empty() {
                    break;
                }
                let m = if g.models.len() == 1 { &g.models[0] } else { &g.models[t.min(g.models.len() - 1)] };
                if op.v0.len() != m.nodes.len() || op.i0.len() != m.branches.len() || op.drop.len() != m.nodes.len() {
                    out.push(format!("LV grid {}: operating point {t} does not match model", g.id));
                } else if op.v0.iter().any(|v| !(*v > 0.0))
                    || op.i0.iter().any(|i| !i.is_finite())
                    || op.drop.iter().any(|d| !d.is_finite())
                {
                    out.push(format!("LV grid {}: operating point {t} out of range", g.id));
                }
            }
            if !self.series.has(&g.id) {
                out.push(format!("LV grid {} has no transformer series", g.id));
            }
            if let Some(r) = &g.reference {
                if r.base_kva != self.mv.base_kva {
                    out.push(format!("LV grid {}: reference base power differs from MV", g.id));
                }
                out.extend(
                    crate::grid::validate_network(r).issues.iter().map(|i| format!("LV grid {} reference: {i}", g.id)),
                );
            }
            if !(g.rating_kva > 0.0) {
                out.push(format!("LV grid {}: rating must be positive", g.id));
            }
        }
        let mut rid = std::collections::HashSet::new();
        for r in &self.resources {
            if !rid.insert(r.id.clone()) {
                out.push(format!("resource {} defined twice", r.id));
            }
            r.issues(&mut out);
            match self.grid_index(&r.lv_grid) {
                None => out.push(format!("resource {}: unknown LV grid {}", r.id, r.lv_grid)),
                Some(g) => {
                    if self.lv[g].models.iter().any(|m| m.injector_index(&r.lv_node).is_none()) {
                        out.push(format!(
                            "resource {}: node {} is not an injector of grid {}",
                            r.id, r.lv_node, r.lv_grid
                        ));
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let issues = self.issues();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Inconsistent(issues))
        }
    }

    pub fn site(&self, k: usize) -> ResourceSite {
        let r = &self.resources[k];
        let grid = self.grid_index(&r.lv_grid).expect("validated scenario");
        let injector = self.lv[grid].models[0].injector_index(&r.lv_node).expect("validated scenario");
        ResourceSite { grid, injector }
    }

    /// Baseline `(p, q)` of resource `k` at `t` (p.u.).
    pub fn resource_base(&self, k: usize, t: usize) -> (f64, f64) {
        let (p, q) = self.series.get(&self.resources[k].id, t);
        (self.pu(p), self.pu(q))
    }

    /// Baseline draw `(p, q)` of LV grid `g` at `t` (p.u., positive into the grid).
    pub fn lv_draw(&self, g: usize, t: usize) -> (f64, f64) {
        let (p, q) = self.series.get(&self.lv[g].id, t);
        (-self.pu(p), -self.pu(q))
    }

    /// Scheduled P-SS import `(p, q)` at `t` (p.u.), if a schedule exists.
    pub fn schedule(&self, t: usize) -> Option<(f64, f64)> {
        self.series.has(TSO_SERIES).then(|| {
            let (p, q) = self.series.get(TSO_SERIES, t);
            (self.pu(p), self.pu(q))
        })
    }

    /// Per-step change of SOC per unit of injected p.u. power.
    pub fn soc_gain(&self, k: usize) -> f64 {
        let r = &self.resources[k];
        r.eta * self.mv.base_kva * self.dt_hours() / r.cap_kwh
    }

    /// Baseline SOC at the end of step `t` (`soc0` before step 0).
    pub fn baseline_soc(&self, k: usize, t: Option<usize>) -> f64 {
        let r = &self.resources[k];
        let Some(t) = t else { return r.soc0 };
        let g = self.soc_gain(k);
        (0..=t).fold(r.soc0, |s, tau| s - g * self.resource_base(k, tau).0)
    }

    /// Net MV nodal injections at `t` given LV draws.
    pub fn mv_injections(&self, t: usize, draws: &[(f64, f64)]) -> (Vec<f64>, Vec<f64>) {
        let mut p = Vec::with_capacity(self.mv.nodes.len());
        let mut q = Vec::with_capacity(self.mv.nodes.len());
        for n in &self.mv.nodes {
            let (pk, qk) = self.series.get(&n.id, t);
            p.push(self.pu(pk));
            q.push(self.pu(qk));
        }
        for link in &self.mv.links {
            let (Some(i), Some(g)) =
                (self.mv.nodes.iter().position(|n| n.id == link.mv_node), self.grid_index(&link.lv_grid))
            else {
                continue;
            };
            p[i] -= draws[g].0;
            q[i] -= draws[g].1;
        }
        (p, q)
    }

    /// Linear transformer-flow change of each LV grid for per-resource `Δ`.
    pub fn linear_draw_deltas(&self, t: usize, dp: &[f64], dq: &[f64]) -> Vec<(f64, f64)> {
        let mut out = vec![(0.0, 0.0); self.lv.len()];
        for k in 0..self.resources.len() {
            if dp[k] == 0.0 && dq[k] == 0.0 {
                continue;
            }
            let s = self.site(k);
            let tr = &self.lv[s.grid].model(t).transformer;
            let j = s.injector;
            out[s.grid].0 += tr.dp_dp[j] * dp[k] + tr.dp_dq[j] * dq[k];
            out[s.grid].1 += tr.dq_dp[j] * dp[k] + tr.dq_dq[j] * dq[k];
        }
        out
    }

    /// LV nodal injections of the reference network of grid `g` at `t`.
    pub fn lv_loading(&self, g: usize, t: usize, dp: &[f64], dq: &[f64], source_v: f64) -> Option<LvLoading> {
        let grid = &self.lv[g];
        let net = grid.reference.as_ref()?;
        let mut ld = LvLoading::flat(net);
        ld.source_v = source_v;
        for (i, n) in net.nodes.iter().enumerate() {
            let (p, q) = self.series.get(&format!("{}/{}", grid.id, n.id), t);
            ld.p[i] = self.pu(p);
            ld.q[i] = self.pu(q);
        }
        for (k, r) in self.resources.iter().enumerate() {
            if r.lv_grid != grid.id {
                continue;
            }
            if let Some(i) = net.nodes.iter().position(|n| n.id == r.lv_node) {
                let (p0, q0) = self.resource_base(k, t);
                ld.p[i] += p0 + dp[k];
                ld.q[i] += q0 + dq[k];
            }
        }
        Some(ld)
    }

    /// Exact MV flow with LV draws held at `draws`.
    pub fn mv_flow(&self, t: usize, draws: &[(f64, f64)], slack_v: f64) -> Result<FlowState, ScenarioError> {
        let (p, q) = self.mv_injections(t, draws);
        Ok(DistflowSolver::new(&self.mv)?.solve(&p, &q, slack_v * slack_v)?)
    }

    /// Exact coupled MV/LV state for per-resource deviations `dp`, `dq`
    /// (p.u.) and P-SS voltage magnitude `slack_v`.
    pub fn coupled_flow(&self, t: usize, dp: &[f64], dq: &[f64], slack_v: f64) -> Result<CoupledFlow, ScenarioError> {
        let mv_solver = DistflowSolver::new(&self.mv)?;
        let lv_solvers: Vec<Option<DistflowSolver>> = self
            .lv
            .iter()
            .map(|g| g.reference.as_ref().map(DistflowSolver::new).transpose())
            .collect::<Result<_, _>>()?;
        let linear = self.linear_draw_deltas(t, dp, dq);
        let mut draws: Vec<(f64, f64)> = (0..self.lv.len())
            .map(|g| {
                let b = self.lv_draw(g, t);
                (b.0 + linear[g].0, b.1 + linear[g].1)
            })
            .collect();
        let link_node: Vec<usize> = self
            .lv
            .iter()
            .map(|g| {
                let l = self.mv.links.iter().find(|l| l.lv_grid == g.id).expect("validated scenario");
                self.mv.nodes.iter().position(|n| n.id == l.mv_node).expect("validated scenario")
            })
            .collect();
        for _ in 0..100 {
            let (p, q) = self.mv_injections(t, &draws);
            let mv = mv_solver.solve(&p, &q, slack_v * slack_v)?;
            let mut lv = Vec::with_capacity(self.lv.len());
            let mut change: f64 = 0.0;
            for g in 0..self.lv.len() {
                match &lv_solvers[g] {
                    Some(s) => {
                        let ld = self.lv_loading(g, t, dp, dq, mv.v[link_node[g]].sqrt()).expect("reference present");
                        let st = lv_load_flow(s, &ld)?;
                        change = change.max((st.slack_p - draws[g].0).abs()).max((st.slack_q - draws[g].1).abs());
                        draws[g] = (st.slack_p, st.slack_q);
                        lv.push(Some(st));
                    }
                    None => lv.push(None),
                }
            }
            if change < 1e-12 {
                let (p, q) = self.mv_injections(t, &draws);
                let mv = mv_solver.solve(&p, &q, slack_v * slack_v)?;
                return Ok(CoupledFlow { mv, lv, draws });
            }
        }
        Err(ScenarioError::CouplingDiverged { step: t })
    }

    /// Index of the MV node feeding LV grid `g`.
    pub fn link_node(&self, g: usize) -> usize {
        let l = self.mv.links.iter().find(|l| l.lv_grid == self.lv[g].id).expect("validated scenario");
        self.mv.nodes.iter().position(|n| n.id == l.mv_node).expect("validated scenario")
    }
}

/// Fills LV operating points, transformer series and (when `models` is
/// set) per-step coefficients from each grid's reference network by
/// solving the coupled MV/LV load flow at the baseline.
pub fn assemble_from_reference(sc: &mut OpfScenario, models: Option<ReferenceOptions>) -> Result<(), ScenarioError> {
    let steps = sc.steps();
    let zeros = vec![0.0; sc.resources.len()];
    for g in 0..sc.lv.len() {
        if sc.lv[g].reference.is_none() {
            continue;
        }
        if !sc.series.has(&sc.lv[g].id) {
            sc.series.series.insert(sc.lv[g].id.clone(), vec![(0.0, 0.0); steps]);
        }
    }
    let mut ops: Vec<Vec<LvOperatingPoint>> = vec![Vec::with_capacity(steps); sc.lv.len()];
    let mut per_step: Vec<Vec<SensitivityModel>> = vec![Vec::with_capacity(steps); sc.lv.len()];
    for t in 0..steps {
        let flow = sc.coupled_flow(t, &zeros, &zeros, sc.slack_v0(t))?;
        for g in 0..sc.lv.len() {
            let Some(st) = &flow.lv[g] else { continue };
            let net = sc.lv[g].reference.as_ref().expect("reference present");
            let src = flow.mv.v[sc.link_node(g)].sqrt();
            let v0: Vec<f64> = st.v.iter().map(|v| v.sqrt()).collect();
            ops[g].push(LvOperatingPoint {
                step: t,
                drop: v0.iter().map(|v| src - v).collect(),
                v0,
                i0: st.l.iter().map(|l| l.max(0.0).sqrt()).collect(),
            });
            let (p, q) = flow.draws[g];
            let id = sc.lv[g].id.clone();
            sc.series.set(&id, t, -sc.kw(p), -sc.kw(q));
            if let Some(opts) = models {
                let ld = sc.lv_loading(g, t, &zeros, &zeros, src).expect("reference present");
                let mut m = coefficients_from_reference(&id, net, &ld, opts)?;
                m.stamp.step = Some(t);
                per_step[g].push(m);
            }
        }
    }
    for g in 0..sc.lv.len() {
        if sc.lv[g].reference.is_none() {
            continue;
        }
        sc.lv[g].op = std::mem::take(&mut ops[g]);
        if models.is_some() {
            sc.lv[g].models = std::mem::take(&mut per_step[g]);
        }
    }
    Ok(())
}
