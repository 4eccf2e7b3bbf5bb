//! TSO-DSO coordination schemes.
//!
//! Under the TSO leader the envelopes are the pre-qualified offer. Under
//! the DSO leader the DSO first schedules its own flexibility, then offers
//! what remains around the new operating point.

use thiserror::Error;

use crate::flex::{sweep_envelope, FlexEnvelope, FlexError, FlexOptions, ServiceClass, ServiceLabel};
use crate::lv::{coefficients_from_reference, exceeds_trust_radius, predict_state, NodeDelta, ReferenceOptions};
use crate::opf::{solve_schedule_with, OpfError, ScheduleResult};
use crate::scenario::{OpfScenario, ScenarioError};

#[derive(Debug, Error)]
pub enum CoordinationError {
    #[error("unknown coordination scheme `{0}` (expected tso_leader or dso_leader)")]
    UnknownScheme(String),
    #[error(transparent)]
    Flex(#[from] FlexError),
    #[error(transparent)]
    Opf(#[from] OpfError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemeKind {
    TsoLeader,
    DsoLeader,
}

impl SchemeKind {
    pub fn parse(s: &str) -> Result<Self, CoordinationError> {
        match s.trim() {
            "tso_leader" => Ok(SchemeKind::TsoLeader),
            "dso_leader" => Ok(SchemeKind::DsoLeader),
            other => Err(CoordinationError::UnknownScheme(other.to_string())),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeKind::TsoLeader => "tso_leader",
            SchemeKind::DsoLeader => "dso_leader",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Process {
    /// DSO checks offered flexibility against its grid limits.
    Prequalification,
    /// DSO schedules distribution flexibility for its own grid security.
    DsoOperation,
    /// Remaining flexibility is aggregated at the primary substation.
    ResidualAggregation,
    /// TSO contracts flexibility at the interface.
    TsoMarket,
}

impl Process {
    pub fn as_str(self) -> &'static str {
        match self {
            Process::Prequalification => "prequalification",
            Process::DsoOperation => "dso_operation",
            Process::ResidualAggregation => "residual_aggregation",
            Process::TsoMarket => "tso_market",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoordinationScheme {
    pub kind: SchemeKind,
    /// In execution order.
    pub processes: Vec<Process>,
}

impl CoordinationScheme {
    pub fn new(kind: SchemeKind) -> Self {
        let processes = match kind {
            SchemeKind::TsoLeader => vec![Process::Prequalification, Process::TsoMarket, Process::DsoOperation],
            SchemeKind::DsoLeader => vec![Process::DsoOperation, Process::ResidualAggregation, Process::TsoMarket],
        };
        CoordinationScheme { kind, processes }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Operator {
    Tso,
    Dso,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServiceEntry {
    pub name: &'static str,
    pub operator: Operator,
    pub label: ServiceLabel,
}

/// Standard fast and slow services per operator.
pub struct ServiceCatalog;

const fn entry(name: &'static str, operator: Operator, label: ServiceLabel) -> ServiceEntry {
    ServiceEntry { name, operator, label }
}

impl ServiceCatalog {
    pub const ENTRIES: &'static [ServiceEntry] = &[
        entry("Inertia", Operator::Tso, ServiceLabel::Fast),
        entry("FCR/FFR/EFR", Operator::Tso, ServiceLabel::Fast),
        entry("aFRR", Operator::Tso, ServiceLabel::Fast),
        entry("Ramping response", Operator::Tso, ServiceLabel::Fast),
        entry("mFRR", Operator::Tso, ServiceLabel::Slow),
        entry("RR", Operator::Tso, ServiceLabel::Slow),
        entry("Voltage and reactive power", Operator::Tso, ServiceLabel::Slow),
        entry("Congestion", Operator::Tso, ServiceLabel::Slow),
        entry("Black start", Operator::Tso, ServiceLabel::Slow),
        entry("Balancing capacity reserves", Operator::Tso, ServiceLabel::Slow),
        entry("Voltage", Operator::Dso, ServiceLabel::Slow),
        entry("Congestion", Operator::Dso, ServiceLabel::Slow),
        entry("Peak shaving", Operator::Dso, ServiceLabel::Slow),
        entry("Load levelling", Operator::Dso, ServiceLabel::Slow),
    ];

    pub fn services(operator: Operator, label: ServiceLabel) -> Vec<&'static str> {
        Self::ENTRIES.iter().filter(|e| e.operator == operator && e.label == label).map(|e| e.name).collect()
    }

    /// TSO services an envelope of class `label` can serve, `;`-joined.
    pub fn tso_label(label: ServiceLabel) -> String {
        Self::services(Operator::Tso, label).join(";")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsoLeaderOutcome {
    pub scheme: CoordinationScheme,
    pub fast: FlexEnvelope,
    pub slow: FlexEnvelope,
}

/// Pre-qualified fast and slow envelopes on the full flexibility boxes.
pub fn run_tso_leader(sc: &OpfScenario, opts: &FlexOptions) -> Result<TsoLeaderOutcome, CoordinationError> {
    let fast = sweep_envelope(sc, ServiceClass::fast(sc)?, opts)?;
    let slow = sweep_envelope(sc, ServiceClass::slow(sc)?, opts)?;
    Ok(TsoLeaderOutcome { scheme: CoordinationScheme::new(SchemeKind::TsoLeader), fast, slow })
}

/// Scenario moved to a schedule's operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct Recentred {
    pub scenario: OpfScenario,
    /// `(grid, step)` pairs whose coefficients were recomputed from the
    /// reference network because the schedule left the trust radius.
    pub refreshed: Vec<(String, usize)>,
    /// Same, for grids without a reference network: coefficients kept.
    pub stale: Vec<(String, usize)>,
}

/// Moves baselines to the schedule and shrinks each box side by the
/// largest consumption over `box_steps`. LV operating points follow the
/// linear model; coefficients are recomputed where a grid's nodal change
/// exceeds the trust radius and a reference network exists.
pub fn recenter(sc: &OpfScenario, res: &ScheduleResult, box_steps: &[usize]) -> Result<Recentred, CoordinationError> {
    let mut out = sc.clone();
    let n = sc.resources.len();
    out.slack_v = Some((0..sc.steps()).map(|t| sc.slack_v0(t)).collect());
    let mut refresh: Vec<(usize, usize)> = Vec::new();
    let mut stale = Vec::new();

    for s in &res.steps {
        let t = s.t;
        out.slack_v.as_mut().expect("set above")[t] = s.mv.slack_v;
        let draws = sc.linear_draw_deltas(t, &s.dp, &s.dq);
        for (g, grid) in sc.lv.iter().enumerate() {
            let (p, q) = sc.series.get(&grid.id, t);
            out.series.set(&grid.id, t, p - sc.kw(draws[g].0), q - sc.kw(draws[g].1));
            let deltas: Vec<NodeDelta> = (0..n)
                .filter(|&k| sc.resources[k].lv_grid == grid.id)
                .map(|k| NodeDelta::new(sc.resources[k].lv_node.clone(), s.dp[k], s.dq[k]))
                .collect();
            let model = grid.model(t);
            let op = &grid.op[t];
            let pred = predict_state(model, op, &deltas).map_err(ScenarioError::from)?;
            let new_op = &mut out.lv[g].op[t];
            new_op.drop = op.drop.iter().zip(pred.v.iter().zip(&op.v0)).map(|(d, (v, v0))| d - (v - v0)).collect();
            new_op.v0 = pred.v;
            new_op.i0 = pred.i;
            let (dp, dq) = model.delta_vectors(&deltas).map_err(ScenarioError::from)?;
            if exceeds_trust_radius(&dp, &dq, sc.settings.trust_radius_frac * sc.pu(grid.rating_kva)) {
                if grid.reference.is_some() {
                    refresh.push((g, t));
                } else {
                    stale.push((grid.id.clone(), t));
                }
            }
        }
        for (k, r) in sc.resources.iter().enumerate() {
            let (p, q) = sc.series.get(&r.id, t);
            out.series.set(&r.id, t, p + sc.kw(s.dp[k]), q + sc.kw(s.dq[k]));
        }
    }

    for (k, r) in out.resources.iter_mut().enumerate() {
        let used = |f: &dyn Fn(&crate::opf::StepResult) -> f64| {
            res.steps.iter().filter(|s| box_steps.contains(&s.t)).map(|s| f(s).max(0.0)).fold(0.0, f64::max)
        };
        let kw = |pu: f64| pu * sc.mv.base_kva;
        r.dp_lo_kw = (r.dp_lo_kw + kw(used(&|s| -s.dp[k]))).min(0.0);
        r.dp_hi_kw = (r.dp_hi_kw - kw(used(&|s| s.dp[k]))).max(0.0);
        r.dq_lo_kvar = (r.dq_lo_kvar + kw(used(&|s| -s.dq[k]))).min(0.0);
        r.dq_hi_kvar = (r.dq_hi_kvar - kw(used(&|s| s.dq[k]))).max(0.0);
    }

    let zeros = vec![0.0; n];
    let mut refreshed = Vec::new();
    for &(g, t) in &refresh {
        let flow = out.coupled_flow(t, &zeros, &zeros, out.slack_v0(t))?;
        let st = flow.lv[g].as_ref().expect("reference present");
        let src = flow.mv.v[out.link_node(g)].sqrt();
        let id = out.lv[g].id.clone();
        let ld = out.lv_loading(g, t, &zeros, &zeros, src).expect("reference present");
        let net = out.lv[g].reference.as_ref().expect("reference present");
        let mut m =
            coefficients_from_reference(&id, net, &ld, ReferenceOptions::default()).map_err(ScenarioError::from)?;
        m.stamp.step = Some(t);
        let v0: Vec<f64> = st.v.iter().map(|v| v.sqrt()).collect();
        let grid = &mut out.lv[g];
        if grid.models.len() == 1 {
            grid.models = vec![grid.models[0].clone(); sc.steps()];
        }
        grid.models[t] = m;
        grid.op[t].drop = v0.iter().map(|v| src - v).collect();
        grid.op[t].v0 = v0;
        grid.op[t].i0 = st.l.iter().map(|l| l.max(0.0).sqrt()).collect();
        out.series.set(&id, t, -sc.kw(flow.draws[g].0), -sc.kw(flow.draws[g].1));
        refreshed.push((id, t));
    }
    Ok(Recentred { scenario: out, refreshed, stale })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DsoLeaderOutcome {
    pub scheme: CoordinationScheme,
    pub schedule: ScheduleResult,
    pub recentred: Recentred,
    pub fast: FlexEnvelope,
    pub slow: FlexEnvelope,
}

/// Schedules the DSO's own needs with the least activation that reaches
/// the optimum, then sweeps the residual envelopes. The P-SS voltage stays
/// at the baseline so both schemes offer at the same interface voltage.
pub fn run_dso_leader(sc: &OpfScenario, opts: &FlexOptions) -> Result<DsoLeaderOutcome, CoordinationError> {
    let schedule = solve_schedule_with(sc, true, true)?;
    let step = opts.target_step(sc);
    let window: Vec<usize> = (step + 1 - opts.window.clamp(1, step + 1)..=step).collect();
    let recentred = recenter(sc, &schedule, &window)?;
    let fast = sweep_envelope(&recentred.scenario, ServiceClass::fast(sc)?, opts)?;
    let slow = sweep_envelope(&recentred.scenario, ServiceClass::slow(sc)?, opts)?;
    Ok(DsoLeaderOutcome { scheme: CoordinationScheme::new(SchemeKind::DsoLeader), schedule, recentred, fast, slow })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flex::envelope_report;
    use crate::scenario::ObjectiveWeights;
    use crate::synthetic;

    fn opts() -> FlexOptions {
        FlexOptions { n_dirs: 8, step: Some(2), window: 2, ..FlexOptions::default() }
    }

    fn max_gap(a: &FlexEnvelope, b: &FlexEnvelope) -> f64 {
        a.vertices().iter().zip(b.vertices()).map(|(x, y)| (x.0 - y.0).abs().max((x.1 - y.1).abs())).fold(0.0, f64::max)
    }

    #[test]
    fn scheme_parsing() {
        assert_eq!(SchemeKind::parse("tso_leader").unwrap(), SchemeKind::TsoLeader);
        assert_eq!(SchemeKind::parse(" dso_leader ").unwrap(), SchemeKind::DsoLeader);
        assert!(
            matches!(SchemeKind::parse("shared_balancing"), Err(CoordinationError::UnknownScheme(s)) if s == "shared_balancing")
        );
        let s = CoordinationScheme::new(SchemeKind::DsoLeader);
        assert_eq!(s.processes.first(), Some(&Process::DsoOperation));
        assert_eq!(s.processes.last(), Some(&Process::TsoMarket));
        assert_eq!(CoordinationScheme::new(SchemeKind::TsoLeader).processes[0], Process::Prequalification);
    }

    #[test]
    fn catalog_labels() {
        assert!(ServiceCatalog::services(Operator::Dso, ServiceLabel::Fast).is_empty());
        assert!(ServiceCatalog::tso_label(ServiceLabel::Fast).contains("aFRR"));
        assert!(ServiceCatalog::services(Operator::Dso, ServiceLabel::Slow).contains(&"Peak shaving"));
    }

    #[test]
    fn idle_dso_leaves_offer_unchanged() {
        let mut sc = synthetic::tiny();
        sc.weights = ObjectiveWeights { w_l: 0.0, ..ObjectiveWeights::default() };
        let tso = run_tso_leader(&sc, &opts()).unwrap();
        let dso = run_dso_leader(&sc, &opts()).unwrap();
        assert!(dso.recentred.refreshed.is_empty());
        assert!(max_gap(&tso.slow, &dso.slow) < 1e-6, "{}", max_gap(&tso.slow, &dso.slow));
        assert!(max_gap(&tso.fast, &dso.fast) < 1e-6);
    }

    #[test]
    fn residual_inside_tso_offer() {
        let sc = synthetic::tiny();
        let tso = run_tso_leader(&sc, &opts()).unwrap();
        let dso = run_dso_leader(&sc, &opts()).unwrap();
        for (a, b) in [(&tso.slow, &dso.slow), (&tso.fast, &dso.fast)] {
            for (t, d) in a.points.iter().zip(&b.points) {
                let (ht, hd) = (t.direction.dot(t.delta.unwrap()), d.direction.dot(d.delta.unwrap()));
                assert!(hd <= ht + 1e-6, "θ {}: {hd} vs {ht}", t.theta);
            }
        }
        assert!(envelope_report(&dso.fast, &dso.slow).unwrap().contained);
    }

    #[test]
    fn deterministic() {
        let sc = synthetic::tiny();
        let (a, b) = (run_dso_leader(&sc, &opts()).unwrap(), run_dso_leader(&sc, &opts()).unwrap());
        assert_eq!(a.schedule.steps, b.schedule.steps);
        assert_eq!(a.recentred, b.recentred);
        assert_eq!((a.fast, a.slow), (b.fast, b.slow));
    }

    #[test]
    fn large_moves_refresh_coefficients() {
        let mut sc = synthetic::tiny();
        sc.settings.trust_radius_frac = 1e-6;
        sc.mv.nodes[1].vmin = 1.0;
        let res = solve_schedule_with(&sc, true, true).unwrap();
        let moved = res.steps.iter().filter(|s| s.dp.iter().chain(&s.dq).any(|d| d.abs() > 1e-6)).count();
        assert!(moved > 0);
        let rc = recenter(&sc, &res, &[2]).unwrap();
        assert_eq!(rc.refreshed.len(), moved);
        assert!(rc.stale.is_empty());
        let t = rc.refreshed[0].1;
        assert_eq!(rc.scenario.lv[0].models[t].stamp.step, Some(t));
    }
}
