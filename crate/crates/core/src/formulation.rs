//! Constraint set shared by the scheduling and envelope programs: relaxed
//! DistFlow on the MV grid, linear LV grids coupled through the transformer
//! flows and the square-root linearisation, inverter limits, storage.

use crate::conic::{Cone, LinExpr, ProgramBuilder, VarId};
use crate::grid::RadialTree;
use crate::scenario::{OpfScenario, ResourceKind};

/// Safeguard box for squared voltages when limits are soft.
const V_SAFE: (f64, f64) = (0.25, 2.25);

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum SlackVoltage {
    /// Decision variable with magnitude bounds.
    Bounded(f64, f64),
    /// Fixed at the scenario's baseline value.
    Fixed,
}

#[derive(Debug, Clone)]
pub(crate) struct FormulationOptions {
    /// Contiguous step window.
    pub steps: Vec<usize>,
    /// MV voltage/ampacity limits as constraints instead of safeguards.
    pub hard_limits: bool,
    pub slack: SlackVoltage,
    /// Resources pinned at Δ = 0.
    pub frozen: Vec<bool>,
    /// Per-step ramp cap per resource (p.u.), anchored at Δ = 0 before
    /// the window.
    pub ramp_caps: Option<Vec<f64>>,
    /// SOC before the first step of the window.
    pub soc_start: Vec<f64>,
}

impl FormulationOptions {
    pub fn new(sc: &OpfScenario, steps: Vec<usize>) -> Self {
        let n = sc.resources.len();
        let first = steps.first().copied().unwrap_or(0);
        let soc_start = (0..n).map(|k| sc.baseline_soc(k, first.checked_sub(1))).collect();
        FormulationOptions {
            steps,
            hard_limits: false,
            slack: SlackVoltage::Bounded(sc.settings.slack_v_min, sc.settings.slack_v_max),
            frozen: vec![false; n],
            ramp_caps: None,
            soc_start,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct StepVars {
    pub t: usize,
    pub v: Vec<VarId>,
    pub l: Vec<VarId>,
    pub p: Vec<VarId>,
    pub q: Vec<VarId>,
    pub p_sl: VarId,
    pub q_sl: VarId,
    pub dp: Vec<VarId>,
    pub dq: Vec<VarId>,
    pub soc: Vec<Option<VarId>>,
    /// LV voltage magnitude per grid per observed node.
    pub lv_v: Vec<Vec<LinExpr>>,
    pub lv_i: Vec<Vec<LinExpr>>,
    /// Change of the power drawn by each LV grid (p.u.).
    pub lv_dp_sl: Vec<LinExpr>,
    pub lv_dq_sl: Vec<LinExpr>,
}

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub tree: RadialTree,
    pub steps: Vec<StepVars>,
}

/// Adds every network/resource constraint of `opts.steps` to `b`.
pub(crate) fn build(sc: &OpfScenario, opts: &FormulationOptions, b: &mut ProgramBuilder) -> Layout {
    let tree = sc.mv.tree().expect("validated scenario");
    let mv = &sc.mv;
    let nres = sc.resources.len();
    let sites: Vec<_> = (0..nres).map(|k| sc.site(k)).collect();
    let link_nodes: Vec<usize> = (0..sc.lv.len()).map(|g| sc.link_node(g)).collect();
    let mut out: Vec<StepVars> = Vec::with_capacity(opts.steps.len());

    for &t in &opts.steps {
        // MV variables
        let v: Vec<VarId> = mv
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| {
                let name = format!("v[{t},{}]", n.id);
                if i == tree.slack {
                    match opts.slack {
                        SlackVoltage::Bounded(lo, hi) => b.var(name, lo * lo, hi * hi),
                        SlackVoltage::Fixed => {
                            let v0 = sc.slack_v0(t).powi(2);
                            b.var(name, v0, v0)
                        }
                    }
                } else if opts.hard_limits {
                    b.var(name, n.vmin * n.vmin, n.vmax * n.vmax)
                } else {
                    b.var(name, V_SAFE.0, V_SAFE.1)
                }
            })
            .collect();
        let l: Vec<VarId> = mv
            .branches
            .iter()
            .map(|br| {
                let cap = if opts.hard_limits { br.imax * br.imax } else { (10.0 * br.imax).powi(2) };
                b.var(format!("l[{t},{}]", br.id()), 0.0, cap)
            })
            .collect();
        let p: Vec<VarId> = mv.branches.iter().map(|br| b.free(format!("P[{t},{}]", br.id()))).collect();
        let q: Vec<VarId> = mv.branches.iter().map(|br| b.free(format!("Q[{t},{}]", br.id()))).collect();
        let p_sl = b.free(format!("p_sl[{t}]"));
        let q_sl = b.free(format!("q_sl[{t}]"));

        // resource deviations
        let mut dp = Vec::with_capacity(nres);
        let mut dq = Vec::with_capacity(nres);
        for (k, r) in sc.resources.iter().enumerate() {
            let (plo, phi, qlo, qhi) = if opts.frozen[k] {
                (0.0, 0.0, 0.0, 0.0)
            } else {
                (sc.pu(r.dp_lo_kw), sc.pu(r.dp_hi_kw), sc.pu(r.dq_lo_kvar), sc.pu(r.dq_hi_kvar))
            };
            dp.push(b.var(format!("dP[{t},{}]", r.id), plo, phi));
            dq.push(b.var(format!("dQ[{t},{}]", r.id), qlo, qhi));
        }

        // LV grids: nodal Δ, transformer flow change, voltages and currents
        let mut lv_v = Vec::with_capacity(sc.lv.len());
        let mut lv_i = Vec::with_capacity(sc.lv.len());
        let mut lv_dp_sl = Vec::with_capacity(sc.lv.len());
        let mut lv_dq_sl = Vec::with_capacity(sc.lv.len());
        for (g, grid) in sc.lv.iter().enumerate() {
            let m = grid.model(t);
            let op = &grid.op[t];
            let mut node_p: Vec<LinExpr> = vec![LinExpr::new(); m.injectors.len()];
            let mut node_q: Vec<LinExpr> = vec![LinExpr::new(); m.injectors.len()];
            for k in (0..nres).filter(|&k| sites[k].grid == g) {
                node_p[sites[k].injector].add(dp[k], 1.0);
                node_q[sites[k].injector].add(dq[k], 1.0);
            }
            let mut sp = LinExpr::new();
            let mut sq = LinExpr::new();
            for j in 0..m.injectors.len() {
                let tr = &m.transformer;
                sp.add_expr(&node_p[j], tr.dp_dp[j]);
                sp.add_expr(&node_q[j], tr.dp_dq[j]);
                sq.add_expr(&node_p[j], tr.dq_dp[j]);
                sq.add_expr(&node_q[j], tr.dq_dq[j]);
            }
            let vmv = v[link_nodes[g]];
            let mut volts = Vec::with_capacity(m.nodes.len());
            for i in 0..m.nodes.len() {
                let mut e = LinExpr::term(vmv, 0.5).plus(0.5 - op.drop[i]);
                for j in 0..m.injectors.len() {
                    e.add_expr(&node_p[j], m.kvp[(i, j)]);
                    e.add_expr(&node_q[j], m.kvq[(i, j)]);
                }
                let (vmin, vmax) = grid.node_limits[i];
                b.le(e.clone().plus(-vmax), "lv_vmax");
                b.ge(e.clone().plus(-vmin), "lv_vmin");
                volts.push(e);
            }
            let mut amps = Vec::with_capacity(m.branches.len());
            for br in 0..m.branches.len() {
                let mut e = LinExpr::constant(op.i0[br]);
                for j in 0..m.injectors.len() {
                    e.add_expr(&node_p[j], m.kip[(br, j)]);
                    e.add_expr(&node_q[j], m.kiq[(br, j)]);
                }
                let imax = grid.imax[br];
                if imax.is_finite() {
                    b.le(e.clone().plus(-imax), "lv_imax");
                    b.ge(e.clone().plus(imax), "lv_imin");
                }
                amps.push(e);
            }
            lv_v.push(volts);
            lv_i.push(amps);
            lv_dp_sl.push(sp);
            lv_dq_sl.push(sq);
        }

        // MV balances: inflow − losses − outflows − LV draw + injection = 0
        let (inj_p, inj_q) = {
            let base: Vec<(f64, f64)> = (0..sc.lv.len()).map(|g| sc.lv_draw(g, t)).collect();
            sc.mv_injections(t, &base)
        };
        for i in 0..mv.nodes.len() {
            let mut ep = LinExpr::constant(inj_p[i]);
            let mut eq = LinExpr::constant(inj_q[i]);
            if i == tree.slack {
                ep.add(p_sl, 1.0);
                eq.add(q_sl, 1.0);
            } else {
                let k = tree.parent_branch[i].expect("non-slack node has a parent");
                let br = &mv.branches[k];
                ep.add(p[k], 1.0);
                ep.add(l[k], -br.r);
                eq.add(q[k], 1.0);
                eq.add(l[k], -br.x);
            }
            for &c in &tree.child_branches[i] {
                ep.add(p[c], -1.0);
                eq.add(q[c], -1.0);
            }
            for g in (0..sc.lv.len()).filter(|&g| link_nodes[g] == i) {
                ep.add_expr(&lv_dp_sl[g], -1.0);
                eq.add_expr(&lv_dq_sl[g], -1.0);
            }
            b.eq(ep, "balance_p");
            b.eq(eq, "balance_q");
        }
        for (k, br) in mv.branches.iter().enumerate() {
            let (up, down) = (tree.upstream[k], tree.downstream[k]);
            let z2 = br.r * br.r + br.x * br.x;
            b.eq(
                LinExpr::term(v[down], 1.0)
                    .with(v[up], -1.0)
                    .with(p[k], 2.0 * br.r)
                    .with(q[k], 2.0 * br.x)
                    .with(l[k], -z2),
                "vdrop",
            );
            b.cone(Cone::Rotated { u: v[up].into(), w: l[k].into(), z: vec![p[k].into(), q[k].into()] }, "branch_flow");
        }

        // inverter limits
        for (k, r) in sc.resources.iter().enumerate() {
            let (p0, q0) = sc.resource_base(k, t);
            let ptot = LinExpr::term(dp[k], 1.0).plus(p0);
            let qtot = LinExpr::term(dq[k], 1.0).plus(q0);
            let tan = (r.pf_lim.clamp(0.0, 1.0).acos()).tan();
            let active = match r.kind {
                ResourceKind::Pv => Some(ptot.clone()),
                ResourceKind::Load => Some(ptot.scaled(-1.0)),
                ResourceKind::EvStorage => None,
            };
            if let Some(a) = active {
                let mut hi = qtot.clone();
                hi.add_expr(&a, -tan);
                b.le(hi, "pf_hi");
                let mut lo = qtot.scaled(-1.0);
                lo.add_expr(&a, -tan);
                b.le(lo, "pf_lo");
            }
            if r.s_kva > 0.0 {
                let radius = sc.settings.over_rating.sqrt() * sc.pu(r.s_kva);
                b.cone(Cone::Norm { t: LinExpr::constant(radius), z: vec![ptot, qtot] }, "s_rating");
            }
        }

        // storage
        let mut soc = vec![None; nres];
        for (k, r) in sc.resources.iter().enumerate() {
            if !r.has_storage() {
                continue;
            }
            let s = b.var(format!("soc[{t},{}]", r.id), r.soc_min, r.soc_max);
            let (p0, _) = sc.resource_base(k, t);
            let gain = sc.soc_gain(k);
            let mut e = LinExpr::term(s, 1.0).with(dp[k], gain).plus(gain * p0);
            match out.last() {
                Some(prev) => e.add(prev.soc[k].expect("storage has SOC every step"), -1.0),
                None => e.constant -= opts.soc_start[k],
            }
            b.eq(e, "soc_chain");
            soc[k] = Some(s);
        }

        // ramp caps
        if let Some(caps) = &opts.ramp_caps {
            for k in 0..nres {
                if opts.frozen[k] || !caps[k].is_finite() {
                    continue;
                }
                for (cur, prev) in [(dp[k], out.last().map(|s| s.dp[k])), (dq[k], out.last().map(|s| s.dq[k]))] {
                    let mut diff = LinExpr::term(cur, 1.0);
                    if let Some(pv) = prev {
                        diff.add(pv, -1.0);
                    }
                    b.le(diff.clone().plus(-caps[k]), "ramp");
                    b.le(diff.scaled(-1.0).plus(-caps[k]), "ramp");
                }
            }
        }
        out.push(StepVars { t, v, l, p, q, p_sl, q_sl, dp, dq, soc, lv_v, lv_i, lv_dp_sl, lv_dq_sl });
    }
    Layout { tree, steps: out }
}

/// Largest `v_up·l − (P² + Q²)` over branches and steps, clipped at 0.
pub(crate) fn relaxation_gap(layout: &Layout, x: &[f64]) -> f64 {
    let mut gap: f64 = 0.0;
    for s in &layout.steps {
        for k in 0..s.l.len() {
            let up = layout.tree.upstream[k];
            let g = x[s.v[up].0] * x[s.l[k].0] - (x[s.p[k].0].powi(2) + x[s.q[k].0].powi(2));
            gap = gap.max(g);
        }
    }
    gap
}
