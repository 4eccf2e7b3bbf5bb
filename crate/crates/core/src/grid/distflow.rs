//! Backward/forward sweep solution of the DistFlow equations on a radial
//! tree. This is the exact (non-relaxed) power-flow oracle: it enforces
//! `P² + Q² = v·l` on every branch instead of the conic inequality.

use super::{GridError, Network, RadialTree};

pub const MAX_SWEEPS: usize = 200;

const STEP_TOL: f64 = 1e-12;
const RESIDUAL_TOL: f64 = 1e-10;

/// Nodal injection with generation and consumption kept apart (p.u.).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NodeInjection {
    pub node: String,
    pub pg: f64,
    pub pc: f64,
    pub qg: f64,
    pub qc: f64,
}

impl NodeInjection {
    pub fn net(node: impl Into<String>, p: f64, q: f64) -> Self {
        NodeInjection { node: node.into(), pg: p.max(0.0), pc: (-p).max(0.0), qg: q.max(0.0), qc: (-q).max(0.0) }
    }

    pub fn p(&self) -> f64 {
        self.pg - self.pc
    }

    pub fn q(&self) -> f64 {
        self.qg - self.qc
    }
}

/// Exact branch-flow state. Node vectors follow `Network::nodes` order,
/// branch vectors follow `Network::branches` order with flows measured at
/// the upstream (slack-side) end.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    /// Squared voltage magnitudes.
    pub v: Vec<f64>,
    /// Squared current magnitudes.
    pub l: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// Active power imported through the slack (positive = import).
    pub slack_p: f64,
    pub slack_q: f64,
    pub sweeps: usize,
}

impl FlowState {
    pub fn voltage(&self, node: usize) -> f64 {
        self.v[node].sqrt()
    }

    pub fn current(&self, branch: usize) -> f64 {
        self.l[branch].max(0.0).sqrt()
    }

    /// Active losses Σ r·l.
    pub fn losses(&self, net: &Network) -> f64 {
        net.branches.iter().zip(&self.l).map(|(b, l)| b.r * l).sum()
    }

    /// Largest |v_up·l − (P² + Q²)| over branches.
    pub fn cone_residual(&self, tree: &RadialTree) -> f64 {
        (0..self.l.len())
            .map(|k| {
                let vu = self.v[tree.upstream[k]];
                (vu * self.l[k] - (self.p[k].powi(2) + self.q[k].powi(2))).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Reusable sweep solver for one network; LV finite differences call it
/// many times on the same topology.
#[derive(Debug, Clone)]
pub struct DistflowSolver {
    tree: RadialTree,
    r: Vec<f64>,
    x: Vec<f64>,
}

impl DistflowSolver {
    pub fn new(net: &Network) -> Result<Self, GridError> {
        let tree = net.tree()?;
        Ok(DistflowSolver {
            tree,
            r: net.branches.iter().map(|b| b.r).collect(),
            x: net.branches.iter().map(|b| b.x).collect(),
        })
    }

    pub fn tree(&self) -> &RadialTree {
        &self.tree
    }

    /// Solves for net nodal injections `p`, `q` (index-aligned with the
    /// network nodes; generation positive).
    pub fn solve(&self, p: &[f64], q: &[f64], slack_v: f64) -> Result<FlowState, GridError> {
        if !(slack_v > 0.0 && slack_v.is_finite()) {
            return Err(GridError::InvalidSlackVoltage(slack_v));
        }
        let n = self.tree.node_count();
        let m = self.r.len();
        assert_eq!(p.len(), n, "injection vector length");
        assert_eq!(q.len(), n, "injection vector length");

        let t = &self.tree;
        let mut v = vec![slack_v; n];
        let mut l = vec![0.0; m];
        let mut pf = vec![0.0; m];
        let mut qf = vec![0.0; m];

        for sweep in 1..=MAX_SWEEPS {
            // backward: accumulate downstream demand plus branch losses
            for &j in t.order.iter().rev() {
                let Some(k) = t.parent_branch[j] else { continue };
                let mut sp = -p[j] + self.r[k] * l[k];
                let mut sq = -q[j] + self.x[k] * l[k];
                for &c in &t.child_branches[j] {
                    sp += pf[c];
                    sq += qf[c];
                }
                pf[k] = sp;
                qf[k] = sq;
            }
            let mut max_step: f64 = 0.0;
            for k in 0..m {
                let new_l = (pf[k] * pf[k] + qf[k] * qf[k]) / v[t.upstream[k]];
                max_step = max_step.max((new_l - l[k]).abs());
                l[k] = new_l;
            }
            // forward: voltage drop from the slack outwards
            for &j in &t.order {
                let Some(k) = t.parent_branch[j] else { continue };
                let (r, x) = (self.r[k], self.x[k]);
                let new_v = v[t.upstream[k]] - 2.0 * (r * pf[k] + x * qf[k]) + (r * r + x * x) * l[k];
                max_step = max_step.max((new_v - v[j]).abs());
                v[j] = new_v;
                if !(new_v > 0.0 && new_v.is_finite()) {
                    return Err(GridError::NonConvergence {
                        sweeps: sweep,
                        reason: format!("voltage collapsed at node index {j}"),
                    });
                }
            }
            if !max_step.is_finite() {
                return Err(GridError::NonConvergence { sweeps: sweep, reason: "non-finite iterate".into() });
            }
            if max_step < STEP_TOL {
                // one consistent pass so the returned flows match the final l
                let state = self.finish(p, q, v.clone(), l.clone(), sweep);
                if self.residual(p, q, &state.v, &state.l, &state.p, &state.q) <= RESIDUAL_TOL {
                    return Ok(state);
                }
            }
        }
        Err(GridError::NonConvergence { sweeps: MAX_SWEEPS, reason: "sweep limit reached".into() })
    }

    fn finish(&self, p: &[f64], q: &[f64], mut v: Vec<f64>, l: Vec<f64>, sweeps: usize) -> FlowState {
        let t = &self.tree;
        let m = l.len();
        let mut pf = vec![0.0; m];
        let mut qf = vec![0.0; m];
        for &j in t.order.iter().rev() {
            let Some(k) = t.parent_branch[j] else { continue };
            let mut sp = -p[j] + self.r[k] * l[k];
            let mut sq = -q[j] + self.x[k] * l[k];
            for &c in &t.child_branches[j] {
                sp += pf[c];
                sq += qf[c];
            }
            pf[k] = sp;
            qf[k] = sq;
        }
        for &j in &t.order {
            let Some(k) = t.parent_branch[j] else { continue };
            let (r, x) = (self.r[k], self.x[k]);
            v[j] = v[t.upstream[k]] - 2.0 * (r * pf[k] + x * qf[k]) + (r * r + x * x) * l[k];
        }
        let s = t.slack;
        let slack_p = -p[s] + t.child_branches[s].iter().map(|&c| pf[c]).sum::<f64>();
        let slack_q = -q[s] + t.child_branches[s].iter().map(|&c| qf[c]).sum::<f64>();
        FlowState { v, l, p: pf, q: qf, slack_p, slack_q, sweeps }
    }

    /// Max residual over the cone equalities and the voltage-drop equations.
    fn residual(&self, p: &[f64], q: &[f64], v: &[f64], l: &[f64], pf: &[f64], qf: &[f64]) -> f64 {
        let t = &self.tree;
        let mut worst: f64 = 0.0;
        for k in 0..l.len() {
            let vu = v[t.upstream[k]];
            worst = worst.max((vu * l[k] - pf[k] * pf[k] - qf[k] * qf[k]).abs());
            let (r, x) = (self.r[k], self.x[k]);
            let drop = vu - 2.0 * (r * pf[k] + x * qf[k]) + (r * r + x * x) * l[k];
            worst = worst.max((drop - v[t.downstream[k]]).abs());
        }
        for &j in &t.order {
            let Some(k) = t.parent_branch[j] else { continue };
            let out: f64 = t.child_branches[j].iter().map(|&c| pf[c]).sum();
            let outq: f64 = t.child_branches[j].iter().map(|&c| qf[c]).sum();
            worst = worst.max((pf[k] - self.r[k] * l[k] - out + p[j]).abs());
            worst = worst.max((qf[k] - self.x[k] * l[k] - outq + q[j]).abs());
        }
        worst
    }
}

/// Exact DistFlow solution for the given injections; nodes without an
/// entry have zero injection.
pub fn solve_distflow(net: &Network, injections: &[NodeInjection], slack_v: f64) -> Result<FlowState, GridError> {
    let solver = DistflowSolver::new(net)?;
    let n = net.nodes.len();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for inj in injections {
        let i = solver.tree().node_index(&inj.node).ok_or_else(|| GridError::UnknownNode(inj.node.clone()))?;
        p[i] += inj.p();
        q[i] += inj.q();
    }
    solver.solve(&p, &q, slack_v)
}
