//! Radial network description shared by the MV grid and the LV reference
//! feeders, plus validation and the exact DistFlow power-flow oracle.
//!
//! All electrical quantities are per-unit on a single system base power.
//! Voltage limits are magnitudes (p.u.); the optimisation layers work with
//! squared magnitudes and convert where needed.

mod distflow;
mod per_unit;

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;

pub use distflow::{solve_distflow, DistflowSolver, FlowState, NodeInjection, MAX_SWEEPS};
pub use per_unit::{PhysicalBranch, PhysicalNetwork, PhysicalNode};

#[derive(Debug, thiserror::Error)]
pub enum GridError {
    #[error("network is not usable: {0}")]
    Invalid(ValidationReport),
    #[error("power flow did not converge after {sweeps} sweeps: {reason}")]
    NonConvergence { sweeps: usize, reason: String },
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("slack voltage must be positive and finite, got {0}")]
    InvalidSlackVoltage(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: String,
    /// Lower voltage magnitude limit (p.u.).
    pub vmin: f64,
    /// Upper voltage magnitude limit (p.u.).
    pub vmax: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub from: String,
    pub to: String,
    pub r: f64,
    pub x: f64,
    /// Ampacity (p.u. current magnitude).
    pub imax: f64,
}

impl Branch {
    pub fn id(&self) -> String {
        format!("{}-{}", self.from, self.to)
    }
}

/// MV node hosting the primary side of an MV/LV transformer.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformerLink {
    pub mv_node: String,
    pub lv_grid: String,
}

/// A radial network. The MV grid carries transformer links; LV reference
/// feeders use the same type with `links` empty and the transformer
/// secondary as slack.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub base_kva: f64,
    pub base_kv: f64,
    pub nodes: Vec<Node>,
    pub branches: Vec<Branch>,
    pub slack: String,
    pub links: Vec<TransformerLink>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NetworkIssue {
    Empty,
    NonPositiveBase,
    DuplicateNode(String),
    UnknownSlack(String),
    UnknownEndpoint { branch: String, node: String },
    SelfLoop(String),
    RadialityViolated { nodes: usize, branches: usize },
    Disconnected { unreachable: Vec<String> },
    NegativeResistance(String),
    NonFiniteImpedance(String),
    NonPositiveAmpacity(String),
    InvalidVoltageBounds(String),
    LinkUnknownNode { lv_grid: String, node: String },
    DuplicateLvGrid(String),
}

impl fmt::Display for NetworkIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NetworkIssue::Empty => write!(f, "network has no nodes"),
            NetworkIssue::NonPositiveBase => write!(f, "base power and voltage must be positive"),
            NetworkIssue::DuplicateNode(n) => write!(f, "duplicate node `{n}`"),
            NetworkIssue::UnknownSlack(n) => write!(f, "slack node `{n}` does not exist"),
            NetworkIssue::UnknownEndpoint { branch, node } => {
                write!(f, "branch `{branch}` references unknown node `{node}`")
            }
            NetworkIssue::SelfLoop(b) => write!(f, "branch `{b}` connects a node to itself"),
            NetworkIssue::RadialityViolated { nodes, branches } => {
                write!(f, "radial network needs |branches| = |nodes| - 1, got {branches} branches for {nodes} nodes")
            }
            NetworkIssue::Disconnected { unreachable } => {
                write!(f, "nodes unreachable from slack: {}", unreachable.join(", "))
            }
            NetworkIssue::NegativeResistance(b) => write!(f, "branch `{b}` has negative resistance"),
            NetworkIssue::NonFiniteImpedance(b) => write!(f, "branch `{b}` has non-finite impedance"),
            NetworkIssue::NonPositiveAmpacity(b) => write!(f, "branch `{b}` has non-positive ampacity"),
            NetworkIssue::InvalidVoltageBounds(n) => {
                write!(f, "node `{n}` needs 0 < vmin < vmax")
            }
            NetworkIssue::LinkUnknownNode { lv_grid, node } => {
                write!(f, "LV grid `{lv_grid}` is linked to unknown MV node `{node}`")
            }
            NetworkIssue::DuplicateLvGrid(g) => write!(f, "LV grid `{g}` is linked more than once"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<NetworkIssue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msgs: Vec<String> = self.issues.iter().map(|i| i.to_string()).collect();
        write!(f, "{}", msgs.join("; "))
    }
}

/// Checks every structural and parameter invariant. Never aborts early: the
/// report lists all problems found.
pub fn validate_network(net: &Network) -> ValidationReport {
    let mut issues = Vec::new();
    if net.nodes.is_empty() {
        issues.push(NetworkIssue::Empty);
        return ValidationReport { issues };
    }
    if !(net.base_kva > 0.0 && net.base_kv > 0.0) {
        issues.push(NetworkIssue::NonPositiveBase);
    }

    let mut seen = HashSet::new();
    for n in &net.nodes {
        if !seen.insert(n.id.as_str()) {
            issues.push(NetworkIssue::DuplicateNode(n.id.clone()));
        }
        let ok = n.vmin.is_finite() && n.vmax.is_finite() && n.vmin > 0.0 && n.vmin < n.vmax;
        if !ok {
            issues.push(NetworkIssue::InvalidVoltageBounds(n.id.clone()));
        }
    }
    if !seen.contains(net.slack.as_str()) {
        issues.push(NetworkIssue::UnknownSlack(net.slack.clone()));
    }

    let mut endpoints_ok = true;
    for b in &net.branches {
        let id = b.id();
        for end in [&b.from, &b.to] {
            if !seen.contains(end.as_str()) {
                endpoints_ok = false;
                issues.push(NetworkIssue::UnknownEndpoint { branch: id.clone(), node: end.clone() });
            }
        }
        if b.from == b.to {
            endpoints_ok = false;
            issues.push(NetworkIssue::SelfLoop(id.clone()));
        }
        if !(b.r.is_finite() && b.x.is_finite()) {
            issues.push(NetworkIssue::NonFiniteImpedance(id.clone()));
        } else if b.r < 0.0 {
            issues.push(NetworkIssue::NegativeResistance(id.clone()));
        }
        if !(b.imax > 0.0) || !b.imax.is_finite() {
            issues.push(NetworkIssue::NonPositiveAmpacity(id.clone()));
        }
    }

    if net.branches.len() + 1 != net.nodes.len() {
        issues.push(NetworkIssue::RadialityViolated { nodes: net.nodes.len(), branches: net.branches.len() });
    } else if endpoints_ok && seen.contains(net.slack.as_str()) {
        // With |E| = |V| - 1, connectivity is equivalent to being a tree.
        let reach = reachable_from_slack(net);
        let unreachable: Vec<String> =
            net.nodes.iter().filter(|n| !reach.contains(n.id.as_str())).map(|n| n.id.clone()).collect();
        if !unreachable.is_empty() {
            issues.push(NetworkIssue::Disconnected { unreachable });
        }
    }

    let mut grids = HashSet::new();
    for link in &net.links {
        if !seen.contains(link.mv_node.as_str()) {
            issues.push(NetworkIssue::LinkUnknownNode { lv_grid: link.lv_grid.clone(), node: link.mv_node.clone() });
        }
        if !grids.insert(link.lv_grid.as_str()) {
            issues.push(NetworkIssue::DuplicateLvGrid(link.lv_grid.clone()));
        }
    }

    ValidationReport { issues }
}

fn reachable_from_slack(net: &Network) -> HashSet<&str> {
    let mut adj: HashMap<&str, Vec<&str>> = HashMap::new();
    for b in &net.branches {
        adj.entry(b.from.as_str()).or_default().push(b.to.as_str());
        adj.entry(b.to.as_str()).or_default().push(b.from.as_str());
    }
    let mut seen = HashSet::new();
    let mut queue = VecDeque::from([net.slack.as_str()]);
    seen.insert(net.slack.as_str());
    while let Some(n) = queue.pop_front() {
        for &m in adj.get(n).into_iter().flatten() {
            if seen.insert(m) {
                queue.push_back(m);
            }
        }
    }
    seen
}

/// Index view of a validated radial network, oriented away from the slack.
#[derive(Debug, Clone)]
pub struct RadialTree {
    pub slack: usize,
    /// Breadth-first node order starting at the slack.
    pub order: Vec<usize>,
    pub parent_branch: Vec<Option<usize>>,
    /// Upstream (parent-side) node of each branch.
    pub upstream: Vec<usize>,
    /// Downstream (child-side) node of each branch.
    pub downstream: Vec<usize>,
    /// Branches leaving each node towards its children.
    pub child_branches: Vec<Vec<usize>>,
    index: HashMap<String, usize>,
}

impl RadialTree {
    pub fn new(net: &Network) -> Result<Self, GridError> {
        let report = validate_network(net);
        if !report.is_ok() {
            return Err(GridError::Invalid(report));
        }
        let index: HashMap<String, usize> = net.nodes.iter().enumerate().map(|(i, n)| (n.id.clone(), i)).collect();
        let n = net.nodes.len();
        let mut incident: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (k, b) in net.branches.iter().enumerate() {
            incident[index[&b.from]].push(k);
            incident[index[&b.to]].push(k);
        }
        let slack = index[&net.slack];
        let mut parent_branch = vec![None; n];
        let mut upstream = vec![0; net.branches.len()];
        let mut downstream = vec![0; net.branches.len()];
        let mut child_branches = vec![Vec::new(); n];
        let mut visited = vec![false; n];
        let mut order = Vec::with_capacity(n);
        let mut queue = VecDeque::from([slack]);
        visited[slack] = true;
        while let Some(i) = queue.pop_front() {
            order.push(i);
            for &k in &incident[i] {
                let b = &net.branches[k];
                let other = if index[&b.from] == i { index[&b.to] } else { index[&b.from] };
                if visited[other] {
                    continue;
                }
                visited[other] = true;
                upstream[k] = i;
                downstream[k] = other;
                parent_branch[other] = Some(k);
                child_branches[i].push(k);
                queue.push_back(other);
            }
        }
        Ok(RadialTree { slack, order, parent_branch, upstream, downstream, child_branches, index })
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn node_count(&self) -> usize {
        self.order.len()
    }
}

impl Network {
    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn tree(&self) -> Result<RadialTree, GridError> {
        RadialTree::new(self)
    }

    /// kW (or kvar) to per-unit on this network's base power.
    pub fn to_pu(&self, kw: f64) -> f64 {
        kw / self.base_kva
    }

    pub fn to_kw(&self, pu: f64) -> f64 {
        pu * self.base_kva
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn feeder(n: usize) -> Network {
        let nodes = (0..n).map(|i| Node { id: format!("n{i}"), vmin: 0.95, vmax: 1.05 }).collect();
        let branches = (1..n)
            .map(|i| Branch { from: format!("n{}", i - 1), to: format!("n{i}"), r: 0.01, x: 0.01, imax: 1.0 })
            .collect();
        Network { base_kva: 1000.0, base_kv: 20.0, nodes, branches, slack: "n0".into(), links: Vec::new() }
    }

    #[test]
    fn three_node_feeder_is_valid() {
        assert!(validate_network(&feeder(3)).is_ok());
    }

    #[test]
    fn cycle_violates_radiality() {
        let mut net = feeder(3);
        net.branches.push(Branch { from: "n2".into(), to: "n0".into(), r: 0.01, x: 0.01, imax: 1.0 });
        let report = validate_network(&net);
        assert!(matches!(report.issues[..], [NetworkIssue::RadialityViolated { nodes: 3, branches: 3 }]));
    }

    #[test]
    fn zero_ampacity_reported() {
        let mut net = feeder(3);
        net.branches[1].imax = 0.0;
        let report = validate_network(&net);
        assert_eq!(report.issues, vec![NetworkIssue::NonPositiveAmpacity("n1-n2".into())]);
    }

    #[test]
    fn all_problems_reported_together() {
        let mut net = feeder(4);
        net.nodes[1].vmin = 1.2;
        net.branches[0].r = -0.1;
        net.slack = "nope".into();
        net.links.push(TransformerLink { mv_node: "zz".into(), lv_grid: "g".into() });
        net.links.push(TransformerLink { mv_node: "n1".into(), lv_grid: "g".into() });
        let report = validate_network(&net);
        assert_eq!(report.issues.len(), 5, "{report}");
    }

    #[test]
    fn disconnected_tree_with_right_edge_count() {
        let mut net = feeder(4);
        // n2-n3 replaced by n1-n2 duplicate: 3 edges, n3 orphaned
        net.branches[2] = Branch { from: "n2".into(), to: "n1".into(), r: 0.0, x: 0.0, imax: 1.0 };
        let report = validate_network(&net);
        assert!(report
            .issues
            .iter()
            .any(|i| matches!(i, NetworkIssue::Disconnected { unreachable } if unreachable == &["n3"])));
    }

    #[test]
    fn tree_orients_reversed_branches() {
        let mut net = feeder(3);
        net.branches[1] = Branch { from: "n2".into(), to: "n1".into(), r: 0.01, x: 0.01, imax: 1.0 };
        let tree = net.tree().unwrap();
        assert_eq!(tree.upstream[1], 1);
        assert_eq!(tree.downstream[1], 2);
        assert_eq!(tree.order, vec![0, 1, 2]);
    }
}
