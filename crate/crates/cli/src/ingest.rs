//! Scenario assembly from a [`ScenarioConfig`] and its CSV files.
//!
//! Schemas (header names are fixed, column order is free):
//!
//! | file | columns |
//! |------|---------|
//! | nodes | `id,vmin,vmax` |
//! | branches | `from,to,r_pu,x_pu,imax_pu` |
//! | links | `mv_node,lv_grid` |
//! | resources | `id,lv_grid,lv_node,kind,s_kva` + optional `dp_lo_kw,dp_hi_kw,dq_lo_kvar,dq_hi_kvar,pf_lim,ramp_kw_per_hr,eta,cap_kwh,soc_min,soc_max,soc0` |
//! | timeseries | `t,element_id,p_kw,q_kvar` |
//! | coefficients | `observed,injector,kvp,kvq,kip,kiq` + optional `t` |
//! | op | `t,element,v0_pu,drop_pu,i0_pu` |
//! | slack_v | `t,v_pu` |
//!
//! LV node and branch files list the observed elements and their limits.
//! When every LV branch carries `r_pu` and `x_pu`, the grid also gets a
//! reference network, and coefficients and operating points may be left
//! out: they are then derived from the baseline load flow, which also sets
//! the grid's transformer series.
//!
//! Coefficient rows observe a node (`kvp,kvq`), a branch `from-to`
//! (`kip,kiq`), or the transformer draw: `@p` rows give `∂P/∂p, ∂P/∂q` and
//! `@q` rows `∂Q/∂p, ∂Q/∂q` in the `kvp,kvq` columns. Missing pairs are
//! zero; missing transformer rows mean lossless aggregation. Time-series
//! entries not listed are zero.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use gridflex::grid::{Branch, Network, Node, TransformerLink};
use gridflex::lv::{
    LvOperatingPoint, ModelSource, ReferenceOptions, SensitivityModel, TransformerSensitivity, ValidityStamp,
};
use gridflex::scenario::{
    assemble_from_reference, LvGrid, OpfScenario, Resource, ResourceKind, ScenarioError, TimeSeries, TSO_SERIES,
};
use nalgebra::DMatrix;

use crate::config::{LvGridConfig, ScenarioConfig};
use crate::table::{ParseError, Table};

/// Defaults for unspecified resource fields.
pub const DEFAULT_PF_LIM: f64 = 0.95;
pub const DEFAULT_SOC_MIN: f64 = 0.1;
pub const DEFAULT_SOC_MAX: f64 = 0.9;
pub const DEFAULT_SOC0: f64 = 0.5;
pub const DEFAULT_EV_KW: f64 = 8.0;
pub const DEFAULT_ETA: f64 = 1.0;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("unresolved references: {}", .0.join("; "))]
    CrossRef(Vec<String>),
    #[error("invalid scenario: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error("assembling LV models: {0}")]
    Assembly(ScenarioError),
}

struct LvRaw {
    grid: LvGrid,
    node_ids: Vec<String>,
    explicit: bool,
}

pub fn load_scenario(cfg: &ScenarioConfig) -> Result<OpfScenario, IngestError> {
    let mut xref = Vec::new();
    let mv_nodes = read_nodes(&cfg.mv_nodes)?;
    let mv_branches = read_branches(&cfg.mv_branches, true)?.into_iter().map(|(b, _)| b).collect::<Vec<_>>();
    let mv_ids: HashSet<&str> = mv_nodes.iter().map(|n| n.id.as_str()).collect();
    check_endpoints("MV", &mv_branches, &mv_ids, &mut xref);
    if !mv_ids.contains(cfg.mv_slack.as_str()) {
        xref.push(format!("MV slack {} is not a node", cfg.mv_slack));
    }
    let links = read_links(&cfg.links)?;
    for l in &links {
        if !mv_ids.contains(l.mv_node.as_str()) {
            xref.push(format!("link {} -> {}: unknown MV node", l.mv_node, l.lv_grid));
        }
        if !cfg.lv.iter().any(|g| g.id == l.lv_grid) {
            xref.push(format!("link {} -> {}: unknown LV grid", l.mv_node, l.lv_grid));
        }
    }

    let (series, ts_xref) = read_timeseries(&cfg.timeseries)?;
    let steps = series.steps;

    let mut lv = Vec::with_capacity(cfg.lv.len());
    for g in &cfg.lv {
        lv.push(read_lv(g, cfg, steps, &mut xref)?);
    }
    let resources = read_resources(&cfg.resources)?;
    for r in &resources {
        match lv.iter().find(|g| g.grid.id == r.lv_grid) {
            None => xref.push(format!("resource {}: unknown LV grid {}", r.id, r.lv_grid)),
            Some(g) if !g.node_ids.contains(&r.lv_node) => {
                xref.push(format!("resource {}: {} is not a node of {}", r.id, r.lv_node, r.lv_grid))
            }
            Some(_) => {}
        }
    }
    for (id, line) in ts_xref {
        let known = id == TSO_SERIES
            || mv_ids.contains(id.as_str())
            || resources.iter().any(|r| r.id == id)
            || lv.iter().any(|g| g.grid.id == id)
            || id
                .split_once('/')
                .is_some_and(|(g, n)| lv.iter().any(|x| x.grid.id == g && x.node_ids.iter().any(|i| i == n)));
        if !known {
            xref.push(format!("{}:{line}: unknown element {id}", cfg.timeseries.display()));
        }
    }
    if !xref.is_empty() {
        return Err(IngestError::CrossRef(xref));
    }

    let slack_v = cfg.slack_v.as_deref().map(|p| read_slack_v(p, steps)).transpose()?;
    let mut sc = OpfScenario {
        name: cfg.name.clone(),
        mv: Network {
            base_kva: cfg.base_kva,
            base_kv: cfg.base_kv,
            nodes: mv_nodes,
            branches: mv_branches,
            slack: cfg.mv_slack.clone(),
            links,
        },
        lv: Vec::new(),
        resources,
        series,
        weights: cfg.weights,
        settings: cfg.settings.clone(),
        slack_v,
    };
    let derived: Vec<bool> = lv.iter().map(|g| !g.explicit).collect();
    if let Some(i) = lv.iter().position(|g| !g.explicit && g.grid.reference.is_none()) {
        return Err(IngestError::Validation(vec![format!(
            "LV grid {}: needs coefficients and operating points, or r_pu/x_pu on every branch",
            lv[i].grid.id
        )]));
    }
    sc.lv = lv.into_iter().map(|g| g.grid).collect();
    if derived.iter().any(|d| *d) {
        let report = gridflex::grid::validate_network(&sc.mv);
        if !report.is_ok() {
            return Err(IngestError::Validation(report.issues.iter().map(|i| format!("MV network: {i}")).collect()));
        }
        let mut parked = Vec::new();
        for (g, d) in derived.iter().enumerate() {
            if *d {
                sc.series.series.remove(&sc.lv[g].id);
            } else {
                parked.push((g, sc.lv[g].reference.take()));
            }
        }
        let opts = ReferenceOptions { eps: cfg.lv_eps, transformer_losses: cfg.lv_transformer_losses };
        let assembled = assemble_from_reference(&mut sc, Some(opts));
        for (g, r) in parked {
            sc.lv[g].reference = r;
        }
        assembled.map_err(IngestError::Assembly)?;
    }
    sc.validate().map_err(|e| match e {
        ScenarioError::Inconsistent(v) => IngestError::Validation(v),
        other => IngestError::Validation(vec![other.to_string()]),
    })?;
    Ok(sc)
}

fn check_endpoints(what: &str, branches: &[Branch], ids: &HashSet<&str>, xref: &mut Vec<String>) {
    for b in branches {
        for end in [&b.from, &b.to] {
            if !ids.contains(end.as_str()) {
                xref.push(format!("{what} branch {}: unknown node {end}", b.id()));
            }
        }
    }
}

fn read_nodes(path: &Path) -> Result<Vec<Node>, ParseError> {
    let t = Table::read(path, &["id", "vmin", "vmax"])?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(t.rows.len());
    for r in &t.rows {
        let id = t.text(r, "id")?;
        if !seen.insert(id.clone()) {
            return Err(t.err(r, "id", format!("node {id} listed twice")));
        }
        out.push(Node { id, vmin: t.f64(r, "vmin")?, vmax: t.f64(r, "vmax")? });
    }
    Ok(out)
}

/// Branches plus whether the row carried impedances; `require_z` makes
/// them mandatory.
fn read_branches(path: &Path, require_z: bool) -> Result<Vec<(Branch, bool)>, ParseError> {
    let t = Table::read(path, &["from", "to", "r_pu", "x_pu", "imax_pu"])?;
    let mut out = Vec::with_capacity(t.rows.len());
    for r in &t.rows {
        let (rr, xx) = (t.opt_f64(r, "r_pu")?, t.opt_f64(r, "x_pu")?);
        if require_z && rr.is_none() {
            return Err(t.err(r, "r_pu", "empty value"));
        }
        if require_z && xx.is_none() {
            return Err(t.err(r, "x_pu", "empty value"));
        }
        let b = Branch {
            from: t.text(r, "from")?,
            to: t.text(r, "to")?,
            r: rr.unwrap_or(0.0),
            x: xx.unwrap_or(0.0),
            imax: t.f64(r, "imax_pu")?,
        };
        out.push((b, rr.is_some() && xx.is_some()));
    }
    Ok(out)
}

fn read_links(path: &Path) -> Result<Vec<TransformerLink>, ParseError> {
    let t = Table::read(path, &["mv_node", "lv_grid"])?;
    t.rows
        .iter()
        .map(|r| Ok(TransformerLink { mv_node: t.text(r, "mv_node")?, lv_grid: t.text(r, "lv_grid")? }))
        .collect()
}

/// Series plus every element id with the line it first appeared on.
fn read_timeseries(path: &Path) -> Result<(TimeSeries, Vec<(String, u64)>), ParseError> {
    let t = Table::read(path, &["t", "element_id", "p_kw", "q_kvar"])?;
    let mut entries = Vec::with_capacity(t.rows.len());
    let mut steps = 0;
    let mut first_line: BTreeMap<String, u64> = BTreeMap::new();
    let mut seen = HashSet::new();
    for r in &t.rows {
        let step = t.usize(r, "t")?;
        let id = t.text(r, "element_id")?;
        if !seen.insert((step, id.clone())) {
            return Err(t.err(r, "element_id", format!("{id} at t={step} given twice")));
        }
        first_line.entry(id.clone()).or_insert(r.line);
        entries.push((step, id, t.f64(r, "p_kw")?, t.f64(r, "q_kvar")?));
        steps = steps.max(step + 1);
    }
    if steps == 0 {
        return Err(ParseError::new(path, 0, "", "no time-series rows".into()));
    }
    let mut series = TimeSeries::new(steps);
    for (step, id, p, q) in entries {
        series.set(&id, step, p, q);
    }
    let mut ids: Vec<(String, u64)> = first_line.into_iter().collect();
    ids.sort_by_key(|(_, l)| *l);
    Ok((series, ids))
}

fn read_slack_v(path: &Path, steps: usize) -> Result<Vec<f64>, ParseError> {
    let t = Table::read(path, &["t", "v_pu"])?;
    let mut v = vec![f64::NAN; steps];
    for r in &t.rows {
        let step = t.usize(r, "t")?;
        if step >= steps {
            return Err(t.err(r, "t", format!("step {step} beyond horizon of {steps}")));
        }
        v[step] = t.f64(r, "v_pu")?;
    }
    if let Some(s) = v.iter().position(|x| x.is_nan()) {
        return Err(ParseError::new(path, 0, "t", format!("no value for step {s}")));
    }
    Ok(v)
}

fn read_resources(path: &Path) -> Result<Vec<Resource>, ParseError> {
    let t = Table::read(path, &["id", "lv_grid", "lv_node", "kind", "s_kva"])?;
    let mut out = Vec::with_capacity(t.rows.len());
    for r in &t.rows {
        let ks = t.text(r, "kind")?;
        let kind = ResourceKind::parse(&ks).ok_or_else(|| t.err(r, "kind", format!("unknown kind `{ks}`")))?;
        let ev = kind == ResourceKind::EvStorage;
        let or = |col: &str, d: f64| t.opt_f64(r, col).map(|v| v.unwrap_or(d));
        out.push(Resource {
            id: t.text(r, "id")?,
            lv_grid: t.text(r, "lv_grid")?,
            lv_node: t.text(r, "lv_node")?,
            kind,
            dp_lo_kw: or("dp_lo_kw", if ev { -DEFAULT_EV_KW } else { 0.0 })?,
            dp_hi_kw: or("dp_hi_kw", if ev { DEFAULT_EV_KW } else { 0.0 })?,
            dq_lo_kvar: or("dq_lo_kvar", 0.0)?,
            dq_hi_kvar: or("dq_hi_kvar", 0.0)?,
            s_kva: t.f64(r, "s_kva")?,
            pf_lim: or("pf_lim", DEFAULT_PF_LIM)?,
            ramp_kw_per_hr: or("ramp_kw_per_hr", f64::INFINITY)?,
            eta: or("eta", DEFAULT_ETA)?,
            cap_kwh: or("cap_kwh", 0.0)?,
            soc_min: or("soc_min", DEFAULT_SOC_MIN)?,
            soc_max: or("soc_max", DEFAULT_SOC_MAX)?,
            soc0: or("soc0", DEFAULT_SOC0)?,
        });
    }
    Ok(out)
}

fn read_lv(g: &LvGridConfig, cfg: &ScenarioConfig, steps: usize, xref: &mut Vec<String>) -> Result<LvRaw, IngestError> {
    let nodes = read_nodes(&g.nodes)?;
    let branches = read_branches(&g.branches, false)?;
    let node_ids: Vec<String> = nodes.iter().map(|n| n.id.clone()).collect();
    let ids: HashSet<&str> = node_ids.iter().map(String::as_str).collect();
    let plain: Vec<Branch> = branches.iter().map(|(b, _)| b.clone()).collect();
    check_endpoints(&format!("LV grid {}", g.id), &plain, &ids, xref);
    let slack = g.slack.clone().or_else(|| node_ids.first().cloned()).unwrap_or_default();
    if !ids.contains(slack.as_str()) {
        xref.push(format!("LV grid {}: slack {slack} is not a node", g.id));
    }
    let branch_ids: Vec<String> = plain.iter().map(Branch::id).collect();
    let reference = (!branches.is_empty() && branches.iter().all(|(_, z)| *z)).then(|| Network {
        base_kva: cfg.base_kva,
        base_kv: g.base_kv,
        nodes: nodes.clone(),
        branches: plain.clone(),
        slack,
        links: Vec::new(),
    });
    let explicit = match (&g.coefficients, &g.op) {
        (Some(_), Some(_)) => true,
        (None, None) => false,
        _ => {
            return Err(IngestError::Validation(vec![format!(
                "LV grid {}: coefficients and operating points must be given together",
                g.id
            )]))
        }
    };
    let (models, op) = if explicit {
        let models = read_coefficients(g.coefficients.as_deref().unwrap(), &g.id, &node_ids, &branch_ids, steps, xref)?;
        let op = read_op(g.op.as_deref().unwrap(), &g.id, &node_ids, &branch_ids, steps, xref)?;
        (models, op)
    } else {
        (Vec::new(), Vec::new())
    };
    Ok(LvRaw {
        grid: LvGrid {
            id: g.id.clone(),
            rating_kva: g.rating_kva,
            node_limits: nodes.iter().map(|n| (n.vmin, n.vmax)).collect(),
            imax: plain.iter().map(|b| b.imax).collect(),
            models,
            op,
            reference,
        },
        node_ids,
        explicit,
    })
}

enum Observed {
    Node(usize),
    Branch(usize),
    TransformerP,
    TransformerQ,
}

fn observed(name: &str, nodes: &[String], branches: &[String]) -> Option<Observed> {
    match name {
        "@p" => Some(Observed::TransformerP),
        "@q" => Some(Observed::TransformerQ),
        _ => nodes
            .iter()
            .position(|n| n == name)
            .map(Observed::Node)
            .or_else(|| branches.iter().position(|b| b == name).map(Observed::Branch)),
    }
}

fn read_coefficients(
    path: &Path,
    grid: &str,
    nodes: &[String],
    branches: &[String],
    steps: usize,
    xref: &mut Vec<String>,
) -> Result<Vec<SensitivityModel>, ParseError> {
    let t = Table::read(path, &["observed", "injector", "kvp", "kvq", "kip", "kiq"])?;
    let stepped = t.has("t");
    let mut injectors: Vec<String> = Vec::new();
    let mut by_step: BTreeMap<usize, Vec<(usize, usize, Observed, [Option<f64>; 4])>> = BTreeMap::new();
    let mut seen = HashSet::new();
    for r in &t.rows {
        let step = if stepped { t.usize(r, "t")? } else { 0 };
        let obs_name = t.text(r, "observed")?;
        let inj = t.text(r, "injector")?;
        if !nodes.contains(&inj) {
            xref.push(format!("{}:{}: injector {inj} is not a node of {grid}", path.display(), r.line));
            continue;
        }
        let Some(obs) = observed(&obs_name, nodes, branches) else {
            xref.push(format!("{}:{}: observed element {obs_name} is not part of {grid}", path.display(), r.line));
            continue;
        };
        if !seen.insert((step, obs_name.clone(), inj.clone())) {
            return Err(t.err(r, "observed", format!("{obs_name}/{inj} given twice")));
        }
        let k = injectors.iter().position(|i| *i == inj).unwrap_or_else(|| {
            injectors.push(inj.clone());
            injectors.len() - 1
        });
        let vals = [t.opt_f64(r, "kvp")?, t.opt_f64(r, "kvq")?, t.opt_f64(r, "kip")?, t.opt_f64(r, "kiq")?];
        let (need, unused) = match obs {
            Observed::Branch(_) => (["kip", "kiq"], [0, 1]),
            _ => (["kvp", "kvq"], [2, 3]),
        };
        for col in need {
            t.f64(r, col)?;
        }
        for i in unused {
            if vals[i].is_some() {
                let col = ["kvp", "kvq", "kip", "kiq"][i];
                return Err(t.err(r, col, format!("not used for observed element {obs_name}")));
            }
        }
        by_step.entry(step).or_default().push((r.line as usize, k, obs, vals));
    }
    let keys: Vec<usize> = by_step.keys().copied().collect();
    let stamped = match keys.len() {
        0 => return Err(ParseError::new(path, 0, "", "no coefficient rows".into())),
        1 if stepped => true,
        1 => false,
        n if n == steps && keys.iter().enumerate().all(|(i, k)| i == *k) => true,
        _ => {
            return Err(ParseError::new(
                path,
                0,
                "t",
                format!("need one model or one per step 0..{steps}, got {} steps", keys.len()),
            ))
        }
    };
    let nk = injectors.len();
    let mut out = Vec::with_capacity(keys.len());
    for (step, rows) in by_step {
        let mut m = SensitivityModel {
            grid: grid.to_string(),
            nodes: nodes.to_vec(),
            branches: branches.to_vec(),
            injectors: injectors.clone(),
            kvp: DMatrix::zeros(nodes.len(), nk),
            kvq: DMatrix::zeros(nodes.len(), nk),
            kip: DMatrix::zeros(branches.len(), nk),
            kiq: DMatrix::zeros(branches.len(), nk),
            transformer: TransformerSensitivity::lossless(nk),
            stamp: ValidityStamp { step: stamped.then_some(step), source: ModelSource::Imported },
        };
        for (_, k, obs, v) in rows {
            match obs {
                Observed::Node(i) => {
                    m.kvp[(i, k)] = v[0].unwrap();
                    m.kvq[(i, k)] = v[1].unwrap();
                }
                Observed::Branch(b) => {
                    m.kip[(b, k)] = v[2].unwrap();
                    m.kiq[(b, k)] = v[3].unwrap();
                }
                Observed::TransformerP => {
                    m.transformer.dp_dp[k] = v[0].unwrap();
                    m.transformer.dp_dq[k] = v[1].unwrap();
                }
                Observed::TransformerQ => {
                    m.transformer.dq_dp[k] = v[0].unwrap();
                    m.transformer.dq_dq[k] = v[1].unwrap();
                }
            }
        }
        out.push(m);
    }
    Ok(out)
}

fn read_op(
    path: &Path,
    grid: &str,
    nodes: &[String],
    branches: &[String],
    steps: usize,
    xref: &mut Vec<String>,
) -> Result<Vec<LvOperatingPoint>, ParseError> {
    let t = Table::read(path, &["t", "element", "v0_pu", "drop_pu", "i0_pu"])?;
    let mut op: Vec<LvOperatingPoint> = (0..steps)
        .map(|s| LvOperatingPoint {
            step: s,
            v0: vec![f64::NAN; nodes.len()],
            i0: vec![f64::NAN; branches.len()],
            drop: vec![f64::NAN; nodes.len()],
        })
        .collect();
    let mut seen = HashSet::new();
    for r in &t.rows {
        let step = t.usize(r, "t")?;
        if step >= steps {
            return Err(t.err(r, "t", format!("step {step} beyond horizon of {steps}")));
        }
        let el = t.text(r, "element")?;
        if !seen.insert((step, el.clone())) {
            return Err(t.err(r, "element", format!("{el} at t={step} given twice")));
        }
        match observed(&el, nodes, branches) {
            Some(Observed::Node(i)) => {
                op[step].v0[i] = t.f64(r, "v0_pu")?;
                op[step].drop[i] = t.f64(r, "drop_pu")?;
            }
            Some(Observed::Branch(b)) => op[step].i0[b] = t.f64(r, "i0_pu")?,
            _ => xref.push(format!("{}:{}: element {el} is not part of {grid}", path.display(), r.line)),
        }
    }
    for p in &op {
        if p.v0.iter().chain(&p.i0).chain(&p.drop).any(|x| x.is_nan()) {
            return Err(ParseError::new(path, 0, "", format!("incomplete operating point at t={}", p.step)));
        }
    }
    Ok(op)
}

pub fn load_config_and_scenario(path: &Path) -> Result<(ScenarioConfig, OpfScenario), IngestError> {
    let cfg = ScenarioConfig::load(path)?;
    let sc = load_scenario(&cfg)?;
    Ok((cfg, sc))
}
