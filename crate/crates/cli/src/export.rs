//! Writers for scenarios and results. Every file is replaced atomically and
//! every number carries 17 significant digits, so identical inputs give
//! byte-identical outputs.

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use gridflex::flex::{EnvelopeReport, FlexEnvelope};
use gridflex::lv::ModelSource;
use gridflex::opf::{ScheduleResult, Setpoints, VerificationReport};
use gridflex::scenario::{LvGrid, OpfScenario};

use crate::table::{num, write_atomic, CsvOut, ParseError, Table};

/// `true` when the grid's coefficients were all derived from its reference
/// network, in which case loading re-derives them.
fn derived(g: &LvGrid) -> bool {
    g.reference.is_some() && g.models.iter().all(|m| matches!(m.stamp.source, ModelSource::Reference { .. }))
}

/// Writes `sc` as a config plus CSVs under `dir`; returns the config path.
pub fn write_scenario(sc: &OpfScenario, dir: &Path) -> io::Result<PathBuf> {
    let mut cfg = String::new();
    let mut kv = |k: &str, v: String| writeln!(cfg, "{k} = {v}").expect("string write");
    kv("name", sc.name.clone());
    kv("base_kva", num(sc.mv.base_kva));
    kv("base_kv", num(sc.mv.base_kv));
    kv("mv_slack", sc.mv.slack.clone());
    kv("mv_nodes", "mv_nodes.csv".into());
    kv("mv_branches", "mv_branches.csv".into());
    kv("links", "links.csv".into());
    kv("resources", "resources.csv".into());
    kv("timeseries", "timeseries.csv".into());
    let w = sc.weights;
    for (k, v) in [("w_l", w.w_l), ("w_v", w.w_v), ("w_lim", w.w_lim), ("w_p", w.w_p), ("w_q", w.w_q)] {
        kv(k, num(v));
    }
    let s = &sc.settings;
    for (k, v) in [
        ("dt_min", s.dt_min),
        ("ramp_threshold_kw_per_hr", s.ramp_threshold_kw_per_hr),
        ("slack_v_min", s.slack_v_min),
        ("slack_v_max", s.slack_v_max),
        ("slack_v0", s.slack_v0),
        ("over_rating", s.over_rating),
        ("relaxation_threshold", s.relaxation_threshold),
        ("trust_radius_frac", s.trust_radius_frac),
        ("tol_feas", s.tol_feas),
        ("tol_gap", s.tol_gap),
    ] {
        kv(k, num(v));
    }
    if let Some(win) = s.window {
        kv("window", win.to_string());
    }
    if let Some(v) = &sc.slack_v {
        kv("slack_v", "slack_v.csv".into());
        let mut c = CsvOut::new(&["t", "v_pu"]);
        for (t, x) in v.iter().enumerate() {
            c.row([t.to_string(), num(*x)]);
        }
        c.save(&dir.join("slack_v.csv"))?;
    }
    let reference_model = sc.lv.iter().filter(|g| derived(g)).flat_map(|g| &g.models).next();
    if let Some(m) = reference_model {
        if let ModelSource::Reference { eps } = m.stamp.source {
            kv("lv_eps", num(eps));
        }
        let n = m.injectors.len();
        let lossless = gridflex::lv::TransformerSensitivity::lossless(n);
        kv("lv_transformer_losses", (m.transformer != lossless).to_string());
    }

    let mut nodes = CsvOut::new(&["id", "vmin", "vmax"]);
    for n in &sc.mv.nodes {
        nodes.row([n.id.clone(), num(n.vmin), num(n.vmax)]);
    }
    nodes.save(&dir.join("mv_nodes.csv"))?;
    let mut br = CsvOut::new(&["from", "to", "r_pu", "x_pu", "imax_pu"]);
    for b in &sc.mv.branches {
        br.row([b.from.clone(), b.to.clone(), num(b.r), num(b.x), num(b.imax)]);
    }
    br.save(&dir.join("mv_branches.csv"))?;
    let mut links = CsvOut::new(&["mv_node", "lv_grid"]);
    for l in &sc.mv.links {
        links.row([&l.mv_node, &l.lv_grid]);
    }
    links.save(&dir.join("links.csv"))?;

    for g in &sc.lv {
        let id = &g.id;
        kv(&format!("lv.{id}.rating_kva"), num(g.rating_kva));
        kv(&format!("lv.{id}.nodes"), format!("{id}_nodes.csv"));
        kv(&format!("lv.{id}.branches"), format!("{id}_branches.csv"));
        let model = &g.models[0];
        let mut nodes = CsvOut::new(&["id", "vmin", "vmax"]);
        for (n, (lo, hi)) in model.nodes.iter().zip(&g.node_limits) {
            nodes.row([n.clone(), num(*lo), num(*hi)]);
        }
        nodes.save(&dir.join(format!("{id}_nodes.csv")))?;
        let mut br = CsvOut::new(&["from", "to", "r_pu", "x_pu", "imax_pu"]);
        match &g.reference {
            Some(net) => {
                kv(&format!("lv.{id}.base_kv"), num(net.base_kv));
                kv(&format!("lv.{id}.slack"), net.slack.clone());
                for (b, imax) in net.branches.iter().zip(&g.imax) {
                    br.row([b.from.clone(), b.to.clone(), num(b.r), num(b.x), num(*imax)]);
                }
            }
            None => {
                for (b, imax) in model.branches.iter().zip(&g.imax) {
                    let (from, to) = b.split_once('-').ok_or_else(|| {
                        io::Error::new(io::ErrorKind::InvalidData, format!("branch id {b} is not `from-to`"))
                    })?;
                    br.row([from.to_string(), to.to_string(), String::new(), String::new(), num(*imax)]);
                }
            }
        }
        br.save(&dir.join(format!("{id}_branches.csv")))?;
        if derived(g) {
            continue;
        }
        kv(&format!("lv.{id}.coefficients"), format!("{id}_coefficients.csv"));
        kv(&format!("lv.{id}.op"), format!("{id}_op.csv"));
        write_coefficients(g, &dir.join(format!("{id}_coefficients.csv")))?;
        let mut op = CsvOut::new(&["t", "element", "v0_pu", "drop_pu", "i0_pu"]);
        for p in &g.op {
            for (i, n) in model.nodes.iter().enumerate() {
                op.row([p.step.to_string(), n.clone(), num(p.v0[i]), num(p.drop[i]), String::new()]);
            }
            for (b, name) in model.branches.iter().enumerate() {
                op.row([p.step.to_string(), name.clone(), String::new(), String::new(), num(p.i0[b])]);
            }
        }
        op.save(&dir.join(format!("{id}_op.csv")))?;
    }

    let mut res = CsvOut::new(&[
        "id",
        "lv_grid",
        "lv_node",
        "kind",
        "dp_lo_kw",
        "dp_hi_kw",
        "dq_lo_kvar",
        "dq_hi_kvar",
        "s_kva",
        "pf_lim",
        "ramp_kw_per_hr",
        "eta",
        "cap_kwh",
        "soc_min",
        "soc_max",
        "soc0",
    ]);
    for r in &sc.resources {
        let mut row = vec![r.id.clone(), r.lv_grid.clone(), r.lv_node.clone(), r.kind.as_str().to_string()];
        row.extend(
            [
                r.dp_lo_kw,
                r.dp_hi_kw,
                r.dq_lo_kvar,
                r.dq_hi_kvar,
                r.s_kva,
                r.pf_lim,
                r.ramp_kw_per_hr,
                r.eta,
                r.cap_kwh,
                r.soc_min,
                r.soc_max,
                r.soc0,
            ]
            .map(num),
        );
        res.row(row);
    }
    res.save(&dir.join("resources.csv"))?;

    let skip: Vec<&str> = sc.lv.iter().filter(|g| derived(g)).map(|g| g.id.as_str()).collect();
    let mut ts = CsvOut::new(&["t", "element_id", "p_kw", "q_kvar"]);
    for t in 0..sc.steps() {
        for (id, s) in &sc.series.series {
            if !skip.contains(&id.as_str()) {
                ts.row([t.to_string(), id.clone(), num(s[t].0), num(s[t].1)]);
            }
        }
    }
    ts.save(&dir.join("timeseries.csv"))?;

    let path = dir.join("scenario.cfg");
    write_atomic(&path, cfg.as_bytes())?;
    Ok(path)
}

fn write_coefficients(g: &LvGrid, path: &Path) -> io::Result<()> {
    let stepped = g.models.len() > 1 || g.models[0].stamp.step.is_some();
    let mut head = vec!["observed", "injector", "kvp", "kvq", "kip", "kiq"];
    if stepped {
        head.insert(0, "t");
    }
    let mut c = CsvOut::new(&head);
    let e = String::new;
    for m in &g.models {
        let mut row = |obs: &str, inj: &str, vals: [String; 4]| {
            let mut r = Vec::with_capacity(7);
            if stepped {
                r.push(m.stamp.step.unwrap_or(0).to_string());
            }
            r.push(obs.to_string());
            r.push(inj.to_string());
            r.extend(vals);
            c.row(r);
        };
        for (i, n) in m.nodes.iter().enumerate() {
            for (k, inj) in m.injectors.iter().enumerate() {
                row(n, inj, [num(m.kvp[(i, k)]), num(m.kvq[(i, k)]), e(), e()]);
            }
        }
        for (b, name) in m.branches.iter().enumerate() {
            for (k, inj) in m.injectors.iter().enumerate() {
                row(name, inj, [e(), e(), num(m.kip[(b, k)]), num(m.kiq[(b, k)])]);
            }
        }
        let tr = &m.transformer;
        for (k, inj) in m.injectors.iter().enumerate() {
            row("@p", inj, [num(tr.dp_dp[k]), num(tr.dp_dq[k]), e(), e()]);
        }
        for (k, inj) in m.injectors.iter().enumerate() {
            row("@q", inj, [num(tr.dq_dp[k]), num(tr.dq_dq[k]), e(), e()]);
        }
    }
    c.save(path)
}

/// Element id of the P-SS in result files.
pub const PSS: &str = "@pss";

pub fn write_setpoints(sc: &OpfScenario, sp: &Setpoints, path: &Path) -> io::Result<()> {
    let mut c = CsvOut::new(&["t", "element", "dp_kw", "dq_kvar", "v_pu"]);
    for (i, t) in sp.steps.iter().enumerate() {
        for (k, r) in sc.resources.iter().enumerate() {
            c.row([t.to_string(), r.id.clone(), num(sc.kw(sp.dp[i][k])), num(sc.kw(sp.dq[i][k])), String::new()]);
        }
        c.row([t.to_string(), PSS.to_string(), String::new(), String::new(), num(sp.slack_v[i])]);
    }
    c.save(path)
}

pub fn read_setpoints(sc: &OpfScenario, path: &Path) -> Result<Setpoints, ParseError> {
    let t = Table::read(path, &["t", "element", "dp_kw", "dq_kvar", "v_pu"])?;
    let n = sc.resources.len();
    let mut sp = Setpoints { steps: Vec::new(), dp: Vec::new(), dq: Vec::new(), slack_v: Vec::new() };
    let mut filled: Vec<Vec<bool>> = Vec::new();
    for r in &t.rows {
        let step = t.usize(r, "t")?;
        if step >= sc.steps() {
            return Err(t.err(r, "t", format!("step {step} beyond horizon of {}", sc.steps())));
        }
        let i = match sp.steps.iter().position(|s| *s == step) {
            Some(i) => i,
            None => {
                sp.steps.push(step);
                sp.dp.push(vec![0.0; n]);
                sp.dq.push(vec![0.0; n]);
                sp.slack_v.push(f64::NAN);
                filled.push(vec![false; n + 1]);
                sp.steps.len() - 1
            }
        };
        let el = t.text(r, "element")?;
        let k = if el == PSS {
            sp.slack_v[i] = t.f64(r, "v_pu")?;
            n
        } else {
            let k = sc.resources.iter().position(|x| x.id == el);
            let k = k.ok_or_else(|| t.err(r, "element", format!("unknown resource {el}")))?;
            sp.dp[i][k] = sc.pu(t.f64(r, "dp_kw")?);
            sp.dq[i][k] = sc.pu(t.f64(r, "dq_kvar")?);
            k
        };
        if std::mem::replace(&mut filled[i][k], true) {
            return Err(t.err(r, "element", format!("{el} at t={step} given twice")));
        }
    }
    for (i, f) in filled.iter().enumerate() {
        if let Some(k) = f.iter().position(|x| !x) {
            let el = if k == n { PSS } else { sc.resources[k].id.as_str() };
            return Err(ParseError::new(path, 0, "element", format!("no row for {el} at t={}", sp.steps[i])));
        }
    }
    Ok(sp)
}

/// Long-format state: one `(t, element, quantity, value)` row per quantity.
pub fn write_state(sc: &OpfScenario, res: &ScheduleResult, path: &Path) -> io::Result<()> {
    let mut c = CsvOut::new(&["t", "element", "quantity", "value"]);
    for s in &res.steps {
        let t = s.t.to_string();
        let mut row = |el: &str, q: &str, v: f64| c.row([t.as_str(), el, q, &num(v)]);
        row(PSS, "p_import_kw", sc.kw(s.mv.p_sl));
        row(PSS, "q_import_kvar", sc.kw(s.mv.q_sl));
        row(PSS, "v_pu", s.mv.slack_v);
        row(PSS, "losses_kw", sc.kw(s.losses));
        for (i, n) in sc.mv.nodes.iter().enumerate() {
            row(&n.id, "v_pu", s.mv.v[i].max(0.0).sqrt());
            row(&n.id, "v_excess_pu2", s.v_dev[i]);
        }
        for (b, br) in sc.mv.branches.iter().enumerate() {
            let id = br.id();
            row(&id, "i_pu", s.mv.l[b].max(0.0).sqrt());
            row(&id, "p_kw", sc.kw(s.mv.p[b]));
            row(&id, "q_kvar", sc.kw(s.mv.q[b]));
            row(&id, "i_excess_pu2", s.l_dev[b]);
        }
        for (g, st) in sc.lv.iter().zip(&s.lv) {
            let m = g.model(s.t);
            for (i, n) in m.nodes.iter().enumerate() {
                row(&format!("{}/{n}", g.id), "v_pu", st.v[i]);
            }
            for (b, n) in m.branches.iter().enumerate() {
                row(&format!("{}/{n}", g.id), "i_pu", st.i[b]);
            }
            row(&g.id, "draw_change_kw", sc.kw(st.dp_sl));
            row(&g.id, "draw_change_kvar", sc.kw(st.dq_sl));
        }
        for (r, soc) in sc.resources.iter().zip(&s.soc) {
            if let Some(x) = soc {
                row(&r.id, "soc", *x);
            }
        }
    }
    c.save(path)
}

/// Weighted objective terms and their total.
pub fn write_breakdown(res: &ScheduleResult, path: &Path) -> io::Result<()> {
    let mut c = CsvOut::new(&["term", "cost"]);
    for term in &res.breakdown.terms {
        c.row([term.name.to_string(), num(term.weighted)]);
    }
    c.row(["total".to_string(), num(res.breakdown.total())]);
    c.save(path)
}

pub fn write_verification(rep: &VerificationReport, path: &Path) -> io::Result<()> {
    let mut c = CsvOut::new(&["t", "element", "kind", "value", "limit", "hard"]);
    for v in &rep.violations {
        c.row([
            v.step.to_string(),
            v.element.clone(),
            v.kind.as_str().into(),
            num(v.value),
            num(v.limit),
            v.hard.to_string(),
        ]);
    }
    c.save(path)
}

/// One row per direction; deviations of the P-SS import in kW/kvar.
pub fn write_envelope(sc: &OpfScenario, env: &FlexEnvelope, path: &Path) -> io::Result<()> {
    let mut c = CsvOut::new(&["service_class", "theta_rad", "dp_kw", "dq_kvar", "status"]);
    for p in &env.points {
        let (dp, dq) = p.delta.map_or((String::new(), String::new()), |(a, b)| (num(sc.kw(a)), num(sc.kw(b))));
        c.row([env.class.label.as_str().to_string(), num(p.theta), dp, dq, p.status.to_string()]);
    }
    c.save(path)
}

pub fn write_envelope_report(sc: &OpfScenario, rep: &EnvelopeReport, step: usize, path: &Path) -> io::Result<()> {
    let kva2 = sc.mv.base_kva * sc.mv.base_kva;
    let mut c = CsvOut::new(&["key", "value"]);
    c.row(["step".to_string(), step.to_string()]);
    c.row(["fast_area_kw_kvar".to_string(), num(rep.fast_area * kva2)]);
    c.row(["slow_area_kw_kvar".to_string(), num(rep.slow_area * kva2)]);
    c.row(["support_excursion_kw".to_string(), num(sc.kw(rep.support_excursion))]);
    c.row(["hull_excursion_kw".to_string(), num(sc.kw(rep.hull_excursion))]);
    c.row(["fast_within_slow".to_string(), rep.contained.to_string()]);
    c.save(path)
}
