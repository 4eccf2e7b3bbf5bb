//! Bundled synthetic scenarios.
//!
//! [`tiny`] is a two-node verification instance. [`feeder15`] is a 15-node
//! MV feeder with three LV grids, 200 kWp of PV in six units with 10 %
//! curtailment, twelve EV charging points (8 kW, SOC 0.1–0.9, 1000 kWh in
//! total) and a 24 h horizon at 10 min resolution. Profiles are closed-form
//! shapes with seeded noise, so every build produces identical data.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{Branch, Network, Node, TransformerLink};
use crate::lv::ReferenceOptions;
use crate::scenario::{
    assemble_from_reference, LvGrid, ObjectiveWeights, OpfScenario, Resource, ResourceKind, ScenarioError,
    ScenarioSettings, TimeSeries,
};

const BASE_KVA: f64 = 1000.0;

fn node(id: &str, vmin: f64, vmax: f64) -> Node {
    Node { id: id.into(), vmin, vmax }
}

fn branch(from: &str, to: &str, r: f64, x: f64, imax: f64) -> Branch {
    Branch { from: from.into(), to: to.into(), r, x, imax }
}

fn pv(id: &str, grid: &str, node: &str, kwp: f64) -> Resource {
    Resource {
        id: id.into(),
        lv_grid: grid.into(),
        lv_node: node.into(),
        kind: ResourceKind::Pv,
        dp_lo_kw: -0.1 * kwp,
        dp_hi_kw: 0.0,
        dq_lo_kvar: -0.3 * kwp,
        dq_hi_kvar: 0.3 * kwp,
        s_kva: kwp,
        pf_lim: 0.90,
        ramp_kw_per_hr: 3.0,
        eta: 1.0,
        cap_kwh: 0.0,
        soc_min: 0.0,
        soc_max: 1.0,
        soc0: 0.0,
    }
}

fn ev(id: &str, grid: &str, node: &str, cap_kwh: f64, soc0: f64) -> Resource {
    Resource {
        id: id.into(),
        lv_grid: grid.into(),
        lv_node: node.into(),
        kind: ResourceKind::EvStorage,
        dp_lo_kw: -8.0,
        dp_hi_kw: 8.0,
        dq_lo_kvar: -4.0,
        dq_hi_kvar: 4.0,
        s_kva: 8.0,
        pf_lim: 0.90,
        ramp_kw_per_hr: 48.0,
        eta: 0.95,
        cap_kwh,
        soc_min: 0.1,
        soc_max: 0.9,
        soc0,
    }
}

/// Empty LV grid shell; models and operating points come from assembly.
fn lv_shell(id: &str, reference: Network, rating_kva: f64) -> LvGrid {
    LvGrid {
        id: id.into(),
        rating_kva,
        node_limits: reference.nodes.iter().map(|n| (n.vmin, n.vmax)).collect(),
        imax: reference.branches.iter().map(|b| b.imax).collect(),
        models: Vec::new(),
        op: Vec::new(),
        reference: Some(reference),
    }
}

/// Two MV nodes, one LV grid with two load nodes and one PV unit.
pub fn tiny() -> OpfScenario {
    tiny_with(4).expect("bundled scenario assembles")
}

pub fn tiny_with(steps: usize) -> Result<OpfScenario, ScenarioError> {
    let mv = Network {
        base_kva: BASE_KVA,
        base_kv: 20.0,
        nodes: vec![node("ss", 0.95, 1.05), node("n1", 0.95, 1.05)],
        branches: vec![branch("ss", "n1", 0.01, 0.005, 1.0)],
        slack: "ss".into(),
        links: vec![TransformerLink { mv_node: "n1".into(), lv_grid: "lv1".into() }],
    };
    let lv = Network {
        base_kva: BASE_KVA,
        base_kv: 0.4,
        nodes: vec![node("t", 0.9, 1.1), node("a", 0.9, 1.1), node("b", 0.9, 1.1)],
        branches: vec![branch("t", "a", 0.1, 0.03, 0.2), branch("a", "b", 0.08, 0.02, 0.2)],
        slack: "t".into(),
        links: vec![],
    };
    let mut series = TimeSeries::new(steps);
    let pv_kw = [0.0, 10.0, 25.0, 15.0];
    for t in 0..steps {
        series.set("n1", t, -50.0, -10.0);
        series.set("lv1/a", t, -20.0, -5.0);
        series.set("lv1/b", t, -15.0, -5.0);
        series.set("pv1", t, pv_kw[t % pv_kw.len()], 0.0);
    }
    let mut sc = OpfScenario {
        name: "tiny".into(),
        mv,
        lv: vec![lv_shell("lv1", lv, 400.0)],
        resources: vec![pv("pv1", "lv1", "b", 30.0)],
        series,
        weights: ObjectiveWeights::default(),
        settings: ScenarioSettings::default(),
        slack_v: None,
    };
    assemble_from_reference(&mut sc, Some(ReferenceOptions::default()))?;
    Ok(sc)
}

/// Residential load shape, peak 1 at 19:00 with a morning shoulder.
fn load_shape(hour: f64) -> f64 {
    let bump = |c: f64, w: f64| (-((hour - c) / w).powi(2)).exp();
    0.35 + 0.35 * bump(8.0, 1.5) + 0.65 * bump(19.0, 2.0)
}

/// Clear-sky PV shape between 06:00 and 20:00, peak 1 at 13:00.
fn pv_shape(hour: f64) -> f64 {
    if !(6.0..=20.0).contains(&hour) {
        return 0.0;
    }
    (PI * (hour - 6.0) / 14.0).sin().powf(1.5)
}

/// The 15-node feeder with its first `steps` steps (144 = one day).
pub fn feeder15() -> OpfScenario {
    feeder15_with(144).expect("bundled scenario assembles")
}

pub fn feeder15_with(steps: usize) -> Result<OpfScenario, ScenarioError> {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_517);
    let dt_min = 10.0;

    let ids: Vec<String> = (0..15).map(|i| format!("mv{i}")).collect();
    let mut edges: Vec<(usize, usize)> = (0..9).map(|i| (i, i + 1)).collect();
    edges.extend([(4, 10), (10, 11), (11, 12), (6, 13), (13, 14)]);
    let branches = edges
        .iter()
        .map(|&(a, b)| {
            let s = rng.gen_range(0.8..1.2);
            branch(&ids[a], &ids[b], 0.004 * s, 0.003 * s, if a < 3 { 0.8 } else { 0.6 })
        })
        .collect();
    let grids = [("lv1", "mv5"), ("lv2", "mv9"), ("lv3", "mv12")];
    let mv = Network {
        base_kva: BASE_KVA,
        base_kv: 20.0,
        nodes: ids.iter().map(|i| node(i, 0.95, 1.05)).collect(),
        branches,
        slack: "mv0".into(),
        links: grids.iter().map(|(g, n)| TransformerLink { mv_node: (*n).into(), lv_grid: (*g).into() }).collect(),
    };

    let lv_nodes = ["t", "n1", "n2", "n3", "n4", "n5", "n6", "n7"];
    let lv_edges = [("t", "n1"), ("n1", "n2"), ("n2", "n3"), ("n3", "n4"), ("n2", "n5"), ("n5", "n6"), ("n3", "n7")];
    let mut lv = Vec::new();
    for (g, _) in grids {
        let branches = lv_edges
            .iter()
            .map(|&(a, b)| {
                let s = rng.gen_range(0.8..1.2);
                let imax = if a == "t" { 0.25 } else { 0.15 };
                branch(a, b, 0.06 * s, 0.02 * s, imax)
            })
            .collect();
        let net = Network {
            base_kva: BASE_KVA,
            base_kv: 0.4,
            nodes: lv_nodes.iter().map(|n| node(n, 0.9, 1.1)).collect(),
            branches,
            slack: "t".into(),
            links: vec![],
        };
        lv.push(lv_shell(g, net, 400.0));
    }

    let mut resources = Vec::new();
    let pv_kwp = [40.0, 30.0, 35.0, 30.0, 35.0, 30.0];
    let pv_nodes = ["n4", "n6"];
    for (i, kwp) in pv_kwp.iter().enumerate() {
        let (g, _) = grids[i / 2];
        resources.push(pv(&format!("pv{}", i + 1), g, pv_nodes[i % 2], *kwp));
    }
    let ev_nodes = ["n1", "n3", "n5", "n7"];
    let cap = 1000.0 / 12.0;
    for i in 0..12 {
        let (g, _) = grids[i / 4];
        resources.push(ev(&format!("ev{}", i + 1), g, ev_nodes[i % 4], cap, rng.gen_range(0.3..0.5)));
    }

    let mut series = TimeSeries::new(steps);
    let hour = |t: usize| (t as f64 + 0.5) * dt_min / 60.0 % 24.0;
    for n in mv.nodes.iter().skip(1) {
        let peak = rng.gen_range(20.0..40.0);
        for t in 0..steps {
            let p = peak * load_shape(hour(t)) * rng.gen_range(0.95..1.05);
            series.set(&n.id, t, -p, -0.3 * p);
        }
    }
    for (g, _) in grids {
        for n in lv_nodes.iter().skip(1) {
            let peak = rng.gen_range(4.0..9.0);
            for t in 0..steps {
                let p = peak * load_shape(hour(t)) * rng.gen_range(0.9..1.1);
                series.set(&format!("{g}/{n}"), t, -p, -0.25 * p);
            }
        }
    }
    let clouds: Vec<f64> = (0..steps).map(|_| rng.gen_range(0.85..1.0)).collect();
    for (i, kwp) in pv_kwp.iter().enumerate() {
        for t in 0..steps {
            series.set(&format!("pv{}", i + 1), t, kwp * pv_shape(hour(t)) * clouds[t], 0.0);
        }
    }
    for i in 0..12 {
        let start = rng.gen_range(17.0..20.0);
        let dur = rng.gen_range(2.5..4.5);
        let kw = rng.gen_range(3.0..7.0);
        for t in 0..steps {
            let h = hour(t);
            let charging = (h >= start && h < start + dur) || h < start + dur - 24.0;
            series.set(&format!("ev{}", i + 1), t, if charging { -kw } else { 0.0 }, 0.0);
        }
    }

    let mut sc = OpfScenario {
        name: "feeder15".into(),
        mv,
        lv,
        resources,
        series,
        weights: ObjectiveWeights::default(),
        settings: ScenarioSettings { dt_min, ..ScenarioSettings::default() },
        slack_v: None,
    };
    assemble_from_reference(&mut sc, Some(ReferenceOptions::default()))?;
    Ok(sc)
}
