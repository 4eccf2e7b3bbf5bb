//! Browser bindings for the demo page in `www/`. Each export takes plain
//! numbers and returns a JSON string; the `*_json` functions are the same
//! operations for native callers.

use std::cell::RefCell;
use std::collections::HashMap;

use gridflex::coordination::{run_dso_leader, run_tso_leader};
use gridflex::flex::{envelope_report, sweep_envelope, FlexEnvelope, FlexOptions, ServiceClass};
use gridflex::opf::solve_schedule;
use gridflex::scenario::{OpfScenario, ResourceKind};
use gridflex::synthetic;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

thread_local! {
    static CACHE: RefCell<HashMap<String, OpfScenario>> = RefCell::new(HashMap::new());
}

fn scenario(name: &str) -> Result<OpfScenario, String> {
    CACHE.with(|c| {
        if let Some(sc) = c.borrow().get(name) {
            return Ok(sc.clone());
        }
        let sc = match name {
            "tiny" => synthetic::tiny(),
            "feeder15" => synthetic::feeder15(),
            _ => return Err(format!("unknown scenario `{name}` (tiny or feeder15)")),
        };
        c.borrow_mut().insert(name.to_string(), sc.clone());
        Ok(sc)
    })
}

fn vertices_kw(sc: &OpfScenario, e: &FlexEnvelope) -> Value {
    e.vertices().iter().map(|(p, q)| json!([sc.kw(*p), sc.kw(*q)])).collect()
}

fn opts(sc: &OpfScenario, step: u32, n_dirs: u32) -> Result<FlexOptions, String> {
    let step = step as usize;
    if step >= sc.steps() {
        return Err(format!("step {step} outside horizon of {} steps", sc.steps()));
    }
    Ok(FlexOptions { n_dirs: n_dirs as usize, step: Some(step), ..FlexOptions::default() })
}

/// Fast and slow envelopes at `step` with the given ramp threshold (kW/h).
pub fn envelope_json(name: &str, step: u32, n_dirs: u32, ramp_threshold: f64) -> Result<Value, String> {
    let mut sc = scenario(name)?;
    sc.settings.ramp_threshold_kw_per_hr = ramp_threshold;
    let o = opts(&sc, step, n_dirs)?;
    let fast =
        sweep_envelope(&sc, ServiceClass::fast(&sc).map_err(|e| e.to_string())?, &o).map_err(|e| e.to_string())?;
    let slow =
        sweep_envelope(&sc, ServiceClass::slow(&sc).map_err(|e| e.to_string())?, &o).map_err(|e| e.to_string())?;
    let rep = envelope_report(&fast, &slow).map_err(|e| e.to_string())?;
    let kva2 = sc.mv.base_kva * sc.mv.base_kva;
    Ok(json!({
        "step": fast.step,
        "hour": fast.step as f64 * sc.dt_hours(),
        "fast": vertices_kw(&sc, &fast),
        "slow": vertices_kw(&sc, &slow),
        "fast_area": rep.fast_area * kva2,
        "slow_area": rep.slow_area * kva2,
        "contained": rep.contained,
        "failed": fast.failed() + slow.failed(),
    }))
}

/// Day-ahead schedule under the given weights: P-SS import and PV
/// curtailment per step, and the cost breakdown.
pub fn schedule_json(name: &str, w_l: f64, w_v: f64, w_lim: f64) -> Result<Value, String> {
    let mut sc = scenario(name)?;
    sc.weights.w_l = w_l;
    sc.weights.w_v = w_v;
    sc.weights.w_lim = w_lim;
    let res = solve_schedule(&sc).map_err(|e| e.to_string())?;
    let pv: Vec<usize> = (0..sc.resources.len()).filter(|&k| sc.resources[k].kind == ResourceKind::Pv).collect();
    let import: Vec<f64> = res.steps.iter().map(|s| sc.kw(s.mv.p_sl)).collect();
    let curtail: Vec<f64> = res.steps.iter().map(|s| -pv.iter().map(|&k| sc.kw(s.dp[k])).sum::<f64>()).collect();
    let vmax: Vec<f64> = res.steps.iter().map(|s| s.mv.v.iter().fold(0.0f64, |a, v| a.max(v.sqrt()))).collect();
    let terms: Value = res.breakdown.terms.iter().map(|t| json!({ "name": t.name, "cost": t.weighted })).collect();
    Ok(json!({
        "dt_hours": sc.dt_hours(),
        "import_kw": import,
        "curtailment_kw": curtail,
        "mv_vmax": vmax,
        "terms": terms,
        "objective": res.objective,
    }))
}

/// Slow envelopes offered under each coordination scheme at `step`.
pub fn schemes_json(name: &str, step: u32, n_dirs: u32) -> Result<Value, String> {
    let sc = scenario(name)?;
    let o = opts(&sc, step, n_dirs)?;
    let tso = run_tso_leader(&sc, &o).map_err(|e| e.to_string())?;
    let dso = run_dso_leader(&sc, &o).map_err(|e| e.to_string())?;
    Ok(json!({
        "step": tso.slow.step,
        "tso_leader": { "slow": vertices_kw(&sc, &tso.slow), "fast": vertices_kw(&sc, &tso.fast) },
        "dso_leader": { "slow": vertices_kw(&sc, &dso.slow), "fast": vertices_kw(&sc, &dso.fast) },
        "refreshed": dso.recentred.refreshed.len(),
    }))
}

fn to_js(r: Result<Value, String>) -> Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn envelope(name: &str, step: u32, n_dirs: u32, ramp_threshold: f64) -> Result<String, JsError> {
    to_js(envelope_json(name, step, n_dirs, ramp_threshold))
}

#[wasm_bindgen]
pub fn schedule(name: &str, w_l: f64, w_v: f64, w_lim: f64) -> Result<String, JsError> {
    to_js(schedule_json(name, w_l, w_v, w_lim))
}

#[wasm_bindgen]
pub fn schemes(name: &str, step: u32, n_dirs: u32) -> Result<String, JsError> {
    to_js(schemes_json(name, step, n_dirs))
}

/// Horizon length of a bundled scenario.
#[wasm_bindgen]
pub fn steps(name: &str) -> Result<u32, JsError> {
    scenario(name).map(|s| s.steps() as u32).map_err(|e| JsError::new(&e))
}
