use std::fs;
use std::path::{Path, PathBuf};

use gridflex::lv::ModelSource;
use gridflex::scenario::{OpfScenario, ResourceKind};
use gridflex::synthetic;
use gridflex_cli::export::write_scenario;
use gridflex_cli::{load_scenario, IngestError, ScenarioConfig};
use proptest::prelude::*;

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name).join("scenario.cfg")
}

fn load(cfg: &Path) -> Result<OpfScenario, IngestError> {
    load_scenario(&ScenarioConfig::load(cfg)?)
}

/// Copy of a bundled scenario in a temp dir, for editing.
fn copy_bundled(name: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    for e in fs::read_dir(bundled(name).parent().unwrap()).unwrap() {
        let e = e.unwrap();
        fs::copy(e.path(), dir.path().join(e.file_name())).unwrap();
    }
    let cfg = dir.path().join("scenario.cfg");
    (dir, cfg)
}

fn round_trip(sc: &OpfScenario) -> OpfScenario {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_scenario(sc, dir.path()).unwrap();
    load(&cfg).unwrap()
}

#[test]
fn bundled_scenarios_match_builders() {
    let tiny = load(&bundled("tiny")).unwrap();
    assert_eq!(tiny, synthetic::tiny());
    let feeder = load(&bundled("feeder15")).unwrap();
    assert_eq!(feeder.steps(), 144);
    assert_eq!(feeder.steps() as f64 * feeder.settings.dt_min, 24.0 * 60.0);
    assert_eq!(feeder, synthetic::feeder15());
}

#[test]
fn loaded_scenarios_round_trip() {
    for name in ["tiny", "feeder15"] {
        let sc = load(&bundled(name)).unwrap();
        assert_eq!(round_trip(&sc), sc, "{name}");
    }
}

#[test]
fn explicit_coefficients_round_trip() {
    let mut sc = synthetic::tiny();
    for m in &mut sc.lv[0].models {
        m.stamp.source = ModelSource::Imported;
    }
    let back = round_trip(&sc);
    assert_eq!(back, sc);

    // Without a reference network the grid is model-less.
    sc.lv[0].reference = None;
    let back = round_trip(&sc);
    assert_eq!(back, sc);

    // A single model for the whole horizon.
    sc.lv[0].models.truncate(1);
    sc.lv[0].models[0].stamp.step = None;
    assert_eq!(round_trip(&sc), sc);
}

#[test]
fn missing_column_names_column_and_line() {
    let (_d, cfg) = copy_bundled("tiny");
    let p = cfg.parent().unwrap().join("resources.csv");
    let text = fs::read_to_string(&p).unwrap();
    let mut lines = text.lines().map(|l| l.split(',').collect::<Vec<_>>()).collect::<Vec<_>>();
    let col = lines[0].iter().position(|c| *c == "s_kva").unwrap();
    for l in &mut lines {
        l.remove(col);
    }
    fs::write(&p, lines.iter().map(|l| l.join(",") + "\n").collect::<String>()).unwrap();
    match load(&cfg) {
        Err(IngestError::Parse(e)) => {
            assert_eq!(e.column, "s_kva");
            assert_eq!(e.line, 1);
            assert!(e.file.ends_with("resources.csv"));
            assert!(e.to_string().contains("s_kva"));
        }
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn bad_cell_reports_position() {
    let (_d, cfg) = copy_bundled("tiny");
    let p = cfg.parent().unwrap().join("mv_branches.csv");
    let text = fs::read_to_string(&p).unwrap().replacen("1.0000000000000000e-2", "ten", 1);
    fs::write(&p, text).unwrap();
    let Err(IngestError::Parse(e)) = load(&cfg) else { panic!("expected a parse error") };
    assert_eq!((e.line, e.column.as_str()), (2, "r_pu"));
}

#[test]
fn link_to_unknown_grid_is_a_cross_reference_error() {
    let (_d, cfg) = copy_bundled("tiny");
    fs::write(cfg.parent().unwrap().join("links.csv"), "mv_node,lv_grid\nn1,lv9\n").unwrap();
    match load(&cfg) {
        Err(IngestError::CrossRef(v)) => assert!(v.iter().any(|m| m.contains("lv9")), "{v:?}"),
        other => panic!("expected a cross-reference error, got {other:?}"),
    }
}

#[test]
fn unknown_series_element_is_a_cross_reference_error() {
    let (_d, cfg) = copy_bundled("tiny");
    let p = cfg.parent().unwrap().join("timeseries.csv");
    let mut text = fs::read_to_string(&p).unwrap();
    text.push_str("0,lv1/zz,1,0\n");
    fs::write(&p, text).unwrap();
    assert!(matches!(load(&cfg), Err(IngestError::CrossRef(_))));
}

#[test]
fn validation_errors_are_aggregated() {
    let (_d, cfg) = copy_bundled("tiny");
    let p = cfg.parent().unwrap().join("resources.csv");
    let text = fs::read_to_string(&p).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let head: Vec<&str> = lines[0].split(',').collect();
    let pf = head.iter().position(|c| *c == "pf_lim").unwrap();
    let s = head.iter().position(|c| *c == "s_kva").unwrap();
    let mut row: Vec<String> = lines[1].split(',').map(String::from).collect();
    row[pf] = "1.5".into();
    row[s] = "-1".into();
    lines[1] = row.join(",");
    fs::write(&p, lines.join("\n") + "\n").unwrap();
    match load(&cfg) {
        Err(IngestError::Validation(v)) => {
            assert!(v.iter().any(|m| m.contains("pf_lim")), "{v:?}");
            assert!(v.iter().any(|m| m.contains("s_kva")), "{v:?}");
        }
        other => panic!("expected validation errors, got {other:?}"),
    }
}

#[test]
fn unspecified_resource_fields_get_defaults() {
    let (_d, cfg) = copy_bundled("tiny");
    let dir = cfg.parent().unwrap();
    fs::write(
        dir.join("resources.csv"),
        "id,lv_grid,lv_node,kind,s_kva,cap_kwh\npv1,lv1,b,pv,30,\nev1,lv1,a,ev,8,40\n",
    )
    .unwrap();
    let sc = load(&cfg).unwrap();
    let (pv, ev) = (&sc.resources[0], &sc.resources[1]);
    assert_eq!(pv.kind, ResourceKind::Pv);
    assert_eq!(pv.pf_lim, 0.95);
    assert_eq!((pv.dp_lo_kw, pv.dp_hi_kw), (0.0, 0.0));
    assert_eq!(ev.kind, ResourceKind::EvStorage);
    assert_eq!((ev.dp_lo_kw, ev.dp_hi_kw), (-8.0, 8.0));
    assert_eq!((ev.soc_min, ev.soc_max, ev.soc0, ev.eta), (0.1, 0.9, 0.5, 1.0));
    assert_eq!(ev.pf_lim, 0.95);
    assert!(ev.has_storage());
    assert_eq!(sc.settings.dt_min, 10.0);
    assert_eq!(sc.settings.over_rating, 1.1);
    assert_eq!(sc.settings.ramp_threshold_kw_per_hr, 4.0);
}

#[test]
fn half_explicit_grid_is_rejected() {
    let (_d, cfg) = copy_bundled("tiny");
    let mut text = fs::read_to_string(&cfg).unwrap();
    text.push_str("lv.lv1.op = lv1_op.csv\n");
    fs::write(&cfg, text).unwrap();
    assert!(matches!(load(&cfg), Err(IngestError::Validation(_))));
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn perturbed_scenarios_round_trip(
        scale in 0.01f64..10.0,
        shift in -1e3f64..1e3,
        w in proptest::array::uniform5(0.0f64..1e4),
        window in proptest::option::of(1usize..5),
        ramp in prop_oneof![Just(f64::INFINITY), 0.0f64..100.0],
    ) {
        let mut sc = synthetic::tiny();
        for s in sc.series.series.values_mut() {
            for v in s.iter_mut() {
                *v = (v.0 * scale + shift / 7.0, v.1 * scale - shift / 3.0);
            }
        }
        sc.weights.w_l = w[0];
        sc.weights.w_v = w[1];
        sc.weights.w_lim = w[2];
        sc.weights.w_p = w[3];
        sc.weights.w_q = w[4];
        sc.settings.window = window;
        sc.resources[0].ramp_kw_per_hr = ramp;
        sc.resources[0].dq_lo_kvar = -scale;
        sc.slack_v = Some((0..sc.steps()).map(|t| 1.0 + 0.001 * t as f64 * scale).collect());
        for m in &mut sc.lv[0].models {
            m.stamp.source = ModelSource::Imported;
            m.kvp *= scale;
        }
        for op in &mut sc.lv[0].op {
            op.i0.iter_mut().for_each(|i| *i -= shift * 1e-6);
        }
        prop_assert_eq!(round_trip(&sc), sc);
    }
}
