use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bundled_dir(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn gridflex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridflex")).args(args).output().expect("binary runs")
}

fn run_ok(cfg: &Path, command: &str, out: &Path, extra: &[&str]) -> serde_json::Value {
    let mut args = vec!["--config", cfg.to_str().unwrap(), "--command", command, "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = gridflex(&args);
    assert!(o.status.success(), "{command} failed: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).expect("JSON summary on stdout")
}

fn copy_bundled(name: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    for e in fs::read_dir(bundled_dir(name)).unwrap() {
        let e = e.unwrap();
        fs::copy(e.path(), dir.path().join(e.file_name())).unwrap();
    }
    let cfg = dir.path().join("scenario.cfg");
    (dir, cfg)
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path).unwrap().lines().map(|l| l.split(',').map(String::from).collect()).collect()
}

#[test]
fn envelope_on_bundled_feeder() {
    let out = tempfile::tempdir().unwrap();
    let cfg = bundled_dir("feeder15").join("scenario.cfg");
    let s = run_ok(&cfg, "envelope", out.path(), &["--n-dirs", "16", "--svg"]);
    assert_eq!(s["envelope"]["fast_within_slow"], true);
    for class in ["fast", "slow"] {
        let r = rows(&out.path().join(format!("envelope_{class}.csv")));
        assert_eq!(r[0], ["service_class", "theta_rad", "dp_kw", "dq_kvar", "status"]);
        assert_eq!(r.len(), 17);
        for row in &r[1..] {
            assert_eq!(row[0], class.to_uppercase());
            assert_eq!(row[4], "Optimal");
            assert!(row[2].parse::<f64>().is_ok());
        }
    }
    let svg = fs::read_to_string(out.path().join("envelope.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
}

#[test]
fn reruns_are_byte_identical() {
    let cfg = bundled_dir("tiny").join("scenario.cfg");
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for out in [&a, &b] {
        run_ok(&cfg, "opf", out.path(), &[]);
        run_ok(&cfg, "envelope", out.path(), &["--n-dirs", "8"]);
        run_ok(&cfg, "coordinate", out.path(), &["--n-dirs", "8", "--scheme", "dso_leader"]);
    }
    let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 10, "{names:?}");
    for n in names {
        let (x, y) = (fs::read(a.path().join(&n)).unwrap(), fs::read(b.path().join(&n)).unwrap());
        assert!(x == y, "{n:?} differs between runs");
    }
}

#[test]
fn zero_weights_give_zero_breakdown() {
    let (_d, cfg) = copy_bundled("tiny");
    let text = fs::read_to_string(&cfg).unwrap();
    let text: String = text
        .lines()
        .map(|l| {
            if l.starts_with("w_") {
                format!("{} = 0\n", l.split('=').next().unwrap().trim())
            } else {
                format!("{l}\n")
            }
        })
        .collect();
    fs::write(&cfg, text).unwrap();
    let out = tempfile::tempdir().unwrap();
    run_ok(&cfg, "opf", out.path(), &[]);
    let r = rows(&out.path().join("breakdown.csv"));
    assert_eq!(r[0], ["term", "cost"]);
    assert_eq!(r.len(), 7);
    for row in &r[1..] {
        assert_eq!(row[1].parse::<f64>().unwrap(), 0.0, "{row:?}");
    }
}

#[test]
fn opf_outputs_have_headers_and_full_precision() {
    let out = tempfile::tempdir().unwrap();
    let s = run_ok(&bundled_dir("tiny").join("scenario.cfg"), "opf", out.path(), &[]);
    assert!(s["objective"].as_f64().unwrap() > 0.0);
    let sp = rows(&out.path().join("setpoints.csv"));
    assert_eq!(sp[0], ["t", "element", "dp_kw", "dq_kvar", "v_pu"]);
    assert_eq!(sp.len(), 1 + 4 * 2);
    let st = rows(&out.path().join("state.csv"));
    assert_eq!(st[0], ["t", "element", "quantity", "value"]);
    let v = &st[1..].iter().find(|r| r[1] == "@pss" && r[2] == "v_pu").unwrap()[3];
    let mantissa = v.split('e').next().unwrap().replace(['-', '.'], "");
    assert_eq!(mantissa.len(), 17, "{v}");
}

#[test]
fn verify_flags_tampered_setpoints() {
    let cfg = bundled_dir("tiny").join("scenario.cfg");
    let out = tempfile::tempdir().unwrap();
    run_ok(&cfg, "opf", out.path(), &[]);
    let s = run_ok(&cfg, "verify", out.path(), &[]);
    assert_eq!(s["hard_violations"], 0);

    let p = out.path().join("setpoints.csv");
    let text = fs::read_to_string(&p).unwrap();
    let tampered: Vec<String> = text
        .lines()
        .map(|l| {
            let mut f: Vec<&str> = l.split(',').collect();
            if f[0] == "2" && f[1] == "pv1" {
                f[2] = "25";
            }
            f.join(",")
        })
        .collect();
    fs::write(&p, tampered.join("\n") + "\n").unwrap();
    let o =
        gridflex(&["--config", cfg.to_str().unwrap(), "--command", "verify", "--out", out.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(5));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["kind"], "violations");
    let v = rows(&out.path().join("verification.csv"));
    assert!(v.iter().any(|r| r[0] == "2" && r[1] == "pv1" && r[2] == "outside_box"), "{v:?}");
}

#[test]
fn input_errors_exit_with_summary() {
    let (_d, cfg) = copy_bundled("tiny");
    let mut text = fs::read_to_string(&cfg).unwrap();
    text.push_str("colour = blue\n");
    fs::write(&cfg, text).unwrap();
    let o = gridflex(&["--config", cfg.to_str().unwrap(), "--command", "opf"]);
    assert_eq!(o.status.code(), Some(3));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["status"], "error");
    assert_eq!(err["kind"], "parse");
    assert_eq!(err["column"], "colour");
    assert!(err["line"].as_u64().unwrap() > 1);

    let (_d, cfg) = copy_bundled("tiny");
    fs::write(cfg.parent().unwrap().join("links.csv"), "mv_node,lv_grid\nn1,nowhere\n").unwrap();
    let o = gridflex(&["--config", cfg.to_str().unwrap(), "--command", "opf"]);
    assert_eq!(o.status.code(), Some(3));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["kind"], "cross_reference");
}

#[test]
fn unknown_scheme_and_usage_errors() {
    let cfg = bundled_dir("tiny").join("scenario.cfg");
    let out = tempfile::tempdir().unwrap();
    let o = gridflex(&[
        "--config",
        cfg.to_str().unwrap(),
        "--command",
        "coordinate",
        "--scheme",
        "market_first",
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["kind"], "usage");
    assert!(err["message"].as_str().unwrap().contains("market_first"));
    let o = gridflex(&["--config", cfg.to_str().unwrap(), "--command", "dance"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn coordination_outputs() {
    let cfg = bundled_dir("tiny").join("scenario.cfg");
    let out = tempfile::tempdir().unwrap();
    let s = run_ok(&cfg, "coordinate", out.path(), &["--n-dirs", "8"]);
    assert_eq!(s["scheme"], "tso_leader");
    let c = rows(&out.path().join("coordination.csv"));
    let processes: Vec<&str> = c.iter().filter(|r| r[0] == "process").map(|r| r[1].as_str()).collect();
    assert_eq!(processes, ["prequalification", "tso_market", "dso_operation"]);
    assert!(out.path().join("tso_leader_envelope_fast.csv").exists());
    assert!(!out.path().join("setpoints.csv").exists());
}
