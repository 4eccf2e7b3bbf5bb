//! Command dispatch: one command per invocation, outputs under `out`.

use std::path::{Path, PathBuf};

use gridflex::coordination::{run_dso_leader, run_tso_leader, CoordinationError, SchemeKind, ServiceCatalog};
use gridflex::flex::{envelope_report, sweep_envelope, FlexEnvelope, FlexError, FlexOptions, ServiceClass};
use gridflex::opf::{solve_schedule, verify_setpoints, OpfError, ScheduleResult};
use gridflex::scenario::OpfScenario;
use serde_json::{json, Value};

use crate::config::ScenarioConfig;
use crate::export;
use crate::ingest::{load_scenario, IngestError};
use crate::plot::envelope_svg;
use crate::table::{num, write_atomic, CsvOut, ParseError};

/// Allowance (p.u.) before a re-simulated excursion counts as a violation.
pub const VERIFY_TOL: f64 = 2e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Opf,
    Envelope,
    Coordinate,
    Verify,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Opf => "opf",
            Command::Envelope => "envelope",
            Command::Coordinate => "coordinate",
            Command::Verify => "verify",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub config: PathBuf,
    pub command: Command,
    pub n_dirs: Option<usize>,
    pub scheme: Option<String>,
    pub out: Option<PathBuf>,
    pub svg: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Input(#[from] IngestError),
    #[error("setpoints: {0}")]
    Setpoints(ParseError),
    #[error(transparent)]
    Opf(#[from] OpfError),
    #[error(transparent)]
    Flex(#[from] FlexError),
    #[error(transparent)]
    Coordination(#[from] CoordinationError),
    #[error("{count} hard violation(s), listed in {}", file.display())]
    Violations { count: usize, file: PathBuf },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Input(_) | RunError::Setpoints(_) => 3,
            RunError::Coordination(CoordinationError::UnknownScheme(_)) => 3,
            RunError::Opf(_) | RunError::Flex(_) | RunError::Coordination(_) => 4,
            RunError::Violations { .. } => 5,
            RunError::Io { .. } => 1,
        }
    }

    /// Machine-readable summary for stderr.
    pub fn summary(&self) -> Value {
        let mut v = json!({ "status": "error", "exit_code": self.exit_code(), "message": self.to_string() });
        let (kind, extra) = match self {
            RunError::Input(IngestError::Parse(p)) | RunError::Setpoints(p) => {
                ("parse", json!({ "file": p.file.display().to_string(), "line": p.line, "column": p.column }))
            }
            RunError::Input(IngestError::CrossRef(d)) => ("cross_reference", json!({ "details": d })),
            RunError::Input(IngestError::Validation(d)) => ("validation", json!({ "details": d })),
            RunError::Input(IngestError::Assembly(_)) => ("assembly", json!({})),
            RunError::Coordination(CoordinationError::UnknownScheme(s)) => ("usage", json!({ "scheme": s })),
            RunError::Opf(_) | RunError::Flex(_) | RunError::Coordination(_) => ("solve", json!({})),
            RunError::Violations { count, file } => {
                ("violations", json!({ "count": count, "file": file.display().to_string() }))
            }
            RunError::Io { path, .. } => ("io", json!({ "file": path.display().to_string() })),
        };
        v["kind"] = kind.into();
        if let (Value::Object(m), Value::Object(e)) = (&mut v, extra) {
            m.extend(e);
        }
        v
    }
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    fn save(&mut self, name: &str, f: impl FnOnce(&Path) -> std::io::Result<()>) -> Result<(), RunError> {
        let p = self.path(name);
        f(&p).map_err(|source| RunError::Io { path: p, source })
    }
}

/// Runs one command; returns the success summary.
pub fn run(opts: &RunOptions) -> Result<Value, RunError> {
    let cfg = ScenarioConfig::load(&opts.config).map_err(IngestError::from)?;
    let kind = SchemeKind::parse(opts.scheme.as_deref().unwrap_or(&cfg.scheme))?;
    let sc = load_scenario(&cfg)?;
    let mut out = Outputs { dir: opts.out.clone().unwrap_or_else(|| cfg.out.clone()), files: Vec::new() };
    let flex = FlexOptions {
        n_dirs: opts.n_dirs.unwrap_or(cfg.n_dirs),
        step: cfg.envelope_step,
        window: cfg.envelope_window,
        mode: cfg.envelope_mode,
        ..FlexOptions::default()
    };
    let mut summary =
        json!({ "status": "ok", "command": opts.command.as_str(), "scenario": sc.name, "steps": sc.steps() });
    match opts.command {
        Command::Opf => {
            let res = solve_schedule(&sc)?;
            write_schedule(&sc, &res, &mut out)?;
            summary["objective"] = res.objective.into();
            summary["warnings"] = res.warnings().into();
        }
        Command::Envelope => {
            let fast = sweep_envelope(&sc, ServiceClass::fast(&sc)?, &flex)?;
            let slow = sweep_envelope(&sc, ServiceClass::slow(&sc)?, &flex)?;
            summary["envelope"] = write_envelopes(&sc, &fast, &slow, "envelope", opts.svg, &mut out)?;
        }
        Command::Coordinate => {
            let (scheme, fast, slow, extra) = match kind {
                SchemeKind::TsoLeader => {
                    let o = run_tso_leader(&sc, &flex)?;
                    (o.scheme, o.fast, o.slow, Vec::new())
                }
                SchemeKind::DsoLeader => {
                    let o = run_dso_leader(&sc, &flex)?;
                    write_schedule(&sc, &o.schedule, &mut out)?;
                    let mut extra = vec![("dso_objective".to_string(), num(o.schedule.objective))];
                    for (g, t) in &o.recentred.refreshed {
                        extra.push(("refreshed".into(), format!("{g}@{t}")));
                    }
                    for (g, t) in &o.recentred.stale {
                        extra.push(("stale".into(), format!("{g}@{t}")));
                    }
                    (o.scheme, o.fast, o.slow, extra)
                }
            };
            let env = write_envelopes(&sc, &fast, &slow, &format!("{}_envelope", kind.as_str()), opts.svg, &mut out)?;
            let mut c = CsvOut::new(&["key", "value"]);
            c.row(["scheme", kind.as_str()]);
            for p in &scheme.processes {
                c.row(["process", p.as_str()]);
            }
            c.row(["fast_services".to_string(), ServiceCatalog::tso_label(fast.class.label)]);
            c.row(["slow_services".to_string(), ServiceCatalog::tso_label(slow.class.label)]);
            for (k, v) in extra {
                c.row([k, v]);
            }
            out.save("coordination.csv", |p| c.save(p))?;
            summary["scheme"] = kind.as_str().into();
            summary["envelope"] = env;
        }
        Command::Verify => {
            let sp_path = out.dir.join("setpoints.csv");
            let solved;
            let (sp, expected) = if sp_path.exists() {
                (export::read_setpoints(&sc, &sp_path).map_err(RunError::Setpoints)?, None)
            } else {
                solved = solve_schedule(&sc)?;
                (solved.setpoints(), Some(&solved))
            };
            let rep = verify_setpoints(&sc, &sp, expected, VERIFY_TOL)?;
            let file = out.path("verification.csv");
            export::write_verification(&rep, &file).map_err(|source| RunError::Io { path: file.clone(), source })?;
            let hard = rep.hard_violations().count();
            summary["violations"] = rep.violations.len().into();
            summary["hard_violations"] = hard.into();
            summary["mv_voltage_discrepancy"] = rep.mv_voltage_discrepancy.into();
            summary["lv_voltage_discrepancy"] = rep.lv_voltage_discrepancy.into();
            if hard > 0 {
                return Err(RunError::Violations { count: hard, file });
            }
        }
    }
    summary["outputs"] = out.files.iter().map(|f| out.dir.join(f).display().to_string()).collect::<Vec<_>>().into();
    Ok(summary)
}

fn write_schedule(sc: &OpfScenario, res: &ScheduleResult, out: &mut Outputs) -> Result<(), RunError> {
    out.save("setpoints.csv", |p| export::write_setpoints(sc, &res.setpoints(), p))?;
    out.save("state.csv", |p| export::write_state(sc, res, p))?;
    out.save("breakdown.csv", |p| export::write_breakdown(res, p))
}

fn write_envelopes(
    sc: &OpfScenario,
    fast: &FlexEnvelope,
    slow: &FlexEnvelope,
    stem: &str,
    svg: bool,
    out: &mut Outputs,
) -> Result<Value, RunError> {
    out.save(&format!("{stem}_fast.csv"), |p| export::write_envelope(sc, fast, p))?;
    out.save(&format!("{stem}_slow.csv"), |p| export::write_envelope(sc, slow, p))?;
    let rep = envelope_report(fast, slow)?;
    out.save(&format!("{stem}_report.csv"), |p| export::write_envelope_report(sc, &rep, fast.step, p))?;
    if svg {
        let kw = |e: &FlexEnvelope| e.vertices().iter().map(|(p, q)| (sc.kw(*p), sc.kw(*q))).collect::<Vec<_>>();
        let doc = envelope_svg(
            &format!("{} step {}", sc.name, fast.step),
            &[("SLOW", "#3366cc", kw(slow)), ("FAST", "#cc3333", kw(fast))],
        );
        out.save(&format!("{stem}.svg"), |p| write_atomic(p, doc.as_bytes()))?;
    }
    Ok(json!({
        "step": fast.step,
        "fast_failed": fast.failed(),
        "slow_failed": slow.failed(),
        "fast_within_slow": rep.contained,
    }))
}
