//! Flat `key = value` scenario configuration.
//!
//! Blank lines and `#` comments are ignored. File paths are relative to the
//! config file. Per-grid keys take the form `lv.<grid>.<field>`; grids keep
//! the order in which they first appear. Unknown or repeated keys are
//! rejected.

use std::path::{Path, PathBuf};

use gridflex::flex::HorizonMode;
use gridflex::scenario::{ObjectiveWeights, ScenarioSettings};

use crate::table::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub struct LvGridConfig {
    pub id: String,
    pub rating_kva: f64,
    pub base_kv: f64,
    /// Transformer secondary; defaults to the first node of `nodes`.
    pub slack: Option<String>,
    pub nodes: PathBuf,
    pub branches: PathBuf,
    pub coefficients: Option<PathBuf>,
    pub op: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub base_kva: f64,
    pub base_kv: f64,
    pub mv_slack: String,
    pub mv_nodes: PathBuf,
    pub mv_branches: PathBuf,
    pub links: PathBuf,
    pub resources: PathBuf,
    pub timeseries: PathBuf,
    pub slack_v: Option<PathBuf>,
    pub lv: Vec<LvGridConfig>,
    pub weights: ObjectiveWeights,
    pub settings: ScenarioSettings,
    pub lv_eps: f64,
    pub lv_transformer_losses: bool,
    pub scheme: String,
    pub n_dirs: usize,
    pub envelope_step: Option<usize>,
    pub envelope_window: usize,
    pub envelope_mode: HorizonMode,
    pub out: PathBuf,
}

const REQUIRED: [&str; 9] =
    ["name", "base_kva", "base_kv", "mv_slack", "mv_nodes", "mv_branches", "links", "resources", "timeseries"];

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, ParseError> {
        let text = std::fs::read_to_string(path).map_err(|e| ParseError::new(path, 0, "", e.to_string()))?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, path, &dir)
    }

    /// Parses `text`; `file` is used in errors and `dir` anchors relative paths.
    pub fn parse(text: &str, file: &Path, dir: &Path) -> Result<Self, ParseError> {
        let mut cfg = ScenarioConfig {
            name: String::new(),
            base_kva: 0.0,
            base_kv: 0.0,
            mv_slack: String::new(),
            mv_nodes: PathBuf::new(),
            mv_branches: PathBuf::new(),
            links: PathBuf::new(),
            resources: PathBuf::new(),
            timeseries: PathBuf::new(),
            slack_v: None,
            lv: Vec::new(),
            weights: ObjectiveWeights::default(),
            settings: ScenarioSettings::default(),
            lv_eps: 1e-4,
            lv_transformer_losses: false,
            scheme: "tso_leader".into(),
            n_dirs: 32,
            envelope_step: None,
            envelope_window: 6,
            envelope_mode: HorizonMode::Step,
            out: dir.join("out"),
        };
        let mut seen: Vec<String> = Vec::new();
        let mut lv_required: Vec<(String, Vec<&str>, u64)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i as u64 + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |col: &str, msg: String| ParseError::new(file, line, col, msg);
            let Some((key, value)) = content.split_once('=') else {
                return Err(err("", format!("expected `key = value`, got `{content}`")));
            };
            let (key, value) = (key.trim(), value.trim());
            if seen.iter().any(|k| k == key) {
                return Err(err(key, "key given twice".into()));
            }
            seen.push(key.to_string());
            let num = || value.parse::<f64>().map_err(|_| err(key, format!("`{value}` is not a number")));
            let int =
                || value.parse::<usize>().map_err(|_| err(key, format!("`{value}` is not a non-negative integer")));
            let path = || dir.join(value);
            match key {
                "name" => cfg.name = value.to_string(),
                "base_kva" => cfg.base_kva = num()?,
                "base_kv" => cfg.base_kv = num()?,
                "mv_slack" => cfg.mv_slack = value.to_string(),
                "mv_nodes" => cfg.mv_nodes = path(),
                "mv_branches" => cfg.mv_branches = path(),
                "links" => cfg.links = path(),
                "resources" => cfg.resources = path(),
                "timeseries" => cfg.timeseries = path(),
                "slack_v" => cfg.slack_v = Some(path()),
                "w_l" => cfg.weights.w_l = num()?,
                "w_v" => cfg.weights.w_v = num()?,
                "w_lim" => cfg.weights.w_lim = num()?,
                "w_p" => cfg.weights.w_p = num()?,
                "w_q" => cfg.weights.w_q = num()?,
                "dt_min" => cfg.settings.dt_min = num()?,
                "ramp_threshold_kw_per_hr" => cfg.settings.ramp_threshold_kw_per_hr = num()?,
                "slack_v_min" => cfg.settings.slack_v_min = num()?,
                "slack_v_max" => cfg.settings.slack_v_max = num()?,
                "slack_v0" => cfg.settings.slack_v0 = num()?,
                "over_rating" => cfg.settings.over_rating = num()?,
                "relaxation_threshold" => cfg.settings.relaxation_threshold = num()?,
                "trust_radius_frac" => cfg.settings.trust_radius_frac = num()?,
                "window" => cfg.settings.window = Some(int()?),
                "tol_feas" => cfg.settings.tol_feas = num()?,
                "tol_gap" => cfg.settings.tol_gap = num()?,
                "lv_eps" => cfg.lv_eps = num()?,
                "lv_transformer_losses" => {
                    cfg.lv_transformer_losses =
                        value.parse().map_err(|_| err(key, format!("`{value}` is not true/false")))?
                }
                "scheme" => cfg.scheme = value.to_string(),
                "n_dirs" => cfg.n_dirs = int()?,
                "envelope_step" => cfg.envelope_step = Some(int()?),
                "envelope_window" => cfg.envelope_window = int()?,
                "envelope_mode" => {
                    cfg.envelope_mode = match value {
                        "step" => HorizonMode::Step,
                        "horizon_sum" => HorizonMode::HorizonSum,
                        _ => return Err(err(key, format!("`{value}` is not step/horizon_sum"))),
                    }
                }
                "out" => cfg.out = path(),
                _ => {
                    let Some((grid, field)) = key.strip_prefix("lv.").and_then(|k| k.rsplit_once('.')) else {
                        return Err(err(key, "unknown key".into()));
                    };
                    if grid.is_empty() {
                        return Err(err(key, "empty grid id".into()));
                    }
                    let g = match cfg.lv.iter().position(|g| g.id == grid) {
                        Some(g) => g,
                        None => {
                            cfg.lv.push(LvGridConfig {
                                id: grid.to_string(),
                                rating_kva: 0.0,
                                base_kv: 0.4,
                                slack: None,
                                nodes: PathBuf::new(),
                                branches: PathBuf::new(),
                                coefficients: None,
                                op: None,
                            });
                            lv_required.push((grid.to_string(), vec!["rating_kva", "nodes", "branches"], line));
                            cfg.lv.len() - 1
                        }
                    };
                    let lv = &mut cfg.lv[g];
                    match field {
                        "rating_kva" => lv.rating_kva = num()?,
                        "base_kv" => lv.base_kv = num()?,
                        "slack" => lv.slack = Some(value.to_string()),
                        "nodes" => lv.nodes = path(),
                        "branches" => lv.branches = path(),
                        "coefficients" => lv.coefficients = Some(path()),
                        "op" => lv.op = Some(path()),
                        _ => return Err(err(key, "unknown key".into())),
                    }
                    lv_required[g].1.retain(|f| *f != field);
                }
            }
        }
        if let Some(missing) = REQUIRED.iter().find(|k| !seen.iter().any(|s| s == *k)) {
            return Err(ParseError::new(file, 0, missing, "required key missing".into()));
        }
        if let Some((grid, fields, line)) = lv_required.iter().find(|(_, f, _)| !f.is_empty()) {
            return Err(ParseError::new(
                file,
                *line,
                &format!("lv.{grid}.{}", fields[0]),
                "required key missing".into(),
            ));
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "name = t\nbase_kva = 1000\nbase_kv = 20\nmv_slack = ss\nmv_nodes = n.csv\n\
        mv_branches = b.csv\nlinks = l.csv\nresources = r.csv\ntimeseries = ts.csv\n";

    fn parse(extra: &str) -> Result<ScenarioConfig, ParseError> {
        ScenarioConfig::parse(&format!("{BASE}{extra}"), Path::new("x.cfg"), Path::new("/d"))
    }

    #[test]
    fn defaults_and_paths() {
        let c =
            parse("# comment\n\nlv.g1.rating_kva = 400 # trailing\nlv.g1.nodes = g1n.csv\nlv.g1.branches = g1b.csv\n")
                .unwrap();
        assert_eq!(c.settings.dt_min, 10.0);
        assert_eq!(c.settings.over_rating, 1.1);
        assert_eq!(c.settings.ramp_threshold_kw_per_hr, 4.0);
        assert_eq!(c.mv_nodes, Path::new("/d/n.csv"));
        assert_eq!(c.lv.len(), 1);
        assert_eq!(c.lv[0].rating_kva, 400.0);
        assert_eq!(c.lv[0].base_kv, 0.4);
    }

    #[test]
    fn unknown_key_is_an_error() {
        let e = parse("w_x = 1\n").unwrap_err();
        assert_eq!((e.line, e.column.as_str()), (10, "w_x"));
        assert!(parse("lv.g1.colour = red\n").is_err());
    }

    #[test]
    fn repeated_and_missing_keys() {
        assert!(parse("name = again\n").is_err());
        let e = ScenarioConfig::parse("name = t\n", Path::new("x.cfg"), Path::new("")).unwrap_err();
        assert_eq!(e.column, "base_kva");
        let e = parse("lv.g1.rating_kva = 1\nlv.g1.nodes = a\n").unwrap_err();
        assert_eq!(e.column, "lv.g1.branches");
    }

    #[test]
    fn bad_values() {
        assert!(parse("w_l = lots\n").is_err());
        assert!(parse("n_dirs = -3\n").is_err());
        assert!(parse("envelope_mode = sideways\n").is_err());
        assert!(parse("just words\n").is_err());
    }
}
