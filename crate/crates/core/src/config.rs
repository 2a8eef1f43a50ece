//! Run configuration: a versioned TOML file with nested blocks.
//!
//! ```toml
//! version = 1
//! mode = "solve"
//!
//! [metric]
//! kind = "euclidean"        # hyperbolic_sinh | scaled_hyperbolic | tabulated
//!
//! [scenario]
//! lambda = 2.0
//! ell = 1.0
//! ```
//!
//! Every other block is optional; [`validate_config`] fills the defaults listed
//! on each field and reports every problem it finds, each tied to a line of the
//! input or to the `--set` override that caused it.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use sha2::{Digest, Sha256};
use toml::de::{DeTable, DeValue};
use toml::{Table, Value};

use crate::analytic::{trapping_radius_bound, Scenario};
use crate::grid::DEFAULT_NODE_CAP;
use crate::metric::{SurfaceMetric, TailModel};

pub const SCHEMA_VERSION: i64 = 1;

pub const DEFAULT_N_R: usize = 400;
pub const DEFAULT_N_THETA: usize = 720;
pub const DEFAULT_STENCIL_ORDER: u8 = 2;
pub const DEFAULT_MAX_ITER: usize = 10_000;
pub const DEFAULT_MAX_DOUBLINGS: usize = 4;
pub const DEFAULT_OUTPUT_DIR: &str = "growthfront-out";
pub const DEFAULT_REFINE_N_R: usize = 100;
pub const DEFAULT_REFINE_N_THETA: usize = 180;
pub const DEFAULT_REFINE_LEVELS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Solve,
    Refine,
    Sweep,
    Compare,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "solve" => Ok(Mode::Solve),
            "refine" => Ok(Mode::Refine),
            "sweep" => Ok(Mode::Sweep),
            "compare" => Ok(Mode::Compare),
            _ => Err(format!("unknown mode {s:?} (expected solve, refine, sweep or compare)")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Solve => "solve",
            Mode::Refine => "refine",
            Mode::Sweep => "sweep",
            Mode::Compare => "compare",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricTag {
    Euclidean,
    HyperbolicSinh,
    ScaledHyperbolic,
    Tabulated,
}

impl FromStr for MetricTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "euclidean" => Ok(MetricTag::Euclidean),
            "hyperbolic_sinh" => Ok(MetricTag::HyperbolicSinh),
            "scaled_hyperbolic" => Ok(MetricTag::ScaledHyperbolic),
            "tabulated" => Ok(MetricTag::Tabulated),
            _ => Err(format!(
                "unknown metric kind {s:?} (expected euclidean, hyperbolic_sinh, scaled_hyperbolic or tabulated)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSpec {
    pub kind: MetricTag,
    /// required for `scaled_hyperbolic`
    pub kappa: Option<f64>,
    /// two-column CSV `r,G`; required for `tabulated`, relative to the config file
    pub table: Option<PathBuf>,
    /// tabulated only; default `unknown`
    pub tail: TailModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    /// default `max(3ℓ, 1.2 T)` with `T` the trapping bound when finite
    pub r_max: Option<f64>,
    pub n_r: usize,
    pub n_theta: usize,
    pub stencil_order: u8,
    pub max_iter: usize,
    pub node_cap: usize,
    /// r_max doublings allowed while the verdict is inconclusive
    pub max_doublings: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Artifact {
    Summary,
    Profile,
    Mask,
    Curves,
    Slices,
}

impl Artifact {
    pub const ALL: [Artifact; 5] = [Artifact::Summary, Artifact::Profile, Artifact::Mask, Artifact::Curves, Artifact::Slices];
}

impl FromStr for Artifact {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "summary" => Ok(Artifact::Summary),
            "profile" => Ok(Artifact::Profile),
            "mask" => Ok(Artifact::Mask),
            "curves" => Ok(Artifact::Curves),
            "slices" => Ok(Artifact::Slices),
            _ => Err(format!("unknown artifact {s:?} (expected summary, profile, mask, curves or slices)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSpec {
    pub directory: PathBuf,
    /// default: all
    pub artifacts: Vec<Artifact>,
    /// default `ℓ·{0, 1/4, 1/2, 1, 2}`
    pub slice_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    /// default `[scenario.lambda]`
    pub lambdas: Vec<f64>,
    /// default `[scenario.ell]`
    pub ells: Vec<f64>,
    /// worker threads; 0 uses every core
    pub parallelism: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineSpec {
    pub base_n_r: usize,
    pub base_n_theta: usize,
    /// level `k` runs `2^k` times the base resolution
    pub levels: usize,
    pub parallelism: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareSpec {
    /// profile CSV from an earlier solve; solved afresh when absent
    pub profile: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub version: i64,
    pub mode: Mode,
    pub metric: MetricSpec,
    pub scenario: Scenario,
    pub grid: GridSpec,
    pub outputs: OutputSpec,
    pub sweep: SweepSpec,
    pub refine: RefineSpec,
    pub compare: CompareSpec,
}

/// Where a configuration problem comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    Line { line: usize, column: usize },
    Override(String),
    Document,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub origin: Origin,
    /// dotted key path, empty for document-level problems
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.origin {
            Origin::Line { line, column } => write!(f, "line {line}, column {column}: ")?,
            Origin::Override(arg) => write!(f, "--set {arg}: ")?,
            Origin::Document => f.write_str("config: ")?,
        }
        if !self.key.is_empty() {
            write!(f, "{}: ", self.key)?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text.as_bytes()[..offset];
    let line = before.iter().filter(|&&b| b == b'\n').count() + 1;
    let start = before.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
    let column = String::from_utf8_lossy(&before[start..]).chars().count() + 1;
    (line, column)
}

fn collect_spans(prefix: &str, value: &DeValue<'_>, span: Range<usize>, out: &mut HashMap<String, Range<usize>>) {
    if !prefix.is_empty() {
        out.insert(prefix.to_string(), span);
    }
    match value {
        DeValue::Table(t) => {
            for (k, v) in t.iter() {
                let path = if prefix.is_empty() { k.get_ref().to_string() } else { format!("{prefix}.{}", k.get_ref()) };
                // key span for tables (their value span covers the whole block)
                let s = if matches!(v.get_ref(), DeValue::Table(_)) { k.span() } else { v.span() };
                collect_spans(&path, v.get_ref(), s, out);
            }
        }
        DeValue::Array(a) => {
            for (i, v) in a.iter().enumerate() {
                collect_spans(&format!("{prefix}[{i}]"), v.get_ref(), v.span(), out);
            }
        }
        _ => {}
    }
}

struct Checker<'a> {
    text: &'a str,
    spans: HashMap<String, Range<usize>>,
    overridden: HashMap<String, String>,
    errors: Vec<ConfigError>,
}

impl Checker<'_> {
    fn origin(&self, path: &str) -> Origin {
        let mut p = path;
        loop {
            if let Some(arg) = self.overridden.get(p) {
                return Origin::Override(arg.clone());
            }
            if let Some(span) = self.spans.get(p) {
                let (line, column) = line_col(self.text, span.start);
                return Origin::Line { line, column };
            }
            match p.rfind(['.', '[']) {
                Some(i) => p = &p[..i],
                None => return Origin::Document,
            }
        }
    }

    fn error(&mut self, path: &str, message: impl Into<String>) {
        let origin = self.origin(path);
        self.errors.push(ConfigError { origin, key: path.to_string(), message: message.into() });
    }

    fn block<'t>(&mut self, root: &'t Table, name: &str, required: bool) -> Option<&'t Table> {
        match root.get(name) {
            Some(Value::Table(t)) => Some(t),
            Some(_) => {
                self.error(name, format!("[{name}] must be a table"));
                None
            }
            None => {
                if required {
                    self.error("", format!("missing [{name}] block"));
                }
                None
            }
        }
    }

    fn unknown_keys(&mut self, table: &Table, prefix: &str, known: &[&str]) {
        for key in table.keys() {
            if !known.contains(&key.as_str()) {
                let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
                self.error(&path, format!("unknown key (expected one of: {})", known.join(", ")));
            }
        }
    }

    fn float(&mut self, table: Option<&Table>, path: &str, key: &str) -> Option<f64> {
        let full = format!("{path}.{key}");
        match table?.get(key)? {
            Value::Float(x) => Some(*x),
            Value::Integer(i) => Some(*i as f64),
            other => {
                self.error(&full, format!("expected a number, found {}", other.type_str()));
                None
            }
        }
    }

    fn integer(&mut self, table: Option<&Table>, path: &str, key: &str) -> Option<i64> {
        let full = format!("{path}.{key}");
        match table?.get(key)? {
            Value::Integer(i) => Some(*i),
            other => {
                self.error(&full, format!("expected an integer, found {}", other.type_str()));
                None
            }
        }
    }

    fn count(&mut self, table: Option<&Table>, path: &str, key: &str, min: usize, default: usize) -> usize {
        match self.integer(table, path, key) {
            None => default,
            Some(v) if v >= min as i64 => v as usize,
            Some(v) => {
                self.error(&format!("{path}.{key}"), format!("{key} must be at least {min}, got {v}"));
                default
            }
        }
    }

    fn string(&mut self, table: Option<&Table>, path: &str, key: &str) -> Option<String> {
        match table?.get(key)? {
            Value::String(s) => Some(s.clone()),
            other => {
                self.error(&format!("{path}.{key}"), format!("expected a string, found {}", other.type_str()));
                None
            }
        }
    }

    fn parsed<T: FromStr<Err = String>>(&mut self, table: Option<&Table>, path: &str, key: &str) -> Option<T> {
        let s = self.string(table, path, key)?;
        match s.parse() {
            Ok(v) => Some(v),
            Err(e) => {
                self.error(&format!("{path}.{key}"), e);
                None
            }
        }
    }

    fn float_list(&mut self, table: Option<&Table>, path: &str, key: &str) -> Option<Vec<f64>> {
        let full = format!("{path}.{key}");
        let items = match table?.get(key)? {
            Value::Array(items) => items,
            other => {
                self.error(&full, format!("expected an array of numbers, found {}", other.type_str()));
                return None;
            }
        };
        let mut out = Vec::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            match item {
                Value::Float(x) => out.push(*x),
                Value::Integer(v) => out.push(*v as f64),
                other => self.error(&format!("{full}[{i}]"), format!("expected a number, found {}", other.type_str())),
            }
        }
        (out.len() == items.len()).then_some(out)
    }
}

fn check_lambda(c: &mut Checker<'_>, path: &str, v: f64) -> bool {
    let ok = v.is_finite() && v > 1.0;
    if !ok {
        c.error(path, format!("lambda must exceed 1 (got {v})"));
    }
    ok
}

fn check_ell(c: &mut Checker<'_>, path: &str, v: f64) -> bool {
    let ok = v.is_finite() && v > 0.0;
    if !ok {
        c.error(path, format!("ell must be positive (got {v})"));
    }
    ok
}

/// Splits `key=value` and parses the value as a TOML scalar, falling back to a
/// bare string.
fn parse_override(arg: &str) -> Result<(String, Value), String> {
    let (key, raw) = arg.split_once('=').ok_or_else(|| "expected key=value".to_string())?;
    let key = key.trim();
    let parts: Vec<&str> = key.split('.').collect();
    if key.is_empty() || parts.len() > 2 || parts.iter().any(|p| p.is_empty()) {
        return Err(format!("{key:?} is not a field path like grid.n_r"));
    }
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.to_string())),
        Err(_) => Value::String(raw.to_string()),
    };
    if matches!(value, Value::Array(_) | Value::Table(_)) {
        return Err("only scalar fields can be overridden".into());
    }
    Ok((key.to_string(), value))
}

/// Validates a configuration document.
pub fn validate_config(text: &str) -> Result<RunConfig, Vec<ConfigError>> {
    validate_config_with(text, &[])
}

/// Validates a configuration document after applying `key=value` overrides.
pub fn validate_config_with(text: &str, overrides: &[String]) -> Result<RunConfig, Vec<ConfigError>> {
    let (doc, syntax) = DeTable::parse_recoverable(text);
    if !syntax.is_empty() {
        return Err(syntax
            .into_iter()
            .map(|e| {
                let origin = match e.span() {
                    Some(s) => {
                        let (line, column) = line_col(text, s.start);
                        Origin::Line { line, column }
                    }
                    None => Origin::Document,
                };
                ConfigError { origin, key: String::new(), message: e.message().trim().to_string() }
            })
            .collect());
    }
    let mut spans = HashMap::new();
    let doc_span = doc.span();
    collect_spans("", &DeValue::Table(doc.into_inner()), doc_span, &mut spans);
    let mut root: Table = match toml::from_str(text) {
        Ok(t) => t,
        Err(e) => {
            return Err(vec![ConfigError { origin: Origin::Document, key: String::new(), message: e.message().to_string() }])
        }
    };

    let mut c = Checker { text, spans, overridden: HashMap::new(), errors: Vec::new() };
    for arg in overrides {
        match parse_override(arg) {
            Ok((key, value)) => {
                match key.split_once('.') {
                    Some((block, field)) => {
                        let entry = root.entry(block.to_string()).or_insert_with(|| Value::Table(Table::new()));
                        match entry {
                            Value::Table(t) => {
                                t.insert(field.to_string(), value);
                            }
                            _ => {
                                c.errors.push(ConfigError {
                                    origin: Origin::Override(arg.clone()),
                                    key: key.clone(),
                                    message: format!("{block} is not a block"),
                                });
                                continue;
                            }
                        }
                    }
                    None => {
                        root.insert(key.clone(), value);
                    }
                }
                c.overridden.insert(key, arg.clone());
            }
            Err(message) => {
                c.errors.push(ConfigError { origin: Origin::Override(arg.clone()), key: String::new(), message })
            }
        }
    }
    let cfg = check_document(&mut c, &root);
    match cfg {
        Some(cfg) if c.errors.is_empty() => Ok(cfg),
        _ => Err(c.errors),
    }
}

fn check_document(c: &mut Checker<'_>, root: &Table) -> Option<RunConfig> {
    c.unknown_keys(root, "", &["version", "mode", "metric", "scenario", "grid", "outputs", "sweep", "refine", "compare"]);

    let version = match root.get("version") {
        None => SCHEMA_VERSION,
        Some(Value::Integer(v)) if *v == SCHEMA_VERSION => *v,
        Some(Value::Integer(v)) => {
            c.error("version", format!("unsupported schema version {v} (this build reads version {SCHEMA_VERSION})"));
            *v
        }
        Some(other) => {
            c.error("version", format!("expected an integer, found {}", other.type_str()));
            SCHEMA_VERSION
        }
    };
    let mode = match root.get("mode") {
        None => Some(Mode::Solve),
        Some(Value::String(s)) => match s.parse() {
            Ok(m) => Some(m),
            Err(e) => {
                c.error("mode", e);
                None
            }
        },
        Some(other) => {
            c.error("mode", format!("expected a string, found {}", other.type_str()));
            None
        }
    };

    // [metric]
    let mt = c.block(root, "metric", true);
    if let Some(t) = mt {
        c.unknown_keys(t, "metric", &["kind", "kappa", "table", "tail"]);
    }
    let kind: Option<MetricTag> = c.parsed(mt, "metric", "kind");
    if mt.is_some() && mt.and_then(|t| t.get("kind")).is_none() {
        c.error("metric", "missing required key kind");
    }
    let kappa = c.float(mt, "metric", "kappa");
    let table = c.string(mt, "metric", "table").map(PathBuf::from);
    let tail: Option<TailModel> = match c.string(mt, "metric", "tail") {
        None => None,
        Some(s) => match s.as_str() {
            "divergent" => Some(TailModel::Divergent),
            "convergent" => Some(TailModel::Convergent),
            "unknown" => Some(TailModel::Unknown),
            _ => {
                c.error("metric.tail", format!("unknown tail model {s:?} (expected divergent, convergent or unknown)"));
                None
            }
        },
    };
    match kind {
        Some(MetricTag::ScaledHyperbolic) => match kappa {
            None => c.error("metric", "scaled_hyperbolic needs kappa"),
            Some(k) if !(k.is_finite() && k > 0.0) => c.error("metric.kappa", format!("kappa must be positive (got {k})")),
            _ => {}
        },
        Some(_) if kappa.is_some() => c.error("metric.kappa", "kappa only applies to scaled_hyperbolic"),
        _ => {}
    }
    match kind {
        Some(MetricTag::Tabulated) => {
            if table.is_none() {
                c.error("metric", "tabulated metric needs a table path");
            }
        }
        Some(_) => {
            if table.is_some() {
                c.error("metric.table", "table only applies to tabulated metrics");
            }
            if tail.is_some() {
                c.error("metric.tail", "builtin metrics carry their own tail model");
            }
        }
        None => {}
    }

    // [scenario]
    let st = c.block(root, "scenario", true);
    if let Some(t) = st {
        c.unknown_keys(t, "scenario", &["lambda", "ell"]);
        for key in ["lambda", "ell"] {
            if !t.contains_key(key) {
                c.error("scenario", format!("missing required key {key}"));
            }
        }
    }
    let lambda = c.float(st, "scenario", "lambda").filter(|&v| check_lambda(c, "scenario.lambda", v));
    let ell = c.float(st, "scenario", "ell").filter(|&v| check_ell(c, "scenario.ell", v));

    // [grid]
    let gt = c.block(root, "grid", false);
    if let Some(t) = gt {
        c.unknown_keys(t, "grid", &["r_max", "n_r", "n_theta", "stencil_order", "max_iter", "node_cap", "max_doublings"]);
    }
    let r_max = c.float(gt, "grid", "r_max");
    if let Some(r) = r_max {
        if !(r.is_finite() && r > 0.0) {
            c.error("grid.r_max", format!("r_max must be positive (got {r})"));
        } else if let Some(l) = ell {
            if r <= l {
                c.error("grid.r_max", format!("r_max must exceed ell = {l} (got {r})"));
            }
        }
    }
    let n_r = c.count(gt, "grid", "n_r", 16, DEFAULT_N_R);
    let n_theta = c.count(gt, "grid", "n_theta", 16, DEFAULT_N_THETA);
    let stencil_order = match c.integer(gt, "grid", "stencil_order") {
        None => DEFAULT_STENCIL_ORDER,
        Some(v @ 1..=3) => v as u8,
        Some(v) => {
            c.error("grid.stencil_order", format!("stencil_order must be 1, 2 or 3 (got {v})"));
            DEFAULT_STENCIL_ORDER
        }
    };
    let max_iter = c.count(gt, "grid", "max_iter", 1, DEFAULT_MAX_ITER);
    let node_cap = c.count(gt, "grid", "node_cap", 1, DEFAULT_NODE_CAP);
    let max_doublings = c.count(gt, "grid", "max_doublings", 0, DEFAULT_MAX_DOUBLINGS);

    // [outputs]
    let ot = c.block(root, "outputs", false);
    if let Some(t) = ot {
        c.unknown_keys(t, "outputs", &["directory", "artifacts", "slice_times"]);
    }
    let directory = c.string(ot, "outputs", "directory").unwrap_or_else(|| DEFAULT_OUTPUT_DIR.to_string());
    let artifacts = match ot.and_then(|t| t.get("artifacts")) {
        None => Artifact::ALL.to_vec(),
        Some(Value::Array(items)) => {
            let mut out = Vec::new();
            for (i, item) in items.iter().enumerate() {
                let path = format!("outputs.artifacts[{i}]");
                match item.as_str().map(str::parse::<Artifact>) {
                    Some(Ok(a)) if !out.contains(&a) => out.push(a),
                    Some(Ok(_)) => c.error(&path, "listed twice"),
                    Some(Err(e)) => c.error(&path, e),
                    None => c.error(&path, format!("expected a string, found {}", item.type_str())),
                }
            }
            out
        }
        Some(other) => {
            c.error("outputs.artifacts", format!("expected an array of names, found {}", other.type_str()));
            Vec::new()
        }
    };
    let slice_times = c.float_list(ot, "outputs", "slice_times");
    if let Some(times) = &slice_times {
        for (i, &t) in times.iter().enumerate() {
            if !(t.is_finite() && t >= 0.0) {
                c.error(&format!("outputs.slice_times[{i}]"), format!("slice times must be finite and nonnegative (got {t})"));
            }
        }
    }

    // [sweep]
    let swt = c.block(root, "sweep", false);
    if let Some(t) = swt {
        c.unknown_keys(t, "sweep", &["lambdas", "ells", "parallelism"]);
    }
    let lambdas = c.float_list(swt, "sweep", "lambdas");
    let ells = c.float_list(swt, "sweep", "ells");
    for (name, list) in [("lambdas", &lambdas), ("ells", &ells)] {
        if let Some(list) = list {
            let path = format!("sweep.{name}");
            if list.is_empty() {
                c.error(&path, "must not be empty");
            }
            for (i, &v) in list.iter().enumerate() {
                let p = format!("{path}[{i}]");
                if name == "lambdas" {
                    check_lambda(c, &p, v);
                } else {
                    check_ell(c, &p, v);
                    if let Some(r) = r_max {
                        if v >= r {
                            c.error(&p, format!("ell must stay below grid.r_max = {r} (got {v})"));
                        }
                    }
                }
            }
        }
    }
    let sweep_parallelism = c.count(swt, "sweep", "parallelism", 0, 0);

    // [refine]
    let rt = c.block(root, "refine", false);
    if let Some(t) = rt {
        c.unknown_keys(t, "refine", &["base_n_r", "base_n_theta", "levels", "parallelism"]);
    }
    let base_n_r = c.count(rt, "refine", "base_n_r", 16, DEFAULT_REFINE_N_R);
    let base_n_theta = c.count(rt, "refine", "base_n_theta", 16, DEFAULT_REFINE_N_THETA);
    let levels = c.count(rt, "refine", "levels", 2, DEFAULT_REFINE_LEVELS);
    if levels > 8 {
        c.error("refine.levels", format!("levels must be at most 8 (got {levels})"));
    }
    let refine_parallelism = c.count(rt, "refine", "parallelism", 0, 0);

    // [compare]
    let ct = c.block(root, "compare", false);
    if let Some(t) = ct {
        c.unknown_keys(t, "compare", &["profile"]);
    }
    let profile = c.string(ct, "compare", "profile").map(PathBuf::from);

    let scenario = Scenario::new(lambda?, ell?).ok()?;
    Some(RunConfig {
        version,
        mode: mode?,
        metric: MetricSpec { kind: kind?, kappa, table, tail: tail.unwrap_or(TailModel::Unknown) },
        scenario,
        grid: GridSpec { r_max, n_r, n_theta, stencil_order, max_iter, node_cap, max_doublings },
        outputs: OutputSpec {
            directory: PathBuf::from(directory),
            artifacts,
            slice_times: slice_times.unwrap_or_else(|| [0.0, 0.25, 0.5, 1.0, 2.0].iter().map(|k| k * scenario.ell).collect()),
        },
        sweep: SweepSpec {
            lambdas: lambdas.unwrap_or_else(|| vec![scenario.lambda]),
            ells: ells.unwrap_or_else(|| vec![scenario.ell]),
            parallelism: sweep_parallelism,
        },
        refine: RefineSpec { base_n_r, base_n_theta, levels, parallelism: refine_parallelism },
        compare: CompareSpec { profile },
    })
}

/// Reads and validates a config file. Relative table, output and profile paths
/// are resolved against the file's directory.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<RunConfig, Vec<ConfigError>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        vec![ConfigError {
            origin: Origin::Document,
            key: String::new(),
            message: format!("cannot read {}: {e}", path.display()),
        }]
    })?;
    let mut cfg = validate_config_with(&text, overrides)?;
    let base = path.parent().unwrap_or(Path::new(""));
    let resolve = |p: &mut PathBuf| {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    };
    if let Some(t) = cfg.metric.table.as_mut() {
        resolve(t);
    }
    if let Some(p) = cfg.compare.profile.as_mut() {
        resolve(p);
    }
    resolve(&mut cfg.outputs.directory);
    Ok(cfg)
}

/// `max(3ℓ, 1.2 T)` with `T` the trapping bound, or `3ℓ` when `T` is infinite
/// or cannot be evaluated.
pub fn default_r_max(metric: &SurfaceMetric, scn: &Scenario) -> f64 {
    match trapping_radius_bound(metric, scn) {
        Ok(t) if t.is_finite() => (3.0 * scn.ell).max(1.2 * t),
        _ => 3.0 * scn.ell,
    }
}

#[derive(Serialize)]
struct HashedMetric<'a> {
    kind: MetricTag,
    kappa: Option<f64>,
    tail: TailModel,
    table_sha256: Option<&'a str>,
}

#[derive(Serialize)]
struct HashedGrid {
    r_max: Option<f64>,
    n_r: usize,
    n_theta: usize,
    stencil_order: u8,
    max_iter: usize,
    max_doublings: usize,
}

#[derive(Serialize)]
struct Hashed<'a> {
    version: i64,
    metric: HashedMetric<'a>,
    scenario: &'a Scenario,
    grid: HashedGrid,
}

/// SHA-256 of the canonical JSON of everything that determines the solution:
/// schema version, metric (with the table's own digest instead of its path),
/// scenario and grid. Mode, outputs and sweep/refine settings are left out so a
/// solve and a later compare of the same problem share a hash.
pub fn config_hash(cfg: &RunConfig, table_sha256: Option<&str>) -> String {
    let g = &cfg.grid;
    let canonical = Hashed {
        version: cfg.version,
        metric: HashedMetric { kind: cfg.metric.kind, kappa: cfg.metric.kappa, tail: cfg.metric.tail, table_sha256 },
        scenario: &cfg.scenario,
        grid: HashedGrid {
            r_max: g.r_max,
            n_r: g.n_r,
            n_theta: g.n_theta,
            stencil_order: g.stencil_order,
            max_iter: g.max_iter,
            max_doublings: g.max_doublings,
        },
    };
    let json = serde_json::to_vec(&canonical).expect("plain data serializes");
    hex::encode(Sha256::digest(&json))
}

/// Keys named by at least one error, for quick membership tests.
pub fn error_keys(errors: &[ConfigError]) -> HashSet<&str> {
    errors.iter().map(|e| e.key.as_str()).collect()
}
