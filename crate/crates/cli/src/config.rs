//! Run configuration: a TOML file with `[domain]`, `[kernel]`, `[material]`,
//! `[control]`, `[discretization]`, `[solver]`, `[study]` and `[output]`
//! sections, plus `section.key=value` overrides from the command line.
//!
//! Validation never stops at the first problem; every issue is reported with
//! its key path and, for values read from the file, its line.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use peridyn_core::expr::{ScalarField, VectorField};
use peridyn_core::kernel::KernelFamily;
use peridyn_core::lab::DeltaPath;
use peridyn_core::mesh::Domain;
use peridyn_core::nonlocal::QuadratureRule;
use toml_edit::{ImDocument, Item, Value};

use crate::error::CliError;

/// Environment variable naming the default output directory.
pub const OUTPUT_ENV: &str = "PERIDYN_OC_OUT";
pub const DEFAULT_OUTPUT: &str = "peridyn-out";

#[derive(Clone, Debug, PartialEq)]
pub struct ConfigIssue {
    pub key: String,
    /// 1-based line in the file; `None` for missing keys and overrides.
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "{} (line {l}): {}", self.key, self.message),
            None => write!(f, "{}: {}", self.key, self.message),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaterialConfig {
    pub expr: String,
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControlConfig {
    pub lambda: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub tracking_weight: String,
    pub control_weight: String,
    pub desired: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscretizationConfig {
    pub h: f64,
    pub delta: f64,
    pub quadrature: QuadratureRule,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub kkt_tol: f64,
    pub cg_tol: f64,
    pub maxit: usize,
    pub cg_maxit: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StudyConfig {
    Solve,
    Gamma {
        deltas: Vec<f64>,
        ratio: f64,
        field: Vec<String>,
        zero_extension: bool,
    },
    HStudy {
        hs: Vec<f64>,
        reference_h: f64,
        /// `(load, exact solution)` for the manufactured local state study.
        manufactured: Option<(Vec<String>, Vec<String>)>,
        /// Expected L² state rate; defaults to 2 in manufactured mode.
        expected_rate: Option<f64>,
    },
    AcStudy {
        hs: Vec<f64>,
        reference_h: f64,
        paths: Vec<DeltaPath>,
        probes: Vec<Vec<String>>,
        tolerance: f64,
    },
    Poincare {
        deltas: Vec<f64>,
    },
    Omega {
        hs: Vec<f64>,
        probe_h: f64,
        lambdas: Vec<f64>,
    },
}

impl StudyConfig {
    pub fn name(&self) -> &'static str {
        match self {
            StudyConfig::Solve => "solve",
            StudyConfig::Gamma { .. } => "gamma",
            StudyConfig::HStudy { .. } => "hstudy",
            StudyConfig::AcStudy { .. } => "acstudy",
            StudyConfig::Poincare { .. } => "poincare",
            StudyConfig::Omega { .. } => "omega",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub domain: Domain,
    pub family: KernelFamily,
    pub material: MaterialConfig,
    pub control: ControlConfig,
    pub discretization: DiscretizationConfig,
    pub solver: SolverConfig,
    pub study: StudyConfig,
    pub output: PathBuf,
}

/// Parsed document plus overrides, with a record of every key read.
struct Source {
    text: String,
    doc: ImDocument<String>,
    overrides: BTreeMap<String, Value>,
}

enum Found<'a> {
    File(&'a Value, Option<usize>),
    Override(&'a Value),
    Other(Option<usize>),
}

impl Source {
    fn line_of(&self, offset: usize) -> usize {
        self.text[..offset.min(self.text.len())].matches('\n').count() + 1
    }

    fn lookup(&self, key: &str) -> Option<Found<'_>> {
        if let Some(v) = self.overrides.get(key) {
            return Some(Found::Override(v));
        }
        let (section, name) = key.split_once('.')?;
        let table = self.doc.as_table().get(section)?.as_table()?;
        let item = table.get(name)?;
        let line = table.key(name).and_then(|k| k.span()).map(|s| self.line_of(s.start));
        match item {
            Item::Value(v) => Some(Found::File(v, line)),
            _ => Some(Found::Other(line)),
        }
    }
}

struct Reader<'a> {
    src: &'a Source,
    issues: Vec<ConfigIssue>,
    seen: BTreeSet<String>,
}

impl<'a> Reader<'a> {
    fn issue(&mut self, key: &str, line: Option<usize>, message: impl Into<String>) {
        self.issues.push(ConfigIssue {
            key: key.to_string(),
            line,
            message: message.into(),
        });
    }

    fn line(&self, key: &str) -> Option<usize> {
        match self.src.lookup(key) {
            Some(Found::File(_, l)) | Some(Found::Other(l)) => l,
            _ => None,
        }
    }

    /// Raw value, or `None` if absent. Non-value items are reported.
    fn raw(&mut self, key: &str) -> Option<(&'a Value, Option<usize>)> {
        self.seen.insert(key.to_string());
        match self.src.lookup(key) {
            None => None,
            Some(Found::File(v, l)) => Some((v, l)),
            Some(Found::Override(v)) => Some((v, None)),
            Some(Found::Other(l)) => {
                self.issue(key, l, "expected a value, found a table");
                None
            }
        }
    }

    fn required<T>(&mut self, key: &str, v: Option<T>) -> Option<T> {
        if v.is_none() && self.src.lookup(key).is_none() {
            self.issue(key, None, "missing required key");
        }
        v
    }

    fn float_value(&mut self, key: &str, v: &Value, line: Option<usize>) -> Option<f64> {
        match v {
            Value::Float(f) => Some(*f.value()),
            Value::Integer(i) => Some(*i.value() as f64),
            _ => {
                self.issue(key, line, format!("expected a number, found {}", v.type_name()));
                None
            }
        }
    }

    fn float(&mut self, key: &str) -> Option<f64> {
        let (v, line) = self.raw(key)?;
        self.float_value(key, v, line)
    }

    fn float_or(&mut self, key: &str, default: f64) -> Option<f64> {
        match self.raw(key) {
            None => Some(default),
            Some((v, line)) => self.float_value(key, v, line),
        }
    }

    fn integer_or(&mut self, key: &str, default: usize) -> Option<usize> {
        match self.raw(key) {
            None => Some(default),
            Some((Value::Integer(i), line)) => {
                let v = *i.value();
                if v < 0 {
                    self.issue(key, line, format!("must be non-negative, got {v}"));
                    None
                } else {
                    Some(v as usize)
                }
            }
            Some((v, line)) => {
                self.issue(key, line, format!("expected an integer, found {}", v.type_name()));
                None
            }
        }
    }

    fn string(&mut self, key: &str) -> Option<String> {
        match self.raw(key)? {
            (Value::String(s), _) => Some(s.value().clone()),
            (v, line) => {
                self.issue(key, line, format!("expected a string, found {}", v.type_name()));
                None
            }
        }
    }

    fn string_or(&mut self, key: &str, default: &str) -> Option<String> {
        if self.src.lookup(key).is_none() {
            self.seen.insert(key.to_string());
            return Some(default.to_string());
        }
        self.string(key)
    }

    fn bool_or(&mut self, key: &str, default: bool) -> Option<bool> {
        match self.raw(key) {
            None => Some(default),
            Some((Value::Boolean(b), _)) => Some(*b.value()),
            Some((v, line)) => {
                self.issue(key, line, format!("expected a boolean, found {}", v.type_name()));
                None
            }
        }
    }

    /// A number or an array of numbers.
    fn floats(&mut self, key: &str) -> Option<Vec<f64>> {
        let (v, line) = self.raw(key)?;
        match v {
            Value::Array(a) => {
                let mut out = Vec::with_capacity(a.len());
                for x in a.iter() {
                    out.push(self.float_value(key, x, line)?);
                }
                Some(out)
            }
            other => self.float_value(key, other, line).map(|f| vec![f]),
        }
    }

    /// A string or an array of strings.
    fn strings(&mut self, key: &str) -> Option<Vec<String>> {
        let (v, line) = self.raw(key)?;
        let one = |x: &Value| x.as_str().map(str::to_string);
        match v {
            Value::Array(a) => {
                let out: Option<Vec<String>> = a.iter().map(one).collect();
                if out.is_none() {
                    self.issue(key, line, "expected an array of strings");
                }
                out
            }
            other => {
                let s = one(other);
                if s.is_none() {
                    self.issue(key, line, format!("expected a string, found {}", other.type_name()));
                }
                s.map(|s| vec![s])
            }
        }
    }

    /// An array of strings or an array of arrays of strings.
    fn string_lists(&mut self, key: &str) -> Option<Vec<Vec<String>>> {
        let (v, line) = self.raw(key)?;
        let Value::Array(a) = v else {
            self.issue(key, line, "expected an array");
            return None;
        };
        let mut out = Vec::new();
        for x in a.iter() {
            match x {
                Value::String(s) => out.push(vec![s.value().clone()]),
                Value::Array(inner) => match inner.iter().map(|y| y.as_str().map(str::to_string)).collect() {
                    Some(v) => out.push(v),
                    None => {
                        self.issue(key, line, "expected arrays of strings");
                        return None;
                    }
                },
                _ => {
                    self.issue(key, line, "expected strings or arrays of strings");
                    return None;
                }
            }
        }
        Some(out)
    }

    fn check(&mut self, key: &str, v: Option<f64>, ok: impl Fn(f64) -> bool, rule: &str) -> Option<f64> {
        let x = v?;
        if ok(x) {
            Some(x)
        } else {
            let line = self.line(key);
            self.issue(key, line, format!("{rule}, got {x}"));
            None
        }
    }

    fn positive_sequence(&mut self, key: &str, required: bool) -> Option<Vec<f64>> {
        let v = self.floats(key);
        let v = if required { self.required(key, v) } else { v }?;
        if v.is_empty() || v.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
            let line = self.line(key);
            self.issue(key, line, "must be a nonempty list of positive numbers");
            return None;
        }
        if v.windows(2).any(|w| !(w[1] < w[0])) {
            let line = self.line(key);
            self.issue(key, line, "must be strictly decreasing");
            return None;
        }
        Some(v)
    }

    fn expression(&mut self, key: &str, source: Option<String>) -> Option<String> {
        let s = source?;
        match ScalarField::parse(&s) {
            Ok(_) => Some(s),
            Err(e) => {
                let line = self.line(key);
                self.issue(key, line, e.to_string());
                None
            }
        }
    }

    fn expressions(&mut self, key: &str, sources: Option<Vec<String>>, dim: Option<usize>) -> Option<Vec<String>> {
        let v = sources?;
        if let Some(n) = dim {
            if v.len() != n {
                let line = self.line(key);
                self.issue(
                    key,
                    line,
                    format!("expected {n} component expressions, got {}", v.len()),
                );
                return None;
            }
        }
        if let Err(e) = VectorField::parse(&v) {
            let line = self.line(key);
            self.issue(key, line, e.to_string());
            return None;
        }
        Some(v)
    }
}

const KNOWN_SECTIONS: [&str; 8] = [
    "domain",
    "kernel",
    "material",
    "control",
    "discretization",
    "solver",
    "study",
    "output",
];

fn parse_override(arg: &str) -> std::result::Result<(String, Value), String> {
    let (key, raw) = arg
        .split_once('=')
        .ok_or_else(|| format!("override `{arg}` is not of the form section.key=value"))?;
    let key = key.trim().to_string();
    if key.split('.').count() != 2 || key.split('.').any(str::is_empty) {
        return Err(format!("override key `{key}` is not of the form section.key"));
    }
    let raw = raw.trim();
    let value = raw.parse::<Value>().unwrap_or_else(|_| Value::from(raw));
    Ok((key, value))
}

/// Parses and validates configuration text.
///
/// `default_output` is used when the file has no `output.dir`.
pub fn parse_config_str(text: &str, overrides: &[String], default_output: &Path) -> Result<RunConfig, CliError> {
    let doc = ImDocument::parse(text.to_string()).map_err(|e| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        CliError::Invalid(vec![ConfigIssue {
            key: "<file>".into(),
            line,
            message: e.message().trim().to_string(),
        }])
    })?;
    let mut issues = Vec::new();
    let mut map = BTreeMap::new();
    for o in overrides {
        match parse_override(o) {
            Ok((k, v)) => {
                map.insert(k, v);
            }
            Err(m) => issues.push(ConfigIssue {
                key: o.clone(),
                line: None,
                message: m,
            }),
        }
    }
    let src = Source {
        text: text.to_string(),
        doc,
        overrides: map,
    };
    let mut r = Reader {
        src: &src,
        issues,
        seen: BTreeSet::new(),
    };
    let cfg = read(&mut r, default_output);
    // Unknown sections and keys are errors: they are usually typos.
    for (section, item) in src.doc.as_table().iter() {
        let line = src
            .doc
            .as_table()
            .key(section)
            .and_then(|k| k.span())
            .map(|s| src.line_of(s.start));
        if !KNOWN_SECTIONS.contains(&section) {
            r.issue(section, line, "unknown section");
            continue;
        }
        if let Some(t) = item.as_table() {
            for (k, _) in t.iter() {
                let path = format!("{section}.{k}");
                if !r.seen.contains(&path) {
                    let line = t.key(k).and_then(|k| k.span()).map(|s| src.line_of(s.start));
                    r.issue(&path, line, "unknown key");
                }
            }
        } else {
            r.issue(section, line, "expected a section");
        }
    }
    for k in src.overrides.keys() {
        if !r.seen.contains(k) {
            r.issue(k, None, "unknown key in override");
        }
    }
    match cfg {
        Some(c) if r.issues.is_empty() => Ok(c),
        _ => {
            if r.issues.is_empty() {
                r.issue("<file>", None, "invalid configuration");
            }
            Err(CliError::Invalid(r.issues))
        }
    }
}

pub fn parse_config(path: &Path, overrides: &[String]) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Read {
        path: path.to_path_buf(),
        source: e,
    })?;
    let default = std::env::var_os(OUTPUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT));
    parse_config_str(&text, overrides, &default)
}

fn read(r: &mut Reader<'_>, default_output: &Path) -> Option<RunConfig> {
    // [domain]
    let dim = r.integer_or("domain.dim", 1);
    let dim = match dim {
        Some(d @ (1 | 2)) => Some(d),
        Some(d) => {
            let line = r.line("domain.dim");
            r.issue("domain.dim", line, format!("dimension must be 1 or 2, got {d}"));
            None
        }
        None => None,
    };
    let lo = r.floats("domain.lo");
    let hi = r.floats("domain.hi");
    let domain = dim.and_then(|n| {
        let lo = lo.unwrap_or(vec![0.0; n]);
        let hi = hi.unwrap_or(vec![1.0; n]);
        if lo.len() != n || hi.len() != n {
            let line = r.line("domain.lo").or(r.line("domain.hi"));
            r.issue("domain.lo", line, format!("bounds must have {n} entries"));
            return None;
        }
        let d = if n == 1 {
            Domain::interval(lo[0], hi[0])
        } else {
            Domain::rect([lo[0], lo[1]], [hi[0], hi[1]])
        };
        d.map_err(|e| {
            let line = r.line("domain.lo");
            r.issue("domain.lo", line, e.to_string())
        })
        .ok()
    });

    // [kernel]
    let family_name = r.string_or("kernel.family", "constant");
    let s = r.float("kernel.s");
    let family = match family_name.as_deref() {
        Some("constant") => Some(KernelFamily::Constant),
        Some("fractional") => {
            let s = r.required("kernel.s", s);
            let s = r.check(
                "kernel.s",
                s,
                |s| s > 0.0 && s < 1.0,
                "fractional order must lie in (0, 1)",
            );
            let s = r.check(
                "kernel.s",
                s,
                |s| s != 0.5,
                "fractional order s = 1/2 is excluded (the control regularity estimate needs s != 1/2)",
            );
            s.map(|s| KernelFamily::Fractional { s })
        }
        Some(other) => {
            let line = r.line("kernel.family");
            r.issue(
                "kernel.family",
                line,
                format!("unknown family `{other}`, expected constant or fractional"),
            );
            None
        }
        None => None,
    };

    // [material]
    let expr = r.string_or("material.h", "1");
    let expr = r.expression("material.h", expr);
    let constant = expr
        .as_deref()
        .and_then(|e| ScalarField::parse(e).ok())
        .and_then(|f| f.as_constant());
    let min = match constant {
        Some(c) => r.float_or("material.min", c),
        None => {
            let v = r.float("material.min");
            r.required("material.min", v)
        }
    };
    let max = match constant {
        Some(c) => r.float_or("material.max", c),
        None => {
            let v = r.float("material.max");
            r.required("material.max", v)
        }
    };
    let min = r.check(
        "material.min",
        min,
        |v| v > 0.0 && v.is_finite(),
        "lower material bound must be positive",
    );
    let max = match (min, max) {
        (Some(a), m) => r.check(
            "material.max",
            m,
            |v| v >= a && v.is_finite(),
            "upper material bound must be >= min",
        ),
        (None, m) => m,
    };

    // [control]
    let lambda = r.float_or("control.lambda", 1.0);
    let lambda = r.check(
        "control.lambda",
        lambda,
        |v| v > 0.0 && v.is_finite(),
        "must be positive",
    );
    let a = r.floats("control.a").or(Some(vec![f64::NEG_INFINITY]));
    let b = r.floats("control.b").or(Some(vec![f64::INFINITY]));
    let bounds = match (a, b, dim) {
        (Some(a), Some(b), Some(n)) => {
            let widen = |v: Vec<f64>| if v.len() == 1 { vec![v[0]; n] } else { v };
            let (a, b) = (widen(a), widen(b));
            if a.len() != n || b.len() != n {
                let line = r.line("control.a");
                r.issue("control.a", line, format!("bounds must have 1 or {n} entries"));
                None
            } else if a.iter().zip(&b).any(|(x, y)| !(x <= y) || *x > 0.0 || *y < 0.0) {
                let line = r.line("control.a");
                r.issue("control.a", line, "need a <= 0 <= b componentwise");
                None
            } else {
                Some((a, b))
            }
        }
        _ => None,
    };
    let tracking = r.string_or("control.gamma", "1");
    let tracking = r.expression("control.gamma", tracking);
    let control_weight = r.string_or("control.weight", "1");
    let control_weight = r.expression("control.weight", control_weight);
    let desired = if r.src.lookup("control.u_des").is_some() {
        r.strings("control.u_des")
    } else {
        r.seen.insert("control.u_des".into());
        dim.map(|n| vec!["0".to_string(); n])
    };
    let desired = r.expressions("control.u_des", desired, dim);

    // [discretization]
    let h = r.float_or("discretization.h", 0.0625);
    let h = r.check(
        "discretization.h",
        h,
        |v| v > 0.0 && v.is_finite(),
        "mesh size must be positive",
    );
    let delta = r.float_or("discretization.delta", 0.0);
    let delta = r.check(
        "discretization.delta",
        delta,
        |v| v >= 0.0 && v.is_finite(),
        "horizon must be >= 0",
    );
    let defaults = QuadratureRule::default();
    let outer = r.integer_or("discretization.outer_order", defaults.outer_order);
    let inner = r.integer_or("discretization.inner_order", defaults.inner_order);
    let levels = match r.raw("discretization.grading_levels") {
        None => Some(None),
        Some((Value::Integer(i), _)) if *i.value() >= 0 => Some(Some(*i.value() as usize)),
        Some((_, line)) => {
            r.issue("discretization.grading_levels", line, "expected a non-negative integer");
            None
        }
    };
    let ratio = r.float_or("discretization.grading_ratio", defaults.grading_ratio);
    let floor = r.float_or("discretization.floor_ratio", defaults.floor_ratio);
    let quadrature = match (outer, inner, levels, ratio, floor) {
        (Some(o), Some(i), Some(l), Some(q), Some(f)) => {
            let rule = QuadratureRule {
                outer_order: o,
                inner_order: i,
                grading_levels: l,
                grading_ratio: q,
                floor_ratio: f,
            };
            match rule.validate() {
                Ok(()) => Some(rule),
                Err(e) => {
                    let line = r.line("discretization.outer_order");
                    r.issue("discretization", line, e.to_string());
                    None
                }
            }
        }
        _ => None,
    };

    // [solver]
    let kkt_tol = r.float_or("solver.kkt_tol", peridyn_core::control::DEFAULT_KKT_TOL);
    let kkt_tol = r.check("solver.kkt_tol", kkt_tol, |v| v > 0.0, "tolerance must be positive");
    let cg_tol = r.float_or("solver.cg_tol", peridyn_core::control::DEFAULT_INNER_TOL);
    let cg_tol = r.check(
        "solver.cg_tol",
        cg_tol,
        |v| v > 0.0 && v < 1.0,
        "tolerance must lie in (0, 1)",
    );
    let maxit = r.integer_or("solver.maxit", 5000);
    let cg_maxit = r.integer_or("solver.cg_maxit", 10_000);

    // [study]
    let kind = r.string("study.type");
    let kind = r.required("study.type", kind);
    let study = match kind.as_deref() {
        Some("solve") => Some(StudyConfig::Solve),
        Some("gamma") => {
            let deltas = r.positive_sequence("study.deltas", true);
            let ratio = r.float_or("study.ratio", 4.0);
            let ratio = r.check("study.ratio", ratio, |v| v >= 4.0, "delta/h must be at least 4");
            let field = r.strings("study.field");
            let field = r.required("study.field", field);
            let field = r.expressions("study.field", field, dim);
            let zero = r.bool_or("study.zero_extension", true);
            Some(StudyConfig::Gamma {
                deltas: deltas?,
                ratio: ratio?,
                field: field?,
                zero_extension: zero?,
            })
        }
        Some("hstudy") => {
            let hs = r.positive_sequence("study.hs", true);
            let load = r.strings("study.load");
            let load = r.expressions("study.load", load, dim);
            let exact = r.strings("study.exact");
            let exact = r.expressions("study.exact", exact, dim);
            let manufactured = match (load, exact) {
                (Some(l), Some(e)) => Some((l, e)),
                (None, None) => None,
                _ => {
                    r.issue("study.exact", None, "study.load and study.exact must be given together");
                    None
                }
            };
            let reference = r.float("study.reference_h");
            let reference = if manufactured.is_some() {
                reference.or(Some(0.0))
            } else {
                r.required("study.reference_h", reference)
            };
            let rate = match r.float("study.expected_rate") {
                Some(v) => Some(Some(v)),
                None if r.src.lookup("study.expected_rate").is_some() => None,
                None => Some(manufactured.as_ref().map(|_| 2.0)),
            };
            Some(StudyConfig::HStudy {
                hs: hs?,
                reference_h: reference?,
                manufactured,
                expected_rate: rate?,
            })
        }
        Some("acstudy") => {
            let hs = r.positive_sequence("study.hs", true);
            let reference = r.float("study.reference_h");
            let reference = r.required("study.reference_h", reference);
            let paths = match r.strings("study.paths") {
                Some(list) => {
                    let parsed: Result<Vec<DeltaPath>, _> = list.iter().map(|p| DeltaPath::parse(p)).collect();
                    match parsed {
                        Ok(p) if !p.is_empty() => Some(p),
                        Ok(_) => {
                            let line = r.line("study.paths");
                            r.issue("study.paths", line, "at least one path is required");
                            None
                        }
                        Err(e) => {
                            let line = r.line("study.paths");
                            r.issue("study.paths", line, e.to_string());
                            None
                        }
                    }
                }
                None => Some(vec![
                    DeltaPath::Proportional(2.0),
                    DeltaPath::Proportional(4.0),
                    DeltaPath::Sqrt(1.0),
                ]),
            };
            let probes = match r.string_lists("study.probes") {
                Some(list) => {
                    let mut ok = Vec::new();
                    for p in list {
                        if let Some(v) = r.expressions("study.probes", Some(p), dim) {
                            ok.push(v);
                        }
                    }
                    Some(ok)
                }
                None => dim.map(|n| vec![vec!["1".to_string(); n]]),
            };
            let tolerance = r.float_or("study.tolerance", 1e-2);
            let tolerance = r.check("study.tolerance", tolerance, |v| v > 0.0, "tolerance must be positive");
            Some(StudyConfig::AcStudy {
                hs: hs?,
                reference_h: reference?,
                paths: paths?,
                probes: probes?,
                tolerance: tolerance?,
            })
        }
        Some("poincare") => {
            let deltas = r.floats("study.deltas");
            let deltas = r.required("study.deltas", deltas);
            let deltas = deltas.and_then(|d| {
                if d.is_empty() || d.iter().any(|x| !(*x >= 0.0)) {
                    let line = r.line("study.deltas");
                    r.issue("study.deltas", line, "must be a nonempty list of non-negative horizons");
                    None
                } else {
                    Some(d)
                }
            });
            Some(StudyConfig::Poincare { deltas: deltas? })
        }
        Some("omega") => {
            let hs = r.positive_sequence("study.hs", true);
            let probe_h = r.float("study.probe_h");
            let probe_h = r.required("study.probe_h", probe_h);
            let probe_h = r.check("study.probe_h", probe_h, |v| v > 0.0, "mesh size must be positive");
            let lambdas = r.floats("study.lambdas");
            let lambdas = match lambdas {
                Some(l) if l.is_empty() || l.iter().any(|x| !(*x > 0.0)) => {
                    let line = r.line("study.lambdas");
                    r.issue("study.lambdas", line, "must be a nonempty list of positive weights");
                    None
                }
                Some(l) => Some(l),
                None => lambda.map(|l| vec![l]),
            };
            Some(StudyConfig::Omega {
                hs: hs?,
                probe_h: probe_h?,
                lambdas: lambdas?,
            })
        }
        Some(other) => {
            let line = r.line("study.type");
            r.issue(
                "study.type",
                line,
                format!("unknown study `{other}`, expected solve, gamma, hstudy, acstudy, poincare or omega"),
            );
            None
        }
        None => None,
    };

    // [output]
    let output = r
        .string("output.dir")
        .map(PathBuf::from)
        .unwrap_or_else(|| default_output.to_path_buf());

    let (lower, upper) = bounds?;
    Some(RunConfig {
        domain: domain?,
        family: family?,
        material: MaterialConfig {
            expr: expr?,
            min: min?,
            max: max?,
        },
        control: ControlConfig {
            lambda: lambda?,
            lower,
            upper,
            tracking_weight: tracking?,
            control_weight: control_weight?,
            desired: desired?,
        },
        discretization: DiscretizationConfig {
            h: h?,
            delta: delta?,
            quadrature: quadrature?,
        },
        solver: SolverConfig {
            kkt_tol: kkt_tol?,
            cg_tol: cg_tol?,
            maxit: maxit?,
            cg_maxit: cg_maxit?,
        },
        study: study?,
        output,
    })
}
