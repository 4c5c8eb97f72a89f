//! Line-oriented scenario files.
//!
//! ```text
//! # comment
//! [manifold H]
//! coords = t, z
//! g t t = "1"            # indices are coordinate names or 1-based numbers
//! g 2 2 = "1"
//! bound t = (0.5, 3)
//! bound z = (-2, 2)
//!
//! [warp A]
//! factors = H, S
//! f1 = "t"               # lives on the first factor, scales the second
//! f2 = "1"
//!
//! [immersion phi1]
//! source = P
//! target = H
//! map = "sqrt(1 + u^2)", "log(u + sqrt(1 + u^2))"
//!
//! [scenario catenoid]
//! phi1 = phi1
//! phi2 = phi2
//! ambient = A
//! c = 0
//! hypotheses = minimal
//! points = 12            # or `grid 3`
//! expect_minimal = yes
//!
//! [checks]
//! isometry
//! mixed_geodesy = 1e-8   # optional tolerance
//! ```

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::chenineq::Hypothesis;
use crate::dwp::{build_dwp, DoublyWarpedProduct};
use crate::dwpimm::{build_scenario, DwpImmersionScenario};
use crate::error::{Error, Result};
use crate::exprs::{parse, ScalarExpr};
use crate::riemann::ChartedManifold;
use crate::submanifold::ImmersionSpec;

use super::checks::CheckKind;

#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldDecl {
    pub name: String,
    pub line: usize,
    pub coords: Vec<String>,
    pub metric: Vec<(usize, usize, ScalarExpr)>,
    pub bounds: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WarpDecl {
    pub name: String,
    pub line: usize,
    pub factors: (String, String),
    pub f1: ScalarExpr,
    pub f2: ScalarExpr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImmersionDecl {
    pub name: String,
    pub line: usize,
    pub source: String,
    pub target: String,
    pub maps: Vec<ScalarExpr>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sampling {
    /// Seeded uniform draw of this many interior points.
    Random(usize),
    /// Cell-centred grid with this many points per coordinate.
    Grid(usize),
}

pub const DEFAULT_POINTS: usize = 12;

/// Properties the scenario author asserts; checked by the classification,
/// mean curvature and inequality checks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Expectations {
    pub minimal: Option<bool>,
    pub totally_geodesic: Option<bool>,
    pub umbilical: Option<bool>,
    pub equality: Option<bool>,
    pub mean_curvature_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioDecl {
    pub name: String,
    pub line: usize,
    pub phi1: String,
    pub phi2: String,
    pub ambient: String,
    pub c: Option<f64>,
    pub hypotheses: Vec<Hypothesis>,
    pub sampling: Sampling,
    pub expect: Expectations,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckRequest {
    pub kind: CheckKind,
    pub tolerance: Option<f64>,
}

/// A parsed and assembled scenario file.
#[derive(Debug, Clone)]
pub struct ScenarioFile {
    pub manifolds: Vec<ManifoldDecl>,
    pub warps: Vec<WarpDecl>,
    pub immersions: Vec<ImmersionDecl>,
    pub decl: ScenarioDecl,
    pub checks: Vec<CheckRequest>,
    pub scenario: DwpImmersionScenario,
}

impl ScenarioFile {
    pub fn id(&self) -> &str {
        &self.decl.name
    }
}

pub fn load_scenario(path: &std::path::Path) -> Result<ScenarioFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_scenario(&text)
}

fn diag(section: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Scenario { section: section.to_string(), line, message: message.into() }
}

/// Splits on commas that are not inside quotes or parentheses.
fn split_list(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let (mut depth, mut quoted, mut cur) = (0i32, false, String::new());
    for ch in s.chars() {
        match ch {
            '"' => quoted = !quoted,
            '(' if !quoted => depth += 1,
            ')' if !quoted => depth -= 1,
            ',' if !quoted && depth == 0 => {
                out.push(cur.trim().to_string());
                cur.clear();
                continue;
            }
            _ => {}
        }
        cur.push(ch);
    }
    if !cur.trim().is_empty() {
        out.push(cur.trim().to_string());
    }
    out
}

fn strip_comment(line: &str) -> &str {
    let mut quoted = false;
    for (i, ch) in line.char_indices() {
        match ch {
            '"' => quoted = !quoted,
            '#' if !quoted => return &line[..i],
            _ => {}
        }
    }
    line
}

fn unquote(section: &str, line: usize, v: &str) -> Result<String> {
    let v = v.trim();
    if v.len() >= 2 && v.starts_with('"') && v.ends_with('"') {
        Ok(v[1..v.len() - 1].to_string())
    } else {
        Err(diag(section, line, format!("expected a quoted expression, found `{v}`")))
    }
}

fn expr(section: &str, line: usize, v: &str) -> Result<ScalarExpr> {
    parse(&unquote(section, line, v)?).map_err(|e| diag(section, line, e.to_string()))
}

fn number(section: &str, line: usize, v: &str) -> Result<f64> {
    let v = v.trim();
    let x: f64 = v.parse().map_err(|_| diag(section, line, format!("expected a number, found `{v}`")))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(diag(section, line, format!("expected a finite number, found `{v}`")))
    }
}

fn flag(section: &str, line: usize, v: &str) -> Result<bool> {
    match v.trim() {
        "yes" | "true" => Ok(true),
        "no" | "false" => Ok(false),
        other => Err(diag(section, line, format!("expected yes or no, found `{other}`"))),
    }
}

fn hypothesis(section: &str, line: usize, v: &str) -> Result<Hypothesis> {
    match v {
        "harmonic" => return Ok(Hypothesis::Harmonic),
        "minimal" => return Ok(Hypothesis::Minimal),
        _ => {}
    }
    if let Some(inner) = v.strip_prefix("eigen(").and_then(|r| r.strip_suffix(')')) {
        let parts = split_list(inner);
        if parts.len() == 2 {
            return Ok(Hypothesis::Eigen(number(section, line, &parts[0])?, number(section, line, &parts[1])?));
        }
    }
    Err(diag(section, line, format!("unknown hypothesis `{v}` (expected harmonic, minimal or eigen(a, b))")))
}

#[derive(Default)]
struct RawManifold {
    coords: Option<Vec<String>>,
    metric: Vec<(String, String, ScalarExpr, usize)>,
    bounds: Vec<(String, (f64, f64), usize)>,
}

#[derive(Default)]
struct RawScenario {
    phi1: Option<String>,
    phi2: Option<String>,
    ambient: Option<String>,
    c: Option<f64>,
    hypotheses: Vec<Hypothesis>,
    sampling: Option<Sampling>,
    expect: Expectations,
}

/// Raw `key = value` lines with their line numbers.
type Keyed = BTreeMap<String, (String, usize)>;

enum Section {
    None,
    Manifold(String, usize, RawManifold),
    Warp(String, usize, Keyed),
    Immersion(String, usize, Keyed),
    Scenario(String, usize, RawScenario),
    Checks,
}

impl Section {
    fn label(&self) -> String {
        match self {
            Section::None => "preamble".into(),
            Section::Manifold(n, ..) => format!("[manifold {n}]"),
            Section::Warp(n, ..) => format!("[warp {n}]"),
            Section::Immersion(n, ..) => format!("[immersion {n}]"),
            Section::Scenario(n, ..) => format!("[scenario {n}]"),
            Section::Checks => "[checks]".into(),
        }
    }
}

#[derive(Default)]
struct Parsed {
    manifolds: Vec<ManifoldDecl>,
    warps: Vec<(WarpDecl, Keyed)>,
    immersions: Vec<(ImmersionDecl, Keyed)>,
    scenario: Option<(String, usize, RawScenario)>,
    checks: Vec<CheckRequest>,
    names: BTreeMap<String, String>,
}

fn coord_index(label: &str, line: usize, coords: &[String], key: &str) -> Result<usize> {
    if let Some(i) = coords.iter().position(|c| c == key) {
        return Ok(i);
    }
    match key.parse::<usize>() {
        Ok(i) if i >= 1 && i <= coords.len() => Ok(i - 1),
        _ => Err(diag(label, line, format!("unknown coordinate `{key}`"))),
    }
}

fn finish_manifold(name: String, line: usize, raw: RawManifold) -> Result<ManifoldDecl> {
    let label = format!("[manifold {name}]");
    let coords = raw.coords.ok_or_else(|| diag(&label, line, "missing `coords`"))?;
    let mut metric = Vec::new();
    for (i, j, e, l) in raw.metric {
        metric.push((coord_index(&label, l, &coords, &i)?, coord_index(&label, l, &coords, &j)?, e));
    }
    let mut bounds = vec![None; coords.len()];
    for (c, b, l) in raw.bounds {
        let k = coord_index(&label, l, &coords, &c)?;
        if bounds[k].is_some() {
            return Err(diag(&label, l, format!("duplicate bound for `{c}`")));
        }
        bounds[k] = Some(b);
    }
    let bounds = bounds
        .into_iter()
        .zip(&coords)
        .map(|(b, c)| b.ok_or_else(|| diag(&label, line, format!("missing `bound {c}`"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(ManifoldDecl { name, line, coords, metric, bounds })
}

fn required(label: &str, line: usize, map: &Keyed, key: &str) -> Result<(String, usize)> {
    map.get(key).cloned().ok_or_else(|| diag(label, line, format!("missing `{key}`")))
}

impl Parsed {
    fn close(&mut self, section: Section) -> Result<()> {
        match section {
            Section::Manifold(name, line, raw) => self.manifolds.push(finish_manifold(name, line, raw)?),
            Section::Warp(name, line, map) => {
                let label = format!("[warp {name}]");
                let (factors, fl) = required(&label, line, &map, "factors")?;
                let fs = split_list(&factors);
                if fs.len() != 2 {
                    return Err(diag(&label, fl, "`factors` needs exactly two manifold names"));
                }
                let (f1, l1) = required(&label, line, &map, "f1")?;
                let (f2, l2) = required(&label, line, &map, "f2")?;
                let decl = WarpDecl {
                    name,
                    line,
                    factors: (fs[0].clone(), fs[1].clone()),
                    f1: expr(&label, l1, &f1)?,
                    f2: expr(&label, l2, &f2)?,
                };
                self.warps.push((decl, map));
            }
            Section::Immersion(name, line, map) => {
                let label = format!("[immersion {name}]");
                let (maps, ml) = required(&label, line, &map, "map")?;
                let maps = split_list(&maps).iter().map(|m| expr(&label, ml, m)).collect::<Result<Vec<_>>>()?;
                let decl = ImmersionDecl {
                    name,
                    line,
                    source: required(&label, line, &map, "source")?.0,
                    target: required(&label, line, &map, "target")?.0,
                    maps,
                };
                self.immersions.push((decl, map));
            }
            Section::Scenario(name, line, raw) => {
                if self.scenario.is_some() {
                    return Err(diag(&format!("[scenario {name}]"), line, "only one scenario per file"));
                }
                self.scenario = Some((name, line, raw));
            }
            Section::None | Section::Checks => {}
        }
        Ok(())
    }

    fn header(&mut self, text: &str, line: usize) -> Result<Section> {
        let inner = text[1..text.len() - 1].trim();
        if inner == "checks" {
            return Ok(Section::Checks);
        }
        let mut words = inner.split_whitespace();
        let (kind, name) = match (words.next(), words.next(), words.next()) {
            (Some(k), Some(n), None) => (k, n.to_string()),
            _ => return Err(diag(text, line, "section header must be `[kind name]` or `[checks]`")),
        };
        if let Some(prev) = self.names.insert(name.clone(), kind.to_string()) {
            return Err(diag(text, line, format!("name `{name}` already declared as a {prev}")));
        }
        Ok(match kind {
            "manifold" => Section::Manifold(name, line, RawManifold::default()),
            "warp" => Section::Warp(name, line, BTreeMap::new()),
            "immersion" => Section::Immersion(name, line, BTreeMap::new()),
            "scenario" => Section::Scenario(name, line, RawScenario::default()),
            other => return Err(diag(text, line, format!("unknown section kind `{other}`"))),
        })
    }
}

fn entry(section: &mut Section, key: &str, value: Option<&str>, line: usize, checks: &mut Vec<CheckRequest>) -> Result<()> {
    let label = section.label();
    if let Section::Checks = section {
        let kind = CheckKind::from_name(key).ok_or_else(|| diag(&label, line, format!("unknown check `{key}`")))?;
        let tolerance = match value {
            None => None,
            Some(v) => {
                let t = number(&label, line, v)?;
                if t <= 0.0 {
                    return Err(diag(&label, line, "tolerance must be positive"));
                }
                Some(t)
            }
        };
        if checks.iter().any(|c| c.kind == kind) {
            return Err(diag(&label, line, format!("check `{key}` listed twice")));
        }
        checks.push(CheckRequest { kind, tolerance });
        return Ok(());
    }
    let value = value.ok_or_else(|| diag(&label, line, format!("expected `{key} = value`")))?;
    match section {
        Section::None => return Err(diag(&label, line, "entry outside of any section")),
        Section::Manifold(_, _, raw) => {
            let words: Vec<&str> = key.split_whitespace().collect();
            match words.as_slice() {
                ["coords"] => {
                    let cs = split_list(value);
                    if cs.is_empty() || cs.iter().any(|c| c.is_empty() || !c.chars().all(|ch| ch.is_alphanumeric() || ch == '_')) {
                        return Err(diag(&label, line, "`coords` must be a comma-separated list of identifiers"));
                    }
                    raw.coords = Some(cs);
                }
                ["g", i, j] => raw.metric.push((i.to_string(), j.to_string(), expr(&label, line, value)?, line)),
                ["bound", c] => {
                    let v = value.trim();
                    let inner = v
                        .strip_prefix('(')
                        .and_then(|r| r.strip_suffix(')'))
                        .ok_or_else(|| diag(&label, line, "bounds are written `(a, b)`"))?;
                    let parts = split_list(inner);
                    if parts.len() != 2 {
                        return Err(diag(&label, line, "bounds are written `(a, b)`"));
                    }
                    let (a, b) = (number(&label, line, &parts[0])?, number(&label, line, &parts[1])?);
                    if a >= b {
                        return Err(diag(&label, line, format!("empty interval ({a}, {b})")));
                    }
                    raw.bounds.push((c.to_string(), (a, b), line));
                }
                _ => return Err(diag(&label, line, format!("unknown key `{key}`"))),
            }
        }
        Section::Warp(_, _, map) | Section::Immersion(_, _, map) => {
            let allowed: &[&str] = if label.starts_with("[warp") { &["factors", "f1", "f2"] } else { &["source", "target", "map"] };
            if !allowed.contains(&key) {
                return Err(diag(&label, line, format!("unknown key `{key}`")));
            }
            if map.insert(key.to_string(), (value.trim().to_string(), line)).is_some() {
                return Err(diag(&label, line, format!("duplicate key `{key}`")));
            }
        }
        Section::Scenario(_, _, raw) => {
            let v = value.trim();
            match key {
                "phi1" => raw.phi1 = Some(v.to_string()),
                "phi2" => raw.phi2 = Some(v.to_string()),
                "ambient" => raw.ambient = Some(v.to_string()),
                "c" => raw.c = Some(number(&label, line, v)?),
                "hypotheses" => {
                    for h in split_list(v) {
                        raw.hypotheses.push(hypothesis(&label, line, &h)?);
                    }
                }
                "points" => {
                    let s = match v.strip_prefix("grid") {
                        Some(rest) => Sampling::Grid(rest.trim().parse().map_err(|_| diag(&label, line, "expected `grid <count>`"))?),
                        None => Sampling::Random(v.parse().map_err(|_| diag(&label, line, "expected a point count or `grid <count>`"))?),
                    };
                    if matches!(s, Sampling::Random(0) | Sampling::Grid(0)) {
                        return Err(diag(&label, line, "point count must be positive"));
                    }
                    raw.sampling = Some(s);
                }
                "expect_minimal" => raw.expect.minimal = Some(flag(&label, line, v)?),
                "expect_totally_geodesic" => raw.expect.totally_geodesic = Some(flag(&label, line, v)?),
                "expect_umbilical" => raw.expect.umbilical = Some(flag(&label, line, v)?),
                "expect_equality" => raw.expect.equality = Some(flag(&label, line, v)?),
                "expect_mean_curvature_norm" => raw.expect.mean_curvature_norm = Some(number(&label, line, v)?),
                _ => return Err(diag(&label, line, format!("unknown key `{key}`"))),
            }
        }
        Section::Checks => unreachable!(),
    }
    Ok(())
}

pub fn parse_scenario(text: &str) -> Result<ScenarioFile> {
    let mut parsed = Parsed::default();
    let mut section = Section::None;
    let mut saw_checks = false;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let t = strip_comment(raw).trim();
        if t.is_empty() {
            continue;
        }
        if t.starts_with('[') {
            if !t.ends_with(']') {
                return Err(diag(&section.label(), line, "unterminated section header"));
            }
            let next = parsed.header(t, line)?;
            if matches!(next, Section::Checks) {
                if saw_checks {
                    return Err(diag(t, line, "duplicate [checks] section"));
                }
                saw_checks = true;
            }
            let prev = std::mem::replace(&mut section, next);
            parsed.close(prev)?;
            continue;
        }
        let (key, value) = match t.split_once('=') {
            Some((k, v)) => (k.trim(), Some(v.trim())),
            None => (t, None),
        };
        entry(&mut section, key, value, line, &mut parsed.checks)?;
    }
    parsed.close(section)?;
    assemble(parsed)
}

fn assemble(parsed: Parsed) -> Result<ScenarioFile> {
    let (name, line, raw) = parsed.scenario.ok_or_else(|| diag("file", 0, "no [scenario] section"))?;
    let label = format!("[scenario {name}]");
    let manifolds: BTreeMap<&str, &ManifoldDecl> = parsed.manifolds.iter().map(|m| (m.name.as_str(), m)).collect();
    let mut built: BTreeMap<String, Arc<ChartedManifold>> = BTreeMap::new();
    for m in &parsed.manifolds {
        let coords: Vec<&str> = m.coords.iter().map(String::as_str).collect();
        let cm = ChartedManifold::new(&m.name, &coords, &m.metric, &m.bounds)
            .map_err(|e| diag(&format!("[manifold {}]", m.name), m.line, e.to_string()))?;
        built.insert(m.name.clone(), Arc::new(cm));
    }
    let manifold = |l: &str, line: usize, n: &str| -> Result<Arc<ChartedManifold>> {
        if !manifolds.contains_key(n) {
            return Err(diag(l, line, format!("unknown manifold `{n}`")));
        }
        Ok(built[n].clone())
    };
    let mut warps: BTreeMap<&str, DoublyWarpedProduct> = BTreeMap::new();
    for (w, map) in &parsed.warps {
        let l = format!("[warp {}]", w.name);
        let fl = map["factors"].1;
        let (m1, m2) = (manifold(&l, fl, &w.factors.0)?, manifold(&l, fl, &w.factors.1)?);
        let d = build_dwp(m1, m2, w.f1.clone(), w.f2.clone()).map_err(|e| {
            let at = match &e {
                Error::NonPositiveWarp { function, .. } if function.starts_with("f2") => map["f2"].1,
                Error::NonPositiveWarp { .. } => map["f1"].1,
                _ => w.line,
            };
            diag(&l, at, format!("positivity or structure violation: {e}"))
        })?;
        warps.insert(w.name.as_str(), d);
    }
    let mut immersions: BTreeMap<&str, ImmersionSpec> = BTreeMap::new();
    for (i, map) in &parsed.immersions {
        let l = format!("[immersion {}]", i.name);
        let src = manifold(&l, map["source"].1, &i.source)?;
        let tgt = manifold(&l, map["target"].1, &i.target)?;
        if i.maps.len() != tgt.dim() {
            return Err(diag(
                &l,
                map["map"].1,
                format!("map has {} components but `{}` has dimension {}", i.maps.len(), tgt.name(), tgt.dim()),
            ));
        }
        let spec = ImmersionSpec::new(src, tgt, i.maps.clone()).map_err(|e| diag(&l, map["map"].1, e.to_string()))?;
        immersions.insert(i.name.as_str(), spec);
    }
    let get = |key: &str, v: &Option<String>| v.clone().ok_or_else(|| diag(&label, line, format!("missing `{key}`")));
    let (phi1, phi2, ambient) = (get("phi1", &raw.phi1)?, get("phi2", &raw.phi2)?, get("ambient", &raw.ambient)?);
    let imm = |n: &str| immersions.get(n).cloned().ok_or_else(|| diag(&label, line, format!("unknown immersion `{n}`")));
    let (i1, i2) = (imm(&phi1)?, imm(&phi2)?);
    let w = warps.get(ambient.as_str()).cloned().ok_or_else(|| diag(&label, line, format!("unknown warp `{ambient}`")))?;
    let scenario = build_scenario(i1, i2, w, raw.c).map_err(|e| diag(&label, line, e.to_string()))?;
    let decl = ScenarioDecl {
        name,
        line,
        phi1,
        phi2,
        ambient,
        c: raw.c,
        hypotheses: raw.hypotheses,
        sampling: raw.sampling.unwrap_or(Sampling::Random(DEFAULT_POINTS)),
        expect: raw.expect,
    };
    Ok(ScenarioFile {
        manifolds: parsed.manifolds,
        warps: parsed.warps.into_iter().map(|(w, _)| w).collect(),
        immersions: parsed.immersions.into_iter().map(|(i, _)| i).collect(),
        decl,
        checks: parsed.checks,
        scenario,
    })
}
