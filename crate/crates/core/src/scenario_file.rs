//! Line-oriented scenario format.
//!
//! ```text
//! # comment
//! [topology]
//! n = 4
//! edges = 1-2 2-3 3-4 1-4
//! pinning = 1 0 0 0
//! [control]
//! beta = 2
//! omega_ref = 314
//! droop = 0.002 0.002 0.003 0.003
//! auxiliary = true
//! [init]
//! omega = 314 314 314 314
//! power = 6700 6700 4500 4500
//! z_seed = 7
//! z_omega = 0 0 0 0        # optional, seeded draw when absent
//! [attacks]
//! link = frequency 1 4 -2 start=10 end=20
//! lti = power start=30
//! d0 = -4 -2.5 3 1.5
//! f = <row>                # n rows
//! g = <row>                # n rows
//! [loads]
//! event = 30 0 3350 0 2250
//! [sim]
//! step = 0.001
//! horizon = 40
//! [detection]
//! enabled = true
//! threshold = 0.001
//! dwell = 0.1
//! auto_isolate = true
//! ```
//!
//! Node indices are 1-based. Unknown sections or keys are errors.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::Path;

use crate::attacks::{Attack, AttackTarget, LinkInjection, LtiAttack};
use crate::controllers::ControlParams;
use crate::graph::Topology;
use crate::linalg::Matrix;
use crate::sim::{
    AuxInit, DetectionSettings, InitialConditions, Integration, LoadEvent, Scenario, ScenarioError,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioFileError {
    #[error("{file}:{line}: [{section}] {message}")]
    Parse {
        file: String,
        section: String,
        line: usize,
        message: String,
    },
    #[error("{file}: {source}")]
    Invalid {
        file: String,
        #[source]
        source: ScenarioError,
    },
    #[error("{file}: {message}")]
    Io { file: String, message: String },
}

const SECTIONS: [&str; 7] = ["topology", "control", "init", "attacks", "loads", "sim", "detection"];

struct Entry {
    line: usize,
    key: String,
    value: String,
}

struct Ctx<'a> {
    file: &'a str,
}

impl Ctx<'_> {
    fn err(&self, section: &str, line: usize, message: impl Into<String>) -> ScenarioFileError {
        ScenarioFileError::Parse {
            file: self.file.to_string(),
            section: section.to_string(),
            line,
            message: message.into(),
        }
    }
}

/// Scalar keys of one section, each allowed once.
struct Fields<'a> {
    section: &'a str,
    first_line: usize,
    map: BTreeMap<&'a str, (usize, &'a str)>,
}

impl<'a> Fields<'a> {
    fn new(ctx: &Ctx<'_>, section: &'a str, first_line: usize, entries: &'a [Entry], allowed: &[&str]) -> Result<Self, ScenarioFileError> {
        let mut map = BTreeMap::new();
        for e in entries {
            if !allowed.contains(&e.key.as_str()) {
                return Err(ctx.err(section, e.line, format!("unknown key '{}'", e.key)));
            }
            if map.insert(e.key.as_str(), (e.line, e.value.as_str())).is_some() {
                return Err(ctx.err(section, e.line, format!("duplicate key '{}'", e.key)));
            }
        }
        Ok(Fields { section, first_line, map })
    }

    fn get(&self, key: &str) -> Option<(usize, &'a str)> {
        self.map.get(key).copied()
    }

    fn require(&self, ctx: &Ctx<'_>, key: &str) -> Result<(usize, &'a str), ScenarioFileError> {
        self.get(key)
            .ok_or_else(|| ctx.err(self.section, self.first_line, format!("missing key '{key}'")))
    }

    fn f64(&self, ctx: &Ctx<'_>, key: &str) -> Result<f64, ScenarioFileError> {
        let (line, v) = self.require(ctx, key)?;
        parse_f64(ctx, self.section, line, v)
    }

    fn list(&self, ctx: &Ctx<'_>, key: &str, n: usize) -> Result<Vec<f64>, ScenarioFileError> {
        let (line, v) = self.require(ctx, key)?;
        parse_list(ctx, self.section, line, v, Some(n))
    }

    fn bool_or(&self, ctx: &Ctx<'_>, key: &str, default: bool) -> Result<bool, ScenarioFileError> {
        match self.get(key) {
            None => Ok(default),
            Some((line, v)) => parse_bool(ctx, self.section, line, v),
        }
    }
}

fn parse_f64(ctx: &Ctx<'_>, section: &str, line: usize, s: &str) -> Result<f64, ScenarioFileError> {
    let v: f64 = s
        .parse()
        .map_err(|_| ctx.err(section, line, format!("'{s}' is not a number")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ctx.err(section, line, format!("'{s}' is not finite")))
    }
}

fn parse_list(ctx: &Ctx<'_>, section: &str, line: usize, s: &str, n: Option<usize>) -> Result<Vec<f64>, ScenarioFileError> {
    let v = s
        .split_whitespace()
        .map(|tok| parse_f64(ctx, section, line, tok))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(n) = n {
        if v.len() != n {
            return Err(ctx.err(section, line, format!("expected {n} values, got {}", v.len())));
        }
    }
    Ok(v)
}

fn parse_bool(ctx: &Ctx<'_>, section: &str, line: usize, s: &str) -> Result<bool, ScenarioFileError> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(ctx.err(section, line, format!("expected true or false, got '{s}'"))),
    }
}

fn parse_node(ctx: &Ctx<'_>, section: &str, line: usize, s: &str, n: usize) -> Result<usize, ScenarioFileError> {
    let i: usize = s
        .parse()
        .map_err(|_| ctx.err(section, line, format!("'{s}' is not a node index")))?;
    if i == 0 || i > n {
        return Err(ctx.err(section, line, format!("node {i} out of range 1..={n}")));
    }
    Ok(i - 1)
}

fn parse_target(ctx: &Ctx<'_>, section: &str, line: usize, s: &str) -> Result<AttackTarget, ScenarioFileError> {
    s.parse()
        .map_err(|_| ctx.err(section, line, format!("unknown attack target '{s}'")))
}

/// Splits `key=value` option tokens.
fn parse_options<'s>(
    ctx: &Ctx<'_>,
    section: &str,
    line: usize,
    tokens: &[&'s str],
    allowed: &[&str],
) -> Result<BTreeMap<&'s str, f64>, ScenarioFileError> {
    let mut opts = BTreeMap::new();
    for tok in tokens {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| ctx.err(section, line, format!("expected key=value, got '{tok}'")))?;
        if !allowed.contains(&k) {
            return Err(ctx.err(section, line, format!("unknown option '{k}'")));
        }
        if opts.insert(k, parse_f64(ctx, section, line, v)?).is_some() {
            return Err(ctx.err(section, line, format!("duplicate option '{k}'")));
        }
    }
    Ok(opts)
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioFileError> {
    let file = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioFileError::Io {
        file: file.clone(),
        message: e.to_string(),
    })?;
    parse_scenario(&text, &file)
}

/// Parses and validates a scenario document. `file` is used in diagnostics.
pub fn parse_scenario(text: &str, file: &str) -> Result<Scenario, ScenarioFileError> {
    let ctx = Ctx { file };
    let mut sections: BTreeMap<&str, (usize, Vec<Entry>)> = BTreeMap::new();
    let mut current: Option<&str> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| ctx.err(current.unwrap_or("-"), line, "unterminated section header"))?
                .trim();
            let known = SECTIONS
                .iter()
                .copied()
                .find(|s| *s == name)
                .ok_or_else(|| ctx.err(name, line, format!("unknown section '{name}'")))?;
            if sections.contains_key(known) {
                return Err(ctx.err(known, line, "section appears twice"));
            }
            sections.insert(known, (line, Vec::new()));
            current = Some(known);
            continue;
        }
        let section = current.ok_or_else(|| ctx.err("-", line, "entry before any section header"))?;
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| ctx.err(section, line, format!("expected 'key = value', got '{content}'")))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(ctx.err(section, line, "empty key"));
        }
        sections.get_mut(section).expect("opened").1.push(Entry {
            line,
            key: key.to_string(),
            value: value.trim().to_string(),
        });
    }

    let end_line = text.lines().count().max(1);
    let take = |name: &str| -> Result<&(usize, Vec<Entry>), ScenarioFileError> {
        sections
            .get(name)
            .ok_or_else(|| ctx.err(name, end_line, format!("missing section [{name}]")))
    };
    let empty = (end_line, Vec::new());

    // [topology]
    let (tl, te) = take("topology")?;
    let tf = Fields::new(&ctx, "topology", *tl, te, &["n", "edges", "pinning"])?;
    let (nl, nv) = tf.require(&ctx, "n")?;
    let n: usize = nv
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| ctx.err("topology", nl, format!("n must be a positive integer, got '{nv}'")))?;
    let (el, ev) = tf.get("edges").unwrap_or((*tl, ""));
    let mut edges = Vec::new();
    for tok in ev.split_whitespace() {
        let (a, b) = tok
            .split_once('-')
            .ok_or_else(|| ctx.err("topology", el, format!("edge '{tok}' must look like i-j")))?;
        edges.push((parse_node(&ctx, "topology", el, a, n)?, parse_node(&ctx, "topology", el, b, n)?));
    }
    let pinning = tf.list(&ctx, "pinning", n)?;
    let topology = Topology::new(n, &edges, pinning).map_err(|e| ctx.err("topology", el, e.to_string()))?;

    // [control]
    let (cl, ce) = take("control")?;
    let cf = Fields::new(&ctx, "control", *cl, ce, &["beta", "omega_ref", "droop", "auxiliary"])?;
    let control = ControlParams {
        beta: cf.f64(&ctx, "beta")?,
        omega_ref: cf.f64(&ctx, "omega_ref")?,
        droop: cf.list(&ctx, "droop", n)?,
    };
    let auxiliary = cf.bool_or(&ctx, "auxiliary", true)?;

    // [init]
    let (il, ie) = take("init")?;
    let inf = Fields::new(&ctx, "init", *il, ie, &["omega", "power", "z_seed", "z_omega", "z_p"])?;
    let z_seed = match inf.get("z_seed") {
        None => 0,
        Some((line, v)) => v
            .parse()
            .map_err(|_| ctx.err("init", line, format!("z_seed must be a non-negative integer, got '{v}'")))?,
    };
    let aux = |key: &str| -> Result<AuxInit, ScenarioFileError> {
        match inf.get(key) {
            None => Ok(AuxInit::Random),
            Some((line, v)) => Ok(AuxInit::Values(parse_list(&ctx, "init", line, v, Some(n))?)),
        }
    };
    let init = InitialConditions {
        omega: inf.list(&ctx, "omega", n)?,
        power: inf.list(&ctx, "power", n)?,
        z_seed,
        z_omega: aux("z_omega")?,
        z_p: aux("z_p")?,
    };

    // [attacks]
    let (_, ae) = sections.get("attacks").unwrap_or(&empty);
    let attacks = parse_attacks(&ctx, ae, n)?;

    // [loads]
    let (_, le) = sections.get("loads").unwrap_or(&empty);
    let mut loads = Vec::new();
    for e in le {
        if e.key != "event" {
            return Err(ctx.err("loads", e.line, format!("unknown key '{}'", e.key)));
        }
        let v = parse_list(&ctx, "loads", e.line, &e.value, Some(n + 1))?;
        loads.push(LoadEvent {
            time: v[0],
            deltas: v[1..].to_vec(),
        });
    }

    // [sim]
    let (sl, se) = take("sim")?;
    let sf = Fields::new(&ctx, "sim", *sl, se, &["step", "horizon"])?;
    let integration = Integration {
        step: sf.f64(&ctx, "step")?,
        horizon: sf.f64(&ctx, "horizon")?,
    };

    // [detection]
    let mut detection = DetectionSettings::default();
    if let Some((dl, de)) = sections.get("detection") {
        let df = Fields::new(&ctx, "detection", *dl, de, &["enabled", "threshold", "dwell", "auto_isolate"])?;
        detection.enabled = df.bool_or(&ctx, "enabled", detection.enabled)?;
        detection.auto_isolate = df.bool_or(&ctx, "auto_isolate", detection.auto_isolate)?;
        if df.get("threshold").is_some() {
            detection.threshold = df.f64(&ctx, "threshold")?;
        }
        if df.get("dwell").is_some() {
            detection.dwell = df.f64(&ctx, "dwell")?;
        }
    }

    let scenario = Scenario {
        topology,
        control,
        auxiliary,
        init,
        attacks,
        loads,
        integration,
        detection,
    };
    scenario.validate().map_err(|source| ScenarioFileError::Invalid {
        file: file.to_string(),
        source,
    })?;
    Ok(scenario)
}

struct PendingLti {
    line: usize,
    target: AttackTarget,
    start: f64,
    d0: Option<Vec<f64>>,
    f_rows: Vec<Vec<f64>>,
    g_rows: Vec<Vec<f64>>,
}

fn finish_lti(ctx: &Ctx<'_>, p: PendingLti, n: usize) -> Result<Attack, ScenarioFileError> {
    let err = |m: String| ctx.err("attacks", p.line, m);
    let d0 = p.d0.ok_or_else(|| err("lti entry is missing d0".into()))?;
    if p.f_rows.len() != n || p.g_rows.len() != n {
        return Err(err(format!(
            "lti entry needs {n} rows of f and g, got {} and {}",
            p.f_rows.len(),
            p.g_rows.len()
        )));
    }
    let f = Matrix::from_rows(&p.f_rows).map_err(|e| err(e.to_string()))?;
    let g = Matrix::from_rows(&p.g_rows).map_err(|e| err(e.to_string()))?;
    Ok(Attack::Lti(LtiAttack {
        target: p.target,
        f,
        g,
        d0,
        start: p.start,
    }))
}

fn parse_attacks(ctx: &Ctx<'_>, entries: &[Entry], n: usize) -> Result<Vec<Attack>, ScenarioFileError> {
    let mut attacks = Vec::new();
    let mut pending: Option<PendingLti> = None;
    for e in entries {
        let tokens: Vec<&str> = e.value.split_whitespace().collect();
        match e.key.as_str() {
            "link" => {
                if let Some(p) = pending.take() {
                    attacks.push(finish_lti(ctx, p, n)?);
                }
                if tokens.len() < 4 {
                    return Err(ctx.err(
                        "attacks",
                        e.line,
                        "link needs: <target> <receiver> <sender> <value> start=<t> [end=<t>]",
                    ));
                }
                let opts = parse_options(ctx, "attacks", e.line, &tokens[4..], &["start", "end"])?;
                attacks.push(Attack::Link(LinkInjection {
                    target: parse_target(ctx, "attacks", e.line, tokens[0])?,
                    receiver: parse_node(ctx, "attacks", e.line, tokens[1], n)?,
                    sender: parse_node(ctx, "attacks", e.line, tokens[2], n)?,
                    value: parse_f64(ctx, "attacks", e.line, tokens[3])?,
                    start: *opts
                        .get("start")
                        .ok_or_else(|| ctx.err("attacks", e.line, "link is missing start="))?,
                    end: opts.get("end").copied(),
                }));
            }
            "lti" => {
                if let Some(p) = pending.take() {
                    attacks.push(finish_lti(ctx, p, n)?);
                }
                let (target, rest) = tokens
                    .split_first()
                    .ok_or_else(|| ctx.err("attacks", e.line, "lti needs: <target> start=<t>"))?;
                let opts = parse_options(ctx, "attacks", e.line, rest, &["start"])?;
                pending = Some(PendingLti {
                    line: e.line,
                    target: parse_target(ctx, "attacks", e.line, target)?,
                    start: *opts
                        .get("start")
                        .ok_or_else(|| ctx.err("attacks", e.line, "lti is missing start="))?,
                    d0: None,
                    f_rows: Vec::new(),
                    g_rows: Vec::new(),
                });
            }
            key @ ("d0" | "f" | "g") => {
                let p = pending
                    .as_mut()
                    .ok_or_else(|| ctx.err("attacks", e.line, format!("'{key}' outside an lti entry")))?;
                let row = parse_list(ctx, "attacks", e.line, &e.value, Some(n))?;
                match key {
                    "d0" if p.d0.is_some() => return Err(ctx.err("attacks", e.line, "duplicate d0")),
                    "d0" => p.d0 = Some(row),
                    "f" if p.f_rows.len() == n => return Err(ctx.err("attacks", e.line, "too many f rows")),
                    "f" => p.f_rows.push(row),
                    _ if p.g_rows.len() == n => return Err(ctx.err("attacks", e.line, "too many g rows")),
                    _ => p.g_rows.push(row),
                }
            }
            other => return Err(ctx.err("attacks", e.line, format!("unknown key '{other}'"))),
        }
    }
    if let Some(p) = pending.take() {
        attacks.push(finish_lti(ctx, p, n)?);
    }
    Ok(attacks)
}

struct List<'a>(&'a [f64]);

impl fmt::Display for List<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_char(' ')?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Serializes a scenario. Floats use the shortest round-trip form, so
/// `parse_scenario(&emit_scenario(s))` reproduces `s` exactly.
pub fn emit_scenario(s: &Scenario) -> String {
    let mut out = String::new();
    let t = &s.topology;
    let edges: Vec<String> = t.edges().map(|(i, j)| format!("{}-{}", i + 1, j + 1)).collect();
    let _ = writeln!(out, "[topology]");
    let _ = writeln!(out, "n = {}", t.n());
    let _ = writeln!(out, "edges = {}", edges.join(" "));
    let _ = writeln!(out, "pinning = {}", List(t.pinning()));

    let _ = writeln!(out, "\n[control]");
    let _ = writeln!(out, "beta = {}", s.control.beta);
    let _ = writeln!(out, "omega_ref = {}", s.control.omega_ref);
    let _ = writeln!(out, "droop = {}", List(&s.control.droop));
    let _ = writeln!(out, "auxiliary = {}", s.auxiliary);

    let _ = writeln!(out, "\n[init]");
    let _ = writeln!(out, "omega = {}", List(&s.init.omega));
    let _ = writeln!(out, "power = {}", List(&s.init.power));
    let _ = writeln!(out, "z_seed = {}", s.init.z_seed);
    for (key, aux) in [("z_omega", &s.init.z_omega), ("z_p", &s.init.z_p)] {
        if let AuxInit::Values(v) = aux {
            let _ = writeln!(out, "{key} = {}", List(v));
        }
    }

    if !s.attacks.is_empty() {
        let _ = writeln!(out, "\n[attacks]");
        for a in &s.attacks {
            match a {
                Attack::Link(l) => {
                    let _ = write!(
                        out,
                        "link = {} {} {} {} start={}",
                        l.target.as_str(),
                        l.receiver + 1,
                        l.sender + 1,
                        l.value,
                        l.start
                    );
                    if let Some(end) = l.end {
                        let _ = write!(out, " end={end}");
                    }
                    out.push('\n');
                }
                Attack::Lti(l) => {
                    let _ = writeln!(out, "lti = {} start={}", l.target.as_str(), l.start);
                    let _ = writeln!(out, "d0 = {}", List(&l.d0));
                    for i in 0..l.f.rows() {
                        let _ = writeln!(out, "f = {}", List(l.f.row(i)));
                    }
                    for i in 0..l.g.rows() {
                        let _ = writeln!(out, "g = {}", List(l.g.row(i)));
                    }
                }
            }
        }
    }

    if !s.loads.is_empty() {
        let _ = writeln!(out, "\n[loads]");
        for l in &s.loads {
            let _ = writeln!(out, "event = {} {}", l.time, List(&l.deltas));
        }
    }

    let _ = writeln!(out, "\n[sim]");
    let _ = writeln!(out, "step = {}", s.integration.step);
    let _ = writeln!(out, "horizon = {}", s.integration.horizon);

    let d = &s.detection;
    let _ = writeln!(out, "\n[detection]");
    let _ = writeln!(out, "enabled = {}", d.enabled);
    let _ = writeln!(out, "threshold = {}", d.threshold);
    let _ = writeln!(out, "dwell = {}", d.dwell);
    let _ = writeln!(out, "auto_isolate = {}", d.auto_isolate);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases::{paper_scenario, PaperCase};

    #[test]
    fn paper_cases_round_trip() {
        for case in PaperCase::ALL {
            let s = paper_scenario(case);
            let text = emit_scenario(&s);
            assert_eq!(parse_scenario(&text, "case.ini").unwrap(), s, "{case}");
        }
    }

    fn line_of(err: ScenarioFileError) -> (String, usize) {
        match err {
            ScenarioFileError::Parse { section, line, .. } => (section, line),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn diagnostics_name_section_and_line() {
        let base = emit_scenario(&paper_scenario(PaperCase::NoAttack));
        let bad = base.replace("beta = 2", "beta = two");
        let line = bad.lines().position(|l| l.contains("two")).unwrap() + 1;
        assert_eq!(line_of(parse_scenario(&bad, "x").unwrap_err()), ("control".into(), line));

        let bad = base.replace("horizon = 20", "horizon = 20\nspeed = 3");
        let (sec, _) = line_of(parse_scenario(&bad, "x").unwrap_err());
        assert_eq!(sec, "sim");

        let bad = base.replace("edges = 1-2", "edges = 1-9");
        assert_eq!(line_of(parse_scenario(&bad, "x").unwrap_err()).0, "topology");

        let bad = base.replace("[sim]", "[simulation]");
        assert!(parse_scenario(&bad, "x").is_err());

        let msg = parse_scenario(&bad, "my.ini").unwrap_err().to_string();
        assert!(msg.starts_with("my.ini:"), "{msg}");
    }

    #[test]
    fn lti_entries_need_full_matrices() {
        let s = paper_scenario(PaperCase::AttackAux);
        let text = emit_scenario(&s);
        let mut dropped = false;
        let cut: Vec<&str> = text
            .lines()
            .filter(|l| {
                if !dropped && l.starts_with("g = ") {
                    dropped = true;
                    return false;
                }
                true
            })
            .collect();
        assert!(parse_scenario(&cut.join("\n"), "x").is_err());
    }

    #[test]
    fn validation_errors_are_reported() {
        let text = emit_scenario(&paper_scenario(PaperCase::NoAttack)).replace("step = 0.001", "step = 0.003");
        assert!(matches!(
            parse_scenario(&text, "x").unwrap_err(),
            ScenarioFileError::Invalid { .. }
        ));
    }
}
