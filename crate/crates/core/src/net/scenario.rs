//! Line-oriented scenario files.
//!
//! ```text
//! # comment
//! [seed]   <n>
//! [node]   <name> <kind>
//! [iface]  <node> <ordinal> <addr>[/<len>]
//! [link]   <nodeA>.<ord> <nodeB>.<ord> <metric_ab> [<metric_ba>]
//! [pdu]    <ue> <upf> <ue_addr>[/<len>] [<metric_up> [<metric_down>]]
//! [event]  <time_ms> link-down <endpoint>
//! [event]  <time_ms> link-up <endpoint>
//! [event]  <time_ms> metric-change <endpoint> <metric_out> [<metric_in>]
//! [event]  <time_ms> pdu-establish <ue> <upf> <ue_addr>[/<len>] [<metric_up> [<metric_down>]]
//! [event]  <time_ms> pdu-release <session-id>
//! ```
//!
//! See `docs/scenario-format.md` for the full grammar.

use std::collections::BTreeSet;
use std::fmt;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::addr::{parse_cidr_address, IpAddress, IpPrefix};
use super::topology::{check_metric, NodeKind};
use crate::mobile::SessionId;

/// A value tagged with its source line. Line numbers do not take part in
/// equality.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Spanned<T> {
    pub line: usize,
    pub value: T,
}

impl<T: PartialEq> PartialEq for Spanned<T> {
    fn eq(&self, other: &Self) -> bool {
        self.value == other.value
    }
}

impl<T: Eq> Eq for Spanned<T> {}

impl<T> Spanned<T> {
    pub fn new(line: usize, value: T) -> Self {
        Spanned { line, value }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeDecl {
    pub name: String,
    pub kind: NodeKind,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IfaceDecl {
    pub node: String,
    pub ordinal: u32,
    pub address: IpAddress,
    pub subnet: IpPrefix,
}

/// Interface reference by node and either ordinal or interface name.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Port {
    Ordinal(u32),
    Name(String),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Endpoint {
    pub node: String,
    pub port: Port,
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.port {
            Port::Ordinal(o) => write!(f, "{}.{}", self.node, o),
            Port::Name(n) => write!(f, "{}.{}", self.node, n),
        }
    }
}

impl std::str::FromStr for Endpoint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (node, port) = s
            .split_once('.')
            .ok_or_else(|| format!("endpoint `{s}` must be <node>.<ordinal|ifname>"))?;
        if node.is_empty() || port.is_empty() {
            return Err(format!("endpoint `{s}` must be <node>.<ordinal|ifname>"));
        }
        let port = match port.parse::<u32>() {
            Ok(o) => Port::Ordinal(o),
            Err(_) => Port::Name(port.to_string()),
        };
        Ok(Endpoint {
            node: node.to_string(),
            port,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkDecl {
    pub a: Endpoint,
    pub b: Endpoint,
    pub metric_ab: u32,
    pub metric_ba: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PduDecl {
    pub ue: String,
    pub upf: String,
    pub ue_addr: IpAddress,
    pub ue_subnet: IpPrefix,
    /// UE to UPF cost.
    pub metric_up: u32,
    /// UPF to UE cost.
    pub metric_down: u32,
}

pub const DEFAULT_PDU_METRIC: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScriptedEvent {
    LinkDown(Endpoint),
    LinkUp(Endpoint),
    MetricChange {
        endpoint: Endpoint,
        metric_out: u32,
        metric_in: u32,
    },
    PduEstablish(PduDecl),
    PduRelease(SessionId),
}

impl ScriptedEvent {
    pub fn keyword(&self) -> &'static str {
        match self {
            ScriptedEvent::LinkDown(_) => "link-down",
            ScriptedEvent::LinkUp(_) => "link-up",
            ScriptedEvent::MetricChange { .. } => "metric-change",
            ScriptedEvent::PduEstablish(_) => "pdu-establish",
            ScriptedEvent::PduRelease(_) => "pdu-release",
        }
    }

    /// Parses the text after the time field of an `[event]` line.
    pub fn parse(words: &[&str]) -> Result<ScriptedEvent, String> {
        let (kind, args) = words.split_first().ok_or("missing event kind")?;
        let endpoint = |args: &[&str]| -> Result<Endpoint, String> {
            match args {
                [ep] => ep.parse(),
                _ => Err(format!("`{kind}` takes exactly one endpoint")),
            }
        };
        match *kind {
            "link-down" => Ok(ScriptedEvent::LinkDown(endpoint(args)?)),
            "link-up" => Ok(ScriptedEvent::LinkUp(endpoint(args)?)),
            "metric-change" => {
                if !(2..=3).contains(&args.len()) {
                    return Err("metric-change takes <endpoint> <metric_out> [<metric_in>]".into());
                }
                let metric_out = parse_metric(args[1])?;
                let metric_in = match args.get(2) {
                    Some(m) => parse_metric(m)?,
                    None => metric_out,
                };
                Ok(ScriptedEvent::MetricChange {
                    endpoint: args[0].parse()?,
                    metric_out,
                    metric_in,
                })
            }
            "pdu-establish" => Ok(ScriptedEvent::PduEstablish(parse_pdu(args)?)),
            "pdu-release" => match args {
                [id] => id
                    .parse::<u32>()
                    .map(|id| ScriptedEvent::PduRelease(SessionId(id)))
                    .map_err(|_| format!("bad session id `{id}`")),
                _ => Err("pdu-release takes exactly one session id".into()),
            },
            other => Err(format!("unknown event kind `{other}`")),
        }
    }
}

impl fmt::Display for ScriptedEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScriptedEvent::LinkDown(ep) | ScriptedEvent::LinkUp(ep) => {
                write!(f, "{} {}", self.keyword(), ep)
            }
            ScriptedEvent::MetricChange {
                endpoint,
                metric_out,
                metric_in,
            } => write!(f, "metric-change {endpoint} {metric_out} {metric_in}"),
            ScriptedEvent::PduEstablish(p) => write!(f, "pdu-establish {}", pdu_args(p)),
            ScriptedEvent::PduRelease(id) => write!(f, "pdu-release {}", id.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventDecl {
    pub time_ms: u64,
    pub event: ScriptedEvent,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    pub nodes: Vec<Spanned<NodeDecl>>,
    pub ifaces: Vec<Spanned<IfaceDecl>>,
    pub links: Vec<Spanned<LinkDecl>>,
    pub pdus: Vec<Spanned<PduDecl>>,
    pub events: Vec<Spanned<EventDecl>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiagnosticKind {
    SyntaxError,
    UnknownReference,
    InvariantViolation,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub line: usize,
    pub kind: DiagnosticKind,
    pub message: String,
}

impl Diagnostic {
    pub fn new(line: usize, kind: DiagnosticKind, message: impl Into<String>) -> Self {
        Diagnostic {
            line,
            kind,
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            DiagnosticKind::SyntaxError => "syntax error",
            DiagnosticKind::UnknownReference => "unknown reference",
            DiagnosticKind::InvariantViolation => "invariant violation",
        };
        write!(f, "line {}: {}: {}", self.line, kind, self.message)
    }
}

fn parse_metric(s: &str) -> Result<u32, String> {
    let m: u32 = s.parse().map_err(|_| format!("bad metric `{s}`"))?;
    check_metric(m).map_err(|e| e.to_string())
}

fn parse_pdu(args: &[&str]) -> Result<PduDecl, String> {
    if !(3..=5).contains(&args.len()) {
        return Err("expected <ue> <upf> <ue_addr>[/<len>] [<metric_up> [<metric_down>]]".into());
    }
    let (ue_addr, ue_subnet) = parse_cidr_address(args[2]).map_err(|e| e.to_string())?;
    let metric_up = match args.get(3) {
        Some(m) => parse_metric(m)?,
        None => DEFAULT_PDU_METRIC,
    };
    let metric_down = match args.get(4) {
        Some(m) => parse_metric(m)?,
        None => metric_up,
    };
    Ok(PduDecl {
        ue: args[0].to_string(),
        upf: args[1].to_string(),
        ue_addr,
        ue_subnet,
        metric_up,
        metric_down,
    })
}

fn pdu_args(p: &PduDecl) -> String {
    format!(
        "{} {} {}/{} {} {}",
        p.ue,
        p.upf,
        p.ue_addr,
        p.ue_subnet.len(),
        p.metric_up,
        p.metric_down
    )
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

/// Parses and validates a scenario. Never panics; every problem found is
/// reported with its line number.
pub fn parse_scenario(text: &str) -> Result<Scenario, Vec<Diagnostic>> {
    let mut scenario = Scenario::default();
    let mut diags = Vec::new();
    let mut seen_seed = false;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let words: Vec<&str> = content.split_whitespace().collect();
        let (section, args) = words.split_first().expect("non-empty");
        let syntax = |msg: String| Diagnostic::new(line, DiagnosticKind::SyntaxError, msg);
        let result: Result<(), Diagnostic> = match *section {
            "[seed]" => match args {
                [n] if !seen_seed => n
                    .parse()
                    .map(|n| {
                        scenario.seed = n;
                        seen_seed = true;
                    })
                    .map_err(|_| syntax(format!("bad seed `{n}`"))),
                [_] => Err(syntax("seed given twice".into())),
                _ => Err(syntax("expected [seed] <n>".into())),
            },
            "[node]" => match args {
                [name, kind] => {
                    if !valid_name(name) {
                        Err(syntax(format!("bad node name `{name}`")))
                    } else {
                        kind.parse::<NodeKind>().map_err(syntax).map(|kind| {
                            scenario.nodes.push(Spanned::new(
                                line,
                                NodeDecl {
                                    name: name.to_string(),
                                    kind,
                                },
                            ))
                        })
                    }
                }
                _ => Err(syntax("expected [node] <name> <kind>".into())),
            },
            "[iface]" => match args {
                [node, ordinal, addr] => ordinal
                    .parse::<u32>()
                    .map_err(|_| syntax(format!("bad ordinal `{ordinal}`")))
                    .and_then(|ordinal| {
                        let (address, subnet) =
                            parse_cidr_address(addr).map_err(|e| syntax(e.to_string()))?;
                        scenario.ifaces.push(Spanned::new(
                            line,
                            IfaceDecl {
                                node: node.to_string(),
                                ordinal,
                                address,
                                subnet,
                            },
                        ));
                        Ok(())
                    }),
                _ => Err(syntax("expected [iface] <node> <ordinal> <addr>[/<len>]".into())),
            },
            "[link]" => {
                if !(3..=4).contains(&args.len()) {
                    Err(syntax(
                        "expected [link] <nodeA>.<ord> <nodeB>.<ord> <metric_ab> [<metric_ba>]".into(),
                    ))
                } else {
                    (|| -> Result<(), String> {
                        let a: Endpoint = args[0].parse()?;
                        let b: Endpoint = args[1].parse()?;
                        for ep in [&a, &b] {
                            if !matches!(ep.port, Port::Ordinal(_)) {
                                return Err(format!("link endpoint `{ep}` must use an ordinal"));
                            }
                        }
                        let metric_ab = parse_metric(args[2])?;
                        let metric_ba = match args.get(3) {
                            Some(m) => parse_metric(m)?,
                            None => metric_ab,
                        };
                        scenario.links.push(Spanned::new(
                            line,
                            LinkDecl {
                                a,
                                b,
                                metric_ab,
                                metric_ba,
                            },
                        ));
                        Ok(())
                    })()
                    .map_err(syntax)
                }
            }
            "[pdu]" => parse_pdu(args)
                .map(|p| scenario.pdus.push(Spanned::new(line, p)))
                .map_err(syntax),
            "[event]" => match args.split_first() {
                Some((time, rest)) => time
                    .parse::<u64>()
                    .map_err(|_| syntax(format!("bad time `{time}`")))
                    .and_then(|time_ms| {
                        let event = ScriptedEvent::parse(rest).map_err(syntax)?;
                        scenario
                            .events
                            .push(Spanned::new(line, EventDecl { time_ms, event }));
                        Ok(())
                    }),
                None => Err(syntax("expected [event] <time_ms> <kind> <args>".into())),
            },
            other => Err(syntax(format!("unknown section `{other}`"))),
        };
        if let Err(d) = result {
            diags.push(d);
        }
    }

    if diags.is_empty() {
        diags = scenario.validate();
    }
    if diags.is_empty() {
        Ok(scenario)
    } else {
        diags.sort_by_key(|d| d.line);
        Err(diags)
    }
}

impl Scenario {
    /// Reference and invariant checks. The trial build of the world catches
    /// addressing and link violations.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut diags = Vec::new();
        let mut names = BTreeSet::new();
        for n in &self.nodes {
            if !names.insert(n.value.name.as_str()) {
                diags.push(Diagnostic::new(
                    n.line,
                    DiagnosticKind::InvariantViolation,
                    format!("duplicate node name `{}`", n.value.name),
                ));
            }
        }
        let kind_of = |name: &str| {
            self.nodes
                .iter()
                .find(|n| n.value.name == name)
                .map(|n| n.value.kind)
        };
        let check_node = |line: usize, name: &str, diags: &mut Vec<Diagnostic>| {
            if kind_of(name).is_none() {
                diags.push(Diagnostic::new(
                    line,
                    DiagnosticKind::UnknownReference,
                    format!("undeclared node `{name}`"),
                ));
                false
            } else {
                true
            }
        };
        for i in &self.ifaces {
            check_node(i.line, &i.value.node, &mut diags);
        }
        for l in &self.links {
            for ep in [&l.value.a, &l.value.b] {
                if check_node(l.line, &ep.node, &mut diags) {
                    if let Port::Ordinal(o) = ep.port {
                        if !self
                            .ifaces
                            .iter()
                            .any(|i| i.value.node == ep.node && i.value.ordinal == o)
                        {
                            diags.push(Diagnostic::new(
                                l.line,
                                DiagnosticKind::UnknownReference,
                                format!("undeclared interface `{ep}`"),
                            ));
                        }
                    }
                }
            }
        }
        let check_pdu = |line: usize, p: &PduDecl, diags: &mut Vec<Diagnostic>| {
            for (name, want) in [(&p.ue, "ue"), (&p.upf, "upf")] {
                match kind_of(name) {
                    None => diags.push(Diagnostic::new(
                        line,
                        DiagnosticKind::UnknownReference,
                        format!("undeclared node `{name}`"),
                    )),
                    Some(k) => {
                        let ok = if want == "upf" {
                            k == NodeKind::Upf
                        } else {
                            matches!(k, NodeKind::Ue | NodeKind::UeRouter)
                        };
                        if !ok {
                            diags.push(Diagnostic::new(
                                line,
                                DiagnosticKind::InvariantViolation,
                                format!("`{name}` is a {k}, expected {want}"),
                            ));
                        }
                    }
                }
            }
        };
        for p in &self.pdus {
            check_pdu(p.line, &p.value, &mut diags);
        }
        for e in &self.events {
            match &e.value.event {
                ScriptedEvent::LinkDown(ep)
                | ScriptedEvent::LinkUp(ep)
                | ScriptedEvent::MetricChange { endpoint: ep, .. } => {
                    check_node(e.line, &ep.node, &mut diags);
                }
                ScriptedEvent::PduEstablish(p) => check_pdu(e.line, p, &mut diags),
                ScriptedEvent::PduRelease(_) => {}
            }
        }
        let any_pdu = !self.pdus.is_empty()
            || self
                .events
                .iter()
                .any(|e| matches!(e.value.event, ScriptedEvent::PduEstablish(_)));
        if any_pdu {
            let count = |k| self.nodes.iter().filter(|n| n.value.kind == k).count();
            let line = self.pdus.first().map(|p| p.line).unwrap_or(0);
            if count(NodeKind::Upf) == 0 {
                diags.push(Diagnostic::new(
                    line,
                    DiagnosticKind::InvariantViolation,
                    "PDU sessions declared but no UPF",
                ));
            }
            if count(NodeKind::Smf) == 0 {
                diags.push(Diagnostic::new(
                    line,
                    DiagnosticKind::InvariantViolation,
                    "PDU sessions declared but no SMF",
                ));
            }
        }
        if self
            .nodes
            .iter()
            .filter(|n| n.value.kind == NodeKind::Smf)
            .count()
            > 1
        {
            diags.push(Diagnostic::new(
                0,
                DiagnosticKind::InvariantViolation,
                "at most one SMF is supported",
            ));
        }
        if diags.is_empty() {
            if let Err(d) = crate::sim::Simulator::new(self, crate::sim::SimConfig::default()) {
                diags.push(d);
            }
        }
        diags
    }

    /// Canonical text form; parses back to an equal scenario.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "[seed] {}", self.seed);
        for n in &self.nodes {
            let _ = writeln!(out, "[node] {} {}", n.value.name, n.value.kind);
        }
        for i in &self.ifaces {
            let v = &i.value;
            let _ = writeln!(
                out,
                "[iface] {} {} {}/{}",
                v.node,
                v.ordinal,
                v.address,
                v.subnet.len()
            );
        }
        for l in &self.links {
            let v = &l.value;
            let _ = writeln!(out, "[link] {} {} {} {}", v.a, v.b, v.metric_ab, v.metric_ba);
        }
        for p in &self.pdus {
            let _ = writeln!(out, "[pdu] {}", pdu_args(&p.value));
        }
        for e in &self.events {
            let _ = writeln!(out, "[event] {} {}", e.value.time_ms, e.value.event);
        }
        out
    }

    pub fn node_kind(&self, name: &str) -> Option<NodeKind> {
        self.nodes
            .iter()
            .find(|n| n.value.name == name)
            .map(|n| n.value.kind)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_is_empty_scenario() {
        let s = parse_scenario("").unwrap();
        assert_eq!(s, Scenario::default());
        assert!(s.events.is_empty());
        let s = parse_scenario("# only a comment\n\n   \n").unwrap();
        assert!(s.nodes.is_empty());
    }

    #[test]
    fn link_to_undeclared_node() {
        let text = "[node] r1 router\n[iface] r1 1 10.0.0.1/24\n[link] r1.1 r2.1 5\n";
        let diags = parse_scenario(text).unwrap_err();
        assert!(diags
            .iter()
            .any(|d| d.kind == DiagnosticKind::UnknownReference && d.line == 3));
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let text = "[node] r1 router\n[node] r2\n[bogus] x\n[link] r1.1 r2.1 0\n";
        let diags = parse_scenario(text).unwrap_err();
        let lines: Vec<_> = diags.iter().map(|d| d.line).collect();
        assert_eq!(lines, vec![2, 3, 4]);
        assert!(diags.iter().all(|d| d.kind == DiagnosticKind::SyntaxError));
    }

    #[test]
    fn subnet_mismatch_is_an_invariant_violation() {
        let text = "\
[node] r1 router
[node] r2 router
[iface] r1 1 172.16.2.1/24
[iface] r2 1 172.16.3.1/24
[link] r1.1 r2.1 10
";
        let diags = parse_scenario(text).unwrap_err();
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].kind, DiagnosticKind::InvariantViolation);
        assert_eq!(diags[0].line, 5);
    }

    #[test]
    fn pdu_requires_upf_and_smf() {
        let text = "\
[node] ue1 ue
[node] upf1 upf
[pdu] ue1 upf1 10.0.0.5/24
";
        let diags = parse_scenario(text).unwrap_err();
        assert!(diags.iter().any(|d| d.message.contains("no SMF")));
    }

    #[test]
    fn events_parse() {
        let words = ["metric-change", "r1.2", "40"];
        assert_eq!(
            ScriptedEvent::parse(&words).unwrap(),
            ScriptedEvent::MetricChange {
                endpoint: Endpoint {
                    node: "r1".into(),
                    port: Port::Ordinal(2)
                },
                metric_out: 40,
                metric_in: 40
            }
        );
        let ev = ScriptedEvent::parse(&["link-down", "upf1.pdu-1"]).unwrap();
        assert_eq!(ev.to_string(), "link-down upf1.pdu-1");
        assert!(ScriptedEvent::parse(&["pdu-release", "x"]).is_err());
        assert!(ScriptedEvent::parse(&["explode"]).is_err());
    }
}
