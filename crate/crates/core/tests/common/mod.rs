//! Shared test support: a seeded scenario generator and brute-force oracles
//! that enumerate simple paths over the ground-truth topology.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use msrsim::forwarding::{forward_packet, Packet, TraceRecord, DEFAULT_TTL};
use msrsim::net::{IpAddress, IpPrefix, Network, NodeId, NodeKind};
use msrsim::{parse_scenario, Approach, SimConfig, Simulator};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FIG2: &str = include_str!("../../scenarios/fig2.scn");
pub const FIG2_FAILOVER: &str = include_str!("../../scenarios/fig2-failover.scn");

pub fn build(text: &str, approach: Approach) -> Simulator {
    let sc = parse_scenario(text).unwrap_or_else(|d| panic!("{d:?}\n{text}"));
    Simulator::new(
        &sc,
        SimConfig {
            approach,
            ..SimConfig::default()
        },
    )
    .unwrap_or_else(|d| panic!("{d}\n{text}"))
}

pub fn run(text: &str, approach: Approach, until: u64) -> Simulator {
    let mut sim = build(text, approach);
    sim.run_until(until);
    sim
}

/// Graph shape for a generated scenario.
#[derive(Clone, Debug)]
pub struct Shape {
    pub routers: usize,
    pub upfs: usize,
    pub sessions: usize,
    pub hosts: usize,
    pub asymmetric: bool,
}

struct Builder {
    text: String,
    next_subnet: u32,
    ordinals: BTreeMap<String, u32>,
    links: BTreeSet<(String, String)>,
}

impl Builder {
    fn new(seed: u64) -> Self {
        Builder {
            text: format!("[seed] {seed}\n"),
            next_subnet: 0,
            ordinals: BTreeMap::new(),
            links: BTreeSet::new(),
        }
    }

    fn node(&mut self, name: &str, kind: &str) {
        let _ = writeln!(self.text, "[node] {name} {kind}");
    }

    fn subnet(&mut self) -> (u32, u32) {
        let k = self.next_subnet;
        self.next_subnet += 1;
        (k / 250, k % 250)
    }

    fn port(&mut self, node: &str) -> u32 {
        let o = self.ordinals.entry(node.to_string()).or_insert(0);
        *o += 1;
        *o
    }

    fn link(&mut self, a: &str, b: &str, m_ab: u32, m_ba: u32, host_b: bool) -> bool {
        let key = if a < b {
            (a.to_string(), b.to_string())
        } else {
            (b.to_string(), a.to_string())
        };
        if a == b || !self.links.insert(key) {
            return false;
        }
        let (x, y) = self.subnet();
        let (pa, pb) = (self.port(a), self.port(b));
        let host_octet = if host_b { 10 } else { 2 };
        let _ = writeln!(self.text, "[iface] {a} {pa} 10.{x}.{y}.1/24");
        let _ = writeln!(self.text, "[iface] {b} {pb} 10.{x}.{y}.{host_octet}/24");
        let _ = writeln!(self.text, "[link] {a}.{pa} {b}.{pb} {m_ab} {m_ba}");
        true
    }
}

fn metric_pair(rng: &mut ChaCha8Rng, asymmetric: bool) -> (u32, u32) {
    let m = rng.gen_range(1..=50);
    if asymmetric && rng.gen_bool(0.3) {
        (m, rng.gen_range(1..=50))
    } else {
        (m, m)
    }
}

/// Connected scenario text: a random spanning tree of routers plus a few
/// chords, UPFs on one or two routers each, sessions from UE-routers, and
/// stub hosts.
pub fn generate_with(seed: u64, shape: &Shape) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = Builder::new(seed);
    let kinds = ["router", "n6-router", "ue-router"];
    let mut names = Vec::new();
    for i in 0..shape.routers {
        let kind = kinds[rng.gen_range(0..kinds.len())];
        let name = format!("r{i}");
        b.node(&name, kind);
        names.push((name, kind));
    }
    let mut ues: Vec<String> = names
        .iter()
        .filter(|(_, k)| *k == "ue-router")
        .map(|(n, _)| n.clone())
        .collect();
    if shape.sessions > 0 && ues.is_empty() {
        b.node("ue0", "ue");
        ues.push("ue0".into());
    }
    for u in 0..shape.upfs {
        b.node(&format!("upf{u}"), "upf");
    }
    if shape.upfs > 0 {
        b.node("smf", "smf");
    }
    for h in 0..shape.hosts {
        b.node(&format!("h{h}"), "host");
    }
    for i in 1..shape.routers {
        let p = rng.gen_range(0..i);
        let (m1, m2) = metric_pair(&mut rng, shape.asymmetric);
        b.link(&names[p].0, &names[i].0, m1, m2, false);
    }
    let chords = rng.gen_range(0..=shape.routers / 2);
    for _ in 0..chords {
        let x = rng.gen_range(0..shape.routers);
        let y = rng.gen_range(0..shape.routers);
        let (m1, m2) = metric_pair(&mut rng, shape.asymmetric);
        b.link(&names[x].0.clone(), &names[y].0.clone(), m1, m2, false);
    }
    for u in 0..shape.upfs {
        let upf = format!("upf{u}");
        let n6 = rng.gen_range(1..=2.min(shape.routers));
        let mut targets: Vec<usize> = (0..shape.routers).collect();
        targets.shuffle(&mut rng);
        for t in targets.into_iter().take(n6) {
            let (m1, m2) = metric_pair(&mut rng, shape.asymmetric);
            // N6 side: the router end takes .1, the UPF .2
            b.link(&names[t].0.clone(), &upf, m1, m2, false);
        }
    }
    for _ in 0..shape.sessions {
        let ue = ues[rng.gen_range(0..ues.len())].clone();
        let upf = format!("upf{}", rng.gen_range(0..shape.upfs));
        let (x, y) = b.subnet();
        let (m1, m2) = metric_pair(&mut rng, shape.asymmetric);
        let _ = writeln!(b.text, "[pdu] {ue} {upf} 10.{x}.{y}.1/24 {m1} {m2}");
    }
    for h in 0..shape.hosts {
        let r = names[rng.gen_range(0..shape.routers)].0.clone();
        let m = rng.gen_range(1..=20);
        b.link(&r, &format!("h{h}"), m, m, true);
    }
    b.text
}

/// Shape drawn from the seed: 3–10 routers, 1–2 UPFs, 1–4 sessions.
pub fn generate(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let shape = Shape {
        routers: rng.gen_range(3..=10),
        upfs: rng.gen_range(1..=2),
        sessions: rng.gen_range(1..=4),
        hosts: rng.gen_range(2..=4),
        asymmetric: rng.gen_bool(0.5),
    };
    generate_with(seed, &shape)
}

/// Directed weighted adjacency over the live links of the model.
pub struct Graph {
    pub edges: BTreeMap<NodeId, Vec<(NodeId, u64)>>,
    pub forwarders: BTreeSet<NodeId>,
}

impl Graph {
    /// `participants_only` drops every node that does not run the protocol
    /// (hosts and the SMF), which is what the link-state view sees.
    pub fn from_network(net: &Network, participants_only: bool) -> Graph {
        let forwarders: BTreeSet<NodeId> = net
            .nodes()
            .filter(|n| !matches!(n.kind(), NodeKind::Host | NodeKind::Smf))
            .map(|n| n.id)
            .collect();
        let mut edges: BTreeMap<NodeId, Vec<(NodeId, u64)>> = BTreeMap::new();
        for l in net.links().filter(|l| l.up) {
            let (a, b) = (l.a.node, l.b.node);
            if participants_only && !(forwarders.contains(&a) && forwarders.contains(&b)) {
                continue;
            }
            edges.entry(a).or_default().push((b, u64::from(l.metric_ab)));
            edges.entry(b).or_default().push((a, u64::from(l.metric_ba)));
        }
        Graph { edges, forwarders }
    }

    /// Minimum cost of every simple path from `src`, by exhaustive DFS.
    /// Only forwarders may appear in the middle of a path.
    pub fn all_simple_path_minimum(&self, src: NodeId) -> BTreeMap<NodeId, u64> {
        let mut best = BTreeMap::new();
        best.insert(src, 0);
        let mut on_path = BTreeSet::from([src]);
        self.dfs(src, src, 0, &mut on_path, &mut best);
        best
    }

    fn dfs(
        &self,
        src: NodeId,
        at: NodeId,
        cost: u64,
        on_path: &mut BTreeSet<NodeId>,
        best: &mut BTreeMap<NodeId, u64>,
    ) {
        if at != src && !self.forwarders.contains(&at) {
            return;
        }
        for &(next, w) in self.edges.get(&at).into_iter().flatten() {
            if on_path.contains(&next) {
                continue;
            }
            let c = cost + w;
            let e = best.entry(next).or_insert(u64::MAX);
            *e = (*e).min(c);
            on_path.insert(next);
            self.dfs(src, next, c, on_path, best);
            on_path.remove(&next);
        }
    }
}

/// Oracle for a router's best metric per destination prefix: minimum over
/// every node attached to the prefix of path cost plus that node's egress
/// cost onto the prefix. Prefixes attached to the router itself are absent.
pub fn spf_oracle(net: &Network, me: NodeId) -> BTreeMap<IpPrefix, u64> {
    let g = Graph::from_network(net, true);
    let dist = g.all_simple_path_minimum(me);
    let mine: BTreeSet<IpPrefix> = net
        .node(me)
        .map(|n| n.interfaces.iter().map(|i| i.subnet).collect())
        .unwrap_or_default();
    let mut out: BTreeMap<IpPrefix, u64> = BTreeMap::new();
    for n in net.nodes().filter(|n| g.forwarders.contains(&n.id)) {
        let Some(d) = dist.get(&n.id) else {
            continue;
        };
        for i in n.interfaces.iter().filter(|i| i.admin_up) {
            if mine.contains(&i.subnet) {
                continue;
            }
            let egress = net
                .link_of(i.id)
                .and_then(|l| l.egress_metric(i.id))
                .map_or(0, u64::from);
            let c = d + egress;
            let e = out.entry(i.subnet).or_insert(u64::MAX);
            *e = (*e).min(c);
        }
    }
    out
}

pub fn hosts(net: &Network) -> Vec<(NodeId, IpAddress)> {
    net.nodes()
        .filter(|n| n.kind() == NodeKind::Host)
        .filter_map(|n| n.interfaces.first().map(|i| (n.id, i.address)))
        .collect()
}

pub fn trace(sim: &Simulator, src: NodeId, src_addr: IpAddress, dst: IpAddress) -> TraceRecord {
    forward_packet(
        &sim.data_plane(),
        src,
        Packet {
            src: src_addr,
            dst,
            ttl: DEFAULT_TTL,
        },
    )
}

/// Every host-to-host trace.
pub fn all_pairs(sim: &Simulator) -> Vec<TraceRecord> {
    let hs = hosts(sim.network());
    let dp = sim.data_plane();
    let mut out = Vec::new();
    for &(s, sa) in &hs {
        for &(_, da) in &hs {
            out.push(forward_packet(
                &dp,
                s,
                Packet {
                    src: sa,
                    dst: da,
                    ttl: DEFAULT_TTL,
                },
            ));
        }
    }
    out
}

/// Machine-mode dump of every routing table, best and all candidates.
pub fn route_dump(sim: &Simulator) -> String {
    let mut out = String::new();
    for (name, _) in sim.participants() {
        for all in [false, true] {
            let rows = sim.route_rows(&name, all).unwrap();
            let _ = writeln!(out, "# {name} all={all}");
            out.push_str(&msrsim::msr::render_routes(&rows, true));
        }
    }
    out
}
