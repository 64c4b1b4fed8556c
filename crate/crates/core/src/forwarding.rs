//! Data-plane forwarding over a frozen snapshot of the network.
//!
//! Every node does a longest-prefix match over its connected subnets and
//! its forwarding state: routing-table rows for protocol routers, installed
//! rules for UPFs, the link peer for hosts.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::msr::ForwardingRule;
use crate::net::{InterfaceId, IpAddress, LinkId, Network, NodeId, NodeKind};
use crate::proto::RoutingEntry;

pub const DEFAULT_TTL: u8 = 64;

/// Forwarding state of one node.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Fib {
    Host,
    Router(Vec<RoutingEntry>),
    Upf(Vec<ForwardingRule>),
    /// Does not forward (the SMF).
    Inert,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataPlane {
    pub network: Network,
    pub fibs: BTreeMap<NodeId, Fib>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Lookup {
    Deliver,
    Forward {
        next_hop: IpAddress,
        egress: InterfaceId,
    },
    NoRoute,
}

/// Forwarding decision at `node` for `dst`.
pub fn lookup(dp: &DataPlane, node: NodeId, dst: IpAddress) -> Lookup {
    let net = &dp.network;
    let Some(n) = net.node(node) else {
        return Lookup::NoRoute;
    };
    if n.owns_address(dst) {
        return Lookup::Deliver;
    }
    // (prefix length, connected first) picks the winner
    let mut best: Option<((u8, bool), Lookup)> = None;
    let mut offer = |key: (u8, bool), l: Lookup| {
        if best.as_ref().is_none_or(|(k, _)| key > *k) {
            best = Some((key, l));
        }
    };
    for i in n.interfaces.iter().filter(|i| i.admin_up) {
        if !i.subnet.contains(dst) {
            continue;
        }
        let on_link = net
            .peer(i.id)
            .and_then(|p| net.interface(p))
            .is_some_and(|p| p.address == dst);
        let l = if on_link {
            Lookup::Forward {
                next_hop: dst,
                egress: i.id,
            }
        } else {
            Lookup::NoRoute
        };
        offer((i.subnet.len(), true), l);
    }
    match dp.fibs.get(&node) {
        Some(Fib::Router(rows)) => {
            for r in rows.iter().filter(|r| r.destination.contains(dst)) {
                offer(
                    (r.destination.len(), false),
                    Lookup::Forward {
                        next_hop: r.next_hop,
                        egress: r.destination_interface,
                    },
                );
            }
        }
        Some(Fib::Upf(rules)) => {
            for r in rules.iter().filter(|r| r.match_prefix.contains(dst)) {
                offer(
                    (r.priority, false),
                    Lookup::Forward {
                        next_hop: r.next_hop,
                        egress: r.egress,
                    },
                );
            }
        }
        Some(Fib::Host) if best.is_none() => {
            if let Some(i) = n.interfaces.first() {
                if let Some(p) = net.peer(i.id).and_then(|p| net.interface(p)) {
                    return Lookup::Forward {
                        next_hop: p.address,
                        egress: i.id,
                    };
                }
            }
        }
        _ => {}
    }
    best.map(|(_, l)| l).unwrap_or(Lookup::NoRoute)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Packet {
    pub src: IpAddress,
    pub dst: IpAddress,
    pub ttl: u8,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hop {
    pub node: NodeId,
    pub ingress: Option<InterfaceId>,
    pub egress: Option<InterfaceId>,
    /// Cost of the link left through `egress`.
    pub link_metric: Option<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceOutcome {
    Delivered,
    NoRoute(NodeId),
    TtlExceeded(NodeId),
    LinkDown(LinkId),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub packet: Packet,
    pub hops: Vec<Hop>,
    pub outcome: TraceOutcome,
    /// Sum of egress link metrics along the traversed path.
    pub total_metric: u64,
}

impl TraceRecord {
    pub fn nodes(&self) -> Vec<NodeId> {
        self.hops.iter().map(|h| h.node).collect()
    }
}

/// Walks `packet` hop by hop from `src_node`. The TTL drops by one at every
/// node that forwards the packet on, the source excepted.
pub fn forward_packet(dp: &DataPlane, src_node: NodeId, packet: Packet) -> TraceRecord {
    let net = &dp.network;
    let mut hops = Vec::new();
    let mut node = src_node;
    let mut ingress = None;
    let mut ttl = packet.ttl;
    let mut total = 0u64;
    let outcome = loop {
        let mut hop = Hop {
            node,
            ingress,
            egress: None,
            link_metric: None,
        };
        match lookup(dp, node, packet.dst) {
            Lookup::Deliver => {
                hops.push(hop);
                break TraceOutcome::Delivered;
            }
            Lookup::NoRoute => {
                hops.push(hop);
                break TraceOutcome::NoRoute(node);
            }
            Lookup::Forward { next_hop, egress } => {
                if node != src_node {
                    ttl = ttl.saturating_sub(1);
                    if ttl == 0 {
                        hops.push(hop);
                        break TraceOutcome::TtlExceeded(node);
                    }
                }
                hop.egress = Some(egress);
                let Some(link) = net.link_of(egress) else {
                    hops.push(hop);
                    break TraceOutcome::NoRoute(node);
                };
                if !link.up {
                    hops.push(hop);
                    break TraceOutcome::LinkDown(link.id);
                }
                let peer = link.peer(egress).expect("link joins egress");
                if net.interface(peer).map(|p| p.address) != Some(next_hop) {
                    hops.push(hop);
                    break TraceOutcome::NoRoute(node);
                }
                let m = link.egress_metric(egress).unwrap_or(0);
                hop.link_metric = Some(m);
                total += u64::from(m);
                hops.push(hop);
                node = peer.node;
                ingress = Some(peer);
            }
        }
    };
    TraceRecord {
        packet,
        hops,
        outcome,
        total_metric: total,
    }
}

impl fmt::Display for TraceOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceOutcome::Delivered => f.write_str("delivered"),
            TraceOutcome::NoRoute(_) => f.write_str("no-route"),
            TraceOutcome::TtlExceeded(_) => f.write_str("ttl-exceeded"),
            TraceOutcome::LinkDown(_) => f.write_str("link-down"),
        }
    }
}

/// One line per hop, then the outcome and the path cost.
pub fn trace_report(dp: &DataPlane, trace: &TraceRecord, machine: bool) -> String {
    let net = &dp.network;
    let iface_name = |i: Option<InterfaceId>| {
        i.and_then(|i| net.interface(i))
            .map(|i| i.name.clone())
            .unwrap_or_else(|| "-".into())
    };
    let mut out = String::new();
    for (k, h) in trace.hops.iter().enumerate() {
        let name = net.name(h.node);
        let metric = h.link_metric.map(|m| m.to_string()).unwrap_or_else(|| "-".into());
        if machine {
            let _ = writeln!(
                out,
                "hop n={} node={} in={} out={} metric={}",
                k,
                name,
                iface_name(h.ingress),
                iface_name(h.egress),
                metric
            );
        } else {
            let _ = writeln!(
                out,
                "{:>2}  {:<12} in {:<8} out {:<8} cost {}",
                k,
                name,
                iface_name(h.ingress),
                iface_name(h.egress),
                metric
            );
        }
    }
    let at = match trace.outcome {
        TraceOutcome::NoRoute(n) | TraceOutcome::TtlExceeded(n) => format!(" at={}", net.name(n)),
        TraceOutcome::LinkDown(l) => format!(" link={}", l.0),
        TraceOutcome::Delivered => String::new(),
    };
    let _ = writeln!(
        out,
        "outcome={}{} total-metric={} hops={}",
        trace.outcome,
        at,
        trace.total_metric,
        trace.hops.len().saturating_sub(1)
    );
    out
}

/// Forwarding role of a node kind.
pub fn default_fib(kind: NodeKind) -> Fib {
    match kind {
        NodeKind::Host => Fib::Host,
        NodeKind::Upf => Fib::Upf(Vec::new()),
        NodeKind::Smf => Fib::Inert,
        _ => Fib::Router(Vec::new()),
    }
}
