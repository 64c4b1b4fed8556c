//! Shortest-path-first route computation over the LSDB.
//!
//! Only adjacencies advertised by both endpoints are used. Equal-cost
//! paths are broken by the lowest next-hop address and then by the lowest
//! egress interface ordinal.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};

use super::lsdb::Lsdb;
use super::message::RouterId;
use crate::net::{InterfaceId, IpAddress, IpPrefix};

/// One routing-table row.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RoutingEntry {
    pub destination: IpPrefix,
    pub next_hop: IpAddress,
    pub destination_interface: InterfaceId,
    pub metric: u32,
}

/// A Full neighbor as seen locally: who, over which interface, at which
/// address, at what egress cost.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct LocalAdjacency {
    pub neighbor: RouterId,
    pub iface: InterfaceId,
    pub address: IpAddress,
    pub cost: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Label {
    cost: u64,
    next_hop: IpAddress,
    ordinal: u32,
    iface: InterfaceId,
}

/// Bidirectionally confirmed directed edges, `u -> [(v, cost)]`, with
/// parallel adjacencies collapsed to their cheapest cost.
fn graph(lsdb: &Lsdb) -> BTreeMap<RouterId, BTreeMap<RouterId, u32>> {
    let mut g: BTreeMap<RouterId, BTreeMap<RouterId, u32>> = BTreeMap::new();
    for lsa in lsdb.iter() {
        let out = g.entry(lsa.origin).or_default();
        for (v, cost) in lsa.adjacencies() {
            if v != lsa.origin && lsdb.get(v).is_some_and(|l| l.lists_neighbor(lsa.origin)) {
                out.entry(v).and_modify(|c| *c = (*c).min(cost)).or_insert(cost);
            }
        }
    }
    g
}

fn attached_to(lsdb: &Lsdb, me: RouterId) -> BTreeSet<IpPrefix> {
    lsdb.get(me)
        .map(|l| l.prefixes().map(|(p, _)| p).collect())
        .unwrap_or_default()
}

fn usable_first_hops<'a>(
    lsdb: &'a Lsdb,
    me: RouterId,
    local: &'a [LocalAdjacency],
) -> impl Iterator<Item = &'a LocalAdjacency> + 'a {
    local
        .iter()
        .filter(move |adj| lsdb.get(adj.neighbor).is_some_and(|l| l.lists_neighbor(me)))
}

/// Best route per reachable prefix not attached to `me`.
pub fn compute_spf(lsdb: &Lsdb, me: RouterId, local: &[LocalAdjacency]) -> Vec<RoutingEntry> {
    if lsdb.get(me).is_none() {
        return Vec::new();
    }
    let g = graph(lsdb);
    let mut best: BTreeMap<RouterId, Label> = BTreeMap::new();
    let mut heap = BinaryHeap::new();
    for adj in usable_first_hops(lsdb, me, local) {
        let label = Label {
            cost: u64::from(adj.cost),
            next_hop: adj.address,
            ordinal: adj.iface.ordinal,
            iface: adj.iface,
        };
        if best.get(&adj.neighbor).is_none_or(|b| label < *b) {
            best.insert(adj.neighbor, label);
            heap.push(Reverse((label, adj.neighbor)));
        }
    }
    let mut done = BTreeSet::new();
    done.insert(me);
    while let Some(Reverse((label, u))) = heap.pop() {
        if best.get(&u) != Some(&label) || !done.insert(u) {
            continue;
        }
        for (&v, &w) in g.get(&u).into_iter().flatten() {
            if done.contains(&v) {
                continue;
            }
            let cand = Label {
                cost: label.cost + u64::from(w),
                ..label
            };
            if best.get(&v).is_none_or(|b| cand < *b) {
                best.insert(v, cand);
                heap.push(Reverse((cand, v)));
            }
        }
    }

    let attached = attached_to(lsdb, me);
    let mut routes: BTreeMap<IpPrefix, Label> = BTreeMap::new();
    for (router, label) in &best {
        let Some(lsa) = lsdb.get(*router) else { continue };
        for (prefix, m) in lsa.prefixes() {
            if attached.contains(&prefix) {
                continue;
            }
            let cand = Label {
                cost: label.cost + u64::from(m),
                ..*label
            };
            if routes.get(&prefix).is_none_or(|b| cand < *b) {
                routes.insert(prefix, cand);
            }
        }
    }
    routes
        .into_iter()
        .map(|(destination, l)| RoutingEntry {
            destination,
            next_hop: l.next_hop,
            destination_interface: l.iface,
            metric: l.cost.min(u64::from(u32::MAX)) as u32,
        })
        .collect()
}

/// Plain Dijkstra distances from `src`, never entering `avoid`.
fn distances(
    g: &BTreeMap<RouterId, BTreeMap<RouterId, u32>>,
    src: RouterId,
    avoid: RouterId,
) -> BTreeMap<RouterId, u64> {
    let mut dist = BTreeMap::new();
    let mut heap = BinaryHeap::new();
    dist.insert(src, 0u64);
    heap.push(Reverse((0u64, src)));
    while let Some(Reverse((d, u))) = heap.pop() {
        if dist.get(&u).is_some_and(|&best| d > best) {
            continue;
        }
        for (&v, &w) in g.get(&u).into_iter().flatten() {
            if v == avoid {
                continue;
            }
            let nd = d + u64::from(w);
            if dist.get(&v).is_none_or(|&cur| nd < cur) {
                dist.insert(v, nd);
                heap.push(Reverse((nd, v)));
            }
        }
    }
    dist
}

/// Every candidate route: for each usable local adjacency and each prefix
/// reachable through it without passing back through `me`, the cheapest
/// cost via that interface. Sorted by destination, then metric.
pub fn compute_candidates(lsdb: &Lsdb, me: RouterId, local: &[LocalAdjacency]) -> Vec<RoutingEntry> {
    if lsdb.get(me).is_none() {
        return Vec::new();
    }
    let g = graph(lsdb);
    let attached = attached_to(lsdb, me);
    let mut rows: BTreeMap<(IpPrefix, InterfaceId), (u64, IpAddress)> = BTreeMap::new();
    for adj in usable_first_hops(lsdb, me, local) {
        for (router, d) in distances(&g, adj.neighbor, me) {
            let Some(lsa) = lsdb.get(router) else { continue };
            for (prefix, m) in lsa.prefixes() {
                if attached.contains(&prefix) {
                    continue;
                }
                let cost = u64::from(adj.cost) + d + u64::from(m);
                let key = (prefix, adj.iface);
                if rows
                    .get(&key)
                    .is_none_or(|&(c, nh)| (cost, adj.address) < (c, nh))
                {
                    rows.insert(key, (cost, adj.address));
                }
            }
        }
    }
    let mut out: Vec<RoutingEntry> = rows
        .into_iter()
        .map(|((destination, iface), (cost, next_hop))| RoutingEntry {
            destination,
            next_hop,
            destination_interface: iface,
            metric: cost.min(u64::from(u32::MAX)) as u32,
        })
        .collect();
    sort_table(&mut out);
    out
}

/// Canonical row order: destination, metric, next hop, interface.
pub fn sort_table(rows: &mut [RoutingEntry]) {
    rows.sort_by(|a, b| {
        (a.destination, a.metric, a.next_hop, a.destination_interface).cmp(&(
            b.destination,
            b.metric,
            b.next_hop,
            b.destination_interface,
        ))
    });
}
