//! The per-participant protocol state machine.
//!
//! All operations are synchronous functions of the current state, an input
//! and the caller-supplied time. The simulator owns the clock.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::lsdb::{InstallOutcome, Lsdb};
use super::message::{HelloMsg, Lsa, LsaEntry, ProtoMessage, RouterId, RoutingPacket};
use super::spf::{compute_candidates, compute_spf, LocalAdjacency, RoutingEntry};
use super::ProtoError;
use crate::net::{InterfaceId, IpAddress, IpPrefix};

pub const DEFAULT_HELLO_INTERVAL_MS: u64 = 1000;
pub const DEAD_INTERVAL_FACTOR: u64 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtoConfig {
    pub hello_interval_ms: u64,
}

impl Default for ProtoConfig {
    fn default() -> Self {
        ProtoConfig {
            hello_interval_ms: DEFAULT_HELLO_INTERVAL_MS,
        }
    }
}

impl ProtoConfig {
    pub fn dead_interval_ms(&self) -> u64 {
        self.hello_interval_ms * DEAD_INTERVAL_FACTOR
    }
}

/// What the protocol knows about one local interface.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtoInterface {
    pub id: InterfaceId,
    pub address: IpAddress,
    pub subnet: IpPrefix,
    /// Egress cost; `None` for a stub interface without a link.
    pub cost: Option<u32>,
    pub admin_up: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NeighborState {
    Init,
    Full,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborRecord {
    pub id: RouterId,
    pub via_interface: InterfaceId,
    pub address: IpAddress,
    pub state: NeighborState,
    pub last_heard_ms: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NeighborEvent {
    /// First hello from an unknown sender; record created in Init.
    Discovered(RouterId, InterfaceId),
    /// Two-way visibility reached; record is Full.
    NewAdjacency(RouterId, InterfaceId),
    Refreshed(RouterId, InterfaceId),
    /// Neighbor stopped listing us; back to Init.
    Downgraded(RouterId, InterfaceId),
    /// Dead interval elapsed or interface gone.
    Removed(RouterId, InterfaceId),
    NoChange,
}

impl NeighborEvent {
    /// True when the set of Full adjacencies changed.
    pub fn changes_adjacency(&self, was_full: bool) -> bool {
        match self {
            NeighborEvent::NewAdjacency(..) | NeighborEvent::Downgraded(..) => true,
            NeighborEvent::Removed(..) => was_full,
            _ => false,
        }
    }
}

/// Side effects requested by the state machine.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Output {
    Send {
        iface: InterfaceId,
        packet: RoutingPacket,
    },
    Neighbor(NeighborEvent),
    Originated {
        seq: u32,
    },
    TableChanged,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LsRouter {
    id: RouterId,
    config: ProtoConfig,
    interfaces: BTreeMap<InterfaceId, ProtoInterface>,
    neighbors: BTreeMap<(InterfaceId, RouterId), NeighborRecord>,
    lsdb: Lsdb,
    seq: u32,
    table: Vec<RoutingEntry>,
}

impl LsRouter {
    pub fn new(id: RouterId, config: ProtoConfig) -> Self {
        LsRouter {
            id,
            config,
            interfaces: BTreeMap::new(),
            neighbors: BTreeMap::new(),
            lsdb: Lsdb::new(),
            seq: 0,
            table: Vec::new(),
        }
    }

    pub fn id(&self) -> RouterId {
        self.id
    }

    pub fn config(&self) -> ProtoConfig {
        self.config
    }

    pub fn lsdb(&self) -> &Lsdb {
        &self.lsdb
    }

    pub fn table(&self) -> &[RoutingEntry] {
        &self.table
    }

    pub fn interfaces(&self) -> impl Iterator<Item = &ProtoInterface> {
        self.interfaces.values()
    }

    pub fn neighbors(&self) -> impl Iterator<Item = &NeighborRecord> {
        self.neighbors.values()
    }

    pub fn local_adjacencies(&self) -> Vec<LocalAdjacency> {
        self.neighbors
            .values()
            .filter(|n| n.state == NeighborState::Full)
            .filter_map(|n| {
                let iface = self.interfaces.get(&n.via_interface)?;
                Some(LocalAdjacency {
                    neighbor: n.id,
                    iface: n.via_interface,
                    address: n.address,
                    cost: iface.cost.unwrap_or(1),
                })
            })
            .collect()
    }

    /// All candidate routes, several per destination where alternatives
    /// exist.
    pub fn candidates(&self) -> Vec<RoutingEntry> {
        compute_candidates(&self.lsdb, self.id, &self.local_adjacencies())
    }

    pub fn make_hello(&self, iface: InterfaceId, now_ms: u64) -> Result<HelloMsg, ProtoError> {
        let pi = self
            .interfaces
            .get(&iface)
            .ok_or(ProtoError::UnknownInterface(iface))?;
        if !pi.admin_up {
            return Err(ProtoError::InterfaceDown(iface));
        }
        let dead = self.config.dead_interval_ms();
        let seen_neighbors = self
            .neighbors
            .values()
            .filter(|n| n.via_interface == iface && now_ms.saturating_sub(n.last_heard_ms) < dead)
            .map(|n| n.id)
            .collect();
        Ok(HelloMsg {
            sender: self.id,
            sender_addr: pi.address,
            seen_neighbors,
            hello_interval_ms: self.config.hello_interval_ms as u32,
            dead_interval_ms: dead as u32,
        })
    }

    pub fn process_hello(&mut self, iface: InterfaceId, msg: &HelloMsg, now_ms: u64) -> NeighborEvent {
        if msg.sender == self.id
            || u64::from(msg.hello_interval_ms) != self.config.hello_interval_ms
            || u64::from(msg.dead_interval_ms) != self.config.dead_interval_ms()
            || !self.interfaces.get(&iface).is_some_and(|i| i.admin_up)
        {
            return NeighborEvent::NoChange;
        }
        let sees_me = msg.seen_neighbors.contains(&self.id);
        let key = (iface, msg.sender);
        match self.neighbors.get_mut(&key) {
            None => {
                let state = if sees_me {
                    NeighborState::Full
                } else {
                    NeighborState::Init
                };
                self.neighbors.insert(
                    key,
                    NeighborRecord {
                        id: msg.sender,
                        via_interface: iface,
                        address: msg.sender_addr,
                        state,
                        last_heard_ms: now_ms,
                    },
                );
                if sees_me {
                    NeighborEvent::NewAdjacency(msg.sender, iface)
                } else {
                    NeighborEvent::Discovered(msg.sender, iface)
                }
            }
            Some(rec) => {
                rec.last_heard_ms = now_ms;
                rec.address = msg.sender_addr;
                match (rec.state, sees_me) {
                    (NeighborState::Init, true) => {
                        rec.state = NeighborState::Full;
                        NeighborEvent::NewAdjacency(msg.sender, iface)
                    }
                    (NeighborState::Full, false) => {
                        rec.state = NeighborState::Init;
                        NeighborEvent::Downgraded(msg.sender, iface)
                    }
                    _ => NeighborEvent::Refreshed(msg.sender, iface),
                }
            }
        }
    }

    /// Builds a fresh LSA from the current adjacencies and interfaces and
    /// installs it locally.
    pub fn originate_lsa(&mut self, now_ms: u64) -> Lsa {
        let mut entries: Vec<LsaEntry> = self
            .local_adjacencies()
            .into_iter()
            .map(|a| LsaEntry::Adjacency {
                neighbor: a.neighbor,
                metric: a.cost,
            })
            .collect();
        let mut prefixes: BTreeMap<IpPrefix, u32> = BTreeMap::new();
        for i in self.interfaces.values().filter(|i| i.admin_up) {
            let m = i.cost.unwrap_or(0);
            prefixes
                .entry(i.subnet)
                .and_modify(|cur| *cur = (*cur).min(m))
                .or_insert(m);
        }
        entries.extend(
            prefixes
                .into_iter()
                .map(|(prefix, metric)| LsaEntry::Prefix { prefix, metric }),
        );
        entries.sort();
        self.seq += 1;
        let lsa = Lsa {
            origin: self.id,
            seq: self.seq,
            entries,
            originated_at_ms: now_ms,
        };
        self.lsdb.install(lsa.clone());
        lsa
    }

    /// Interfaces to send an installed LSA on: every interface with a Full
    /// neighbor, except the one it arrived on.
    pub fn flood(&self, lsa: &Lsa, arrival: Option<InterfaceId>) -> Vec<(InterfaceId, Lsa)> {
        let mut out: Vec<InterfaceId> = self
            .neighbors
            .values()
            .filter(|n| n.state == NeighborState::Full && Some(n.via_interface) != arrival)
            .map(|n| n.via_interface)
            .collect();
        out.dedup();
        out.into_iter().map(|i| (i, lsa.clone())).collect()
    }

    /// Drops neighbors not heard for a dead interval, ordered by router id.
    pub fn expire(&mut self, now_ms: u64) -> Vec<NeighborEvent> {
        let dead = self.config.dead_interval_ms();
        let mut gone: Vec<(RouterId, InterfaceId)> = self
            .neighbors
            .values()
            .filter(|n| now_ms.saturating_sub(n.last_heard_ms) >= dead)
            .map(|n| (n.id, n.via_interface))
            .collect();
        gone.sort();
        for (id, iface) in &gone {
            self.neighbors.remove(&(*iface, *id));
        }
        gone.into_iter()
            .map(|(id, iface)| NeighborEvent::Removed(id, iface))
            .collect()
    }

    fn send(&self, iface: InterfaceId, msg: ProtoMessage) -> Option<Output> {
        let pi = self.interfaces.get(&iface)?;
        Some(Output::Send {
            iface,
            packet: RoutingPacket { src: pi.address, msg },
        })
    }

    fn reoriginate(&mut self, now_ms: u64, out: &mut Vec<Output>) {
        let lsa = self.originate_lsa(now_ms);
        out.push(Output::Originated { seq: lsa.seq });
        for (iface, lsa) in self.flood(&lsa, None) {
            out.extend(self.send(iface, ProtoMessage::LsUpdate(vec![lsa])));
        }
        self.recompute(out);
    }

    fn recompute(&mut self, out: &mut Vec<Output>) {
        let table = compute_spf(&self.lsdb, self.id, &self.local_adjacencies());
        if table != self.table {
            self.table = table;
            out.push(Output::TableChanged);
        }
    }

    /// Starts the instance: originates the first LSA.
    pub fn start(&mut self, now_ms: u64) -> Vec<Output> {
        let mut out = Vec::new();
        self.reoriginate(now_ms, &mut out);
        out
    }

    /// Hello timer: expire silent neighbors, then send hellos on every
    /// up interface.
    pub fn tick(&mut self, now_ms: u64) -> Vec<Output> {
        let mut out = Vec::new();
        let full_before: Vec<_> = self.full_keys();
        let expired = self.expire(now_ms);
        let lost_full = expired.iter().any(|e| match e {
            NeighborEvent::Removed(id, iface) => full_before.contains(&(*iface, *id)),
            _ => false,
        });
        out.extend(expired.into_iter().map(Output::Neighbor));
        if lost_full {
            self.reoriginate(now_ms, &mut out);
        }
        let ifaces: Vec<InterfaceId> = self
            .interfaces
            .values()
            .filter(|i| i.admin_up)
            .map(|i| i.id)
            .collect();
        for iface in ifaces {
            if let Ok(h) = self.make_hello(iface, now_ms) {
                out.extend(self.send(iface, ProtoMessage::Hello(h)));
            }
        }
        out
    }

    fn full_keys(&self) -> Vec<(InterfaceId, RouterId)> {
        self.neighbors
            .iter()
            .filter(|(_, n)| n.state == NeighborState::Full)
            .map(|(k, _)| *k)
            .collect()
    }

    /// Handles a routing packet received on `iface`.
    pub fn receive(&mut self, iface: InterfaceId, packet: &RoutingPacket, now_ms: u64) -> Vec<Output> {
        let mut out = Vec::new();
        match &packet.msg {
            ProtoMessage::Hello(h) => {
                let ev = self.process_hello(iface, h, now_ms);
                match ev {
                    NeighborEvent::NoChange | NeighborEvent::Refreshed(..) => {}
                    _ => out.push(Output::Neighbor(ev)),
                }
                match ev {
                    NeighborEvent::NewAdjacency(..) => {
                        self.reoriginate(now_ms, &mut out);
                        // database exchange with the new neighbor
                        let all: Vec<Lsa> = self.lsdb.iter().cloned().collect();
                        out.extend(self.send(iface, ProtoMessage::LsUpdate(all)));
                    }
                    NeighborEvent::Downgraded(..) => self.reoriginate(now_ms, &mut out),
                    _ => {}
                }
            }
            ProtoMessage::LsUpdate(lsas) => {
                let known = self.neighbors.keys().any(|(i, _)| *i == iface);
                if !known || !self.interfaces.get(&iface).is_some_and(|i| i.admin_up) {
                    return out;
                }
                let mut changed = false;
                for lsa in lsas {
                    if lsa.origin == self.id {
                        continue;
                    }
                    if self.lsdb.install(lsa.clone()) == InstallOutcome::Installed {
                        changed = true;
                        for (egress, lsa) in self.flood(lsa, Some(iface)) {
                            out.extend(self.send(egress, ProtoMessage::LsUpdate(vec![lsa])));
                        }
                    }
                }
                if changed {
                    self.recompute(&mut out);
                }
            }
        }
        out
    }

    /// Adds or replaces a local interface. Started instances re-originate.
    pub fn upsert_interface(&mut self, iface: ProtoInterface, now_ms: u64) -> Vec<Output> {
        let mut out = Vec::new();
        let changed = self.interfaces.get(&iface.id) != Some(&iface);
        let id = iface.id;
        let went_down = !iface.admin_up;
        self.interfaces.insert(id, iface);
        if went_down {
            self.drop_neighbors_on(id, &mut out);
        }
        if changed && self.seq > 0 {
            self.reoriginate(now_ms, &mut out);
        }
        out
    }

    pub fn remove_interface(&mut self, id: InterfaceId, now_ms: u64) -> Vec<Output> {
        let mut out = Vec::new();
        if self.interfaces.remove(&id).is_none() {
            return out;
        }
        self.drop_neighbors_on(id, &mut out);
        if self.seq > 0 {
            self.reoriginate(now_ms, &mut out);
        }
        out
    }

    fn drop_neighbors_on(&mut self, id: InterfaceId, out: &mut Vec<Output>) {
        let gone: Vec<_> = self.neighbors.keys().filter(|(i, _)| *i == id).copied().collect();
        for key in gone {
            self.neighbors.remove(&key);
            out.push(Output::Neighbor(NeighborEvent::Removed(key.1, key.0)));
        }
    }

    pub fn is_started(&self) -> bool {
        self.seq > 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::NodeId;

    fn iface(node: u32, ord: u32, addr: &str, net: &str, cost: Option<u32>) -> ProtoInterface {
        ProtoInterface {
            id: InterfaceId::new(NodeId(node), ord),
            address: addr.parse().unwrap(),
            subnet: net.parse().unwrap(),
            cost,
            admin_up: true,
        }
    }

    fn router(id: &str) -> LsRouter {
        LsRouter::new(
            RouterId::from(id.parse::<IpAddress>().unwrap()),
            ProtoConfig::default(),
        )
    }

    fn hello_from(r: &LsRouter, iface: InterfaceId, now: u64) -> HelloMsg {
        r.make_hello(iface, now).unwrap()
    }

    #[test]
    fn fresh_router_hello_is_empty() {
        let mut a = router("10.0.0.1");
        let i = iface(0, 1, "10.0.0.1", "10.0.0.0/24", Some(10));
        a.upsert_interface(i.clone(), 0);
        let h = hello_from(&a, i.id, 0);
        assert!(h.seen_neighbors.is_empty());
        assert_eq!(h.dead_interval_ms, 4 * h.hello_interval_ms);
        assert_eq!(h.hello_interval_ms, 1000);
    }

    #[test]
    fn hello_on_down_interface_fails() {
        let mut a = router("10.0.0.1");
        let mut i = iface(0, 1, "10.0.0.1", "10.0.0.0/24", Some(10));
        i.admin_up = false;
        a.upsert_interface(i.clone(), 0);
        assert_eq!(a.make_hello(i.id, 0), Err(ProtoError::InterfaceDown(i.id)));
    }

    #[test]
    fn adjacency_state_machine() {
        let mut a = router("10.0.0.1");
        let mut b = router("10.0.0.2");
        let ia = iface(0, 1, "10.0.0.1", "10.0.0.0/24", Some(10));
        let ib = iface(1, 1, "10.0.0.2", "10.0.0.0/24", Some(10));
        a.upsert_interface(ia.clone(), 0);
        b.upsert_interface(ib.clone(), 0);

        let hb = hello_from(&b, ib.id, 0);
        assert_eq!(
            a.process_hello(ia.id, &hb, 1),
            NeighborEvent::Discovered(b.id(), ia.id)
        );
        assert_eq!(a.neighbors().next().unwrap().state, NeighborState::Init);
        let ha = hello_from(&a, ia.id, 1);
        assert_eq!(ha.seen_neighbors, vec![b.id()]);
        assert_eq!(
            b.process_hello(ib.id, &ha, 2),
            NeighborEvent::NewAdjacency(a.id(), ib.id)
        );
        let hb = hello_from(&b, ib.id, 3);
        assert_eq!(
            a.process_hello(ia.id, &hb, 4),
            NeighborEvent::NewAdjacency(b.id(), ia.id)
        );
        assert_eq!(
            a.process_hello(ia.id, &hb, 1004),
            NeighborEvent::Refreshed(b.id(), ia.id)
        );
        assert_eq!(a.neighbors().next().unwrap().last_heard_ms, 1004);
        // b forgets a: its hello no longer lists a
        let mut lonely = hb.clone();
        lonely.seen_neighbors.clear();
        assert_eq!(
            a.process_hello(ia.id, &lonely, 1005),
            NeighborEvent::Downgraded(b.id(), ia.id)
        );
    }

    #[test]
    fn expiry_timing() {
        let mut a = router("10.0.0.1");
        let ia = iface(0, 1, "10.0.0.1", "10.0.0.0/24", Some(10));
        a.upsert_interface(ia.clone(), 0);
        let mut hb = HelloMsg {
            sender: RouterId(9),
            sender_addr: "10.0.0.9".parse().unwrap(),
            seen_neighbors: vec![],
            hello_interval_ms: 1000,
            dead_interval_ms: 4000,
        };
        a.process_hello(ia.id, &hb, 0);
        hb.sender = RouterId(5);
        hb.sender_addr = "10.0.0.5".parse().unwrap();
        a.process_hello(ia.id, &hb, 0);
        assert!(a.expire(3000).is_empty());
        assert_eq!(
            a.expire(4000),
            vec![
                NeighborEvent::Removed(RouterId(5), ia.id),
                NeighborEvent::Removed(RouterId(9), ia.id)
            ]
        );
    }

    #[test]
    fn refreshed_neighbor_survives() {
        let mut a = router("10.0.0.1");
        let ia = iface(0, 1, "10.0.0.1", "10.0.0.0/24", Some(10));
        a.upsert_interface(ia.clone(), 0);
        let hb = HelloMsg {
            sender: RouterId(9),
            sender_addr: "10.0.0.9".parse().unwrap(),
            seen_neighbors: vec![],
            hello_interval_ms: 1000,
            dead_interval_ms: 4000,
        };
        a.process_hello(ia.id, &hb, 0);
        a.process_hello(ia.id, &hb, 3000);
        assert!(a.expire(4000).is_empty());
        assert!(a.expire(6999).is_empty());
        assert_eq!(a.expire(7000).len(), 1);
    }

    #[test]
    fn origination() {
        let mut a = router("172.16.9.254");
        a.upsert_interface(iface(0, 1, "172.16.9.254", "172.16.9.0/24", None), 0);
        let l1 = a.originate_lsa(0);
        assert_eq!(
            l1.entries,
            vec![LsaEntry::Prefix {
                prefix: "172.16.9.0/24".parse().unwrap(),
                metric: 0
            }]
        );
        let l2 = a.originate_lsa(5);
        assert_eq!(l2.seq, l1.seq + 1);
    }

    #[test]
    fn origination_lists_full_neighbor_with_link_cost() {
        let mut a = router("10.0.0.1");
        let ia = iface(0, 1, "10.0.0.1", "10.0.0.0/24", Some(10));
        a.upsert_interface(ia.clone(), 0);
        let hb = HelloMsg {
            sender: RouterId(9),
            sender_addr: "10.0.0.9".parse().unwrap(),
            seen_neighbors: vec![a.id()],
            hello_interval_ms: 1000,
            dead_interval_ms: 4000,
        };
        a.process_hello(ia.id, &hb, 0);
        let lsa = a.originate_lsa(0);
        assert!(lsa.entries.contains(&LsaEntry::Adjacency {
            neighbor: RouterId(9),
            metric: 10
        }));
    }

    #[test]
    fn flood_targets() {
        let mut a = router("10.0.0.1");
        let mut ids = vec![];
        for k in 1..=3u32 {
            let i = iface(0, k, &format!("10.0.{k}.1"), &format!("10.0.{k}.0/24"), Some(1));
            ids.push(i.id);
            a.upsert_interface(i, 0);
            let h = HelloMsg {
                sender: RouterId(100 + k),
                sender_addr: format!("10.0.{k}.2").parse().unwrap(),
                seen_neighbors: vec![a.id()],
                hello_interval_ms: 1000,
                dead_interval_ms: 4000,
            };
            a.process_hello(ids[k as usize - 1], &h, 0);
        }
        let lsa = a.originate_lsa(0);
        assert_eq!(a.flood(&lsa, Some(ids[0])).len(), 2);
        assert_eq!(a.flood(&lsa, None).len(), 3);

        // a duplicate update produces no emissions
        let update = RoutingPacket {
            src: "10.0.1.2".parse().unwrap(),
            msg: ProtoMessage::LsUpdate(vec![Lsa {
                origin: RouterId(101),
                seq: 1,
                entries: vec![],
                originated_at_ms: 0,
            }]),
        };
        let first = a.receive(ids[0], &update, 1);
        assert_eq!(
            first.iter().filter(|o| matches!(o, Output::Send { .. })).count(),
            2
        );
        let again = a.receive(ids[0], &update, 2);
        assert!(again.is_empty());
    }
}
