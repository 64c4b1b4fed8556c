//! 5GS entities around the MS-Routers: UPFs, the SMF, PDU sessions, GTP
//! tunnels and the CP/UP configuration channel.
//!
//! Two placements of the routing protocol are supported. With
//! [`Approach::CpBased`] the SMF runs one protocol instance per UPF and the
//! UPF relays routing messages between each interface and a GTP tunnel whose
//! TEID identifies that interface. With [`Approach::UpBased`] the UPF runs
//! the protocol itself once the SMF triggers it, terminates routing messages
//! locally and reports its table to the SMF for translation.

mod gtp;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::msr::{
    enumerate_interfaces, reserve_pdu_iface_address, session_iface_name, translate_routes, ForwardingRule,
    MsRouter, MsrError, MsrInterface, Translation,
};
use crate::net::{InterfaceId, IpAddress, IpPrefix, LinkId, ModelError, Network, NodeId, NodeKind};
use crate::proto::{LsRouter, ProtoConfig, ProtoError, RouterId, RoutingEntry, RoutingPacket};

pub use gtp::{GtpFrame, GtpTunnel, Teid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SessionId(pub u32);

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Where the MS-Router's routing protocol runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Approach {
    /// Protocol in the SMF, messages relayed through the UPF over GTP.
    CpBased,
    /// Protocol in the UPF, table reported to the SMF for translation.
    UpBased,
}

impl Approach {
    /// Step-label prefix used in the event log.
    pub fn step_prefix(self) -> &'static str {
        match self {
            Approach::CpBased => "A1",
            Approach::UpBased => "A2",
        }
    }
}

impl FromStr for Approach {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cp" => Ok(Approach::CpBased),
            "up" => Ok(Approach::UpBased),
            other => Err(format!("unknown approach `{other}` (expected cp or up)")),
        }
    }
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Approach::CpBased => "cp",
            Approach::UpBased => "up",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SessionState {
    Active,
    Released,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PduSession {
    pub id: SessionId,
    pub ue: NodeId,
    pub upf: NodeId,
    pub ue_addr: IpAddress,
    pub ue_subnet: IpPrefix,
    pub reserved_addr: IpAddress,
    pub state: SessionState,
    pub upf_iface: InterfaceId,
    pub ue_iface: InterfaceId,
    pub link: Option<LinkId>,
}

impl PduSession {
    pub fn is_active(&self) -> bool {
        self.state == SessionState::Active
    }
}

/// Control messages on the CP/UP channel.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CpUpMessage {
    /// SMF to UPF: the complete relay table (TEID to interface).
    ConfigureRelay { tunnels: Vec<(Teid, InterfaceId)> },
    /// SMF to UPF: replace the forwarding rules.
    InstallRules { rules: Vec<ForwardingRule> },
    /// SMF to UPF: start the UPF-hosted routing protocol.
    TriggerRouting,
    /// UPF to SMF: the current routing table.
    ReportTable { table: Vec<RoutingEntry> },
}

impl CpUpMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            CpUpMessage::ConfigureRelay { .. } => "configure-relay",
            CpUpMessage::InstallRules { .. } => "install-rules",
            CpUpMessage::TriggerRouting => "trigger-routing",
            CpUpMessage::ReportTable { .. } => "report-table",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MobileError {
    #[error("address {0} already in use")]
    AddressInUse(IpAddress),
    #[error("unknown or inactive session {0}")]
    UnknownSession(SessionId),
    #[error("operation requires {expected:?} mode")]
    ModeMismatch { expected: Approach },
    #[error("unknown interface {0:?}")]
    UnknownInterface(InterfaceId),
    #[error("unknown TEID {0}")]
    UnknownTeid(Teid),
    #[error("invalid rule: {0}")]
    InvalidRule(String),
    #[error("node {0:?} is not a UPF")]
    UnknownUpf(NodeId),
    #[error("node `{0}` cannot anchor a PDU session")]
    NotAUe(String),
    #[error("no SMF in the scenario")]
    NoSmf,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Msr(#[from] MsrError),
    #[error(transparent)]
    Proto(#[from] ProtoError),
}

/// UPF user-plane state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpfState {
    pub node: NodeId,
    pub msr: MsRouter,
    /// Relay table as installed at the UPF.
    pub relay: BTreeMap<Teid, InterfaceId>,
    /// Installed forwarding rules.
    pub rules: Vec<ForwardingRule>,
    /// UPF-hosted protocol running (UP-based only).
    pub routing_active: bool,
}

/// SMF state: tunnel endpoints per UPF.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmfState {
    pub node: NodeId,
    pub tunnels: BTreeMap<NodeId, BTreeMap<Teid, GtpTunnel>>,
    next_teid: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MobileSystem {
    approach: Approach,
    smf: Option<SmfState>,
    upfs: BTreeMap<NodeId, UpfState>,
    sessions: BTreeMap<SessionId, PduSession>,
    next_session: u32,
}

impl MobileSystem {
    pub fn new(approach: Approach, smf: Option<NodeId>) -> Self {
        MobileSystem {
            approach,
            smf: smf.map(|node| SmfState {
                node,
                tunnels: BTreeMap::new(),
                next_teid: 1,
            }),
            upfs: BTreeMap::new(),
            sessions: BTreeMap::new(),
            next_session: 1,
        }
    }

    pub fn approach(&self) -> Approach {
        self.approach
    }

    pub fn smf(&self) -> Option<&SmfState> {
        self.smf.as_ref()
    }

    pub fn upfs(&self) -> impl Iterator<Item = &UpfState> {
        self.upfs.values()
    }

    pub fn upf(&self, node: NodeId) -> Option<&UpfState> {
        self.upfs.get(&node)
    }

    pub fn upf_mut(&mut self, node: NodeId) -> Option<&mut UpfState> {
        self.upfs.get_mut(&node)
    }

    pub fn msr_by_name(&self, name: &str) -> Option<&MsRouter> {
        self.upfs.values().map(|u| &u.msr).find(|m| m.name == name)
    }

    pub fn sessions(&self) -> impl Iterator<Item = &PduSession> {
        self.sessions.values()
    }

    pub fn session(&self, id: SessionId) -> Option<&PduSession> {
        self.sessions.get(&id)
    }

    /// Registers a UPF and creates its (not yet started) MS-Router.
    pub fn register_upf(
        &mut self,
        net: &Network,
        upf: NodeId,
        msr_name: String,
        config: ProtoConfig,
    ) -> Result<(), MobileError> {
        if net.node(upf).map(|n| n.kind()) != Some(NodeKind::Upf) {
            return Err(MobileError::UnknownUpf(upf));
        }
        let msr = MsRouter {
            upf,
            name: msr_name,
            router_id: RouterId(0),
            mode: self.approach,
            interfaces: Vec::new(),
            proto: LsRouter::new(RouterId(0), config),
        };
        self.upfs.insert(
            upf,
            UpfState {
                node: upf,
                msr,
                relay: BTreeMap::new(),
                rules: Vec::new(),
                routing_active: false,
            },
        );
        Ok(())
    }

    /// Fixes the MS-Router id: the highest N6 address, else the highest
    /// address of any interface.
    pub fn assign_router_id(&mut self, upf: NodeId, fallback: RouterId) -> Result<RouterId, MobileError> {
        let state = self.upfs.get_mut(&upf).ok_or(MobileError::UnknownUpf(upf))?;
        let pick = |kind: Option<crate::msr::MsrInterfaceKind>| {
            state
                .msr
                .interfaces
                .iter()
                .filter(|i| kind.is_none_or(|k| i.kind == k))
                .map(|i| i.address)
                .max()
        };
        let id = pick(Some(crate::msr::MsrInterfaceKind::N6))
            .or_else(|| pick(None))
            .map(RouterId::from)
            .unwrap_or(fallback);
        let config = state.msr.proto.config();
        state.msr.router_id = id;
        state.msr.proto = LsRouter::new(id, config);
        Ok(id)
    }

    /// Creates an N6 interface on a UPF.
    pub fn attach_n6(
        &mut self,
        net: &mut Network,
        upf: NodeId,
        ordinal: u32,
        address: IpAddress,
        subnet: IpPrefix,
    ) -> Result<InterfaceId, MobileError> {
        if !self.upfs.contains_key(&upf) {
            return Err(MobileError::UnknownUpf(upf));
        }
        let name = crate::msr::map_interface_name(crate::msr::MsrInterfaceKind::N6, ordinal);
        let id = net.insert_interface(upf, Some(ordinal), address, subnet, Some(name))?;
        self.refresh_interfaces(net, upf);
        Ok(id)
    }

    /// Re-derives the MS-Router interface set from the live model.
    pub fn refresh_interfaces(&mut self, net: &Network, upf: NodeId) {
        let sessions: Vec<PduSession> = self.sessions.values().cloned().collect();
        if let Some(state) = self.upfs.get_mut(&upf) {
            state.msr.interfaces = enumerate_interfaces(net, upf, sessions.iter());
        }
    }

    /// Establishes a session: reserves an address for the UPF side, creates
    /// both interfaces and the link between them, and in CP mode allocates a
    /// tunnel for the new interface.
    #[allow(clippy::too_many_arguments)]
    pub fn establish_pdu_session(
        &mut self,
        net: &mut Network,
        ue: NodeId,
        upf: NodeId,
        ue_addr: IpAddress,
        ue_subnet: IpPrefix,
        metric_up: u32,
        metric_down: u32,
    ) -> Result<SessionId, MobileError> {
        if !self.upfs.contains_key(&upf) {
            return Err(MobileError::UnknownUpf(upf));
        }
        if self.smf.is_none() {
            return Err(MobileError::NoSmf);
        }
        let ue_node = net.node(ue).ok_or(ModelError::UnknownNode(ue))?;
        if !matches!(ue_node.kind(), NodeKind::Ue | NodeKind::UeRouter) {
            return Err(MobileError::NotAUe(ue_node.name.clone()));
        }
        if net.address_in_use(ue_addr) {
            return Err(MobileError::AddressInUse(ue_addr));
        }
        crate::net::topology::check_metric(metric_up)?;
        crate::net::topology::check_metric(metric_down)?;
        let mut in_use: BTreeSet<IpAddress> = net.interfaces().map(|i| i.address).collect();
        let reserved = reserve_pdu_iface_address(ue_addr, ue_subnet, &mut in_use)?;

        let id = SessionId(self.next_session);
        let name = session_iface_name(id);
        let ue_iface = net.insert_interface(ue, None, ue_addr, ue_subnet, Some(name.clone()))?;
        let upf_iface = match net.insert_interface(upf, None, reserved, ue_subnet, Some(name)) {
            Ok(i) => i,
            Err(e) => {
                let _ = net.remove_interface(ue_iface);
                return Err(e.into());
            }
        };
        let link = match net.add_link(ue_iface, upf_iface, metric_up, metric_down) {
            Ok(l) => l,
            Err(e) => {
                let _ = net.remove_interface(ue_iface);
                let _ = net.remove_interface(upf_iface);
                return Err(e.into());
            }
        };
        self.next_session += 1;
        self.sessions.insert(
            id,
            PduSession {
                id,
                ue,
                upf,
                ue_addr,
                ue_subnet,
                reserved_addr: reserved,
                state: SessionState::Active,
                upf_iface,
                ue_iface,
                link: Some(link),
            },
        );
        self.refresh_interfaces(net, upf);
        if self.approach == Approach::CpBased {
            self.smf_open_tunnel(upf, upf_iface);
        }
        Ok(id)
    }

    /// Releases a session: interfaces, link, reserved address and tunnel go
    /// away, and installed rules using the interface are dropped.
    pub fn release_pdu_session(
        &mut self,
        net: &mut Network,
        id: SessionId,
    ) -> Result<PduSession, MobileError> {
        let session = match self.sessions.get_mut(&id) {
            Some(s) if s.is_active() => s,
            _ => return Err(MobileError::UnknownSession(id)),
        };
        session.state = SessionState::Released;
        session.link = None;
        let session = session.clone();
        net.remove_interface(session.upf_iface)?;
        net.remove_interface(session.ue_iface)?;
        if let Some(smf) = self.smf.as_mut() {
            if let Some(t) = smf.tunnels.get_mut(&session.upf) {
                t.retain(|_, tun| tun.bound_interface != session.upf_iface);
            }
        }
        if let Some(state) = self.upfs.get_mut(&session.upf) {
            state.rules.retain(|r| r.egress != session.upf_iface);
        }
        self.refresh_interfaces(net, session.upf);
        Ok(session)
    }

    fn smf_open_tunnel(&mut self, upf: NodeId, iface: InterfaceId) -> Option<Teid> {
        let smf = self.smf.as_mut()?;
        let tunnels = smf.tunnels.entry(upf).or_default();
        if let Some(t) = tunnels.values().find(|t| t.bound_interface == iface) {
            return Some(t.teid);
        }
        let teid = Teid(smf.next_teid);
        smf.next_teid += 1;
        tunnels.insert(
            teid,
            GtpTunnel {
                teid,
                smf: smf.node,
                upf,
                bound_interface: iface,
            },
        );
        Some(teid)
    }

    fn require(&self, expected: Approach) -> Result<(), MobileError> {
        if self.approach == expected {
            Ok(())
        } else {
            Err(MobileError::ModeMismatch { expected })
        }
    }

    /// Approach 1, step 2: make sure every MS-Router interface has a tunnel
    /// and build the relay configuration for the UPF.
    pub fn cp_configure_relay(&mut self, upf: NodeId) -> Result<CpUpMessage, MobileError> {
        self.require(Approach::CpBased)?;
        let ifaces: Vec<InterfaceId> = self
            .upfs
            .get(&upf)
            .ok_or(MobileError::UnknownUpf(upf))?
            .msr
            .interfaces
            .iter()
            .map(|i| i.id)
            .collect();
        if self.smf.is_none() {
            return Err(MobileError::NoSmf);
        }
        for iface in &ifaces {
            self.smf_open_tunnel(upf, *iface);
        }
        let smf = self.smf.as_mut().expect("checked above");
        let tunnels = smf.tunnels.entry(upf).or_default();
        tunnels.retain(|_, t| ifaces.contains(&t.bound_interface));
        Ok(CpUpMessage::ConfigureRelay {
            tunnels: tunnels.values().map(|t| (t.teid, t.bound_interface)).collect(),
        })
    }

    /// UPF side of step 2: install the relay table.
    pub fn upf_apply_relay(
        &mut self,
        upf: NodeId,
        tunnels: &[(Teid, InterfaceId)],
    ) -> Result<(), MobileError> {
        let state = self.upfs.get_mut(&upf).ok_or(MobileError::UnknownUpf(upf))?;
        state.relay = tunnels.iter().copied().collect();
        Ok(())
    }

    pub fn teid_for(&self, upf: NodeId, iface: InterfaceId) -> Option<Teid> {
        self.smf
            .as_ref()?
            .tunnels
            .get(&upf)?
            .values()
            .find(|t| t.bound_interface == iface)
            .map(|t| t.teid)
    }

    /// Approach 1, step 3 (SMF to wire): encapsulate a routing message on the
    /// tunnel bound to `iface`. The packet source is the interface address.
    pub fn cp_send_routing_msg(
        &self,
        upf: NodeId,
        iface: InterfaceId,
        packet: &RoutingPacket,
    ) -> Result<GtpFrame, MobileError> {
        self.require(Approach::CpBased)?;
        let msr = &self.upfs.get(&upf).ok_or(MobileError::UnknownUpf(upf))?.msr;
        let mi = msr.interface(iface).ok_or(MobileError::UnknownInterface(iface))?;
        let teid = self
            .teid_for(upf, iface)
            .ok_or(MobileError::UnknownInterface(iface))?;
        let packet = RoutingPacket {
            src: mi.address,
            msg: packet.msg.clone(),
        };
        Ok(GtpFrame {
            teid,
            payload: packet.encode(),
        })
    }

    /// UPF relay, tunnel to wire: decapsulate and name the egress interface.
    pub fn upf_relay_to_wire(&self, upf: NodeId, frame: &GtpFrame) -> Result<InterfaceId, MobileError> {
        let state = self.upfs.get(&upf).ok_or(MobileError::UnknownUpf(upf))?;
        state
            .relay
            .get(&frame.teid)
            .copied()
            .ok_or(MobileError::UnknownTeid(frame.teid))
    }

    /// UPF relay, wire to tunnel: encapsulate with the interface's TEID.
    pub fn upf_relay_from_wire(
        &self,
        upf: NodeId,
        iface: InterfaceId,
        bytes: &[u8],
    ) -> Result<GtpFrame, MobileError> {
        let state = self.upfs.get(&upf).ok_or(MobileError::UnknownUpf(upf))?;
        let teid = state
            .relay
            .iter()
            .find(|(_, i)| **i == iface)
            .map(|(t, _)| *t)
            .ok_or(MobileError::UnknownInterface(iface))?;
        Ok(GtpFrame {
            teid,
            payload: bytes.to_vec(),
        })
    }

    /// Approach 1, step 3 (wire to SMF): the TEID identifies the interface.
    pub fn cp_receive_routing_msg(
        &self,
        upf: NodeId,
        frame: &GtpFrame,
    ) -> Result<(MsrInterface, RoutingPacket), MobileError> {
        let tunnel = self
            .smf
            .as_ref()
            .and_then(|s| s.tunnels.get(&upf))
            .and_then(|t| t.get(&frame.teid))
            .ok_or(MobileError::UnknownTeid(frame.teid))?;
        let msr = &self.upfs.get(&upf).ok_or(MobileError::UnknownUpf(upf))?.msr;
        let iface = msr
            .interface(tunnel.bound_interface)
            .cloned()
            .ok_or(MobileError::UnknownTeid(frame.teid))?;
        let packet = RoutingPacket::decode(&frame.payload)?;
        Ok((iface, packet))
    }

    /// Approach 2, step 2 (SMF side).
    pub fn up_trigger_routing(&self, upf: NodeId) -> Result<CpUpMessage, MobileError> {
        self.require(Approach::UpBased)?;
        if !self.upfs.contains_key(&upf) {
            return Err(MobileError::UnknownUpf(upf));
        }
        Ok(CpUpMessage::TriggerRouting)
    }

    /// Approach 2, step 2 (UPF side): the UPF-hosted instance starts and from
    /// now on terminates routing messages locally.
    pub fn upf_start_routing(&mut self, upf: NodeId) -> Result<(), MobileError> {
        self.require(Approach::UpBased)?;
        let state = self.upfs.get_mut(&upf).ok_or(MobileError::UnknownUpf(upf))?;
        state.routing_active = true;
        Ok(())
    }

    /// Approach 2, step 5 (UPF side): package the table for the SMF.
    pub fn up_report_table(&self, upf: NodeId) -> Result<CpUpMessage, MobileError> {
        self.require(Approach::UpBased)?;
        let state = self.upfs.get(&upf).ok_or(MobileError::UnknownUpf(upf))?;
        Ok(CpUpMessage::ReportTable {
            table: state.msr.table().to_vec(),
        })
    }

    /// Step 5 at the SMF: compile a table into rules against the current
    /// interface set.
    pub fn smf_translate(&self, upf: NodeId, table: &[RoutingEntry]) -> Result<Translation, MobileError> {
        let state = self.upfs.get(&upf).ok_or(MobileError::UnknownUpf(upf))?;
        Ok(translate_routes(table, &state.msr.interfaces))
    }

    /// Step 6: atomically replace the UPF's rules.
    pub fn install_rules(&mut self, upf: NodeId, rules: Vec<ForwardingRule>) -> Result<(), MobileError> {
        let state = self.upfs.get_mut(&upf).ok_or(MobileError::UnknownUpf(upf))?;
        let mut seen = BTreeSet::new();
        for r in &rules {
            let iface = state.msr.interface(r.egress).ok_or_else(|| {
                MobileError::InvalidRule(format!(
                    "{}: egress {:?} does not exist",
                    r.match_prefix, r.egress
                ))
            })?;
            if !iface.subnet.contains(r.next_hop) {
                return Err(MobileError::InvalidRule(format!(
                    "{}: next hop {} outside {} on {}",
                    r.match_prefix, r.next_hop, iface.subnet, iface.name
                )));
            }
            if !seen.insert(r.match_prefix) {
                return Err(MobileError::InvalidRule(format!(
                    "{}: duplicate match",
                    r.match_prefix
                )));
            }
        }
        state.rules = rules;
        Ok(())
    }

    /// Model audit for the mobile-system invariants.
    pub fn audit(&self, net: &Network) -> Vec<String> {
        let mut problems = Vec::new();
        let ue_addrs: BTreeSet<IpAddress> = self
            .sessions
            .values()
            .filter(|s| s.is_active())
            .map(|s| s.ue_addr)
            .collect();
        for state in self.upfs.values() {
            let expect = enumerate_interfaces(net, state.node, self.sessions.values());
            if expect != state.msr.interfaces {
                problems.push(format!(
                    "{}: interface set does not mirror the UPF",
                    state.msr.name
                ));
            }
            if self.approach == Approach::CpBased {
                let tunnels = self.smf.as_ref().and_then(|s| s.tunnels.get(&state.node));
                let bound: BTreeSet<InterfaceId> = tunnels
                    .map(|t| t.values().map(|t| t.bound_interface).collect())
                    .unwrap_or_default();
                let count = tunnels.map_or(0, |t| t.len());
                let live: BTreeSet<InterfaceId> = state.msr.interfaces.iter().map(|i| i.id).collect();
                if bound != live || count != live.len() {
                    problems.push(format!(
                        "{}: TEID map is not a bijection over live interfaces",
                        state.msr.name
                    ));
                }
            } else if self
                .smf
                .as_ref()
                .is_some_and(|s| s.tunnels.values().any(|t| !t.is_empty()))
            {
                problems.push("tunnels exist in UP-based mode".to_string());
            }
            for r in &state.rules {
                let sound = state.msr.interface(r.egress).is_some()
                    && net
                        .peer(r.egress)
                        .and_then(|p| net.interface(p))
                        .is_some_and(|p| p.address == r.next_hop);
                if !sound {
                    problems.push(format!(
                        "{}: rule {} -> {} is not a direct neighbor",
                        state.msr.name, r.match_prefix, r.next_hop
                    ));
                }
            }
        }
        for s in self.sessions.values().filter(|s| s.is_active()) {
            if !s.ue_subnet.contains(s.reserved_addr) || s.reserved_addr == s.ue_addr {
                problems.push(format!("session {}: bad reservation {}", s.id, s.reserved_addr));
            }
            if ue_addrs.contains(&s.reserved_addr) {
                problems.push(format!("session {}: reservation collides with a UE", s.id));
            }
        }
        problems
    }
}
