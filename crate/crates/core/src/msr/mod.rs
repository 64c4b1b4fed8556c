//! The MS-Router: one IP router per UPF whose interfaces are the UPF's N6
//! interfaces plus its PDU sessions.

pub mod report;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mobile::{Approach, PduSession, SessionId};
use crate::net::{InterfaceId, IpAddress, IpPrefix, Network, NodeId};
use crate::proto::{LsRouter, RouterId, RoutingEntry};

pub use report::{render_routes, RouteRow};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MsrInterfaceKind {
    N6,
    PduSession,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MsrInterface {
    pub id: InterfaceId,
    pub kind: MsrInterfaceKind,
    /// N6 ordinal or PDU session id.
    pub source_id: u32,
    pub name: String,
    pub address: IpAddress,
    pub subnet: IpPrefix,
}

/// Standard interface name for an MS-Router interface.
pub fn map_interface_name(kind: MsrInterfaceKind, source_id: u32) -> String {
    match kind {
        MsrInterfaceKind::N6 => format!("n6-{source_id}"),
        MsrInterfaceKind::PduSession => format!("pdu-{source_id}"),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MsrError {
    #[error("no free host address left in {0}")]
    SubnetExhausted(IpPrefix),
    #[error("UE address {0} is not inside {1}")]
    UeOutsideSubnet(IpAddress, IpPrefix),
}

/// Picks the lowest host address of `ue_subnet` that is neither in use nor
/// the UE's own address, and records it in `in_use`.
pub fn reserve_pdu_iface_address(
    ue_addr: IpAddress,
    ue_subnet: IpPrefix,
    in_use: &mut BTreeSet<IpAddress>,
) -> Result<IpAddress, MsrError> {
    if !ue_subnet.contains(ue_addr) {
        return Err(MsrError::UeOutsideSubnet(ue_addr, ue_subnet));
    }
    let addr = ue_subnet
        .hosts()
        .find(|a| *a != ue_addr && !in_use.contains(a))
        .ok_or(MsrError::SubnetExhausted(ue_subnet))?;
    in_use.insert(addr);
    Ok(addr)
}

/// Interface set of the MS-Router for `upf`: N6 interfaces by ordinal, then
/// the UPF's active sessions by id.
pub fn enumerate_interfaces<'a>(
    net: &Network,
    upf: NodeId,
    sessions: impl IntoIterator<Item = &'a PduSession>,
) -> Vec<MsrInterface> {
    let Some(node) = net.node(upf) else {
        return Vec::new();
    };
    let mut sessions: Vec<&PduSession> = sessions
        .into_iter()
        .filter(|s| s.upf == upf && s.is_active())
        .collect();
    sessions.sort_by_key(|s| s.id);
    let session_ifaces: BTreeSet<InterfaceId> = sessions.iter().map(|s| s.upf_iface).collect();

    let mut out: Vec<MsrInterface> = node
        .interfaces
        .iter()
        .filter(|i| !session_ifaces.contains(&i.id))
        .map(|i| MsrInterface {
            id: i.id,
            kind: MsrInterfaceKind::N6,
            source_id: i.id.ordinal,
            name: map_interface_name(MsrInterfaceKind::N6, i.id.ordinal),
            address: i.address,
            subnet: i.subnet,
        })
        .collect();
    out.sort_by_key(|i| i.source_id);
    for s in sessions {
        out.push(MsrInterface {
            id: s.upf_iface,
            kind: MsrInterfaceKind::PduSession,
            source_id: s.id.0,
            name: map_interface_name(MsrInterfaceKind::PduSession, s.id.0),
            address: s.reserved_addr,
            subnet: s.ue_subnet,
        });
    }
    out
}

/// Compiled user-plane rule: destination match to egress and next hop.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForwardingRule {
    pub match_prefix: IpPrefix,
    pub next_hop: IpAddress,
    pub egress: InterfaceId,
    pub priority: u8,
}

/// Result of compiling a routing table into rules.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Translation {
    pub rules: Vec<ForwardingRule>,
    pub diagnostics: Vec<String>,
}

/// One rule per routing entry whose interface still exists; the cheapest
/// entry wins when a destination appears more than once.
pub fn translate_routes(table: &[RoutingEntry], interfaces: &[MsrInterface]) -> Translation {
    let mut rows: Vec<&RoutingEntry> = table.iter().collect();
    rows.sort_by_key(|e| (e.destination, e.metric, e.next_hop, e.destination_interface));
    let mut out = Translation::default();
    let mut seen = BTreeSet::new();
    for e in rows {
        let Some(iface) = interfaces.iter().find(|i| i.id == e.destination_interface) else {
            out.diagnostics.push(format!(
                "dropped route to {} via {}: interface {:?} no longer exists",
                e.destination, e.next_hop, e.destination_interface
            ));
            continue;
        };
        if !iface.subnet.contains(e.next_hop) {
            out.diagnostics.push(format!(
                "dropped route to {}: next hop {} outside {} ({})",
                e.destination, e.next_hop, iface.subnet, iface.name
            ));
            continue;
        }
        if !seen.insert(e.destination) {
            continue;
        }
        out.rules.push(ForwardingRule {
            match_prefix: e.destination,
            next_hop: e.next_hop,
            egress: e.destination_interface,
            priority: e.destination.len(),
        });
    }
    out
}

/// Per-UPF router. The protocol instance runs in the SMF or in the UPF
/// depending on `mode`; its state is the same either way.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MsRouter {
    pub upf: NodeId,
    pub name: String,
    pub router_id: RouterId,
    pub mode: Approach,
    pub interfaces: Vec<MsrInterface>,
    pub proto: LsRouter,
}

impl MsRouter {
    pub fn interface(&self, id: InterfaceId) -> Option<&MsrInterface> {
        self.interfaces.iter().find(|i| i.id == id)
    }

    pub fn interface_by_name(&self, name: &str) -> Option<&MsrInterface> {
        self.interfaces.iter().find(|i| i.name == name)
    }

    pub fn table(&self) -> &[RoutingEntry] {
        self.proto.table()
    }
}

impl fmt::Display for MsrInterfaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MsrInterfaceKind::N6 => "n6",
            MsrInterfaceKind::PduSession => "pdu",
        })
    }
}

pub fn session_iface_name(id: SessionId) -> String {
    map_interface_name(MsrInterfaceKind::PduSession, id.0)
}
