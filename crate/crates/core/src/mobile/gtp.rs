//! GTP-U tunnels between the SMF and a UPF, reduced to what relaying needs:
//! a TEID naming the MS-Router interface and an opaque payload.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::net::{InterfaceId, NodeId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Teid(pub u32);

impl fmt::Display for Teid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{:08x}", self.0)
    }
}

/// One tunnel per MS-Router interface.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GtpTunnel {
    pub teid: Teid,
    pub smf: NodeId,
    pub upf: NodeId,
    pub bound_interface: InterfaceId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GtpFrame {
    pub teid: Teid,
    pub payload: Vec<u8>,
}
