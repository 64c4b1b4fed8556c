//! A single-area link-state routing protocol: hello-based neighbor
//! discovery, sequence-numbered LSA flooding, a replicated LSDB and SPF.

pub mod lsdb;
pub mod message;
pub mod router;
pub mod spf;

use thiserror::Error;

use crate::net::InterfaceId;

pub use lsdb::{InstallOutcome, Lsdb};
pub use message::{HelloMsg, Lsa, LsaEntry, ProtoMessage, RouterId, RoutingPacket};
pub use router::{
    LsRouter, NeighborEvent, NeighborRecord, NeighborState, Output, ProtoConfig, ProtoInterface,
};
pub use spf::{compute_candidates, compute_spf, LocalAdjacency, RoutingEntry};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtoError {
    #[error("interface {0:?} is down")]
    InterfaceDown(InterfaceId),
    #[error("unknown interface {0:?}")]
    UnknownInterface(InterfaceId),
    #[error("malformed routing message: {0}")]
    Malformed(String),
}
