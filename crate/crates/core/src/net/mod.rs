//! Network model: addressing, topology and scenario files.

pub mod addr;
pub mod scenario;
pub mod topology;

pub use addr::{contains, IpAddress, IpPrefix};
pub use scenario::{parse_scenario, Diagnostic, DiagnosticKind, Scenario, ScriptedEvent};
pub use topology::{Interface, InterfaceId, Link, LinkId, ModelError, Network, Node, NodeId, NodeKind};

/// Prefix length applied when a scenario gives a bare address.
pub const DEFAULT_PREFIX_LEN: u8 = 24;
