//! Simulation of mobile-system routers (MS-Routers): one router per UPF,
//! exchanging link-state routing with UE-side and N6-side routers, with the
//! protocol placed either in the SMF or in the UPF.
//!
//! The crate is organised bottom-up:
//!
//! - [`net`]: addresses, the topology model and the scenario format.
//! - [`proto`]: the link-state protocol (hello, LSAs, LSDB, SPF).
//! - [`msr`]: MS-Router interfaces, address reservation, rule translation.
//! - [`mobile`]: UPFs, the SMF, PDU sessions, GTP tunnels, both approaches.
//! - [`sim`]: the discrete-event engine tying everything together.
//! - [`forwarding`]: hop-by-hop data-plane traces over a snapshot.
//! - [`cli`]: the `msrsim` command line.

pub mod cli;
pub mod forwarding;
pub mod mobile;
pub mod msr;
pub mod net;
pub mod proto;
pub mod sim;

pub use mobile::Approach;
pub use net::{parse_scenario, Scenario};
pub use sim::{RunStats, SimConfig, Simulator, Snapshot};
