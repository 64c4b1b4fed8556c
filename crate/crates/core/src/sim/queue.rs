//! Time-ordered event queue. Events at the same millisecond run in the
//! order they were scheduled.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::mobile::{CpUpMessage, GtpFrame, SessionId};
use crate::net::scenario::{Endpoint, PduDecl, ScriptedEvent};
use crate::net::{InterfaceId, NodeId};

/// A protocol instance: an external router, or the MS-Router of a UPF.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Participant {
    Router(NodeId),
    Msr(NodeId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CpUpEndpoint {
    Smf,
    Upf,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CpUpPayload {
    Control(CpUpMessage),
    Gtp(GtpFrame),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    /// Wire delivery of an encoded routing packet to an interface.
    DeliverMsg {
        to: InterfaceId,
        bytes: Vec<u8>,
    },
    /// Hello timer of a protocol instance.
    Timer(Participant),
    LinkDown(Endpoint),
    LinkUp(Endpoint),
    MetricChange {
        endpoint: Endpoint,
        metric_out: u32,
        metric_in: u32,
    },
    PduEstablish(PduDecl),
    PduRelease(SessionId),
    /// Delivery on the channel between the SMF and the UPF `upf`.
    CpUpDeliver {
        upf: NodeId,
        to: CpUpEndpoint,
        payload: CpUpPayload,
    },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::DeliverMsg { .. } => "deliver-msg",
            EventKind::Timer(_) => "timer",
            EventKind::LinkDown(_) => "link-down",
            EventKind::LinkUp(_) => "link-up",
            EventKind::MetricChange { .. } => "metric-change",
            EventKind::PduEstablish(_) => "pdu-establish",
            EventKind::PduRelease(_) => "pdu-release",
            EventKind::CpUpDeliver { .. } => "cpup-deliver",
        }
    }

    pub fn is_scripted(&self) -> bool {
        matches!(
            self,
            EventKind::LinkDown(_)
                | EventKind::LinkUp(_)
                | EventKind::MetricChange { .. }
                | EventKind::PduEstablish(_)
                | EventKind::PduRelease(_)
        )
    }
}

impl From<ScriptedEvent> for EventKind {
    fn from(e: ScriptedEvent) -> Self {
        match e {
            ScriptedEvent::LinkDown(ep) => EventKind::LinkDown(ep),
            ScriptedEvent::LinkUp(ep) => EventKind::LinkUp(ep),
            ScriptedEvent::MetricChange {
                endpoint,
                metric_out,
                metric_in,
            } => EventKind::MetricChange {
                endpoint,
                metric_out,
                metric_in,
            },
            ScriptedEvent::PduEstablish(p) => EventKind::PduEstablish(p),
            ScriptedEvent::PduRelease(id) => EventKind::PduRelease(id),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct EventQueue {
    items: BTreeMap<(u64, u64), EventKind>,
    next_seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, time_ms: u64, kind: EventKind) {
        self.items.insert((time_ms, self.next_seq), kind);
        self.next_seq += 1;
    }

    /// Removes the earliest event if it is due at or before `limit`.
    pub fn pop_due(&mut self, limit: u64) -> Option<(u64, EventKind)> {
        let (&(t, _), _) = self.items.first_key_value()?;
        if t > limit {
            return None;
        }
        self.items.pop_first().map(|((t, _), k)| (t, k))
    }

    pub fn peek_time(&self) -> Option<u64> {
        self.items.keys().next().map(|k| k.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &EventKind)> {
        self.items.iter().map(|(k, v)| (k.0, v))
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn pops_in_time_then_insertion_order(times in prop::collection::vec(0u64..50, 0..40)) {
            let mut q = EventQueue::new();
            for (i, t) in times.iter().enumerate() {
                q.push(*t, EventKind::PduRelease(SessionId(i as u32)));
            }
            let mut got = Vec::new();
            while let Some((t, EventKind::PduRelease(id))) = q.pop_due(u64::MAX) {
                got.push((t, id.0));
            }
            let mut expect: Vec<(u64, u32)> = times.iter().enumerate().map(|(i, t)| (*t, i as u32)).collect();
            expect.sort();
            prop_assert_eq!(got, expect);
        }
    }

    #[test]
    fn pop_due_respects_limit() {
        let mut q = EventQueue::new();
        q.push(10, EventKind::PduRelease(SessionId(1)));
        assert!(q.pop_due(9).is_none());
        assert_eq!(q.peek_time(), Some(10));
        assert!(q.pop_due(10).is_some());
        assert!(q.is_empty());
    }
}
