//! Deterministic discrete-event simulator.
//!
//! One [`Simulator`] owns the network model, the mobile system, one protocol
//! instance per external router and the event queue. Time advances only by
//! popping events; every wire hop and every CP/UP channel hop takes a fixed
//! latency, so runs are reproducible bit for bit.

pub mod log;
pub mod queue;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forwarding::{default_fib, DataPlane, Fib};
use crate::mobile::{Approach, CpUpMessage, MobileSystem};
use crate::msr::RouteRow;
use crate::net::scenario::{Endpoint, Port, ScriptedEvent};
use crate::net::{Diagnostic, DiagnosticKind, InterfaceId, Network, NodeId, NodeKind, Scenario};
use crate::proto::{
    LsRouter, NeighborEvent, NeighborState, Output, ProtoConfig, ProtoInterface, RouterId, RoutingEntry,
};

pub use log::{EventLog, LogRecord};
pub use queue::{CpUpEndpoint, CpUpPayload, EventKind, EventQueue, Participant};

pub const DEFAULT_LINK_LATENCY_MS: u64 = 1;
pub const DEFAULT_CPUP_LATENCY_MS: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub approach: Approach,
    pub proto: ProtoConfig,
    pub link_latency_ms: u64,
    pub cpup_latency_ms: u64,
    /// Probability of dropping a wire message. Zero disables the RNG draw.
    pub loss_rate: f64,
    /// Overrides the scenario seed.
    pub seed: Option<u64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            approach: Approach::CpBased,
            proto: ProtoConfig::default(),
            link_latency_ms: DEFAULT_LINK_LATENCY_MS,
            cpup_latency_ms: DEFAULT_CPUP_LATENCY_MS,
            loss_rate: 0.0,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("cannot schedule at {at} ms, clock is at {now} ms")]
    TimeInPast { at: u64, now: u64 },
    #[error("unknown target: {0}")]
    UnknownTarget(String),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStats {
    pub now_ms: u64,
    /// Events processed during this call, by kind.
    pub events: BTreeMap<String, u64>,
    pub quiescent: bool,
}

impl RunStats {
    pub fn total(&self) -> u64 {
        self.events.values().sum()
    }
}

/// Route rows of one protocol instance.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouterRoutes {
    pub best: Vec<RouteRow>,
    pub all: Vec<RouteRow>,
}

/// Everything the CLI needs after a run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub approach: Approach,
    pub now_ms: u64,
    pub quiescent: bool,
    pub audit: Vec<String>,
    pub routes: BTreeMap<String, RouterRoutes>,
    /// UPF name to MS-Router name.
    pub aliases: BTreeMap<String, String>,
    pub data_plane: DataPlane,
}

pub struct Simulator {
    config: SimConfig,
    now: u64,
    queue: EventQueue,
    net: Network,
    mobile: MobileSystem,
    routers: BTreeMap<NodeId, LsRouter>,
    log: EventLog,
    rng: ChaCha8Rng,
    exchanging: BTreeSet<NodeId>,
    dropped: u64,
}

fn diag(line: usize, msg: impl std::fmt::Display) -> Diagnostic {
    Diagnostic::new(line, DiagnosticKind::InvariantViolation, msg.to_string())
}

fn unknown(line: usize, msg: impl std::fmt::Display) -> Diagnostic {
    Diagnostic::new(line, DiagnosticKind::UnknownReference, msg.to_string())
}

fn is_hello(bytes: &[u8]) -> bool {
    bytes.get(1) == Some(&1)
}

/// Protocol view of a model interface.
fn proto_iface(net: &Network, id: InterfaceId) -> Option<ProtoInterface> {
    let i = net.interface(id)?;
    Some(ProtoInterface {
        id,
        address: i.address,
        subnet: i.subnet,
        cost: net.link_of(id).and_then(|l| l.egress_metric(id)),
        admin_up: i.admin_up,
    })
}

fn resolve_endpoint(net: &Network, ep: &Endpoint) -> Result<InterfaceId, String> {
    let node = net
        .node_by_name(&ep.node)
        .ok_or_else(|| format!("undeclared node `{}`", ep.node))?;
    let iface = match &ep.port {
        Port::Ordinal(o) => node.interfaces.iter().find(|i| i.id.ordinal == *o),
        Port::Name(n) => node.interfaces.iter().find(|i| &i.name == n),
    };
    iface.map(|i| i.id).ok_or_else(|| format!("no interface `{ep}`"))
}

impl Simulator {
    /// Builds the world described by `scenario` and bootstraps every
    /// protocol instance at t=0.
    pub fn new(scenario: &Scenario, config: SimConfig) -> Result<Self, Diagnostic> {
        let mut net = Network::new();
        for n in &scenario.nodes {
            net.add_node(n.value.kind, &n.value.name)
                .map_err(|e| diag(n.line, e))?;
        }
        let smf = net.nodes().find(|n| n.kind() == NodeKind::Smf).map(|n| n.id);
        let mut mobile = MobileSystem::new(config.approach, smf);
        let upfs: Vec<NodeId> = net
            .nodes()
            .filter(|n| n.kind() == NodeKind::Upf)
            .map(|n| n.id)
            .collect();
        for (k, upf) in upfs.iter().enumerate() {
            mobile
                .register_upf(&net, *upf, format!("msr{}", k + 1), config.proto)
                .map_err(|e| diag(0, e))?;
        }
        for i in &scenario.ifaces {
            let v = &i.value;
            let node = net
                .node_by_name(&v.node)
                .map(|n| n.id)
                .ok_or_else(|| unknown(i.line, format!("undeclared node `{}`", v.node)))?;
            if upfs.contains(&node) {
                mobile
                    .attach_n6(&mut net, node, v.ordinal, v.address, v.subnet)
                    .map_err(|e| diag(i.line, e))?;
            } else {
                net.add_interface(node, Some(v.ordinal), v.address, v.subnet)
                    .map_err(|e| diag(i.line, e))?;
            }
        }
        for l in &scenario.links {
            let v = &l.value;
            let a = resolve_endpoint(&net, &v.a).map_err(|e| unknown(l.line, e))?;
            let b = resolve_endpoint(&net, &v.b).map_err(|e| unknown(l.line, e))?;
            net.add_link(a, b, v.metric_ab, v.metric_ba)
                .map_err(|e| diag(l.line, e))?;
        }
        for p in &scenario.pdus {
            let v = &p.value;
            let ue = net.node_by_name(&v.ue).map(|n| n.id);
            let upf = net.node_by_name(&v.upf).map(|n| n.id);
            let (Some(ue), Some(upf)) = (ue, upf) else {
                return Err(unknown(p.line, "undeclared node in [pdu]"));
            };
            mobile
                .establish_pdu_session(
                    &mut net,
                    ue,
                    upf,
                    v.ue_addr,
                    v.ue_subnet,
                    v.metric_up,
                    v.metric_down,
                )
                .map_err(|e| diag(p.line, e))?;
        }

        let mut ids: BTreeMap<RouterId, String> = BTreeMap::new();
        let mut claim = |id: RouterId, who: &str| -> Result<(), Diagnostic> {
            if let Some(other) = ids.insert(id, who.to_string()) {
                return Err(diag(
                    0,
                    format!("router id {id} used by both `{other}` and `{who}`"),
                ));
            }
            Ok(())
        };
        let mut routers = BTreeMap::new();
        for n in net.nodes().filter(|n| n.kind().is_external_router()) {
            let id = n
                .interfaces
                .iter()
                .map(|i| i.address)
                .max()
                .map(RouterId::from)
                .unwrap_or(RouterId(0xFFFF_0000 | n.id.0));
            claim(id, &n.name)?;
            let mut r = LsRouter::new(id, config.proto);
            for i in &n.interfaces {
                r.upsert_interface(proto_iface(&net, i.id).expect("live interface"), 0);
            }
            routers.insert(n.id, r);
        }
        for upf in &upfs {
            let id = mobile
                .assign_router_id(*upf, RouterId(0xFFFF_0000 | upf.0))
                .map_err(|e| diag(0, e))?;
            let name = mobile.upf(*upf).map(|u| u.msr.name.clone()).unwrap_or_default();
            claim(id, &name)?;
            let state = mobile.upf_mut(*upf).expect("registered");
            let ifaces: Vec<InterfaceId> = state.msr.interfaces.iter().map(|i| i.id).collect();
            for i in ifaces {
                state
                    .msr
                    .proto
                    .upsert_interface(proto_iface(&net, i).expect("live interface"), 0);
            }
        }

        let mut queue = EventQueue::new();
        let mut scripted: Vec<_> = scenario.events.iter().collect();
        scripted.sort_by_key(|e| e.value.time_ms);
        for e in scripted {
            queue.push(e.value.time_ms, e.value.event.clone().into());
        }
        let seed = config.seed.unwrap_or(scenario.seed);
        let mut sim = Simulator {
            config,
            now: 0,
            queue,
            net,
            mobile,
            routers,
            log: EventLog::default(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            exchanging: BTreeSet::new(),
            dropped: 0,
        };
        sim.bootstrap();
        Ok(sim)
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn mobile(&self) -> &MobileSystem {
        &self.mobile
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn queue(&self) -> &EventQueue {
        &self.queue
    }

    /// Wire messages lost to down links or the loss knob.
    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn router(&self, node: NodeId) -> Option<&LsRouter> {
        self.routers.get(&node)
    }

    fn proto(&self, p: Participant) -> Option<&LsRouter> {
        match p {
            Participant::Router(n) => self.routers.get(&n),
            Participant::Msr(u) => self.mobile.upf(u).map(|s| &s.msr.proto),
        }
    }

    fn proto_mut(&mut self, p: Participant) -> Option<&mut LsRouter> {
        match p {
            Participant::Router(n) => self.routers.get_mut(&n),
            Participant::Msr(u) => self.mobile.upf_mut(u).map(|s| &mut s.msr.proto),
        }
    }

    /// Every protocol instance with its display name.
    pub fn participants(&self) -> Vec<(String, Participant)> {
        let mut out: Vec<(String, Participant)> = self
            .routers
            .keys()
            .map(|n| (self.net.name(*n).to_string(), Participant::Router(*n)))
            .collect();
        out.extend(
            self.mobile
                .upfs()
                .map(|u| (u.msr.name.clone(), Participant::Msr(u.node))),
        );
        out
    }

    /// Looks a protocol instance up by router name, MS-Router name or UPF
    /// name.
    pub fn participant(&self, name: &str) -> Option<Participant> {
        if let Some(m) = self.mobile.msr_by_name(name) {
            return Some(Participant::Msr(m.upf));
        }
        let node = self.net.node_by_name(name)?;
        match node.kind() {
            NodeKind::Upf => Some(Participant::Msr(node.id)),
            _ if self.routers.contains_key(&node.id) => Some(Participant::Router(node.id)),
            _ => None,
        }
    }

    pub fn protocol(&self, p: Participant) -> Option<&LsRouter> {
        self.proto(p)
    }

    fn entity(&self, p: Participant) -> String {
        match p {
            Participant::Router(n) => self.net.name(n).to_string(),
            Participant::Msr(u) => self.msr_name(u),
        }
    }

    fn msr_name(&self, upf: NodeId) -> String {
        self.mobile
            .upf(upf)
            .map(|u| u.msr.name.clone())
            .unwrap_or_default()
    }

    fn smf_name(&self) -> String {
        self.mobile
            .smf()
            .map(|s| self.net.name(s.node).to_string())
            .unwrap_or_else(|| "smf".into())
    }

    fn record(
        &mut self,
        kind: &str,
        entity: String,
        step: Option<u8>,
        label: &str,
        fields: Vec<(&str, String)>,
    ) {
        self.push_log(kind, entity, step, label, fields, false);
    }

    fn push_log(
        &mut self,
        kind: &str,
        entity: String,
        step: Option<u8>,
        label: &str,
        fields: Vec<(&str, String)>,
        verbose: bool,
    ) {
        let step = step.map(|s| format!("{}.S{s}", self.config.approach.step_prefix()));
        self.log.push(LogRecord {
            t_ms: self.now,
            kind: if step.is_some() {
                "step".into()
            } else {
                kind.into()
            },
            entity,
            step,
            label: label.into(),
            fields: fields.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            verbose,
        });
    }

    fn warn(&mut self, entity: String, message: String) {
        self.record(
            "warn",
            entity,
            None,
            "warning",
            vec![("msg", format!("\"{message}\""))],
        );
    }

    fn bootstrap(&mut self) {
        let upfs: Vec<NodeId> = self.mobile.upfs().map(|u| u.node).collect();
        let smf = self.smf_name();
        for upf in upfs {
            let msr = self.msr_name(upf);
            let upf_name = self.net.name(upf).to_string();
            match self.config.approach {
                Approach::CpBased => {
                    self.record(
                        "step",
                        smf.clone(),
                        Some(1),
                        "implement-protocol",
                        vec![("msr", msr.clone())],
                    );
                    match self.mobile.cp_configure_relay(upf) {
                        Ok(msg) => self.send_relay_config(upf, msg),
                        Err(e) => self.warn(smf.clone(), e.to_string()),
                    }
                    let out = self.mobile.upf_mut(upf).expect("registered").msr.proto.start(0);
                    self.dispatch(Participant::Msr(upf), out);
                    self.queue.push(0, EventKind::Timer(Participant::Msr(upf)));
                }
                Approach::UpBased => {
                    self.record(
                        "step",
                        upf_name,
                        Some(1),
                        "implement-protocol",
                        vec![("msr", msr.clone())],
                    );
                    match self.mobile.up_trigger_routing(upf) {
                        Ok(msg) => {
                            self.record(
                                "step",
                                smf.clone(),
                                Some(2),
                                "trigger-routing",
                                vec![("msr", msr)],
                            );
                            self.send_cpup(upf, CpUpEndpoint::Upf, CpUpPayload::Control(msg));
                        }
                        Err(e) => self.warn(smf.clone(), e.to_string()),
                    }
                }
            }
        }
        let routers: Vec<NodeId> = self.routers.keys().copied().collect();
        for n in routers {
            let out = self.routers.get_mut(&n).expect("present").start(0);
            self.dispatch(Participant::Router(n), out);
            self.queue.push(0, EventKind::Timer(Participant::Router(n)));
        }
    }

    fn send_relay_config(&mut self, upf: NodeId, msg: CpUpMessage) {
        let n = match &msg {
            CpUpMessage::ConfigureRelay { tunnels } => tunnels.len(),
            _ => 0,
        };
        let smf = self.smf_name();
        let msr = self.msr_name(upf);
        self.record(
            "step",
            smf,
            Some(2),
            "configure-relay",
            vec![("msr", msr), ("tunnels", n.to_string())],
        );
        self.send_cpup(upf, CpUpEndpoint::Upf, CpUpPayload::Control(msg));
    }

    fn send_cpup(&mut self, upf: NodeId, to: CpUpEndpoint, payload: CpUpPayload) {
        self.queue.push(
            self.now + self.config.cpup_latency_ms,
            EventKind::CpUpDeliver { upf, to, payload },
        );
    }

    /// Schedules an arbitrary event.
    pub fn schedule(&mut self, time_ms: u64, kind: EventKind) -> Result<(), SimError> {
        if time_ms < self.now {
            return Err(SimError::TimeInPast {
                at: time_ms,
                now: self.now,
            });
        }
        self.queue.push(time_ms, kind);
        Ok(())
    }

    /// Schedules a scripted event after checking that the nodes it names
    /// exist.
    pub fn inject(&mut self, time_ms: u64, event: ScriptedEvent) -> Result<(), SimError> {
        let known = |name: &str| self.net.node_by_name(name).is_some();
        match &event {
            ScriptedEvent::LinkDown(ep)
            | ScriptedEvent::LinkUp(ep)
            | ScriptedEvent::MetricChange { endpoint: ep, .. } => {
                if !known(&ep.node) {
                    return Err(SimError::UnknownTarget(ep.node.clone()));
                }
            }
            ScriptedEvent::PduEstablish(p) => {
                for n in [&p.ue, &p.upf] {
                    if !known(n) {
                        return Err(SimError::UnknownTarget(n.clone()));
                    }
                }
            }
            ScriptedEvent::PduRelease(_) => {}
        }
        self.schedule(time_ms, event.into())
    }

    /// Processes every event due at or before `until_ms`.
    pub fn run_until(&mut self, until_ms: u64) -> RunStats {
        let mut events: BTreeMap<String, u64> = BTreeMap::new();
        while let Some((t, ev)) = self.queue.pop_due(until_ms) {
            self.now = t;
            *events.entry(ev.name().to_string()).or_default() += 1;
            self.handle(ev);
        }
        self.now = self.now.max(until_ms);
        RunStats {
            now_ms: self.now,
            events,
            quiescent: self.is_quiescent(),
        }
    }

    fn handle(&mut self, ev: EventKind) {
        match ev {
            EventKind::Timer(p) => self.on_timer(p),
            EventKind::DeliverMsg { to, bytes } => self.on_deliver(to, bytes),
            EventKind::CpUpDeliver { upf, to, payload } => self.on_cpup(upf, to, payload),
            EventKind::LinkDown(ep) => self.on_link_state(&ep, false),
            EventKind::LinkUp(ep) => self.on_link_state(&ep, true),
            EventKind::MetricChange {
                endpoint,
                metric_out,
                metric_in,
            } => self.on_metric_change(&endpoint, metric_out, metric_in),
            EventKind::PduEstablish(p) => self.on_pdu_establish(p),
            EventKind::PduRelease(id) => self.on_pdu_release(id),
        }
    }

    fn on_timer(&mut self, p: Participant) {
        let now = self.now;
        let Some(proto) = self.proto_mut(p) else {
            return;
        };
        let out = proto.tick(now);
        self.dispatch(p, out);
        self.queue
            .push(now + self.config.proto.hello_interval_ms, EventKind::Timer(p));
    }

    fn on_deliver(&mut self, to: InterfaceId, bytes: Vec<u8>) {
        if !self.net.link_of(to).is_some_and(|l| l.up) {
            self.dropped += 1;
            return;
        }
        let node = to.node;
        if self.routers.contains_key(&node) {
            self.receive(Participant::Router(node), to, &bytes);
            return;
        }
        let Some(state) = self.mobile.upf(node) else {
            return;
        };
        match self.config.approach {
            Approach::UpBased => {
                if state.routing_active {
                    self.note_exchange(node);
                    self.receive(Participant::Msr(node), to, &bytes);
                }
            }
            Approach::CpBased => match self.mobile.upf_relay_from_wire(node, to, &bytes) {
                Ok(frame) => {
                    self.note_exchange(node);
                    self.send_cpup(node, CpUpEndpoint::Smf, CpUpPayload::Gtp(frame));
                }
                Err(e) => {
                    let name = self.net.name(node).to_string();
                    self.warn(name, format!("relay dropped inbound message: {e}"));
                }
            },
        }
    }

    fn note_exchange(&mut self, upf: NodeId) {
        if self.exchanging.insert(upf) {
            let entity = self.net.name(upf).to_string();
            let msr = self.msr_name(upf);
            self.record(
                "step",
                entity,
                Some(3),
                "exchange-routing-messages",
                vec![("msr", msr)],
            );
        }
    }

    fn receive(&mut self, p: Participant, iface: InterfaceId, bytes: &[u8]) {
        let packet = match crate::proto::RoutingPacket::decode(bytes) {
            Ok(pk) => pk,
            Err(e) => {
                let entity = self.entity(p);
                self.warn(entity, e.to_string());
                return;
            }
        };
        let now = self.now;
        if let Some(proto) = self.proto_mut(p) {
            let out = proto.receive(iface, &packet, now);
            self.dispatch(p, out);
        }
    }

    fn on_cpup(&mut self, upf: NodeId, to: CpUpEndpoint, payload: CpUpPayload) {
        let upf_name = self.net.name(upf).to_string();
        let msr = self.msr_name(upf);
        match (to, payload) {
            (CpUpEndpoint::Upf, CpUpPayload::Control(CpUpMessage::ConfigureRelay { tunnels })) => {
                let _ = self.mobile.upf_apply_relay(upf, &tunnels);
                self.record(
                    "relay",
                    upf_name,
                    None,
                    "relay-installed",
                    vec![("tunnels", tunnels.len().to_string())],
                );
            }
            (CpUpEndpoint::Upf, CpUpPayload::Control(CpUpMessage::TriggerRouting)) => {
                if let Err(e) = self.mobile.upf_start_routing(upf) {
                    self.warn(upf_name, e.to_string());
                    return;
                }
                self.record("routing", upf_name, None, "routing-started", vec![("msr", msr)]);
                let now = self.now;
                let out = self.mobile.upf_mut(upf).expect("registered").msr.proto.start(now);
                self.dispatch(Participant::Msr(upf), out);
                self.queue.push(now, EventKind::Timer(Participant::Msr(upf)));
            }
            (CpUpEndpoint::Upf, CpUpPayload::Control(CpUpMessage::InstallRules { rules })) => {
                let n = rules.len();
                match self.mobile.install_rules(upf, rules) {
                    Ok(()) => {
                        self.record(
                            "step",
                            upf_name.clone(),
                            Some(6),
                            "install-rules",
                            vec![("msr", msr.clone()), ("rules", n.to_string())],
                        );
                        self.record(
                            "step",
                            upf_name,
                            Some(7),
                            "route-user-traffic",
                            vec![("msr", msr)],
                        );
                    }
                    Err(e) => self.warn(upf_name, format!("rules rejected: {e}")),
                }
            }
            (CpUpEndpoint::Upf, CpUpPayload::Gtp(frame)) => {
                match self.mobile.upf_relay_to_wire(upf, &frame) {
                    Ok(iface) => self.wire_send(iface, frame.payload),
                    Err(e) => self.warn(upf_name, format!("relay dropped outbound message: {e}")),
                }
            }
            (CpUpEndpoint::Smf, CpUpPayload::Gtp(frame)) => {
                match self.mobile.cp_receive_routing_msg(upf, &frame) {
                    Ok((iface, packet)) => {
                        let now = self.now;
                        let proto = &mut self.mobile.upf_mut(upf).expect("registered").msr.proto;
                        let out = proto.receive(iface.id, &packet, now);
                        self.dispatch(Participant::Msr(upf), out);
                    }
                    Err(e) => {
                        let smf = self.smf_name();
                        self.warn(smf, format!("tunnel message dropped: {e}"));
                    }
                }
            }
            (CpUpEndpoint::Smf, CpUpPayload::Control(CpUpMessage::ReportTable { table })) => {
                self.translate_and_install(upf, &table);
            }
            (_, CpUpPayload::Control(m)) => {
                self.warn(upf_name, format!("unexpected {} message", m.kind()));
            }
        }
    }

    /// SMF side of step 5: compile a table and ship the rules.
    fn translate_and_install(&mut self, upf: NodeId, table: &[RoutingEntry]) {
        let smf = self.smf_name();
        let msr = self.msr_name(upf);
        match self.mobile.smf_translate(upf, table) {
            Ok(t) => {
                for d in &t.diagnostics {
                    self.warn(smf.clone(), d.clone());
                }
                self.record(
                    "step",
                    smf,
                    Some(5),
                    "translate-rules",
                    vec![("msr", msr), ("rules", t.rules.len().to_string())],
                );
                self.send_cpup(
                    upf,
                    CpUpEndpoint::Upf,
                    CpUpPayload::Control(CpUpMessage::InstallRules { rules: t.rules }),
                );
            }
            Err(e) => self.warn(smf, e.to_string()),
        }
    }

    fn dispatch(&mut self, p: Participant, outputs: Vec<Output>) {
        for o in outputs {
            match o {
                Output::Send { iface, packet } => match p {
                    Participant::Router(_) => self.wire_send(iface, packet.encode()),
                    Participant::Msr(upf) => match self.config.approach {
                        Approach::UpBased => self.wire_send(iface, packet.encode()),
                        Approach::CpBased => match self.mobile.cp_send_routing_msg(upf, iface, &packet) {
                            Ok(frame) => self.send_cpup(upf, CpUpEndpoint::Upf, CpUpPayload::Gtp(frame)),
                            Err(e) => {
                                let smf = self.smf_name();
                                self.warn(smf, format!("cannot encapsulate: {e}"));
                            }
                        },
                    },
                },
                Output::Neighbor(ev) => self.log_neighbor(p, ev),
                Output::Originated { seq } => {
                    let entity = self.entity(p);
                    self.push_log(
                        "lsa",
                        entity,
                        None,
                        "lsa-originated",
                        vec![("seq", seq.to_string())],
                        true,
                    );
                }
                Output::TableChanged => self.on_table_changed(p),
            }
        }
    }

    fn log_neighbor(&mut self, p: Participant, ev: NeighborEvent) {
        let (label, id, iface) = match ev {
            NeighborEvent::Discovered(id, i) => ("neighbor-discovered", id, i),
            NeighborEvent::NewAdjacency(id, i) => ("neighbor-full", id, i),
            NeighborEvent::Downgraded(id, i) => ("neighbor-downgraded", id, i),
            NeighborEvent::Removed(id, i) => ("neighbor-removed", id, i),
            NeighborEvent::Refreshed(..) | NeighborEvent::NoChange => return,
        };
        let entity = self.entity(p);
        let iface_name = self.iface_name(p, iface);
        self.push_log(
            "neighbor",
            entity,
            None,
            label,
            vec![("neighbor", id.to_string()), ("iface", iface_name)],
            label == "neighbor-discovered",
        );
    }

    fn iface_name(&self, p: Participant, iface: InterfaceId) -> String {
        let from_msr = match p {
            Participant::Msr(u) => self
                .mobile
                .upf(u)
                .and_then(|s| s.msr.interface(iface))
                .map(|i| i.name.clone()),
            Participant::Router(_) => None,
        };
        from_msr
            .or_else(|| self.net.interface(iface).map(|i| i.name.clone()))
            .unwrap_or_else(|| format!("#{}", iface.ordinal))
    }

    fn on_table_changed(&mut self, p: Participant) {
        let routes = self.proto(p).map_or(0, |r| r.table().len());
        match p {
            Participant::Router(n) => {
                let entity = self.net.name(n).to_string();
                self.push_log(
                    "table",
                    entity,
                    None,
                    "table-changed",
                    vec![("routes", routes.to_string())],
                    true,
                );
            }
            Participant::Msr(upf) => {
                let msr = self.msr_name(upf);
                match self.config.approach {
                    Approach::CpBased => {
                        let smf = self.smf_name();
                        self.record(
                            "step",
                            smf,
                            Some(4),
                            "build-table",
                            vec![("msr", msr), ("routes", routes.to_string())],
                        );
                        let table = self.mobile.upf(upf).expect("registered").msr.table().to_vec();
                        self.translate_and_install(upf, &table);
                    }
                    Approach::UpBased => {
                        let upf_name = self.net.name(upf).to_string();
                        self.record(
                            "step",
                            upf_name.clone(),
                            Some(4),
                            "build-table",
                            vec![("msr", msr.clone()), ("routes", routes.to_string())],
                        );
                        match self.mobile.up_report_table(upf) {
                            Ok(msg) => {
                                self.record(
                                    "step",
                                    upf_name,
                                    Some(5),
                                    "report-table",
                                    vec![("msr", msr), ("routes", routes.to_string())],
                                );
                                self.send_cpup(upf, CpUpEndpoint::Smf, CpUpPayload::Control(msg));
                            }
                            Err(e) => self.warn(upf_name, e.to_string()),
                        }
                    }
                }
            }
        }
    }

    fn wire_send(&mut self, iface: InterfaceId, bytes: Vec<u8>) {
        let Some(link) = self.net.link_of(iface) else {
            self.dropped += 1;
            return;
        };
        if !link.up {
            self.dropped += 1;
            return;
        }
        if self.config.loss_rate > 0.0 && self.rng.gen::<f64>() < self.config.loss_rate {
            self.dropped += 1;
            return;
        }
        let to = link.peer(iface).expect("link joins iface");
        self.queue.push(
            self.now + self.config.link_latency_ms,
            EventKind::DeliverMsg { to, bytes },
        );
    }

    fn on_link_state(&mut self, ep: &Endpoint, up: bool) {
        let label = if up { "link-up" } else { "link-down" };
        let link = resolve_endpoint(&self.net, ep).and_then(|i| {
            self.net
                .link_of(i)
                .map(|l| l.id)
                .ok_or_else(|| format!("`{ep}` has no link"))
        });
        match link {
            Ok(id) => {
                let was = self.net.set_link_up(id, up).unwrap_or(up);
                if was == up {
                    self.warn(
                        "sim".into(),
                        format!("{label} on {ep}: link already {}", if up { "up" } else { "down" }),
                    );
                } else {
                    self.record(label, "sim".into(), None, label, vec![("link", ep.to_string())]);
                }
            }
            Err(e) => self.warn("sim".into(), format!("{label}: {e}")),
        }
    }

    fn on_metric_change(&mut self, ep: &Endpoint, metric_out: u32, metric_in: u32) {
        let res = resolve_endpoint(&self.net, ep).and_then(|i| {
            self.net
                .set_metrics(i, metric_out, metric_in)
                .map_err(|e| e.to_string())
        });
        match res {
            Ok(id) => {
                self.record(
                    "metric-change",
                    "sim".into(),
                    None,
                    "metric-change",
                    vec![
                        ("link", ep.to_string()),
                        ("out", metric_out.to_string()),
                        ("in", metric_in.to_string()),
                    ],
                );
                let link = self.net.link(id).expect("just set").clone();
                self.refresh_iface(link.a);
                self.refresh_iface(link.b);
            }
            Err(e) => self.warn("sim".into(), format!("metric-change: {e}")),
        }
    }

    /// Pushes the model's view of an interface into whichever protocol
    /// instance owns it.
    fn refresh_iface(&mut self, iface: InterfaceId) {
        let Some(pi) = proto_iface(&self.net, iface) else {
            return;
        };
        let now = self.now;
        let p = if self.routers.contains_key(&iface.node) {
            Participant::Router(iface.node)
        } else if self
            .mobile
            .upf(iface.node)
            .is_some_and(|s| s.msr.interface(iface).is_some())
        {
            Participant::Msr(iface.node)
        } else {
            return;
        };
        let out = self.proto_mut(p).expect("exists").upsert_interface(pi, now);
        self.dispatch(p, out);
    }

    fn on_pdu_establish(&mut self, decl: crate::net::scenario::PduDecl) {
        let ue = self.net.node_by_name(&decl.ue).map(|n| n.id);
        let upf = self.net.node_by_name(&decl.upf).map(|n| n.id);
        let (Some(ue), Some(upf)) = (ue, upf) else {
            self.warn(
                "sim".into(),
                format!("pdu-establish: unknown node in {} {}", decl.ue, decl.upf),
            );
            return;
        };
        let res = self.mobile.establish_pdu_session(
            &mut self.net,
            ue,
            upf,
            decl.ue_addr,
            decl.ue_subnet,
            decl.metric_up,
            decl.metric_down,
        );
        let sid = match res {
            Ok(sid) => sid,
            Err(e) => {
                let smf = self.smf_name();
                self.warn(smf, format!("pdu-establish rejected: {e}"));
                return;
            }
        };
        let s = self.mobile.session(sid).expect("just created").clone();
        let smf = self.smf_name();
        self.record(
            "pdu",
            smf,
            None,
            "pdu-establish",
            vec![
                ("session", sid.to_string()),
                ("ue", decl.ue.clone()),
                ("upf", decl.upf.clone()),
                ("iface", crate::msr::session_iface_name(sid)),
                ("reserved", s.reserved_addr.to_string()),
            ],
        );
        if self.config.approach == Approach::CpBased {
            if let Ok(msg) = self.mobile.cp_configure_relay(upf) {
                self.send_relay_config(upf, msg);
            }
        }
        self.refresh_iface(s.upf_iface);
        self.refresh_iface(s.ue_iface);
    }

    fn on_pdu_release(&mut self, id: crate::mobile::SessionId) {
        let s = match self.mobile.release_pdu_session(&mut self.net, id) {
            Ok(s) => s,
            Err(e) => {
                self.warn("sim".into(), format!("pdu-release: {e}"));
                return;
            }
        };
        let smf = self.smf_name();
        self.record("pdu", smf, None, "pdu-release", vec![("session", id.to_string())]);
        if self.config.approach == Approach::CpBased {
            if let Ok(msg) = self.mobile.cp_configure_relay(s.upf) {
                self.send_relay_config(s.upf, msg);
            }
        }
        let now = self.now;
        let out = self
            .mobile
            .upf_mut(s.upf)
            .expect("registered")
            .msr
            .proto
            .remove_interface(s.upf_iface, now);
        self.dispatch(Participant::Msr(s.upf), out);
        if let Some(r) = self.routers.get_mut(&s.ue) {
            let out = r.remove_interface(s.ue_iface, now);
            self.dispatch(Participant::Router(s.ue), out);
        }
    }

    /// No routing work outstanding: only hellos and timers queued, every
    /// neighbor Full and recently heard, every UPF running the rules its
    /// table compiles to.
    pub fn is_quiescent(&self) -> bool {
        for (_, ev) in self.queue.iter() {
            let idle = match ev {
                EventKind::Timer(_) => true,
                EventKind::DeliverMsg { bytes, .. } => is_hello(bytes),
                EventKind::CpUpDeliver {
                    payload: CpUpPayload::Gtp(f),
                    ..
                } => is_hello(&f.payload),
                EventKind::CpUpDeliver { .. } => false,
                _ => ev.is_scripted(),
            };
            if !idle {
                return false;
            }
        }
        let fresh = 2 * self.config.proto.hello_interval_ms;
        for (_, p) in self.participants() {
            let proto = self.proto(p).expect("listed");
            if let Participant::Msr(u) = p {
                if self.config.approach == Approach::UpBased
                    && !self.mobile.upf(u).is_some_and(|s| s.routing_active)
                {
                    return false;
                }
            }
            for n in proto.neighbors() {
                if n.state != NeighborState::Full || self.now.saturating_sub(n.last_heard_ms) > fresh {
                    return false;
                }
            }
        }
        for u in self.mobile.upfs() {
            match self.mobile.smf_translate(u.node, u.msr.table()) {
                Ok(t) if t.rules == u.rules => {}
                _ => return false,
            }
        }
        true
    }

    /// Model invariants, plus LSDB agreement inside each connected group of
    /// protocol instances once the run is quiescent.
    pub fn audit(&self) -> Vec<String> {
        let mut problems = self.net.audit();
        problems.extend(self.mobile.audit(&self.net));
        if self.is_quiescent() {
            problems.extend(self.audit_lsdb());
        }
        problems
    }

    fn participant_of(&self, node: NodeId) -> Option<Participant> {
        if self.routers.contains_key(&node) {
            Some(Participant::Router(node))
        } else if self.mobile.upf(node).is_some() {
            Some(Participant::Msr(node))
        } else {
            None
        }
    }

    fn audit_lsdb(&self) -> Vec<String> {
        let mut adj: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for l in self.net.links().filter(|l| l.up) {
            let (a, b) = (l.a.node, l.b.node);
            if self.participant_of(a).is_some() && self.participant_of(b).is_some() {
                adj.entry(a).or_default().push(b);
                adj.entry(b).or_default().push(a);
            }
        }
        let mut seen = BTreeSet::new();
        let mut problems = Vec::new();
        let all: Vec<NodeId> = self
            .participants()
            .iter()
            .map(|(_, p)| match p {
                Participant::Router(n) | Participant::Msr(n) => *n,
            })
            .collect();
        for start in all {
            if !seen.insert(start) {
                continue;
            }
            let mut group = vec![start];
            let mut todo = VecDeque::from([start]);
            while let Some(n) = todo.pop_front() {
                for m in adj.get(&n).into_iter().flatten() {
                    if seen.insert(*m) {
                        group.push(*m);
                        todo.push_back(*m);
                    }
                }
            }
            let dbs: Vec<(NodeId, Vec<_>)> = group
                .iter()
                .filter_map(|n| {
                    let p = self.participant_of(*n)?;
                    Some((*n, self.proto(p)?.lsdb().iter().cloned().collect::<Vec<_>>()))
                })
                .collect();
            if let Some((first, db)) = dbs.first() {
                for (n, other) in &dbs[1..] {
                    if other != db {
                        problems.push(format!(
                            "LSDB of {} differs from {}",
                            self.net.name(*n),
                            self.net.name(*first)
                        ));
                    }
                }
            }
        }
        problems
    }

    fn rows(&self, p: Participant, entries: &[RoutingEntry]) -> Vec<RouteRow> {
        let hosts: Vec<(String, crate::net::IpAddress)> = self
            .net
            .nodes()
            .filter(|n| n.kind() == NodeKind::Host)
            .flat_map(|n| n.interfaces.iter().map(|i| (n.name.clone(), i.address)))
            .collect();
        entries
            .iter()
            .map(|e| RouteRow {
                destination: e.destination,
                hosts: hosts
                    .iter()
                    .filter(|(_, a)| e.destination.contains(*a))
                    .cloned()
                    .collect(),
                next_hop: e.next_hop,
                next_hop_node: self
                    .net
                    .owner_of(e.next_hop)
                    .map(|n| self.net.name(n).to_string()),
                interface: self.iface_name(p, e.destination_interface),
                metric: e.metric,
            })
            .collect()
    }

    /// Best routes, or every candidate with `all`.
    pub fn route_rows(&self, name: &str, all: bool) -> Option<Vec<RouteRow>> {
        let p = self.participant(name)?;
        let proto = self.proto(p)?;
        let entries = if all {
            proto.candidates()
        } else {
            proto.table().to_vec()
        };
        Some(self.rows(p, &entries))
    }

    pub fn data_plane(&self) -> DataPlane {
        let fibs = self
            .net
            .nodes()
            .map(|n| {
                let fib = if let Some(r) = self.routers.get(&n.id) {
                    Fib::Router(r.table().to_vec())
                } else if let Some(u) = self.mobile.upf(n.id) {
                    Fib::Upf(u.rules.clone())
                } else {
                    default_fib(n.kind())
                };
                (n.id, fib)
            })
            .collect();
        DataPlane {
            network: self.net.clone(),
            fibs,
        }
    }

    pub fn snapshot(&self) -> Snapshot {
        let routes = self
            .participants()
            .into_iter()
            .map(|(name, _)| {
                let best = self.route_rows(&name, false).unwrap_or_default();
                let all = self.route_rows(&name, true).unwrap_or_default();
                (name, RouterRoutes { best, all })
            })
            .collect();
        Snapshot {
            approach: self.config.approach,
            now_ms: self.now,
            quiescent: self.is_quiescent(),
            audit: self.audit(),
            routes,
            aliases: self
                .mobile
                .upfs()
                .map(|u| (self.net.name(u.node).to_string(), u.msr.name.clone()))
                .collect(),
            data_plane: self.data_plane(),
        }
    }
}
