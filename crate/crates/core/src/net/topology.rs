use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::addr::{IpAddress, IpPrefix};

pub const METRIC_MIN: u32 = 1;
pub const METRIC_MAX: u32 = 65535;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NodeId({})", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LinkId(pub u32);

/// Interface identifier: owning node plus a per-node ordinal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct InterfaceId {
    pub node: NodeId,
    pub ordinal: u32,
}

impl InterfaceId {
    pub fn new(node: NodeId, ordinal: u32) -> Self {
        InterfaceId { node, ordinal }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Host,
    ExternalRouter,
    UeRouter,
    N6Router,
    Ue,
    Upf,
    Smf,
}

impl NodeKind {
    /// Nodes that run their own link-state protocol instance. UPFs take part
    /// through their MS-Router instead.
    pub fn is_external_router(self) -> bool {
        matches!(
            self,
            NodeKind::ExternalRouter | NodeKind::UeRouter | NodeKind::N6Router | NodeKind::Ue
        )
    }

    pub fn keyword(self) -> &'static str {
        match self {
            NodeKind::Host => "host",
            NodeKind::ExternalRouter => "router",
            NodeKind::UeRouter => "ue-router",
            NodeKind::N6Router => "n6-router",
            NodeKind::Ue => "ue",
            NodeKind::Upf => "upf",
            NodeKind::Smf => "smf",
        }
    }
}

impl FromStr for NodeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "host" => NodeKind::Host,
            "router" => NodeKind::ExternalRouter,
            "ue-router" => NodeKind::UeRouter,
            "n6-router" => NodeKind::N6Router,
            "ue" => NodeKind::Ue,
            "upf" => NodeKind::Upf,
            "smf" => NodeKind::Smf,
            other => return Err(format!("unknown node kind `{other}`")),
        })
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interface {
    pub id: InterfaceId,
    pub address: IpAddress,
    pub subnet: IpPrefix,
    pub name: String,
    pub admin_up: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub name: String,
    kind: NodeKind,
    pub interfaces: Vec<Interface>,
    next_ordinal: u32,
}

impl Node {
    pub fn kind(&self) -> NodeKind {
        self.kind
    }

    pub fn interface(&self, id: InterfaceId) -> Option<&Interface> {
        self.interfaces.iter().find(|i| i.id == id)
    }

    pub fn owns_address(&self, addr: IpAddress) -> bool {
        self.interfaces.iter().any(|i| i.address == addr)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub id: LinkId,
    pub a: InterfaceId,
    pub b: InterfaceId,
    pub metric_ab: u32,
    pub metric_ba: u32,
    pub up: bool,
}

impl Link {
    /// Cost of sending out of `from` across this link.
    pub fn egress_metric(&self, from: InterfaceId) -> Option<u32> {
        if from == self.a {
            Some(self.metric_ab)
        } else if from == self.b {
            Some(self.metric_ba)
        } else {
            None
        }
    }

    pub fn peer(&self, of: InterfaceId) -> Option<InterfaceId> {
        if of == self.a {
            Some(self.b)
        } else if of == self.b {
            Some(self.a)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("duplicate node name `{0}`")]
    DuplicateName(String),
    #[error("unknown node {0:?}")]
    UnknownNode(NodeId),
    #[error("unknown interface {0:?}")]
    UnknownInterface(InterfaceId),
    #[error("unknown link {0:?}")]
    UnknownLink(LinkId),
    #[error("interface ordinal {1} already used on node `{0}`")]
    DuplicateOrdinal(String, u32),
    #[error("address {0} already in use")]
    AddressInUse(IpAddress),
    #[error("address {0} is a network or broadcast address of {1}")]
    AddressNotHost(IpAddress, IpPrefix),
    #[error("host `{0}` already has an interface")]
    HostInterfaceLimit(String),
    #[error("UPF interfaces are created through the mobile system, not directly (node `{0}`)")]
    UpfInterfaceReserved(String),
    #[error("node `{0}` of kind {1} cannot carry interfaces")]
    NoInterfaces(String, NodeKind),
    #[error("link endpoints in different subnets: {0} vs {1}")]
    SubnetMismatch(IpPrefix, IpPrefix),
    #[error("metric {0} outside [1, 65535]")]
    MetricOutOfRange(u32),
    #[error("interface {0:?} already has a link")]
    InterfaceBusy(InterfaceId),
    #[error("a link cannot connect a node to itself")]
    SelfLoop,
}

pub fn check_metric(metric: u32) -> Result<u32, ModelError> {
    if (METRIC_MIN..=METRIC_MAX).contains(&metric) {
        Ok(metric)
    } else {
        Err(ModelError::MetricOutOfRange(metric))
    }
}

/// Static and dynamic topology: nodes, interfaces and point-to-point links.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Network {
    nodes: Vec<Node>,
    links: BTreeMap<LinkId, Link>,
    by_name: BTreeMap<String, NodeId>,
    #[serde(with = "pairs")]
    by_iface: BTreeMap<InterfaceId, LinkId>,
    next_link: u32,
}

/// Maps with struct keys serialize as lists of pairs.
mod pairs {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<K: Serialize, V: Serialize, S: Serializer>(
        map: &BTreeMap<K, V>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        s.collect_seq(map.iter())
    }

    pub fn deserialize<'de, K, V, D>(d: D) -> Result<BTreeMap<K, V>, D::Error>
    where
        K: Deserialize<'de> + Ord,
        V: Deserialize<'de>,
        D: Deserializer<'de>,
    {
        Ok(Vec::<(K, V)>::deserialize(d)?.into_iter().collect())
    }
}

impl Network {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, kind: NodeKind, name: &str) -> Result<NodeId, ModelError> {
        if self.by_name.contains_key(name) {
            return Err(ModelError::DuplicateName(name.to_string()));
        }
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(Node {
            id,
            name: name.to_string(),
            kind,
            interfaces: Vec::new(),
            next_ordinal: 1,
        });
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter()
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(id.0 as usize)
    }

    pub fn node_by_name(&self, name: &str) -> Option<&Node> {
        self.by_name.get(name).and_then(|id| self.node(*id))
    }

    pub fn name(&self, id: NodeId) -> &str {
        self.node(id).map(|n| n.name.as_str()).unwrap_or("?")
    }

    pub fn interface(&self, id: InterfaceId) -> Option<&Interface> {
        self.node(id.node).and_then(|n| n.interface(id))
    }

    pub fn interface_by_name(&self, node: NodeId, name: &str) -> Option<&Interface> {
        self.node(node)?.interfaces.iter().find(|i| i.name == name)
    }

    pub fn interfaces(&self) -> impl Iterator<Item = &Interface> {
        self.nodes.iter().flat_map(|n| n.interfaces.iter())
    }

    pub fn links(&self) -> impl Iterator<Item = &Link> {
        self.links.values()
    }

    pub fn link(&self, id: LinkId) -> Option<&Link> {
        self.links.get(&id)
    }

    pub fn link_of(&self, iface: InterfaceId) -> Option<&Link> {
        self.by_iface.get(&iface).and_then(|l| self.links.get(l))
    }

    pub fn peer(&self, iface: InterfaceId) -> Option<InterfaceId> {
        self.link_of(iface).and_then(|l| l.peer(iface))
    }

    pub fn address_in_use(&self, addr: IpAddress) -> bool {
        self.interfaces().any(|i| i.address == addr)
    }

    pub fn owner_of(&self, addr: IpAddress) -> Option<NodeId> {
        self.interfaces().find(|i| i.address == addr).map(|i| i.id.node)
    }

    /// Adds an interface to a non-UPF node. UPF interfaces come from N6
    /// attachment or PDU session establishment in the mobile system.
    pub fn add_interface(
        &mut self,
        node: NodeId,
        ordinal: Option<u32>,
        address: IpAddress,
        subnet: IpPrefix,
    ) -> Result<InterfaceId, ModelError> {
        let n = self.node(node).ok_or(ModelError::UnknownNode(node))?;
        match n.kind {
            NodeKind::Upf => return Err(ModelError::UpfInterfaceReserved(n.name.clone())),
            NodeKind::Smf => return Err(ModelError::NoInterfaces(n.name.clone(), n.kind)),
            NodeKind::Host if !n.interfaces.is_empty() => {
                return Err(ModelError::HostInterfaceLimit(n.name.clone()))
            }
            _ => {}
        }
        self.insert_interface(node, ordinal, address, subnet, None)
    }

    /// Interface creation without the UPF guard; the name defaults to
    /// `eth<ordinal>`.
    pub(crate) fn insert_interface(
        &mut self,
        node: NodeId,
        ordinal: Option<u32>,
        address: IpAddress,
        subnet: IpPrefix,
        name: Option<String>,
    ) -> Result<InterfaceId, ModelError> {
        if !subnet.contains(address) {
            return Err(ModelError::AddressNotHost(address, subnet));
        }
        let broadcast = subnet.base().to_u32() | (u32::MAX >> subnet.len().min(31));
        if subnet.len() < 31 && (address == subnet.base() || address.to_u32() == broadcast) {
            return Err(ModelError::AddressNotHost(address, subnet));
        }
        if self.address_in_use(address) {
            return Err(ModelError::AddressInUse(address));
        }
        let n = self
            .nodes
            .get_mut(node.0 as usize)
            .ok_or(ModelError::UnknownNode(node))?;
        let ordinal = ordinal.unwrap_or(n.next_ordinal);
        if n.interfaces.iter().any(|i| i.id.ordinal == ordinal) {
            return Err(ModelError::DuplicateOrdinal(n.name.clone(), ordinal));
        }
        n.next_ordinal = n.next_ordinal.max(ordinal + 1);
        let id = InterfaceId::new(node, ordinal);
        n.interfaces.push(Interface {
            id,
            address,
            subnet,
            name: name.unwrap_or_else(|| format!("eth{ordinal}")),
            admin_up: true,
        });
        n.interfaces.sort_by_key(|i| i.id.ordinal);
        Ok(id)
    }

    /// Removes an interface together with its link, if any.
    pub(crate) fn remove_interface(&mut self, id: InterfaceId) -> Result<Interface, ModelError> {
        if let Some(link) = self.by_iface.get(&id).copied() {
            self.remove_link(link)?;
        }
        let n = self
            .nodes
            .get_mut(id.node.0 as usize)
            .ok_or(ModelError::UnknownNode(id.node))?;
        let pos = n
            .interfaces
            .iter()
            .position(|i| i.id == id)
            .ok_or(ModelError::UnknownInterface(id))?;
        Ok(n.interfaces.remove(pos))
    }

    pub fn add_link(
        &mut self,
        a: InterfaceId,
        b: InterfaceId,
        metric_ab: u32,
        metric_ba: u32,
    ) -> Result<LinkId, ModelError> {
        let ia = self.interface(a).ok_or(ModelError::UnknownInterface(a))?;
        let ib = self.interface(b).ok_or(ModelError::UnknownInterface(b))?;
        if a.node == b.node {
            return Err(ModelError::SelfLoop);
        }
        if ia.subnet != ib.subnet {
            return Err(ModelError::SubnetMismatch(ia.subnet, ib.subnet));
        }
        check_metric(metric_ab)?;
        check_metric(metric_ba)?;
        for end in [a, b] {
            if self.by_iface.contains_key(&end) {
                return Err(ModelError::InterfaceBusy(end));
            }
        }
        let id = LinkId(self.next_link);
        self.next_link += 1;
        self.links.insert(
            id,
            Link {
                id,
                a,
                b,
                metric_ab,
                metric_ba,
                up: true,
            },
        );
        self.by_iface.insert(a, id);
        self.by_iface.insert(b, id);
        Ok(id)
    }

    pub(crate) fn remove_link(&mut self, id: LinkId) -> Result<Link, ModelError> {
        let link = self.links.remove(&id).ok_or(ModelError::UnknownLink(id))?;
        self.by_iface.remove(&link.a);
        self.by_iface.remove(&link.b);
        Ok(link)
    }

    /// Changes the link state; returns the previous state.
    pub(crate) fn set_link_up(&mut self, id: LinkId, up: bool) -> Result<bool, ModelError> {
        let link = self.links.get_mut(&id).ok_or(ModelError::UnknownLink(id))?;
        Ok(std::mem::replace(&mut link.up, up))
    }

    /// Sets per-direction metrics, with `from` naming the `ab` side.
    pub(crate) fn set_metrics(
        &mut self,
        from: InterfaceId,
        metric_out: u32,
        metric_in: u32,
    ) -> Result<LinkId, ModelError> {
        check_metric(metric_out)?;
        check_metric(metric_in)?;
        let id = *self
            .by_iface
            .get(&from)
            .ok_or(ModelError::UnknownInterface(from))?;
        let link = self.links.get_mut(&id).ok_or(ModelError::UnknownLink(id))?;
        if link.a == from {
            link.metric_ab = metric_out;
            link.metric_ba = metric_in;
        } else {
            link.metric_ba = metric_out;
            link.metric_ab = metric_in;
        }
        Ok(id)
    }

    /// Structural audit of the model invariants. Returns one message per
    /// violation.
    pub fn audit(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let mut seen = BTreeMap::new();
        for iface in self.interfaces() {
            if !iface.subnet.contains(iface.address) {
                problems.push(format!("{} not in {}", iface.address, iface.subnet));
            }
            if let Some(prev) = seen.insert(iface.address, iface.id) {
                problems.push(format!(
                    "address {} shared by {:?} and {:?}",
                    iface.address, prev, iface.id
                ));
            }
        }
        for n in &self.nodes {
            if n.kind == NodeKind::Host && n.interfaces.len() != 1 {
                problems.push(format!("host `{}` has {} interfaces", n.name, n.interfaces.len()));
            }
        }
        for link in self.links.values() {
            match (self.interface(link.a), self.interface(link.b)) {
                (Some(a), Some(b)) => {
                    if a.subnet != b.subnet {
                        problems.push(format!("link {:?} spans {} and {}", link.id, a.subnet, b.subnet));
                    }
                }
                _ => problems.push(format!("link {:?} has a dangling endpoint", link.id)),
            }
        }
        problems
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn addr(s: &str) -> (IpAddress, IpPrefix) {
        super::super::addr::parse_cidr_address(s).unwrap()
    }

    #[test]
    fn add_node_allocates_sequentially() {
        let mut net = Network::new();
        assert_eq!(net.add_node(NodeKind::Host, "host1").unwrap(), NodeId(0));
        let upf = net.add_node(NodeKind::Upf, "upf1").unwrap();
        assert_eq!(upf, NodeId(1));
        assert!(net.node(upf).unwrap().interfaces.is_empty());
        assert_eq!(
            net.add_node(NodeKind::Host, "host1"),
            Err(ModelError::DuplicateName("host1".into()))
        );
    }

    #[test]
    fn add_link_checks_subnet_and_metric() {
        let mut net = Network::new();
        let r1 = net.add_node(NodeKind::ExternalRouter, "r1").unwrap();
        let r2 = net.add_node(NodeKind::ExternalRouter, "r2").unwrap();
        let (a1, s1) = addr("172.16.2.1/24");
        let (a2, s2) = addr("172.16.2.2/24");
        let (a3, s3) = addr("172.16.3.2/24");
        let i1 = net.add_interface(r1, None, a1, s1).unwrap();
        let i2 = net.add_interface(r2, None, a2, s2).unwrap();
        let i3 = net.add_interface(r2, None, a3, s3).unwrap();
        assert_eq!(net.add_link(i1, i2, 0, 10), Err(ModelError::MetricOutOfRange(0)));
        assert_eq!(
            net.add_link(i1, i2, 10, 65536),
            Err(ModelError::MetricOutOfRange(65536))
        );
        assert!(matches!(
            net.add_link(i1, i3, 10, 10),
            Err(ModelError::SubnetMismatch(..))
        ));
        let l = net.add_link(i1, i2, 10, 10).unwrap();
        assert!(net.link(l).unwrap().up);
        assert_eq!(net.peer(i1), Some(i2));
        assert_eq!(net.link(l).unwrap().egress_metric(i2), Some(10));
        assert!(matches!(
            net.add_link(i1, i2, 1, 1),
            Err(ModelError::InterfaceBusy(_))
        ));
    }

    #[test]
    fn interface_rules() {
        let mut net = Network::new();
        let h = net.add_node(NodeKind::Host, "h").unwrap();
        let upf = net.add_node(NodeKind::Upf, "upf").unwrap();
        let r = net.add_node(NodeKind::ExternalRouter, "r").unwrap();
        let (a, s) = addr("10.0.0.1/24");
        net.add_interface(h, None, a, s).unwrap();
        let (b, s2) = addr("10.0.1.1/24");
        assert!(matches!(
            net.add_interface(h, None, b, s2),
            Err(ModelError::HostInterfaceLimit(_))
        ));
        assert!(matches!(
            net.add_interface(upf, None, b, s2),
            Err(ModelError::UpfInterfaceReserved(_))
        ));
        assert_eq!(net.add_interface(r, None, a, s), Err(ModelError::AddressInUse(a)));
        let (net_addr, s3) = addr("10.0.2.0/24");
        assert!(matches!(
            net.add_interface(r, None, net_addr, s3),
            Err(ModelError::AddressNotHost(..))
        ));
        assert!(net.audit().is_empty());
    }

    #[test]
    fn remove_interface_drops_link() {
        let mut net = Network::new();
        let r1 = net.add_node(NodeKind::ExternalRouter, "r1").unwrap();
        let r2 = net.add_node(NodeKind::ExternalRouter, "r2").unwrap();
        let (a1, s) = addr("10.0.0.1/24");
        let (a2, _) = addr("10.0.0.2/24");
        let i1 = net.add_interface(r1, Some(3), a1, s).unwrap();
        let i2 = net.add_interface(r2, None, a2, s).unwrap();
        net.add_link(i1, i2, 5, 6).unwrap();
        net.remove_interface(i1).unwrap();
        assert_eq!(net.links().count(), 0);
        assert!(net.link_of(i2).is_none());
        assert!(!net.address_in_use(a1));
        // ordinals are not reused
        let i = net.add_interface(r1, None, a1, s).unwrap();
        assert_eq!(i.ordinal, 4);
    }
}
