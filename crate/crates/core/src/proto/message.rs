//! Protocol messages and their on-wire byte encoding.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::ProtoError;
use crate::net::{IpAddress, IpPrefix};

/// 32-bit router identifier, printed in dotted form.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RouterId(pub u32);

impl From<IpAddress> for RouterId {
    fn from(a: IpAddress) -> Self {
        RouterId(a.to_u32())
    }
}

impl fmt::Display for RouterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        IpAddress::from_u32(self.0).fmt(f)
    }
}

impl fmt::Debug for RouterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RouterId({self})")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HelloMsg {
    pub sender: RouterId,
    pub sender_addr: IpAddress,
    pub seen_neighbors: Vec<RouterId>,
    pub hello_interval_ms: u32,
    pub dead_interval_ms: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LsaEntry {
    Adjacency { neighbor: RouterId, metric: u32 },
    Prefix { prefix: IpPrefix, metric: u32 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lsa {
    pub origin: RouterId,
    pub seq: u32,
    pub entries: Vec<LsaEntry>,
    pub originated_at_ms: u64,
}

impl Lsa {
    pub fn adjacencies(&self) -> impl Iterator<Item = (RouterId, u32)> + '_ {
        self.entries.iter().filter_map(|e| match *e {
            LsaEntry::Adjacency { neighbor, metric } => Some((neighbor, metric)),
            _ => None,
        })
    }

    pub fn prefixes(&self) -> impl Iterator<Item = (IpPrefix, u32)> + '_ {
        self.entries.iter().filter_map(|e| match *e {
            LsaEntry::Prefix { prefix, metric } => Some((prefix, metric)),
            _ => None,
        })
    }

    pub fn lists_neighbor(&self, id: RouterId) -> bool {
        self.adjacencies().any(|(n, _)| n == id)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProtoMessage {
    Hello(HelloMsg),
    LsUpdate(Vec<Lsa>),
}

impl ProtoMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            ProtoMessage::Hello(_) => "hello",
            ProtoMessage::LsUpdate(_) => "ls-update",
        }
    }
}

/// A routing message as it appears on a link: source address plus body.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingPacket {
    pub src: IpAddress,
    pub msg: ProtoMessage,
}

const WIRE_VERSION: u8 = 1;
const TYPE_HELLO: u8 = 1;
const TYPE_LS_UPDATE: u8 = 4;
const ENTRY_ADJ: u8 = 1;
const ENTRY_PREFIX: u8 = 2;

impl RoutingPacket {
    /// Big-endian encoding:
    /// `version:u8 type:u8 src:u32` followed by the typed body.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64);
        out.push(WIRE_VERSION);
        match &self.msg {
            ProtoMessage::Hello(h) => {
                out.push(TYPE_HELLO);
                out.extend(self.src.to_u32().to_be_bytes());
                out.extend(h.sender.0.to_be_bytes());
                out.extend(h.sender_addr.to_u32().to_be_bytes());
                out.extend(h.hello_interval_ms.to_be_bytes());
                out.extend(h.dead_interval_ms.to_be_bytes());
                out.extend((h.seen_neighbors.len() as u16).to_be_bytes());
                for n in &h.seen_neighbors {
                    out.extend(n.0.to_be_bytes());
                }
            }
            ProtoMessage::LsUpdate(lsas) => {
                out.push(TYPE_LS_UPDATE);
                out.extend(self.src.to_u32().to_be_bytes());
                out.extend((lsas.len() as u16).to_be_bytes());
                for lsa in lsas {
                    out.extend(lsa.origin.0.to_be_bytes());
                    out.extend(lsa.seq.to_be_bytes());
                    out.extend(lsa.originated_at_ms.to_be_bytes());
                    out.extend((lsa.entries.len() as u16).to_be_bytes());
                    for e in &lsa.entries {
                        match *e {
                            LsaEntry::Adjacency { neighbor, metric } => {
                                out.push(ENTRY_ADJ);
                                out.extend(neighbor.0.to_be_bytes());
                                out.extend(metric.to_be_bytes());
                            }
                            LsaEntry::Prefix { prefix, metric } => {
                                out.push(ENTRY_PREFIX);
                                out.extend(prefix.base().to_u32().to_be_bytes());
                                out.push(prefix.len());
                                out.extend(metric.to_be_bytes());
                            }
                        }
                    }
                }
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<RoutingPacket, ProtoError> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.u8()? != WIRE_VERSION {
            return Err(ProtoError::Malformed("unknown version".into()));
        }
        let ty = r.u8()?;
        let src = IpAddress::from_u32(r.u32()?);
        let msg = match ty {
            TYPE_HELLO => {
                let sender = RouterId(r.u32()?);
                let sender_addr = IpAddress::from_u32(r.u32()?);
                let hello_interval_ms = r.u32()?;
                let dead_interval_ms = r.u32()?;
                let n = r.u16()?;
                let seen_neighbors = (0..n).map(|_| r.u32().map(RouterId)).collect::<Result<_, _>>()?;
                ProtoMessage::Hello(HelloMsg {
                    sender,
                    sender_addr,
                    seen_neighbors,
                    hello_interval_ms,
                    dead_interval_ms,
                })
            }
            TYPE_LS_UPDATE => {
                let count = r.u16()?;
                let mut lsas = Vec::with_capacity(count as usize);
                for _ in 0..count {
                    let origin = RouterId(r.u32()?);
                    let seq = r.u32()?;
                    let originated_at_ms = r.u64()?;
                    let n = r.u16()?;
                    let mut entries = Vec::with_capacity(n as usize);
                    for _ in 0..n {
                        entries.push(match r.u8()? {
                            ENTRY_ADJ => LsaEntry::Adjacency {
                                neighbor: RouterId(r.u32()?),
                                metric: r.u32()?,
                            },
                            ENTRY_PREFIX => {
                                let base = IpAddress::from_u32(r.u32()?);
                                let len = r.u8()?;
                                let prefix = IpPrefix::new(base, len)
                                    .map_err(|e| ProtoError::Malformed(e.to_string()))?;
                                LsaEntry::Prefix {
                                    prefix,
                                    metric: r.u32()?,
                                }
                            }
                            t => return Err(ProtoError::Malformed(format!("entry type {t}"))),
                        });
                    }
                    lsas.push(Lsa {
                        origin,
                        seq,
                        entries,
                        originated_at_ms,
                    });
                }
                ProtoMessage::LsUpdate(lsas)
            }
            t => return Err(ProtoError::Malformed(format!("message type {t}"))),
        };
        if r.pos != bytes.len() {
            return Err(ProtoError::Malformed("trailing bytes".into()));
        }
        Ok(RoutingPacket { src, msg })
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], ProtoError> {
        let end = self.pos + N;
        let bytes = self
            .buf
            .get(self.pos..end)
            .ok_or_else(|| ProtoError::Malformed("truncated".into()))?;
        self.pos = end;
        Ok(bytes.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8, ProtoError> {
        Ok(self.take::<1>()?[0])
    }

    fn u16(&mut self) -> Result<u16, ProtoError> {
        Ok(u16::from_be_bytes(self.take()?))
    }

    fn u32(&mut self) -> Result<u32, ProtoError> {
        Ok(u32::from_be_bytes(self.take()?))
    }

    fn u64(&mut self) -> Result<u64, ProtoError> {
        Ok(u64::from_be_bytes(self.take()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_entry() -> impl Strategy<Value = LsaEntry> {
        prop_oneof![
            (any::<u32>(), 1u32..=65535).prop_map(|(n, m)| LsaEntry::Adjacency {
                neighbor: RouterId(n),
                metric: m
            }),
            (any::<u32>(), 0u8..=32, 0u32..=65535).prop_map(|(b, l, m)| LsaEntry::Prefix {
                prefix: IpPrefix::covering(IpAddress::from_u32(b), l).unwrap(),
                metric: m
            }),
        ]
    }

    fn arb_packet() -> impl Strategy<Value = RoutingPacket> {
        let hello = (
            any::<u32>(),
            any::<u32>(),
            prop::collection::vec(any::<u32>(), 0..6),
            1u32..5000,
        )
            .prop_map(|(s, a, seen, hi)| {
                ProtoMessage::Hello(HelloMsg {
                    sender: RouterId(s),
                    sender_addr: IpAddress::from_u32(a),
                    seen_neighbors: seen.into_iter().map(RouterId).collect(),
                    hello_interval_ms: hi,
                    dead_interval_ms: hi * 4,
                })
            });
        let lsa = (
            any::<u32>(),
            any::<u32>(),
            any::<u64>(),
            prop::collection::vec(arb_entry(), 0..8),
        )
            .prop_map(|(o, seq, t, entries)| Lsa {
                origin: RouterId(o),
                seq,
                entries,
                originated_at_ms: t,
            });
        let update = prop::collection::vec(lsa, 0..4).prop_map(ProtoMessage::LsUpdate);
        (any::<u32>(), prop_oneof![hello, update]).prop_map(|(src, msg)| RoutingPacket {
            src: IpAddress::from_u32(src),
            msg,
        })
    }

    proptest! {
        #[test]
        fn wire_round_trip(pkt in arb_packet()) {
            let bytes = pkt.encode();
            prop_assert_eq!(RoutingPacket::decode(&bytes).unwrap(), pkt);
        }

        #[test]
        fn truncation_is_rejected(pkt in arb_packet(), cut in 1usize..8) {
            let bytes = pkt.encode();
            let cut = cut.min(bytes.len());
            prop_assert!(RoutingPacket::decode(&bytes[..bytes.len() - cut]).is_err());
        }
    }

    #[test]
    fn garbage_is_rejected() {
        assert!(RoutingPacket::decode(&[]).is_err());
        assert!(RoutingPacket::decode(&[1, 9, 0, 0, 0, 0]).is_err());
        assert!(RoutingPacket::decode(&[2, 1, 0, 0, 0, 0]).is_err());
    }
}
