//! IPv4 addressing primitives.

use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AddrError {
    #[error("invalid IPv4 address `{0}`")]
    BadAddress(String),
    #[error("invalid prefix length `{0}`")]
    BadLength(String),
    #[error("prefix {0} has host bits set")]
    HostBitsSet(String),
}

/// A 32-bit IPv4 address.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct IpAddress(u32);

impl IpAddress {
    pub const UNSPECIFIED: IpAddress = IpAddress(0);

    pub const fn from_u32(value: u32) -> Self {
        IpAddress(value)
    }

    pub const fn new(a: u8, b: u8, c: u8, d: u8) -> Self {
        IpAddress(u32::from_be_bytes([a, b, c, d]))
    }

    pub const fn to_u32(self) -> u32 {
        self.0
    }

    pub fn octets(self) -> [u8; 4] {
        self.0.to_be_bytes()
    }
}

impl fmt::Display for IpAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        Ipv4Addr::from(self.0).fmt(f)
    }
}

impl fmt::Debug for IpAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl FromStr for IpAddress {
    type Err = AddrError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ipv4Addr::from_str(s)
            .map(|a| IpAddress(u32::from(a)))
            .map_err(|_| AddrError::BadAddress(s.to_string()))
    }
}

impl From<Ipv4Addr> for IpAddress {
    fn from(a: Ipv4Addr) -> Self {
        IpAddress(u32::from(a))
    }
}

impl From<IpAddress> for String {
    fn from(a: IpAddress) -> String {
        a.to_string()
    }
}

impl TryFrom<String> for IpAddress {
    type Error = AddrError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

fn mask(len: u8) -> u32 {
    if len == 0 {
        0
    } else {
        u32::MAX << (32 - u32::from(len))
    }
}

/// An IPv4 prefix. The base address never has host bits set.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct IpPrefix {
    base: IpAddress,
    len: u8,
}

impl IpPrefix {
    /// Builds a prefix, rejecting a base with host bits set.
    pub fn new(base: IpAddress, len: u8) -> Result<Self, AddrError> {
        if len > 32 {
            return Err(AddrError::BadLength(len.to_string()));
        }
        if base.0 & !mask(len) != 0 {
            return Err(AddrError::HostBitsSet(format!("{base}/{len}")));
        }
        Ok(IpPrefix { base, len })
    }

    /// The prefix of length `len` that covers `addr`.
    pub fn covering(addr: IpAddress, len: u8) -> Result<Self, AddrError> {
        if len > 32 {
            return Err(AddrError::BadLength(len.to_string()));
        }
        Ok(IpPrefix {
            base: IpAddress(addr.0 & mask(len)),
            len,
        })
    }

    pub fn base(&self) -> IpAddress {
        self.base
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> u8 {
        self.len
    }

    pub fn is_default(&self) -> bool {
        self.len == 0
    }

    pub fn contains(&self, addr: IpAddress) -> bool {
        contains(*self, addr)
    }

    /// Usable host addresses in ascending order. Network and broadcast
    /// addresses are excluded except on /31 and /32.
    pub fn hosts(&self) -> impl Iterator<Item = IpAddress> {
        let first = u64::from(self.base.0);
        let size = 1u64 << (32 - u32::from(self.len));
        let (lo, hi) = if self.len >= 31 {
            (first, first + size)
        } else {
            (first + 1, first + size - 1)
        };
        (lo..hi).map(|v| IpAddress(v as u32))
    }
}

/// True iff the top `prefix.len()` bits of `addr` equal the prefix base.
pub fn contains(prefix: IpPrefix, addr: IpAddress) -> bool {
    addr.0 & mask(prefix.len) == prefix.base.0
}

impl fmt::Display for IpPrefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.base, self.len)
    }
}

impl fmt::Debug for IpPrefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl FromStr for IpPrefix {
    type Err = AddrError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (addr, len) = s
            .split_once('/')
            .ok_or_else(|| AddrError::BadLength(s.to_string()))?;
        let len: u8 = len.parse().map_err(|_| AddrError::BadLength(len.to_string()))?;
        IpPrefix::new(addr.parse()?, len)
    }
}

impl From<IpPrefix> for String {
    fn from(p: IpPrefix) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for IpPrefix {
    type Error = AddrError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Parses `a.b.c.d/len` into the address and its covering prefix. The
/// address may carry host bits (it is an interface address).
pub fn parse_cidr_address(s: &str) -> Result<(IpAddress, IpPrefix), AddrError> {
    match s.split_once('/') {
        Some((addr, len)) => {
            let addr: IpAddress = addr.parse()?;
            let len: u8 = len.parse().map_err(|_| AddrError::BadLength(len.to_string()))?;
            Ok((addr, IpPrefix::covering(addr, len)?))
        }
        None => {
            let addr: IpAddress = s.parse()?;
            Ok((addr, IpPrefix::covering(addr, crate::net::DEFAULT_PREFIX_LEN)?))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(s: &str) -> IpPrefix {
        s.parse().unwrap()
    }

    fn a(s: &str) -> IpAddress {
        s.parse().unwrap()
    }

    #[test]
    fn contains_examples() {
        assert!(contains(p("172.16.6.0/24"), a("172.16.6.1")));
        assert!(contains(p("0.0.0.0/0"), a("255.1.2.3")));
        assert!(contains(p("0.0.0.0/0"), a("0.0.0.0")));
        assert!(!contains(p("172.16.6.0/24"), a("172.16.7.1")));
        assert!(contains(p("10.0.0.5/32"), a("10.0.0.5")));
        assert!(!contains(p("10.0.0.5/32"), a("10.0.0.4")));
    }

    #[test]
    fn host_bits_rejected() {
        assert!(matches!(
            "172.16.6.1/24".parse::<IpPrefix>(),
            Err(AddrError::HostBitsSet(_))
        ));
        assert!("172.16.6.0/33".parse::<IpPrefix>().is_err());
        assert!("300.1.1.0/24".parse::<IpPrefix>().is_err());
    }

    #[test]
    fn cidr_address_defaults_to_slash_24() {
        let (addr, net) = parse_cidr_address("172.16.9.1").unwrap();
        assert_eq!(addr, a("172.16.9.1"));
        assert_eq!(net, p("172.16.9.0/24"));
        let (_, net) = parse_cidr_address("10.1.2.3/30").unwrap();
        assert_eq!(net, p("10.1.2.0/30"));
    }

    #[test]
    fn host_ranges() {
        let hosts: Vec<_> = p("10.0.0.0/30").hosts().collect();
        assert_eq!(hosts, vec![a("10.0.0.1"), a("10.0.0.2")]);
        assert_eq!(p("10.0.0.0/31").hosts().count(), 2);
        assert_eq!(p("10.0.0.7/32").hosts().collect::<Vec<_>>(), vec![a("10.0.0.7")]);
        assert_eq!(p("172.16.6.0/24").hosts().count(), 254);
    }

    proptest! {
        #[test]
        fn covering_prefix_always_contains(addr in any::<u32>(), len in 0u8..=32) {
            let addr = IpAddress::from_u32(addr);
            let net = IpPrefix::covering(addr, len).unwrap();
            prop_assert!(net.contains(addr));
            prop_assert_eq!(net.base().to_u32() & !mask(len), 0);
            prop_assert_eq!(net.to_string().parse::<IpPrefix>().unwrap(), net);
        }

        #[test]
        fn contains_matches_bitwise_definition(base in any::<u32>(), len in 0u8..=32, addr in any::<u32>()) {
            let net = IpPrefix::covering(IpAddress::from_u32(base), len).unwrap();
            let shift = 32 - u32::from(len);
            let expect = len == 0 || (addr >> shift) == (net.base().to_u32() >> shift);
            prop_assert_eq!(net.contains(IpAddress::from_u32(addr)), expect);
        }
    }
}
