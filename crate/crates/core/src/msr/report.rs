//! Routing-table dump in the four-column layout
//! `Destination | Next Hop | Destination interface | Metric`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::net::{IpAddress, IpPrefix};

/// A routing-table row resolved to printable names.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteRow {
    pub destination: IpPrefix,
    /// Hosts inside the destination prefix, as `(name, address)`.
    pub hosts: Vec<(String, IpAddress)>,
    pub next_hop: IpAddress,
    /// Name of the node owning the next-hop address, when known.
    pub next_hop_node: Option<String>,
    pub interface: String,
    pub metric: u32,
}

pub const HEADER: [&str; 4] = ["Destination", "Next Hop", "Destination interface", "Metric"];

/// Renders rows sorted by `(destination, metric)`. Human mode annotates
/// destinations with the hosts they cover and next hops with their owner.
pub fn render_routes(rows: &[RouteRow], machine: bool) -> String {
    let mut rows: Vec<&RouteRow> = rows.iter().collect();
    rows.sort_by(|a, b| {
        (a.destination, a.metric, a.next_hop, &a.interface).cmp(&(
            b.destination,
            b.metric,
            b.next_hop,
            &b.interface,
        ))
    });
    let mut out = String::new();
    if machine {
        for r in rows {
            let _ = writeln!(
                out,
                "route dst={} next-hop={} iface={} metric={}",
                r.destination, r.next_hop, r.interface, r.metric
            );
        }
        return out;
    }
    let cells: Vec<[String; 4]> = rows
        .iter()
        .map(|r| {
            let mut dst = r.destination.to_string();
            if !r.hosts.is_empty() {
                let hosts: Vec<String> = r.hosts.iter().map(|(n, a)| format!("{a} {n}")).collect();
                let _ = write!(dst, " ({})", hosts.join(", "));
            }
            let nh = match &r.next_hop_node {
                Some(n) => format!("{} ({n})", r.next_hop),
                None => r.next_hop.to_string(),
            };
            [dst, nh, r.interface.clone(), r.metric.to_string()]
        })
        .collect();
    let mut widths = HEADER.map(str::len);
    for c in &cells {
        for (w, s) in widths.iter_mut().zip(c) {
            *w = (*w).max(s.len());
        }
    }
    let line = |cols: [&str; 4]| {
        format!(
            "{:<w0$} | {:<w1$} | {:<w2$} | {}",
            cols[0],
            cols[1],
            cols[2],
            cols[3],
            w0 = widths[0],
            w1 = widths[1],
            w2 = widths[2]
        )
        .trim_end()
        .to_string()
    };
    let _ = writeln!(out, "{}", line(HEADER));
    for c in &cells {
        let _ = writeln!(out, "{}", line([&c[0], &c[1], &c[2], &c[3]]));
    }
    out
}
