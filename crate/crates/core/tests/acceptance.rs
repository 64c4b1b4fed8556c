//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the report stays readable; exits nonzero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::Parser;
use common::*;
use msrsim::cli::{execute, Cli};
use msrsim::forwarding::TraceOutcome;
use msrsim::mobile::SessionId;
use msrsim::net::{IpAddress, IpPrefix, ScriptedEvent};
use msrsim::sim::Participant;
use msrsim::{Approach, Simulator};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<(), String>;

/// Id, name, check and runtime bound.
type Criterion = (&'static str, &'static str, fn() -> Check, Duration);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn a(s: &str) -> IpAddress {
    s.parse().unwrap()
}

fn best(sim: &Simulator, router: &str, dst: &str) -> Option<(IpAddress, String, u32)> {
    let dst: IpPrefix = dst.parse().unwrap();
    sim.route_rows(router, false)?
        .into_iter()
        .find(|r| r.destination == dst)
        .map(|r| (r.next_hop, r.interface, r.metric))
}

fn host_trace(sim: &Simulator, from: &str, to: &str) -> msrsim::forwarding::TraceRecord {
    let net = sim.network();
    let s = net.node_by_name(from).unwrap();
    let d = net.node_by_name(to).unwrap();
    trace(sim, s.id, s.interfaces[0].address, d.interfaces[0].address)
}

fn ac1() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let state = dir.path().join("state.json");
    let scn = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/fig2.scn");
    let args = |extra: &[&str]| {
        let mut v = vec![
            "msrsim",
            "--scenario",
            scn,
            "--state",
            state.to_str().unwrap(),
            "--output",
            "machine",
        ];
        v.extend_from_slice(extra);
        Cli::try_parse_from(v).map_err(|e| e.to_string())
    };
    let run = execute(&args(&["run", "--approach", "cp", "--until", "10000"])?);
    ensure(run.code == 0, || {
        format!("run exited {}: {}", run.code, run.stderr)
    })?;
    let out = execute(&args(&["routes", "--router", "msr1", "--all"])?);
    ensure(out.code == 0, || out.stderr.clone())?;
    let host_rows: Vec<&str> = out
        .stdout
        .lines()
        .filter(|l| l.contains("dst=172.16.1.0/24") || l.contains("dst=172.16.9.0/24"))
        .collect();
    let want = [
        "route dst=172.16.1.0/24 next-hop=172.16.4.1 iface=n6-2 metric=292",
        "route dst=172.16.1.0/24 next-hop=172.16.2.1 iface=n6-1 metric=338",
        "route dst=172.16.9.0/24 next-hop=172.16.6.1 iface=pdu-1 metric=68",
        "route dst=172.16.9.0/24 next-hop=172.16.7.1 iface=pdu-2 metric=258",
    ];
    ensure(host_rows == want, || format!("got {host_rows:?}"))
}

fn ac2() -> Check {
    for approach in [Approach::CpBased, Approach::UpBased] {
        let sim = run(FIG2, approach, 10_000);
        let t = host_trace(&sim, "host2", "host1");
        ensure(t.outcome == TraceOutcome::Delivered, || {
            format!("{:?}", t.outcome)
        })?;
        let net = sim.network();
        let names: Vec<&str> = t.nodes().iter().map(|n| net.name(*n)).collect();
        let at = names
            .iter()
            .position(|n| *n == "upf1")
            .ok_or("trace skips upf1")?;
        let hop = &t.hops[at];
        let iface = |i| net.interface(i).map(|x| x.name.clone()).unwrap_or_default();
        ensure(
            names[at - 1] == "n6rn" && hop.ingress.map(iface).as_deref() == Some("n6-2"),
            || format!("{approach}: upf1 entered from {names:?}"),
        )?;
        ensure(
            hop.egress.map(iface).as_deref() == Some("pdu-1") && names[at + 1] == "uer1",
            || format!("{approach}: upf1 left toward {names:?}"),
        )?;
        ensure(t.total_metric == 360, || format!("total {}", t.total_metric))?;
        let back = host_trace(&sim, "host1", "host2");
        let names: Vec<&str> = back.nodes().iter().map(|n| net.name(*n)).collect();
        let at = names
            .iter()
            .position(|n| *n == "upf1")
            .ok_or("uplink skips upf1")?;
        ensure(
            back.hops[at].egress.map(iface).as_deref() == Some("n6-2") && names[at + 1] == "n6rn",
            || format!("{approach}: uplink {names:?}"),
        )?;
    }
    Ok(())
}

fn ac3() -> Check {
    for seed in 0..24 {
        let text = generate(seed);
        let cp = run(&text, Approach::CpBased, 10_000);
        let up = run(&text, Approach::UpBased, 10_000);
        ensure(cp.is_quiescent() && up.is_quiescent(), || {
            format!("seed {seed} not quiescent")
        })?;
        ensure(route_dump(&cp) == route_dump(&up), || {
            format!("seed {seed}: route dumps differ")
        })?;
        ensure(all_pairs(&cp) == all_pairs(&up), || {
            format!("seed {seed}: traces differ")
        })?;
    }
    Ok(())
}

fn ac4() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for k in 0..200 {
        let shape = Shape {
            routers: rng.gen_range(2..=10),
            upfs: 0,
            sessions: 0,
            hosts: rng.gen_range(0..=3),
            asymmetric: rng.gen_bool(0.5),
        };
        let text = generate_with(rng.gen(), &shape);
        let sim = run(&text, Approach::CpBased, 10_000);
        ensure(sim.is_quiescent(), || format!("graph {k} not quiescent"))?;
        for (name, p) in sim.participants() {
            let Participant::Router(node) = p else { continue };
            let oracle = spf_oracle(sim.network(), node);
            let got: std::collections::BTreeMap<IpPrefix, u64> = sim
                .route_rows(&name, false)
                .unwrap_or_default()
                .into_iter()
                .map(|r| (r.destination, u64::from(r.metric)))
                .collect();
            ensure(got == oracle, || format!("graph {k} router {name}\n{text}"))?;
        }
    }
    Ok(())
}

fn ac5() -> Check {
    for approach in [Approach::CpBased, Approach::UpBased] {
        let mut sim = build(FIG2, approach);
        sim.run_until(5000);
        let ev = |w: &[&str]| ScriptedEvent::parse(w).unwrap();
        sim.inject(5000, ev(&["link-down", "upf1.pdu-1"]))
            .map_err(|e| e.to_string())?;
        sim.run_until(10_000);
        let got = best(&sim, "msr1", "172.16.9.0/24");
        ensure(got == Some((a("172.16.7.1"), "pdu-2".into(), 258)), || {
            format!("{approach} after failure: {got:?}")
        })?;
        ensure(
            host_trace(&sim, "host2", "host1").outcome == TraceOutcome::Delivered,
            || "no delivery after failure".into(),
        )?;
        sim.inject(10_000, ev(&["link-up", "upf1.pdu-1"]))
            .map_err(|e| e.to_string())?;
        sim.run_until(20_000);
        let got = best(&sim, "msr1", "172.16.9.0/24");
        ensure(sim.is_quiescent(), || "not quiescent after recovery".into())?;
        ensure(got == Some((a("172.16.6.1"), "pdu-1".into(), 68)), || {
            format!("{approach} after recovery: {got:?}")
        })?;
    }
    Ok(())
}

fn ac6() -> Check {
    let released: IpPrefix = "172.16.6.0/24".parse().unwrap();
    for approach in [Approach::CpBased, Approach::UpBased] {
        let mut sim = build(FIG2, approach);
        sim.run_until(5000);
        let ev = |w: &[&str]| ScriptedEvent::parse(w).unwrap();
        sim.inject(5000, ev(&["pdu-release", "1"]))
            .map_err(|e| e.to_string())?;
        sim.run_until(10_000);
        let upf1 = sim
            .mobile()
            .upfs()
            .find(|u| sim.network().name(u.node) == "upf1")
            .map(|u| u.node);
        let msr = &sim.mobile().upf(upf1.ok_or("no upf1")?).ok_or("no upf1")?.msr;
        ensure(msr.interface_by_name("pdu-1").is_none(), || {
            "pdu-1 still present".into()
        })?;
        for (name, _) in sim.participants() {
            let stale = sim
                .route_rows(&name, true)
                .unwrap_or_default()
                .into_iter()
                .any(|r| {
                    r.interface == "pdu-1" || r.destination == released || released.contains(r.next_hop)
                });
            ensure(!stale, || {
                format!("{approach}: {name} still routes through the released session")
            })?;
        }
        sim.inject(
            10_000,
            ev(&["pdu-establish", "uer1", "upf1", "172.16.6.1/24", "20", "20"]),
        )
        .map_err(|e| e.to_string())?;
        sim.run_until(20_000);
        let s = sim.mobile().session(SessionId(4)).ok_or("session 4 missing")?;
        ensure(
            released.contains(s.reserved_addr) && s.reserved_addr != s.ue_addr,
            || format!("reserved {} for ue {}", s.reserved_addr, s.ue_addr),
        )?;
        let got = best(&sim, "msr1", "172.16.9.0/24");
        ensure(got == Some((a("172.16.6.1"), "pdu-4".into(), 68)), || {
            format!("{approach}: {got:?}")
        })?;
        let t = host_trace(&sim, "host2", "host1");
        ensure(
            t.outcome == TraceOutcome::Delivered && t.total_metric == 360,
            || format!("{t:?}"),
        )?;
        ensure(sim.audit().is_empty(), || format!("{:?}", sim.audit()))?;
    }
    Ok(())
}

fn ac7() -> Check {
    let mut corpus: Vec<(String, String, u64)> = vec![
        ("fig2".into(), FIG2.into(), 10_000),
        ("fig2-failover".into(), FIG2_FAILOVER.into(), 40_000),
    ];
    corpus.extend((0..10).map(|s| (format!("generated-{s}"), generate(1000 + s), 10_000)));
    for (name, text, until) in &corpus {
        for approach in [Approach::CpBased, Approach::UpBased] {
            let once = || {
                let sim = run(text, approach, *until);
                (sim.log().render(true), route_dump(&sim))
            };
            ensure(once() == once(), || {
                format!("{name} {approach} differs between runs")
            })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("AC1", "fig2 MS-Router 1 table", ac1, Duration::from_secs(1)),
        (
            "AC2",
            "fig2 shortest-path selection",
            ac2,
            Duration::from_secs(1),
        ),
        (
            "AC3",
            "approach equivalence on 24 generated scenarios",
            ac3,
            Duration::from_secs(30),
        ),
        (
            "AC4",
            "SPF matches brute force on 200 random graphs",
            ac4,
            Duration::from_secs(60),
        ),
        ("AC5", "pdu-1 failure and recovery", ac5, Duration::from_secs(1)),
        (
            "AC6",
            "session release and re-establishment",
            ac6,
            Duration::from_secs(1),
        ),
        ("AC7", "determinism over the corpus", ac7, Duration::from_secs(30)),
    ];
    let mut failed = 0;
    for (id, name, check, bound) in criteria {
        let start = Instant::now();
        let result = check();
        let took = start.elapsed();
        let verdict = match result {
            Ok(()) if took <= bound => "PASS".to_string(),
            Ok(()) => format!("FAIL (over {} ms bound)", bound.as_millis()),
            Err(e) => format!("FAIL ({e})"),
        };
        if !verdict.starts_with("PASS") {
            failed += 1;
        }
        println!("{id} {verdict} {name} ({} ms)", took.as_millis());
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
