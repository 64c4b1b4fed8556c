use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_msrsim");

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

struct Cli {
    dir: TempDir,
}

impl Cli {
    fn new() -> Self {
        Cli {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn state(&self) -> PathBuf {
        self.dir.path().join("state.json")
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(BIN)
            .args(args)
            .arg("--state")
            .arg(self.state())
            .output()
            .unwrap()
    }
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn run_then_routes_and_trace() {
    let cli = Cli::new();
    let fig2 = scenario("fig2.scn");
    let o = cli.run(&["run", "--scenario", fig2.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("status: quiescent at t=10000 ms"));
    let o = cli.run(&["routes", "--router", "msr1", "--all", "--output", "machine"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    for row in [
        "route dst=172.16.1.0/24 next-hop=172.16.4.1 iface=n6-2 metric=292",
        "route dst=172.16.1.0/24 next-hop=172.16.2.1 iface=n6-1 metric=338",
        "route dst=172.16.9.0/24 next-hop=172.16.6.1 iface=pdu-1 metric=68",
        "route dst=172.16.9.0/24 next-hop=172.16.7.1 iface=pdu-2 metric=258",
    ] {
        assert!(out.contains(row), "{row} missing from\n{out}");
    }
    let o = cli.run(&["trace", "host2", "host1", "--output", "machine"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(
        stdout(&o).ends_with("outcome=delivered total-metric=360 hops=6\n"),
        "{}",
        stdout(&o)
    );
}

#[test]
fn upf_name_aliases_its_ms_router() {
    let cli = Cli::new();
    let fig2 = scenario("fig2.scn");
    cli.run(&["run", "--scenario", fig2.to_str().unwrap(), "--approach", "up"]);
    let a = cli.run(&["routes", "--router", "msr1"]);
    let b = cli.run(&["routes", "--router", "upf1"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(stdout(&a), stdout(&b));
}

#[test]
fn routes_before_run_prints_header_and_notice() {
    let cli = Cli::new();
    let o = cli.run(&["routes", "--router", "msr1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("Destination"));
    assert!(stderr(&o).contains("run a scenario first"));
}

#[test]
fn unknown_router_and_address_exit_4() {
    let cli = Cli::new();
    let fig2 = scenario("fig2.scn");
    cli.run(&["run", "--scenario", fig2.to_str().unwrap()]);
    assert_eq!(cli.run(&["routes", "--router", "msr9"]).status.code(), Some(4));
    assert_eq!(cli.run(&["trace", "host2", "10.9.9.9"]).status.code(), Some(4));
    assert_eq!(cli.run(&["trace", "nobody", "host1"]).status.code(), Some(4));
}

#[test]
fn syntax_error_exits_2_with_line() {
    let cli = Cli::new();
    let p = cli.write("bad.scn", "[node] r1 router\n[iface] r1 x 10.0.0.1/24\n");
    let o = cli.run(&["validate", "--scenario", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
    let o = cli.run(&["run"]);
    assert_eq!(o.status.code(), Some(2));
    let o = cli.run(&["bogus"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invariant_violation_exits_3() {
    let cli = Cli::new();
    let p = cli.write(
        "dup.scn",
        "[node] r1 router\n[node] r2 router\n[iface] r1 1 10.0.0.1/24\n[iface] r2 1 10.0.1.1/24\n[link] r1.1 r2.1 5\n",
    );
    let o = cli.run(&["validate", "--scenario", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let o = cli.run(&["run", "--scenario", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn validate_reports_counts() {
    let cli = Cli::new();
    let p = scenario("fig2-failover.scn");
    let o = cli.run(&["validate", "--scenario", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(
        stdout(&o).starts_with("ok: 12 nodes, 10 links, 3 sessions, 2 events"),
        "{}",
        stdout(&o)
    );
}

#[test]
fn machine_output_matches_golden() {
    let cli = Cli::new();
    let fig2 = scenario("fig2.scn");
    let golden = |name: &str| {
        std::fs::read_to_string(
            Path::new(env!("CARGO_MANIFEST_DIR"))
                .join("tests/golden")
                .join(name),
        )
        .unwrap()
    };
    let o = cli.run(&["run", "--scenario", fig2.to_str().unwrap(), "--output", "machine"]);
    assert_eq!(stdout(&o), golden("fig2-run.txt"));
    let o = cli.run(&["routes", "--router", "msr1", "--all", "--output", "machine"]);
    assert_eq!(stdout(&o), golden("fig2-routes-msr1.txt"));
    let o = cli.run(&["trace", "host2", "host1", "--output", "machine"]);
    assert_eq!(stdout(&o), golden("fig2-trace.txt"));
}

#[test]
fn inline_skips_state_file() {
    let cli = Cli::new();
    let fig2 = scenario("fig2.scn");
    let o = cli.run(&[
        "trace",
        "host1",
        "host2",
        "--inline",
        "--scenario",
        fig2.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(!cli.state().exists());
}
