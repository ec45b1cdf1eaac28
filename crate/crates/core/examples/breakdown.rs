//! Prints where one run spends its transmit energy.
//!
//! cargo run --release --example breakdown -- [protocol] [seed] [key=value ...]

use wsnsim::harness::run_one;
use wsnsim::scenario::Scenario;

fn main() -> wsnsim::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut s = Scenario::default();
    if let Some(p) = args.first() {
        s.protocol = p.parse()?;
    }
    if let Some(seed) = args.get(1) {
        s.seed = seed
            .parse()
            .map_err(|_| wsnsim::Error::InvalidParams(format!("bad seed {seed}")))?;
    }
    for kv in args.iter().skip(2) {
        if let Some((k, v)) = kv.split_once('=') {
            s.set(k, v)?;
        }
    }
    s.finish();
    let o = run_one(&s, None)?;
    println!("{}", o.row.to_csv());
    println!(
        "spent {:.3} J, deaths {}, events {}",
        o.debited_j, o.deaths, o.events
    );
    for (k, j) in &o.tx_energy_by_kind {
        println!("  {k:<16} {j:>10.4} J");
    }
    let m = &o.metrics;
    println!(
        "tx {} rx {} malicious_drops {} no_route {} orphans {}",
        m.n_transmitted, m.n_received, m.malicious_drops, m.no_route_drops, m.orphans_logged
    );
    let mut hist = std::collections::BTreeMap::<u64, u32>::new();
    for t in m.arrival_times() {
        *hist.entry((t / 10.0) as u64 * 10).or_default() += 1;
    }
    println!("arrivals per 10 s: {hist:?}");
    if let Some(inv) = &o.invariants {
        println!("{inv:?}");
    }
    Ok(())
}
