//! Structural checks of the clustered protocol across many seeds.

mod common;

use wsnsim::harness::run_one;
use wsnsim::scenario::Scenario;

#[test]
fn fifty_seeds_hold_every_invariant() {
    let seeds: Vec<u64> = (1..=50).collect();
    let out = common::par_map(&seeds, |&seed| {
        let mut s = Scenario::parse(
            "n_nodes = 200\nn_clusters = 10\nfield_m = 700\nsim_time_s = 200\nload_packets = 40\n",
        )
        .unwrap();
        s.seed = seed;
        // alternate between benign, attacked and a tight suffix space
        match seed % 3 {
            0 => s.attack.malicious_fraction = 0.3,
            1 => s.esrpsdc.suffix_bytes = 1,
            _ => s.n_clusters = 4,
        }
        s.finish();
        (seed, run_one(&s, None).unwrap())
    });
    for (seed, o) in out {
        let inv = o.invariants.unwrap();
        assert_eq!(inv.violations(), 0, "seed {seed}: {inv:?}");
        assert!(inv.max_depth <= 2, "seed {seed}");
        assert!(inv.formations >= 1);
        assert!(inv.aggregate_hops > 0, "seed {seed} never forwarded");
    }
}
