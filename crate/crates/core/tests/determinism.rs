use wsnsim::harness::{self, run_one, Axis, SweepSpec};
use wsnsim::model::joules_to_mwh;
use wsnsim::scenario::{ProtocolKind, Scenario};

fn small(p: ProtocolKind, seed: u64, fraction: f64) -> Scenario {
    let mut s = Scenario::parse(
        "n_nodes = 120\nn_clusters = 6\nfield_m = 500\nsim_time_s = 150\nload_packets = 30\n",
    )
    .unwrap();
    s.protocol = p;
    s.seed = seed;
    s.attack.malicious_fraction = fraction;
    s.finish();
    s
}

#[test]
fn replay_is_byte_identical() {
    for p in ProtocolKind::ALL {
        let s = small(p, 7, 0.3);
        let a = harness::csv_string(&[run_one(&s, None).unwrap().row]);
        let b = harness::csv_string(&[run_one(&s, None).unwrap().row]);
        assert_eq!(a, b, "{p}");
    }
}

#[test]
fn traces_replay_too() {
    let s = small(ProtocolKind::Esrpsdc, 3, 0.2);
    let dir = tempfile::tempdir().unwrap();
    let read = |name: &str| {
        let path = dir.path().join(name);
        let f = std::fs::File::create(&path).unwrap();
        run_one(&s, Some(Box::new(std::io::BufWriter::new(f)))).unwrap();
        std::fs::read(&path).unwrap()
    };
    let a = read("a.trace");
    assert!(!a.is_empty());
    assert_eq!(a, read("b.trace"));
}

#[test]
fn sweep_twice_same_csv() {
    let spec = SweepSpec {
        axis: Axis::Load,
        points: vec![10.0, 30.0],
        seeds_per_point: 2,
        protocols: ProtocolKind::ALL.to_vec(),
    };
    let base = small(ProtocolKind::Esrpsdc, 1, 0.3);
    let a = harness::csv_string(&harness::run_sweep(&spec, &base, 2).unwrap());
    let b = harness::csv_string(&harness::run_sweep(&spec, &base, 1).unwrap());
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 1 + 12);
}

#[test]
fn energy_conserved_on_every_protocol() {
    for p in ProtocolKind::ALL {
        for (seed, f) in [(1, 0.0), (2, 0.3)] {
            let o = run_one(&small(p, seed, f), None).unwrap();
            let rel = (o.initial_j - o.remaining_j - o.debited_j).abs() / o.initial_j;
            assert!(rel < 1e-9, "{p} seed {seed}: {rel}");
            let col = joules_to_mwh(o.debited_j);
            assert!((o.row.energy_total_mwh - col).abs() <= 1e-9 * col.max(1e-12));
            let by_node: f64 = o.metrics.energy_by_node_j.iter().sum();
            assert!((by_node - o.debited_j).abs() <= 1e-9 * o.debited_j);
            assert!(o.debited_j <= o.initial_j);
            assert!(o.metrics.n_received <= o.metrics.n_transmitted);
            assert_eq!(o.metrics.delay_samples_s.len() as u64, o.metrics.n_received);
        }
    }
}

#[test]
fn running_in_two_legs_matches_one() {
    for p in ProtocolKind::ALL {
        let s = small(p, 11, 0.3);
        let mut one = harness::build(&s).unwrap();
        let a = one.run(s.sim_time_s);
        let mut two = harness::build(&s).unwrap();
        two.run(s.sim_time_s / 2.0);
        let b = two.run(s.sim_time_s);
        assert_eq!(a.events, b.events, "{p}");
        assert_eq!(a.nodes, b.nodes, "{p}");
        assert_eq!(one.world.metrics.n_received, two.world.metrics.n_received);
        assert_eq!(
            one.world.metrics.delay_samples_s,
            two.world.metrics.delay_samples_s
        );
    }
}

#[test]
fn quiet_adversary_changes_nothing() {
    // a zero fraction with detection on must match detection off exactly
    for p in ProtocolKind::ALL {
        let on = small(p, 5, 0.0);
        let mut off = on.clone();
        off.detect.enabled = false;
        let a = run_one(&on, None).unwrap();
        let b = run_one(&off, None).unwrap();
        assert_eq!(a.row, b.row, "{p}");
        assert_eq!(a.events, b.events);
        assert!(a.metrics.detection.suspects.is_empty());
    }
}

#[test]
fn benign_sweep_point_has_no_suspects() {
    let spec = SweepSpec {
        axis: Axis::MaliciousFraction,
        points: vec![0.0],
        seeds_per_point: 3,
        protocols: ProtocolKind::ALL.to_vec(),
    };
    let rows = harness::run_sweep(&spec, &small(ProtocolKind::Esrpsdc, 1, 0.0), 2).unwrap();
    assert_eq!(rows.len(), 9);
    for r in rows {
        assert_eq!(r.status, "ok");
        assert_eq!(r.true_positives + r.false_positives, 0, "{:?}", r);
        assert!((0.0..=1.0).contains(&r.pdr));
    }
}

#[test]
fn failed_runs_become_rows() {
    let mut s = small(ProtocolKind::Leach, 1, 0.0);
    s.connected_range_m = Some(1.0);
    let rows = harness::run_parallel(&[s], 1);
    assert!(rows[0].status.starts_with("error"));
    assert!(!rows[0]
        .to_csv()
        .contains("error: no connected deployment at 1 m after 1000 draws,"));
}
