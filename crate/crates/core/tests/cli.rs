use std::process::Command;

use wsnsim::harness::CSV_HEADER;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wsnsim"))
}

fn scenario(dir: &std::path::Path) -> std::path::PathBuf {
    let p = dir.join("small.scn");
    std::fs::write(
        &p,
        "# tiny\nn_nodes = 60\nn_clusters = 4\nfield_m = 400\nsim_time_s = 90\nload_packets = 10\n",
    )
    .unwrap();
    p
}

#[test]
fn run_writes_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let scn = scenario(dir.path());
    let out = dir.path().join("r.csv");
    let trace = dir.path().join("t.txt");
    let st = bin()
        .args(["run", "--scenario"])
        .arg(&scn)
        .args(["--seed", "4", "--protocol", "pegasis", "--trace"])
        .arg(&trace)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(st.success());
    let csv = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert!(lines[1].starts_with("pegasis,4,60,4,"));
    assert!(std::fs::metadata(&trace).unwrap().len() > 0);
}

#[test]
fn sweep_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let scn = scenario(dir.path());
    let out = dir.path().join("s.csv");
    let sum = dir.path().join("sum.csv");
    let st = bin()
        .args(["sweep", "--scenario"])
        .arg(&scn)
        .args([
            "--axis", "load", "--points", "5,10", "--seeds", "2", "--out",
        ])
        .arg(&out)
        .arg("--summary")
        .arg(&sum)
        .status()
        .unwrap();
    assert!(st.success());
    assert_eq!(
        std::fs::read_to_string(&out).unwrap().lines().count(),
        1 + 3 * 2 * 2
    );
    assert_eq!(
        std::fs::read_to_string(&sum).unwrap().lines().count(),
        1 + 3 * 2
    );
}

#[test]
fn bad_input_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.scn");
    std::fs::write(&bad, "n_nodes = 10\nwhat = 1\n").unwrap();
    let o = bin()
        .args(["run", "--scenario"])
        .arg(&bad)
        .output()
        .unwrap();
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 2"), "{err}");

    let o = bin()
        .args(["run", "--scenario", "/no/such/file.scn"])
        .output()
        .unwrap();
    assert!(!o.status.success());

    let scn = scenario(dir.path());
    let o = bin()
        .args(["sweep", "--scenario"])
        .arg(&scn)
        .args(["--axis", "load", "--points", "10,5"])
        .output()
        .unwrap();
    assert!(!o.status.success());
    let o = bin()
        .args(["sweep", "--scenario"])
        .arg(&scn)
        .args(["--axis", "speed", "--points", "1"])
        .output()
        .unwrap();
    assert!(!o.status.success());
}

#[test]
fn shipped_scenarios_parse() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios");
    let mut n = 0;
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "scn") {
            wsnsim::scenario::Scenario::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            n += 1;
        }
    }
    assert!(n >= 4);
}
