//! Building and running simulations, CSV rows, sweeps and summaries.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;

use crate::adversary::inject;
use crate::baselines::{Leach, Pegasis};
use crate::engine::{rng_from_seed, EventKind, Protocol, Sim, World};
use crate::error::{Error, Result};
use crate::esrpsdc::{Esrpsdc, Invariants};
use crate::metrics::MetricsLedger;
use crate::model::{distance, joules_to_mwh, pdr, NodeId};
use crate::scenario::{ProtocolKind, Scenario};
use crate::topology::{deploy_connected, deploy_uniform};
use crate::traffic::Traffic;

pub const CSV_HEADER: &str = "protocol,seed,n_nodes,n_clusters,pct_malicious,load_packets,payload_bytes,pdr,mean_delay_s,energy_total_mwh,energy_per_node_mwh,first_node_death_s,detection_triggered,detection_latency_s,true_positives,false_positives,status";

/// Any of the three protocols behind one type.
pub enum AnyProtocol {
    Esrpsdc(Box<Esrpsdc>),
    Leach(Box<Leach>),
    Pegasis(Box<Pegasis>),
}

impl Protocol for AnyProtocol {
    fn start(&mut self, w: &mut World) {
        match self {
            AnyProtocol::Esrpsdc(p) => p.start(w),
            AnyProtocol::Leach(p) => p.start(w),
            AnyProtocol::Pegasis(p) => p.start(w),
        }
    }

    fn handle(&mut self, w: &mut World, ev: EventKind) {
        match self {
            AnyProtocol::Esrpsdc(p) => p.handle(w, ev),
            AnyProtocol::Leach(p) => p.handle(w, ev),
            AnyProtocol::Pegasis(p) => p.handle(w, ev),
        }
    }
}

/// Seed offset separating the kernel's stream from the deployment stream.
const WORLD_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;

/// Deploys nodes, picks intruders, draws traffic and wires up the chosen protocol.
pub fn build(scn: &Scenario) -> Result<Sim<AnyProtocol>> {
    scn.validate()?;
    let mut rng = rng_from_seed(scn.seed);
    let mut nodes = match scn.connected_range_m {
        Some(r) => deploy_connected(
            scn.n_nodes,
            scn.field_m,
            scn.bs_pos,
            scn.init_energy_j,
            r,
            1000,
            &mut rng,
        )
        .ok_or_else(|| {
            Error::InvalidParams(format!("no connected deployment at {r} m after 1000 draws"))
        })?,
        None => deploy_uniform(
            scn.n_nodes,
            scn.field_m,
            scn.bs_pos,
            scn.init_energy_j,
            &mut rng,
        ),
    };
    let sensors: Vec<NodeId> = nodes.iter().skip(1).map(|n| n.id).collect();
    for id in inject(&sensors, &scn.attack, &mut rng) {
        nodes[id.idx()].compromised = true;
    }
    let sources: Option<Vec<NodeId>> = scn.source_distance_m.map(|d| {
        let best = nodes
            .iter()
            .skip(1)
            .min_by(|a, b| {
                (distance(a.pos, scn.bs_pos) - d)
                    .abs()
                    .total_cmp(&(distance(b.pos, scn.bs_pos) - d).abs())
            })
            .map(|n| n.id);
        best.into_iter().collect()
    });
    let mut w = World::new(
        nodes,
        scn.radio.clone(),
        scn.energy.clone(),
        scn.sim_time_s,
        scn.seed ^ WORLD_STREAM,
    );
    w.processing_delay_s = scn.processing_delay_s;
    w.jitter_max_s = scn.jitter_max_s;
    let traffic = Traffic::generate_for(&mut w, scn.traffic.clone(), sources.as_deref());
    let proto = match scn.protocol {
        ProtocolKind::Esrpsdc => {
            let mut cfg = scn.esrpsdc.clone();
            cfg.n_clusters = scn.n_clusters;
            AnyProtocol::Esrpsdc(Box::new(Esrpsdc::new(
                &w,
                cfg,
                scn.attack.clone(),
                scn.detect.clone(),
                traffic,
            )))
        }
        ProtocolKind::Leach => AnyProtocol::Leach(Box::new(Leach::new(
            &w,
            scn.leach.clone(),
            scn.n_clusters,
            scn.attack.clone(),
            traffic,
        ))),
        ProtocolKind::Pegasis => AnyProtocol::Pegasis(Box::new(Pegasis::new(
            &w,
            scn.pegasis.clone(),
            scn.attack.clone(),
            traffic,
        ))),
    };
    Ok(Sim::new(w, proto))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub protocol: ProtocolKind,
    pub seed: u64,
    pub n_nodes: usize,
    pub n_clusters: usize,
    pub pct_malicious: f64,
    pub load_packets: u32,
    pub payload_bytes: (u32, u32),
    pub pdr: f64,
    pub mean_delay_s: Option<f64>,
    pub energy_total_mwh: f64,
    pub energy_per_node_mwh: f64,
    pub first_node_death_s: Option<f64>,
    pub detection_triggered: bool,
    pub detection_latency_s: Option<f64>,
    pub true_positives: u32,
    pub false_positives: u32,
    pub status: String,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

impl Row {
    fn blank(scn: &Scenario) -> Row {
        Row {
            protocol: scn.protocol,
            seed: scn.seed,
            n_nodes: scn.n_nodes,
            n_clusters: scn.n_clusters,
            pct_malicious: scn.attack.malicious_fraction * 100.0,
            load_packets: scn.traffic.load_packets,
            payload_bytes: (scn.traffic.payload_min, scn.traffic.payload_max),
            pdr: 0.0,
            mean_delay_s: None,
            energy_total_mwh: 0.0,
            energy_per_node_mwh: 0.0,
            first_node_death_s: None,
            detection_triggered: false,
            detection_latency_s: None,
            true_positives: 0,
            false_positives: 0,
            status: "ok".into(),
        }
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{:.2},{},{}-{},{:.6},{},{:.6},{:.6},{},{},{},{},{},{}",
            self.protocol,
            self.seed,
            self.n_nodes,
            self.n_clusters,
            self.pct_malicious,
            self.load_packets,
            self.payload_bytes.0,
            self.payload_bytes.1,
            self.pdr,
            opt(self.mean_delay_s),
            self.energy_total_mwh,
            self.energy_per_node_mwh,
            opt(self.first_node_death_s),
            self.detection_triggered,
            opt(self.detection_latency_s),
            self.true_positives,
            self.false_positives,
            self.status.replace(',', ";"),
        )
    }
}

/// Everything one run produced.
pub struct Outcome {
    pub row: Row,
    pub metrics: MetricsLedger,
    pub invariants: Option<Invariants>,
    pub debited_j: f64,
    pub initial_j: f64,
    pub remaining_j: f64,
    pub compromised: Vec<NodeId>,
    pub events: u64,
    pub tx_energy_by_kind: BTreeMap<&'static str, f64>,
    pub deaths: usize,
}

/// Runs one scenario to its end time.
pub fn run_one(scn: &Scenario, trace: Option<Box<dyn Write>>) -> Result<Outcome> {
    let mut sim = build(scn)?;
    if let Some(t) = trace {
        sim.world.set_trace(t);
    }
    let summary = sim.run(scn.sim_time_s);
    let w = &mut sim.world;
    w.metrics.energy_by_node_j = w
        .nodes
        .iter()
        .map(|n| n.energy_init_j - n.energy_j)
        .collect();
    let mut row = Row::blank(scn);
    row.pdr = pdr(w.metrics.n_received, w.metrics.n_transmitted)?;
    row.mean_delay_s = w.metrics.mean_delay_s();
    let spent = w.total_debited_j();
    row.energy_total_mwh = joules_to_mwh(spent);
    row.energy_per_node_mwh = joules_to_mwh(spent / scn.n_nodes as f64);
    row.first_node_death_s = w.death_s.iter().flatten().copied().min_by(f64::total_cmp);
    let det = &w.metrics.detection;
    row.detection_triggered = det.triggered_at_s.is_some();
    row.detection_latency_s = det
        .first_isolation_s
        .map(|t| (t - scn.attack.activation_s).max(0.0));
    row.true_positives = det.true_positives;
    row.false_positives = det.false_positives;
    let sensors = scn.n_nodes.max(1);
    let n_bad = w.nodes.iter().filter(|n| n.compromised).count();
    row.pct_malicious = 100.0 * n_bad as f64 / sensors as f64;
    let invariants = match &sim.proto {
        AnyProtocol::Esrpsdc(p) => Some(p.inv.clone()),
        _ => None,
    };
    let w = &sim.world;
    Ok(Outcome {
        row,
        metrics: w.metrics.clone(),
        invariants,
        debited_j: spent,
        initial_j: w.initial_total_j(),
        remaining_j: summary.energy_remaining_j,
        compromised: w
            .nodes
            .iter()
            .filter(|n| n.compromised)
            .map(|n| n.id)
            .collect(),
        events: summary.events,
        tx_energy_by_kind: w.tx_energy_by_kind.clone(),
        deaths: w.death_s.iter().flatten().count(),
    })
}

/// One CSV row per run; failures become a row whose status carries the error.
pub fn run_row(scn: &Scenario) -> Row {
    match run_one(scn, None) {
        Ok(o) => o.row,
        Err(e) => {
            let mut r = Row::blank(scn);
            r.status = format!("error: {e}");
            r
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Load,
    NetworkSize,
    MaliciousFraction,
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "load" => Ok(Axis::Load),
            "size" => Ok(Axis::NetworkSize),
            "malicious" => Ok(Axis::MaliciousFraction),
            other => Err(Error::Validation {
                key: "axis".into(),
                msg: format!("unknown axis `{other}`; allowed: load, size, malicious"),
            }),
        }
    }
}

impl Axis {
    pub fn apply(self, scn: &mut Scenario, v: f64) {
        match self {
            Axis::Load => scn.traffic.load_packets = v.round() as u32,
            Axis::NetworkSize => scn.n_nodes = v.round() as usize,
            Axis::MaliciousFraction => scn.attack.malicious_fraction = v,
        }
    }

    pub fn value(self, row: &Row) -> f64 {
        match self {
            Axis::Load => row.load_packets as f64,
            Axis::NetworkSize => row.n_nodes as f64,
            Axis::MaliciousFraction => row.pct_malicious / 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: Axis,
    pub points: Vec<f64>,
    pub seeds_per_point: u32,
    pub protocols: Vec<ProtocolKind>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() || self.points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation {
                key: "points".into(),
                msg: "must be non-empty and strictly increasing".into(),
            });
        }
        if self.seeds_per_point == 0 {
            return Err(Error::Validation {
                key: "seeds".into(),
                msg: "must be >= 1".into(),
            });
        }
        if self.protocols.is_empty() {
            return Err(Error::Validation {
                key: "protocols".into(),
                msg: "at least one protocol".into(),
            });
        }
        Ok(())
    }

    /// Scenarios in output order: protocol, point, seed. Seeds count up from the base scenario's.
    pub fn scenarios(&self, base: &Scenario) -> Vec<Scenario> {
        let mut out = Vec::new();
        for &p in &self.protocols {
            for &v in &self.points {
                for i in 0..self.seeds_per_point {
                    let mut s = base.clone();
                    s.protocol = p;
                    s.seed = base.seed.wrapping_add(i as u64);
                    self.axis.apply(&mut s, v);
                    s.finish();
                    out.push(s);
                }
            }
        }
        out
    }
}

/// Runs every (protocol, point, seed) on up to `threads` workers; rows come back in job order.
pub fn run_sweep(spec: &SweepSpec, base: &Scenario, threads: usize) -> Result<Vec<Row>> {
    spec.validate()?;
    let jobs = spec.scenarios(base);
    Ok(run_parallel(&jobs, threads))
}

pub fn run_parallel(jobs: &[Scenario], threads: usize) -> Vec<Row> {
    let threads = threads.max(1).min(jobs.len().max(1));
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut rows: Vec<Option<Row>> = vec![None; jobs.len()];
    let results = std::sync::Mutex::new(&mut rows);
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let r = run_row(&jobs[i]);
                results.lock().expect("worker panicked")[i] = Some(r);
            });
        }
    });
    rows.into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

pub fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

pub fn write_csv(rows: &[Row], out: &mut impl Write) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.to_csv())?;
    }
    Ok(())
}

pub fn csv_string(rows: &[Row]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{CSV_HEADER}");
    for r in rows {
        let _ = writeln!(s, "{}", r.to_csv());
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    /// Normal-approximation 95% half-width.
    pub ci95: f64,
}

pub fn mean_ci(xs: &[f64]) -> Result<Stat> {
    if xs.len() < 2 {
        return Err(Error::InsufficientSeeds(xs.len()));
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(Stat {
        mean,
        ci95: 1.96 * (var / n).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub protocol: ProtocolKind,
    pub point: f64,
    pub runs: usize,
    pub pdr: Stat,
    pub delay_s: Stat,
    pub energy_mwh: Stat,
}

pub const SUMMARY_HEADER: &str = "protocol,point,runs,pdr_mean,pdr_ci95,delay_mean_s,delay_ci95_s,energy_mean_mwh,energy_ci95_mwh";

impl Summary {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.protocol,
            self.point,
            self.runs,
            self.pdr.mean,
            self.pdr.ci95,
            self.delay_s.mean,
            self.delay_s.ci95,
            self.energy_mwh.mean,
            self.energy_mwh.ci95
        )
    }
}

/// Per (protocol, point) means and 95% half-widths over the ok rows. Runs that delivered
/// nothing have no delay sample and are left out of the delay statistic.
pub fn summarize(rows: &[Row], axis: Axis) -> Result<Vec<Summary>> {
    let mut groups: BTreeMap<(ProtocolKind, u64), Vec<&Row>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.status == "ok") {
        groups
            .entry((r.protocol, axis.value(r).to_bits()))
            .or_default()
            .push(r);
    }
    let mut out = Vec::new();
    for ((protocol, bits), rs) in groups {
        let pdrs: Vec<f64> = rs.iter().map(|r| r.pdr).collect();
        let delays: Vec<f64> = rs.iter().filter_map(|r| r.mean_delay_s).collect();
        let energy: Vec<f64> = rs.iter().map(|r| r.energy_total_mwh).collect();
        let delay_s = if delays.len() >= 2 {
            mean_ci(&delays)?
        } else {
            Stat {
                mean: delays.first().copied().unwrap_or(f64::NAN),
                ci95: f64::NAN,
            }
        };
        out.push(Summary {
            protocol,
            point: f64::from_bits(bits),
            runs: rs.len(),
            pdr: mean_ci(&pdrs)?,
            delay_s,
            energy_mwh: mean_ci(&energy)?,
        });
    }
    out.sort_by(|a, b| {
        a.protocol
            .cmp(&b.protocol)
            .then(a.point.total_cmp(&b.point))
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(pdr: f64) -> Row {
        let mut r = Row::blank(&Scenario::default());
        r.pdr = pdr;
        r.mean_delay_s = Some(1.0);
        r.energy_total_mwh = 2.0;
        r
    }

    #[test]
    fn header_is_exact() {
        assert_eq!(CSV_HEADER.split(',').count(), 17);
        assert_eq!(row(0.5).to_csv().split(',').count(), 17);
    }

    #[test]
    fn summary_examples() {
        let s = summarize(&[row(0.6), row(0.8)], Axis::Load).unwrap();
        assert!((s[0].pdr.mean - 0.7).abs() < 1e-12);
        let same = summarize(&[row(0.5), row(0.5), row(0.5)], Axis::Load).unwrap();
        assert_eq!(same[0].pdr.ci95, 0.0);
        assert!(matches!(
            summarize(&[row(0.5)], Axis::Load),
            Err(Error::InsufficientSeeds(1))
        ));
        // half-width scales with 1/sqrt(n) for the same spread
        let small = mean_ci(&[0.0, 1.0, 0.0, 1.0]).unwrap().ci95;
        let big = mean_ci(&[0.0, 1.0].repeat(8)).unwrap().ci95;
        assert!(big < small);
    }

    #[test]
    fn sweep_counts_and_order() {
        let spec = SweepSpec {
            axis: Axis::Load,
            points: vec![40.0, 80.0, 120.0, 160.0, 200.0],
            seeds_per_point: 20,
            protocols: ProtocolKind::ALL.to_vec(),
        };
        let jobs = spec.scenarios(&Scenario::default());
        assert_eq!(jobs.len(), 300);
        assert_eq!(jobs[0].protocol, ProtocolKind::Esrpsdc);
        assert_eq!(jobs[20].traffic.load_packets, 80);
        assert_eq!(jobs[299].protocol, ProtocolKind::Pegasis);
        assert!(SweepSpec {
            points: vec![2.0, 1.0],
            ..spec.clone()
        }
        .validate()
        .is_err());
        assert!(SweepSpec {
            seeds_per_point: 0,
            ..spec
        }
        .validate()
        .is_err());
    }
}
