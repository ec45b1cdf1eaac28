//! Discrete-event kernel: clock, ordered event queue, radio delivery and energy debiting.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::io::Write;
use std::rc::Rc;

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::metrics::MetricsLedger;
use crate::model::{distance, Dest, NodeId, NodeState, Packet};
use crate::radio::{link_budget, rx_energy, tx_energy, EnergyModel, LinkBudget, RadioConfig};

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Run RNG: ChaCha8 seeded from the scenario's 64-bit seed.
pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    Deliver {
        to: NodeId,
        pkt: Rc<Packet>,
        link: LinkBudget,
        power_dbm: f64,
    },
    TimerExpiry {
        owner: NodeId,
        tag: u32,
        arg: u64,
    },
    RoundBoundary(u32),
    PhaseBoundary(u32),
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::Deliver { .. } => "deliver",
            EventKind::TimerExpiry { .. } => "timer",
            EventKind::RoundBoundary(_) => "round",
            EventKind::PhaseBoundary(_) => "phase",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Event {
    pub fire_at_s: f64,
    pub seq: u64,
    pub kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Event {}

impl Ord for Event {
    // reversed so the max-heap pops the earliest (time, seq)
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .fire_at_s
            .total_cmp(&self.fire_at_s)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimClock {
    pub now_s: f64,
    pub end_s: f64,
}

/// Protocol logic plugged into the kernel.
pub trait Protocol {
    fn start(&mut self, w: &mut World);
    fn handle(&mut self, w: &mut World, ev: EventKind);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TxReport {
    pub receivers: u32,
    pub reached_dst: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceSummary {
    pub events: u64,
    pub now_s: f64,
    pub alive: usize,
    pub energy_remaining_j: f64,
    pub nodes: Vec<NodeState>,
}

/// Everything protocol handlers may touch.
pub struct World {
    pub nodes: Vec<NodeState>,
    pub radio: RadioConfig,
    pub energy: EnergyModel,
    pub clock: SimClock,
    pub rng: Rng,
    pub metrics: MetricsLedger,
    pub processing_delay_s: f64,
    pub jitter_max_s: f64,
    pub death_s: Vec<Option<f64>>,
    pub events_processed: u64,
    /// Transmit energy charged per packet kind.
    pub tx_energy_by_kind: BTreeMap<&'static str, f64>,
    queue: BinaryHeap<Event>,
    seq: u64,
    dist: Vec<f64>,
    debited_j: f64,
    initial_total_j: f64,
    trace: Option<Box<dyn Write>>,
}

impl World {
    pub fn new(
        nodes: Vec<NodeState>,
        radio: RadioConfig,
        energy: EnergyModel,
        end_s: f64,
        seed: u64,
    ) -> Self {
        let n = nodes.len();
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = distance(nodes[i].pos, nodes[j].pos);
                dist[i * n + j] = d;
                dist[j * n + i] = d;
            }
        }
        let initial_total_j = nodes
            .iter()
            .filter(|s| !s.is_bs())
            .map(|s| s.energy_j)
            .sum();
        World {
            death_s: vec![None; n],
            nodes,
            radio,
            energy,
            clock: SimClock { now_s: 0.0, end_s },
            rng: rng_from_seed(seed),
            metrics: MetricsLedger::default(),
            processing_delay_s: 0.001,
            jitter_max_s: 0.010,
            events_processed: 0,
            queue: BinaryHeap::new(),
            seq: 0,
            dist,
            debited_j: 0.0,
            tx_energy_by_kind: BTreeMap::new(),
            initial_total_j,
            trace: None,
        }
    }

    pub fn set_trace(&mut self, w: Box<dyn Write>) {
        self.trace = Some(w);
    }

    pub fn now(&self) -> f64 {
        self.clock.now_s
    }

    #[inline]
    pub fn dist(&self, a: NodeId, b: NodeId) -> f64 {
        self.dist[a.idx() * self.nodes.len() + b.idx()]
    }

    pub fn node(&self, id: NodeId) -> &NodeState {
        &self.nodes[id.idx()]
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut NodeState {
        &mut self.nodes[id.idx()]
    }

    pub fn alive(&self, id: NodeId) -> bool {
        self.nodes[id.idx()].alive()
    }

    pub fn sensors(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().filter(|n| !n.is_bs()).map(|n| n.id)
    }

    pub fn schedule_at(&mut self, fire_at_s: f64, kind: EventKind) -> Result<()> {
        if fire_at_s < self.clock.now_s {
            return Err(Error::PastEvent {
                at: fire_at_s,
                now: self.clock.now_s,
            });
        }
        self.seq += 1;
        self.queue.push(Event {
            fire_at_s,
            seq: self.seq,
            kind,
        });
        Ok(())
    }

    pub fn schedule_in(&mut self, delay_s: f64, kind: EventKind) {
        let at = self.clock.now_s + delay_s.max(0.0);
        self.schedule_at(at, kind).expect("non-negative delay");
    }

    pub fn timer(&mut self, delay_s: f64, owner: NodeId, tag: u32, arg: u64) {
        self.schedule_in(delay_s, EventKind::TimerExpiry { owner, tag, arg });
    }

    pub fn timer_at(&mut self, at_s: f64, owner: NodeId, tag: u32, arg: u64) {
        let at = at_s.max(self.clock.now_s);
        self.schedule_at(at, EventKind::TimerExpiry { owner, tag, arg })
            .expect("clamped to now");
    }

    pub fn jitter(&mut self) -> f64 {
        self.rng.random::<f64>() * self.jitter_max_s
    }

    /// Debits up to `joules`; a node that cannot pay in full is drained and dies. Returns whether it paid in full.
    pub fn debit(&mut self, id: NodeId, joules: f64) -> bool {
        let now = self.clock.now_s;
        let n = &mut self.nodes[id.idx()];
        if n.is_bs() {
            return true;
        }
        if n.energy_j >= joules {
            n.energy_j -= joules;
            self.debited_j += joules;
            if n.energy_j <= 0.0 {
                n.energy_j = 0.0;
                self.death_s[id.idx()].get_or_insert(now);
            }
            true
        } else {
            self.debited_j += n.energy_j;
            n.energy_j = 0.0;
            self.death_s[id.idx()].get_or_insert(now);
            false
        }
    }

    pub fn debit_aggregation(&mut self, id: NodeId, bits: u64) -> bool {
        let j = self.energy.e_aggregate_j_per_bit * bits as f64;
        self.debit(id, j)
    }

    pub fn total_debited_j(&self) -> f64 {
        self.debited_j
    }

    pub fn initial_total_j(&self) -> f64 {
        self.initial_total_j
    }

    pub fn remaining_total_j(&self) -> f64 {
        self.nodes
            .iter()
            .filter(|n| !n.is_bs())
            .map(|n| n.energy_j)
            .sum()
    }

    pub fn link(&self, from: NodeId, to: NodeId, power_dbm: f64) -> Option<LinkBudget> {
        let d = self.dist(from, to);
        if d <= 0.0 {
            return None;
        }
        link_budget(power_dbm, d, &self.radio).ok()
    }

    /// Sends `pkt` from `from` at `power_dbm`. The sender pays for the actual distance to a unicast
    /// destination (or the level's coverage radius for broadcasts); each receiver pays on delivery.
    pub fn transmit(&mut self, pkt: Packet, from: NodeId, power_dbm: f64) -> Result<TxReport> {
        if !self.alive(from) {
            return Err(Error::DeadSender(from));
        }
        let bits = pkt.bits();
        let reach_m = self.radio.range_m(power_dbm);
        let energy_d = match pkt.dst {
            Dest::Node(d) => self.dist(from, d).min(reach_m),
            Dest::Broadcast => reach_m,
        };
        let cost = tx_energy(bits, energy_d, &self.energy);
        *self.tx_energy_by_kind.entry(pkt.kind.name()).or_default() += cost;
        if !self.debit(from, cost) {
            return Err(Error::InsufficientEnergy(from));
        }
        let ser = self.radio.serialization_s(bits);
        let pkt = Rc::new(pkt);
        let mut report = TxReport::default();
        let mut deliver = |w: &mut World, to: NodeId| {
            let n = &w.nodes[to.idx()];
            if to == from || !n.alive() || !n.awake {
                return;
            }
            let d = w.dist(from, to);
            if d > reach_m || d <= 0.0 {
                return;
            }
            let link = link_budget(power_dbm, d, &w.radio).expect("positive distance");
            if !link.receivable {
                return;
            }
            if w.radio.packet_error_prob > 0.0 && w.rng.random::<f64>() < w.radio.packet_error_prob
            {
                return;
            }
            report.receivers += 1;
            let kind = EventKind::Deliver {
                to,
                pkt: Rc::clone(&pkt),
                link,
                power_dbm,
            };
            w.schedule_in(ser + d / SPEED_OF_LIGHT, kind);
        };
        match pkt.dst {
            Dest::Node(d) => {
                deliver(self, d);
                report.reached_dst = report.receivers == 1;
            }
            Dest::Broadcast => {
                for i in 0..self.nodes.len() {
                    deliver(self, NodeId(i as u32));
                }
            }
        }
        Ok(report)
    }

    fn write_trace(&mut self, ev: &Event) {
        let Some(out) = self.trace.as_mut() else {
            return;
        };
        let line = match &ev.kind {
            EventKind::Deliver { to, pkt, .. } => format!(
                "t={:.6} kind=deliver src={} dst={} pkt={} bytes={}",
                ev.fire_at_s,
                pkt.src,
                to,
                pkt.kind.name(),
                pkt.payload_bytes
            ),
            EventKind::TimerExpiry { owner, tag, .. } => {
                format!(
                    "t={:.6} kind=timer src={owner} dst={owner} pkt=timer{tag} bytes=0",
                    ev.fire_at_s
                )
            }
            EventKind::RoundBoundary(r) => format!(
                "t={:.6} kind=round src=bs dst=* pkt=round{r} bytes=0",
                ev.fire_at_s
            ),
            EventKind::PhaseBoundary(p) => format!(
                "t={:.6} kind=phase src=bs dst=* pkt=phase{p} bytes=0",
                ev.fire_at_s
            ),
        };
        // Trace output is best-effort diagnostics.
        let _ = writeln!(out, "{line}");
    }

    fn pop_due(&mut self, until_s: f64) -> Option<Event> {
        let limit = until_s.min(self.clock.end_s);
        match self.queue.peek() {
            Some(top) if top.fire_at_s <= limit => self.queue.pop(),
            _ => None,
        }
    }

    pub fn summary(&self) -> TraceSummary {
        TraceSummary {
            events: self.events_processed,
            now_s: self.clock.now_s,
            alive: self
                .nodes
                .iter()
                .filter(|n| !n.is_bs() && n.alive())
                .count(),
            energy_remaining_j: self.remaining_total_j(),
            nodes: self.nodes.clone(),
        }
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn flush_trace(&mut self) {
        if let Some(t) = self.trace.as_mut() {
            let _ = t.flush();
        }
    }
}

/// A world paired with the protocol driving it.
pub struct Sim<P: Protocol> {
    pub world: World,
    pub proto: P,
    started: bool,
}

impl<P: Protocol> Sim<P> {
    pub fn new(world: World, proto: P) -> Self {
        Sim {
            world,
            proto,
            started: false,
        }
    }

    pub fn run(&mut self, until_s: f64) -> TraceSummary {
        if !self.started {
            self.started = true;
            self.proto.start(&mut self.world);
        }
        while let Some(ev) = self.world.pop_due(until_s) {
            assert!(ev.fire_at_s >= self.world.clock.now_s, "event out of order");
            self.world.clock.now_s = ev.fire_at_s;
            self.world.events_processed += 1;
            self.world.write_trace(&ev);
            if let EventKind::Deliver { to, pkt, .. } = &ev.kind {
                // receivers pay on arrival; a receiver that died in flight hears nothing
                if !self.world.alive(*to) {
                    continue;
                }
                if !self
                    .world
                    .debit(*to, rx_energy(pkt.bits(), &self.world.energy))
                {
                    continue;
                }
            }
            self.proto.handle(&mut self.world, ev.kind);
        }
        self.world.flush_trace();
        self.world.summary()
    }
}
