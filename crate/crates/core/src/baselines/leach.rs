//! LEACH: per-round self-election, strongest-signal joining, single-hop head-to-BS transfer.

use std::collections::BTreeSet;
use std::rc::Rc;

use rand::Rng;

use crate::adversary::AttackConfig;
use crate::engine::{EventKind, Protocol, World};
use crate::error::{Error, Result};
use crate::model::{Body, Dest, NodeId, NodeState, Packet, PacketKind, Reading, Role};
use crate::radio::{min_tx_power_for, LinkBudget};
use crate::traffic::Traffic;

#[derive(Debug, Clone, PartialEq)]
pub struct LeachConfig {
    /// Desired head share; `None` uses n_clusters / n_nodes.
    pub p: Option<f64>,
    pub advert_power_dbm: f64,
    pub round_s: f64,
    pub slot_s: f64,
    pub control_bytes: u32,
    pub aggregate_bytes: u32,
}

impl Default for LeachConfig {
    fn default() -> Self {
        LeachConfig {
            p: None,
            advert_power_dbm: -20.0,
            round_s: 2.0,
            slot_s: 0.04,
            control_bytes: 16,
            aggregate_bytes: 70,
        }
    }
}

impl LeachConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(p) = self.p {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::Validation {
                    key: "leach.p".into(),
                    msg: "must be in (0,1)".into(),
                });
            }
        }
        if !(self.round_s > 0.0 && self.slot_s > 0.0) {
            return Err(Error::Validation {
                key: "leach.round_s".into(),
                msg: "must be positive".into(),
            });
        }
        Ok(())
    }
}

/// T(n) = p / (1 − p·(r mod ceil(1/p))) for nodes in G, 0 otherwise.
pub fn leach_threshold(p: f64, round: u32, in_g: bool) -> f64 {
    if !in_g {
        return 0.0;
    }
    let period = (1.0 / p).ceil() as u32;
    let t = p / (1.0 - p * (round % period) as f64);
    t.clamp(0.0, 1.0)
}

/// Self-election over the alive sensors; heads' round counters reset, everyone else's advance.
pub fn leach_elect(nodes: &mut [NodeState], round: u32, p: f64, rng: &mut impl Rng) -> Vec<NodeId> {
    let period = (1.0 / p).ceil() as u32;
    let mut heads = Vec::new();
    for n in nodes.iter_mut().filter(|n| !n.is_bs() && n.alive()) {
        let t = leach_threshold(p, round, n.rounds_since_ch >= period);
        if rng.random::<f64>() < t {
            n.rounds_since_ch = 0;
            heads.push(n.id);
        } else {
            n.rounds_since_ch = n.rounds_since_ch.saturating_add(1);
        }
    }
    heads
}

#[derive(Debug, Clone, Copy)]
struct Heard {
    from: NodeId,
    snr: f64,
    rssi: f64,
    power: f64,
}

#[derive(Debug, Clone, Default)]
struct Local {
    head: bool,
    forger: bool,
    ch: Option<NodeId>,
    power: f64,
    adverts: Vec<Heard>,
    members: Vec<NodeId>,
    slot: Option<u32>,
    inbox: Vec<Reading>,
    inbox_bits: u64,
}

const T_ADVERT: u32 = 1;
const T_SCHED: u32 = 2;
const T_SLOT: u32 = 3;
const T_AGG: u32 = 4;
const P_JOIN: u32 = 1;
const P_SCHED: u32 = 2;
const P_FRAME: u32 = 3;

pub struct Leach {
    pub cfg: LeachConfig,
    pub p: f64,
    pub attack: AttackConfig,
    pub traffic: Traffic,
    /// Honestly elected heads per round.
    pub heads_per_round: Vec<usize>,
    loc: Vec<Local>,
    heads: Vec<NodeId>,
    round: u32,
    boundary_s: f64,
}

impl Leach {
    pub fn new(
        w: &World,
        cfg: LeachConfig,
        n_clusters: usize,
        attack: AttackConfig,
        traffic: Traffic,
    ) -> Leach {
        let sensors = w.nodes.len().saturating_sub(1).max(1);
        let p = cfg
            .p
            .unwrap_or(n_clusters as f64 / sensors as f64)
            .clamp(1e-6, 0.999);
        Leach {
            cfg,
            p,
            attack,
            traffic,
            heads_per_round: Vec::new(),
            loc: vec![Local::default(); w.nodes.len()],
            heads: Vec::new(),
            round: 0,
            boundary_s: 0.0,
        }
    }

    fn hostile(&self, w: &World, id: NodeId) -> bool {
        w.node(id).compromised && w.now() >= self.attack.activation_s
    }

    fn send(w: &mut World, pkt: Packet, from: NodeId, power: f64) -> bool {
        w.transmit(pkt, from, power)
            .map(|r| r.reached_dst)
            .unwrap_or(false)
    }

    fn on_round(&mut self, w: &mut World, k: u32) {
        let busy = !self.traffic.exhausted()
            || self
                .heads
                .iter()
                .any(|h| !self.loc[h.idx()].inbox.is_empty());
        if k > 0 && !busy {
            return;
        }
        self.round = k;
        self.boundary_s = w.now();
        for h in std::mem::take(&mut self.heads) {
            self.flush(w, h);
        }
        for l in self.loc.iter_mut() {
            *l = Local::default();
        }
        for n in w.nodes.iter_mut().filter(|n| !n.is_bs()) {
            n.role = Role::Member;
        }
        let elected = leach_elect(&mut w.nodes, k, self.p, &mut w.rng);
        self.heads_per_round.push(elected.len());
        let mut heads: BTreeSet<NodeId> = elected.into_iter().collect();
        if self.attack.false_advert {
            for i in 1..w.nodes.len() {
                let id = NodeId(i as u32);
                if w.alive(id) && self.hostile(w, id) {
                    heads.insert(id);
                    self.loc[i].forger = true;
                }
            }
        }
        self.heads = heads.into_iter().collect();
        for &h in &self.heads {
            self.loc[h.idx()].head = true;
            w.node_mut(h).role = Role::ClusterHead;
            let j = w.jitter();
            w.timer(j, h, T_ADVERT, 0);
        }
        w.schedule_in(0.2, EventKind::PhaseBoundary(P_JOIN));
        w.schedule_in(0.4, EventKind::PhaseBoundary(P_SCHED));
        w.schedule_in(0.5, EventKind::PhaseBoundary(P_FRAME));
    }

    fn on_join(&mut self, w: &mut World) {
        let now = w.now();
        for i in 1..w.nodes.len() {
            let me = NodeId(i as u32);
            if self.loc[i].head || !w.alive(me) {
                continue;
            }
            let best = self.loc[i]
                .adverts
                .iter()
                .fold(None::<Heard>, |b, h| match b {
                    Some(b)
                        if (b.snr, std::cmp::Reverse(b.from))
                            >= (h.snr, std::cmp::Reverse(h.from)) =>
                    {
                        Some(b)
                    }
                    _ => Some(*h),
                });
            let Some(best) = best else { continue };
            let power = min_tx_power_for(best.rssi, best.power, &w.radio)
                .unwrap_or_else(|_| w.radio.max_power());
            let pkt = Packet::new(
                PacketKind::JoinConfirm,
                me,
                Dest::Node(best.from),
                self.cfg.control_bytes,
                now,
            );
            if Self::send(w, pkt, me, power) {
                self.loc[i].ch = Some(best.from);
                self.loc[i].power = power;
                self.loc[best.from.idx()].members.push(me);
            }
        }
    }

    fn on_frame(&mut self, w: &mut World) {
        let start = w.now();
        let mut max_slots = 0;
        for i in 1..w.nodes.len() {
            let id = NodeId(i as u32);
            let l = &self.loc[i];
            if l.head || !w.alive(id) {
                continue;
            }
            // nodes without a head transmit straight to the BS in a slot of their own
            let slot = l.slot.unwrap_or(0);
            max_slots = max_slots.max(slot + 1);
            w.timer_at(
                start + slot as f64 * self.cfg.slot_s,
                id,
                T_SLOT,
                self.round as u64,
            );
        }
        let agg = start + max_slots as f64 * self.cfg.slot_s + 0.1;
        for &h in &self.heads {
            w.timer_at(agg, h, T_AGG, self.round as u64);
        }
        let next = (self.boundary_s + self.cfg.round_s).max(agg + 0.3);
        w.schedule_at(next, EventKind::RoundBoundary(self.round + 1))
            .expect("future boundary");
    }

    fn on_slot(&mut self, w: &mut World, me: NodeId) {
        if !w.alive(me) {
            return;
        }
        let now = w.now();
        let rs = self.traffic.take(me, now);
        if rs.is_empty() {
            return;
        }
        for r in &rs {
            w.metrics.record_attempt(now, r);
        }
        if self.hostile(w, me) {
            w.metrics.malicious_drops += rs.len() as u64;
            return;
        }
        let bytes = rs.iter().map(|r| r.payload_bytes).sum();
        let (dst, power) = match self.loc[me.idx()].ch {
            Some(ch) => (ch, self.loc[me.idx()].power),
            None => (
                NodeId::BS,
                w.radio.power_for_distance(w.dist(me, NodeId::BS)),
            ),
        };
        let pkt = Packet::new(PacketKind::Data, me, Dest::Node(dst), bytes, now)
            .with_body(Body::Readings(rs));
        Self::send(w, pkt, me, power);
    }

    fn flush(&mut self, w: &mut World, me: NodeId) {
        let now = w.now();
        let l = &mut self.loc[me.idx()];
        let mut readings = std::mem::take(&mut l.inbox);
        let bits = std::mem::take(&mut l.inbox_bits);
        if !w.alive(me) {
            return;
        }
        if l.head {
            let own = self.traffic.take(me, now);
            for r in &own {
                w.metrics.record_attempt(now, r);
            }
            if self.hostile(w, me) {
                w.metrics.malicious_drops += own.len() as u64;
            } else {
                readings.extend(own);
            }
        }
        if readings.is_empty() || !w.debit_aggregation(me, bits) {
            return;
        }
        let pkt = Packet::new(
            PacketKind::Aggregate,
            me,
            Dest::Node(NodeId::BS),
            self.cfg.aggregate_bytes,
            now,
        )
        .with_body(Body::Readings(readings));
        let p = w.radio.max_power();
        Self::send(w, pkt, me, p);
    }

    fn on_deliver(
        &mut self,
        w: &mut World,
        me: NodeId,
        pkt: Rc<Packet>,
        link: LinkBudget,
        power: f64,
    ) {
        match pkt.kind {
            PacketKind::ChAdvert if !me.is_bs() => {
                let bonus = if self.loc[pkt.src.idx()].forger {
                    self.attack.snr_bonus_db
                } else {
                    0.0
                };
                self.loc[me.idx()].adverts.push(Heard {
                    from: pkt.src,
                    snr: link.snr_db + bonus,
                    rssi: link.rx_power_dbm,
                    power,
                });
            }
            PacketKind::TdmaSchedule if !me.is_bs() => {
                if let Body::Schedule(s) = &pkt.body {
                    if self.loc[me.idx()].ch == Some(pkt.src) {
                        self.loc[me.idx()].slot = s.iter().find(|x| x.0 == me).map(|x| x.1);
                    }
                }
            }
            PacketKind::Data | PacketKind::Aggregate => {
                let Body::Readings(rs) = &pkt.body else {
                    return;
                };
                if me.is_bs() {
                    let now = w.now();
                    w.metrics.record_bs_delivery(rs, now);
                    return;
                }
                if self.hostile(w, me) && self.attack.drops(&mut w.rng) {
                    w.metrics.malicious_drops += rs.len() as u64;
                    return;
                }
                let l = &mut self.loc[me.idx()];
                l.inbox.extend(rs.iter().copied());
                l.inbox_bits += pkt.bits();
            }
            _ => {}
        }
    }
}

impl Protocol for Leach {
    fn start(&mut self, w: &mut World) {
        w.schedule_in(0.0, EventKind::RoundBoundary(0));
    }

    fn handle(&mut self, w: &mut World, ev: EventKind) {
        match ev {
            EventKind::RoundBoundary(k) => self.on_round(w, k),
            EventKind::PhaseBoundary(P_JOIN) => self.on_join(w),
            EventKind::PhaseBoundary(P_SCHED) => {
                for h in self.heads.clone() {
                    let j = w.jitter();
                    w.timer(j, h, T_SCHED, 0);
                }
            }
            EventKind::PhaseBoundary(P_FRAME) => self.on_frame(w),
            EventKind::PhaseBoundary(_) => {}
            EventKind::TimerExpiry { owner, tag, arg } => match tag {
                T_ADVERT if w.alive(owner) => {
                    let now = w.now();
                    let pkt = Packet::new(
                        PacketKind::ChAdvert,
                        owner,
                        Dest::Broadcast,
                        self.cfg.control_bytes,
                        now,
                    );
                    let p = self.cfg.advert_power_dbm;
                    w.transmit(pkt, owner, p).ok();
                }
                T_SCHED if w.alive(owner) => {
                    let now = w.now();
                    let mut ids = self.loc[owner.idx()].members.clone();
                    ids.sort();
                    let sched: Vec<(NodeId, u32)> = ids
                        .into_iter()
                        .enumerate()
                        .map(|(i, id)| (id, i as u32))
                        .collect();
                    let bytes = self.cfg.control_bytes + 2 * sched.len() as u32;
                    let pkt =
                        Packet::new(PacketKind::TdmaSchedule, owner, Dest::Broadcast, bytes, now)
                            .with_body(Body::Schedule(Rc::new(sched)));
                    let p = self.cfg.advert_power_dbm;
                    w.transmit(pkt, owner, p).ok();
                }
                T_SLOT if arg as u32 == self.round => self.on_slot(w, owner),
                T_AGG if arg as u32 == self.round => self.flush(w, owner),
                _ => {}
            },
            EventKind::Deliver {
                to,
                pkt,
                link,
                power_dbm,
            } => self.on_deliver(w, to, pkt, link, power_dbm),
        }
    }
}
