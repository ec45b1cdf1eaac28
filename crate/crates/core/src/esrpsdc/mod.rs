//! SNR-driven dynamic clustering with energy-gated head election and sinkhole isolation.

pub mod phases;

use std::collections::{BTreeMap, BTreeSet};
use std::rc::Rc;

use crate::adversary::{flag_affected, locate_sinkhole, AttackConfig, DetectConfig, FlowResponse};
use crate::engine::{EventKind, Protocol, World};
use crate::error::{Error, Result};
use crate::model::{
    Body, ClusterTable, Dest, LevelBand, NodeId, Packet, PacketKind, Reading, Role, ThresholdParams,
};
use crate::radio::{min_tx_power_for, LinkBudget};
use crate::traffic::Traffic;

pub use phases::{
    bs_level_sweep, build_schedule, choose_next_hop, elect_heads, grid_shape, level_for_distance,
    partition_clusters, random_suffix, resolve_suffix, Election, MemberId, RouteCand,
};

#[derive(Debug, Clone, PartialEq)]
pub struct EsrpsdcConfig {
    pub n_clusters: usize,
    pub threshold: ThresholdParams,
    /// Width m of each member-ID suffix block.
    pub suffix_bytes: usize,
    pub rounds_per_epoch: u32,
    /// A head abdicates once its energy falls below this share of its at-election energy.
    pub abdicate_fraction: f64,
    pub round_s: f64,
    pub slot_s: f64,
    /// Offset between aggregation stages of adjacent levels.
    pub stage_s: f64,
    pub setup_s: f64,
    pub advert_power_dbm: f64,
    pub state_power_dbm: f64,
    pub route_power_dbm: f64,
    pub flood_power_dbm: f64,
    pub control_bytes: u32,
    pub aggregate_bytes: u32,
    pub collect_timeout_s: f64,
}

impl Default for EsrpsdcConfig {
    fn default() -> Self {
        EsrpsdcConfig {
            n_clusters: 20,
            threshold: ThresholdParams::default(),
            suffix_bytes: 1,
            rounds_per_epoch: 10,
            abdicate_fraction: 0.5,
            round_s: 2.0,
            slot_s: 0.04,
            stage_s: 0.05,
            setup_s: 1.3,
            advert_power_dbm: -25.0,
            state_power_dbm: -35.0,
            route_power_dbm: -5.0,
            flood_power_dbm: -25.0,
            control_bytes: 16,
            aggregate_bytes: 70,
            collect_timeout_s: 3.0,
        }
    }
}

impl EsrpsdcConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| {
            Err(Error::Validation {
                key: key.into(),
                msg: msg.into(),
            })
        };
        self.threshold.validate()?;
        if !(1..=4).contains(&self.suffix_bytes) {
            return bad("esrpsdc.m", "must be 1..=4 bytes");
        }
        if self.rounds_per_epoch == 0 {
            return bad("esrpsdc.epoch_rounds", "must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.abdicate_fraction) {
            return bad("esrpsdc.abdicate_fraction", "must be in [0,1]");
        }
        if self.round_s <= 0.0 || self.slot_s <= 0.0 || self.stage_s <= 0.0 || self.setup_s <= 0.0 {
            return bad("esrpsdc.round_s", "timing constants must be positive");
        }
        if self.control_bytes == 0 || self.aggregate_bytes == 0 {
            return bad("esrpsdc.control_bytes", "packet sizes must be positive");
        }
        Ok(())
    }
}

/// Counters for the structural properties checked after every formation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Invariants {
    pub formations: u32,
    pub fallback_elections: u32,
    pub z_window_repeats: u32,
    pub dissolved_clusters: u32,
    pub abdications: u32,
    pub orphans: u64,
    pub depth_violations: u32,
    pub member_id_duplicates: u32,
    pub suffix_collisions_resolved: u32,
    pub schedule_violations: u32,
    pub table_violations: u32,
    pub level_violations: u32,
    pub aggregate_hops: u64,
    pub max_depth: u8,
}

impl Invariants {
    pub fn violations(&self) -> u32 {
        self.depth_violations
            + self.member_id_duplicates
            + self.schedule_violations
            + self.table_violations
            + self.level_violations
            + self.z_window_repeats
    }
}

#[derive(Debug, Clone, Copy)]
struct Heard {
    from: NodeId,
    snr: f64,
    rssi: f64,
    power: f64,
}

#[derive(Debug, Clone)]
struct Member {
    id: NodeId,
    mid: MemberId,
    via: Option<NodeId>,
}

#[derive(Debug, Clone, Default)]
struct Local {
    sector: usize,
    bs_link: Option<(f64, f64)>,
    head: bool,
    forger: bool,
    ch: Option<NodeId>,
    parent: Option<NodeId>,
    parent_power: f64,
    depth: u8,
    adverts: Vec<Heard>,
    states: Vec<Heard>,
    routes: Vec<RouteCand>,
    hops: Option<u32>,
    children: Vec<NodeId>,
    members: Vec<Member>,
    mid: Option<MemberId>,
    slot: Option<u32>,
    schedule: Rc<Vec<(NodeId, u32)>>,
    at_election_j: f64,
    inbox: Vec<Reading>,
    inbox_bits: u64,
    agg_sent_round: Option<u32>,
    bl_known: u32,
    flood_seen: u32,
    flood_parent: Option<(NodeId, f64)>,
}

const T_BEACON: u32 = 1;
const T_HELLO: u32 = 2;
const T_ADVERT: u32 = 3;
const T_ROUTE: u32 = 4;
const T_STATE: u32 = 5;
const T_SCHED: u32 = 6;
const T_RESCHED: u32 = 7;
const T_SLOT: u32 = 8;
const T_AGG: u32 = 9;
const T_FWD: u32 = 10;
const T_FLOOD: u32 = 11;
const T_RESPOND: u32 = 12;
const T_BLACKLIST: u32 = 13;

const P_INIT_DONE: u32 = 1;
const P_JOIN: u32 = 2;
const P_JOIN2: u32 = 3;
const P_SCHED: u32 = 4;
const P_CHECK: u32 = 5;
const P_COLLECT: u32 = 6;

pub struct Esrpsdc {
    pub cfg: EsrpsdcConfig,
    pub attack: AttackConfig,
    pub detect: DetectConfig,
    pub traffic: Traffic,
    pub bands: Vec<LevelBand>,
    pub sectors: Vec<Vec<NodeId>>,
    pub tables: Vec<ClusterTable>,
    pub inv: Invariants,
    loc: Vec<Local>,
    heads: Vec<NodeId>,
    round: u32,
    epoch: u32,
    epoch_round: u32,
    reform_pending: bool,
    last_boundary_s: f64,
    blacklist: Vec<u32>,
    bl_version: u32,
    window_start_s: f64,
    rounds_since_detect: u32,
    flood_id: u32,
    affected: BTreeSet<NodeId>,
    responses: Vec<FlowResponse>,
    detecting: bool,
    slab: Vec<Option<(Packet, NodeId, f64)>>,
    free: Vec<usize>,
}

impl Esrpsdc {
    pub fn new(
        w: &World,
        cfg: EsrpsdcConfig,
        attack: AttackConfig,
        detect: DetectConfig,
        traffic: Traffic,
    ) -> Esrpsdc {
        let n = w.nodes.len();
        Esrpsdc {
            bands: w.radio.levels.clone(),
            cfg,
            attack,
            detect,
            traffic,
            sectors: Vec::new(),
            tables: Vec::new(),
            inv: Invariants::default(),
            loc: vec![Local::default(); n],
            heads: Vec::new(),
            round: 0,
            epoch: 0,
            epoch_round: 0,
            reform_pending: false,
            last_boundary_s: 0.0,
            blacklist: vec![0; n],
            bl_version: 0,
            window_start_s: 0.0,
            rounds_since_detect: 0,
            flood_id: 0,
            affected: BTreeSet::new(),
            responses: Vec::new(),
            detecting: false,
            slab: Vec::new(),
            free: Vec::new(),
        }
    }

    pub fn heads(&self) -> &[NodeId] {
        &self.heads
    }

    pub fn blacklisted(&self) -> BTreeSet<NodeId> {
        (0..self.blacklist.len())
            .filter(|&i| self.blacklist[i] != 0)
            .map(|i| NodeId(i as u32))
            .collect()
    }

    /// Parent of a node in the current membership forest.
    pub fn parent_of(&self, id: NodeId) -> Option<NodeId> {
        self.loc[id.idx()].parent
    }

    pub fn is_head(&self, id: NodeId) -> bool {
        self.loc[id.idx()].head
    }

    fn hostile(&self, w: &World, id: NodeId) -> bool {
        w.node(id).compromised && w.now() >= self.attack.activation_s
    }

    /// Whether `me` has heard that `other` is blacklisted.
    fn shunned(&self, me: NodeId, other: NodeId) -> bool {
        let v = self.blacklist[other.idx()];
        v != 0 && (me.is_bs() || v <= self.loc[me.idx()].bl_known)
    }

    fn eff_level(&self, w: &World, id: NodeId) -> u32 {
        match w.node(id).level {
            0 => self.bands.len() as u32 + 1,
            l => l,
        }
    }

    fn bonus(&self, w: &World, from: NodeId) -> f64 {
        if self.loc[from.idx()].forger && self.hostile(w, from) {
            self.attack.snr_bonus_db
        } else {
            0.0
        }
    }

    fn ctl(&self, kind: PacketKind, src: NodeId, dst: Dest, now: f64) -> Packet {
        Packet::new(kind, src, dst, self.cfg.control_bytes, now)
    }

    fn reply_power(w: &World, link: &LinkBudget, power: f64) -> f64 {
        min_tx_power_for(link.rx_power_dbm, power, &w.radio).unwrap_or_else(|_| w.radio.max_power())
    }

    fn send(w: &mut World, pkt: Packet, from: NodeId, power: f64) -> bool {
        w.transmit(pkt, from, power)
            .map(|r| r.reached_dst || r.receivers > 0)
            .unwrap_or(false)
    }

    fn unicast(w: &mut World, pkt: Packet, from: NodeId, power: f64) -> bool {
        w.transmit(pkt, from, power)
            .map(|r| r.reached_dst)
            .unwrap_or(false)
    }

    fn defer(&mut self, w: &mut World, pkt: Packet, from: NodeId, to: NodeId, power: f64) {
        let slot = match self.free.pop() {
            Some(i) => {
                self.slab[i] = Some((pkt, to, power));
                i
            }
            None => {
                self.slab.push(Some((pkt, to, power)));
                self.slab.len() - 1
            }
        };
        let d = w.processing_delay_s;
        w.timer(d, from, T_FWD, slot as u64);
    }

    fn bs_power(&self, w: &World, id: NodeId) -> f64 {
        match self.loc[id.idx()].bs_link {
            Some((rssi, p)) => {
                min_tx_power_for(rssi, p, &w.radio).unwrap_or_else(|_| w.radio.max_power())
            }
            None => w.radio.power_for_distance(w.dist(id, NodeId::BS)),
        }
    }

    fn next_hop(&self, w: &World, me: NodeId, failed: &[NodeId]) -> Option<RouteCand> {
        let l = &self.loc[me.idx()];
        choose_next_hop(&l.routes, self.eff_level(w, me), |n| {
            failed.contains(&n) || self.shunned(me, n) || !w.alive(n)
        })
    }

    // ---- initialization ----

    fn on_init_done(&mut self, w: &mut World) {
        let nodes: Vec<_> = w.nodes.iter().collect();
        match partition_clusters(&nodes, self.cfg.n_clusters) {
            Ok((sectors, tables)) => {
                for (i, s) in sectors.iter().enumerate() {
                    for id in s {
                        self.loc[id.idx()].sector = i;
                    }
                }
                self.sectors = sectors;
                self.tables = tables;
            }
            Err(_) => return,
        }
        w.schedule_in(0.1, EventKind::RoundBoundary(0));
    }

    // ---- formation ----

    fn formation(&mut self, w: &mut World) {
        let now = w.now();
        self.epoch += 1;
        self.inv.formations += 1;
        self.reform_pending = false;
        for h in std::mem::take(&mut self.heads) {
            self.flush_inbox(w, h);
        }
        for i in 1..w.nodes.len() {
            let keep = &self.loc[i];
            let fresh = Local {
                sector: keep.sector,
                bs_link: keep.bs_link,
                bl_known: keep.bl_known,
                flood_seen: keep.flood_seen,
                flood_parent: keep.flood_parent,
                ..Local::default()
            };
            self.loc[i] = fresh;
            let n = &mut w.nodes[i];
            n.rounds_since_ch = n.rounds_since_ch.saturating_add(1);
            n.member_id.clear();
            n.role = if self.blacklist[i] != 0 {
                Role::Malicious
            } else {
                Role::Member
            };
        }
        let period = self.cfg.threshold.period();
        let bs = w.node(NodeId::BS).pos;
        for s in 0..self.sectors.len() {
            let cands: Vec<_> = self.sectors[s]
                .iter()
                .filter(|id| self.blacklist[id.idx()] == 0 && w.alive(**id))
                .map(|id| w.nodes[id.idx()].clone())
                .collect();
            let refs: Vec<_> = cands.iter().collect();
            let table = ClusterTable::new(s as u32, refs.len() as u32);
            match elect_heads(
                &table,
                &refs,
                self.epoch,
                &self.cfg.threshold,
                &self.bands,
                bs,
                &mut w.rng,
            ) {
                Ok(e) => {
                    let (ch, ech) = e.table.ch.expect("elected");
                    let (nx, enx) = e.table.next_ch.expect("elected");
                    if e.fallback {
                        self.inv.fallback_elections += 1;
                    } else if w.node(ch).rounds_since_ch < period {
                        self.inv.z_window_repeats += 1;
                    }
                    if ech < enx || ch == nx {
                        self.inv.table_violations += 1;
                    }
                    let n = w.node_mut(ch);
                    n.role = Role::ClusterHead;
                    n.rounds_since_ch = 0;
                    w.node_mut(nx).role = Role::NextClusterHead;
                    let l = &mut self.loc[ch.idx()];
                    l.head = true;
                    l.at_election_j = ech;
                    l.mid = Some(MemberId::cluster(s as u32, self.cfg.suffix_bytes));
                    self.heads.push(ch);
                    self.tables[s] = e.table;
                }
                Err(_) => {
                    self.inv.dissolved_clusters += 1;
                    self.tables[s] = table;
                }
            }
        }
        if self.attack.false_advert && now >= self.attack.activation_s {
            for i in 1..w.nodes.len() {
                let id = NodeId(i as u32);
                if w.node(id).compromised
                    && w.alive(id)
                    && self.blacklist[i] == 0
                    && !self.loc[i].head
                {
                    let l = &mut self.loc[i];
                    l.head = true;
                    l.forger = true;
                    l.mid = Some(MemberId::cluster(l.sector as u32, self.cfg.suffix_bytes));
                    l.at_election_j = w.node(id).energy_j;
                    self.heads.push(id);
                }
            }
        }
        self.heads.sort();
        for h in self.heads.clone() {
            let j = w.jitter();
            w.timer(j, h, T_ADVERT, 0);
            let lvl = self.eff_level(w, h) as f64;
            let j = w.jitter();
            w.timer(0.1 + 0.05 * lvl + j, h, T_ROUTE, 0);
        }
        w.timer(0.05, NodeId::BS, T_ROUTE, 0);
        w.schedule_in(0.45, EventKind::PhaseBoundary(P_JOIN));
        w.schedule_in(0.65, EventKind::PhaseBoundary(P_JOIN2));
        w.schedule_in(0.85, EventKind::PhaseBoundary(P_SCHED));
        w.schedule_in(1.2, EventKind::PhaseBoundary(P_CHECK));
    }

    fn send_advert(&mut self, w: &mut World, h: NodeId) {
        if !w.alive(h) || !self.loc[h.idx()].head {
            return;
        }
        let now = w.now();
        let level = w.node(h).level;
        let body = Body::Advert {
            cluster: self.loc[h.idx()].sector as u32,
            level,
            hops: 0,
        };
        let pkt = self
            .ctl(PacketKind::ChAdvert, h, Dest::Broadcast, now)
            .with_body(body);
        Self::send(w, pkt, h, self.cfg.advert_power_dbm);
    }

    fn send_route_beacon(&mut self, w: &mut World, from: NodeId) {
        let now = w.now();
        let (level, hops, power) = if from.is_bs() {
            (0, 0, w.radio.bs_power_dbm[0])
        } else {
            if !w.alive(from) || !self.loc[from.idx()].head {
                return;
            }
            let lvl = self.eff_level(w, from);
            let hops = if self.loc[from.idx()].forger && self.hostile(w, from) {
                Some(1)
            } else {
                self.loc[from.idx()].hops
            };
            let Some(hops) = hops else { return };
            (lvl, hops, self.cfg.route_power_dbm)
        };
        let body = Body::Advert {
            cluster: 0,
            level,
            hops,
        };
        let pkt = self
            .ctl(PacketKind::LevelBeacon, from, Dest::Broadcast, now)
            .with_body(body);
        Self::send(w, pkt, from, power);
    }

    fn on_route_beacon(
        &mut self,
        w: &World,
        me: NodeId,
        src: NodeId,
        level: u32,
        hops: u32,
        link: &LinkBudget,
        power: f64,
    ) {
        if self.shunned(me, src) {
            return;
        }
        let snr = link.snr_db + self.bonus(w, src);
        let cand = RouteCand {
            node: src,
            hops,
            level,
            snr_db: snr,
            rssi_dbm: link.rx_power_dbm,
            power_dbm: power,
        };
        let my_level = self.eff_level(w, me);
        let l = &mut self.loc[me.idx()];
        if src.is_bs() {
            l.hops = Some(1);
            return;
        }
        l.routes.retain(|c| c.node != src);
        l.routes.push(cand);
        if level < my_level && l.hops != Some(1) {
            let best = l
                .routes
                .iter()
                .filter(|c| c.level < my_level)
                .map(|c| c.hops.saturating_add(1))
                .min();
            l.hops = best.or(l.hops);
        }
    }

    fn on_join_phase(&mut self, w: &mut World) {
        let now = w.now();
        for i in 1..w.nodes.len() {
            let me = NodeId(i as u32);
            let l = &self.loc[i];
            if l.head || !w.alive(me) || self.blacklist[i] != 0 {
                continue;
            }
            let best = l
                .adverts
                .iter()
                .filter(|h| self.loc[h.from.idx()].head && !self.shunned(me, h.from))
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
            let suffix = random_suffix(self.cfg.suffix_bytes, &mut w.rng);
            let power = min_tx_power_for(best.rssi, best.power, &w.radio)
                .unwrap_or_else(|_| w.radio.max_power());
            let body = Body::Join {
                member_id: suffix,
                via: None,
                origin: me,
            };
            let pkt = self
                .ctl(PacketKind::JoinConfirm, me, Dest::Node(best.from), now)
                .with_body(body);
            if Self::unicast(w, pkt, me, power) {
                let l = &mut self.loc[i];
                l.ch = Some(best.from);
                l.parent = Some(best.from);
                l.parent_power = power;
                l.depth = 1;
                let j = w.jitter();
                w.timer(0.05 + j, me, T_STATE, 0);
            }
        }
    }

    fn send_state(&mut self, w: &mut World, me: NodeId) {
        let l = &self.loc[me.idx()];
        let (Some(ch), 1) = (l.ch, l.depth) else {
            return;
        };
        if !w.alive(me) {
            return;
        }
        let now = w.now();
        let body = Body::State {
            ch,
            member_id: Vec::new(),
        };
        let pkt = self
            .ctl(PacketKind::StateMsg, me, Dest::Broadcast, now)
            .with_body(body);
        Self::send(w, pkt, me, self.cfg.state_power_dbm);
    }

    fn on_join2_phase(&mut self, w: &mut World) {
        let now = w.now();
        for i in 1..w.nodes.len() {
            let me = NodeId(i as u32);
            let l = &self.loc[i];
            if l.head || l.ch.is_some() || !w.alive(me) || self.blacklist[i] != 0 {
                continue;
            }
            let best = l
                .states
                .iter()
                .filter(|h| !self.shunned(me, h.from) && self.loc[h.from.idx()].depth == 1)
                .fold(None::<Heard>, |b, h| match b {
                    Some(b)
                        if (b.snr, std::cmp::Reverse(b.from))
                            >= (h.snr, std::cmp::Reverse(h.from)) =>
                    {
                        Some(b)
                    }
                    _ => Some(*h),
                });
            let Some(best) = best else {
                self.inv.orphans += 1;
                w.metrics.orphans_logged += 1;
                continue;
            };
            let suffix = random_suffix(self.cfg.suffix_bytes, &mut w.rng);
            let power = min_tx_power_for(best.rssi, best.power, &w.radio)
                .unwrap_or_else(|_| w.radio.max_power());
            let body = Body::Join {
                member_id: suffix,
                via: Some(best.from),
                origin: me,
            };
            let pkt = self
                .ctl(PacketKind::JoinConfirm, me, Dest::Node(best.from), now)
                .with_body(body);
            if Self::unicast(w, pkt, me, power) {
                let relay_ch = self.loc[best.from.idx()].ch;
                let l = &mut self.loc[i];
                l.ch = relay_ch;
                l.parent = Some(best.from);
                l.parent_power = power;
                l.depth = 2;
            } else {
                self.inv.orphans += 1;
                w.metrics.orphans_logged += 1;
            }
        }
    }

    fn on_join(
        &mut self,
        w: &mut World,
        me: NodeId,
        suffix: Vec<u8>,
        via: Option<NodeId>,
        origin: NodeId,
        pkt: &Packet,
    ) {
        if self.loc[me.idx()].head {
            let m = self.cfg.suffix_bytes;
            let l = &mut self.loc[me.idx()];
            if l.members.iter().any(|x| x.id == origin) {
                return;
            }
            let prefix = match via {
                None => l.mid.clone().expect("heads carry a cluster id"),
                Some(r) => match l.members.iter().find(|x| x.id == r) {
                    Some(x) => x.mid.clone(),
                    None => return,
                },
            };
            let taken: BTreeSet<Vec<u8>> = l
                .members
                .iter()
                .filter(|x| x.via == via)
                .map(|x| x.mid.suffix(m).to_vec())
                .collect();
            let Some(s) = resolve_suffix(&suffix, &taken) else {
                return;
            };
            if s != suffix {
                self.inv.suffix_collisions_resolved += 1;
            }
            l.members.push(Member {
                id: origin,
                mid: prefix.child(&s),
                via,
            });
        } else if via == Some(me) {
            let l = &mut self.loc[me.idx()];
            let (Some(ch), Some(parent)) = (l.ch, l.parent) else {
                return;
            };
            if !l.children.contains(&origin) {
                l.children.push(origin);
            }
            let power = l.parent_power;
            if w.node(me).role == Role::Member {
                w.node_mut(me).role = Role::OneHopRelay;
            }
            let mut fwd = pkt.clone();
            fwd.src = me;
            fwd.dst = Dest::Node(parent);
            let _ = ch;
            self.defer(w, fwd, me, parent, power);
        }
    }

    fn on_sched_phase(&mut self, w: &mut World) {
        for h in self.heads.clone() {
            if !w.alive(h) {
                continue;
            }
            let l = &mut self.loc[h.idx()];
            let ids: Vec<NodeId> = l.members.iter().map(|m| m.id).collect();
            l.schedule = Rc::new(build_schedule(&ids));
            let j = w.jitter();
            w.timer(j, h, T_SCHED, 0);
        }
    }

    fn send_schedule(&mut self, w: &mut World, me: NodeId, power: f64) {
        if !w.alive(me) {
            return;
        }
        let now = w.now();
        let sched = Rc::clone(&self.loc[me.idx()].schedule);
        let bytes = self.cfg.control_bytes + 2 * sched.len() as u32;
        let pkt = Packet::new(PacketKind::TdmaSchedule, me, Dest::Broadcast, bytes, now)
            .with_body(Body::Schedule(sched));
        Self::send(w, pkt, me, power);
    }

    fn on_schedule(
        &mut self,
        w: &mut World,
        me: NodeId,
        src: NodeId,
        sched: &Rc<Vec<(NodeId, u32)>>,
        link: &LinkBudget,
        power: f64,
    ) {
        let Some(&(_, slot)) = sched.iter().find(|(id, _)| *id == me) else {
            return;
        };
        let src_head = self.loc[src.idx()].head;
        let l = &self.loc[me.idx()];
        if l.head {
            return;
        }
        let from_ch = l.ch == Some(src);
        let from_parent = l.parent == Some(src);
        let takeover = src_head && l.depth == 1 && l.ch.is_some_and(|c| !self.loc[c.idx()].head);
        if !(from_ch || from_parent || takeover) {
            return;
        }
        let rp = Self::reply_power(w, link, power);
        let l = &mut self.loc[me.idx()];
        l.slot = Some(slot);
        l.schedule = Rc::clone(sched);
        if src_head && l.depth != 2 {
            l.ch = Some(src);
            l.parent = Some(src);
            l.parent_power = rp;
            l.depth = 1;
        }
        if let Some(ch) = l.ch {
            if let Some(m) = self.loc[ch.idx()].members.iter().find(|m| m.id == me) {
                w.node_mut(me).member_id = m.mid.bytes.clone();
            }
        }
        if src_head && !self.loc[me.idx()].children.is_empty() {
            let j = w.jitter();
            w.timer(j, me, T_RESCHED, 0);
        }
    }

    /// Structural checks on the freshly formed clusters.
    fn on_check(&mut self, w: &mut World) {
        for &h in &self.heads {
            let l = &self.loc[h.idx()];
            let mut seen = BTreeSet::new();
            for m in &l.members {
                if !seen.insert(m.mid.clone()) {
                    self.inv.member_id_duplicates += 1;
                }
                self.inv.max_depth = self.inv.max_depth.max(m.mid.depth);
                if m.mid.depth > 2 {
                    self.inv.depth_violations += 1;
                }
            }
            // members dying after the schedule went out may keep their slot
            let all: BTreeSet<NodeId> = l.members.iter().map(|m| m.id).collect();
            let want: BTreeSet<NodeId> = l
                .members
                .iter()
                .filter(|m| w.alive(m.id) && w.node(m.id).awake)
                .map(|m| m.id)
                .collect();
            let got: Vec<NodeId> = l.schedule.iter().map(|x| x.0).collect();
            let uniq: BTreeSet<NodeId> = got.iter().copied().collect();
            let gapless = l
                .schedule
                .iter()
                .enumerate()
                .all(|(i, x)| x.1 as usize == i);
            if w.alive(h)
                && (uniq.len() != got.len()
                    || !want.is_subset(&uniq)
                    || !uniq.is_subset(&all)
                    || !gapless)
            {
                self.inv.schedule_violations += 1;
            }
        }
        for i in 1..w.nodes.len() {
            let l = &self.loc[i];
            let Some(ch) = l.ch else { continue };
            let ok = match (l.depth, l.parent) {
                (1, Some(p)) => p == ch && self.loc[ch.idx()].head,
                (2, Some(p)) => {
                    let r = &self.loc[p.idx()];
                    r.depth == 1 && r.ch == Some(ch) && r.parent == Some(ch)
                }
                _ => false,
            };
            if !ok {
                self.inv.depth_violations += 1;
            }
        }
    }

    // ---- data rounds ----

    fn on_round(&mut self, w: &mut World, k: u32) {
        let now = w.now();
        let busy = !self.traffic.exhausted()
            || self
                .heads
                .iter()
                .any(|h| !self.loc[h.idx()].inbox.is_empty());
        if k > 0 && !busy && !self.detecting {
            return;
        }
        self.round = k;
        if k > 0 {
            self.detection_window(w);
        }
        self.last_boundary_s = now;
        if self.reform_pending {
            // statistics gathered over the old routes say nothing about the new ones
            self.window_start_s = now;
            self.rounds_since_detect = 0;
        }
        let mut reform =
            k == 0 || self.reform_pending || self.epoch_round >= self.cfg.rounds_per_epoch;
        if !reform {
            reform = self
                .heads
                .iter()
                .any(|&h| !w.alive(h) && !self.loc[h.idx()].forger);
        }
        if !reform {
            reform = !self.abdicate(w);
        }
        if reform {
            self.formation(w);
            self.epoch_round = 1;
        } else {
            self.epoch_round += 1;
            self.schedule_frame(w, now + 0.1);
        }
    }

    fn schedule_frame(&mut self, w: &mut World, frame_start: f64) {
        let max_slots = self
            .heads
            .iter()
            .map(|h| self.loc[h.idx()].schedule.len())
            .max()
            .unwrap_or(0);
        let lmax = self.bands.len() as f64 + 1.0;
        let frame_end = frame_start + max_slots as f64 * self.cfg.slot_s + 0.1;
        for i in 1..w.nodes.len() {
            let l = &self.loc[i];
            if let (Some(slot), false) = (l.slot, l.head) {
                w.timer_at(
                    frame_start + slot as f64 * self.cfg.slot_s,
                    NodeId(i as u32),
                    T_SLOT,
                    self.round as u64,
                );
            }
        }
        let mut last = frame_end;
        for h in self.heads.clone() {
            let lvl = self.eff_level(w, h) as f64;
            let at = frame_end + (lmax - lvl) * self.cfg.stage_s;
            last = last.max(at);
            w.timer_at(at, h, T_AGG, self.round as u64);
        }
        let next = (w.now() + self.cfg.round_s).max(last + lmax * self.cfg.stage_s + 0.3);
        w.schedule_at(next, EventKind::RoundBoundary(self.round + 1))
            .expect("future boundary");
    }

    fn on_slot(&mut self, w: &mut World, me: NodeId, round: u32) {
        if round != self.round || !w.alive(me) {
            return;
        }
        let l = &self.loc[me.idx()];
        let (Some(parent), Some(_)) = (l.parent, l.slot) else {
            return;
        };
        if l.head {
            return;
        }
        let power = l.parent_power;
        let now = w.now();
        let rs = self.traffic.take(me, now);
        if rs.is_empty() {
            return;
        }
        if self.hostile(w, me) {
            for r in &rs {
                w.metrics.record_attempt(now, r);
            }
            w.metrics.malicious_drops += rs.len() as u64;
            return;
        }
        let bytes: u32 = rs.iter().map(|r| r.payload_bytes).sum();
        let pkt = Packet::new(PacketKind::Data, me, Dest::Node(parent), bytes, now)
            .with_body(Body::Readings(rs.clone()));
        if Self::unicast(w, pkt, me, power) {
            for r in &rs {
                w.metrics.record_attempt(now, r);
            }
        } else {
            if w.alive(me) {
                self.traffic.requeue(me, rs);
            }
            self.loc[me.idx()].parent = None;
        }
    }

    fn on_agg(&mut self, w: &mut World, me: NodeId, round: u32) {
        if round != self.round || !w.alive(me) || !self.loc[me.idx()].head {
            return;
        }
        let now = w.now();
        let own = self.traffic.take(me, now);
        for r in &own {
            w.metrics.record_attempt(now, r);
        }
        if self.hostile(w, me) {
            w.metrics.malicious_drops += own.len() as u64;
        } else {
            let l = &mut self.loc[me.idx()];
            l.inbox.extend(own);
        }
        self.loc[me.idx()].agg_sent_round = Some(round);
        self.flush_inbox(w, me);
    }

    fn flush_inbox(&mut self, w: &mut World, me: NodeId) {
        let l = &mut self.loc[me.idx()];
        if l.inbox.is_empty() {
            return;
        }
        let readings = std::mem::take(&mut l.inbox);
        let bits = std::mem::take(&mut l.inbox_bits);
        if !w.alive(me) || !w.debit_aggregation(me, bits) {
            return;
        }
        self.send_aggregate(w, me, readings, 0);
    }

    fn send_aggregate(&mut self, w: &mut World, me: NodeId, readings: Vec<Reading>, hops: u32) {
        let now = w.now();
        let mut pkt = Packet::new(
            PacketKind::Aggregate,
            me,
            Dest::Node(NodeId::BS),
            self.cfg.aggregate_bytes,
            now,
        )
        .with_body(Body::Readings(readings));
        pkt.hops = hops + 1;
        let my_level = self.eff_level(w, me);
        let mut failed = Vec::new();
        if my_level > 1 || self.loc[me.idx()].bs_link.is_none() {
            while let Some(c) = self.next_hop(w, me, &failed) {
                if c.level >= my_level {
                    self.inv.level_violations += 1;
                }
                let power = min_tx_power_for(c.rssi_dbm, c.power_dbm, &w.radio)
                    .unwrap_or_else(|_| w.radio.max_power());
                let mut p = pkt.clone();
                p.dst = Dest::Node(c.node);
                if !w.alive(me) {
                    return;
                }
                if Self::unicast(w, p, me, power) {
                    self.inv.aggregate_hops += 1;
                    return;
                }
                failed.push(c.node);
            }
        }
        // level one, or no lower-level head answered: straight to the BS
        if !w.alive(me) {
            return;
        }
        let n = match &pkt.body {
            Body::Readings(r) => r.len() as u64,
            _ => 0,
        };
        let power = self.bs_power(w, me);
        if !Self::unicast(w, pkt, me, power) {
            w.metrics.no_route_drops += n;
        } else {
            self.inv.aggregate_hops += 1;
        }
    }

    fn on_data(&mut self, w: &mut World, me: NodeId, pkt: &Packet) {
        let Body::Readings(rs) = &pkt.body else {
            return;
        };
        if me.is_bs() {
            let now = w.now();
            w.metrics.record_bs_delivery(rs, now);
            return;
        }
        if self.shunned(me, pkt.src) {
            return;
        }
        if self.hostile(w, me) && self.attack.drops(&mut w.rng) {
            w.metrics.malicious_drops += rs.len() as u64;
            return;
        }
        let l = &mut self.loc[me.idx()];
        let agg = pkt.kind == PacketKind::Aggregate;
        if l.head && !(agg && l.agg_sent_round == Some(self.round)) {
            l.inbox.extend(rs.iter().copied());
            l.inbox_bits += pkt.bits();
            return;
        }
        if agg {
            let rs = rs.clone();
            if w.debit_aggregation(me, pkt.bits()) {
                self.send_aggregate(w, me, rs, pkt.hops);
            }
            return;
        }
        let Some(parent) = l.parent else {
            w.metrics.orphans_logged += 1;
            return;
        };
        let power = l.parent_power;
        let mut fwd = pkt.clone();
        fwd.dst = Dest::Node(parent);
        fwd.src = me;
        fwd.hops += 1;
        self.defer(w, fwd, me, parent, power);
    }

    fn on_fwd(&mut self, w: &mut World, me: NodeId, slot: usize) {
        let Some((pkt, to, power)) = self.slab[slot].take() else {
            return;
        };
        self.free.push(slot);
        if !w.alive(me) {
            return;
        }
        let kind = pkt.kind;
        if !Self::unicast(w, pkt, me, power)
            && kind == PacketKind::Data
            && self.loc[me.idx()].parent == Some(to)
        {
            self.loc[me.idx()].parent = None;
        }
    }

    /// Hands the cluster to the standby head where energy ran low. Returns false when a cluster
    /// needs a full re-election instead.
    fn abdicate(&mut self, w: &mut World) -> bool {
        let now = w.now();
        for h in self.heads.clone() {
            let l = &self.loc[h.idx()];
            if l.forger
                || !w.alive(h)
                || w.node(h).energy_j >= self.cfg.abdicate_fraction * l.at_election_j
            {
                continue;
            }
            let s = l.sector;
            let succ = self.tables[s].next_ch.map(|x| x.0);
            let ok = succ.filter(|&n| {
                w.alive(n)
                    && self.blacklist[n.idx()] == 0
                    && l.members.iter().any(|m| m.id == n && m.via.is_none())
            });
            let Some(n) = ok else {
                return false;
            };
            self.inv.abdications += 1;
            let body = Body::Abdicate { successor: n };
            let pkt = self
                .ctl(PacketKind::Abdicate, h, Dest::Broadcast, now)
                .with_body(body);
            Self::send(w, pkt, h, self.cfg.advert_power_dbm);
            self.promote(w, h, n);
        }
        true
    }

    fn promote(&mut self, w: &mut World, old: NodeId, new: NodeId) {
        let mut ol = std::mem::take(&mut self.loc[old.idx()]);
        let mut members = std::mem::take(&mut ol.members);
        let succ_mid = members
            .iter()
            .find(|m| m.id == new)
            .map(|m| m.mid.clone())
            .expect("successor is a member");
        members.retain(|m| m.id != new);
        for m in members.iter_mut() {
            if m.via == Some(new) {
                m.via = None;
                m.mid = ol
                    .mid
                    .clone()
                    .expect("cluster id")
                    .child(m.mid.suffix(self.cfg.suffix_bytes));
            }
        }
        members.push(Member {
            id: old,
            mid: succ_mid,
            via: None,
        });
        let sched: Vec<(NodeId, u32)> = ol
            .schedule
            .iter()
            .map(|&(id, slot)| if id == new { (old, slot) } else { (id, slot) })
            .collect();
        let energy = w.node(new).energy_j;
        let link = w.link(new, old, self.cfg.advert_power_dbm);
        let back = link.map_or(w.radio.max_power(), |lb| {
            Self::reply_power(w, &lb, self.cfg.advert_power_dbm)
        });

        let nl = &mut self.loc[new.idx()];
        nl.head = true;
        nl.at_election_j = energy;
        nl.mid = ol.mid.clone();
        nl.members = members;
        nl.schedule = Rc::new(sched);
        nl.slot = None;
        nl.inbox = std::mem::take(&mut ol.inbox);
        nl.inbox_bits = std::mem::take(&mut ol.inbox_bits);
        if nl.hops.is_none() {
            nl.hops = ol.hops;
        }
        let children = std::mem::take(&mut nl.children);
        nl.ch = None;
        nl.parent = None;
        nl.depth = 0;
        for c in children {
            let cl = &mut self.loc[c.idx()];
            cl.ch = Some(new);
            cl.depth = 1;
        }
        let slot = ol.schedule.iter().find(|x| x.0 == new).map(|x| x.1);
        ol.head = false;
        ol.ch = Some(new);
        ol.parent = Some(new);
        ol.parent_power = back;
        ol.depth = 1;
        ol.slot = slot;
        ol.mid = None;
        self.loc[old.idx()] = ol;
        for m in self.loc[new.idx()]
            .members
            .iter()
            .map(|m| m.id)
            .collect::<Vec<_>>()
        {
            if self.loc[m.idx()].ch == Some(old) {
                self.loc[m.idx()].ch = Some(new);
            }
        }

        w.node_mut(old).role = Role::Member;
        let nn = w.node_mut(new);
        nn.role = Role::ClusterHead;
        nn.rounds_since_ch = 0;
        let t = &mut self.tables[self.loc[new.idx()].sector];
        t.ch = Some((new, energy));
        t.next_ch = None;
        if let Some(p) = self.heads.iter_mut().find(|x| **x == old) {
            *p = new;
        }
        self.heads.sort();
        let j = w.jitter();
        w.timer(0.02 + j, new, T_SCHED, 0);
    }

    // ---- detection ----

    fn detection_window(&mut self, w: &mut World) {
        if !self.detect.enabled || self.detecting {
            return;
        }
        self.rounds_since_detect += 1;
        if self.rounds_since_detect < self.detect.window_rounds {
            return;
        }
        let to = self.last_boundary_s;
        let stats = w.metrics.window_stats(self.window_start_s, to);
        let flagged =
            flag_affected(&stats, self.rounds_since_detect, &self.detect).unwrap_or_default();
        self.window_start_s = to;
        self.rounds_since_detect = 0;
        w.metrics.detection.rounds += 1;
        if flagged.is_empty() {
            return;
        }
        let now = w.now();
        w.metrics.detection.triggered_at_s.get_or_insert(now);
        self.detecting = true;
        self.flood_id += 1;
        self.affected = flagged;
        self.responses.clear();
        let list: Rc<Vec<NodeId>> = Rc::new(self.affected.iter().copied().collect());
        let bytes = self.cfg.control_bytes + 2 * list.len() as u32;
        let pkt = Packet::new(
            PacketKind::DetectRequest,
            NodeId::BS,
            Dest::Broadcast,
            bytes,
            now,
        )
        .with_body(Body::Detect(list));
        let p = w.radio.bs_power_dbm[0];
        Self::send(w, pkt, NodeId::BS, p);
        w.schedule_in(
            self.cfg.collect_timeout_s,
            EventKind::PhaseBoundary(P_COLLECT),
        );
    }

    fn on_detect_request(
        &mut self,
        w: &mut World,
        me: NodeId,
        pkt: &Rc<Packet>,
        link: &LinkBudget,
        power: f64,
    ) {
        if me.is_bs()
            || self.hostile(w, me)
            || self.loc[me.idx()].flood_seen == self.flood_id
            || !self.detecting
        {
            return;
        }
        let rp = Self::reply_power(w, link, power);
        let l = &mut self.loc[me.idx()];
        l.flood_seen = self.flood_id;
        l.flood_parent = Some((pkt.src, rp));
        let j = w.jitter();
        w.timer(j, me, T_FLOOD, self.flood_id as u64);
        if self.affected.contains(&me) {
            let j = w.jitter();
            w.timer(0.5 + 10.0 * j, me, T_RESPOND, self.flood_id as u64);
        }
    }

    fn rebroadcast(&mut self, w: &mut World, me: NodeId, kind: PacketKind, list: Rc<Vec<NodeId>>) {
        if !w.alive(me) {
            return;
        }
        let now = w.now();
        let bytes = self.cfg.control_bytes + 2 * list.len() as u32;
        let pkt = Packet::new(kind, me, Dest::Broadcast, bytes, now).with_body(Body::Detect(list));
        Self::send(w, pkt, me, self.cfg.flood_power_dbm);
    }

    fn current_route(&self, w: &World, me: NodeId) -> (Option<NodeId>, u32) {
        let l = &self.loc[me.idx()];
        if l.head {
            let lvl = self.eff_level(w, me);
            if lvl <= 1 && l.bs_link.is_some() {
                return (Some(NodeId::BS), 1);
            }
            return match self.next_hop(w, me, &[]) {
                Some(c) => (Some(c.node), c.hops.saturating_add(1)),
                None => (Some(NodeId::BS), 1),
            };
        }
        let up = l.ch.and_then(|c| self.loc[c.idx()].hops).unwrap_or(1);
        (l.parent, up + l.depth as u32)
    }

    fn respond(&mut self, w: &mut World, me: NodeId) {
        if !w.alive(me) || !self.detecting {
            return;
        }
        let Some((parent, power)) = self.loc[me.idx()].flood_parent else {
            return;
        };
        let (next_hop, cost) = self.current_route(w, me);
        let now = w.now();
        let body = Body::Response {
            responder: me,
            next_hop,
            cost,
        };
        let pkt = self
            .ctl(PacketKind::DetectResponse, me, Dest::Node(parent), now)
            .with_body(body);
        Self::unicast(w, pkt, me, power);
    }

    fn on_response(&mut self, w: &mut World, me: NodeId, pkt: &Packet) {
        let Body::Response {
            responder,
            next_hop,
            cost,
        } = pkt.body
        else {
            return;
        };
        if me.is_bs() {
            if self.detecting {
                self.responses.push(FlowResponse {
                    responder,
                    next_hop,
                    cost,
                });
            }
            return;
        }
        if self.hostile(w, me) {
            w.metrics.detection.evasions += 1;
            return;
        }
        let Some((parent, power)) = self.loc[me.idx()].flood_parent else {
            return;
        };
        let mut fwd = pkt.clone();
        fwd.src = me;
        fwd.dst = Dest::Node(parent);
        self.defer(w, fwd, me, parent, power);
    }

    fn on_collect(&mut self, w: &mut World) {
        if !self.detecting {
            return;
        }
        self.detecting = false;
        let answered: BTreeSet<NodeId> = self.responses.iter().map(|r| r.responder).collect();
        let expected = self
            .affected
            .iter()
            .filter(|id| !w.node(**id).compromised)
            .count();
        w.metrics.detection.omitted_responders += expected.saturating_sub(answered.len()) as u32;
        let suspects: BTreeSet<NodeId> = locate_sinkhole(&self.responses, &self.affected)
            .into_iter()
            .filter(|s| !s.is_bs() && self.blacklist[s.idx()] == 0)
            .collect();
        if suspects.is_empty() {
            return;
        }
        let now = w.now();
        let det = &mut w.metrics.detection;
        det.suspects.extend(suspects.iter().copied());
        let compromised: Vec<NodeId> = det
            .suspects
            .iter()
            .copied()
            .filter(|s| w.nodes[s.idx()].compromised)
            .collect();
        det.true_positives = compromised.len() as u32;
        det.false_positives = (det.suspects.len() - compromised.len()) as u32;
        if suspects.iter().any(|s| w.nodes[s.idx()].compromised) {
            det.first_isolation_s.get_or_insert(now);
        }
        self.bl_version += 1;
        for s in &suspects {
            self.blacklist[s.idx()] = self.bl_version;
            w.node_mut(*s).role = Role::Malicious;
        }
        let list: Rc<Vec<NodeId>> = Rc::new(self.blacklisted().into_iter().collect());
        let bytes = self.cfg.control_bytes + 2 * list.len() as u32;
        let pkt = Packet::new(
            PacketKind::Blacklist,
            NodeId::BS,
            Dest::Broadcast,
            bytes,
            now,
        )
        .with_body(Body::Detect(list))
        .with_hops(self.bl_version);
        let p = w.radio.bs_power_dbm[0];
        Self::send(w, pkt, NodeId::BS, p);
        self.reform_pending = true;
    }

    fn on_blacklist(&mut self, w: &mut World, me: NodeId, pkt: &Packet) {
        let version = pkt.hops;
        if me.is_bs() || self.hostile(w, me) || self.loc[me.idx()].bl_known >= version {
            return;
        }
        self.loc[me.idx()].bl_known = version;
        let j = w.jitter();
        w.timer(j, me, T_BLACKLIST, version as u64);
    }
}

impl Protocol for Esrpsdc {
    fn start(&mut self, w: &mut World) {
        let pkt = self.ctl(PacketKind::Req, NodeId::BS, Dest::Broadcast, 0.0);
        let p = *w.radio.bs_power_dbm.last().expect("validated non-empty");
        Self::send(w, pkt, NodeId::BS, p);
        for i in 0..w.radio.bs_power_dbm.len() {
            w.timer(0.01 * (i + 1) as f64, NodeId::BS, T_BEACON, i as u64);
        }
        let t = 0.01 * (w.radio.bs_power_dbm.len() + 2) as f64;
        w.timer(t, NodeId::BS, T_HELLO, 0);
        w.schedule_in(t + 0.05, EventKind::PhaseBoundary(P_INIT_DONE));
    }

    fn handle(&mut self, w: &mut World, ev: EventKind) {
        match ev {
            EventKind::RoundBoundary(k) => self.on_round(w, k),
            EventKind::PhaseBoundary(p) => match p {
                P_INIT_DONE => self.on_init_done(w),
                P_JOIN => self.on_join_phase(w),
                P_JOIN2 => self.on_join2_phase(w),
                P_SCHED => self.on_sched_phase(w),
                P_CHECK => {
                    self.on_check(w);
                    let start = self.last_boundary_s + self.cfg.setup_s;
                    self.schedule_frame(w, start.max(w.now()));
                }
                P_COLLECT => self.on_collect(w),
                _ => {}
            },
            EventKind::TimerExpiry { owner, tag, arg } => match tag {
                T_BEACON => {
                    let i = arg as usize;
                    let now = w.now();
                    let pkt = self
                        .ctl(PacketKind::LevelBeacon, NodeId::BS, Dest::Broadcast, now)
                        .with_body(Body::Level(i as u32 + 1));
                    let p = w.radio.bs_power_dbm[i];
                    Self::send(w, pkt, NodeId::BS, p);
                }
                T_HELLO => {
                    let now = w.now();
                    let bands = Rc::new(self.bands.clone());
                    let bytes = self.cfg.control_bytes + 8 * bands.len() as u32;
                    let pkt =
                        Packet::new(PacketKind::Hello, NodeId::BS, Dest::Broadcast, bytes, now)
                            .with_body(Body::Bands(bands));
                    let p = *w.radio.bs_power_dbm.last().expect("validated non-empty");
                    Self::send(w, pkt, NodeId::BS, p);
                }
                T_ADVERT => self.send_advert(w, owner),
                T_ROUTE => self.send_route_beacon(w, owner),
                T_STATE => self.send_state(w, owner),
                T_SCHED => {
                    if self.loc[owner.idx()].head {
                        let p = self.cfg.advert_power_dbm;
                        self.send_schedule(w, owner, p);
                    }
                }
                T_RESCHED => {
                    let p = self.cfg.state_power_dbm;
                    self.send_schedule(w, owner, p);
                }
                T_SLOT => self.on_slot(w, owner, arg as u32),
                T_AGG => self.on_agg(w, owner, arg as u32),
                T_FWD => self.on_fwd(w, owner, arg as usize),
                T_FLOOD => {
                    if arg as u32 == self.flood_id && self.detecting {
                        let list: Rc<Vec<NodeId>> =
                            Rc::new(self.affected.iter().copied().collect());
                        self.rebroadcast(w, owner, PacketKind::DetectRequest, list);
                    }
                }
                T_RESPOND => {
                    if arg as u32 == self.flood_id {
                        self.respond(w, owner);
                    }
                }
                T_BLACKLIST => {
                    let list: Rc<Vec<NodeId>> = Rc::new(self.blacklisted().into_iter().collect());
                    if w.alive(owner) {
                        let now = w.now();
                        let bytes = self.cfg.control_bytes + 2 * list.len() as u32;
                        let pkt =
                            Packet::new(PacketKind::Blacklist, owner, Dest::Broadcast, bytes, now)
                                .with_body(Body::Detect(list))
                                .with_hops(arg as u32);
                        Self::send(w, pkt, owner, self.cfg.flood_power_dbm);
                    }
                }
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

impl Esrpsdc {
    fn on_deliver(
        &mut self,
        w: &mut World,
        me: NodeId,
        pkt: Rc<Packet>,
        link: LinkBudget,
        power: f64,
    ) {
        let src = pkt.src;
        match (&pkt.kind, &pkt.body) {
            (PacketKind::LevelBeacon, Body::Level(i)) if !me.is_bs() => {
                if w.node(me).level == 0 {
                    w.node_mut(me).level = *i;
                    self.loc[me.idx()].bs_link = Some((link.rx_power_dbm, power));
                }
            }
            (PacketKind::LevelBeacon, Body::Advert { level, hops, .. }) if !me.is_bs() => {
                self.on_route_beacon(w, me, src, *level, *hops, &link, power);
            }
            (PacketKind::ChAdvert, _) if !me.is_bs() => {
                if !self.loc[me.idx()].head && !self.shunned(me, src) {
                    let snr = link.snr_db + self.bonus(w, src);
                    self.loc[me.idx()].adverts.push(Heard {
                        from: src,
                        snr,
                        rssi: link.rx_power_dbm,
                        power,
                    });
                }
            }
            (PacketKind::StateMsg, _) if !me.is_bs() => {
                let l = &self.loc[me.idx()];
                if !l.head && l.ch.is_none() && !self.shunned(me, src) {
                    let snr = link.snr_db + self.bonus(w, src);
                    self.loc[me.idx()].states.push(Heard {
                        from: src,
                        snr,
                        rssi: link.rx_power_dbm,
                        power,
                    });
                }
            }
            (
                PacketKind::JoinConfirm,
                Body::Join {
                    member_id,
                    via,
                    origin,
                },
            ) if !me.is_bs() => {
                self.on_join(w, me, member_id.clone(), *via, *origin, &pkt);
            }
            (PacketKind::TdmaSchedule, Body::Schedule(s)) if !me.is_bs() => {
                let s = Rc::clone(s);
                self.on_schedule(w, me, src, &s, &link, power);
            }
            (PacketKind::Data | PacketKind::Aggregate, _) => self.on_data(w, me, &pkt),
            (PacketKind::DetectRequest, _) => self.on_detect_request(w, me, &pkt, &link, power),
            (PacketKind::DetectResponse, _) => self.on_response(w, me, &pkt),
            (PacketKind::Blacklist, _) => self.on_blacklist(w, me, &pkt),
            _ => {}
        }
    }
}

/// Snapshot of one cluster for external checks.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterView {
    pub head: NodeId,
    pub members: BTreeMap<NodeId, (Vec<u8>, u8, Option<NodeId>)>,
    pub schedule: Vec<(NodeId, u32)>,
}

impl Esrpsdc {
    pub fn clusters(&self) -> Vec<ClusterView> {
        self.heads
            .iter()
            .map(|&h| {
                let l = &self.loc[h.idx()];
                ClusterView {
                    head: h,
                    members: l
                        .members
                        .iter()
                        .map(|m| (m.id, (m.mid.bytes.clone(), m.mid.depth, m.via)))
                        .collect(),
                    schedule: l.schedule.to_vec(),
                }
            })
            .collect()
    }
}
