//! PEGASIS: one greedy chain, data fused along it, a rotating leader talks to the BS.

use std::rc::Rc;

use crate::adversary::AttackConfig;
use crate::engine::{EventKind, Protocol, World};
use crate::error::{Error, Result};
use crate::model::{distance, Body, Dest, NodeId, Packet, PacketKind, Position, Reading, Role};
use crate::traffic::Traffic;

#[derive(Debug, Clone, PartialEq)]
pub struct PegasisConfig {
    /// Spacing of consecutive chain transmissions.
    pub hop_time_s: f64,
    pub round_s: f64,
    pub aggregate_bytes: u32,
}

impl Default for PegasisConfig {
    fn default() -> Self {
        PegasisConfig {
            hop_time_s: 0.03,
            round_s: 5.0,
            aggregate_bytes: 70,
        }
    }
}

impl PegasisConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.hop_time_s > 0.0 && self.round_s > 0.0) {
            return Err(Error::Validation {
                key: "pegasis.hop_time_s".into(),
                msg: "must be positive".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chain {
    pub order: Vec<NodeId>,
    pub leader_index: usize,
}

impl Chain {
    pub fn leader_for(&self, round: u32) -> Option<NodeId> {
        if self.order.is_empty() {
            None
        } else {
            Some(self.order[round as usize % self.order.len()])
        }
    }
}

/// Greedy chain from the node farthest from the BS, each step to the nearest unvisited node under `d`.
pub fn build_chain_by(
    nodes: &[(NodeId, Position)],
    bs: Position,
    d: impl Fn(usize, usize) -> f64,
) -> Chain {
    if nodes.is_empty() {
        return Chain {
            order: Vec::new(),
            leader_index: 0,
        };
    }
    let far = (0..nodes.len())
        .max_by(|&a, &b| {
            distance(nodes[a].1, bs)
                .total_cmp(&distance(nodes[b].1, bs))
                .then(nodes[b].0.cmp(&nodes[a].0))
        })
        .expect("non-empty");
    let mut used = vec![false; nodes.len()];
    used[far] = true;
    let mut order = vec![far];
    let mut cur = far;
    for _ in 1..nodes.len() {
        let next = (0..nodes.len())
            .filter(|&j| !used[j])
            .min_by(|&a, &b| {
                d(cur, a)
                    .total_cmp(&d(cur, b))
                    .then(nodes[a].0.cmp(&nodes[b].0))
            })
            .expect("unvisited remain");
        used[next] = true;
        order.push(next);
        cur = next;
    }
    Chain {
        order: order.into_iter().map(|i| nodes[i].0).collect(),
        leader_index: 0,
    }
}

pub fn build_chain(nodes: &[(NodeId, Position)], bs: Position) -> Chain {
    build_chain_by(nodes, bs, |a, b| distance(nodes[a].1, nodes[b].1))
}

/// Sum of link lengths along the chain.
pub fn chain_length(order: &[NodeId], pos: impl Fn(NodeId) -> Position) -> f64 {
    order
        .windows(2)
        .map(|w| distance(pos(w[0]), pos(w[1])))
        .sum()
}

const T_HOP: u32 = 1;
const T_LEAD: u32 = 2;

pub struct Pegasis {
    pub cfg: PegasisConfig,
    pub attack: AttackConfig,
    pub traffic: Traffic,
    pub chain: Chain,
    pub rebuilds: u32,
    carry: Vec<Vec<Reading>>,
    carry_bits: Vec<u64>,
    round: u32,
}

impl Pegasis {
    pub fn new(w: &World, cfg: PegasisConfig, attack: AttackConfig, traffic: Traffic) -> Pegasis {
        let n = w.nodes.len();
        Pegasis {
            cfg,
            attack,
            traffic,
            chain: Chain {
                order: Vec::new(),
                leader_index: 0,
            },
            rebuilds: 0,
            carry: vec![Vec::new(); n],
            carry_bits: vec![0; n],
            round: 0,
        }
    }

    fn hostile(&self, w: &World, id: NodeId) -> bool {
        w.node(id).compromised && w.now() >= self.attack.activation_s
    }

    fn rebuild(&mut self, w: &World) {
        let nodes: Vec<(NodeId, Position)> = w
            .nodes
            .iter()
            .filter(|n| !n.is_bs() && n.alive())
            .map(|n| (n.id, n.pos))
            .collect();
        let lure = if self.attack.false_advert {
            10f64.powf(self.attack.snr_bonus_db / 40.0)
        } else {
            1.0
        };
        // a forger's inflated signal makes it look closer than it is
        let seen: Vec<f64> = nodes
            .iter()
            .map(|(id, _)| if self.hostile(w, *id) { lure } else { 1.0 })
            .collect();
        let bs = w.node(NodeId::BS).pos;
        self.chain = build_chain_by(&nodes, bs, |a, b| w.dist(nodes[a].0, nodes[b].0) / seen[b]);
        self.rebuilds += 1;
    }

    fn on_round(&mut self, w: &mut World, k: u32) {
        let pending = self.carry.iter().any(|c| !c.is_empty());
        if k > 0 && self.traffic.exhausted() && !pending {
            return;
        }
        self.round = k;
        if self.chain.order.iter().any(|&id| !w.alive(id)) || self.chain.order.is_empty() || k == 0
        {
            self.rebuild(w);
        }
        let n = self.chain.order.len();
        if n == 0 {
            return;
        }
        let li = k as usize % n;
        self.chain.leader_index = li;
        for (i, id) in self.chain.order.iter().enumerate() {
            w.node_mut(*id).role = if i == li {
                Role::ClusterHead
            } else {
                Role::Member
            };
        }
        let h = self.cfg.hop_time_s;
        // both ends start together and move one hop per tick toward the leader
        for (i, &id) in self.chain.order.iter().enumerate() {
            let step = if i < li {
                i
            } else if i > li {
                n - 1 - i
            } else {
                continue;
            };
            w.timer(step as f64 * h, id, T_HOP, i as u64);
        }
        let sweep = li.max(n - 1 - li) as f64 * h;
        let leader = self.chain.order[li];
        w.timer(sweep + h, leader, T_LEAD, k as u64);
        let next = self.cfg.round_s.max(sweep + h + 0.1);
        w.schedule_in(next, EventKind::RoundBoundary(k + 1));
    }

    fn gather(&mut self, w: &mut World, me: NodeId) -> Vec<Reading> {
        let now = w.now();
        let mut out = std::mem::take(&mut self.carry[me.idx()]);
        let own = self.traffic.take(me, now);
        for r in &own {
            w.metrics.record_attempt(now, r);
        }
        if self.hostile(w, me) {
            w.metrics.malicious_drops += own.len() as u64;
        } else {
            out.extend(own);
        }
        out
    }

    fn on_hop(&mut self, w: &mut World, me: NodeId, i: usize) {
        if !w.alive(me) || self.chain.order.get(i) != Some(&me) {
            return;
        }
        let li = self.chain.leader_index;
        let to = if i < li {
            self.chain.order[i + 1]
        } else {
            self.chain.order[i - 1]
        };
        let data = self.gather(w, me);
        let bits = std::mem::take(&mut self.carry_bits[me.idx()]);
        if data.is_empty() || !w.debit_aggregation(me, bits) {
            return;
        }
        let now = w.now();
        let pkt = Packet::new(
            PacketKind::Aggregate,
            me,
            Dest::Node(to),
            self.cfg.aggregate_bytes,
            now,
        )
        .with_body(Body::Readings(data));
        let p = w.radio.power_for_distance(w.dist(me, to));
        w.transmit(pkt, me, p).ok();
    }

    fn on_lead(&mut self, w: &mut World, me: NodeId) {
        if !w.alive(me) {
            return;
        }
        let data = self.gather(w, me);
        let bits = std::mem::take(&mut self.carry_bits[me.idx()]);
        if data.is_empty() || !w.debit_aggregation(me, bits) {
            return;
        }
        let now = w.now();
        let pkt = Packet::new(
            PacketKind::Aggregate,
            me,
            Dest::Node(NodeId::BS),
            self.cfg.aggregate_bytes,
            now,
        )
        .with_body(Body::Readings(data));
        let p = w.radio.power_for_distance(w.dist(me, NodeId::BS));
        w.transmit(pkt, me, p).ok();
    }

    fn on_deliver(&mut self, w: &mut World, me: NodeId, pkt: Rc<Packet>) {
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
        self.carry[me.idx()].extend(rs.iter().copied());
        self.carry_bits[me.idx()] += pkt.bits();
    }
}

impl Protocol for Pegasis {
    fn start(&mut self, w: &mut World) {
        w.schedule_in(0.0, EventKind::RoundBoundary(0));
    }

    fn handle(&mut self, w: &mut World, ev: EventKind) {
        match ev {
            EventKind::RoundBoundary(k) => self.on_round(w, k),
            EventKind::TimerExpiry {
                owner,
                tag: T_HOP,
                arg,
            } => self.on_hop(w, owner, arg as usize),
            EventKind::TimerExpiry {
                owner,
                tag: T_LEAD,
                arg,
            } if arg as u32 == self.round => self.on_lead(w, owner),
            EventKind::Deliver { to, pkt, .. } => self.on_deliver(w, to, pkt),
            _ => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::rng_from_seed;
    use rand::Rng;

    fn pts(v: &[(f64, f64)]) -> Vec<(NodeId, Position)> {
        v.iter()
            .enumerate()
            .map(|(i, &(x, y))| (NodeId(i as u32 + 1), Position::new(x, y)))
            .collect()
    }

    // plain nearest-neighbour walk over index lists
    fn nn_oracle(p: &[(f64, f64)], bs: (f64, f64)) -> Vec<usize> {
        let d = |a: (f64, f64), b: (f64, f64)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
        let mut start = 0;
        for i in 0..p.len() {
            if d(p[i], bs) > d(p[start], bs) {
                start = i;
            }
        }
        let mut out = vec![start];
        while out.len() < p.len() {
            let cur = *out.last().unwrap();
            let mut best = usize::MAX;
            for j in 0..p.len() {
                if out.contains(&j) {
                    continue;
                }
                if best == usize::MAX || d(p[cur], p[j]) < d(p[cur], p[best]) {
                    best = j;
                }
            }
            out.push(best);
        }
        out
    }

    #[test]
    fn collinear_example() {
        let p = [(0.0, 0.0), (10.0, 0.0), (30.0, 0.0)];
        let c = build_chain(&pts(&p), Position::new(500.0, 0.0));
        assert_eq!(c.order, vec![NodeId(1), NodeId(2), NodeId(3)]);
        let two = build_chain(&pts(&p[..2]), Position::new(500.0, 0.0));
        assert_eq!(two.order, vec![NodeId(1), NodeId(2)]);
    }

    #[test]
    fn matches_oracle_and_is_permutation() {
        let mut rng = rng_from_seed(4);
        for _ in 0..200 {
            let n = rng.random_range(2..30);
            let p: Vec<(f64, f64)> = (0..n)
                .map(|_| (rng.random::<f64>() * 1000.0, rng.random::<f64>() * 1000.0))
                .collect();
            let c = build_chain(&pts(&p), Position::new(50.0, 75.0));
            let want: Vec<NodeId> = nn_oracle(&p, (50.0, 75.0))
                .into_iter()
                .map(|i| NodeId(i as u32 + 1))
                .collect();
            assert_eq!(c.order, want);
            let mut sorted = c.order.clone();
            sorted.sort();
            sorted.dedup();
            assert_eq!(sorted.len(), n);
        }
    }

    fn mst(p: &[Position]) -> f64 {
        let n = p.len();
        let mut inside = vec![false; n];
        let mut best = vec![f64::INFINITY; n];
        best[0] = 0.0;
        let mut total = 0.0;
        for _ in 0..n {
            let u = (0..n)
                .filter(|&i| !inside[i])
                .min_by(|&a, &b| best[a].total_cmp(&best[b]))
                .unwrap();
            inside[u] = true;
            total += best[u];
            for v in 0..n {
                if !inside[v] {
                    best[v] = best[v].min(distance(p[u], p[v]));
                }
            }
        }
        total
    }

    fn best_path(p: &[Position]) -> f64 {
        fn go(p: &[Position], used: &mut Vec<bool>, last: usize, acc: f64, best: &mut f64) {
            if acc >= *best {
                return;
            }
            if used.iter().all(|u| *u) {
                *best = acc;
                return;
            }
            for j in 0..p.len() {
                if !used[j] {
                    used[j] = true;
                    go(p, used, j, acc + distance(p[last], p[j]), best);
                    used[j] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        for s in 0..p.len() {
            let mut used = vec![false; p.len()];
            used[s] = true;
            go(p, &mut used, s, 0.0, &mut best);
        }
        best
    }

    #[test]
    fn greedy_length_bounded() {
        let mut rng = rng_from_seed(8);
        for _ in 0..150 {
            let n = rng.random_range(2..=9);
            let p: Vec<(f64, f64)> = (0..n)
                .map(|_| (rng.random::<f64>() * 500.0, rng.random::<f64>() * 500.0))
                .collect();
            let nodes = pts(&p);
            let c = build_chain(&nodes, Position::new(50.0, 75.0));
            let pos = |id: NodeId| nodes[id.idx() - 1].1;
            let len = chain_length(&c.order, pos);
            let ps: Vec<Position> = nodes.iter().map(|x| x.1).collect();
            let m = mst(&ps);
            let opt = best_path(&ps);
            assert!(m <= opt + 1e-9);
            assert!(opt <= len + 1e-9);
            assert!(len <= 2.0 * m + 1e-9, "greedy {len} mst {m}");
        }
    }

    #[test]
    fn leader_rotation() {
        let c = Chain {
            order: (1..=5).map(NodeId).collect(),
            leader_index: 0,
        };
        assert_eq!(c.leader_for(2), Some(NodeId(3)));
        assert_eq!(c.leader_for(2), c.leader_for(7));
    }
}
