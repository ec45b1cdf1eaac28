//! Pure building blocks of the protocol: levels, sectors, election, member IDs, schedules, next hops.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{
    ch_threshold, distance, ClusterTable, LevelBand, NodeId, NodeState, Position, ThresholdParams,
};

/// Level of a node at `d` meters: first band whose upper bound covers it (upper-inclusive), or 0.
pub fn level_for_distance(d: f64, bands: &[LevelBand]) -> u32 {
    bands.iter().find(|b| d <= b.upper_m).map_or(0, |b| b.level)
}

/// Level every sensor adopts from the BS sweep; 0 marks nodes no beacon reaches.
pub fn bs_level_sweep(
    nodes: &[NodeState],
    bs: Position,
    bands: &[LevelBand],
) -> BTreeMap<NodeId, u32> {
    nodes
        .iter()
        .filter(|n| !n.is_bs())
        .map(|n| (n.id, level_for_distance(distance(n.pos, bs), bands)))
        .collect()
}

/// Rows × columns closest to square with rows·cols = k.
pub fn grid_shape(k: usize) -> (usize, usize) {
    let mut best = (1, k);
    for r in 1..=k {
        if r * r > k {
            break;
        }
        if k % r == 0 {
            best = (r, k / r);
        }
    }
    best
}

fn split_even<T: Clone>(items: &[T], parts: usize) -> Vec<Vec<T>> {
    let n = items.len();
    (0..parts)
        .map(|i| items[i * n / parts..(i + 1) * n / parts].to_vec())
        .collect()
}

/// Grid-sector partition balanced by count: columns cut at x-quantiles, each column cut at y-quantiles.
pub fn partition_clusters(
    nodes: &[&NodeState],
    n_clusters: usize,
) -> Result<(Vec<Vec<NodeId>>, Vec<ClusterTable>)> {
    if n_clusters == 0 {
        return Err(Error::InvalidParams("n_clusters must be >= 1".into()));
    }
    let alive: Vec<&NodeState> = nodes
        .iter()
        .copied()
        .filter(|n| n.alive() && !n.is_bs())
        .collect();
    if alive.len() < n_clusters {
        return Err(Error::TooFewNodes {
            alive: alive.len(),
            clusters: n_clusters,
        });
    }
    let (rows, cols) = grid_shape(n_clusters);
    let mut by_x = alive.clone();
    by_x.sort_by(|a, b| a.pos.x.total_cmp(&b.pos.x).then(a.id.cmp(&b.id)));
    let mut sectors = Vec::with_capacity(n_clusters);
    for mut col in split_even(&by_x, cols) {
        col.sort_by(|a, b| a.pos.y.total_cmp(&b.pos.y).then(a.id.cmp(&b.id)));
        for cell in split_even(&col, rows) {
            let mut ids: Vec<NodeId> = cell.iter().map(|n| n.id).collect();
            ids.sort();
            sectors.push(ids);
        }
    }
    let tables = sectors
        .iter()
        .enumerate()
        .map(|(i, s)| ClusterTable::new(i as u32, s.len() as u32))
        .collect();
    Ok((sectors, tables))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Election {
    pub table: ClusterTable,
    pub fallback: bool,
}

fn rank(nodes: &mut [&NodeState]) {
    nodes.sort_by(|a, b| b.energy_j.total_cmp(&a.energy_j).then(a.id.cmp(&b.id)));
}

/// Bernoulli eligibility gate per node, then highest energy among the eligible heads the cluster and the
/// runner-up stands by. Fewer than two eligible falls back to ranking every candidate by energy.
pub fn elect_heads(
    table: &ClusterTable,
    candidates: &[&NodeState],
    round: u32,
    params: &ThresholdParams,
    bands: &[LevelBand],
    bs: Position,
    rng: &mut impl Rng,
) -> Result<Election> {
    let mut alive: Vec<&NodeState> = candidates.iter().copied().filter(|n| n.alive()).collect();
    if alive.len() < 2 {
        return Err(Error::ClusterDead(table.cluster_id));
    }
    alive.sort_by_key(|n| n.id);
    let mut eligible = Vec::new();
    for n in &alive {
        let band = bands
            .iter()
            .find(|b| b.level == n.level)
            .or_else(|| bands.last())
            .ok_or_else(|| Error::InvalidParams("no level bands".into()))?;
        let t = ch_threshold(n, round, band, params, distance(n.pos, bs))?;
        let u: f64 = rng.random();
        if u < t {
            eligible.push(*n);
        }
    }
    let fallback = eligible.len() < 2;
    let mut pool = if fallback { alive } else { eligible };
    rank(&mut pool);
    let mut out = table.clone();
    out.ch = Some((pool[0].id, pool[0].energy_j));
    out.next_ch = Some((pool[1].id, pool[1].energy_j));
    Ok(Election {
        table: out,
        fallback,
    })
}

/// Hierarchical cluster-local ID: cluster block, then one m-byte suffix per depth.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MemberId {
    pub bytes: Vec<u8>,
    pub depth: u8,
}

impl MemberId {
    pub fn cluster(cluster_id: u32, m: usize) -> MemberId {
        let be = cluster_id.to_be_bytes();
        let mut bytes = vec![0u8; m.saturating_sub(4)];
        bytes.extend_from_slice(&be[4 - m.min(4)..]);
        MemberId { bytes, depth: 0 }
    }

    pub fn child(&self, suffix: &[u8]) -> MemberId {
        let mut bytes = self.bytes.clone();
        bytes.extend_from_slice(suffix);
        MemberId {
            bytes,
            depth: self.depth + 1,
        }
    }

    pub fn suffix(&self, m: usize) -> &[u8] {
        &self.bytes[self.bytes.len() - m..]
    }

    pub fn parent(&self, m: usize) -> Option<MemberId> {
        (self.depth > 0).then(|| MemberId {
            bytes: self.bytes[..self.bytes.len() - m].to_vec(),
            depth: self.depth - 1,
        })
    }
}

pub fn random_suffix(m: usize, rng: &mut impl Rng) -> Vec<u8> {
    (0..m).map(|_| rng.random::<u8>()).collect()
}

/// Replaces `wanted` with the lowest unused suffix when it collides with `taken`. None when the space is full.
pub fn resolve_suffix(wanted: &[u8], taken: &BTreeSet<Vec<u8>>) -> Option<Vec<u8>> {
    if !taken.contains(wanted) {
        return Some(wanted.to_vec());
    }
    let m = wanted.len();
    let space: u64 = 1u64 << (8 * m.min(7));
    (0..space)
        .map(|v| v.to_be_bytes()[8 - m.min(8)..].to_vec())
        .find(|c| !taken.contains(c))
}

/// Slot per member in ascending id order, indices 0..n-1.
pub fn build_schedule(members: &[NodeId]) -> Vec<(NodeId, u32)> {
    let mut ids = members.to_vec();
    ids.sort();
    ids.dedup();
    ids.into_iter()
        .enumerate()
        .map(|(i, id)| (id, i as u32))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouteCand {
    pub node: NodeId,
    pub hops: u32,
    pub level: u32,
    pub snr_db: f64,
    pub rssi_dbm: f64,
    pub power_dbm: f64,
}

fn better(a: &RouteCand, b: &RouteCand) -> bool {
    (a.hops, -a.snr_db, a.node) < (b.hops, -b.snr_db, b.node)
}

/// Minimum-hop candidate one level down (ties: higher SNR, lower id); any lower level if none there.
pub fn choose_next_hop(
    cands: &[RouteCand],
    own_level: u32,
    excluded: impl Fn(NodeId) -> bool,
) -> Option<RouteCand> {
    let pick = |want: &dyn Fn(u32) -> bool| {
        cands
            .iter()
            .filter(|c| want(c.level) && !c.node.is_bs() && !excluded(c.node))
            .fold(None::<RouteCand>, |best, c| match best {
                Some(b) if !better(c, &b) => Some(b),
                _ => Some(*c),
            })
    };
    let below = own_level.saturating_sub(1);
    pick(&|l| l == below).or_else(|| pick(&|l| l >= 1 && l < own_level))
}
