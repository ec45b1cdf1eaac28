//! Sinkhole injection and the base station's locate-and-isolate procedure.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::NodeId;

#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    pub malicious_fraction: f64,
    /// Exactly one intruder regardless of network size.
    pub single: bool,
    pub false_advert: bool,
    pub drop_prob: f64,
    /// Swallow everything held, ignoring `drop_prob`.
    pub divert: bool,
    pub activation_s: f64,
    pub snr_bonus_db: f64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            malicious_fraction: 0.0,
            single: false,
            false_advert: true,
            drop_prob: 0.8,
            divert: false,
            activation_s: 0.0,
            snr_bonus_db: 20.0,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.malicious_fraction) {
            return Err(Error::Validation {
                key: "attack.fraction".into(),
                msg: "must be in [0,1)".into(),
            });
        }
        if !(0.0..=1.0).contains(&self.drop_prob) {
            return Err(Error::Validation {
                key: "attack.drop_prob".into(),
                msg: "must be in [0,1]".into(),
            });
        }
        if self.activation_s < 0.0 {
            return Err(Error::Validation {
                key: "attack.activation_s".into(),
                msg: "must be >= 0".into(),
            });
        }
        Ok(())
    }

    pub fn is_active(&self) -> bool {
        self.single || self.malicious_fraction > 0.0
    }

    /// Whether a compromised node discards one held packet right now.
    pub fn drops(&self, rng: &mut impl Rng) -> bool {
        self.divert || (self.drop_prob > 0.0 && rng.random::<f64>() < self.drop_prob)
    }
}

/// Base-station detection knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectConfig {
    pub enabled: bool,
    pub window_rounds: u32,
    pub fraction: f64,
    /// Sources with fewer attempts in the window are not judged.
    pub min_attempts: u32,
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig {
            enabled: true,
            window_rounds: 5,
            fraction: 0.5,
            min_attempts: 1,
        }
    }
}

/// Picks ⌊fraction·N⌋ of `candidates` (or exactly one in single mode).
pub fn inject(candidates: &[NodeId], cfg: &AttackConfig, rng: &mut impl Rng) -> BTreeSet<NodeId> {
    let n = candidates.len();
    let k = if cfg.single {
        1.min(n)
    } else {
        ((cfg.malicious_fraction * n as f64) + 1e-9).floor() as usize
    };
    if k == 0 {
        return BTreeSet::new();
    }
    sample(rng, n, k)
        .into_iter()
        .map(|i| candidates[i])
        .collect()
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Flags sources whose windowed delivery ratio is below `fraction` of the reference ratio.
///
/// The reference is the network median, except when the median itself is below `fraction`:
/// then most sources are impaired and the ideal ratio 1.0 is used instead.
pub fn flag_affected(
    stats: &HashMap<NodeId, (u32, u32)>,
    completed_rounds: u32,
    cfg: &DetectConfig,
) -> Result<BTreeSet<NodeId>> {
    if completed_rounds < cfg.window_rounds {
        return Err(Error::InsufficientHistory(cfg.window_rounds));
    }
    let ratios: BTreeMap<NodeId, f64> = stats
        .iter()
        .filter(|(id, (att, _))| !id.is_bs() && *att >= cfg.min_attempts.max(1))
        .map(|(id, (att, del))| (*id, *del as f64 / *att as f64))
        .collect();
    if ratios.is_empty() {
        return Ok(BTreeSet::new());
    }
    let mut v: Vec<f64> = ratios.values().copied().collect();
    let med = median(&mut v);
    let reference = if med < cfg.fraction { 1.0 } else { med };
    let cut = cfg.fraction * reference;
    Ok(ratios
        .into_iter()
        .filter(|(_, r)| *r < cut)
        .map(|(id, _)| id)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct FlowResponse {
    pub responder: NodeId,
    pub next_hop: Option<NodeId>,
    pub cost: u32,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RoutingTree {
    pub edges: BTreeMap<NodeId, Option<NodeId>>,
    pub roots: BTreeSet<NodeId>,
    pub cycles: Vec<Vec<NodeId>>,
}

impl RoutingTree {
    /// Builds the next-hop graph of the responders inside `affected` and finds its roots.
    ///
    /// A root is an affected node that receives at least one edge and whose own flow either stops
    /// there (it did not answer, or answered without a next hop) or leaves the region for a node
    /// other than the BS. Nodes on a cycle are all roots.
    pub fn build(responses: &[FlowResponse], affected: &BTreeSet<NodeId>) -> RoutingTree {
        let edges: BTreeMap<NodeId, Option<NodeId>> = responses
            .iter()
            .filter(|r| affected.contains(&r.responder))
            .map(|r| (r.responder, r.next_hop.filter(|&n| n != r.responder)))
            .collect();
        let mut roots = BTreeSet::new();
        let destinations: BTreeSet<NodeId> = edges.values().flatten().copied().collect();
        for &v in &destinations {
            if v.is_bs() || !affected.contains(&v) {
                continue;
            }
            match edges.get(&v) {
                None | Some(None) => {
                    roots.insert(v);
                }
                Some(Some(nh)) => {
                    if !nh.is_bs() && !affected.contains(nh) {
                        roots.insert(v);
                    }
                }
            }
        }
        // functional graph: colour walk to find every cycle once
        let mut state: HashMap<NodeId, u8> = HashMap::new();
        let mut cycles = Vec::new();
        for &start in edges.keys() {
            if state.contains_key(&start) {
                continue;
            }
            let mut path = Vec::new();
            let mut cur = Some(start);
            while let Some(c) = cur {
                match state.get(&c) {
                    Some(1) => {
                        let pos = path.iter().position(|&p| p == c).expect("on current path");
                        let cyc: Vec<NodeId> = path[pos..].to_vec();
                        roots.extend(cyc.iter().copied());
                        cycles.push(cyc);
                        break;
                    }
                    Some(_) => break,
                    None => {}
                }
                if !edges.contains_key(&c) {
                    break;
                }
                state.insert(c, 1);
                path.push(c);
                cur = edges[&c];
            }
            for p in path {
                state.insert(p, 2);
            }
        }
        RoutingTree {
            edges,
            roots,
            cycles,
        }
    }
}

pub fn locate_sinkhole(
    responses: &[FlowResponse],
    affected: &BTreeSet<NodeId>,
) -> BTreeSet<NodeId> {
    RoutingTree::build(responses, affected).roots
}
