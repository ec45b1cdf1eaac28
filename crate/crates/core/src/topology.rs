//! Node deployment.

use std::collections::VecDeque;

use rand::Rng;

use crate::model::{distance, NodeId, NodeState, Position};

/// BS at index 0, then `n` sensors placed uniformly in a `field_m` square.
pub fn deploy_uniform(
    n: usize,
    field_m: f64,
    bs: Position,
    energy_j: f64,
    rng: &mut impl Rng,
) -> Vec<NodeState> {
    let mut nodes = Vec::with_capacity(n + 1);
    nodes.push(NodeState::base_station(bs));
    for i in 0..n {
        let pos = Position::new(rng.random::<f64>() * field_m, rng.random::<f64>() * field_m);
        nodes.push(NodeState::sensor(NodeId(i as u32 + 1), pos, energy_j));
    }
    nodes
}

/// Whether every node reaches the BS over links no longer than `range_m`.
pub fn is_connected(nodes: &[NodeState], range_m: f64) -> bool {
    let n = nodes.len();
    let mut seen = vec![false; n];
    let mut q = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(u) = q.pop_front() {
        for v in 0..n {
            if !seen[v] && distance(nodes[u].pos, nodes[v].pos) <= range_m {
                seen[v] = true;
                q.push_back(v);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Redraws until the deployment is connected at `range_m`, giving up after `max_tries`.
pub fn deploy_connected(
    n: usize,
    field_m: f64,
    bs: Position,
    energy_j: f64,
    range_m: f64,
    max_tries: usize,
    rng: &mut impl Rng,
) -> Option<Vec<NodeState>> {
    (0..max_tries)
        .map(|_| deploy_uniform(n, field_m, bs, energy_j, rng))
        .find(|d| is_connected(d, range_m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::rng_from_seed;

    #[test]
    fn uniform_in_field() {
        let mut rng = rng_from_seed(3);
        let nodes = deploy_uniform(200, 1000.0, Position::new(50.0, 75.0), 0.5, &mut rng);
        assert_eq!(nodes.len(), 201);
        assert!(nodes[0].is_bs());
        for (i, n) in nodes.iter().enumerate().skip(1) {
            assert_eq!(n.id, NodeId(i as u32));
            assert!((0.0..=1000.0).contains(&n.pos.x) && (0.0..=1000.0).contains(&n.pos.y));
        }
    }

    #[test]
    fn connectivity() {
        let bs = Position::new(0.0, 0.0);
        let mut nodes = vec![NodeState::base_station(bs)];
        nodes.push(NodeState::sensor(NodeId(1), Position::new(10.0, 0.0), 0.5));
        nodes.push(NodeState::sensor(NodeId(2), Position::new(20.0, 0.0), 0.5));
        assert!(is_connected(&nodes, 10.0));
        assert!(!is_connected(&nodes, 9.0));
    }
}
