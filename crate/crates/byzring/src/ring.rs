//! Anonymous port-labelled ring topology and the per-robot sense of direction.
//!
//! Nodes carry no identifiers; the only structure a robot can perceive is the
//! pair of local port labels at its current node and, after a move, the labels
//! on both ends of the edge it crossed. `NodeRef` indices exist purely for
//! engine bookkeeping and trace output and never appear in observations.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Local port label at a node. Every node labels its two incident edge ends
/// `0` and `1`; the two endpoints of an edge may label it differently.
pub type PortLabel = u8;

/// Engine-internal node index in `[0, n)`. Protocol code never sees one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeRef(pub usize);

/// How port labels are assigned when building a ring.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PortScheme {
    /// Port 0 leads in the global clockwise direction at every node.
    LowerIsCwEverywhere,
    /// Port 0 leads clockwise at even-indexed nodes, counter-clockwise at odd.
    Alternating,
    /// Per-node labels drawn from a seeded generator; reproducible from the seed.
    SeededRandom { seed: u64 },
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum RingError {
    #[error("ring must have at least one node")]
    EmptyRing,
    #[error("port label {0} is not one of the two local labels")]
    BadPortLabel(PortLabel),
}

/// An n-node cycle with per-node port labels.
///
/// Internally node `i`'s neighbours in the cycle are `i±1 mod n`; `cw_port[i]`
/// is the label node `i` gives to the edge toward `i+1`. For `n = 1` the two
/// ports are the two halves of the single self-loop cycle edge.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ring {
    n: usize,
    cw_port: Vec<PortLabel>,
}

impl Ring {
    /// Builds a ring of `n` nodes with labels assigned per `scheme`.
    pub fn build(n: usize, scheme: PortScheme) -> Result<Ring, RingError> {
        if n == 0 {
            return Err(RingError::EmptyRing);
        }
        let cw_port = match scheme {
            PortScheme::LowerIsCwEverywhere => vec![0; n],
            PortScheme::Alternating => (0..n).map(|i| (i % 2) as PortLabel).collect(),
            PortScheme::SeededRandom { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..n).map(|_| rng.gen_range(0..2) as PortLabel).collect()
            }
        };
        Ok(Ring { n, cw_port })
    }

    /// Builds a ring from an explicit assignment of clockwise-edge labels,
    /// one per node. Used for exhaustive topology sweeps in tests.
    pub fn from_cw_ports(cw_port: Vec<PortLabel>) -> Result<Ring, RingError> {
        if cw_port.is_empty() {
            return Err(RingError::EmptyRing);
        }
        if let Some(&bad) = cw_port.iter().find(|&&p| p > 1) {
            return Err(RingError::BadPortLabel(bad));
        }
        Ok(Ring { n: cw_port.len(), cw_port })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// The two port labels at a node. Labels are `{0, 1}` everywhere.
    pub fn local_ports(&self, _at: NodeRef) -> [PortLabel; 2] {
        [0, 1]
    }

    /// The locally smaller port label at a node.
    pub fn lower_port(&self, _at: NodeRef) -> PortLabel {
        0
    }

    /// Label at `at` of the edge leading in the global clockwise direction.
    /// Engine/adversary only; protocol code has no access to global orientation.
    pub fn global_cw_port(&self, at: NodeRef) -> PortLabel {
        self.cw_port[at.0]
    }

    /// Ring distance from `a` to `b` walking in the global clockwise direction.
    pub fn cw_distance(&self, a: NodeRef, b: NodeRef) -> usize {
        (b.0 + self.n - a.0) % self.n
    }

    /// Crosses the edge behind port `via` at node `at`. Returns the node
    /// reached and the label the far endpoint gives to the same edge.
    ///
    /// Traversal is total and involutive: crossing back through the returned
    /// entry label returns to `at` with entry label `via`.
    pub fn traverse(&self, at: NodeRef, via: PortLabel) -> (NodeRef, PortLabel) {
        debug_assert!(via <= 1, "port labels are 0 or 1");
        if via == self.cw_port[at.0] {
            let dest = NodeRef((at.0 + 1) % self.n);
            (dest, 1 - self.cw_port[dest.0])
        } else {
            let dest = NodeRef((at.0 + self.n - 1) % self.n);
            (dest, self.cw_port[dest.0])
        }
    }
}

/// A robot's private designation of which local port it currently calls
/// clockwise. Seeded by the lower-port rule and carried across moves.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SenseOfDirection {
    pub clockwise_port: PortLabel,
}

impl SenseOfDirection {
    pub fn counter_clockwise_port(&self) -> PortLabel {
        1 - self.clockwise_port
    }
}

/// The sense a robot adopts when it first starts (or resets): the edge with
/// the locally lower port number is clockwise. A pure function of the node,
/// so all co-located robots resetting together agree.
pub fn initial_sense(ring: &Ring, at: NodeRef) -> SenseOfDirection {
    SenseOfDirection { clockwise_port: ring.lower_port(at) }
}

/// Carries a sense across one move. If the robot crossed its clockwise edge,
/// the return edge at the new node is counter-clockwise, so the new clockwise
/// port is the one other than `entry`; after a counter-clockwise move the
/// return edge itself is clockwise.
pub fn propagate_sense(
    old: SenseOfDirection,
    moved_via: PortLabel,
    entry: PortLabel,
) -> SenseOfDirection {
    if moved_via == old.clockwise_port {
        SenseOfDirection { clockwise_port: 1 - entry }
    } else {
        SenseOfDirection { clockwise_port: entry }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn build_rejects_empty_ring() {
        assert_eq!(Ring::build(0, PortScheme::LowerIsCwEverywhere), Err(RingError::EmptyRing));
    }

    #[test]
    fn lower_is_cw_everywhere_means_port_zero_goes_clockwise() {
        let ring = Ring::build(3, PortScheme::LowerIsCwEverywhere).unwrap();
        for i in 0..3 {
            let (dest, _) = ring.traverse(NodeRef(i), 0);
            assert_eq!(dest, NodeRef((i + 1) % 3));
        }
    }

    #[test]
    fn seeded_random_is_reproducible() {
        let a = Ring::build(8, PortScheme::SeededRandom { seed: 42 }).unwrap();
        let b = Ring::build(8, PortScheme::SeededRandom { seed: 42 }).unwrap();
        assert_eq!(a, b);
        let c = Ring::build(8, PortScheme::SeededRandom { seed: 43 }).unwrap();
        assert_ne!(a, c, "different seeds should disagree on an 8-node ring");
    }

    #[test]
    fn single_node_ring_self_loops() {
        let ring = Ring::build(1, PortScheme::Alternating).unwrap();
        for via in 0..2u8 {
            let (dest, entry) = ring.traverse(NodeRef(0), via);
            assert_eq!(dest, NodeRef(0));
            assert_eq!(entry, 1 - via, "the two ports are the halves of one cycle edge");
        }
    }

    #[test]
    fn traverse_is_an_involution() {
        for n in 1..=9 {
            for seed in 0..4 {
                let ring = Ring::build(n, PortScheme::SeededRandom { seed }).unwrap();
                for i in 0..n {
                    for via in 0..2u8 {
                        let (dest, entry) = ring.traverse(NodeRef(i), via);
                        let (back, back_entry) = ring.traverse(dest, entry);
                        assert_eq!(back, NodeRef(i));
                        assert_eq!(back_entry, via);
                    }
                }
            }
        }
    }

    #[test]
    fn traverse_on_two_node_ring_round_trips() {
        let ring = Ring::build(2, PortScheme::SeededRandom { seed: 7 }).unwrap();
        let (dest, entry) = ring.traverse(NodeRef(0), 1);
        let (back, _) = ring.traverse(dest, entry);
        assert_eq!(back, NodeRef(0));
    }

    #[test]
    fn initial_sense_is_the_lower_port_and_shared() {
        let ring = Ring::build(5, PortScheme::SeededRandom { seed: 3 }).unwrap();
        for i in 0..5 {
            assert_eq!(initial_sense(&ring, NodeRef(i)).clockwise_port, 0);
            assert_eq!(initial_sense(&ring, NodeRef(i)), initial_sense(&ring, NodeRef(i)));
        }
    }

    #[test]
    fn propagate_sense_examples() {
        let sense = SenseOfDirection { clockwise_port: 1 };
        // Moved through the clockwise edge, entered the new node via port 1:
        // the other port (0) continues clockwise.
        assert_eq!(propagate_sense(sense, 1, 1).clockwise_port, 0);
        // Moved counter-clockwise (via port 0 here), entered via port 0: the
        // return edge is the clockwise edge.
        assert_eq!(propagate_sense(sense, 0, 0).clockwise_port, 0);
    }

    fn walk_full_lap(ring: &Ring, start: usize) {
        let n = ring.n();
        let mut node = NodeRef(start);
        let mut sense = initial_sense(ring, node);
        let mut seen = vec![false; n];
        for _ in 0..n {
            assert!(!seen[node.0], "revisited a node before completing the lap");
            seen[node.0] = true;
            let via = sense.clockwise_port;
            let (dest, entry) = ring.traverse(node, via);
            sense = propagate_sense(sense, via, entry);
            node = dest;
        }
        assert_eq!(node, NodeRef(start), "n clockwise steps must return to the start");
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn clockwise_lap_visits_every_node_once_exhaustive_small() {
        // Every labelling of every ring with n <= 8.
        for n in 1..=8usize {
            for mask in 0..(1u32 << n) {
                let ports = (0..n).map(|i| ((mask >> i) & 1) as PortLabel).collect();
                let ring = Ring::from_cw_ports(ports).unwrap();
                for start in 0..n {
                    walk_full_lap(&ring, start);
                }
            }
        }
    }

    #[test]
    fn clockwise_lap_visits_every_node_once_sampled_large() {
        for n in [13, 32, 64] {
            for seed in 0..8 {
                let ring = Ring::build(n, PortScheme::SeededRandom { seed }).unwrap();
                for start in [0, n / 2, n - 1] {
                    walk_full_lap(&ring, start);
                }
            }
        }
    }
}
