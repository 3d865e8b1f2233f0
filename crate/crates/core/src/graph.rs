//! Butterfly quorum topology.
//!
//! Nodes are grouped into quorums arranged in a grid of `levels` rows and
//! `columns = 2^w` columns, where `w` is the largest width such that every
//! column of every level can be filled with a full quorum. Each quorum on
//! level `i` is wired to two quorums on level `i+1`: the same column, and
//! the column with bit `i−1` flipped (levels beyond the column width wire
//! straight down). Routing from a sender `s` to a receiver `r` follows the
//! unique bit-fixing path from `s`'s entry column on level 1 to `r`'s exit
//! column on the last level, so every path crosses exactly `levels`
//! quorums.
//!
//! Membership is dealt level by level from a seeded shuffled deck of all
//! nodes (reshuffled each time it empties): every node appears in at most
//! one quorum per level — so no node is in more than `levels` quorums
//! overall — and, because each full deck pass touches every node, every
//! node holds at least one membership. Nodes outside every quorum would
//! be invisible to routing, checking, and quarantine alike.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use rand::Rng;

use crate::math::{floor_log2, path_levels_for, quorum_size_for, stable_hash64};
use crate::rng::rng_substream;

/// Index of a physical node, `0..n`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Hash, serde::Serialize)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// Position of a quorum in the butterfly grid. Levels are 1-based.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, serde::Serialize)]
pub struct QuorumId {
    pub level: u32,
    pub column: u32,
}

impl fmt::Display for QuorumId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "q({},{})", self.level, self.column)
    }
}

/// The quorum sequence a send crosses, entry to exit. Entries are dense
/// indices usable with [`QuorumGraph`] accessors.
#[derive(Clone, Debug)]
pub struct QuorumPath {
    pub quorums: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GraphError {
    /// Fewer nodes than one quorum of the derived size needs.
    TooFewNodes { n: u64, need: u64 },
}

impl fmt::Display for GraphError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphError::TooFewNodes { n, need } => {
                write!(f, "network of {n} nodes cannot fill quorums of size {need}")
            }
        }
    }
}

impl core::error::Error for GraphError {}

/// The wired butterfly: quorum membership, adjacency, and routing.
pub struct QuorumGraph {
    n: u32,
    levels: u32,
    columns: u32,
    column_bits: u32,
    quorum_size: u32,
    /// Members of each quorum (dense index), sorted ascending by node id.
    members: Vec<Vec<NodeId>>,
    /// Quorums (dense indices) each node belongs to, ascending.
    memberships: Vec<Vec<u32>>,
    /// Adjacent quorums (prev + next level), ascending, per dense index.
    neighbors: Vec<Vec<u32>>,
}

impl QuorumGraph {
    /// Builds the topology for `n` nodes using the labeled substreams of
    /// `seed` (one per level) for membership assignment.
    pub fn build(n: u32, seed: u64) -> Result<Self, GraphError> {
        let quorum_size = quorum_size_for(n as u64);
        if (n as u64) < quorum_size as u64 {
            return Err(GraphError::TooFewNodes { n: n as u64, need: quorum_size as u64 });
        }
        let levels = path_levels_for(n as u64);
        // Widest power-of-two column count that still fills every quorum.
        let column_bits = floor_log2(n as u64 / quorum_size as u64);
        let columns = 1u32 << column_bits;

        let qcount = (levels * columns) as usize;
        let mut members: Vec<Vec<NodeId>> = vec![Vec::new(); qcount];
        let mut memberships: Vec<Vec<u32>> = vec![Vec::new(); n as usize];

        let per_level = (columns * quorum_size) as usize;
        let mut rng = rng_substream(seed, "graph-assign", 0);
        let mut deck: Vec<u32> = (0..n).collect();
        let mut cursor = deck.len(); // empty: forces the initial shuffle
        let mut in_level = vec![u32::MAX; n as usize];
        for level in 1..=levels {
            // Deal `per_level` distinct nodes from the deck, skipping any
            // the deck boundary repeats within this level. A full deck
            // pass touches every node, so each ⌈n/per_level⌉ consecutive
            // levels cover the whole network.
            let mut dealt = 0usize;
            while dealt < per_level {
                if cursor == deck.len() {
                    for i in (1..deck.len()).rev() {
                        deck.swap(i, rng.gen_range(0..=i));
                    }
                    cursor = 0;
                }
                let node = deck[cursor];
                cursor += 1;
                if in_level[node as usize] == level {
                    continue;
                }
                in_level[node as usize] = level;
                let column = (dealt % columns as usize) as u32;
                let q = Self::index_for(levels, columns, level, column);
                members[q].push(NodeId(node));
                memberships[node as usize].push(q as u32);
                dealt += 1;
            }
        }
        for m in &mut members {
            m.sort_unstable();
        }
        for m in &mut memberships {
            m.sort_unstable();
        }

        let mut neighbors: Vec<Vec<u32>> = vec![Vec::new(); qcount];
        for level in 1..=levels {
            for column in 0..columns {
                let q = Self::index_for(levels, columns, level, column);
                if level < levels {
                    for next in Self::next_columns(column, level, column_bits) {
                        let d = Self::index_for(levels, columns, level + 1, next);
                        neighbors[q].push(d as u32);
                        neighbors[d].push(q as u32);
                    }
                }
            }
        }
        for nb in &mut neighbors {
            nb.sort_unstable();
            nb.dedup();
        }

        Ok(Self {
            n,
            levels,
            columns,
            column_bits,
            quorum_size,
            members,
            memberships,
            neighbors,
        })
    }

    /// A standalone one-quorum topology containing nodes `0..size`. For
    /// unit exercises of quorum-local machinery (signing, marking) at
    /// sizes the full construction cannot produce.
    pub fn single_quorum(size: u32) -> Self {
        let members = vec![(0..size).map(NodeId).collect::<Vec<_>>()];
        let memberships = (0..size).map(|_| vec![0u32]).collect();
        Self {
            n: size,
            levels: 1,
            columns: 1,
            column_bits: 0,
            quorum_size: size,
            members,
            memberships,
            neighbors: vec![Vec::new()],
        }
    }

    fn index_for(levels: u32, columns: u32, level: u32, column: u32) -> usize {
        debug_assert!(level >= 1 && level <= levels);
        debug_assert!(column < columns);
        ((level - 1) * columns + column) as usize
    }

    /// Columns reachable on the next level: straight down, plus the
    /// cross edge while the level index is within the column width.
    fn next_columns(column: u32, level: u32, column_bits: u32) -> Vec<u32> {
        if level <= column_bits {
            let flipped = column ^ (1u32 << (level - 1));
            vec![column, flipped]
        } else {
            vec![column]
        }
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn columns(&self) -> u32 {
        self.columns
    }

    pub fn quorum_size(&self) -> u32 {
        self.quorum_size
    }

    pub fn quorum_count(&self) -> usize {
        self.members.len()
    }

    pub fn quorum_id(&self, q: usize) -> QuorumId {
        QuorumId { level: q as u32 / self.columns + 1, column: q as u32 % self.columns }
    }

    pub fn quorum_index(&self, id: QuorumId) -> usize {
        Self::index_for(self.levels, self.columns, id.level, id.column)
    }

    /// Members of quorum `q`, sorted ascending by node id.
    pub fn members(&self, q: usize) -> &[NodeId] {
        &self.members[q]
    }

    /// Quorums node `x` belongs to (dense indices, ascending).
    pub fn quorums_of(&self, x: NodeId) -> &[u32] {
        &self.memberships[x.0 as usize]
    }

    /// Quorums adjacent to `q` (previous and next level).
    pub fn neighbors(&self, q: usize) -> &[u32] {
        &self.neighbors[q]
    }

    pub fn is_member(&self, x: NodeId, q: usize) -> bool {
        self.members[q].binary_search(&x).is_ok()
    }

    /// Whether node `x` may see quorum `q`'s public key: members of `q`
    /// and of its adjacent quorums may.
    pub fn can_see_key(&self, x: NodeId, q: usize) -> bool {
        if self.is_member(x, q) {
            return true;
        }
        self.neighbors[q].iter().any(|&nb| self.is_member(x, nb as usize))
    }

    /// Entry column for sender `s`: a fixed public hash of the node id,
    /// independent of the trial seed.
    pub fn entry_column(&self, s: NodeId) -> u32 {
        (stable_hash64(s.0 as u64) & (self.columns as u64 - 1)) as u32
    }

    /// Exit column for receiver `r`.
    pub fn exit_column(&self, r: NodeId) -> u32 {
        (stable_hash64(!(r.0 as u64)) & (self.columns as u64 - 1)) as u32
    }

    /// The bit-fixing route from `s`'s entry quorum to `r`'s exit quorum:
    /// exactly `levels` quorums, consecutive ones adjacent.
    pub fn path(&self, s: NodeId, r: NodeId) -> QuorumPath {
        let start = self.entry_column(s);
        let goal = self.exit_column(r);
        let mut quorums = Vec::with_capacity(self.levels as usize);
        let mut column = start;
        quorums.push(Self::index_for(self.levels, self.columns, 1, column));
        for level in 1..self.levels {
            if level <= self.column_bits {
                let bit = 1u32 << (level - 1);
                column = (column & !bit) | (goal & bit);
            }
            quorums.push(Self::index_for(self.levels, self.columns, level + 1, column));
        }
        debug_assert_eq!(column, goal);
        QuorumPath { quorums }
    }

    /// Structural self-check; used by tests and debug builds.
    pub fn validate(&self, membership_factor: u32) -> Result<(), &'static str> {
        let bound = (membership_factor * floor_log2(self.n as u64)) as usize;
        for m in &self.members {
            if m.len() != self.quorum_size as usize {
                return Err("quorum not exactly the derived size");
            }
            if m.windows(2).any(|w| w[0] >= w[1]) {
                return Err("quorum member list not strictly sorted");
            }
        }
        for (node, qs) in self.memberships.iter().enumerate() {
            if qs.is_empty() {
                return Err("node outside every quorum");
            }
            if qs.len() > bound {
                return Err("node exceeds membership bound");
            }
            for &q in qs {
                if !self.is_member(NodeId(node as u32), q as usize) {
                    return Err("membership table inconsistent");
                }
            }
            // At most one quorum per level.
            let mut seen_levels: Vec<u32> = qs.iter().map(|&q| q / self.columns).collect();
            seen_levels.dedup();
            if seen_levels.len() != qs.len() {
                return Err("node in two quorums of one level");
            }
        }
        for (q, nb) in self.neighbors.iter().enumerate() {
            for &d in nb {
                if !self.neighbors[d as usize].contains(&(q as u32)) {
                    return Err("adjacency not symmetric");
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_at_mid_size() {
        let g = QuorumGraph::build(14_116, 7).unwrap();
        assert_eq!(g.levels(), 11);
        assert_eq!(g.quorum_size(), 55);
        assert_eq!(g.columns(), 256);
        assert_eq!(g.quorum_count(), 11 * 256);
        g.validate(4).unwrap();
    }

    #[test]
    fn shape_at_small_size() {
        let g = QuorumGraph::build(1_024, 7).unwrap();
        assert_eq!(g.levels(), 8);
        assert_eq!(g.quorum_size(), 40);
        assert_eq!(g.columns(), 16);
        g.validate(4).unwrap();
    }

    #[test]
    fn paths_have_full_length_and_adjacency() {
        let g = QuorumGraph::build(1_024, 3).unwrap();
        for (s, r) in [(0u32, 1u32), (5, 900), (1023, 17), (444, 444)] {
            let p = g.path(NodeId(s), NodeId(r));
            assert_eq!(p.quorums.len(), g.levels() as usize);
            for w in p.quorums.windows(2) {
                assert!(
                    g.neighbors(w[0]).contains(&(w[1] as u32)),
                    "consecutive path quorums must be adjacent"
                );
            }
            assert_eq!(g.quorum_id(p.quorums[0]).level, 1);
            assert_eq!(g.quorum_id(*p.quorums.last().unwrap()).level, g.levels());
            assert_eq!(g.quorum_id(p.quorums[0]).column, g.entry_column(NodeId(s)));
            assert_eq!(
                g.quorum_id(*p.quorums.last().unwrap()).column,
                g.exit_column(NodeId(r))
            );
        }
    }

    #[test]
    fn every_node_belongs_to_a_quorum() {
        // The deck deal must cover the whole network even when each
        // level only seats a strict subset of it; a node outside every
        // quorum could never be selected, checked, or quarantined.
        for seed in 0..20 {
            let g = QuorumGraph::build(1_024, seed).unwrap();
            for x in 0..g.n() {
                assert!(
                    !g.quorums_of(NodeId(x)).is_empty(),
                    "node {x} unassigned at seed {seed}"
                );
            }
        }
    }

    #[test]
    fn assignment_is_seed_deterministic() {
        let a = QuorumGraph::build(1_024, 11).unwrap();
        let b = QuorumGraph::build(1_024, 11).unwrap();
        let c = QuorumGraph::build(1_024, 12).unwrap();
        assert_eq!(a.members(5), b.members(5));
        assert_ne!(
            (0..a.quorum_count()).map(|q| a.members(q).to_vec()).collect::<Vec<_>>(),
            (0..c.quorum_count()).map(|q| c.members(q).to_vec()).collect::<Vec<_>>(),
        );
    }

    #[test]
    fn key_visibility_follows_adjacency() {
        let g = QuorumGraph::build(1_024, 5).unwrap();
        let q = 17usize;
        let member = g.members(q)[0];
        assert!(g.can_see_key(member, q));
        let nb = g.neighbors(q)[0] as usize;
        let nb_member = g.members(nb)[0];
        assert!(g.can_see_key(nb_member, q));
        // Find some node in neither q nor its neighbors.
        let outsider = (0..g.n())
            .map(NodeId)
            .find(|&x| {
                !g.is_member(x, q) && !g.neighbors(q).iter().any(|&d| g.is_member(x, d as usize))
            })
            .unwrap();
        assert!(!g.can_see_key(outsider, q));
    }

    #[test]
    fn single_quorum_helper() {
        let g = QuorumGraph::single_quorum(8);
        assert_eq!(g.quorum_size(), 8);
        assert_eq!(g.members(0).len(), 8);
        assert!(g.is_member(NodeId(3), 0));
    }

    #[test]
    fn too_small_network_rejected() {
        assert!(matches!(
            QuorumGraph::build(8, 1),
            Err(GraphError::TooFewNodes { .. })
        ));
    }
}
