//! Quarantine bookkeeping: marked nodes and conflict pairs.
//!
//! When a check uncovers an inconsistency, the protocol derives *conflict
//! pairs*: two nodes in adjacent quorums whose sworn statements about one
//! handoff disagree, so at least one of them lies. Both are marked, and
//! marked nodes stop being selected for routing and checking duties.
//!
//! Marking is advisory, not expulsion. To keep an adversary from pushing
//! honest nodes out forever, any quorum that accumulates marks on half
//! its members resets: those marked members are unmarked everywhere.
//! Since the adversary holds less than an eighth of any quorum, at least
//! three good nodes regain duty per faulty one, which bounds how much
//! healing the adversary can undo.
//!
//! All mutations return message/round meters describing the notification
//! traffic the distributed version would pay (in-quorum agreement plus
//! announcements to every affected quorum and its neighbors).

use alloc::vec::Vec;

use crate::graph::{NodeId, QuorumGraph, QuorumId};
use crate::math::unmark_threshold;

/// Two adjacent-quorum nodes whose statements about one message handoff
/// contradict each other.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConflictPair {
    /// The sending side of the disputed handoff.
    pub accused_sender: NodeId,
    /// The receiving side.
    pub accused_receiver: NodeId,
    /// Quorums the two sides acted in (sender's, receiver's).
    pub boundary: (QuorumId, QuorumId),
}

/// Outcome of recording a batch of conflict pairs.
#[derive(Clone, Debug, Default)]
pub struct MarkReport {
    pub newly_marked: Vec<NodeId>,
    pub unmarked: Vec<NodeId>,
    /// Quorums whose half-marked reset fired.
    pub reset_quorums: Vec<QuorumId>,
    pub messages: u64,
    pub rounds: u32,
}

/// Per-trial marked-node state.
pub struct MarkTable {
    marked: Vec<bool>,
    per_quorum_marked: Vec<u32>,
    total_marked: u32,
}

impl MarkTable {
    pub fn new(graph: &QuorumGraph) -> Self {
        Self {
            marked: alloc::vec![false; graph.n() as usize],
            per_quorum_marked: alloc::vec![0; graph.quorum_count()],
            total_marked: 0,
        }
    }

    pub fn is_marked(&self, x: NodeId) -> bool {
        self.marked[x.0 as usize]
    }

    pub fn total_marked(&self) -> u32 {
        self.total_marked
    }

    pub fn marked_in(&self, q: usize) -> u32 {
        self.per_quorum_marked[q]
    }

    /// Unmarked members of quorum `q`, ascending by node id. This is the
    /// selection pool for routing and checking duties.
    pub fn unmarked_members(&self, graph: &QuorumGraph, q: usize) -> Vec<NodeId> {
        graph.members(q).iter().copied().filter(|&m| !self.is_marked(m)).collect()
    }

    pub fn unmarked_count(&self, graph: &QuorumGraph, q: usize) -> u32 {
        graph.members(q).len() as u32 - self.per_quorum_marked[q]
    }

    fn set_mark(&mut self, graph: &QuorumGraph, x: NodeId, value: bool) {
        let slot = &mut self.marked[x.0 as usize];
        if *slot == value {
            return;
        }
        *slot = value;
        for &q in graph.quorums_of(x) {
            if value {
                self.per_quorum_marked[q as usize] += 1;
            } else {
                self.per_quorum_marked[q as usize] -= 1;
            }
        }
        if value {
            self.total_marked += 1;
        } else {
            self.total_marked -= 1;
        }
    }

    /// Messages to tell every quorum of `x`, and each such quorum's
    /// neighbors, about a mark state change: one member relays into each
    /// quorum (q messages), which forwards to adjacent quorums.
    pub fn announce_cost(&self, graph: &QuorumGraph, x: NodeId) -> u64 {
        let q = graph.quorum_size() as u64;
        let mut cost = 0u64;
        for &t in graph.quorums_of(x) {
            cost += q;
            cost += graph.neighbors(t as usize).len() as u64 * q;
        }
        cost
    }

    /// Records conflict pairs from one alarm: marks both sides of every
    /// pair, announces the marks, then runs the half-marked reset until
    /// no quorum is at threshold.
    pub fn record_conflicts(&mut self, graph: &QuorumGraph, pairs: &[ConflictPair]) -> MarkReport {
        let q = graph.quorum_size() as u64;
        let mut report = MarkReport::default();
        for pair in pairs {
            debug_assert_ne!(pair.accused_sender, pair.accused_receiver);
            // The two boundary quorums agree on the accusation all-to-all
            // before anything is announced.
            report.messages += 2 * q * q;
            for side in [pair.accused_sender, pair.accused_receiver] {
                if !self.is_marked(side) {
                    self.set_mark(graph, side, true);
                    report.messages += self.announce_cost(graph, side);
                    report.newly_marked.push(side);
                }
            }
        }
        report.rounds += 2;
        self.run_resets(graph, &mut report);
        report
    }

    /// The half-marked reset: while some quorum has marks on at least
    /// ⌈q/2⌉ members, unmark all of that quorum's marked members
    /// everywhere. Processes lowest quorum index first for determinism.
    fn run_resets(&mut self, graph: &QuorumGraph, report: &mut MarkReport) {
        let q = graph.quorum_size() as u64;
        loop {
            let threshold = unmark_threshold(graph.quorum_size());
            let Some(target) = (0..graph.quorum_count())
                .find(|&t| self.per_quorum_marked[t] >= threshold)
            else {
                break;
            };
            report.reset_quorums.push(graph.quorum_id(target));
            // In-quorum agreement on the reset decision.
            report.messages += q * q;
            report.rounds += 1;
            let to_clear: Vec<NodeId> = graph
                .members(target)
                .iter()
                .copied()
                .filter(|&m| self.is_marked(m))
                .collect();
            for m in to_clear {
                self.set_mark(graph, m, false);
                report.messages += self.announce_cost(graph, m);
                report.unmarked.push(m);
            }
        }
    }

    /// Structural invariant: every quorum keeps a strict majority of its
    /// members unmarked.
    pub fn validate(&self, graph: &QuorumGraph) -> Result<(), &'static str> {
        let threshold = unmark_threshold(graph.quorum_size());
        for t in 0..graph.quorum_count() {
            if self.per_quorum_marked[t] >= threshold {
                return Err("quorum at or above the reset threshold");
            }
            if self.unmarked_count(graph, t) * 2 <= graph.quorum_size() {
                return Err("quorum lost its unmarked majority");
            }
        }
        Ok(())
    }
}
