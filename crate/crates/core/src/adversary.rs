//! The adversary: which nodes are faulty and how they behave.
//!
//! Faults are *rushing* and coordinated: all good nodes' sends in a step
//! are visible to the adversary before any faulty node commits its own,
//! and faulty nodes share knowledge (including the genuine payload and
//! the full selection schedule). Within one send, all faulty nodes that
//! corrupt substitute the *same* wrong payload, which is the strongest
//! play against consistency comparisons.
//!
//! Faulty nodes can alter only payloads they relay. They cannot forge
//! signatures (see [`crate::crypto`]), so a corrupted signed object keeps
//! its now-mismatched signature and becomes structurally invalid.
//!
//! The fault *set* is `t` nodes sampled uniformly without replacement.
//! The analysis assumes no quorum starts with more than ⌊q/8⌋ faulty
//! members; [`BadFractionPolicy`] selects whether a violating sample is
//! an error or merely recorded, since for large `t` a compliant uniform
//! sample may not exist at all.

use alloc::vec::Vec;
use core::fmt;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::graph::{NodeId, QuorumGraph};
use crate::math::per_quorum_fault_cap;

/// Behavioral profile of the faulty nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub enum Strategy {
    /// Faulty nodes follow the protocol exactly (control runs).
    FaithfulControl,
    /// Corrupt every relayed payload; contribute signing shares
    /// faithfully so quorum operations still function.
    AlwaysCorrupt,
    /// Drop every relay obligation and withhold signing shares.
    Silent,
    /// Corrupt the data path, but during checks play to *survive*:
    /// corrupt probes only where no honest observer can tell, and stall
    /// the chain check at chosen levels to keep the undetected interval
    /// alive as long as possible.
    IntervalMaintainer,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Strategy::FaithfulControl => "faithful-control",
            Strategy::AlwaysCorrupt => "always-corrupt",
            Strategy::Silent => "silent",
            Strategy::IntervalMaintainer => "interval-maintainer",
        };
        f.write_str(s)
    }
}

/// What to do when no sampled fault set satisfies the per-quorum cap.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub enum BadFractionPolicy {
    /// Fail construction. Use where the analysis' per-quorum bound is a
    /// precondition being tested.
    Enforce,
    /// Accept the final sample and record the violating quorums. Use for
    /// measurement runs with fault rates where uniform samples
    /// necessarily overfill some quorums.
    Observe,
}

/// A faulty node's choice for one relay obligation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BadAction {
    /// Forward the held value unchanged.
    Faithful,
    /// Send nothing.
    Drop,
    /// Replace the payload with this send's common corrupted payload
    /// (signatures, if any, ride along and stop matching).
    Corrupt,
    /// Send different recipients different payloads. Never chosen by the
    /// built-in strategies; available to targeted tests.
    Equivocate,
}

/// Which relay obligation is being decided.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RelayPhase {
    /// Selected relay on the data path forwarding to the next selection.
    PathHop,
    /// Selected exit relay broadcasting into the final quorum.
    PathExit,
    /// Final-quorum member forwarding the result to the receiver.
    DeliverToReceiver,
    /// Contributing a signing share to a quorum broadcast.
    ShareSign,
    /// Subset-check member fanning out to the next level's subset.
    SubsetFan,
    /// Subset-check exit member reporting into the final quorum.
    SubsetExit,
    /// Chain-check holder sending the round's probe to the fresh
    /// selection of the next level.
    ChainSend,
    /// Chain-check fresh selection relaying to its level's past
    /// selections.
    ChainRelay,
    /// Chain-check final-level holder reporting into the exit quorum.
    ChainExit,
}

/// Context the adversary sees when deciding (rushing: includes schedule
/// facts a real-time node would not have yet).
#[derive(Clone, Copy, Debug)]
pub struct RelayCtx {
    pub phase: RelayPhase,
    /// Chain-check round, 1-based; 0 outside the chain check.
    pub round: u32,
    /// Path level of the obligation, 1-based.
    pub level: u32,
    /// Subset check: every member of the deciding node's subset is
    /// faulty, so a coordinated rewrite cannot be observed.
    pub whole_subset_bad: bool,
    /// Chain check: level at which the interval strategy stalls the
    /// probe this round.
    pub block_level: Option<u32>,
    /// Whether this send's data path actually delivered a corrupted (or
    /// no) value. Rushing faults know this; rewriting a probe to agree
    /// with data that is in fact clean would only incriminate them.
    pub data_corrupted: bool,
}

impl RelayCtx {
    pub fn new(phase: RelayPhase) -> Self {
        Self {
            phase,
            round: 0,
            level: 0,
            whole_subset_bad: false,
            block_level: None,
            data_corrupted: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AdversaryError {
    /// No sample within the attempt budget satisfied the per-quorum cap.
    BadFractionUnsatisfiable { attempts: u32, worst_overfilled: u32 },
}

impl fmt::Display for AdversaryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdversaryError::BadFractionUnsatisfiable { attempts, worst_overfilled } => write!(
                f,
                "no fault sample within {attempts} attempts kept every quorum at the cap \
                 (best attempt overfilled {worst_overfilled} quorums)"
            ),
        }
    }
}

impl core::error::Error for AdversaryError {}

/// Ground truth of which nodes are faulty, plus the behavioral strategy.
///
/// `is_bad` is an oracle for metrics, assertions, and the adversary's own
/// coordination. Protocol decision logic for good nodes must never
/// consult it.
pub struct AdversaryState {
    strategy: Strategy,
    bad: Vec<bool>,
    bad_nodes: Vec<NodeId>,
    /// Quorums whose faulty-member count exceeds the cap, with counts
    /// (non-empty only under [`BadFractionPolicy::Observe`]).
    pub violations: Vec<(u32, u32)>,
}

const SAMPLE_ATTEMPTS: u32 = 32;

impl AdversaryState {
    /// An adversary controlling nobody.
    pub fn empty(graph: &QuorumGraph) -> Self {
        Self {
            strategy: Strategy::FaithfulControl,
            bad: alloc::vec![false; graph.n() as usize],
            bad_nodes: Vec::new(),
            violations: Vec::new(),
        }
    }

    /// Samples `t` faulty nodes uniformly without replacement, retrying
    /// while some quorum exceeds ⌊q/8⌋ faulty members.
    pub fn corrupt_nodes(
        graph: &QuorumGraph,
        strategy: Strategy,
        t: u32,
        rng: &mut ChaCha8Rng,
        policy: BadFractionPolicy,
    ) -> Result<Self, AdversaryError> {
        debug_assert!(t <= graph.n());
        let cap = per_quorum_fault_cap(graph.quorum_size());
        let mut pool: Vec<u32> = (0..graph.n()).collect();
        let mut best_overfill = u32::MAX;
        let mut last_sample: Vec<u32> = Vec::new();
        let mut last_violations: Vec<(u32, u32)> = Vec::new();

        for _ in 0..SAMPLE_ATTEMPTS {
            for i in 0..t as usize {
                let j = rng.gen_range(i..pool.len());
                pool.swap(i, j);
            }
            let sample = &pool[..t as usize];
            let mut per_quorum = alloc::vec![0u32; graph.quorum_count()];
            for &x in sample {
                for &q in graph.quorums_of(NodeId(x)) {
                    per_quorum[q as usize] += 1;
                }
            }
            let violations: Vec<(u32, u32)> = per_quorum
                .iter()
                .enumerate()
                .filter(|&(_, &c)| c > cap)
                .map(|(q, &c)| (q as u32, c))
                .collect();
            if violations.len() < best_overfill as usize || last_sample.is_empty() {
                best_overfill = violations.len() as u32;
                last_sample = sample.to_vec();
                last_violations = violations.clone();
            }
            if violations.is_empty() {
                return Ok(Self::from_sample(graph, strategy, sample, Vec::new()));
            }
        }

        match policy {
            BadFractionPolicy::Enforce => Err(AdversaryError::BadFractionUnsatisfiable {
                attempts: SAMPLE_ATTEMPTS,
                worst_overfilled: best_overfill,
            }),
            BadFractionPolicy::Observe => {
                Ok(Self::from_sample(graph, strategy, &last_sample, last_violations))
            }
        }
    }

    fn from_sample(
        graph: &QuorumGraph,
        strategy: Strategy,
        sample: &[u32],
        violations: Vec<(u32, u32)>,
    ) -> Self {
        let mut bad = alloc::vec![false; graph.n() as usize];
        let mut bad_nodes: Vec<NodeId> = sample.iter().map(|&x| NodeId(x)).collect();
        bad_nodes.sort_unstable();
        for &x in &bad_nodes {
            bad[x.0 as usize] = true;
        }
        Self { strategy, bad, bad_nodes, violations }
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    /// Ground-truth oracle. For metrics, assertions, and adversary
    /// coordination only — never for good nodes' protocol decisions.
    pub fn is_bad(&self, x: NodeId) -> bool {
        self.bad[x.0 as usize]
    }

    pub fn bad_nodes(&self) -> &[NodeId] {
        &self.bad_nodes
    }

    pub fn t(&self) -> u32 {
        self.bad_nodes.len() as u32
    }

    /// The faulty node `node`'s choice for the obligation in `ctx`.
    /// Callers route only faulty nodes through here.
    pub fn decide(&self, node: NodeId, ctx: &RelayCtx) -> BadAction {
        debug_assert!(self.is_bad(node));
        match self.strategy {
            Strategy::FaithfulControl => BadAction::Faithful,
            Strategy::Silent => BadAction::Drop,
            Strategy::AlwaysCorrupt => match ctx.phase {
                // Corrupting shares would only produce invalid shares that
                // good majorities ignore; signing faithfully keeps quorum
                // machinery alive so the payload attack can proceed.
                RelayPhase::ShareSign => BadAction::Faithful,
                _ => BadAction::Corrupt,
            },
            Strategy::IntervalMaintainer => match ctx.phase {
                RelayPhase::ShareSign => BadAction::Faithful,
                RelayPhase::PathHop | RelayPhase::PathExit => BadAction::Corrupt,
                RelayPhase::DeliverToReceiver => BadAction::Faithful,
                // Rewrite the subset probe only when the data was in fact
                // corrupted *and* the whole subset is faulty; otherwise an
                // honest peer would see mixed copies, or the rewrite would
                // disagree with clean data at the exit.
                RelayPhase::SubsetFan | RelayPhase::SubsetExit => {
                    if ctx.whole_subset_bad && ctx.data_corrupted {
                        BadAction::Corrupt
                    } else {
                        BadAction::Faithful
                    }
                }
                RelayPhase::ChainExit => BadAction::Faithful,
                // Stall the probe at the chosen level: the holder there
                // withholds both its onward send and its within-level
                // relay. Elsewhere, relaying faithfully is the only move
                // that does not immediately strand an honest holder.
                RelayPhase::ChainSend | RelayPhase::ChainRelay => {
                    if ctx.block_level == Some(ctx.level) {
                        BadAction::Drop
                    } else {
                        BadAction::Faithful
                    }
                }
            },
        }
    }
}

/// Interval strategy's stall choice for one chain-check round.
///
/// `lo` (exclusive) .. `hi` (inclusive) is the window of levels where
/// stalling is still survivable: below `lo` sit holders that must be fed
/// every round, above `hi` sit starved past selections that would expose
/// any delivery. Within the window, the adversary stalls at the leftmost
/// level of the longest run of consecutive faulty fresh selections,
/// which keeps the next window as large as possible. Returns `None`
/// (play faithfully, detection follows) when no faulty selection is in
/// the window.
pub fn choose_interval_block(lo: u32, hi: u32, is_bad_level: impl Fn(u32) -> bool) -> Option<u32> {
    let mut best: Option<(u32, u32)> = None; // (start, length)
    let mut run_start = 0u32;
    let mut run_len = 0u32;
    for level in lo + 1..=hi {
        if is_bad_level(level) {
            if run_len == 0 {
                run_start = level;
            }
            run_len += 1;
            let better = match best {
                None => true,
                Some((_, blen)) => run_len > blen,
            };
            if better {
                best = Some((run_start, run_len));
            }
        } else {
            run_len = 0;
        }
    }
    best.map(|(start, _)| start)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_stream;

    #[test]
    fn sampling_respects_cap_under_enforce() {
        let graph = QuorumGraph::build(1_024, 5).unwrap();
        let mut rng = rng_stream(5, "adversary");
        // 1/32 of the nodes: expected faulty per 40-member quorum is well
        // under the cap of 5, so compliant uniform samples are plentiful.
        let adv = AdversaryState::corrupt_nodes(
            &graph,
            Strategy::AlwaysCorrupt,
            32,
            &mut rng,
            BadFractionPolicy::Enforce,
        )
        .unwrap();
        assert_eq!(adv.t(), 32);
        assert!(adv.violations.is_empty());
        let cap = per_quorum_fault_cap(graph.quorum_size());
        for q in 0..graph.quorum_count() {
            let bad_here =
                graph.members(q).iter().filter(|&&m| adv.is_bad(m)).count() as u32;
            assert!(bad_here <= cap);
        }
    }

    #[test]
    fn infeasible_enforce_fails_observe_records() {
        let graph = QuorumGraph::build(1_024, 5).unwrap();
        // 1/8 of the nodes: expected faulty per 40-member quorum is 5 (the
        // cap), so a uniform sample keeping *every* quorum at cap is
        // vanishingly unlikely.
        let t = 128;
        let mut rng = rng_stream(6, "adversary");
        let enforce = AdversaryState::corrupt_nodes(
            &graph,
            Strategy::AlwaysCorrupt,
            t,
            &mut rng,
            BadFractionPolicy::Enforce,
        );
        assert!(enforce.is_err());
        let mut rng = rng_stream(6, "adversary");
        let observe = AdversaryState::corrupt_nodes(
            &graph,
            Strategy::AlwaysCorrupt,
            t,
            &mut rng,
            BadFractionPolicy::Observe,
        )
        .unwrap();
        assert_eq!(observe.t(), t);
        assert!(!observe.violations.is_empty());
    }

    #[test]
    fn sampling_is_deterministic() {
        let graph = QuorumGraph::build(1_024, 5).unwrap();
        let mut r1 = rng_stream(9, "adversary");
        let mut r2 = rng_stream(9, "adversary");
        let a = AdversaryState::corrupt_nodes(
            &graph,
            Strategy::Silent,
            32,
            &mut r1,
            BadFractionPolicy::Enforce,
        )
        .unwrap();
        let b = AdversaryState::corrupt_nodes(
            &graph,
            Strategy::Silent,
            32,
            &mut r2,
            BadFractionPolicy::Enforce,
        )
        .unwrap();
        assert_eq!(a.bad_nodes(), b.bad_nodes());
    }

    #[test]
    fn strategy_action_mapping() {
        let graph = QuorumGraph::build(1_024, 5).unwrap();
        let mut rng = rng_stream(5, "adversary");
        let mk = |s| {
            let mut r = rng_stream(5, "adversary");
            AdversaryState::corrupt_nodes(&graph, s, 16, &mut r, BadFractionPolicy::Enforce)
                .unwrap()
        };
        let _ = &mut rng;
        let hop = RelayCtx::new(RelayPhase::PathHop);
        let share = RelayCtx::new(RelayPhase::ShareSign);
        let fan_mixed =
            RelayCtx { data_corrupted: true, ..RelayCtx::new(RelayPhase::SubsetFan) };
        let fan_all_bad = RelayCtx {
            whole_subset_bad: true,
            data_corrupted: true,
            ..RelayCtx::new(RelayPhase::SubsetFan)
        };
        let fan_all_bad_clean =
            RelayCtx { whole_subset_bad: true, ..RelayCtx::new(RelayPhase::SubsetFan) };

        let ac = mk(Strategy::AlwaysCorrupt);
        let x = ac.bad_nodes()[0];
        assert_eq!(ac.decide(x, &hop), BadAction::Corrupt);
        assert_eq!(ac.decide(x, &share), BadAction::Faithful);

        let silent = mk(Strategy::Silent);
        let x = silent.bad_nodes()[0];
        assert_eq!(silent.decide(x, &hop), BadAction::Drop);
        assert_eq!(silent.decide(x, &share), BadAction::Drop);

        let im = mk(Strategy::IntervalMaintainer);
        let x = im.bad_nodes()[0];
        assert_eq!(im.decide(x, &hop), BadAction::Corrupt);
        assert_eq!(im.decide(x, &fan_mixed), BadAction::Faithful);
        assert_eq!(im.decide(x, &fan_all_bad), BadAction::Corrupt);
        assert_eq!(im.decide(x, &fan_all_bad_clean), BadAction::Faithful);
        let relay_blocked = RelayCtx {
            level: 4,
            block_level: Some(4),
            ..RelayCtx::new(RelayPhase::ChainRelay)
        };
        let relay_open = RelayCtx {
            level: 3,
            block_level: Some(4),
            ..RelayCtx::new(RelayPhase::ChainRelay)
        };
        assert_eq!(im.decide(x, &relay_blocked), BadAction::Drop);
        assert_eq!(im.decide(x, &relay_open), BadAction::Faithful);
    }

    #[test]
    fn interval_block_prefers_longest_run() {
        // Window (2, 10]; faulty fresh selections at 4, 6, 7, 8, 10.
        let bad = |l: u32| matches!(l, 4 | 6 | 7 | 8 | 10);
        assert_eq!(choose_interval_block(2, 10, bad), Some(6));
        // No faulty selection in the window: play faithful.
        assert_eq!(choose_interval_block(2, 3, |_| false), None);
        // Tie between runs: leftmost wins.
        let bad2 = |l: u32| matches!(l, 3 | 5);
        assert_eq!(choose_interval_block(2, 6, bad2), Some(3));
    }
}
