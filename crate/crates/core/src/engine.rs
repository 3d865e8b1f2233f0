//! Trial driver: runs a configured sequence of sends against one
//! network and adversary, collecting per-send and aggregate metrics.
//!
//! Everything is deterministic in the trial seed: topology, fault
//! sampling, sender/receiver draws, relay selections, witness schedules,
//! and check coins all come from independent labeled streams of the same
//! seed, so any row of any run can be reproduced exactly.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::fmt::Write as _;
use rand::Rng;

use crate::adversary::{AdversaryError, AdversaryState, BadFractionPolicy, Strategy};
use crate::graph::{GraphError, NodeId, QuorumGraph};
use crate::protocol::{CheckVariant, ProtocolCtx, ProtocolParams, SendRecord};
use crate::rng::rng_stream;

/// Complete description of one trial.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct SimConfig {
    /// Network size.
    pub n: u32,
    /// Faulty fraction; the faulty count is `⌊n·f⌋`.
    pub f: f64,
    pub strategy: Strategy,
    pub variant: CheckVariant,
    /// Number of protocol sends to run.
    pub sends: u32,
    pub seed: u64,
    /// Run the check after every send instead of flipping the coin.
    pub force_check: bool,
    pub policy: BadFractionPolicy,
    /// Allow faulty senders/receivers. Off by default: the delivery
    /// guarantee is only meaningful between honest endpoints.
    pub allow_bad_endpoints: bool,
    /// Stop the trial as soon as every faulty node is marked (healing
    /// experiments that only care about the time to full quarantine).
    pub halt_when_all_bad_marked: bool,
}

impl SimConfig {
    pub fn new(n: u32, f: f64, strategy: Strategy, variant: CheckVariant) -> Self {
        Self {
            n,
            f,
            strategy,
            variant,
            sends: 1_000,
            seed: 1,
            force_check: false,
            policy: BadFractionPolicy::Observe,
            allow_bad_endpoints: false,
            halt_when_all_bad_marked: false,
        }
    }

    /// Faulty-node count implied by `n` and `f`.
    pub fn t(&self) -> u32 {
        ((self.n as f64) * self.f + 1e-9) as u32
    }
}

/// One send's metrics row.
#[derive(Clone, Copy, Debug)]
pub struct SendRow {
    pub send: u32,
    pub messages: u64,
    pub rounds: u64,
    pub corrupted: bool,
    pub check_invoked: bool,
    pub detected: bool,
    /// Quarantine updates run for this send (0 or 1).
    pub updates: u8,
    /// Cumulative marked counts after this send, split by ground truth.
    pub marked_bad: u32,
    pub marked_good: u32,
}

/// Aggregated results of one trial.
pub struct Metrics {
    pub config: SimConfig,
    pub t: u32,
    pub rows: Vec<SendRow>,
    pub total_messages: u64,
    pub total_rounds: u64,
    pub corrupted_sends: u64,
    pub checks_invoked: u64,
    /// Sends whose check produced a verified alarm.
    pub detections: u64,
    /// Detections whose alarm first fired in check round 2 or later,
    /// i.e. the fault survived at least one full walk round before
    /// being cornered.  Only the multi-round walk check can produce
    /// these; stalling adversaries show up here.
    pub late_detections: u64,
    pub updates: u64,
    /// Accusation pairs across all updates, and how many contained at
    /// least one genuinely faulty node (soundness wants all of them).
    pub pairs_total: u64,
    pub pairs_with_bad: u64,
    /// Updates on genuinely corrupted sends that produced no pair.
    pub empty_pair_updates: u64,
    /// Pairs whose two members were both honest (soundness wants zero).
    pub good_good_pairs: u64,
    /// Quorum resets that unmarked members.
    pub reset_events: u64,
    /// Final marked counts by ground truth.
    pub marked_bad: u32,
    pub marked_good: u32,
    /// Per-update change of the healing potential
    /// `marked_faulty − marked_honest/3`.
    pub update_deltas: Vec<f64>,
    /// First send index after which every faulty node was marked.
    pub all_bad_marked_at: Option<u32>,
    /// Update count at the moment full marking was reached.
    pub updates_at_full_marking: Option<u64>,
    /// Quorums whose faulty membership exceeded the modeled cap at
    /// sampling time (only non-empty under `Observe`).
    pub violations: Vec<(u32, u32)>,
}

impl Metrics {
    /// Mean messages per send over `rows[from..to]`.
    pub fn mean_messages(&self, from: usize, to: usize) -> f64 {
        let slice = &self.rows[from..to];
        if slice.is_empty() {
            return 0.0;
        }
        slice.iter().map(|r| r.messages as f64).sum::<f64>() / slice.len() as f64
    }

    /// Fraction of corrupted sends over `rows[from..to]`.
    pub fn corruption_rate(&self, from: usize, to: usize) -> f64 {
        let slice = &self.rows[from..to];
        if slice.is_empty() {
            return 0.0;
        }
        slice.iter().filter(|r| r.corrupted).count() as f64 / slice.len() as f64
    }

    /// Byte-stable CSV of the per-send rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("send,messages,rounds,corrupted,detected,updates,marked_bad,marked_good\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.send,
                r.messages,
                r.rounds,
                u8::from(r.corrupted),
                u8::from(r.detected),
                r.updates,
                r.marked_bad,
                r.marked_good
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EngineError {
    Graph(GraphError),
    Adversary(AdversaryError),
}

impl fmt::Display for EngineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EngineError::Graph(e) => write!(f, "graph construction failed: {e}"),
            EngineError::Adversary(e) => write!(f, "fault sampling failed: {e}"),
        }
    }
}

impl core::error::Error for EngineError {}

impl From<GraphError> for EngineError {
    fn from(e: GraphError) -> Self {
        EngineError::Graph(e)
    }
}

impl From<AdversaryError> for EngineError {
    fn from(e: AdversaryError) -> Self {
        EngineError::Adversary(e)
    }
}

fn build_world(config: &SimConfig) -> Result<(QuorumGraph, AdversaryState), EngineError> {
    let graph = QuorumGraph::build(config.n, config.seed)?;
    let t = config.t();
    let adv = if t == 0 {
        AdversaryState::empty(&graph)
    } else {
        let mut rng = rng_stream(config.seed, "adversary");
        AdversaryState::corrupt_nodes(&graph, config.strategy, t, &mut rng, config.policy)?
    };
    Ok((graph, adv))
}

fn draw_endpoints(
    rng: &mut rand_chacha::ChaCha8Rng,
    n: u32,
    adv: &AdversaryState,
    allow_bad: bool,
) -> (NodeId, NodeId) {
    let mut draw = |exclude: Option<NodeId>| loop {
        let x = NodeId(rng.gen_range(0..n));
        if Some(x) == exclude {
            continue;
        }
        if !allow_bad && adv.is_bad(x) {
            continue;
        }
        return x;
    };
    let s = draw(None);
    let r = draw(Some(s));
    (s, r)
}

struct Collector {
    rows: Vec<SendRow>,
    total_messages: u64,
    total_rounds: u64,
    corrupted_sends: u64,
    checks_invoked: u64,
    detections: u64,
    late_detections: u64,
    updates: u64,
    pairs_total: u64,
    pairs_with_bad: u64,
    empty_pair_updates: u64,
    reset_events: u64,
    marked_bad: u32,
    marked_good: u32,
    update_deltas: Vec<f64>,
    all_bad_marked_at: Option<u32>,
    updates_at_full_marking: Option<u64>,
}

impl Collector {
    fn new(sends: u32) -> Self {
        Self {
            rows: Vec::with_capacity(sends as usize),
            total_messages: 0,
            total_rounds: 0,
            corrupted_sends: 0,
            checks_invoked: 0,
            detections: 0,
            late_detections: 0,
            updates: 0,
            pairs_total: 0,
            pairs_with_bad: 0,
            empty_pair_updates: 0,
            reset_events: 0,
            marked_bad: 0,
            marked_good: 0,
            update_deltas: Vec::new(),
            all_bad_marked_at: None,
            updates_at_full_marking: None,
        }
    }

    fn absorb(&mut self, rec: &SendRecord, adv: &AdversaryState, t: u32) {
        self.total_messages += rec.messages;
        self.total_rounds += rec.rounds;
        if rec.corrupted {
            self.corrupted_sends += 1;
        }
        if rec.check_invoked {
            self.checks_invoked += 1;
        }
        if rec.detected {
            self.detections += 1;
            if rec.trigger_round.map_or(false, |round| round >= 2) {
                self.late_detections += 1;
            }
        }
        let mut updates_here = 0u8;
        if let Some(up) = &rec.update {
            updates_here = 1;
            self.updates += 1;
            let (bad_before, good_before) = (self.marked_bad, self.marked_good);
            if up.pairs.is_empty() && rec.corrupted {
                self.empty_pair_updates += 1;
            }
            for p in &up.pairs {
                self.pairs_total += 1;
                if adv.is_bad(p.accused_sender) || adv.is_bad(p.accused_receiver) {
                    self.pairs_with_bad += 1;
                }
            }
            for &x in &up.mark_report.newly_marked {
                if adv.is_bad(x) {
                    self.marked_bad += 1;
                } else {
                    self.marked_good += 1;
                }
            }
            for &x in &up.mark_report.unmarked {
                if adv.is_bad(x) {
                    self.marked_bad -= 1;
                } else {
                    self.marked_good -= 1;
                }
            }
            self.reset_events += up.mark_report.reset_quorums.len() as u64;
            let delta = (self.marked_bad as f64 - bad_before as f64)
                - (self.marked_good as f64 - good_before as f64) / 3.0;
            self.update_deltas.push(delta);
        }
        if self.all_bad_marked_at.is_none() && t > 0 && self.marked_bad == t {
            self.all_bad_marked_at = Some(rec.index);
            self.updates_at_full_marking = Some(self.updates);
        }
        self.rows.push(SendRow {
            send: rec.index,
            messages: rec.messages,
            rounds: rec.rounds,
            corrupted: rec.corrupted,
            check_invoked: rec.check_invoked,
            detected: rec.detected,
            updates: updates_here,
            marked_bad: self.marked_bad,
            marked_good: self.marked_good,
        });
    }

    fn finish(self, config: SimConfig, t: u32, good_good: u64, violations: Vec<(u32, u32)>) -> Metrics {
        Metrics {
            config,
            t,
            rows: self.rows,
            total_messages: self.total_messages,
            total_rounds: self.total_rounds,
            corrupted_sends: self.corrupted_sends,
            checks_invoked: self.checks_invoked,
            detections: self.detections,
            late_detections: self.late_detections,
            updates: self.updates,
            pairs_total: self.pairs_total,
            pairs_with_bad: self.pairs_with_bad,
            empty_pair_updates: self.empty_pair_updates,
            good_good_pairs: good_good,
            reset_events: self.reset_events,
            marked_bad: self.marked_bad,
            marked_good: self.marked_good,
            update_deltas: self.update_deltas,
            all_bad_marked_at: self.all_bad_marked_at,
            updates_at_full_marking: self.updates_at_full_marking,
            violations,
        }
    }
}

/// Runs one trial of the routed protocol.
pub fn run_trial(config: &SimConfig) -> Result<Metrics, EngineError> {
    let (graph, adv) = build_world(config)?;
    let params = ProtocolParams::derive(config.n, config.variant, config.force_check);
    let mut ctx = ProtocolCtx::new(&graph, &adv, params, config.seed);
    let mut pair_rng = rng_stream(config.seed, "sendpairs");
    let t = config.t();
    let mut col = Collector::new(config.sends);
    for _ in 0..config.sends {
        let (s, r) = draw_endpoints(&mut pair_rng, config.n, &adv, config.allow_bad_endpoints);
        let rec = ctx.send(s, r);
        col.absorb(&rec, &adv, t);
        if config.halt_when_all_bad_marked && col.all_bad_marked_at.is_some() {
            break;
        }
    }
    Ok(col.finish(*config, t, ctx.good_good_pairs, adv.violations.clone()))
}

/// Runs one trial of the heavyweight all-members baseline.
pub fn run_baseline_trial(config: &SimConfig) -> Result<Metrics, EngineError> {
    let (graph, adv) = build_world(config)?;
    let params = ProtocolParams::derive(config.n, config.variant, false);
    let mut ctx = ProtocolCtx::new(&graph, &adv, params, config.seed);
    let mut pair_rng = rng_stream(config.seed, "sendpairs");
    let t = config.t();
    let mut col = Collector::new(config.sends);
    for _ in 0..config.sends {
        let (s, r) = draw_endpoints(&mut pair_rng, config.n, &adv, config.allow_bad_endpoints);
        let rec = ctx.send_naive(s, r);
        col.absorb(&rec, &adv, t);
    }
    Ok(col.finish(*config, t, ctx.good_good_pairs, adv.violations.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::naive_send_messages;

    #[test]
    fn faithful_trial_delivers_everything() {
        let mut cfg = SimConfig::new(16, 0.0, Strategy::FaithfulControl, CheckVariant::Subset);
        cfg.sends = 50;
        cfg.seed = 7;
        let m = run_trial(&cfg).unwrap();
        assert_eq!(m.rows.len(), 50);
        assert_eq!(m.corrupted_sends, 0);
        assert_eq!(m.detections, 0);
        assert_eq!(m.marked_bad + m.marked_good, 0);
        assert!(m.total_messages > 0);
    }

    #[test]
    fn trials_are_reproducible() {
        let mut cfg = SimConfig::new(1_024, 1.0 / 32.0, Strategy::AlwaysCorrupt, CheckVariant::Subset);
        cfg.sends = 40;
        cfg.seed = 11;
        cfg.force_check = true;
        let a = run_trial(&cfg).unwrap();
        let b = run_trial(&cfg).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.pairs_total, b.pairs_total);
    }

    #[test]
    fn corrupting_faults_get_detected_and_marked() {
        let mut cfg = SimConfig::new(1_024, 1.0 / 32.0, Strategy::AlwaysCorrupt, CheckVariant::Subset);
        cfg.sends = 400;
        cfg.seed = 3;
        cfg.force_check = true;
        cfg.policy = BadFractionPolicy::Enforce;
        let m = run_trial(&cfg).unwrap();
        assert!(m.corrupted_sends > 0, "an always-corrupting adversary must corrupt");
        assert!(m.detections > 0, "forced checks must catch corruption");
        assert!(m.marked_bad > 0, "detections must mark faulty nodes");
        // Soundness: every accusation pair contains a faulty node.
        assert_eq!(m.pairs_total, m.pairs_with_bad);
        assert_eq!(m.good_good_pairs, 0);
    }

    #[test]
    fn baseline_cost_matches_closed_form() {
        let mut cfg = SimConfig::new(1_024, 0.0, Strategy::FaithfulControl, CheckVariant::Subset);
        cfg.sends = 10;
        cfg.seed = 2;
        let m = run_baseline_trial(&cfg).unwrap();
        let expect = naive_send_messages(1_024);
        for row in &m.rows {
            assert_eq!(row.messages, expect);
            assert!(!row.corrupted);
        }
    }

    #[test]
    fn csv_shape_is_stable() {
        let mut cfg = SimConfig::new(16, 0.0, Strategy::FaithfulControl, CheckVariant::Chain);
        cfg.sends = 3;
        cfg.seed = 1;
        let m = run_trial(&cfg).unwrap();
        let csv = m.to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "send,messages,rounds,corrupted,detected,updates,marked_bad,marked_good"
        );
        assert_eq!(lines.count(), 3);
    }
}
